use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TypingError;
use crate::numkit::matrix::euclidean_distance;

/// Result of one k-means fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares of the returned partition.
    pub inertia: f64,
    /// Within-cluster sum of squares after each centroid update of the
    /// winning restart.
    pub inertia_history: Vec<f64>,
}

fn squared(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest_centroid(centroids: &[Vec<f64>], point: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = squared(c, point);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignment: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignment)
        .map(|(p, &c)| squared(p, &centroids[c]))
        .sum()
}

fn plus_plus_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> KMeansFit {
    let k = centroids.len();
    let dim = points[0].len();
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest_centroid(&centroids, p)).collect();
    let mut history = Vec::new();
    for iter in 0..max_iter {
        if iter > 0 {
            let next: Vec<usize> = points.iter().map(|p| nearest_centroid(&centroids, p)).collect();
            if next == assignment {
                break;
            }
            assignment = next;
        }

        // Empty clusters take the point farthest from its current centroid.
        let mut counts = vec![0usize; k];
        for &a in &assignment {
            counts[a] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .max_by(|&i, &j| {
                    squared(&points[i], &centroids[assignment[i]])
                        .total_cmp(&squared(&points[j], &centroids[assignment[j]]))
                        .then(j.cmp(&i))
                });
            if let Some(i) = far {
                counts[assignment[i]] -= 1;
                assignment[i] = empty;
                counts[empty] = 1;
            }
        }

        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for (c, (s, &n)) in centroids.iter_mut().zip(sums.into_iter().zip(&counts)) {
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
        history.push(inertia(points, &centroids, &assignment));
    }
    let final_inertia = inertia(points, &centroids, &assignment);
    KMeansFit {
        centroids,
        assignment,
        inertia: final_inertia,
        inertia_history: history,
    }
}

/// Lloyd's algorithm with k-means++ seeding, keeping the restart with the
/// lowest within-cluster sum of squares (earliest restart on ties).
///
/// Restart `r` draws from stream `r` of a generator keyed by `seed`, so the
/// result does not depend on the order in which restarts are evaluated.
pub fn kmeans_fit(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansFit, TypingError> {
    if k == 0 || k > points.len() {
        return Err(TypingError::TooFewPoints { k, n: points.len() });
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(TypingError::Mismatch("feature vectors differ in length".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let seeds = plus_plus_seeds(points, k, &mut rng);
        let fit = lloyd(points, seeds, max_iter.max(1));
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len(), "labelings of different lengths");
    let n = a.len();
    let ka = a.iter().max().map_or(0, |m| m + 1);
    let kb = b.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let c2 = |m: u64| (m * m.saturating_sub(1) / 2) as f64;
    let index: f64 = table.iter().flatten().map(|&m| c2(m)).sum();
    let rows: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let cols: f64 = (0..kb).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(n as u64);
    let expected = rows * cols / total;
    let max = 0.5 * (rows + cols);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Euclidean distance from `point` to every centroid.
pub fn centroid_distances(centroids: &[Vec<f64>], point: &[f64]) -> Vec<f64> {
    centroids.iter().map(|c| euclidean_distance(c, point)).collect()
}
