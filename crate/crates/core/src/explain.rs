//! Attribute-level explanations of a body's embedding neighbourhood.
//!
//! The garments nearest to and furthest from a body are used as the two
//! classes of a ridge-regularized logistic probe on raw attribute bits; the
//! probe's largest and smallest weights name the attributes that suit and
//! do not suit that body.

use thiserror::Error;

use crate::catalog::{BodyRecord, Catalog};
use crate::embed::{EmbedError, ViBEModel};
use crate::numkit::euclidean_distance;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("the garment pool is empty")]
    EmptyPool,
    #[error("probe needs both classes: {suitable} suitable and {unsuitable} unsuitable garments given")]
    SingleClass { suitable: usize, unsuitable: usize },
    #[error("garment index {0} is outside the catalog")]
    UnknownGarment(usize),
    #[error("invalid probe configuration: {0}")]
    Config(String),
    #[error("probe diverged (non-finite weights)")]
    Diverged,
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

/// The `m` nearest and `m` furthest garments of a pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extremes {
    pub suitable: Vec<usize>,
    pub unsuitable: Vec<usize>,
    /// `m` after clamping to half the pool.
    pub m: usize,
}

/// Nearest/furthest garments of `pool` (catalog indices) to the body by
/// embedding distance. Equal distances are ordered by garment index in
/// both directions. `m` is clamped to half the pool with a warning.
pub fn select_extremes(
    model: &ViBEModel,
    body: &BodyRecord,
    catalog: &Catalog,
    pool: &[usize],
    m: usize,
) -> Result<Extremes, ExplainError> {
    if pool.is_empty() {
        return Err(ExplainError::EmptyPool);
    }
    if let Some(&g) = pool.iter().find(|&&g| g >= catalog.garments().len()) {
        return Err(ExplainError::UnknownGarment(g));
    }
    let m = if 2 * m > pool.len() {
        let clamped = pool.len() / 2;
        log::warn!("m = {m} exceeds half the pool of {} garments; using {clamped}", pool.len());
        clamped
    } else {
        m
    };
    let zb = model.embed_body(body)?;
    let inputs = model.encode_records(&[], &pool.iter().map(|&g| catalog.garment(g).clone()).collect::<Vec<_>>())?;
    let zg = model.embed_encoded_garments(&inputs)?;
    let mut ranked: Vec<(f64, usize)> = pool
        .iter()
        .enumerate()
        .map(|(r, &g)| (euclidean_distance(&zb, zg.row(r)), g))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let suitable = ranked[..m].iter().map(|&(_, g)| g).collect();
    let mut far = ranked.clone();
    far.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let unsuitable = far[..m].iter().map(|&(_, g)| g).collect();
    Ok(Extremes { suitable, unsuitable, m })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    /// L2 penalty on the attribute weights (the intercept is unpenalized).
    pub ridge: f64,
    /// Stop once the full gradient's norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            ridge: 1e-3,
            tolerance: 1e-6,
            max_iterations: 50_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Fraction of the training garments classified correctly.
    pub accuracy: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Largest eigenvalue of `XᵀX / n` for the design with a leading ones
/// column, by power iteration.
fn curvature_bound(rows: &[Vec<f64>]) -> f64 {
    let d = rows[0].len();
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    let mut lambda = 0.0;
    for _ in 0..100 {
        let mut w = vec![0.0; d];
        for x in rows {
            let s: f64 = x.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (wi, xi) in w.iter_mut().zip(x) {
                *wi += s * xi;
            }
        }
        let norm = w.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm / rows.len() as f64;
        v = w.into_iter().map(|a| a / norm).collect();
        if (next - lambda).abs() <= 1e-9 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Logistic regression of "suitable" (label 1) against "unsuitable" on the
/// raw attribute bits, minimizing mean log-loss + ridge/2 · |w|² by
/// full-batch accelerated gradient descent.
pub fn fit_attribute_probe(
    catalog: &Catalog,
    suitable: &[usize],
    unsuitable: &[usize],
    config: &ProbeConfig,
) -> Result<Probe, ExplainError> {
    if suitable.is_empty() || unsuitable.is_empty() {
        return Err(ExplainError::SingleClass {
            suitable: suitable.len(),
            unsuitable: unsuitable.len(),
        });
    }
    if !(config.ridge > 0.0) || !(config.tolerance > 0.0) || config.max_iterations == 0 {
        return Err(ExplainError::Config(
            "ridge and tolerance must be positive and at least one iteration allowed".into(),
        ));
    }
    let n_garments = catalog.garments().len();
    let mut rows = Vec::with_capacity(suitable.len() + unsuitable.len());
    let mut labels = Vec::with_capacity(rows.capacity());
    for (set, label) in [(suitable, 1.0), (unsuitable, 0.0)] {
        for &g in set {
            if g >= n_garments {
                return Err(ExplainError::UnknownGarment(g));
            }
            // Leading 1 carries the intercept.
            let mut x = vec![1.0];
            x.extend(catalog.garment(g).attribute_values());
            rows.push(x);
            labels.push(label);
        }
    }
    let n = rows.len() as f64;
    let d = rows[0].len();

    let gradient = |theta: &[f64]| {
        let mut g = vec![0.0; d];
        for (x, &y) in rows.iter().zip(&labels) {
            let z: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
            let r = (sigmoid(z) - y) / n;
            for (gi, xi) in g.iter_mut().zip(x) {
                *gi += r * xi;
            }
        }
        for j in 1..d {
            g[j] += config.ridge * theta[j];
        }
        g
    };

    // Nesterov's constant-momentum scheme for smooth strongly convex
    // objectives; the log-loss curvature is at most λmax(XᵀX/n)/4.
    let lipschitz = curvature_bound(&rows) / 4.0 + config.ridge;
    let step = 1.0 / lipschitz;
    let kappa = lipschitz / config.ridge;
    let momentum = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);

    let mut theta = vec![0.0; d];
    let mut previous = theta.clone();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        let g_now = gradient(&theta);
        if g_now.iter().map(|v| v * v).sum::<f64>().sqrt() < config.tolerance {
            converged = true;
            break;
        }
        let look: Vec<f64> = theta
            .iter()
            .zip(&previous)
            .map(|(t, p)| t + momentum * (t - p))
            .collect();
        let g_look = gradient(&look);
        previous = std::mem::replace(&mut theta, look.iter().zip(&g_look).map(|(l, g)| l - step * g).collect());
        iterations += 1;
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(ExplainError::Diverged);
        }
    }
    if !converged {
        log::warn!("attribute probe stopped after {iterations} iterations without reaching tolerance");
    }
    let correct = rows
        .iter()
        .zip(&labels)
        .filter(|(x, &y)| {
            let z: f64 = x.iter().zip(&theta).map(|(a, b)| a * b).sum();
            (z >= 0.0) == (y == 1.0)
        })
        .count();
    Ok(Probe {
        intercept: theta[0],
        weights: theta[1..].to_vec(),
        accuracy: correct as f64 / n,
        iterations,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainConfig {
    pub m: usize,
    pub top_k: usize,
    pub probe: ProbeConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            m: 400,
            top_k: 5,
            probe: ProbeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeReport {
    pub body_id: String,
    /// Highest-weight attributes, strongest first.
    pub suitable: Vec<(String, f64)>,
    /// Lowest-weight attributes, most negative first.
    pub unsuitable: Vec<(String, f64)>,
    pub probe_accuracy: f64,
    pub m: usize,
}

/// Explains `body` against every catalog garment.
pub fn explain_report(
    model: &ViBEModel,
    body: &BodyRecord,
    catalog: &Catalog,
    config: &ExplainConfig,
) -> Result<AttributeReport, ExplainError> {
    let pool: Vec<usize> = (0..catalog.garments().len()).collect();
    let extremes = select_extremes(model, body, catalog, &pool, config.m)?;
    let probe = fit_attribute_probe(catalog, &extremes.suitable, &extremes.unsuitable, &config.probe)?;
    let names = catalog.attribute_vocabulary();
    let mut order: Vec<usize> = (0..probe.weights.len()).collect();
    order.sort_by(|&a, &b| probe.weights[b].total_cmp(&probe.weights[a]).then(a.cmp(&b)));
    let k = config.top_k.min(order.len());
    let suitable: Vec<usize> = order[..k].to_vec();
    let unsuitable: Vec<usize> = order[k..].iter().rev().take(k).copied().collect();
    let named = |idx: Vec<usize>| idx.into_iter().map(|i| (names[i].clone(), probe.weights[i])).collect();
    Ok(AttributeReport {
        body_id: body.id.clone(),
        suitable: named(suitable),
        unsuitable: named(unsuitable),
        probe_accuracy: probe.accuracy,
        m: extremes.m,
    })
}

impl AttributeReport {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "body {}: probe accuracy {:.3} on {} nearest / {} furthest garments\n",
            self.body_id, self.probe_accuracy, self.m, self.m
        );
        s.push_str("  suitable:\n");
        for (name, w) in &self.suitable {
            s.push_str(&format!("    {name:<20} {w:+.4}\n"));
        }
        s.push_str("  unsuitable:\n");
        for (name, w) in &self.unsuitable {
            s.push_str(&format!("    {name:<20} {w:+.4}\n"));
        }
        s
    }

    pub fn to_key_values(&self) -> String {
        let list = |v: &[(String, f64)]| v.iter().map(|(n, w)| format!("{n}:{w}")).collect::<Vec<_>>().join(",");
        format!(
            "explain.{id}.accuracy={}\nexplain.{id}.m={}\nexplain.{id}.suitable={}\nexplain.{id}.unsuitable={}\n",
            self.probe_accuracy,
            self.m,
            list(&self.suitable),
            list(&self.unsuitable),
            id = self.body_id
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_synthetic, FeatureStats, StandardizationStats, SyntheticSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn catalog(n: usize) -> Catalog {
        generate_synthetic(&SyntheticSpec {
            num_garments: n,
            attribute_dim: 24,
            visual_dim: 4,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn model(c: &Catalog) -> ViBEModel {
        let fit = |rows: Vec<Vec<f64>>| FeatureStats::fit(&rows).unwrap();
        let stats = StandardizationStats {
            smpl: fit(c.bodies().iter().map(|b| b.smpl.to_vec()).collect()),
            vitals: fit(c.bodies().iter().map(|b| b.vitals.to_vec()).collect()),
            visual: fit(c.garments().iter().map(|g| g.visual.clone()).collect()),
        };
        ViBEModel::random(24, 4, stats, &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn extremes_are_disjoint_and_clamped() {
        let c = catalog(30);
        let m = model(&c);
        let pool: Vec<usize> = (0..30).collect();
        let e = select_extremes(&m, c.body(0), &c, &pool, 10).unwrap();
        assert_eq!((e.m, e.suitable.len(), e.unsuitable.len()), (10, 10, 10));
        assert!(e.suitable.iter().all(|g| !e.unsuitable.contains(g)));
        let e = select_extremes(&m, c.body(0), &c, &pool, 400).unwrap();
        assert_eq!(e.m, 15);
        assert!(matches!(
            select_extremes(&m, c.body(0), &c, &[], 3),
            Err(ExplainError::EmptyPool)
        ));
    }

    #[test]
    fn nearest_garment_is_suitable() {
        let c = catalog(30);
        let m = model(&c);
        let zb = m.embed_body(c.body(4)).unwrap();
        let nearest = (0..30)
            .min_by(|&a, &b| {
                let da = euclidean_distance(&zb, &m.embed_garment(c.garment(a)).unwrap());
                let db = euclidean_distance(&zb, &m.embed_garment(c.garment(b)).unwrap());
                da.total_cmp(&db)
            })
            .unwrap();
        let pool: Vec<usize> = (0..30).collect();
        let e = select_extremes(&m, c.body(4), &c, &pool, 1).unwrap();
        assert_eq!(e.suitable, vec![nearest]);
    }

    /// Garments whose attribute `j` separates the two halves.
    fn separable(c: &Catalog, j: usize) -> (Vec<usize>, Vec<usize>) {
        (0..c.garments().len()).partition(|&g| c.garment(g).attributes[j])
    }

    #[test]
    fn separating_attribute_gets_largest_weight() {
        let c = catalog(80);
        let (pos, neg) = separable(&c, 21);
        let p = fit_attribute_probe(&c, &pos, &neg, &ProbeConfig::default()).unwrap();
        let top = (0..p.weights.len()).max_by(|&a, &b| p.weights[a].total_cmp(&p.weights[b])).unwrap();
        assert_eq!(top, 21);
        assert_eq!(p.accuracy, 1.0);
        assert!(p.converged, "{} iterations", p.iterations);
    }

    #[test]
    fn swapping_labels_negates_weights() {
        let c = catalog(60);
        let pos: Vec<usize> = (0..30).collect();
        let neg: Vec<usize> = (30..60).collect();
        let a = fit_attribute_probe(&c, &pos, &neg, &ProbeConfig::default()).unwrap();
        let b = fit_attribute_probe(&c, &neg, &pos, &ProbeConfig::default()).unwrap();
        assert!(a.converged && b.converged);
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x + y).abs() < 1e-4, "{x} vs {y}");
        }
        assert!(a.accuracy >= 0.5);
    }

    #[test]
    fn single_class_rejected() {
        let c = catalog(10);
        assert!(matches!(
            fit_attribute_probe(&c, &[1, 2], &[], &ProbeConfig::default()),
            Err(ExplainError::SingleClass { .. })
        ));
    }

    #[test]
    fn report_lists_are_disjoint_and_bounded() {
        let c = catalog(40);
        let m = model(&c);
        for top_k in [0, 3, 20] {
            let r = explain_report(&m, c.body(2), &c, &ExplainConfig { top_k, ..Default::default() }).unwrap();
            assert!(r.suitable.len() <= top_k && r.unsuitable.len() <= top_k);
            assert!(r.suitable.iter().all(|s| !r.unsuitable.iter().any(|u| u.0 == s.0)));
            assert!(r.suitable.iter().chain(&r.unsuitable).all(|(_, w)| w.is_finite()));
            assert!(r.probe_accuracy >= 0.5);
        }
        let r = explain_report(&m, c.body(2), &c, &ExplainConfig { top_k: 0, ..Default::default() }).unwrap();
        assert!(r.suitable.is_empty() && r.unsuitable.is_empty());
    }

    #[test]
    fn identical_bodies_identical_reports() {
        let c = catalog(40);
        let m = model(&c);
        let mut twin = c.body(5).clone();
        let a = explain_report(&m, c.body(5), &c, &ExplainConfig::default()).unwrap();
        twin.id = a.body_id.clone();
        let b = explain_report(&m, &twin, &c, &ExplainConfig::default()).unwrap();
        assert_eq!(a, b);
        assert!(a.to_key_values().contains("explain.b005.accuracy="));
    }
}
