//! AUC, the three cold-start scenarios over repeated runs, the
//! body-specificity quantile analysis and pairwise preference scoring.

mod metrics;
mod preference;

pub use metrics::{format_table, parse_metrics, write_metrics, MetricsRecord};
pub use preference::{preference_auc, read_preference_pairs, write_preference_pairs, PreferencePair};

use thiserror::Error;

use crate::catalog::Catalog;
use crate::typing::{build_split, Clustering, LabeledPair, PropagatedLabels, Scenario, Split, SplitConfig, TypingError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("AUC needs at least one positive and one negative score")]
    EmptySide,
    #[error("score {0} is not finite")]
    NonFiniteScore(f64),
    #[error("unknown {kind} id {id:?}")]
    UnknownId { kind: &'static str, id: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Split(#[from] TypingError),
    #[error("run {run} failed: {message}")]
    Training { run: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

/// Mann–Whitney AUC: the fraction of (positive, negative) pairs ranked
/// correctly, ties counting one half. Computed by sorting.
pub fn auc(positive: &[f64], negative: &[f64]) -> Result<f64, EvalError> {
    if positive.is_empty() || negative.is_empty() {
        return Err(EvalError::EmptySide);
    }
    if let Some(&bad) = positive.iter().chain(negative).find(|v| !v.is_finite()) {
        return Err(EvalError::NonFiniteScore(bad));
    }
    let mut neg = negative.to_vec();
    neg.sort_by(f64::total_cmp);
    // Count twice the numerator in integers so the result is exact up to
    // the final division.
    let mut twice: u128 = 0;
    for &p in positive {
        let below = neg.partition_point(|&n| n < p);
        let not_above = neg.partition_point(|&n| n <= p);
        twice += 2 * below as u128 + (not_above - below) as u128;
    }
    Ok(twice as f64 / (2.0 * positive.len() as f64 * negative.len() as f64))
}

/// AUC of `scores[k]` against the labels of `pairs[k]`.
pub fn pair_auc(pairs: &[LabeledPair], scores: &[f64]) -> Result<f64, EvalError> {
    if pairs.len() != scores.len() {
        return Err(EvalError::Invalid(format!("{} pairs but {} scores", pairs.len(), scores.len())));
    }
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (p, &s) in pairs.iter().zip(scores) {
        if p.positive {
            pos.push(s);
        } else {
            neg.push(s);
        }
    }
    auc(&pos, &neg)
}

/// A trained model able to score catalog pairs (higher = more compatible).
pub trait PairScorer {
    fn score_pairs(&self, catalog: &Catalog, pairs: &[LabeledPair]) -> Result<Vec<f64>, String>;
}

/// Produces a scorer from a split; `seed` differs between runs.
pub trait Trainer {
    type Scorer: PairScorer;
    fn train(&self, catalog: &Catalog, split: &Split, seed: u64) -> Result<Self::Scorer, String>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSummary {
    pub scenario: Scenario,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub runs: Vec<f64>,
}

impl ScenarioSummary {
    pub fn from_runs(scenario: Scenario, runs: Vec<f64>) -> Self {
        let n = runs.len() as f64;
        let mean = runs.iter().sum::<f64>() / n;
        let std = (runs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n).sqrt();
        Self {
            scenario,
            mean,
            std,
            runs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub method: String,
    pub scenarios: Vec<ScenarioSummary>,
    /// Versatility-quantile curves per run of scenario (iii), if requested.
    pub quantile_curves: Vec<Vec<(u32, f64)>>,
}

impl ScenarioReport {
    pub fn get(&self, scenario: Scenario) -> Option<&ScenarioSummary> {
        self.scenarios.iter().find(|s| s.scenario == scenario)
    }

    /// Per-quantile mean over runs of the recorded quantile curves; a
    /// quantile missing from some runs is averaged over the others.
    pub fn mean_quantile_curve(&self) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64, usize)> = Vec::new();
        for curve in &self.quantile_curves {
            for &(q, a) in curve {
                match out.iter_mut().find(|e| e.0 == q) {
                    Some(e) => {
                        e.1 += a;
                        e.2 += 1;
                    }
                    None => out.push((q, a, 1)),
                }
            }
        }
        out.sort_by(|a, b| b.0.cmp(&a.0));
        out.into_iter().map(|(q, s, n)| (q, s / n as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub runs: usize,
    pub seed: u64,
    pub split: SplitConfig,
    /// Quantile grid (percent) for the specificity curve; empty disables it.
    pub quantiles: Vec<u32>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            seed: 0,
            split: SplitConfig::default(),
            quantiles: vec![100, 75, 50, 25],
        }
    }
}

/// Per-scenario AUCs and the quantile curve of one run.
type RunOutcome = (Vec<f64>, Vec<(u32, f64)>);

/// Split, train and score one run with split seed `seed + run`.
fn one_run<T: Trainer>(
    trainer: &T,
    catalog: &Catalog,
    clustering: &Clustering,
    labels: &PropagatedLabels,
    config: &EvalConfig,
    run: usize,
) -> Result<RunOutcome, EvalError> {
    let seed = config.seed.wrapping_add(run as u64);
    let split = build_split(catalog, labels, clustering, &SplitConfig { seed, ..config.split.clone() })?;
    let scorer = trainer
        .train(catalog, &split, seed)
        .map_err(|message| EvalError::Training { run, message })?;
    let mut aucs = Vec::with_capacity(3);
    let mut curve = Vec::new();
    for scenario in Scenario::ALL {
        let pairs = split.pairs(scenario);
        let scores = scorer
            .score_pairs(catalog, pairs)
            .map_err(|message| EvalError::Training { run, message })?;
        aucs.push(pair_auc(pairs, &scores)?);
        if scenario == Scenario::UnseenBodyUnseenGarment && !config.quantiles.is_empty() {
            let versatility: Vec<usize> = (0..catalog.garments().len()).map(|g| labels.versatility(g)).collect();
            curve = versatility_quantile_curve(&scores, pairs, &versatility, &config.quantiles)?;
        }
    }
    Ok((aucs, curve))
}

/// Runs the full protocol `config.runs` times and summarizes each scenario.
pub fn evaluate_scenarios<T: Trainer + Sync>(
    method: &str,
    trainer: &T,
    catalog: &Catalog,
    clustering: &Clustering,
    labels: &PropagatedLabels,
    config: &EvalConfig,
) -> Result<ScenarioReport, EvalError> {
    evaluate_scenarios_parallel(method, trainer, catalog, clustering, labels, config, 1)
}

/// [`evaluate_scenarios`] with up to `jobs` runs in flight. Results are
/// collected by run index, so the report does not depend on `jobs`.
pub fn evaluate_scenarios_parallel<T>(
    method: &str,
    trainer: &T,
    catalog: &Catalog,
    clustering: &Clustering,
    labels: &PropagatedLabels,
    config: &EvalConfig,
    jobs: usize,
) -> Result<ScenarioReport, EvalError>
where
    T: Trainer + Sync,
{
    if config.runs == 0 {
        return Err(EvalError::Invalid("at least one run is required".into()));
    }
    let jobs = jobs.clamp(1, config.runs);
    let mut results: Vec<Option<Result<RunOutcome, EvalError>>> = (0..config.runs).map(|_| None).collect();
    if jobs == 1 {
        for (run, slot) in results.iter_mut().enumerate() {
            *slot = Some(one_run(trainer, catalog, clustering, labels, config, run));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let collected = std::sync::Mutex::new(&mut results);
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(|| loop {
                    let run = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if run >= config.runs {
                        break;
                    }
                    let r = one_run(trainer, catalog, clustering, labels, config, run);
                    collected.lock().expect("no panics while holding the lock")[run] = Some(r);
                });
            }
        });
    }
    let mut per_scenario: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(config.runs)).collect();
    let mut quantile_curves = Vec::new();
    for r in results {
        let (aucs, curve) = r.expect("every run executed")?;
        for (s, a) in per_scenario.iter_mut().zip(aucs) {
            s.push(a);
        }
        if !config.quantiles.is_empty() {
            quantile_curves.push(curve);
        }
    }
    Ok(ScenarioReport {
        method: method.to_string(),
        scenarios: Scenario::ALL
            .iter()
            .zip(per_scenario)
            .map(|(&s, runs)| ScenarioSummary::from_runs(s, runs))
            .collect(),
        quantile_curves,
    })
}

/// AUC after keeping only the `q`% most body-specific garments (lowest
/// versatility, ties by garment index) for each quantile `q` in percent.
/// Quantiles left without positives or negatives are omitted with a warning.
pub fn versatility_quantile_curve(
    scores: &[f64],
    pairs: &[LabeledPair],
    versatility: &[usize],
    quantiles: &[u32],
) -> Result<Vec<(u32, f64)>, EvalError> {
    if scores.len() != pairs.len() {
        return Err(EvalError::Invalid(format!("{} pairs but {} scores", pairs.len(), scores.len())));
    }
    let mut garments: Vec<usize> = pairs.iter().map(|p| p.garment).collect();
    garments.sort_unstable();
    garments.dedup();
    garments.sort_by_key(|&g| (versatility[g], g));
    let mut out = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        if q == 0 || q > 100 {
            return Err(EvalError::Invalid(format!("quantile {q}% outside (0, 100]")));
        }
        let keep_n = (garments.len() * q as usize).div_ceil(100);
        let mut keep = vec![false; versatility.len()];
        for &g in &garments[..keep_n] {
            keep[g] = true;
        }
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for (p, &s) in pairs.iter().zip(scores) {
            if keep[p.garment] {
                if p.positive {
                    pos.push(s);
                } else {
                    neg.push(s);
                }
            }
        }
        match auc(&pos, &neg) {
            Ok(a) => out.push((q, a)),
            Err(EvalError::EmptySide) => log::warn!("quantile {q}% leaves no positives or no negatives; omitted"),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
