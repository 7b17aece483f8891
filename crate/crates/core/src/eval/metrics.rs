//! Metrics output: a line-oriented `key=value` file meant for machines and
//! a fixed-width table for people.
//!
//! Values are written with Rust's shortest round-trip float formatting, so
//! a file is a pure function of the report and the configuration text.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use super::{EvalError, ScenarioReport};

const MAGIC: &str = "# vibe metrics v1";

/// A scenario report plus the hash of the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub report: ScenarioReport,
    pub config_hash: String,
}

impl MetricsRecord {
    /// `config_text` should be a canonical rendering of every setting that
    /// influenced the run.
    pub fn new(report: ScenarioReport, config_text: &str) -> Self {
        Self {
            report,
            config_hash: hex::encode(Sha256::digest(config_text.as_bytes())),
        }
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

pub fn write_metrics(records: &[MetricsRecord]) -> String {
    let mut s = format!("{MAGIC}\n");
    for rec in records {
        let r = &rec.report;
        let m = &r.method;
        s.push_str(&format!("{m}.config_hash={}\n", rec.config_hash));
        for sc in &r.scenarios {
            let t = sc.scenario.tag();
            s.push_str(&format!("{m}.scenario.{t}.mean={}\n", sc.mean));
            s.push_str(&format!("{m}.scenario.{t}.std={}\n", sc.std));
            s.push_str(&format!("{m}.scenario.{t}.num_runs={}\n", sc.runs.len()));
            s.push_str(&format!("{m}.scenario.{t}.runs={}\n", join(&sc.runs)));
        }
        for (q, a) in r.mean_quantile_curve() {
            s.push_str(&format!("{m}.quantile.{q}={a}\n"));
        }
    }
    s
}

/// Parses a metrics file into its key/value map.
pub fn parse_metrics(text: &str) -> Result<BTreeMap<String, String>, EvalError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == MAGIC => {}
        _ => {
            return Err(EvalError::Parse {
                line: 1,
                message: format!("missing header {MAGIC:?}"),
            })
        }
    }
    let mut out = BTreeMap::new();
    for (n, line) in lines {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| EvalError::Parse {
            line: n + 1,
            message: "expected key=value".into(),
        })?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(EvalError::Parse {
                line: n + 1,
                message: format!("duplicate key {k:?}"),
            });
        }
    }
    Ok(out)
}

/// Human-readable summary: one row per method, mean ± std per scenario.
pub fn format_table(reports: &[ScenarioReport]) -> String {
    let mut s = format!("{:<16}", "method");
    for sc in crate::typing::Scenario::ALL {
        s.push_str(&format!("{:>20}", format!("({})", sc.tag())));
    }
    s.push('\n');
    for r in reports {
        s.push_str(&format!("{:<16}", r.method));
        for sc in &r.scenarios {
            s.push_str(&format!("{:>20}", format!("{:.4} ± {:.4}", sc.mean, sc.std)));
        }
        s.push('\n');
        let curve = r.mean_quantile_curve();
        if !curve.is_empty() {
            s.push_str(&format!("{:<16}", ""));
            for (q, a) in curve {
                s.push_str(&format!(" {q}%: {a:.4}"));
            }
            s.push('\n');
        }
    }
    s
}
