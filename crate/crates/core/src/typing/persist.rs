//! Line-delimited persistence of clusterings and splits.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a saved
//! clustering reloads bit-identically.

use std::collections::BTreeSet;
use std::io::BufRead;

use super::{Clustering, PropagatedLabels, Split, TypingError};
use crate::catalog::{Catalog, FeatureStats};

const CLUSTERING_MAGIC: &str = "# vibe clustering v1";
const SPLIT_MAGIC: &str = "# vibe split v1";

fn join(values: &[f64]) -> String {
    values.iter().map(f64::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_err(line: usize, message: impl Into<String>) -> TypingError {
    TypingError::Parse {
        line,
        message: message.into(),
    }
}

fn parse_floats<'a>(line: usize, fields: impl Iterator<Item = &'a str>) -> Result<Vec<f64>, TypingError> {
    fields
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("not a finite number: {f:?}")))
        })
        .collect()
}

/// Content lines (1-based line number, text), skipping blanks and comments.
fn content_lines<R: BufRead>(reader: R) -> Result<Vec<(usize, String)>, TypingError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| parse_err(i + 1, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

pub fn write_clustering(clustering: &Clustering) -> String {
    let mut out = format!("{CLUSTERING_MAGIC}\nk {}\n", clustering.k);
    out += &format!("mean {}\n", join(&clustering.feature_stats.mean));
    out += &format!("std {}\n", join(&clustering.feature_stats.std));
    for c in &clustering.centroids {
        out += &format!("centroid {}\n", join(c));
    }
    for (id, t) in clustering.body_ids.iter().zip(&clustering.assignment) {
        out += &format!("assign {id} {t}\n");
    }
    out
}

pub fn read_clustering<R: BufRead>(reader: R) -> Result<Clustering, TypingError> {
    let mut k = None;
    let mut mean = None;
    let mut std = None;
    let mut centroids = Vec::new();
    let mut body_ids = Vec::new();
    let mut assignment = Vec::new();
    let mut last_line = 0;
    for (n, line) in content_lines(reader)? {
        last_line = n;
        let mut fields = line.split_whitespace();
        match fields.next().unwrap_or_default() {
            "k" => {
                let v = fields.next().and_then(|f| f.parse::<usize>().ok()).filter(|&v| v > 0);
                k = Some(v.ok_or_else(|| parse_err(n, "k must be a positive integer"))?);
            }
            "mean" => mean = Some(parse_floats(n, fields)?),
            "std" => std = Some(parse_floats(n, fields)?),
            "centroid" => centroids.push(parse_floats(n, fields)?),
            "assign" => {
                let (Some(id), Some(t), None) = (fields.next(), fields.next(), fields.next()) else {
                    return Err(parse_err(n, "expected `assign <body id> <type>`"));
                };
                let t = t.parse::<usize>().map_err(|_| parse_err(n, format!("bad type index {t:?}")))?;
                if k.is_some_and(|k| t >= k) {
                    return Err(parse_err(n, format!("type {t} outside [0, k)")));
                }
                body_ids.push(id.to_string());
                assignment.push(t);
            }
            other => return Err(parse_err(n, format!("unknown record {other:?}"))),
        }
    }
    let k = k.ok_or_else(|| parse_err(last_line, "missing k"))?;
    let mean = mean.ok_or_else(|| parse_err(last_line, "missing mean"))?;
    let std = std.ok_or_else(|| parse_err(last_line, "missing std"))?;
    if centroids.len() != k {
        return Err(parse_err(last_line, format!("expected {k} centroids, found {}", centroids.len())));
    }
    if std.len() != mean.len() || centroids.iter().any(|c| c.len() != mean.len()) {
        return Err(parse_err(last_line, "feature dimensions disagree"));
    }
    if assignment.iter().any(|&t| t >= k) {
        return Err(parse_err(last_line, "assignment outside [0, k)"));
    }
    Ok(Clustering {
        k,
        centroids,
        assignment,
        body_ids,
        feature_stats: FeatureStats { mean, std },
    })
}

pub fn write_split(split: &Split, catalog: &Catalog) -> String {
    let body_ids = |v: &[usize]| v.iter().map(|&b| catalog.body(b).id.as_str()).collect::<Vec<_>>().join(" ");
    let mut out = format!("{SPLIT_MAGIC}\nseed {}\n", split.seed);
    out += &format!("train {}\n", body_ids(&split.train_bodies));
    out += &format!("test {}\n", body_ids(&split.test_bodies));
    for (t, held) in split.heldout_by_type.iter().enumerate() {
        let ids: Vec<&str> = held.iter().map(|&g| catalog.garment(g).id.as_str()).collect();
        out += &format!("heldout {t} {}\n", ids.join(" "));
    }
    out
}

/// Reloads a split; training sets and scenario pairs are re-derived from the
/// given labels and clustering.
pub fn read_split<R: BufRead>(
    reader: R,
    catalog: &Catalog,
    labels: &PropagatedLabels,
    clustering: &Clustering,
) -> Result<Split, TypingError> {
    let mut seed = None;
    let mut train = None;
    let mut test = None;
    let mut heldout: Vec<Option<BTreeSet<usize>>> = vec![None; clustering.k];
    let mut last_line = 0;
    let body = |n: usize, id: &str| {
        catalog
            .body_index(id)
            .ok_or_else(|| parse_err(n, format!("unknown body id {id:?}")))
    };
    for (n, line) in content_lines(reader)? {
        last_line = n;
        let mut fields = line.split_whitespace();
        match fields.next().unwrap_or_default() {
            "seed" => {
                let v = fields.next().and_then(|f| f.parse::<u64>().ok());
                seed = Some(v.ok_or_else(|| parse_err(n, "bad seed"))?);
            }
            "train" => train = Some(fields.map(|id| body(n, id)).collect::<Result<Vec<_>, _>>()?),
            "test" => test = Some(fields.map(|id| body(n, id)).collect::<Result<Vec<_>, _>>()?),
            "heldout" => {
                let t = fields
                    .next()
                    .and_then(|f| f.parse::<usize>().ok())
                    .filter(|&t| t < clustering.k)
                    .ok_or_else(|| parse_err(n, "bad type index"))?;
                let set = fields
                    .map(|id| {
                        catalog
                            .garment_index(id)
                            .ok_or_else(|| parse_err(n, format!("unknown garment id {id:?}")))
                    })
                    .collect::<Result<BTreeSet<_>, _>>()?;
                heldout[t] = Some(set);
            }
            other => return Err(parse_err(n, format!("unknown record {other:?}"))),
        }
    }
    let seed = seed.ok_or_else(|| parse_err(last_line, "missing seed"))?;
    let train = train.ok_or_else(|| parse_err(last_line, "missing train bodies"))?;
    let test = test.ok_or_else(|| parse_err(last_line, "missing test bodies"))?;
    let heldout = heldout
        .into_iter()
        .enumerate()
        .map(|(t, h)| h.ok_or_else(|| parse_err(last_line, format!("missing held-out garments of type {t}"))))
        .collect::<Result<Vec<_>, _>>()?;
    Split::from_partitions(catalog, labels, clustering, seed, train, test, heldout)
}
