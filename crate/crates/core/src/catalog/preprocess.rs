use super::CatalogError;

/// Per-dimension mean and (population) standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, CatalogError> {
        let first = rows
            .first()
            .ok_or_else(|| CatalogError::invalid("standardization input", "no vectors"))?;
        let dim = first.as_ref().len();
        if rows.iter().any(|r| r.as_ref().len() != dim) {
            return Err(CatalogError::invalid("standardization input", "vectors differ in length"));
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r.as_ref()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r.as_ref()).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// `(x - mean) / std`, with zero-variance dimensions mapped to 0.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| {
                if *s <= 1e-12 * (1.0 + m.abs()) {
                    0.0
                } else {
                    (v - m) / s
                }
            })
            .collect()
    }
}

/// Statistics persisted with a trained embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationStats {
    pub smpl: FeatureStats,
    pub vitals: FeatureStats,
    pub visual: FeatureStats,
}

/// Standardizes `values`. Without `stats`, they are fitted on `values`
/// (training mode); otherwise the given statistics are reused.
pub fn standardize<R: AsRef<[f64]>>(
    values: &[R],
    stats: Option<&FeatureStats>,
) -> Result<(Vec<Vec<f64>>, FeatureStats), CatalogError> {
    let stats = match stats {
        Some(s) => {
            if let Some(bad) = values.iter().find(|r| r.as_ref().len() != s.dim()) {
                return Err(CatalogError::invalid(
                    "standardization input",
                    format!("vector of length {} against stats of length {}", bad.as_ref().len(), s.dim()),
                ));
            }
            s.clone()
        }
        None => FeatureStats::fit(values)?,
    };
    let out = values.iter().map(|r| stats.apply(r.as_ref())).collect();
    Ok((out, stats))
}

/// Coordinate-wise median of per-photo estimates; even counts average the
/// two central values.
pub fn median_aggregate<R: AsRef<[f64]>>(samples: &[R]) -> Result<Vec<f64>, CatalogError> {
    let first = samples
        .first()
        .ok_or_else(|| CatalogError::invalid("median input", "no samples"))?;
    let dim = first.as_ref().len();
    if samples.iter().any(|s| s.as_ref().len() != dim) {
        return Err(CatalogError::invalid("median input", "samples differ in length"));
    }
    let n = samples.len();
    let mut column = Vec::with_capacity(n);
    Ok((0..dim)
        .map(|d| {
            column.clear();
            column.extend(samples.iter().map(|s| s.as_ref()[d]));
            column.sort_by(f64::total_cmp);
            if n % 2 == 1 {
                column[n / 2]
            } else {
                0.5 * (column[n / 2 - 1] + column[n / 2])
            }
        })
        .collect())
}
