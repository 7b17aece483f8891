//! Pairwise preference judgments: for one body, one garment was preferred
//! over another.

use std::io::BufRead;

use super::EvalError;
use crate::catalog::Catalog;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferencePair {
    pub body_id: String,
    pub preferred_id: String,
    pub rejected_id: String,
}

/// Reads whitespace- or comma-separated `body preferred rejected` lines;
/// blank lines and `#` comments are skipped.
pub fn read_preference_pairs<R: BufRead>(reader: R) -> Result<Vec<PreferencePair>, EvalError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| EvalError::Parse {
            line: n + 1,
            message: e.to_string(),
        })?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|f| !f.is_empty())
            .collect();
        let [body, preferred, rejected] = fields[..] else {
            return Err(EvalError::Parse {
                line: n + 1,
                message: format!("expected 3 fields, found {}", fields.len()),
            });
        };
        if preferred == rejected {
            return Err(EvalError::Parse {
                line: n + 1,
                message: format!("preferred and rejected garment are both {preferred:?}"),
            });
        }
        out.push(PreferencePair {
            body_id: body.to_string(),
            preferred_id: preferred.to_string(),
            rejected_id: rejected.to_string(),
        });
    }
    Ok(out)
}

pub fn write_preference_pairs(pairs: &[PreferencePair]) -> String {
    let mut s = String::from("# body_id preferred_id rejected_id\n");
    for p in pairs {
        s.push_str(&format!("{} {} {}\n", p.body_id, p.preferred_id, p.rejected_id));
    }
    s
}

/// Fraction of pairs whose preferred garment scores above the rejected one
/// for the pair's body, ties counting one half. `score` receives catalog
/// indices (body, garment).
pub fn preference_auc<F>(catalog: &Catalog, pairs: &[PreferencePair], mut score: F) -> Result<f64, EvalError>
where
    F: FnMut(usize, usize) -> Result<f64, String>,
{
    if pairs.is_empty() {
        return Err(EvalError::Invalid("no preference pairs".into()));
    }
    let garment = |id: &str| {
        catalog.garment_index(id).ok_or_else(|| EvalError::UnknownId {
            kind: "garment",
            id: id.to_string(),
        })
    };
    let mut twice = 0u64;
    for p in pairs {
        let b = catalog.body_index(&p.body_id).ok_or_else(|| EvalError::UnknownId {
            kind: "body",
            id: p.body_id.clone(),
        })?;
        let (gp, gr) = (garment(&p.preferred_id)?, garment(&p.rejected_id)?);
        let sp = score(b, gp).map_err(EvalError::Invalid)?;
        let sr = score(b, gr).map_err(EvalError::Invalid)?;
        if !sp.is_finite() || !sr.is_finite() {
            return Err(EvalError::NonFiniteScore(if sp.is_finite() { sr } else { sp }));
        }
        twice += if sp > sr {
            2
        } else if sp == sr {
            1
        } else {
            0
        };
    }
    Ok(twice as f64 / (2 * pairs.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{generate_synthetic, SyntheticSpec};

    fn catalog() -> Catalog {
        generate_synthetic(&SyntheticSpec {
            num_garments: 10,
            ..SyntheticSpec::default()
        })
        .unwrap()
    }

    fn pair(c: &Catalog, b: usize, p: usize, r: usize) -> PreferencePair {
        PreferencePair {
            body_id: c.body(b).id.clone(),
            preferred_id: c.garment(p).id.clone(),
            rejected_id: c.garment(r).id.clone(),
        }
    }

    #[test]
    fn three_of_five_ordered() {
        let c = catalog();
        let pairs: Vec<_> = [(0, 1), (2, 3), (4, 5), (7, 6), (9, 8)]
            .iter()
            .map(|&(p, r)| pair(&c, 0, p, r))
            .collect();
        // score = garment index: pairs with p > r are ordered correctly
        let a = preference_auc(&c, &pairs, |_, g| Ok(g as f64)).unwrap();
        assert_eq!(a, 0.4);
        let a = preference_auc(&c, &pairs, |_, g| Ok(-(g as f64))).unwrap();
        assert_eq!(a, 0.6);
        assert_eq!(preference_auc(&c, &pairs, |_, _| Ok(1.0)).unwrap(), 0.5);
    }

    #[test]
    fn unknown_id_is_named() {
        let c = catalog();
        let mut p = pair(&c, 0, 1, 2);
        p.rejected_id = "nope".into();
        let err = preference_auc(&c, &[p], |_, _| Ok(0.0)).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }

    #[test]
    fn file_round_trip() {
        let c = catalog();
        let pairs = vec![pair(&c, 0, 1, 2), pair(&c, 3, 4, 5)];
        let text = write_preference_pairs(&pairs);
        assert_eq!(read_preference_pairs(text.as_bytes()).unwrap(), pairs);
        assert!(read_preference_pairs("a,b,c\n".as_bytes()).is_ok());
        assert!(read_preference_pairs("a b b\n".as_bytes()).is_err());
        assert!(read_preference_pairs("a b\n".as_bytes()).is_err());
    }
}
