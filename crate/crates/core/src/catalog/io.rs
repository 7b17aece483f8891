//! Line-delimited text persistence.
//!
//! Catalog file layout (whitespace-separated fields, `#` starts a comment
//! line, sections introduced by a bracketed header):
//!
//! ```text
//! [attributes]
//! <name>                                      one per line, in vector order
//! [bodies]
//! <id> <smpl x10> <height> <bust> <waist> <hips>
//! [garments]
//! <id> <dress|top> <attribute bits xA> <visual xV>
//! [positives]
//! <body_id> <garment_id>
//! ```
//!
//! The oracle companion holds `<body_id> <garment_id> <0|1>` for every pair;
//! the planted companion holds generator labels (`body`, `garment`,
//! `indicator` records).

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use super::{
    BodyRecord, Catalog, CatalogError, GarmentCategory, GarmentRecord, Oracle, PlantedTypes, SMPL_DIM, VITALS_DIM,
};

const CATALOG_MAGIC: &str = "# vibe catalog v1";
const ORACLE_MAGIC: &str = "# vibe oracle v1";
const PLANTED_MAGIC: &str = "# vibe planted types v1";

fn io_err(path: &Path, source: std::io::Error) -> CatalogError {
    CatalogError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

/// Content lines with their 1-based line numbers.
fn content_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), CatalogError>> {
    reader.lines().enumerate().filter_map(|(i, line)| match line {
        Err(e) => Some(Err(CatalogError::Parse {
            line: i + 1,
            message: e.to_string(),
        })),
        Ok(l) => {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                None
            } else {
                Some(Ok((i + 1, t.to_string())))
            }
        }
    })
}

fn parse_real(token: &str, line: usize, what: &str) -> Result<f64, CatalogError> {
    let v: f64 = token.parse().map_err(|_| CatalogError::Parse {
        line,
        message: format!("{what}: {token:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(CatalogError::Parse {
            line,
            message: format!("{what}: {token:?} is not finite"),
        });
    }
    Ok(v)
}

fn parse_bit(token: &str, line: usize) -> Result<bool, CatalogError> {
    match token {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CatalogError::NonBinaryAttribute {
            line,
            value: other.to_string(),
        }),
    }
}

fn with_line(line: usize, err: CatalogError) -> CatalogError {
    match err {
        CatalogError::Invalid { what, message } => CatalogError::Parse {
            line,
            message: format!("{what}: {message}"),
        },
        other => other,
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Attributes,
    Bodies,
    Garments,
    Positives,
}

fn parse_body_line(fields: &[&str], line: usize) -> Result<BodyRecord, CatalogError> {
    let expected = 1 + SMPL_DIM + VITALS_DIM;
    if fields.len() != expected {
        return Err(CatalogError::Parse {
            line,
            message: format!("body line has {} fields, expected {expected}", fields.len()),
        });
    }
    let mut smpl = [0.0; SMPL_DIM];
    for (k, t) in fields[1..=SMPL_DIM].iter().enumerate() {
        smpl[k] = parse_real(t, line, "shape coefficient")?;
    }
    let mut vitals = [0.0; VITALS_DIM];
    for (k, t) in fields[1 + SMPL_DIM..].iter().enumerate() {
        vitals[k] = parse_real(t, line, "vital statistic")?;
    }
    BodyRecord::new(fields[0], smpl, vitals).map_err(|e| with_line(line, e))
}

/// Reads a single body from body lines (catalog `[bodies]` format, header
/// optional). Several lines with the same id are per-photo estimates of one
/// person and are combined by their coordinate-wise median.
pub fn read_body_file<R: BufRead>(reader: R) -> Result<BodyRecord, CatalogError> {
    let mut estimates: Vec<BodyRecord> = Vec::new();
    for item in content_lines(reader) {
        let (line, text) = item?;
        if text == "[bodies]" {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        let body = parse_body_line(&fields, line)?;
        if let Some(first) = estimates.first() {
            if first.id != body.id {
                return Err(CatalogError::Parse {
                    line,
                    message: format!("body file mixes ids {:?} and {:?}", first.id, body.id),
                });
            }
        }
        estimates.push(body);
    }
    let first = estimates
        .first()
        .ok_or_else(|| CatalogError::invalid("body file", "no body lines"))?;
    if estimates.len() == 1 {
        return Ok(first.clone());
    }
    let median = super::median_aggregate(&estimates.iter().map(BodyRecord::features).collect::<Vec<_>>())?;
    let mut smpl = [0.0; SMPL_DIM];
    smpl.copy_from_slice(&median[..SMPL_DIM]);
    let mut vitals = [0.0; VITALS_DIM];
    vitals.copy_from_slice(&median[SMPL_DIM..]);
    BodyRecord::new(first.id.clone(), smpl, vitals)
}

/// Parses and validates a catalog.
pub fn read_catalog<R: BufRead>(reader: R) -> Result<Catalog, CatalogError> {
    let mut section = Section::None;
    let mut vocabulary = Vec::new();
    let mut bodies: Vec<BodyRecord> = Vec::new();
    let mut garments: Vec<GarmentRecord> = Vec::new();
    let mut body_ids = std::collections::HashMap::new();
    let mut garment_ids = std::collections::HashMap::new();
    let mut visual_dim: Option<usize> = None;
    let mut positives = BTreeSet::new();

    for item in content_lines(reader) {
        let (line, text) = item?;
        if text.starts_with('[') {
            section = match text.as_str() {
                "[attributes]" => Section::Attributes,
                "[bodies]" => Section::Bodies,
                "[garments]" => Section::Garments,
                "[positives]" => Section::Positives,
                other => {
                    return Err(CatalogError::Parse {
                        line,
                        message: format!("unknown section {other}"),
                    })
                }
            };
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        match section {
            Section::None => {
                return Err(CatalogError::Parse {
                    line,
                    message: "data before any section header".into(),
                })
            }
            Section::Attributes => {
                if fields.len() != 1 {
                    return Err(CatalogError::Parse {
                        line,
                        message: "attribute names must be single tokens".into(),
                    });
                }
                if !garments.is_empty() {
                    return Err(CatalogError::Parse {
                        line,
                        message: "attributes must precede garments".into(),
                    });
                }
                vocabulary.push(fields[0].to_string());
            }
            Section::Bodies => {
                let body = parse_body_line(&fields, line)?;
                if body_ids.insert(body.id.clone(), bodies.len()).is_some() {
                    return Err(CatalogError::Parse {
                        line,
                        message: format!("duplicate body id {:?}", body.id),
                    });
                }
                bodies.push(body);
            }
            Section::Garments => {
                let a = vocabulary.len();
                if fields.len() < 2 + a {
                    return Err(CatalogError::Parse {
                        line,
                        message: format!("garment line has {} fields, needs at least {}", fields.len(), 2 + a),
                    });
                }
                let v = fields.len() - 2 - a;
                match visual_dim {
                    None => visual_dim = Some(v),
                    Some(expected) if expected != v => {
                        return Err(CatalogError::Parse {
                            line,
                            message: format!("garment has {v} visual features, earlier garments have {expected}"),
                        })
                    }
                    _ => {}
                }
                let category: GarmentCategory = fields[1]
                    .parse()
                    .map_err(|message| CatalogError::Parse { line, message })?;
                let attributes = fields[2..2 + a]
                    .iter()
                    .map(|t| parse_bit(t, line))
                    .collect::<Result<Vec<_>, _>>()?;
                let visual = fields[2 + a..]
                    .iter()
                    .map(|t| parse_real(t, line, "visual feature"))
                    .collect::<Result<Vec<_>, _>>()?;
                if let Some(first) = garments.first() {
                    if first.category != category {
                        return Err(CatalogError::Parse {
                            line,
                            message: format!("category {category} differs from catalog category {}", first.category),
                        });
                    }
                }
                let g = GarmentRecord::new(fields[0], category, attributes, visual).map_err(|e| with_line(line, e))?;
                if garment_ids.insert(g.id.clone(), garments.len()).is_some() {
                    return Err(CatalogError::Parse {
                        line,
                        message: format!("duplicate garment id {:?}", g.id),
                    });
                }
                garments.push(g);
            }
            Section::Positives => {
                if fields.len() != 2 {
                    return Err(CatalogError::Parse {
                        line,
                        message: "positive line must be <body_id> <garment_id>".into(),
                    });
                }
                let b = *body_ids.get(fields[0]).ok_or_else(|| CatalogError::UnknownId {
                    line,
                    kind: "body",
                    id: fields[0].to_string(),
                })?;
                let g = *garment_ids.get(fields[1]).ok_or_else(|| CatalogError::UnknownId {
                    line,
                    kind: "garment",
                    id: fields[1].to_string(),
                })?;
                positives.insert((b, g));
            }
        }
    }
    Catalog::new(bodies, garments, positives, vocabulary)
}

pub fn write_catalog(catalog: &Catalog) -> String {
    let mut out = String::new();
    out.push_str(CATALOG_MAGIC);
    out.push('\n');
    out.push_str("# bodies: id smpl[10] height bust waist hips\n");
    out.push_str("# garments: id category attributes[A] visual[V]\n");
    out.push_str("[attributes]\n");
    for name in catalog.attribute_vocabulary() {
        out.push_str(name);
        out.push('\n');
    }
    out.push_str("[bodies]\n");
    for b in catalog.bodies() {
        out.push_str(&b.id);
        for v in b.smpl.iter().chain(&b.vitals) {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out.push_str("[garments]\n");
    for g in catalog.garments() {
        let _ = write!(out, "{} {}", g.id, g.category);
        for &a in &g.attributes {
            out.push_str(if a { " 1" } else { " 0" });
        }
        for v in &g.visual {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
    out.push_str("[positives]\n");
    for &(b, g) in catalog.positives() {
        let _ = writeln!(out, "{} {}", catalog.body(b).id, catalog.garment(g).id);
    }
    out
}

pub fn load_catalog(path: &Path) -> Result<Catalog, CatalogError> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    read_catalog(BufReader::new(file))
}

pub fn save_catalog(catalog: &Catalog, path: &Path) -> Result<(), CatalogError> {
    write_atomic(path, write_catalog(catalog).as_bytes()).map_err(|e| io_err(path, e))
}

pub fn write_oracle(catalog: &Catalog) -> Option<String> {
    let oracle = catalog.oracle()?;
    let mut out = String::from(ORACLE_MAGIC);
    out.push('\n');
    for (bi, b) in catalog.bodies().iter().enumerate() {
        for (gi, g) in catalog.garments().iter().enumerate() {
            let _ = writeln!(out, "{} {} {}", b.id, g.id, u8::from(oracle.is_compatible(bi, gi)));
        }
    }
    Some(out)
}

/// Parses an oracle companion for `catalog`; every pair must appear once.
pub fn read_oracle<R: BufRead>(catalog: &Catalog, reader: R) -> Result<Oracle, CatalogError> {
    let (nb, ng) = (catalog.bodies().len(), catalog.garments().len());
    let mut compatible = vec![false; nb * ng];
    let mut seen = HashSet::new();
    for item in content_lines(reader) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CatalogError::Parse {
                line,
                message: "oracle line must be <body_id> <garment_id> <0|1>".into(),
            });
        }
        let b = catalog.body_index(fields[0]).ok_or_else(|| CatalogError::UnknownId {
            line,
            kind: "body",
            id: fields[0].to_string(),
        })?;
        let g = catalog.garment_index(fields[1]).ok_or_else(|| CatalogError::UnknownId {
            line,
            kind: "garment",
            id: fields[1].to_string(),
        })?;
        let flag = match fields[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(CatalogError::Parse {
                    line,
                    message: format!("oracle flag {other:?} is not 0 or 1"),
                })
            }
        };
        if !seen.insert((b, g)) {
            return Err(CatalogError::Parse {
                line,
                message: format!("pair ({}, {}) listed twice", fields[0], fields[1]),
            });
        }
        compatible[b * ng + g] = flag;
    }
    if seen.len() != nb * ng {
        return Err(CatalogError::invalid(
            "oracle",
            format!("covers {} of {} pairs", seen.len(), nb * ng),
        ));
    }
    Oracle::new(nb, ng, compatible)
}

fn join_indices(v: &[usize]) -> String {
    if v.is_empty() {
        return "-".into();
    }
    v.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_indices(token: &str, line: usize) -> Result<Vec<usize>, CatalogError> {
    if token == "-" {
        return Ok(Vec::new());
    }
    token
        .split(',')
        .map(|t| {
            t.parse().map_err(|_| CatalogError::Parse {
                line,
                message: format!("bad index {t:?}"),
            })
        })
        .collect()
}

pub fn write_planted(catalog: &Catalog) -> Option<String> {
    let planted = catalog.planted()?;
    let mut out = String::from(PLANTED_MAGIC);
    out.push('\n');
    for (t, block) in planted.indicator_attributes.iter().enumerate() {
        let _ = writeln!(out, "indicator {t} {}", join_indices(block));
    }
    for (b, t) in catalog.bodies().iter().zip(&planted.body_types) {
        let _ = writeln!(out, "body {} {t}", b.id);
    }
    for (g, ts) in catalog.garments().iter().zip(&planted.garment_types) {
        let _ = writeln!(out, "garment {} {}", g.id, join_indices(ts));
    }
    Some(out)
}

pub fn read_planted<R: BufRead>(catalog: &Catalog, reader: R) -> Result<PlantedTypes, CatalogError> {
    let mut body_types: Vec<Option<usize>> = vec![None; catalog.bodies().len()];
    let mut garment_types: Vec<Option<Vec<usize>>> = vec![None; catalog.garments().len()];
    let mut indicators: Vec<(usize, Vec<usize>)> = Vec::new();
    for item in content_lines(reader) {
        let (line, text) = item?;
        let fields: Vec<&str> = text.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(CatalogError::Parse {
                line,
                message: "planted line must have three fields".into(),
            });
        }
        match fields[0] {
            "indicator" => {
                let t = parse_indices(fields[1], line)?;
                if t.len() != 1 {
                    return Err(CatalogError::Parse {
                        line,
                        message: "indicator type must be a single index".into(),
                    });
                }
                indicators.push((t[0], parse_indices(fields[2], line)?));
            }
            "body" => {
                let b = catalog.body_index(fields[1]).ok_or_else(|| CatalogError::UnknownId {
                    line,
                    kind: "body",
                    id: fields[1].to_string(),
                })?;
                let t = parse_indices(fields[2], line)?;
                if t.len() != 1 {
                    return Err(CatalogError::Parse {
                        line,
                        message: "body type must be a single index".into(),
                    });
                }
                body_types[b] = Some(t[0]);
            }
            "garment" => {
                let g = catalog.garment_index(fields[1]).ok_or_else(|| CatalogError::UnknownId {
                    line,
                    kind: "garment",
                    id: fields[1].to_string(),
                })?;
                garment_types[g] = Some(parse_indices(fields[2], line)?);
            }
            other => {
                return Err(CatalogError::Parse {
                    line,
                    message: format!("unknown planted record {other:?}"),
                })
            }
        }
    }
    indicators.sort_by_key(|(t, _)| *t);
    if indicators.iter().enumerate().any(|(i, (t, _))| i != *t) {
        return Err(CatalogError::invalid("planted types", "indicator types must be 0..k without gaps"));
    }
    let body_types = body_types
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CatalogError::invalid("planted types", "missing body type"))?;
    let garment_types = garment_types
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| CatalogError::invalid("planted types", "missing garment types"))?;
    Ok(PlantedTypes {
        body_types,
        garment_types,
        indicator_attributes: indicators.into_iter().map(|(_, v)| v).collect(),
    })
}

/// File names of a dataset directory.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub catalog: PathBuf,
    pub oracle: PathBuf,
    pub planted: PathBuf,
}

impl DatasetPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            catalog: dir.join("catalog.txt"),
            oracle: dir.join("oracle.txt"),
            planted: dir.join("planted.txt"),
        }
    }
}

/// Writes the catalog plus whichever companions it carries.
pub fn save_dataset(catalog: &Catalog, dir: &Path) -> Result<DatasetPaths, CatalogError> {
    let paths = DatasetPaths::in_dir(dir);
    save_catalog(catalog, &paths.catalog)?;
    if let Some(text) = write_oracle(catalog) {
        write_atomic(&paths.oracle, text.as_bytes()).map_err(|e| io_err(&paths.oracle, e))?;
    }
    if let Some(text) = write_planted(catalog) {
        write_atomic(&paths.planted, text.as_bytes()).map_err(|e| io_err(&paths.planted, e))?;
    }
    Ok(paths)
}

/// Loads `catalog.txt` from `dir`, attaching oracle and planted companions
/// when present.
pub fn load_dataset(dir: &Path) -> Result<Catalog, CatalogError> {
    let paths = DatasetPaths::in_dir(dir);
    let mut catalog = load_catalog(&paths.catalog)?;
    if paths.oracle.exists() {
        let file = fs::File::open(&paths.oracle).map_err(|e| io_err(&paths.oracle, e))?;
        let oracle = read_oracle(&catalog, BufReader::new(file))?;
        catalog = catalog.with_oracle(oracle)?;
    }
    if paths.planted.exists() {
        let file = fs::File::open(&paths.planted).map_err(|e| io_err(&paths.planted, e))?;
        let planted = read_planted(&catalog, BufReader::new(file))?;
        catalog = catalog.with_planted(planted)?;
    }
    Ok(catalog)
}
