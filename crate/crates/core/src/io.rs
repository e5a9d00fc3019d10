//! Delimited text tables, view splitting, label masking and matrix files.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Token marking a missing label.
pub const MISSING: &str = "?";

/// Features and encoded label columns read from a delimited file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub features: DMatrix<f64>,
    /// One column per label field; entries index into `classes`.
    pub labels: Vec<Vec<Option<usize>>>,
    /// Original label tokens per label field, in class-index order.
    pub classes: Vec<Vec<String>>,
}

impl Table {
    pub fn class_counts(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a delimited table. `label_columns` are 0-based field indices; a
/// negative index counts from the end (`-1` is the last field). Blank lines
/// are skipped. Label tokens are mapped to classes in sorted order (numeric
/// order when every token is a number).
pub fn load_table(path: &Path, delimiter: char, label_columns: &[isize]) -> Result<Table> {
    let text = read(path)?;
    let mut rows: Vec<(usize, Vec<&str>)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter).map(str::trim).collect();
        if let Some((first_line, first)) = rows.first() {
            if fields.len() != first.len() {
                return Err(parse_error(
                    path,
                    idx + 1,
                    format!(
                        "expected {} fields (as on line {first_line}), found {}",
                        first.len(),
                        fields.len()
                    ),
                ));
            }
        }
        rows.push((idx + 1, fields));
    }
    let Some((_, first)) = rows.first() else {
        return Err(parse_error(path, 0, "file contains no rows"));
    };
    let width = first.len();
    let mut label_idx = Vec::with_capacity(label_columns.len());
    for &c in label_columns {
        let resolved = if c < 0 { width as isize + c } else { c };
        if resolved < 0 || resolved as usize >= width {
            return Err(Error::Config(format!("label column {c} outside 0..{width}")));
        }
        if label_idx.contains(&(resolved as usize)) {
            return Err(Error::Config(format!("label column {c} listed twice")));
        }
        label_idx.push(resolved as usize);
    }
    let feature_idx: Vec<usize> = (0..width).filter(|c| !label_idx.contains(c)).collect();

    let mut features = DMatrix::zeros(rows.len(), feature_idx.len());
    for (r, (line, fields)) in rows.iter().enumerate() {
        for (c, &f) in feature_idx.iter().enumerate() {
            features[(r, c)] = fields[f].parse::<f64>().map_err(|_| {
                parse_error(path, *line, format!("non-numeric feature {:?} in field {}", fields[f], f + 1))
            })?;
            if !features[(r, c)].is_finite() {
                return Err(parse_error(path, *line, format!("non-finite feature in field {}", f + 1)));
            }
        }
    }

    let mut labels = Vec::new();
    let mut classes = Vec::new();
    for &f in &label_idx {
        let tokens: Vec<&str> = rows.iter().map(|(_, fields)| fields[f]).collect();
        let (column, names) = encode_labels(&tokens);
        labels.push(column);
        classes.push(names);
    }
    Ok(Table {
        features,
        labels,
        classes,
    })
}

fn encode_labels(tokens: &[&str]) -> (Vec<Option<usize>>, Vec<String>) {
    let mut names: Vec<String> = tokens
        .iter()
        .filter(|t| **t != MISSING)
        .map(|t| t.to_string())
        .collect();
    names.sort();
    names.dedup();
    let numeric: Option<Vec<f64>> = names.iter().map(|t| t.parse::<f64>().ok()).collect();
    if let Some(values) = numeric {
        let mut paired: Vec<(f64, String)> = values.into_iter().zip(names).collect();
        paired.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = paired.into_iter().map(|(_, t)| t).collect();
    }
    let column = tokens
        .iter()
        .map(|t| {
            if *t == MISSING {
                None
            } else {
                names.iter().position(|n| n == t)
            }
        })
        .collect();
    (column, names)
}

/// How feature columns are grouped into views.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ViewSplit {
    /// `"all"` (one view) or `"halves"`.
    Named(String),
    /// 1-based inclusive column ranges, one per view.
    Ranges(Vec<[usize; 2]>),
}

impl Default for ViewSplit {
    fn default() -> Self {
        ViewSplit::Named("all".into())
    }
}

impl ViewSplit {
    pub fn halves() -> Self {
        ViewSplit::Named("halves".into())
    }

    /// 0-based half-open column ranges for a matrix with `d` columns.
    pub fn ranges(&self, d: usize) -> Result<Vec<(usize, usize)>> {
        let ranges = match self {
            ViewSplit::Named(name) if name == "all" => vec![(0, d)],
            ViewSplit::Named(name) if name == "halves" => {
                if d < 2 {
                    return Err(Error::Config(format!("cannot halve {d} feature column(s)")));
                }
                let first = d.div_ceil(2);
                vec![(0, first), (first, d)]
            }
            ViewSplit::Named(other) => {
                return Err(Error::Config(format!(
                    "unknown view split {other:?} (expected \"all\", \"halves\" or ranges)"
                )))
            }
            ViewSplit::Ranges(list) => {
                let mut owner = vec![None; d];
                let mut out = Vec::new();
                for (v, &[lo, hi]) in list.iter().enumerate() {
                    if lo == 0 || lo > hi || hi > d {
                        return Err(Error::Config(format!(
                            "view range [{lo}, {hi}] is not within 1..={d}"
                        )));
                    }
                    for slot in &mut owner[lo - 1..hi] {
                        if let Some(prev) = slot {
                            return Err(Error::Config(format!(
                                "view ranges {prev} and {v} overlap"
                            )));
                        }
                        *slot = Some(v);
                    }
                    out.push((lo - 1, hi));
                }
                if let Some(c) = owner.iter().position(Option::is_none) {
                    return Err(Error::Config(format!("feature column {} is in no view", c + 1)));
                }
                out
            }
        };
        Ok(ranges)
    }
}

pub fn split_views(features: &DMatrix<f64>, split: &ViewSplit) -> Result<Vec<DMatrix<f64>>> {
    Ok(split
        .ranges(features.ncols())?
        .into_iter()
        .map(|(lo, hi)| features.columns(lo, hi - lo).into_owned())
        .collect())
}

/// Hides labels for a random training split.
///
/// Per task, `max(ceil(fraction * n_obs), c)` observed labels are kept (capped
/// so at least one observed label stays hidden); one member of every class is
/// drawn first, the rest uniformly. Tasks are processed in order from a single
/// generator seeded with `seed`.
pub fn mask_labels(
    labels: &[Vec<Option<usize>>],
    fraction: f64,
    seed: u64,
) -> Result<Vec<Vec<Option<usize>>>> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("label fraction must lie in (0, 1), got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(labels.len());
    for (k, column) in labels.iter().enumerate() {
        let observed: Vec<usize> = (0..column.len()).filter(|&i| column[i].is_some()).collect();
        let c = column.iter().flatten().max().map_or(0, |m| m + 1);
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for &i in &observed {
            by_class[column[i].unwrap()].push(i);
        }
        let present = by_class.iter().filter(|m| !m.is_empty()).count();
        let wanted = ((fraction * observed.len() as f64) - 1e-9).ceil() as usize;
        let keep = wanted.max(present).min(observed.len().saturating_sub(1));
        if keep < present || keep == 0 {
            return Err(Error::Config(format!(
                "task {k}: {} observed labels cannot keep one per class and hide at least one",
                observed.len()
            )));
        }
        let mut chosen = vec![false; column.len()];
        for members in by_class.iter().filter(|m| !m.is_empty()) {
            chosen[*members.choose(&mut rng).unwrap()] = true;
        }
        let mut rest: Vec<usize> = observed.iter().copied().filter(|&i| !chosen[i]).collect();
        rest.shuffle(&mut rng);
        for &i in rest.iter().take(keep - present) {
            chosen[i] = true;
        }
        out.push(
            column
                .iter()
                .enumerate()
                .map(|(i, l)| if chosen[i] { *l } else { None })
                .collect(),
        );
    }
    Ok(out)
}

/// Scales every nonzero row to unit Euclidean norm.
pub fn normalize_rows(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Writes a matrix as comma-separated scientific notation with 17 significant digits.
pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = read(path)?;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_error(path, idx + 1, format!("expected {w} fields, found {}", fields.len())))
            }
            _ => {}
        }
        for f in fields {
            values.push(
                f.parse::<f64>()
                    .map_err(|_| parse_error(path, idx + 1, format!("non-numeric value {f:?}")))?,
            );
        }
        rows += 1;
    }
    let width = width.ok_or_else(|| parse_error(path, 0, "file contains no rows"))?;
    Ok(DMatrix::from_row_slice(rows, width, &values))
}

/// Label columns as comma-separated 0-based class indices, `?` for missing;
/// one row per instance, one field per task.
pub fn save_labels(path: &Path, labels: &[Vec<Option<usize>>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let n = labels.first().map_or(0, Vec::len);
    for i in 0..n {
        let line: Vec<String> = labels
            .iter()
            .map(|col| col[i].map_or_else(|| MISSING.to_string(), |c| c.to_string()))
            .collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_labels(path: &Path) -> Result<Vec<Vec<Option<usize>>>> {
    let text = read(path)?;
    let mut columns: Vec<Vec<Option<usize>>> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if columns.is_empty() {
            columns = vec![Vec::new(); fields.len()];
        } else if fields.len() != columns.len() {
            return Err(parse_error(
                path,
                idx + 1,
                format!("expected {} fields, found {}", columns.len(), fields.len()),
            ));
        }
        for (col, f) in columns.iter_mut().zip(fields) {
            col.push(if f == MISSING {
                None
            } else {
                Some(f.parse::<usize>().map_err(|_| {
                    parse_error(path, idx + 1, format!("label {f:?} is not a class index"))
                })?)
            });
        }
    }
    if columns.is_empty() {
        return Err(parse_error(path, 0, "file contains no rows"));
    }
    Ok(columns)
}
