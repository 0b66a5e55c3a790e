use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::config::CategoricalPolicy;
use crate::error::{Error, Result};

/// A column picked by header name, by 0-based index, or the last one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRef {
    Name(String),
    Index(usize),
    Last,
}

impl FromStr for ColumnRef {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Config("empty column reference".into()));
        }
        Ok(match s {
            "last" => ColumnRef::Last,
            _ => match s.parse::<usize>() {
                Ok(i) => ColumnRef::Index(i),
                Err(_) => ColumnRef::Name(s.to_string()),
            },
        })
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ColumnRef::Name(n) => f.write_str(n),
            ColumnRef::Index(i) => write!(f, "{i}"),
            ColumnRef::Last => f.write_str("last"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Delimiter {
    Comma,
    Semicolon,
    Tab,
    /// Any run of spaces or tabs, as in the classic UCI `.data` files.
    Whitespace,
}

impl FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "," | "comma" => Ok(Delimiter::Comma),
            ";" | "semicolon" => Ok(Delimiter::Semicolon),
            "\t" | "\\t" | "tab" => Ok(Delimiter::Tab),
            "whitespace" | "space" | " " => Ok(Delimiter::Whitespace),
            other => Err(Error::Config(format!("unsupported delimiter `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub target: ColumnRef,
    pub delimiter: Delimiter,
    pub header: bool,
    pub categorical: Vec<ColumnRef>,
    pub categorical_policy: CategoricalPolicy,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            target: ColumnRef::Last,
            delimiter: Delimiter::Comma,
            header: true,
            categorical: Vec::new(),
            categorical_policy: CategoricalPolicy::Drop,
        }
    }
}

/// Features and response of a regression dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl Dataset {
    pub fn num_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_features(&self) -> usize {
        self.x.ncols()
    }
}

/// One record with the 1-based line it came from.
struct Record {
    line: usize,
    fields: Vec<String>,
}

fn read_records(path: &Path, delimiter: Delimiter) -> Result<Vec<Record>> {
    let byte = match delimiter {
        Delimiter::Comma => b',',
        Delimiter::Semicolon => b';',
        Delimiter::Tab => b'\t',
        Delimiter::Whitespace => {
            let text = std::fs::read_to_string(path)?;
            return Ok(text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
                .map(|(i, l)| Record {
                    line: i + 1,
                    fields: l.split_whitespace().map(String::from).collect(),
                })
                .collect());
        }
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(byte)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push(Record {
            line,
            fields: rec.iter().map(String::from).collect(),
        });
    }
    Ok(out)
}

fn resolve(col: &ColumnRef, names: &[String]) -> Result<usize> {
    match col {
        ColumnRef::Last => Ok(names.len() - 1),
        ColumnRef::Index(i) if *i < names.len() => Ok(*i),
        ColumnRef::Index(i) => Err(Error::Config(format!(
            "column index {i} out of range ({} columns)",
            names.len()
        ))),
        ColumnRef::Name(n) => names
            .iter()
            .position(|c| c == n)
            .ok_or_else(|| Error::Config(format!("no column named `{n}`"))),
    }
}

/// Reads a delimited numeric table into features `X` and response `y`.
///
/// Columns listed in `categorical` may hold arbitrary text and are dropped
/// or ordinal-encoded; any other non-numeric cell is a parse error that
/// names its line and (1-based) column.
pub fn ingest_csv(path: impl AsRef<Path>, options: &IngestOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut records = read_records(path, options.delimiter)?.into_iter();
    let names: Vec<String> = if options.header {
        match records.next() {
            Some(r) => r.fields,
            None => return Err(Error::EmptyDataset(PathBuf::from(path))),
        }
    } else {
        Vec::new()
    };
    let records: Vec<Record> = records.collect();
    let first = match records.first() {
        Some(r) => r,
        None => return Err(Error::EmptyDataset(PathBuf::from(path))),
    };
    let width = if options.header {
        names.len()
    } else {
        first.fields.len()
    };
    let names = if options.header {
        names
    } else {
        (0..width).map(|j| format!("c{j}")).collect()
    };

    let target = resolve(&options.target, &names)?;
    let categorical: Vec<usize> = options
        .categorical
        .iter()
        .map(|c| resolve(c, &names))
        .collect::<Result<_>>()?;
    if categorical.contains(&target) {
        return Err(Error::Config("the target column cannot be categorical".into()));
    }

    let mut levels: BTreeMap<usize, BTreeMap<String, usize>> = BTreeMap::new();
    if options.categorical_policy == CategoricalPolicy::Ordinal {
        for &c in &categorical {
            let mut set: BTreeMap<String, usize> = BTreeMap::new();
            for r in &records {
                if let Some(v) = r.fields.get(c) {
                    set.insert(v.clone(), 0);
                }
            }
            for (rank, v) in set.values_mut().enumerate() {
                *v = rank;
            }
            levels.insert(c, set);
        }
    }

    let keep: Vec<usize> = (0..width)
        .filter(|&j| j != target)
        .filter(|j| !categorical.contains(j) || options.categorical_policy == CategoricalPolicy::Ordinal)
        .collect();

    let n = records.len();
    let mut x = DMatrix::zeros(n, keep.len());
    let mut y = DVector::zeros(n);
    for (i, r) in records.iter().enumerate() {
        if r.fields.len() != width {
            return Err(Error::Parse {
                line: r.line,
                column: r.fields.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", r.fields.len()),
            });
        }
        let numeric = |j: usize| -> Result<f64> {
            let cell = &r.fields[j];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    line: r.line,
                    column: j + 1,
                    message: format!("`{cell}` is not a finite number"),
                }),
            }
        };
        y[i] = numeric(target)?;
        for (k, &j) in keep.iter().enumerate() {
            x[(i, k)] = match levels.get(&j) {
                Some(map) => map[&r.fields[j]] as f64,
                None => numeric(j)?,
            };
        }
    }

    Ok(Dataset {
        x,
        y,
        feature_names: keep.iter().map(|&j| names[j].clone()).collect(),
        target_name: names[target].clone(),
    })
}
