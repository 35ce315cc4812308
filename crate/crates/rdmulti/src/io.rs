//! CSV ingestion.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use rdmulti_core::data::DEFAULT_MAX_LEVELS;
use rdmulti_core::{encode_cells, encode_treatment, CellEncoding, ClusterBy, Dataset, ModelSpec};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Open { path: String, source: std::io::Error },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("the file has no data rows")]
    Empty,
    #[error("{role} column '{name}' not found")]
    MissingColumn { role: &'static str, name: String },
    #[error("cannot parse '{value}' in column '{column}' at data row {row} as a number")]
    Parse { column: String, row: usize, value: String },
    #[error("missing value in column '{column}' at data row {row}; rows with missing values must be removed before estimation")]
    MissingValue { column: String, row: usize },
    #[error("treatment indicators are not cumulative at data row {row}: X{next} = 1 while X{prev} = 0")]
    NotCumulative { row: usize, prev: usize, next: usize },
    #[error("treatment indicator column '{column}' holds {value} at data row {row}; expected 0 or 1")]
    NotBinary { column: String, row: usize, value: f64 },
    #[error("treatment column '{column}' holds non-integer {value} at data row {row}")]
    NotInteger { column: String, row: usize, value: f64 },
    #[error("schema: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] rdmulti_core::Error),
}

/// How the treatment enters the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreatmentColumns {
    /// A single integer column; `levels` defaults to the sorted distinct values.
    Levels { column: String, levels: Option<Vec<i64>> },
    /// Pre-built cumulative indicator columns.
    Indicators(Vec<String>),
}

/// Column mapping for [`load_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub outcome: String,
    pub running: String,
    pub cutoff: f64,
    pub treatment: TreatmentColumns,
    pub w: Vec<String>,
    pub r: Option<String>,
    pub wtilde: Vec<String>,
    pub controls: Vec<String>,
    /// Column name, or `"running"` to cluster on running-variable values.
    pub cluster: Option<String>,
    pub delimiter: u8,
    pub max_levels: usize,
}

impl Schema {
    pub fn new(outcome: &str, running: &str, treatment: TreatmentColumns) -> Self {
        Schema {
            outcome: outcome.into(),
            running: running.into(),
            cutoff: 0.0,
            treatment,
            w: Vec::new(),
            r: None,
            wtilde: Vec::new(),
            controls: Vec::new(),
            cluster: None,
            delimiter: b',',
            max_levels: DEFAULT_MAX_LEVELS,
        }
    }
}

/// A dataset together with the model-specific columns named in the schema.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    /// Treatment levels when the treatment came as one integer column.
    pub levels: Option<Vec<i64>>,
    pub strata: Option<(Vec<usize>, Vec<String>)>,
    pub wtilde: Option<(DMatrix<f64>, Vec<String>)>,
    pub cluster_by: ClusterBy,
}

impl Loaded {
    pub fn model(&self, kind: ModelKind) -> Result<ModelSpec, InputError> {
        match kind {
            ModelKind::Homogeneous => Ok(ModelSpec::Homogeneous),
            ModelKind::Conditional => {
                let (strata, labels) = self
                    .strata
                    .clone()
                    .ok_or_else(|| InputError::Schema("model 'conditional' needs an R column (--r)".into()))?;
                Ok(ModelSpec::ConditionalOnR { strata, labels })
            }
            ModelKind::Parametric => {
                let (w_tilde, names) = self.wtilde.clone().ok_or_else(|| {
                    InputError::Schema("model 'parametric' needs at least one w-tilde column (--wtilde)".into())
                })?;
                Ok(ModelSpec::Parametric { w_tilde, names })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Homogeneous,
    Conditional,
    Parametric,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn column(&self, role: &'static str, name: &str) -> Result<usize, InputError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| InputError::MissingColumn {
                role,
                name: name.to_string(),
            })
    }

    fn strings(&self, role: &'static str, name: &str) -> Result<Vec<&str>, InputError> {
        let c = self.column(role, name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v = r[c].trim();
                if is_missing(v) {
                    Err(InputError::MissingValue {
                        column: name.to_string(),
                        row: i + 1,
                    })
                } else {
                    Ok(v)
                }
            })
            .collect()
    }

    fn numbers(&self, role: &'static str, name: &str) -> Result<Vec<f64>, InputError> {
        self.strings(role, name)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| parse_number(v, name, i + 1))
            .collect()
    }
}

fn is_missing(v: &str) -> bool {
    v.is_empty() || matches!(v, "NA" | "na" | "NaN" | "nan" | "." | "null" | "NULL")
}

fn parse_number(v: &str, column: &str, row: usize) -> Result<f64, InputError> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err(InputError::Parse {
            column: column.to_string(),
            row,
            value: v.to_string(),
        }),
    }
}

fn read_table<R: Read>(reader: R, delimiter: u8) -> Result<Table, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(InputError::Empty);
    }
    Ok(Table { headers, rows })
}

/// Reads a CSV file according to `schema`.
pub fn load_table(path: &Path, schema: &Schema) -> Result<Loaded, InputError> {
    let file = File::open(path).map_err(|source| InputError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, schema)
}

/// [`load_table`] on any reader.
pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Loaded, InputError> {
    let table = read_table(reader, schema.delimiter)?;
    let n = table.rows.len();
    let y = table.numbers("outcome", &schema.outcome)?;
    let z = table.numbers("running", &schema.running)?;

    let (x, names, levels) = match &schema.treatment {
        TreatmentColumns::Levels { column, levels } => {
            let raw = table.numbers("treatment", column)?;
            let mut t = Vec::with_capacity(n);
            for (i, v) in raw.iter().enumerate() {
                if v.fract() != 0.0 || v.abs() > 2f64.powi(53) {
                    return Err(InputError::NotInteger {
                        column: column.clone(),
                        row: i + 1,
                        value: *v,
                    });
                }
                t.push(*v as i64);
            }
            let levels = match levels {
                Some(l) => l.clone(),
                None => t.iter().copied().collect::<BTreeSet<_>>().into_iter().collect(),
            };
            let x = encode_treatment(&t, &levels).map_err(|e| match e {
                rdmulti_core::Error::UnknownTreatmentLevel { row, value } => InputError::Schema(format!(
                    "treatment value {value} at data row {} is not one of the levels {levels:?}",
                    row + 1
                )),
                rdmulti_core::Error::InvalidLevels => InputError::Schema(format!(
                    "treatment levels {levels:?} must be strictly increasing with at least two entries"
                )),
                other => other.into(),
            })?;
            let names = levels[1..].iter().map(|l| format!("{column}>={l}")).collect();
            (x, names, Some(levels))
        }
        TreatmentColumns::Indicators(cols) => {
            if cols.is_empty() {
                return Err(InputError::Schema("no treatment indicator columns given".into()));
            }
            let mut x = DMatrix::zeros(n, cols.len());
            for (j, c) in cols.iter().enumerate() {
                for (i, v) in table.numbers("treatment", c)?.into_iter().enumerate() {
                    if v != 0.0 && v != 1.0 {
                        return Err(InputError::NotBinary {
                            column: c.clone(),
                            row: i + 1,
                            value: v,
                        });
                    }
                    x[(i, j)] = v;
                }
            }
            for i in 0..n {
                for j in 1..cols.len() {
                    if x[(i, j)] > x[(i, j - 1)] {
                        return Err(InputError::NotCumulative {
                            row: i + 1,
                            prev: j,
                            next: j + 1,
                        });
                    }
                }
            }
            (x, cols.clone(), None)
        }
    };

    let cells = if schema.w.is_empty() {
        CellEncoding::single(n)
    } else {
        let cols = schema
            .w
            .iter()
            .map(|c| table.strings("covariate", c))
            .collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&[&str]> = cols.iter().map(Vec::as_slice).collect();
        encode_cells(&refs, schema.max_levels)?
    };

    let mut ds = Dataset::new(y, &z, schema.cutoff, x, cells)?.with_treatment_names(names)?;

    let cluster_by = match schema.cluster.as_deref() {
        None => ClusterBy::Observation,
        Some("running") if table.column("cluster", "running").is_err() => ClusterBy::Running,
        Some(name) => {
            let (keys, _) = categorical(&table.strings("cluster", name)?);
            ds = ds.with_clusters(keys.into_iter().map(|k| k as u64).collect())?;
            ClusterBy::Column
        }
    };

    if !schema.controls.is_empty() {
        let (m, names) = controls(&table, &schema.controls)?;
        ds = ds.with_extra_controls(m, names)?;
    }

    let strata = match &schema.r {
        Some(r) => Some(categorical(&table.strings("R", r)?)),
        None => None,
    };

    let wtilde = if schema.wtilde.is_empty() {
        None
    } else {
        let mut m = DMatrix::zeros(n, schema.wtilde.len());
        for (k, c) in schema.wtilde.iter().enumerate() {
            for (i, v) in table.numbers("w-tilde", c)?.into_iter().enumerate() {
                m[(i, k)] = v;
            }
        }
        Some((m, schema.wtilde.clone()))
    };

    Ok(Loaded {
        dataset: ds,
        levels,
        strata,
        wtilde,
        cluster_by,
    })
}

/// Indices into the sorted distinct values.
fn categorical(values: &[&str]) -> (Vec<usize>, Vec<String>) {
    let labels: BTreeMap<&str, usize> = values
        .iter()
        .copied()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    let index = values.iter().map(|v| labels[v]).collect();
    (index, labels.keys().map(|s| s.to_string()).collect())
}

/// Numeric columns enter as they are; any other column becomes dummies for
/// all but its smallest level.
fn controls(table: &Table, names: &[String]) -> Result<(DMatrix<f64>, Vec<String>), InputError> {
    let n = table.rows.len();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut out_names = Vec::new();
    for name in names {
        let raw = table.strings("control", name)?;
        let parsed: Option<Vec<f64>> = raw
            .iter()
            .map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect();
        match parsed {
            Some(v) => {
                cols.push(v);
                out_names.push(name.clone());
            }
            None => {
                let (index, labels) = categorical(&raw);
                for (l, label) in labels.iter().enumerate().skip(1) {
                    cols.push(index.iter().map(|&i| if i == l { 1.0 } else { 0.0 }).collect());
                    out_names.push(format!("{name}[{label}]"));
                }
            }
        }
    }
    Ok((DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]), out_names))
}
