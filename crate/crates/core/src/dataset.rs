//! Typed columnar datasets.
//!
//! A [`Dataset`] is a set of named columns, each either numeric or
//! categorical, plus a designated numeric target. Cells may be missing until
//! [`Dataset::drop_incomplete_rows`] removes the affected rows. Every
//! transform returns a new dataset and leaves its input untouched.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Cell tokens treated as missing values (compared case-insensitively).
pub const MISSING_TOKENS: [&str; 3] = ["", "?", "NA"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Numeric,
    Categorical,
}

impl Kind {
    fn as_str(self) -> &'static str {
        match self {
            Kind::Numeric => "numeric",
            Kind::Categorical => "categorical",
        }
    }
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: Kind,
}

/// Provenance of a derived column, kept so models can map raw inputs onto
/// the transformed space they were fitted in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transform {
    /// Column values are natural logarithms of the original values.
    Log { column: String },
    /// Column is a 0/1 indicator of `source == level`.
    Dummy {
        source: String,
        level: String,
        column: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<ColumnSpec>,
    target: String,
    transforms: Vec<Transform>,
}

impl Schema {
    pub fn new(columns: Vec<ColumnSpec>, target: impl Into<String>) -> Result<Self> {
        let target = target.into();
        let mut seen = BTreeSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        match columns.iter().find(|c| c.name == target) {
            None => return Err(Error::Schema(format!("target `{target}` is not a column"))),
            Some(c) if c.kind != Kind::Numeric => {
                return Err(Error::Schema(format!("target `{target}` must be numeric")))
            }
            Some(_) => {}
        }
        Ok(Schema {
            columns,
            target,
            transforms: Vec::new(),
        })
    }

    /// Parses the sidecar format: one `column = numeric|categorical` line per
    /// column, in column order, plus one `target = name` line. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        let mut target = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Schema(format!("line {}: expected `name = kind`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key == "target" {
                if target.replace(value.to_string()).is_some() {
                    return Err(Error::Schema("target given twice".into()));
                }
                continue;
            }
            let kind = match value.to_ascii_lowercase().as_str() {
                "numeric" => Kind::Numeric,
                "categorical" => Kind::Categorical,
                other => {
                    return Err(Error::Schema(format!(
                        "line {}: unknown kind `{other}`",
                        lineno + 1
                    )))
                }
            };
            columns.push(ColumnSpec {
                name: key.to_string(),
                kind,
            });
        }
        let target = target.ok_or_else(|| Error::Schema("no `target = ...` line".into()))?;
        Schema::new(columns, target)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Schema::parse(&text)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    pub fn transforms(&self) -> &[Transform] {
        &self.transforms
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn kind_of(&self, name: &str) -> Option<Kind> {
        self.index_of(name).map(|i| self.columns[i].kind)
    }

    /// Predictor names (every column except the target) in schema order.
    pub fn predictors(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.name != self.target)
            .map(|c| c.name.clone())
            .collect()
    }

    /// True when `column` holds log-scaled values.
    pub fn is_log_scaled(&self, column: &str) -> bool {
        self.transforms
            .iter()
            .any(|t| matches!(t, Transform::Log { column: c } if c == column))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Numeric(Vec<Option<f64>>),
    /// `codes` index into `levels`; levels are sorted numerically when every
    /// label parses as a number, lexically otherwise.
    Categorical {
        levels: Vec<String>,
        codes: Vec<Option<u32>>,
    },
}

impl Column {
    pub fn kind(&self) -> Kind {
        match self {
            Column::Numeric(_) => Kind::Numeric,
            Column::Categorical { .. } => Kind::Categorical,
        }
    }

    fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical { codes, .. } => codes.len(),
        }
    }

    fn is_missing(&self, row: usize) -> bool {
        match self {
            Column::Numeric(v) => v[row].is_none(),
            Column::Categorical { codes, .. } => codes[row].is_none(),
        }
    }

    fn select(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&r| v[r]).collect()),
            Column::Categorical { levels, codes } => Column::Categorical {
                levels: levels.clone(),
                codes: rows.iter().map(|&r| codes[r]).collect(),
            },
        }
    }

    /// Builds a categorical column from optional labels.
    pub fn categorical<S: AsRef<str>>(labels: &[Option<S>]) -> Column {
        let levels = sort_levels(
            labels
                .iter()
                .flatten()
                .map(|s| s.as_ref().to_string())
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect(),
        );
        let codes = labels
            .iter()
            .map(|l| {
                l.as_ref()
                    .map(|s| levels.iter().position(|x| x == s.as_ref()).unwrap() as u32)
            })
            .collect();
        Column::Categorical { levels, codes }
    }
}

fn sort_levels(mut levels: Vec<String>) -> Vec<String> {
    let numeric: Option<Vec<f64>> = levels.iter().map(|l| l.parse::<f64>().ok()).collect();
    match numeric {
        Some(_) => levels.sort_by(|a, b| {
            let (x, y) = (a.parse::<f64>().unwrap(), b.parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        }),
        None => levels.sort(),
    }
    levels
}

/// A single cell value as seen by models.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value<'a> {
    Num(f64),
    Cat(&'a str),
    Missing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn from_columns(schema: Schema, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.columns.len() {
            return Err(Error::Schema(format!(
                "{} columns supplied for a schema of {}",
                columns.len(),
                schema.columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, Column::len);
        for (spec, col) in schema.columns.iter().zip(&columns) {
            if col.kind() != spec.kind {
                return Err(Error::ColumnKind {
                    column: spec.name.clone(),
                    expected: spec.kind.as_str(),
                    found: col.kind().as_str(),
                });
            }
            if col.len() != n_rows {
                return Err(Error::invalid_data(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    spec.name,
                    col.len()
                )));
            }
            if let Column::Numeric(v) = col {
                if v.iter().flatten().any(|x| !x.is_finite()) {
                    return Err(Error::invalid_data(format!(
                        "column `{}` contains a non-finite value",
                        spec.name
                    )));
                }
            }
        }
        Ok(Dataset {
            schema,
            columns,
            n_rows,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.schema
            .index_of(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Values of a numeric column; errors if any cell is missing.
    pub fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        match self.column(name)? {
            Column::Numeric(v) => v
                .iter()
                .enumerate()
                .map(|(row, x)| {
                    x.ok_or_else(|| {
                        Error::invalid_data(format!("missing value in `{name}` at row {row}"))
                    })
                })
                .collect(),
            Column::Categorical { .. } => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "numeric",
                found: "categorical",
            }),
        }
    }

    pub fn target(&self) -> Result<Vec<f64>> {
        self.numeric(&self.schema.target)
    }

    pub fn value(&self, name: &str, row: usize) -> Result<Value<'_>> {
        Ok(match self.column(name)? {
            Column::Numeric(v) => v[row].map_or(Value::Missing, Value::Num),
            Column::Categorical { levels, codes } => {
                codes[row].map_or(Value::Missing, |c| Value::Cat(&levels[c as usize]))
            }
        })
    }

    /// Rows at the given indices, in the given order (duplicates allowed).
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn has_missing(&self) -> bool {
        (0..self.n_rows).any(|r| self.columns.iter().any(|c| c.is_missing(r)))
    }

    pub fn drop_incomplete_rows(&self) -> Dataset {
        let keep: Vec<usize> = (0..self.n_rows)
            .filter(|&r| !self.columns.iter().any(|c| c.is_missing(r)))
            .collect();
        self.select_rows(&keep)
    }

    /// Keeps the rows for which `pred` holds.
    pub fn filter_rows(&self, mut pred: impl FnMut(usize) -> bool) -> Dataset {
        let keep: Vec<usize> = (0..self.n_rows).filter(|&r| pred(r)).collect();
        self.select_rows(&keep)
    }

    pub fn drop_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        for n in names {
            let n = n.as_ref();
            if self.schema.index_of(n).is_none() {
                return Err(Error::UnknownColumn(n.to_string()));
            }
            if n == self.schema.target {
                return Err(Error::invalid_param(format!("cannot drop target `{n}`")));
            }
        }
        let dropped = |name: &str| names.iter().any(|n| n.as_ref() == name);
        let mut out = self.clone();
        let (specs, cols): (Vec<_>, Vec<_>) = self
            .schema
            .columns
            .iter()
            .cloned()
            .zip(self.columns.iter().cloned())
            .filter(|(s, _)| !dropped(&s.name))
            .unzip();
        out.schema.columns = specs;
        out.columns = cols;
        Ok(out)
    }

    pub fn rename_column(&self, from: &str, to: &str) -> Result<Dataset> {
        let idx = self
            .schema
            .index_of(from)
            .ok_or_else(|| Error::UnknownColumn(from.to_string()))?;
        if from == to {
            return Ok(self.clone());
        }
        if self.schema.index_of(to).is_some() {
            return Err(Error::Schema(format!("column `{to}` already exists")));
        }
        let mut out = self.clone();
        out.schema.columns[idx].name = to.to_string();
        if out.schema.target == from {
            out.schema.target = to.to_string();
        }
        Ok(out)
    }

    /// Replaces each named column by its natural logarithm.
    pub fn log_transform<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let mut out = self.clone();
        for n in names {
            let name = n.as_ref();
            let idx = self
                .schema
                .index_of(name)
                .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
            let Column::Numeric(values) = &mut out.columns[idx] else {
                return Err(Error::ColumnKind {
                    column: name.to_string(),
                    expected: "numeric",
                    found: "categorical",
                });
            };
            for (row, v) in values.iter_mut().enumerate() {
                if let Some(x) = v {
                    if *x <= 0.0 {
                        return Err(Error::invalid_data(format!(
                            "cannot take log of {x} in `{name}` at row {row}"
                        )));
                    }
                    *x = x.ln();
                }
            }
            out.schema.transforms.push(Transform::Log {
                column: name.to_string(),
            });
        }
        Ok(out)
    }

    /// Replaces a categorical column by L-1 indicator columns named
    /// `{name}_{level}`. The last observed level is the reference (all zeros).
    pub fn dummy_encode(&self, name: &str) -> Result<Dataset> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        let Column::Categorical { levels, codes } = &self.columns[idx] else {
            return Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "categorical",
                found: "numeric",
            });
        };
        let observed: BTreeSet<u32> = codes.iter().flatten().copied().collect();
        if observed.len() < 2 {
            return Err(Error::invalid_data(format!(
                "`{name}` has {} distinct level(s); dummy encoding needs at least 2",
                observed.len()
            )));
        }
        let observed: Vec<u32> = observed.into_iter().collect();
        let mut specs = Vec::new();
        let mut cols = Vec::new();
        let mut transforms = Vec::new();
        for &code in &observed[..observed.len() - 1] {
            let level = &levels[code as usize];
            let col_name = format!("{name}_{level}");
            if self.schema.index_of(&col_name).is_some() {
                return Err(Error::Schema(format!("column `{col_name}` already exists")));
            }
            specs.push(ColumnSpec {
                name: col_name.clone(),
                kind: Kind::Numeric,
            });
            cols.push(Column::Numeric(
                codes
                    .iter()
                    .map(|c| c.map(|c| if c == code { 1.0 } else { 0.0 }))
                    .collect(),
            ));
            transforms.push(Transform::Dummy {
                source: name.to_string(),
                level: level.clone(),
                column: col_name,
            });
        }
        let mut out = self.clone();
        out.schema.columns.splice(idx..=idx, specs);
        out.columns.splice(idx..=idx, cols);
        out.schema.transforms.extend(transforms);
        Ok(out)
    }

    /// Reinterprets a numeric column as categorical, labelling each level by
    /// its value (integers without a decimal point).
    pub fn to_categorical(&self, name: &str) -> Result<Dataset> {
        let idx = self
            .schema
            .index_of(name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))?;
        if name == self.schema.target {
            return Err(Error::invalid_param("target must stay numeric"));
        }
        let Column::Numeric(values) = &self.columns[idx] else {
            return Ok(self.clone());
        };
        let labels: Vec<Option<String>> = values
            .iter()
            .map(|v| {
                v.map(|x| {
                    if x.fract() == 0.0 && x.abs() < 1e15 {
                        format!("{}", x as i64)
                    } else {
                        format!("{x}")
                    }
                })
            })
            .collect();
        let mut out = self.clone();
        out.columns[idx] = Column::categorical(&labels);
        out.schema.columns[idx].kind = Kind::Categorical;
        Ok(out)
    }
}

/// Reads a CSV file whose header names the schema's columns (any order).
pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();

    let header_set: BTreeSet<&str> = header.iter().map(String::as_str).collect();
    let schema_set: BTreeSet<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
    if header_set.len() != header.len() {
        return Err(Error::Schema("duplicate names in CSV header".into()));
    }
    if header_set != schema_set {
        let missing: Vec<_> = schema_set.difference(&header_set).collect();
        let extra: Vec<_> = header_set.difference(&schema_set).collect();
        return Err(Error::Schema(format!(
            "CSV header does not match schema (missing: {missing:?}, unexpected: {extra:?})"
        )));
    }
    let positions: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| header.iter().position(|h| *h == c.name).unwrap())
        .collect();

    let mut numeric: Vec<Vec<Option<f64>>> = vec![Vec::new(); schema.columns.len()];
    let mut labels: Vec<Vec<Option<String>>> = vec![Vec::new(); schema.columns.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (ci, (spec, &pos)) in schema.columns.iter().zip(&positions).enumerate() {
            let cell = record.get(pos).unwrap_or("");
            let missing = MISSING_TOKENS.iter().any(|t| cell.eq_ignore_ascii_case(t));
            match spec.kind {
                Kind::Numeric => {
                    let v = if missing {
                        None
                    } else {
                        let x: f64 = cell.parse().map_err(|_| Error::MalformedCell {
                            row: row + 1,
                            column: spec.name.clone(),
                            value: cell.to_string(),
                        })?;
                        if !x.is_finite() {
                            return Err(Error::MalformedCell {
                                row: row + 1,
                                column: spec.name.clone(),
                                value: cell.to_string(),
                            });
                        }
                        Some(x)
                    };
                    numeric[ci].push(v);
                }
                Kind::Categorical => {
                    labels[ci].push((!missing).then(|| cell.to_string()));
                }
            }
        }
    }
    let columns = schema
        .columns
        .iter()
        .enumerate()
        .map(|(ci, spec)| match spec.kind {
            Kind::Numeric => Column::Numeric(std::mem::take(&mut numeric[ci])),
            Kind::Categorical => Column::categorical(&labels[ci]),
        })
        .collect();
    Dataset::from_columns(schema.clone(), columns)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescriptiveStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator).
    pub std: f64,
    /// Adjusted Fisher-Pearson skewness (G1).
    pub skewness: f64,
    /// Bias-corrected excess kurtosis (G2); needs at least four values.
    pub kurtosis: Option<f64>,
}

pub fn descriptive_stats(ds: &Dataset, name: &str) -> Result<DescriptiveStats> {
    summarize(&ds.numeric(name)?)
}

pub fn summarize(values: &[f64]) -> Result<DescriptiveStats> {
    let n = values.len();
    if n < 3 {
        return Err(Error::invalid_data(format!(
            "descriptive statistics need at least 3 values, got {n}"
        )));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in values {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    if m2 == 0.0 {
        return Err(Error::numeric(
            "zero variance: skewness and kurtosis undefined",
        ));
    }
    let var = m2 / (nf - 1.0);
    // Biased central moments.
    let (b2, b3, b4) = (m2 / nf, m3 / nf, m4 / nf);
    let g1 = b3 / b2.powf(1.5);
    let skewness = (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1;
    let kurtosis = (n >= 4).then(|| {
        let g2 = b4 / (b2 * b2) - 3.0;
        (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) * ((nf + 1.0) * g2 + 6.0)
    });
    Ok(DescriptiveStats {
        n,
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean,
        std: var.sqrt(),
        skewness,
        kurtosis,
    })
}
