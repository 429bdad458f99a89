//! Ordinary least squares with coefficient inference, and bidirectional
//! stepwise selection over log-transformed and dummy-encoded features.
//!
//! Models remember how each term was derived from the raw columns, so a model
//! fitted on `ln(Effort)` predicts effort in person-hours directly from an
//! untransformed row (plain `exp` back-transform, no smearing correction).

use std::collections::{BTreeMap, BTreeSet};

use crate::dataset::{Dataset, Kind, Transform, Value};
use crate::error::{Error, Result};
use crate::special;

/// How a model term is computed from a raw row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TermSource {
    Raw(String),
    Log(String),
    Dummy { column: String, level: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub name: String,
    pub source: TermSource,
}

impl Term {
    pub fn raw(column: &str) -> Self {
        Term {
            name: column.to_string(),
            source: TermSource::Raw(column.to_string()),
        }
    }

    pub fn log(column: &str) -> Self {
        Term {
            name: format!("ln({column})"),
            source: TermSource::Log(column.to_string()),
        }
    }

    pub fn dummy(column: &str, level: &str) -> Self {
        Term {
            name: format!("{column}_{level}"),
            source: TermSource::Dummy {
                column: column.to_string(),
                level: level.to_string(),
            },
        }
    }

    /// Value of the term for one row of a raw (untransformed) dataset.
    fn evaluate(&self, ds: &Dataset, row: usize) -> Result<f64> {
        let missing = |c: &str| Error::invalid_data(format!("missing `{c}` at row {row}"));
        match &self.source {
            TermSource::Raw(c) => match ds.value(c, row)? {
                Value::Num(x) => Ok(x),
                Value::Missing => Err(missing(c)),
                Value::Cat(_) => Err(Error::ColumnKind {
                    column: c.clone(),
                    expected: "numeric",
                    found: "categorical",
                }),
            },
            TermSource::Log(c) => match ds.value(c, row)? {
                Value::Num(x) if x > 0.0 => Ok(x.ln()),
                Value::Num(x) => Err(Error::invalid_data(format!(
                    "`{c}` = {x} at row {row} cannot be log-transformed"
                ))),
                Value::Missing => Err(missing(c)),
                Value::Cat(_) => Err(Error::ColumnKind {
                    column: c.clone(),
                    expected: "numeric",
                    found: "categorical",
                }),
            },
            TermSource::Dummy { column, level } => match ds.value(column, row)? {
                Value::Cat(l) => Ok(if l == level { 1.0 } else { 0.0 }),
                Value::Num(x) => Ok(if format_level(x) == *level { 1.0 } else { 0.0 }),
                Value::Missing => Err(missing(column)),
            },
        }
    }
}

fn format_level(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub intercept: Coefficient,
    /// One per term, in term order.
    pub coefficients: Vec<Coefficient>,
    pub terms: Vec<Term>,
    pub r_squared: f64,
    pub sse: f64,
    pub n: usize,
    pub df_residual: usize,
    /// The response is ln(target); predictions are exponentiated.
    pub log_response: bool,
    /// Partial-F p-value of each selected unit (a single term or a dummy
    /// group), filled in by stepwise selection.
    pub unit_p_values: Vec<(String, f64)>,
    /// Set when stepwise selection admitted no term.
    pub no_terms_selected: bool,
}

impl LinearModel {
    /// A model with known coefficients and no inference statistics.
    pub fn from_coefficients(intercept: f64, terms: Vec<(Term, f64)>, log_response: bool) -> Self {
        let coef = |name: &str, estimate: f64| Coefficient {
            name: name.to_string(),
            estimate,
            std_error: f64::NAN,
            t_value: f64::NAN,
            p_value: f64::NAN,
        };
        LinearModel {
            intercept: coef("(Intercept)", intercept),
            coefficients: terms.iter().map(|(t, b)| coef(&t.name, *b)).collect(),
            terms: terms.into_iter().map(|(t, _)| t).collect(),
            r_squared: f64::NAN,
            sse: f64::NAN,
            n: 0,
            df_residual: 0,
            log_response,
            unit_p_values: Vec::new(),
            no_terms_selected: false,
        }
    }

    pub fn coefficient(&self, term: &str) -> Option<f64> {
        self.coefficients
            .iter()
            .find(|c| c.name == term)
            .map(|c| c.estimate)
    }

    pub fn term_names(&self) -> Vec<&str> {
        self.terms.iter().map(|t| t.name.as_str()).collect()
    }

    /// Linear predictor for already-transformed term values.
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept.estimate
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(c, v)| c.estimate * v)
                .sum::<f64>()
    }

    /// Effort for one raw row: the linear predictor, exponentiated when the
    /// response is on the log scale.
    pub fn predict_effort(&self, ds: &Dataset, row: usize) -> Result<f64> {
        let x = self
            .terms
            .iter()
            .map(|t| t.evaluate(ds, row))
            .collect::<Result<Vec<_>>>()?;
        let y = self.linear_predictor(&x);
        Ok(if self.log_response { y.exp() } else { y })
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        (0..ds.n_rows())
            .map(|r| self.predict_effort(ds, r))
            .collect()
    }
}

/// Column-major dense matrix used by the QR solver.
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[c * self.rows + r]
    }

    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[c * self.rows + r]
    }
}

struct LeastSquares {
    beta: Vec<f64>,
    /// Upper-triangular R (cols × cols, row-major).
    r: Vec<f64>,
}

/// Householder QR least squares of `y` on the columns of `x`. Fails when a
/// column is (numerically) a combination of the previous ones.
fn householder_lstsq(mut a: Matrix, y: &[f64]) -> Result<LeastSquares> {
    let (m, n) = (a.rows, a.cols);
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| a.at(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut qty = y.to_vec();
    for j in 0..n {
        let norm = (j..m).map(|i| a.at(i, j).powi(2)).sum::<f64>().sqrt();
        if norm <= 1e-10 * norms[j].max(f64::MIN_POSITIVE) {
            return Err(Error::numeric(format!(
                "design matrix is rank deficient (column {j})"
            )));
        }
        let alpha = if a.at(j, j) > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = (j..m).map(|i| a.at(i, j)).collect();
        v[0] -= alpha;
        let vtv: f64 = v.iter().map(|x| x * x).sum();
        if vtv > 0.0 {
            for c in j..n {
                let dot: f64 = v
                    .iter()
                    .enumerate()
                    .map(|(k, vk)| vk * a.at(j + k, c))
                    .sum();
                let f = 2.0 * dot / vtv;
                for (k, vk) in v.iter().enumerate() {
                    *a.at_mut(j + k, c) -= f * vk;
                }
            }
            let dot: f64 = v.iter().enumerate().map(|(k, vk)| vk * qty[j + k]).sum();
            let f = 2.0 * dot / vtv;
            for (k, vk) in v.iter().enumerate() {
                qty[j + k] -= f * vk;
            }
        }
    }
    let mut r = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            r[i * n + j] = a.at(i, j);
        }
    }
    let mut beta = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| r[i * n + j] * beta[j]).sum();
        beta[i] = (qty[i] - s) / r[i * n + i];
    }
    Ok(LeastSquares { beta, r })
}

/// Diagonal of (RᵀR)⁻¹ = R⁻¹R⁻ᵀ.
fn inverse_gram_diagonal(r: &[f64], n: usize) -> Vec<f64> {
    // Columns of R⁻¹ by back substitution on unit vectors.
    let mut rinv = vec![0.0; n * n];
    for col in 0..n {
        for i in (0..=col).rev() {
            let rhs = if i == col { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=col)
                .map(|j| r[i * n + j] * rinv[j * n + col])
                .sum();
            rinv[i * n + col] = (rhs - s) / r[i * n + i];
        }
    }
    (0..n)
        .map(|i| (0..n).map(|j| rinv[i * n + j].powi(2)).sum())
        .collect()
}

fn inference(name: &str, estimate: f64, var: f64, s2: f64, df: f64) -> Coefficient {
    let std_error = (s2 * var).sqrt();
    let (t_value, p_value) = if std_error > 0.0 {
        let t = estimate / std_error;
        (t, special::student_t_two_sided(t, df))
    } else if estimate == 0.0 {
        (0.0, 1.0)
    } else {
        (estimate.signum() * f64::INFINITY, 0.0)
    };
    Coefficient {
        name: name.to_string(),
        estimate,
        std_error,
        t_value,
        p_value,
    }
}

/// OLS of `y` on an intercept plus one column per term.
pub fn fit_ols(terms: &[Term], columns: &[Vec<f64>], y: &[f64]) -> Result<LinearModel> {
    let n = y.len();
    let k = terms.len();
    if columns.len() != k {
        return Err(Error::invalid_param(format!(
            "{} columns for {k} terms",
            columns.len()
        )));
    }
    if let Some(c) = columns.iter().find(|c| c.len() != n) {
        return Err(Error::invalid_param(format!(
            "column of length {} for {n} observations",
            c.len()
        )));
    }
    if n <= k + 1 {
        return Err(Error::numeric(format!(
            "{n} observations cannot support {k} terms plus an intercept"
        )));
    }
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    if sst == 0.0 {
        return Err(Error::numeric(
            "response is constant (zero total sum of squares)",
        ));
    }
    let mut data = vec![1.0; n];
    for c in columns {
        data.extend_from_slice(c);
    }
    let ls = householder_lstsq(
        Matrix {
            rows: n,
            cols: k + 1,
            data,
        },
        y,
    )?;
    let fitted: Vec<f64> = (0..n)
        .map(|i| ls.beta[0] + (0..k).map(|j| ls.beta[j + 1] * columns[j][i]).sum::<f64>())
        .collect();
    let sse: f64 = y.iter().zip(&fitted).map(|(a, f)| (a - f).powi(2)).sum();
    let df = n - k - 1;
    let s2 = sse / df as f64;
    let diag = inverse_gram_diagonal(&ls.r, k + 1);
    let intercept = inference("(Intercept)", ls.beta[0], diag[0], s2, df as f64);
    let coefficients = terms
        .iter()
        .enumerate()
        .map(|(j, t)| inference(&t.name, ls.beta[j + 1], diag[j + 1], s2, df as f64))
        .collect();
    Ok(LinearModel {
        intercept,
        coefficients,
        terms: terms.to_vec(),
        r_squared: (1.0 - sse / sst).clamp(0.0, 1.0),
        sse,
        n,
        df_residual: df,
        log_response: false,
        unit_p_values: Vec::new(),
        no_terms_selected: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepwiseParams {
    /// Significance level for both entry and removal.
    pub alpha: f64,
}

impl Default for StepwiseParams {
    fn default() -> Self {
        StepwiseParams { alpha: 0.05 }
    }
}

/// A stepwise candidate: a single term or a dummy group moving as one.
#[derive(Debug, Clone)]
struct Unit {
    name: String,
    terms: Vec<(Term, Vec<f64>)>,
}

fn candidate_units(ds: &Dataset) -> Result<Vec<Unit>> {
    let schema = ds.schema();
    let mut dummies: BTreeMap<&str, (String, String)> = BTreeMap::new();
    for t in schema.transforms() {
        if let Transform::Dummy {
            source,
            level,
            column,
        } = t
        {
            dummies.insert(column.as_str(), (source.clone(), level.clone()));
        }
    }
    let mut units: Vec<Unit> = Vec::new();
    let mut group_of: BTreeMap<String, usize> = BTreeMap::new();
    for name in schema.predictors() {
        if schema.kind_of(&name) == Some(Kind::Categorical) {
            return Err(Error::invalid_param(format!(
                "categorical column `{name}` must be dummy-encoded before regression"
            )));
        }
        let values = ds.numeric(&name)?;
        match dummies.get(name.as_str()) {
            Some((source, level)) => {
                let term = Term::dummy(source, level);
                match group_of.get(source) {
                    Some(&u) => units[u].terms.push((term, values)),
                    None => {
                        group_of.insert(source.clone(), units.len());
                        units.push(Unit {
                            name: source.clone(),
                            terms: vec![(term, values)],
                        });
                    }
                }
            }
            None => {
                let term = if schema.is_log_scaled(&name) {
                    Term::log(&name)
                } else {
                    Term::raw(&name)
                };
                units.push(Unit {
                    name: term.name.clone(),
                    terms: vec![(term, values)],
                });
            }
        }
    }
    Ok(units)
}

fn fit_units(units: &[Unit], set: &[usize], y: &[f64]) -> Result<LinearModel> {
    let (terms, cols): (Vec<Term>, Vec<Vec<f64>>) = set
        .iter()
        .flat_map(|&u| units[u].terms.iter().cloned())
        .unzip();
    fit_ols(&terms, &cols, y)
}

/// p-value of the partial F test of `full` against `reduced`, which drops
/// `q` terms.
fn partial_f_p(reduced_sse: f64, full: &LinearModel, q: usize) -> f64 {
    let df = full.df_residual as f64;
    let gain = (reduced_sse - full.sse).max(0.0);
    if full.sse <= 0.0 {
        return if gain > 0.0 { 0.0 } else { 1.0 };
    }
    let f = (gain / q as f64) / (full.sse / df);
    special::f_sf(f, q as f64, df)
}

fn sse_without(units: &[Unit], set: &[usize], drop: usize, y: &[f64]) -> Result<f64> {
    let rest: Vec<usize> = set.iter().copied().filter(|&u| u != drop).collect();
    if rest.is_empty() {
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        return Ok(y.iter().map(|v| (v - mean).powi(2)).sum());
    }
    Ok(fit_units(units, &rest, y)?.sse)
}

fn unit_p(units: &[Unit], set: &[usize], u: usize, full: &LinearModel, y: &[f64]) -> Result<f64> {
    let reduced = sse_without(units, set, u, y)?;
    Ok(partial_f_p(reduced, full, units[u].terms.len()))
}

/// Bidirectional stepwise selection on a dataset whose categorical
/// predictors are already dummy-encoded. Dummy columns from the same source
/// enter and leave together, judged by a partial F test.
pub fn stepwise(ds: &Dataset, params: &StepwiseParams) -> Result<LinearModel> {
    if !(params.alpha > 0.0 && params.alpha < 1.0) {
        return Err(Error::invalid_param("alpha must lie in (0, 1)"));
    }
    let y = ds.target()?;
    let units = candidate_units(ds)?;
    let mut included: Vec<usize> = Vec::new();
    let mut seen: BTreeSet<Vec<usize>> = BTreeSet::new();
    seen.insert(Vec::new());

    loop {
        let mut changed = false;

        let mut best: Option<(usize, f64)> = None;
        for u in (0..units.len()).filter(|u| !included.contains(u)) {
            let mut set = included.clone();
            set.push(u);
            let Ok(full) = fit_units(&units, &set, &y) else {
                continue;
            };
            if full.df_residual == 0 {
                continue;
            }
            let p = unit_p(&units, &set, u, &full, &y)?;
            if best.is_none_or(|(_, bp)| p < bp) {
                best = Some((u, p));
            }
        }
        if let Some((u, p)) = best {
            if p < params.alpha {
                included.push(u);
                changed = true;
            }
        }

        while !included.is_empty() {
            let full = fit_units(&units, &included, &y)?;
            let mut worst: Option<(usize, f64)> = None;
            for &u in &included {
                let p = unit_p(&units, &included, u, &full, &y)?;
                if worst.is_none_or(|(_, wp)| p > wp) {
                    worst = Some((u, p));
                }
            }
            match worst {
                Some((u, p)) if p >= params.alpha => {
                    included.retain(|&x| x != u);
                    changed = true;
                }
                _ => break,
            }
        }

        let mut key = included.clone();
        key.sort_unstable();
        if !changed || !seen.insert(key) {
            break;
        }
    }

    included.sort_unstable();
    let mut model = if included.is_empty() {
        fit_ols(&[], &[], &y)?
    } else {
        fit_units(&units, &included, &y)?
    };
    model.unit_p_values = included
        .iter()
        .map(|&u| {
            Ok((
                units[u].name.clone(),
                unit_p(&units, &included, u, &model, &y)?,
            ))
        })
        .collect::<Result<_>>()?;
    model.no_terms_selected = included.is_empty();
    model.log_response = ds.schema().is_log_scaled(ds.schema().target());
    Ok(model)
}

/// Log-linear regression fitted on raw data: log-transforms the listed
/// columns (normally the target and the size measure), dummy-encodes every
/// categorical predictor, then runs stepwise selection.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLinearPipeline {
    pub log_columns: Vec<String>,
    pub stepwise: StepwiseParams,
}

impl LogLinearPipeline {
    pub fn fit(&self, raw: &Dataset) -> Result<LinearModel> {
        let mut ds = raw.log_transform(&self.log_columns)?;
        let categorical: Vec<String> = ds
            .schema()
            .columns()
            .iter()
            .filter(|c| c.kind == Kind::Categorical)
            .map(|c| c.name.clone())
            .collect();
        for name in categorical {
            ds = match ds.dummy_encode(&name) {
                Ok(enc) => enc,
                // A single observed level carries no information here.
                Err(Error::InvalidData(_)) => ds.drop_columns(&[&name])?,
                Err(e) => return Err(e),
            };
        }
        stepwise(&ds, &self.stepwise)
    }
}
