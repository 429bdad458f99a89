//! CSV and plain-text renderings of descriptive statistics, model metrics,
//! pairwise U tests and fitted models.
//!
//! CSV numbers are written in Rust's shortest round-trip form, so reading a
//! file back reproduces the written values exactly. Human tables round to two
//! decimals and show PRED as a percentage.

use std::fmt::Write as _;
use std::io::{Read, Write};

use crate::dataset::DescriptiveStats;
use crate::error::{Error, Result};
use crate::eval::{Comparison, EvalReport, UTestMethod};
use crate::forest::Forest;
use crate::linreg::LinearModel;

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub model: String,
    pub dataset: String,
    pub mmre: f64,
    pub mdmre: f64,
    pub pred: f64,
    pub pred_level: f64,
    pub median_abs_residual: f64,
    pub n: usize,
    pub seed: u64,
}

impl MetricRow {
    pub fn from_report(model: &str, dataset: &str, report: &EvalReport, seed: u64) -> Self {
        MetricRow {
            model: model.to_string(),
            dataset: dataset.to_string(),
            mmre: report.mmre,
            mdmre: report.mdmre,
            pred: report.pred,
            pred_level: report.pred_level,
            median_abs_residual: report.median_abs_residual,
            n: report.n,
            seed,
        }
    }
}

/// `pred25` for a level of 0.25.
pub fn pred_column(level: f64) -> String {
    format!("pred{}", level * 100.0)
}

fn pred_label(level: f64) -> String {
    format!("PRED({})", level * 100.0)
}

fn csv_error(e: csv::Error) -> Error {
    Error::Csv(e)
}

fn parse_field<T: std::str::FromStr>(
    record: &csv::StringRecord,
    i: usize,
    name: &str,
) -> Result<T> {
    let raw = record.get(i).unwrap_or("");
    raw.parse().map_err(|_| Error::MalformedCell {
        row: record.position().map_or(0, |p| p.line() as usize),
        column: name.to_string(),
        value: raw.to_string(),
    })
}

/// Writes metric rows; all rows must share one PRED level.
pub fn write_metrics_csv<W: Write>(rows: &[MetricRow], out: W) -> Result<()> {
    let level = rows
        .first()
        .map_or(EvalReport::DEFAULT_PRED_LEVEL, |r| r.pred_level);
    if rows.iter().any(|r| r.pred_level != level) {
        return Err(Error::invalid_param("metric rows mix PRED levels"));
    }
    let mut w = csv::Writer::from_writer(out);
    let pred = pred_column(level);
    w.write_record([
        "model",
        "dataset",
        "mmre",
        "mdmre",
        pred.as_str(),
        "median_abs_residual",
        "n",
        "seed",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            r.dataset.clone(),
            r.mmre.to_string(),
            r.mdmre.to_string(),
            r.pred.to_string(),
            r.median_abs_residual.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<metrics csv>".into(),
        source: e,
    })
}

pub fn read_metrics_csv<R: Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    let names: Vec<&str> = header.iter().collect();
    let level = match names.as_slice() {
        ["model", "dataset", "mmre", "mdmre", pred, "median_abs_residual", "n", "seed"] => pred
            .strip_prefix("pred")
            .and_then(|p| p.parse::<f64>().ok())
            .map(|p| p / 100.0),
        _ => None,
    }
    .ok_or_else(|| Error::Schema(format!("unexpected metrics header `{}`", names.join(","))))?;
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            Ok(MetricRow {
                model: parse_field(&rec, 0, "model")?,
                dataset: parse_field(&rec, 1, "dataset")?,
                mmre: parse_field(&rec, 2, "mmre")?,
                mdmre: parse_field(&rec, 3, "mdmre")?,
                pred: parse_field(&rec, 4, "pred")?,
                pred_level: level,
                median_abs_residual: parse_field(&rec, 5, "median_abs_residual")?,
                n: parse_field(&rec, 6, "n")?,
                seed: parse_field(&rec, 7, "seed")?,
            })
        })
        .collect()
}

/// One line of the U-test CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct UTestRow {
    pub model_a: String,
    pub model_b: String,
    pub u: f64,
    pub p: f64,
    pub method: UTestMethod,
}

impl From<&Comparison> for UTestRow {
    fn from(c: &Comparison) -> Self {
        UTestRow {
            model_a: c.model_a.clone(),
            model_b: c.model_b.clone(),
            u: c.result.u,
            p: c.result.p_two_sided,
            method: c.result.method,
        }
    }
}

pub fn write_utest_csv<W: Write>(rows: &[UTestRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model_a", "model_b", "u", "p", "method"])
        .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.model_a.clone(),
            r.model_b.clone(),
            r.u.to_string(),
            r.p.to_string(),
            r.method.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<u-test csv>".into(),
        source: e,
    })
}

pub fn read_utest_csv<R: Read>(input: R) -> Result<Vec<UTestRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_error)?.clone();
    if header.iter().collect::<Vec<_>>() != ["model_a", "model_b", "u", "p", "method"] {
        return Err(Error::Schema(format!(
            "unexpected U-test header `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.records()
        .map(|rec| {
            let rec = rec.map_err(csv_error)?;
            let method = match rec.get(4).unwrap_or("") {
                "exact" => UTestMethod::Exact,
                "normal" => UTestMethod::NormalApproximation,
                other => {
                    return Err(Error::MalformedCell {
                        row: rec.position().map_or(0, |p| p.line() as usize),
                        column: "method".into(),
                        value: other.into(),
                    })
                }
            };
            Ok(UTestRow {
                model_a: parse_field(&rec, 0, "model_a")?,
                model_b: parse_field(&rec, 1, "model_b")?,
                u: parse_field(&rec, 2, "u")?,
                p: parse_field(&rec, 3, "p")?,
                method,
            })
        })
        .collect()
}

fn opt2(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

/// Descriptive statistics of the target, one row per dataset.
pub fn table_i(rows: &[(String, DescriptiveStats)]) -> String {
    let width = rows
        .iter()
        .map(|(n, _)| n.len() + 2)
        .max()
        .unwrap_or(0)
        .max(10);
    let mut s = String::from("Dataset characteristics (effort, person-hours)\n");
    let _ = writeln!(
        s,
        "{:<width$}{:>6}{:>12}{:>12}{:>12}{:>12}{:>10}{:>10}",
        "Dataset", "N", "Min", "Max", "Mean", "Std", "Skew", "Kurt"
    );
    for (name, st) in rows {
        let _ = writeln!(
            s,
            "{:<width$}{:>6}{:>12.2}{:>12.2}{:>12.2}{:>12.2}{:>10.2}{:>10}",
            name,
            st.n,
            st.min,
            st.max,
            st.mean,
            st.std,
            st.skewness,
            opt2(st.kurtosis)
        );
    }
    s
}

pub fn stats_csv<W: Write>(rows: &[(String, DescriptiveStats)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "dataset", "n", "min", "max", "mean", "std", "skewness", "kurtosis",
    ])
    .map_err(csv_error)?;
    for (name, st) in rows {
        w.write_record([
            name.clone(),
            st.n.to_string(),
            st.min.to_string(),
            st.max.to_string(),
            st.mean.to_string(),
            st.std.to_string(),
            st.skewness.to_string(),
            st.kurtosis.map_or_else(String::new, |k| k.to_string()),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<stats csv>".into(),
        source: e,
    })
}

/// Criteria as rows and models as columns.
pub fn table_ii(title: &str, columns: &[(String, EvalReport)]) -> String {
    let level = columns
        .first()
        .map_or(EvalReport::DEFAULT_PRED_LEVEL, |(_, r)| r.pred_level);
    let width = columns
        .iter()
        .map(|(n, _)| n.len() + 2)
        .max()
        .unwrap_or(0)
        .max(10);
    let mut s = format!("{title}\n");
    let _ = write!(s, "{:<22}", "Criterion");
    for (name, _) in columns {
        let _ = write!(s, "{name:>width$}");
    }
    s.push('\n');
    let mut line = |label: &str, f: &dyn Fn(&EvalReport) -> String| {
        let _ = write!(s, "{label:<22}");
        for (_, r) in columns {
            let _ = write!(s, "{:>width$}", f(r));
        }
        s.push('\n');
    };
    line("MMRE", &|r| format!("{:.2}", r.mmre));
    line("MdMRE", &|r| format!("{:.2}", r.mdmre));
    line(&pred_label(level), &|r| format!("{:.0}%", r.pred * 100.0));
    line("Median abs residual", &|r| {
        format!("{:.2}", r.median_abs_residual)
    });
    line("N", &|r| r.n.to_string());
    s
}

/// Upper-triangular matrix of two-sided p-values.
pub fn table_iii(title: &str, models: &[String], comparisons: &[Comparison]) -> String {
    let width = models.iter().map(|m| m.len() + 2).max().unwrap_or(0).max(8);
    let mut s = format!("{title}\n");
    let _ = write!(s, "{:<width$}", "");
    for m in models.iter().skip(1) {
        let _ = write!(s, "{m:>width$}");
    }
    s.push('\n');
    for (i, a) in models
        .iter()
        .enumerate()
        .take(models.len().saturating_sub(1))
    {
        let _ = write!(s, "{a:<width$}");
        for (j, b) in models.iter().enumerate().skip(1) {
            let cell = if j <= i {
                String::new()
            } else {
                comparisons
                    .iter()
                    .find(|c| {
                        (&c.model_a, &c.model_b) == (a, b) || (&c.model_a, &c.model_b) == (b, a)
                    })
                    .map_or_else(|| "-".into(), |c| format!("{:.2}", c.result.p_two_sided))
            };
            let _ = write!(s, "{cell:>width$}");
        }
        s.push('\n');
    }
    s
}

/// Coefficient table of a fitted regression.
pub fn coefficient_table(model: &LinearModel) -> String {
    let response = if model.log_response {
        "ln(effort)"
    } else {
        "effort"
    };
    let mut s = format!(
        "Stepwise regression on {response} (n = {}, R^2 = {:.3})\n",
        model.n, model.r_squared
    );
    if model.no_terms_selected {
        s.push_str("warning: no term reached significance; intercept-only model\n");
    }
    let width = model
        .coefficients
        .iter()
        .map(|c| c.name.len())
        .chain([11])
        .max()
        .unwrap_or(11)
        + 2;
    let _ = writeln!(
        s,
        "{:<width$}{:>12}{:>12}{:>10}{:>10}",
        "Term", "Estimate", "Std.Error", "t", "p"
    );
    for c in std::iter::once(&model.intercept).chain(&model.coefficients) {
        let _ = writeln!(
            s,
            "{:<width$}{:>12.4}{:>12.4}{:>10.2}{:>10.4}",
            c.name, c.estimate, c.std_error, c.t_value, c.p_value
        );
    }
    s
}

pub fn coefficients_csv<W: Write>(model: &LinearModel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["term", "estimate", "std_error", "t", "p"])
        .map_err(csv_error)?;
    for c in std::iter::once(&model.intercept).chain(&model.coefficients) {
        w.write_record([
            c.name.clone(),
            c.estimate.to_string(),
            c.std_error.to_string(),
            c.t_value.to_string(),
            c.p_value.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::Io {
        path: "<coefficient csv>".into(),
        source: e,
    })
}

pub fn forest_summary(forest: &Forest, oob: &EvalReport) -> String {
    format!(
        "forest: n_trees={} max_depth={} oob_mmre={:.2} oob_mdmre={:.2} oob_{}={:.0}%\n",
        forest.trees().len(),
        forest.max_depth(),
        oob.mmre,
        oob.mdmre,
        pred_column(oob.pred_level),
        oob.pred * 100.0
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{PredictionRecord, UTestResult};

    fn report() -> EvalReport {
        EvalReport::new(vec![
            PredictionRecord::new(100.0, 150.0),
            PredictionRecord::new(3.0, 1.0 / 3.0),
            PredictionRecord::new(7.1, 7.0),
        ])
        .unwrap()
    }

    #[test]
    fn metrics_round_trip_exactly() {
        let rows = vec![
            MetricRow::from_report("dtf", "desharnais", &report(), 7),
            MetricRow::from_report("dt, pruned", "x\"y", &report(), u64::MAX),
        ];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("model,dataset,mmre,mdmre,pred25,median_abs_residual,n,seed\n"));
        assert_eq!(read_metrics_csv(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn utest_round_trip_exactly() {
        let rows = vec![UTestRow {
            model_a: "dtf".into(),
            model_b: "dt".into(),
            u: 12.5,
            p: 0.1 + 0.2,
            method: UTestMethod::NormalApproximation,
        }];
        let mut buf = Vec::new();
        write_utest_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_utest_csv(buf.as_slice()).unwrap(), rows);
        assert!(read_utest_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn human_table_rounds_and_shows_percentages() {
        let t = table_ii("Model evaluation", &[("DTF".into(), report())]);
        assert!(t.contains("PRED(25)"));
        assert!(t.contains("33%"));
        let comps = vec![Comparison {
            model_a: "MLR".into(),
            model_b: "DT".into(),
            result: UTestResult {
                u: 3.0,
                p_two_sided: 0.4812,
                method: UTestMethod::Exact,
            },
        }];
        let t3 = table_iii("U test", &["MLR".into(), "DT".into()], &comps);
        assert!(t3.contains("0.48"));
    }
}
