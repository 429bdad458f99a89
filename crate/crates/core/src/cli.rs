//! The `effortcmp` batch runner: `stats`, `fit` and `compare` subcommands.
//!
//! Every number printed or written depends only on the inputs and the seed,
//! so repeated runs produce byte-identical output. Exit codes: 0 success,
//! 1 data error, 2 configuration error, 3 numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::cart;
use crate::dataset::{descriptive_stats, load_csv, Dataset, Schema};
use crate::error::{Error, Result};
use crate::eval::{compare_models, kfold_cv, CvConfig, EvalReport, PredictionRecord};
use crate::forest;
use crate::linreg::LogLinearPipeline;
use crate::models::{self, ModelConfig, ModelKind};
use crate::prepare::{check_positive_target, Pipeline};
use crate::report::{self, MetricRow, UTestRow};
use crate::rng;

#[derive(Debug, Parser)]
#[command(
    name = "effortcmp",
    version,
    about = "Compare effort estimation models by cross-validation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Descriptive statistics of the prepared effort column.
    Stats(SpecArgs),
    /// Fit each model on the whole prepared dataset and print its summary.
    Fit(SpecArgs),
    /// Cross-validate each model and compare them.
    Compare(SpecArgs),
}

#[derive(Debug, Args, Default)]
pub struct SpecArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Schema file (`name = numeric|categorical` lines and `target = name`).
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Preparation pipeline: desharnais, isbsg, none, or a list such as
    /// `incomplete,drop:Id,categorical:Language`.
    #[arg(long)]
    pub prepare: Option<String>,
    /// Comma-separated models from mlr, dt, dtf.
    #[arg(long)]
    pub models: Option<String>,
    /// Cross-validation folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Seed for every random stream.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving the text and CSV reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// MRE level for PRED.
    #[arg(long = "pred-threshold")]
    pub pred_threshold: Option<f64>,
    /// `key = value` file supplying any of the options above plus model
    /// parameters; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model parameter override, e.g. `dtf.n_trees=100`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub data: PathBuf,
    pub schema: PathBuf,
    pub pipeline: Pipeline,
    pub models: Vec<ModelKind>,
    pub k: usize,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub pred_threshold: f64,
    pub config: ModelConfig,
}

fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::invalid_param(format!(
                "{}:{}: expected `key = value`",
                path.display(),
                i + 1
            ))
        })?;
        out.insert(k.trim().replace('-', "_"), v.trim().to_string());
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid_param(format!("bad value `{value}` for `{key}`")))
}

impl ExperimentSpec {
    pub fn resolve(args: &SpecArgs) -> Result<Self> {
        let mut file = match &args.config {
            Some(p) => parse_config_file(p)?,
            None => BTreeMap::new(),
        };
        let relative = |v: String| -> PathBuf {
            let p = PathBuf::from(v);
            match (&args.config, p.is_relative()) {
                (Some(cfg), true) => cfg.parent().unwrap_or(Path::new("")).join(p),
                _ => p,
            }
        };
        // Experiment keys are taken out first; whatever remains in the file
        // is a model parameter.
        let mut take = |key: &str| file.remove(key);
        let file_data = take("data").map(relative);
        let file_schema = take("schema").map(relative);
        let file_prepare = take("prepare");
        let file_models = take("models");
        let file_k = take("k");
        let file_seed = take("seed");
        let file_out = take("out").map(relative);
        let file_pred = take("pred_threshold");

        let data = args
            .data
            .clone()
            .or(file_data)
            .ok_or_else(|| Error::invalid_param("--data is required"))?;
        let schema = args
            .schema
            .clone()
            .or(file_schema)
            .ok_or_else(|| Error::invalid_param("--schema is required"))?;
        let pipeline: Pipeline = args
            .prepare
            .clone()
            .or(file_prepare)
            .unwrap_or_default()
            .parse()?;
        let models = models::parse_models(
            &args
                .models
                .clone()
                .or(file_models)
                .unwrap_or_else(|| "mlr,dt,dtf".into()),
        )?;
        let k = match (args.k, file_k) {
            (Some(k), _) => k,
            (None, Some(v)) => parse_value("k", &v)?,
            (None, None) => 10,
        };
        let seed = match (args.seed, file_seed) {
            (Some(s), _) => Some(s),
            (None, Some(v)) => Some(parse_value("seed", &v)?),
            (None, None) => None,
        };
        let out = args.out.clone().or(file_out);
        let pred_threshold = match (args.pred_threshold, file_pred) {
            (Some(x), _) => x,
            (None, Some(v)) => parse_value("pred_threshold", &v)?,
            (None, None) => EvalReport::DEFAULT_PRED_LEVEL,
        };
        if !(pred_threshold >= 0.0 && pred_threshold.is_finite()) {
            return Err(Error::invalid_param(
                "--pred-threshold must be a nonnegative number",
            ));
        }
        let mut config = ModelConfig::default();
        for (key, value) in &file {
            config.set(key, value)?;
        }
        for kv in &args.set {
            let (key, value) = kv.split_once('=').ok_or_else(|| {
                Error::invalid_param(format!("--set expects KEY=VALUE, got `{kv}`"))
            })?;
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(ExperimentSpec {
            data,
            schema,
            pipeline,
            models,
            k,
            seed,
            out,
            pred_threshold,
            config,
        })
    }

    fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::invalid_param("--seed is required (no default seed is used)"))
    }

    pub fn dataset_name(&self) -> String {
        self.data
            .file_stem()
            .map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned())
    }

    /// Loads and prepares the dataset.
    pub fn load(&self) -> Result<Dataset> {
        let schema = Schema::from_file(&self.schema)?;
        let ds = self.pipeline.apply(&load_csv(&self.data, &schema)?)?;
        if ds.is_empty() {
            return Err(Error::invalid_data("no rows left after preparation"));
        }
        check_positive_target(&ds)?;
        Ok(ds)
    }
}

/// Text and CSV artefacts produced by one subcommand, in output order.
#[derive(Debug, Default)]
pub struct Output {
    pub text: String,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Output {
    fn add_text(&mut self, file: &str, text: String) {
        self.text.push_str(&text);
        self.text.push('\n');
        self.files.push((file.to_string(), text.into_bytes()));
    }

    fn add_file(&mut self, file: &str, bytes: Vec<u8>) {
        self.files.push((file.to_string(), bytes));
    }

    fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |path: PathBuf| move |e| Error::Io { path, source: e };
        fs::create_dir_all(dir).map_err(io(dir.to_path_buf()))?;
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(io(path.clone()))?;
        }
        Ok(())
    }
}

pub fn cmd_stats(spec: &ExperimentSpec) -> Result<Output> {
    let ds = spec.load()?;
    let stats = descriptive_stats(&ds, ds.schema().target())?;
    let rows = vec![(spec.dataset_name(), stats)];
    let mut out = Output::default();
    out.add_text("table1.txt", report::table_i(&rows));
    let mut csv = Vec::new();
    report::stats_csv(&rows, &mut csv)?;
    out.add_file("table1.csv", csv);
    Ok(out)
}

pub fn cmd_fit(spec: &ExperimentSpec) -> Result<Output> {
    let seed = spec.require_seed()?;
    let ds = spec.load()?;
    let mut out = Output::default();
    for &kind in &spec.models {
        match kind {
            ModelKind::Mlr => {
                let model = LogLinearPipeline {
                    log_columns: spec.pipeline.log_columns(&ds),
                    stepwise: spec.config.stepwise,
                }
                .fit(&ds)?;
                out.add_text("mlr_coefficients.txt", report::coefficient_table(&model));
                let mut csv = Vec::new();
                report::coefficients_csv(&model, &mut csv)?;
                out.add_file("mlr_coefficients.csv", csv);
            }
            ModelKind::Dt => {
                let tree =
                    cart::train_tree(&ds, &spec.config.tree, rng::derive_seed(seed, "fit-dt"))?;
                let text = format!(
                    "Regression tree ({} leaves, depth {})\n{tree}",
                    tree.n_leaves(),
                    tree.depth()
                );
                out.add_text("dt_tree.txt", text);
            }
            ModelKind::Dtf => {
                let params = spec
                    .config
                    .forest
                    .with_seed(rng::derive_seed(seed, "fit-dtf"));
                let f = forest::fit_forest(&ds, &params)?;
                let oob = f.oob_report_at(&ds, spec.pred_threshold)?;
                out.add_text("dtf_summary.txt", report::forest_summary(&f, &oob));
            }
        }
    }
    Ok(out)
}

/// Cross-validated reports per model, plus the forest's out-of-bag and
/// in-sample variants when the forest is among the models.
pub struct Comparison {
    pub cv: Vec<(ModelKind, EvalReport)>,
    pub forest_oob: Option<EvalReport>,
    pub forest_in_sample: Option<EvalReport>,
}

pub fn run_comparison(ds: &Dataset, spec: &ExperimentSpec, seed: u64) -> Result<Comparison> {
    let log_columns = spec.pipeline.log_columns(ds);
    let config = CvConfig { k: spec.k, seed };
    let mut cv = Vec::new();
    for &kind in &spec.models {
        let trainer = models::trainer(kind, &spec.config, &log_columns);
        let records = kfold_cv(ds, trainer.as_ref(), config)?;
        cv.push((
            kind,
            EvalReport::with_pred_level(records, spec.pred_threshold)?,
        ));
    }
    let (mut forest_oob, mut forest_in_sample) = (None, None);
    if spec.models.contains(&ModelKind::Dtf) {
        let params = spec
            .config
            .forest
            .with_seed(rng::derive_seed(seed, "fit-dtf"));
        let f = forest::fit_forest(ds, &params)?;
        forest_oob = Some(f.oob_report_at(ds, spec.pred_threshold)?);
        let fitted = f.predict(ds)?;
        let records = ds
            .target()?
            .into_iter()
            .zip(fitted)
            .map(|(a, p)| PredictionRecord::new(a, p))
            .collect();
        forest_in_sample = Some(EvalReport::with_pred_level(records, spec.pred_threshold)?);
    }
    Ok(Comparison {
        cv,
        forest_oob,
        forest_in_sample,
    })
}

pub fn cmd_compare(spec: &ExperimentSpec) -> Result<Output> {
    let seed = spec.require_seed()?;
    let ds = spec.load()?;
    let name = spec.dataset_name();
    let cmp = run_comparison(&ds, spec, seed)?;

    let mut columns: Vec<(String, String, &EvalReport)> = cmp
        .cv
        .iter()
        .map(|(k, r)| (k.label().to_string(), k.as_str().to_string(), r))
        .collect();
    if let Some(r) = &cmp.forest_oob {
        columns.push(("DTF (OOB)".into(), "dtf-oob".into(), r));
    }
    if let Some(r) = &cmp.forest_in_sample {
        columns.push(("DTF (fit)".into(), "dtf-insample".into(), r));
    }

    let mut out = Output::default();
    let title = format!(
        "Model evaluation: {name}, {}-fold cross-validation, seed {seed}",
        spec.k
    );
    let table: Vec<(String, EvalReport)> = columns
        .iter()
        .map(|(label, _, r)| (label.clone(), (*r).clone()))
        .collect();
    out.add_text("table2.txt", report::table_ii(&title, &table));
    let rows: Vec<MetricRow> = columns
        .iter()
        .map(|(_, id, r)| MetricRow::from_report(id, &name, r, seed))
        .collect();
    let mut csv = Vec::new();
    report::write_metrics_csv(&rows, &mut csv)?;
    out.add_file("metrics.csv", csv);
    out.add_file("predictions.csv", predictions_csv(&cmp.cv)?);

    if cmp.cv.len() >= 2 {
        let named: Vec<(String, EvalReport)> = cmp
            .cv
            .iter()
            .map(|(k, r)| (k.label().to_string(), r.clone()))
            .collect();
        let comparisons = compare_models(&named)?;
        let labels: Vec<String> = named.iter().map(|(n, _)| n.clone()).collect();
        out.add_text(
            "table3.txt",
            report::table_iii(
                "Mann-Whitney U test on absolute residuals (two-sided p)",
                &labels,
                &comparisons,
            ),
        );
        let rows: Vec<UTestRow> = comparisons.iter().map(UTestRow::from).collect();
        let mut csv = Vec::new();
        report::write_utest_csv(&rows, &mut csv)?;
        out.add_file("utest.csv", csv);
    }
    Ok(out)
}

fn predictions_csv(cv: &[(ModelKind, EvalReport)]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["row".to_string(), "actual".to_string()];
    header.extend(cv.iter().map(|(k, _)| k.as_str().to_string()));
    w.write_record(&header).map_err(Error::Csv)?;
    let n = cv.first().map_or(0, |(_, r)| r.n);
    for i in 0..n {
        let mut rec = vec![i.to_string(), cv[0].1.records[i].actual.to_string()];
        rec.extend(cv.iter().map(|(_, r)| r.records[i].predicted.to_string()));
        w.write_record(&rec).map_err(Error::Csv)?;
    }
    w.into_inner()
        .map_err(|e| Error::invalid_data(format!("writing predictions: {e}")))
}

pub fn execute(cli: &Cli) -> Result<Output> {
    let (args, f): (&SpecArgs, fn(&ExperimentSpec) -> Result<Output>) = match &cli.command {
        Command::Stats(a) => (a, cmd_stats),
        Command::Fit(a) => (a, cmd_fit),
        Command::Compare(a) => (a, cmd_compare),
    };
    let spec = ExperimentSpec::resolve(args)?;
    let output = f(&spec)?;
    if let Some(dir) = &spec.out {
        output.write_to(dir)?;
    }
    Ok(output)
}

/// Parses `args`, runs the command, writes reports to `stdout` and
/// diagnostics to `stderr`, and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = if code == 0 {
                write!(stdout, "{e}")
            } else {
                write!(stderr, "{e}")
            };
            return if code == 0 { 0 } else { 2 };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let _ = stdout.write_all(out.text.as_bytes());
            0
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
