//! The three compared model families as cross-validation trainers.

use std::fmt;
use std::str::FromStr;

use crate::cart::{self, TreeParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::Trainer;
use crate::forest::{self, ForestParams};
use crate::linreg::{LogLinearPipeline, StepwiseParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    Mlr,
    Dt,
    Dtf,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Mlr, ModelKind::Dt, ModelKind::Dtf];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Mlr => "mlr",
            ModelKind::Dt => "dt",
            ModelKind::Dtf => "dtf",
        }
    }

    /// Column heading used in the human-readable tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Mlr => "MLR",
            ModelKind::Dt => "DT",
            ModelKind::Dtf => "DTF",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mlr" => Ok(ModelKind::Mlr),
            "dt" => Ok(ModelKind::Dt),
            "dtf" => Ok(ModelKind::Dtf),
            other => Err(Error::invalid_param(format!(
                "unknown model `{other}` (expected mlr, dt or dtf)"
            ))),
        }
    }
}

/// Parses a comma-separated model list, keeping the given order and
/// rejecting duplicates.
pub fn parse_models(list: &str) -> Result<Vec<ModelKind>> {
    let mut out: Vec<ModelKind> = Vec::new();
    for part in list.split(',').filter(|p| !p.trim().is_empty()) {
        let kind: ModelKind = part.parse()?;
        if out.contains(&kind) {
            return Err(Error::invalid_param(format!("model `{kind}` listed twice")));
        }
        out.push(kind);
    }
    if out.is_empty() {
        return Err(Error::invalid_param("no models given"));
    }
    Ok(out)
}

/// Parameters of every model family.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelConfig {
    pub tree: TreeParams,
    pub forest: ForestParams,
    pub stepwise: StepwiseParams,
}

impl ModelConfig {
    /// Applies one `family.key = value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::invalid_param(format!("bad value `{value}` for `{key}`")))
        }
        match key.trim() {
            "dt.max_depth" => self.tree.max_depth = num(key, value)?,
            "dt.min_split" => self.tree.min_split = num(key, value)?,
            "dt.min_leaf" => self.tree.min_leaf = num(key, value)?,
            "dt.prune_folds" => {
                let folds: usize = num(key, value)?;
                self.tree.prune = if folds == 0 {
                    cart::Prune::None
                } else {
                    cart::Prune::CrossValidation { folds }
                };
            }
            "dtf.n_trees" => self.forest.n_trees = num(key, value)?,
            "dtf.mtry" => self.forest.mtry = Some(num(key, value)?),
            "dtf.max_depth" => self.forest.max_depth = num(key, value)?,
            "dtf.min_split" => self.forest.min_split = num(key, value)?,
            "dtf.min_leaf" => self.forest.min_leaf = num(key, value)?,
            "mlr.alpha" => self.stepwise.alpha = num(key, value)?,
            other => return Err(Error::invalid_param(format!("unknown parameter `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.tree.validate()?;
        self.forest.tree_params().validate()?;
        if self.forest.n_trees == 0 {
            return Err(Error::invalid_param("dtf.n_trees must be at least 1"));
        }
        if self.forest.mtry == Some(0) {
            return Err(Error::invalid_param("dtf.mtry must be at least 1"));
        }
        if !(self.stepwise.alpha > 0.0 && self.stepwise.alpha < 1.0) {
            return Err(Error::invalid_param("mlr.alpha must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Regression tree grown without pruning; the outer cross-validation is the
/// evaluation.
pub struct TreeTrainer {
    pub params: TreeParams,
}

impl Trainer for TreeTrainer {
    fn name(&self) -> &str {
        "dt"
    }

    fn fit_predict(&self, train: &Dataset, test: &Dataset, _seed: u64) -> Result<Vec<f64>> {
        cart::fit_tree(train, &self.params.unpruned())?.predict(test)
    }
}

pub struct ForestTrainer {
    pub params: ForestParams,
}

impl Trainer for ForestTrainer {
    fn name(&self) -> &str {
        "dtf"
    }

    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<Vec<f64>> {
        forest::fit_forest(train, &self.params.with_seed(seed))?.predict(test)
    }
}

/// Log-linear stepwise regression, selected afresh on every training fold.
pub struct LogLinearTrainer {
    pub pipeline: LogLinearPipeline,
}

impl Trainer for LogLinearTrainer {
    fn name(&self) -> &str {
        "mlr"
    }

    fn fit_predict(&self, train: &Dataset, test: &Dataset, _seed: u64) -> Result<Vec<f64>> {
        self.pipeline.fit(train)?.predict(test)
    }
}

/// The cross-validation trainer for `kind`.
pub fn trainer(kind: ModelKind, config: &ModelConfig, log_columns: &[String]) -> Box<dyn Trainer> {
    match kind {
        ModelKind::Mlr => Box::new(LogLinearTrainer {
            pipeline: LogLinearPipeline {
                log_columns: log_columns.to_vec(),
                stepwise: config.stepwise,
            },
        }),
        ModelKind::Dt => Box::new(TreeTrainer {
            params: config.tree,
        }),
        ModelKind::Dtf => Box::new(ForestTrainer {
            params: config.forest,
        }),
    }
}
