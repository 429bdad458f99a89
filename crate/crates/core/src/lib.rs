//! Software effort estimation with regression trees, decision-tree forests
//! and stepwise log-linear regression, plus the evaluation machinery used to
//! compare them (MRE-based criteria, k-fold cross-validation and the
//! Mann-Whitney U test).

pub mod cart;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod folds;
pub mod forest;
pub mod linreg;
pub mod models;
pub mod prepare;
pub mod report;
pub mod rng;
pub mod special;

pub use cart::{fit_tree, prune_by_cv, train_tree, Prune, RegressionTree, TreeParams};
pub use dataset::{load_csv, read_csv, Dataset, DescriptiveStats, Kind, Schema};
pub use error::{Error, Result};
pub use eval::{kfold_cv, mann_whitney_u, CvConfig, EvalReport, PredictionRecord, UTestResult};
pub use forest::{fit_forest, Forest, ForestParams};
pub use linreg::{fit_ols, stepwise, LinearModel, LogLinearPipeline, StepwiseParams};
pub use models::ModelKind;
pub use prepare::Pipeline;
