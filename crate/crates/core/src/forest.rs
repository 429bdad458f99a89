//! Decision-tree forests: bagged, unpruned regression trees with a random
//! subset of features examined at every split, averaged for prediction.
//!
//! Tree `t` draws everything (bootstrap rows, per-split feature subsets) from
//! its own stream derived from `(seed, t)`, so fitting in parallel yields the
//! same forest as fitting sequentially.

use rand::seq::index;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::cart::{self, FeatureSelector, Prune, RegressionTree, TrainingData, TreeParams};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, PredictionRecord};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    /// N rows drawn uniformly with replacement.
    Resample,
    /// Every row exactly once; makes a one-tree forest a plain CART tree.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌊√p⌋.
    pub mtry: Option<usize>,
    pub max_depth: usize,
    pub min_split: usize,
    pub min_leaf: usize,
    pub seed: u64,
    pub bootstrap: Bootstrap,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 500,
            mtry: None,
            max_depth: 100,
            min_split: 2,
            min_leaf: 1,
            seed: 0,
            bootstrap: Bootstrap::Resample,
        }
    }
}

impl ForestParams {
    pub fn with_seed(self, seed: u64) -> Self {
        ForestParams { seed, ..self }
    }

    pub fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_split: self.min_split,
            min_leaf: self.min_leaf,
            prune: Prune::None,
        }
    }

    /// Features per split for `p` predictors.
    pub fn resolve_mtry(&self, p: usize) -> Result<usize> {
        let m = self.mtry.unwrap_or_else(|| default_mtry(p));
        if m == 0 || m > p {
            return Err(Error::invalid_param(format!(
                "mtry = {m} must lie in [1, {p}]"
            )));
        }
        Ok(m)
    }
}

/// ⌊√p⌋, at least 1.
pub fn default_mtry(p: usize) -> usize {
    ((p as f64).sqrt().floor() as usize).max(1)
}

struct RandomFeatures<'a> {
    rng: &'a mut ChaCha8Rng,
    mtry: usize,
}

impl FeatureSelector for RandomFeatures<'_> {
    fn select(&mut self, n_features: usize) -> Vec<usize> {
        let mut picked = index::sample(self.rng, n_features, self.mtry).into_vec();
        picked.sort_unstable();
        picked
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    /// Per tree, how many times each training row was drawn.
    in_bag: Vec<Vec<u32>>,
    params: ForestParams,
}

impl Forest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    /// Bootstrap multiplicity of every training row for tree `t`.
    pub fn in_bag(&self, t: usize) -> &[u32] {
        &self.in_bag[t]
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_rows(&self) -> usize {
        self.in_bag.first().map_or(0, Vec::len)
    }

    pub fn max_depth(&self) -> usize {
        self.trees
            .iter()
            .map(RegressionTree::depth)
            .max()
            .unwrap_or(0)
    }

    /// Unweighted mean of the member trees' predictions.
    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let per_tree = self
            .trees
            .par_iter()
            .map(|t| t.predict(ds))
            .collect::<Result<Vec<_>>>()?;
        let k = self.trees.len() as f64;
        Ok((0..ds.n_rows())
            .map(|r| per_tree.iter().map(|p| p[r]).sum::<f64>() / k)
            .collect())
    }

    pub fn predict_row(&self, ds: &Dataset, row: usize) -> Result<f64> {
        let mut sum = 0.0;
        for t in &self.trees {
            sum += t.predict_row(ds, row)?;
        }
        Ok(sum / self.trees.len() as f64)
    }

    /// For each training row, the mean prediction of the trees that did not
    /// see it; `None` when every tree drew the row.
    pub fn oob_predict(&self, ds: &Dataset) -> Result<Vec<Option<f64>>> {
        if ds.n_rows() != self.n_rows() {
            return Err(Error::invalid_data(format!(
                "forest was trained on {} rows, dataset has {}",
                self.n_rows(),
                ds.n_rows()
            )));
        }
        let per_tree = self
            .trees
            .par_iter()
            .map(|t| t.predict(ds))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..ds.n_rows())
            .map(|r| {
                let (sum, count) = per_tree
                    .iter()
                    .zip(&self.in_bag)
                    .filter(|(_, bag)| bag[r] == 0)
                    .fold((0.0, 0usize), |(s, c), (p, _)| (s + p[r], c + 1));
                (count > 0).then(|| sum / count as f64)
            })
            .collect())
    }

    /// Accuracy report over the out-of-bag predictions. Fails if some row
    /// has none.
    pub fn oob_report(&self, ds: &Dataset) -> Result<EvalReport> {
        self.oob_report_at(ds, EvalReport::DEFAULT_PRED_LEVEL)
    }

    pub fn oob_report_at(&self, ds: &Dataset, pred_level: f64) -> Result<EvalReport> {
        let oob = self.oob_predict(ds)?;
        let uncovered: Vec<usize> = oob
            .iter()
            .enumerate()
            .filter(|(_, p)| p.is_none())
            .map(|(i, _)| i)
            .collect();
        if !uncovered.is_empty() {
            return Err(Error::invalid_data(format!(
                "rows without an out-of-bag prediction: {uncovered:?}"
            )));
        }
        let actual = ds.target()?;
        let records = actual
            .iter()
            .zip(oob)
            .map(|(&a, p)| PredictionRecord::new(a, p.unwrap()))
            .collect();
        EvalReport::with_pred_level(records, pred_level)
    }

    #[cfg(test)]
    pub(crate) fn from_parts(
        trees: Vec<RegressionTree>,
        in_bag: Vec<Vec<u32>>,
        params: ForestParams,
    ) -> Self {
        Forest {
            trees,
            in_bag,
            params,
        }
    }
}

pub fn fit_forest(ds: &Dataset, params: &ForestParams) -> Result<Forest> {
    if params.n_trees == 0 {
        return Err(Error::invalid_param("a forest needs at least one tree"));
    }
    let tree_params = params.tree_params();
    tree_params.validate()?;
    if ds.is_empty() {
        return Err(Error::invalid_data(
            "cannot fit a forest on an empty dataset",
        ));
    }
    let data = TrainingData::from_dataset(ds)?;
    let mtry = params.resolve_mtry(data.n_features())?;
    let n = data.n_rows();

    let grown: Vec<(RegressionTree, Vec<u32>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut stream = rng::stream(params.seed, "forest-tree", t as u64);
            let mut counts = vec![0u32; n];
            match params.bootstrap {
                Bootstrap::Resample => {
                    for _ in 0..n {
                        counts[stream.random_range(0..n)] += 1;
                    }
                }
                Bootstrap::Identity => counts.fill(1),
            }
            let rows: Vec<usize> = counts
                .iter()
                .enumerate()
                .flat_map(|(r, &c)| std::iter::repeat_n(r, c as usize))
                .collect();
            let mut selector = RandomFeatures {
                rng: &mut stream,
                mtry,
            };
            let root = cart::grow(&data, rows, &tree_params, &mut selector);
            (
                cart::assemble(root, tree_params, data.names.clone()),
                counts,
            )
        })
        .collect();
    let (trees, in_bag) = grown.into_iter().unzip();
    Ok(Forest {
        trees,
        in_bag,
        params: *params,
    })
}
