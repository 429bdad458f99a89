//! Least-squares regression trees.
//!
//! Trees are grown greedily: each node takes the split with the largest
//! reduction in within-node sum of squared errors, scanning midpoints between
//! consecutive distinct values for numeric features and the L-1 cuts of the
//! mean-ordered levels for categorical ones. Those cuts contain the optimum
//! unless the minimum leaf size excludes it, so categorical features with few
//! levels also get an exhaustive subset search; a contiguous cut wins ties. Ties go to the lower feature
//! index, then to the smaller threshold.
//!
//! [`prune_by_cv`] implements weakest-link (cost-complexity) pruning with the
//! complexity parameter chosen by minimum k-fold cross-validation error.

use std::fmt;

use rayon::prelude::*;

use crate::dataset::{Column, Dataset};
use crate::error::{Error, Result};
use crate::folds;

/// Relative tolerance under which two split costs are considered equal.
const SPLIT_TOL: f64 = 1e-10;

/// Categorical features with at most this many levels at a node get an
/// exhaustive subset search in addition to the mean-ordered cuts.
const EXHAUSTIVE_LEVELS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prune {
    None,
    CrossValidation { folds: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    /// Maximum depth, the root being at depth 0.
    pub max_depth: usize,
    /// Nodes with fewer rows are not split.
    pub min_split: usize,
    /// Minimum rows in either child of a split.
    pub min_leaf: usize,
    pub prune: Prune,
}

impl Default for TreeParams {
    /// Depth 10, split nodes of at least 10 rows, leaves of at least 5 rows,
    /// pruning by 10-fold cross-validation.
    fn default() -> Self {
        TreeParams {
            max_depth: 10,
            min_split: 10,
            min_leaf: 5,
            prune: Prune::CrossValidation { folds: 10 },
        }
    }
}

impl TreeParams {
    pub fn unpruned(self) -> Self {
        TreeParams {
            prune: Prune::None,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::invalid_param("max_depth must be at least 1"));
        }
        if self.min_split < 2 {
            return Err(Error::invalid_param("min_split must be at least 2"));
        }
        if self.min_leaf < 1 || self.min_leaf > self.min_split {
            return Err(Error::invalid_param(
                "min_leaf must be at least 1 and at most min_split",
            ));
        }
        if let Prune::CrossValidation { folds } = self.prune {
            if folds < 2 {
                return Err(Error::invalid_param("pruning needs at least 2 folds"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Condition {
    /// Rows with `value <= threshold` go left.
    Threshold(f64),
    /// Rows whose level is in `left` go left; `right` holds the other levels
    /// observed at the node. Unseen levels follow the larger child.
    Categories {
        left: Vec<String>,
        right: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitRule {
    pub feature: String,
    pub condition: Condition,
}

impl fmt::Display for SplitRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.condition {
            Condition::Threshold(t) => write!(f, "{} <= {}", self.feature, t),
            Condition::Categories { left, .. } => {
                write!(f, "{} in {{{}}}", self.feature, left.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub n: usize,
    pub mean: f64,
    pub sse: f64,
    pub split: Option<SplitRule>,
    pub children: Option<Box<(TreeNode, TreeNode)>>,
}

impl TreeNode {
    fn leaf(n: usize, mean: f64, sse: f64) -> Self {
        TreeNode {
            n,
            mean,
            sse,
            split: None,
            children: None,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    fn collapsed(&self) -> Self {
        TreeNode::leaf(self.n, self.mean, self.sse)
    }

    pub fn depth(&self) -> usize {
        match &self.children {
            None => 0,
            Some(c) => 1 + c.0.depth().max(c.1.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match &self.children {
            None => 1,
            Some(c) => c.0.n_leaves() + c.1.n_leaves(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        match &self.children {
            None => 1,
            Some(c) => 1 + c.0.n_nodes() + c.1.n_nodes(),
        }
    }

    /// Sum of the leaf SSEs below (and including) this node.
    pub fn leaf_sse(&self) -> f64 {
        match &self.children {
            None => self.sse,
            Some(c) => c.0.leaf_sse() + c.1.leaf_sse(),
        }
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a TreeNode, usize)) {
        fn go<'a>(node: &'a TreeNode, depth: usize, f: &mut impl FnMut(&'a TreeNode, usize)) {
            f(node, depth);
            if let Some(c) = &node.children {
                go(&c.0, depth + 1, f);
                go(&c.1, depth + 1, f);
            }
        }
        go(self, 0, f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    root: TreeNode,
    params: TreeParams,
    features: Vec<String>,
}

impl RegressionTree {
    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    /// Predictor names the tree was trained on, in schema order.
    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }

    /// Training SSE: the summed SSE of all leaves.
    pub fn training_sse(&self) -> f64 {
        self.root.leaf_sse()
    }

    pub fn predict_row(&self, ds: &Dataset, row: usize) -> Result<f64> {
        let binding = Binding::new(ds, &self.features)?;
        binding.route(&self.root, row)
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Vec<f64>> {
        let binding = Binding::new(ds, &self.features)?;
        (0..ds.n_rows())
            .map(|r| binding.route(&self.root, r))
            .collect()
    }

    /// The smallest subtree minimizing `leaf SSE + alpha * leaves`.
    pub fn pruned_at(&self, alpha: f64) -> RegressionTree {
        RegressionTree {
            root: prune_at(&self.root, alpha),
            params: self.params,
            features: self.features.clone(),
        }
    }

    /// Critical complexity values 0 = α₀ < α₁ < … < α_m of the weakest-link
    /// pruning sequence; pruning at α_m leaves only the root.
    pub fn complexity_sequence(&self) -> Vec<f64> {
        self.pruning_sequence()
            .into_iter()
            .map(|(a, _)| a)
            .collect()
    }

    /// The nested subtrees T₀ ⊃ T₁ ⊃ … ⊃ {root} with their critical α.
    pub fn pruning_sequence(&self) -> Vec<(f64, RegressionTree)> {
        let mut current = prune_at(&self.root, 0.0);
        let mut seq = vec![(0.0, self.with_root(current.clone()))];
        while !current.is_leaf() {
            let mut weakest = f64::INFINITY;
            current.visit(&mut |node, _| {
                if !node.is_leaf() {
                    weakest = weakest.min(link_strength(node));
                }
            });
            let alpha = weakest.max(seq.last().unwrap().0);
            current = collapse_weakest(&current, weakest * (1.0 + 1e-9));
            seq.push((alpha, self.with_root(current.clone())));
        }
        seq
    }

    fn with_root(&self, root: TreeNode) -> RegressionTree {
        RegressionTree {
            root,
            params: self.params,
            features: self.features.clone(),
        }
    }
}

/// g(t) = (R(t) - R(T_t)) / (|T_t| - 1) for an internal node.
fn link_strength(node: &TreeNode) -> f64 {
    ((node.sse - node.leaf_sse()) / (node.n_leaves() - 1) as f64).max(0.0)
}

fn collapse_weakest(node: &TreeNode, threshold: f64) -> TreeNode {
    match &node.children {
        None => node.clone(),
        Some(_) if link_strength(node) <= threshold => node.collapsed(),
        Some(c) => {
            let mut kept = node.clone();
            kept.children = Some(Box::new((
                collapse_weakest(&c.0, threshold),
                collapse_weakest(&c.1, threshold),
            )));
            kept
        }
    }
}

/// Indented text form: one line per node with its size, mean, SSE and rule.
impl fmt::Display for RegressionTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut id = 0usize;
        let mut result = Ok(());
        self.root.visit(&mut |node, depth| {
            if result.is_err() {
                return;
            }
            let indent = "  ".repeat(depth);
            let rule = node
                .split
                .as_ref()
                .map_or_else(|| "leaf".to_string(), |s| s.to_string());
            result = writeln!(
                f,
                "{indent}node {id}: n={} mean={} sse={} {rule}",
                node.n, node.mean, node.sse
            );
            id += 1;
        });
        result
    }
}

/// Columns of a dataset resolved against a model's feature list.
struct Binding<'a> {
    names: &'a [String],
    columns: Vec<&'a Column>,
}

impl<'a> Binding<'a> {
    fn new(ds: &'a Dataset, features: &'a [String]) -> Result<Self> {
        let columns = features
            .iter()
            .map(|f| ds.column(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Binding {
            names: features,
            columns,
        })
    }

    fn route(&self, root: &TreeNode, row: usize) -> Result<f64> {
        let mut node = root;
        while let (Some(split), Some(children)) = (&node.split, &node.children) {
            let col = self.column_for(&split.feature)?;
            let go_left = match (&split.condition, col) {
                (Condition::Threshold(t), Column::Numeric(v)) => {
                    let x = v[row].ok_or_else(|| missing(&split.feature, row))?;
                    x <= *t
                }
                (Condition::Categories { left, right }, Column::Categorical { levels, codes }) => {
                    let code = codes[row].ok_or_else(|| missing(&split.feature, row))?;
                    let label = &levels[code as usize];
                    if left.contains(label) {
                        true
                    } else if right.contains(label) {
                        false
                    } else {
                        children.0.n >= children.1.n
                    }
                }
                (Condition::Threshold(_), _) => {
                    return Err(kind_error(&split.feature, "numeric", "categorical"))
                }
                (Condition::Categories { .. }, _) => {
                    return Err(kind_error(&split.feature, "categorical", "numeric"))
                }
            };
            node = if go_left { &children.0 } else { &children.1 };
        }
        Ok(node.mean)
    }

    fn column_for(&self, name: &str) -> Result<&'a Column> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i])
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }
}

fn missing(feature: &str, row: usize) -> Error {
    Error::invalid_data(format!("missing value in `{feature}` at row {row}"))
}

fn kind_error(column: &str, expected: &'static str, found: &'static str) -> Error {
    Error::ColumnKind {
        column: column.to_string(),
        expected,
        found,
    }
}

/// Predictors and target extracted from a dataset for fitting.
#[derive(Debug, Clone)]
pub(crate) struct TrainingData {
    pub(crate) names: Vec<String>,
    features: Vec<Feature>,
    pub(crate) target: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Feature {
    Numeric(Vec<f64>),
    Categorical {
        levels: Vec<String>,
        codes: Vec<u32>,
    },
}

impl TrainingData {
    pub(crate) fn from_dataset(ds: &Dataset) -> Result<Self> {
        let names = ds.schema().predictors();
        let features = names
            .iter()
            .map(|name| match ds.column(name)? {
                Column::Numeric(_) => Ok(Feature::Numeric(ds.numeric(name)?)),
                Column::Categorical { levels, codes } => {
                    let codes = codes
                        .iter()
                        .enumerate()
                        .map(|(r, c)| c.ok_or_else(|| missing(name, r)))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(Feature::Categorical {
                        levels: levels.clone(),
                        codes,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrainingData {
            names,
            features,
            target: ds.target()?,
        })
    }

    pub(crate) fn n_features(&self) -> usize {
        self.features.len()
    }

    pub(crate) fn n_rows(&self) -> usize {
        self.target.len()
    }
}

/// A candidate split found during the scan.
#[derive(Debug, Clone)]
struct Candidate {
    feature: usize,
    rule: CandidateRule,
    /// left SSE + right SSE
    cost: f64,
}

#[derive(Debug, Clone)]
enum CandidateRule {
    Threshold(f64),
    Levels { left: Vec<u32>, right: Vec<u32> },
}

impl Candidate {
    fn goes_left(&self, data: &TrainingData, row: usize) -> bool {
        match (&self.rule, &data.features[self.feature]) {
            (CandidateRule::Threshold(t), Feature::Numeric(v)) => v[row] <= *t,
            (CandidateRule::Levels { left, .. }, Feature::Categorical { codes, .. }) => {
                left.contains(&codes[row])
            }
            _ => unreachable!("candidate kind matches its feature"),
        }
    }

    fn to_rule(&self, data: &TrainingData) -> SplitRule {
        let condition = match (&self.rule, &data.features[self.feature]) {
            (CandidateRule::Threshold(t), _) => Condition::Threshold(*t),
            (CandidateRule::Levels { left, right }, Feature::Categorical { levels, .. }) => {
                let label = |c: &u32| levels[*c as usize].clone();
                let mut l: Vec<String> = left.iter().map(label).collect();
                let mut r: Vec<String> = right.iter().map(label).collect();
                l.sort();
                r.sort();
                Condition::Categories { left: l, right: r }
            }
            _ => unreachable!("candidate kind matches its feature"),
        };
        SplitRule {
            feature: data.names[self.feature].clone(),
            condition,
        }
    }
}

fn node_stats(target: &[f64], rows: &[usize]) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|&r| target[r]).sum::<f64>() / n;
    let sse = rows
        .iter()
        .map(|&r| {
            let d = target[r] - mean;
            d * d
        })
        .sum();
    (mean, sse)
}

/// Best admissible split of `rows` on one feature, or `None` when no
/// partition leaves `min_leaf` rows on both sides. Targets are centred on
/// `node_mean` before accumulating sums.
fn scan_feature(
    data: &TrainingData,
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    node_mean: f64,
    tol: f64,
) -> Option<Candidate> {
    let y = |r: usize| data.target[r] - node_mean;
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    match &data.features[feature] {
        Feature::Numeric(values) => {
            let mut sorted: Vec<usize> = rows.to_vec();
            sorted.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            let (total, total2) = sorted
                .iter()
                .fold((0.0, 0.0), |(s, s2), &r| (s + y(r), s2 + y(r) * y(r)));
            let mut best: Option<Candidate> = None;
            let (mut sl, mut sl2) = (0.0, 0.0);
            for i in 0..n - 1 {
                let r = sorted[i];
                sl += y(r);
                sl2 += y(r) * y(r);
                let nl = i + 1;
                let nr = n - nl;
                let (lo, hi) = (values[r], values[sorted[i + 1]]);
                if lo == hi || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let left = (sl2 - sl * sl / nl as f64).max(0.0);
                let sr = total - sl;
                let right = ((total2 - sl2) - sr * sr / nr as f64).max(0.0);
                let cost = left + right;
                if best.as_ref().is_none_or(|b| cost < b.cost - tol) {
                    let mut t = lo + (hi - lo) / 2.0;
                    if t >= hi {
                        t = lo;
                    }
                    best = Some(Candidate {
                        feature,
                        rule: CandidateRule::Threshold(t),
                        cost,
                    });
                }
            }
            best
        }
        Feature::Categorical { levels, codes } => {
            // (code, count, sum, sum of squares) per level present at the node
            let mut acc: Vec<(u32, usize, f64, f64)> = Vec::new();
            let mut slot = vec![usize::MAX; levels.len()];
            for &r in rows {
                let c = codes[r];
                if slot[c as usize] == usize::MAX {
                    slot[c as usize] = acc.len();
                    acc.push((c, 0, 0.0, 0.0));
                }
                let e = &mut acc[slot[c as usize]];
                e.1 += 1;
                e.2 += y(r);
                e.3 += y(r) * y(r);
            }
            if acc.len() < 2 {
                return None;
            }
            acc.sort_by(|a, b| {
                (a.2 / a.1 as f64)
                    .total_cmp(&(b.2 / b.1 as f64))
                    .then(a.0.cmp(&b.0))
            });
            let (total, total2) = acc
                .iter()
                .fold((0.0, 0.0), |(s, s2), e| (s + e.2, s2 + e.3));
            let mut best: Option<(Vec<bool>, f64)> = None;
            let (mut nl, mut sl, mut sl2) = (0usize, 0.0, 0.0);
            for cut in 1..acc.len() {
                let e = &acc[cut - 1];
                nl += e.1;
                sl += e.2;
                sl2 += e.3;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let left = (sl2 - sl * sl / nl as f64).max(0.0);
                let sr = total - sl;
                let right = ((total2 - sl2) - sr * sr / nr as f64).max(0.0);
                let cost = left + right;
                if best.as_ref().is_none_or(|(_, b)| cost < b - tol) {
                    best = Some(((0..acc.len()).map(|i| i < cut).collect(), cost));
                }
            }
            // The contiguous cuts are optimal unless min_leaf rules some of
            // them out; with few levels, every other subset is tried as well.
            if acc.len() <= EXHAUSTIVE_LEVELS {
                let last = acc.len() - 1;
                for mask in 1u32..(1 << last) {
                    let (mut nl, mut sl, mut sl2) = (0usize, 0.0, 0.0);
                    for (i, e) in acc[..last].iter().enumerate() {
                        if mask >> i & 1 == 1 {
                            nl += e.1;
                            sl += e.2;
                            sl2 += e.3;
                        }
                    }
                    let nr = n - nl;
                    if nl < min_leaf || nr < min_leaf {
                        continue;
                    }
                    let left = (sl2 - sl * sl / nl as f64).max(0.0);
                    let sr = total - sl;
                    let right = ((total2 - sl2) - sr * sr / nr as f64).max(0.0);
                    let cost = left + right;
                    if best.as_ref().is_none_or(|(_, b)| cost < b - tol) {
                        best = Some(((0..acc.len()).map(|i| mask >> i & 1 == 1).collect(), cost));
                    }
                }
            }
            best.map(|(in_left, cost)| {
                let (l, r): (Vec<_>, Vec<_>) =
                    acc.iter().enumerate().partition(|(i, _)| in_left[*i]);
                let mut left: Vec<u32> = l.into_iter().map(|(_, e)| e.0).collect();
                let mut right: Vec<u32> = r.into_iter().map(|(_, e)| e.0).collect();
                left.sort_unstable();
                right.sort_unstable();
                Candidate {
                    feature,
                    rule: CandidateRule::Levels { left, right },
                    cost,
                }
            })
        }
    }
}

/// Best split of a node over the given features (ascending order), keeping
/// only strictly positive SSE reductions.
fn find_split(
    data: &TrainingData,
    rows: &[usize],
    features: &[usize],
    min_leaf: usize,
    mean: f64,
    sse: f64,
) -> Option<Candidate> {
    let tol = SPLIT_TOL * sse;
    let mut best: Option<Candidate> = None;
    for &f in features {
        if let Some(c) = scan_feature(data, rows, f, min_leaf, mean, tol) {
            if best.as_ref().is_none_or(|b| c.cost < b.cost - tol) {
                best = Some(c);
            }
        }
    }
    best.filter(|b| sse - b.cost > tol)
}

/// Best least-squares split of the given rows on one feature, with its SSE
/// reduction. `None` when no admissible split exists or the best split does
/// not reduce the SSE.
pub fn best_split(
    ds: &Dataset,
    rows: &[usize],
    feature: &str,
    min_leaf: usize,
) -> Result<Option<(SplitRule, f64)>> {
    let data = TrainingData::from_dataset(ds)?;
    let f = data
        .names
        .iter()
        .position(|n| n == feature)
        .ok_or_else(|| Error::UnknownColumn(feature.to_string()))?;
    if rows.is_empty() {
        return Ok(None);
    }
    let (mean, sse) = node_stats(&data.target, rows);
    Ok(find_split(&data, rows, &[f], min_leaf.max(1), mean, sse)
        .map(|c| (c.to_rule(&data), sse - c.cost)))
}

/// Chooses the features examined at each split.
pub(crate) trait FeatureSelector {
    /// Feature indices to search, ascending.
    fn select(&mut self, n_features: usize) -> Vec<usize>;
}

pub(crate) struct AllFeatures;

impl FeatureSelector for AllFeatures {
    fn select(&mut self, n_features: usize) -> Vec<usize> {
        (0..n_features).collect()
    }
}

pub(crate) fn grow(
    data: &TrainingData,
    rows: Vec<usize>,
    params: &TreeParams,
    selector: &mut impl FeatureSelector,
) -> TreeNode {
    grow_node(data, rows, 0, params, selector)
}

fn grow_node(
    data: &TrainingData,
    rows: Vec<usize>,
    depth: usize,
    params: &TreeParams,
    selector: &mut impl FeatureSelector,
) -> TreeNode {
    let (mean, sse) = node_stats(&data.target, &rows);
    let n = rows.len();
    let first = data.target[rows[0]];
    let constant = rows.iter().all(|&r| data.target[r] == first);
    if depth >= params.max_depth || n < params.min_split || constant {
        return TreeNode::leaf(n, if constant { first } else { mean }, sse);
    }
    let features = selector.select(data.n_features());
    let Some(best) = find_split(data, &rows, &features, params.min_leaf, mean, sse) else {
        return TreeNode::leaf(n, mean, sse);
    };
    let (left, right): (Vec<usize>, Vec<usize>) =
        rows.iter().partition(|&&r| best.goes_left(data, r));
    let l = grow_node(data, left, depth + 1, params, selector);
    let r = grow_node(data, right, depth + 1, params, selector);
    TreeNode {
        n,
        mean,
        sse,
        split: Some(best.to_rule(data)),
        children: Some(Box::new((l, r))),
    }
}

/// Grows an unpruned tree on the whole dataset. Deterministic.
pub fn fit_tree(ds: &Dataset, params: &TreeParams) -> Result<RegressionTree> {
    params.validate()?;
    if ds.is_empty() {
        return Err(Error::invalid_data("cannot fit a tree on an empty dataset"));
    }
    let data = TrainingData::from_dataset(ds)?;
    let root = grow(
        &data,
        (0..data.n_rows()).collect(),
        params,
        &mut AllFeatures,
    );
    Ok(RegressionTree {
        root,
        params: *params,
        features: data.names,
    })
}

pub(crate) fn assemble(
    root: TreeNode,
    params: TreeParams,
    features: Vec<String>,
) -> RegressionTree {
    RegressionTree {
        root,
        params,
        features,
    }
}

fn prune_at(node: &TreeNode, alpha: f64) -> TreeNode {
    fn go(node: &TreeNode, alpha: f64) -> (TreeNode, f64, usize) {
        let Some(children) = &node.children else {
            return (node.clone(), node.sse, 1);
        };
        let (l, lr, ln) = go(&children.0, alpha);
        let (r, rr, rn) = go(&children.1, alpha);
        let leaves = ln + rn;
        let branch_cost = lr + rr + alpha * leaves as f64;
        let leaf_cost = node.sse + alpha;
        if leaf_cost <= branch_cost + 1e-10 * leaf_cost.abs() {
            (node.collapsed(), node.sse, 1)
        } else {
            let mut kept = node.clone();
            kept.children = Some(Box::new((l, r)));
            (kept, lr + rr, leaves)
        }
    }
    if alpha.is_infinite() {
        return node.collapsed();
    }
    go(node, alpha).0
}

/// Summed held-out squared error per candidate complexity value.
fn cv_errors(
    ds: &Dataset,
    params: &TreeParams,
    betas: &[f64],
    folds: &[usize],
    k: usize,
) -> Result<Vec<f64>> {
    let per_fold: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..ds.n_rows()).partition(|&r| folds[r] == fold);
            let tree = fit_tree(&ds.select_rows(&train), params).map_err(|e| Error::Fold {
                fold,
                source: Box::new(e),
            })?;
            let held_out = ds.select_rows(&test);
            let actual = held_out.target()?;
            betas
                .iter()
                .map(|&beta| {
                    let predicted = tree.pruned_at(beta).predict(&held_out)?;
                    Ok(actual
                        .iter()
                        .zip(&predicted)
                        .map(|(a, p)| (a - p) * (a - p))
                        .sum())
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok((0..betas.len())
        .map(|i| per_fold.iter().map(|f| f[i]).sum())
        .collect())
}

/// Fits the full tree, then prunes it at the complexity value whose
/// cross-validated squared error is smallest. Ties favour the smaller tree.
pub fn prune_by_cv(ds: &Dataset, params: &TreeParams, seed: u64) -> Result<RegressionTree> {
    let Prune::CrossValidation { folds: k } = params.prune else {
        return Err(Error::invalid_param(
            "prune_by_cv needs cross-validation pruning parameters",
        ));
    };
    params.validate()?;
    if k > ds.n_rows() {
        return Err(Error::invalid_param(format!(
            "{k} folds requested for {} rows",
            ds.n_rows()
        )));
    }
    let full = fit_tree(ds, params)?;
    if full.root.is_leaf() {
        return Ok(full);
    }
    let mut sequence = full.pruning_sequence();
    let alphas: Vec<f64> = sequence.iter().map(|(a, _)| *a).collect();
    let betas: Vec<f64> = (0..alphas.len())
        .map(|i| match alphas.get(i + 1) {
            Some(next) => (alphas[i] * next).sqrt(),
            None => f64::INFINITY,
        })
        .collect();
    let assignment = folds::assign(ds.n_rows(), k, seed, "prune-folds");
    let errors = cv_errors(ds, &params.unpruned(), &betas, &assignment, k)?;
    let mut best = 0;
    for (i, &e) in errors.iter().enumerate() {
        if e <= errors[best] {
            best = i;
        }
    }
    Ok(sequence.swap_remove(best).1)
}

/// Fits a tree and, when the parameters ask for it, prunes it by
/// cross-validation using `seed` for the fold assignment.
pub fn train_tree(ds: &Dataset, params: &TreeParams, seed: u64) -> Result<RegressionTree> {
    match params.prune {
        Prune::None => fit_tree(ds, params),
        Prune::CrossValidation { .. } => prune_by_cv(ds, params, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_csv, Schema};

    fn numeric_ds(xs: &[f64], ys: &[f64]) -> Dataset {
        let schema = Schema::parse("x = numeric\ny = numeric\ntarget = y").unwrap();
        let mut csv = String::from("x,y\n");
        for (x, y) in xs.iter().zip(ys) {
            csv.push_str(&format!("{x},{y}\n"));
        }
        read_csv(csv.as_bytes(), &schema).unwrap()
    }

    fn loose() -> TreeParams {
        TreeParams {
            max_depth: 10,
            min_split: 2,
            min_leaf: 1,
            prune: Prune::None,
        }
    }

    fn check_replay(node: &TreeNode, targets: &[f64], rows: &[usize], data: &TrainingData) {
        let sum: f64 = rows.iter().map(|&r| targets[r]).sum();
        assert!((node.mean * node.n as f64 - sum).abs() < 1e-9 * sum.abs().max(1.0));
        assert_eq!(node.n, rows.len());
        if let (Some(rule), Some(children)) = (&node.split, &node.children) {
            let f = data.names.iter().position(|n| *n == rule.feature).unwrap();
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter()
                    .partition(|&&row| match (&rule.condition, &data.features[f]) {
                        (Condition::Threshold(t), Feature::Numeric(v)) => v[row] <= *t,
                        _ => unreachable!(),
                    });
            check_replay(&children.0, targets, &l, data);
            check_replay(&children.1, targets, &r, data);
        }
    }

    #[test]
    fn three_row_example() {
        let ds = numeric_ds(&[1.0, 2.0, 3.0], &[1.0, 2.0, 10.0]);
        let (rule, reduction) = best_split(&ds, &[0, 1, 2], "x", 1).unwrap().unwrap();
        assert_eq!(rule.condition, Condition::Threshold(2.5));
        let parent = 48.0 + 2.0 / 3.0;
        assert!((reduction - (parent - 0.5)).abs() < 1e-9);

        let tree = fit_tree(&ds, &loose()).unwrap();
        assert_eq!(
            tree.root().split.as_ref().unwrap().condition,
            Condition::Threshold(2.5)
        );
        let (l, r) = &**tree.root().children.as_ref().unwrap();
        assert!((l.sse + r.sse - 0.5).abs() < 1e-12);
        let probe = numeric_ds(&[10.0], &[0.0]);
        assert_eq!(tree.predict(&probe).unwrap(), vec![10.0]);
    }

    #[test]
    fn degenerate_inputs() {
        let one = fit_tree(&numeric_ds(&[4.0], &[7.5]), &loose()).unwrap();
        assert_eq!((one.n_leaves(), one.root().mean), (1, 7.5));

        let flat = numeric_ds(&[1.0, 2.0, 3.0, 4.0], &[0.1; 4]);
        assert!(best_split(&flat, &[0, 1, 2, 3], "x", 1).unwrap().is_none());
        let t = fit_tree(&flat, &loose()).unwrap();
        assert_eq!((t.n_leaves(), t.root().mean), (1, 0.1));

        let same_x = numeric_ds(&[2.0; 4], &[1.0, 5.0, 2.0, 8.0]);
        assert!(best_split(&same_x, &[0, 1, 2, 3], "x", 1)
            .unwrap()
            .is_none());

        assert!(fit_tree(&numeric_ds(&[], &[]), &loose()).is_err());
    }

    #[test]
    fn min_leaf_is_respected() {
        let xs: Vec<f64> = (0..12).map(f64::from).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| if *x < 1.0 { 100.0 } else { x * 0.1 })
            .collect();
        let ds = numeric_ds(&xs, &ys);
        let rows: Vec<usize> = (0..12).collect();
        let (rule, _) = best_split(&ds, &rows, "x", 3).unwrap().unwrap();
        assert_eq!(rule.condition, Condition::Threshold(2.5));
        let tree = fit_tree(
            &ds,
            &TreeParams {
                min_leaf: 3,
                min_split: 6,
                ..loose()
            },
        )
        .unwrap();
        tree.root().visit(&mut |n, _| assert!(n.n >= 3));
    }

    #[test]
    fn categorical_split_groups_levels_by_mean() {
        let schema = Schema::parse("c = categorical\ny = numeric\ntarget = y").unwrap();
        let ds = read_csv(
            "c,y\na,1\nb,10\nc,1.5\na,1.2\nb,11\nc,0.9\n".as_bytes(),
            &schema,
        )
        .unwrap();
        let tree = fit_tree(&ds, &loose()).unwrap();
        let rule = tree.root().split.as_ref().unwrap();
        let Condition::Categories { left, right } = &rule.condition else {
            panic!("expected a category split");
        };
        assert_eq!(
            (left.clone(), right.clone()),
            (vec!["a".to_string(), "c".into()], vec!["b".to_string()])
        );
        assert_eq!(rule.to_string(), "c in {a,c}");

        // A level never seen in training goes to the larger child.
        let probe = read_csv("c,y\nz,0\n".as_bytes(), &schema).unwrap();
        let p = tree.predict(&probe).unwrap()[0];
        assert!(p < 2.0, "{p}");
    }

    #[test]
    fn min_leaf_can_force_a_non_contiguous_level_split() {
        // Mean order is b < c < a, but a and b hold two rows each, so with
        // min_leaf 3 neither contiguous cut is admissible while {a, b} | {c}
        // is. The highest-mean level always ends up on the right.
        let schema = Schema::parse("g = categorical\ny = numeric\ntarget = y").unwrap();
        let ds = read_csv(
            "g,y\na,290\na,270\nb,100\nb,130\nc,170\nc,140\nc,10\nc,0\nc,70\nc,230\nc,250\n"
                .as_bytes(),
            &schema,
        )
        .unwrap();
        let rows: Vec<usize> = (0..11).collect();
        let (rule, _) = best_split(&ds, &rows, "g", 3).unwrap().unwrap();
        let Condition::Categories { left, right } = rule.condition else {
            panic!("expected a category split");
        };
        let mut sides = [left, right];
        sides.sort();
        assert_eq!(
            sides,
            [vec!["a".to_string(), "b".into()], vec!["c".to_string()]]
        );
    }

    #[test]
    fn leaf_means_replay() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 41) as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| (x * 0.7).sin() * 50.0 + x).collect();
        let ds = numeric_ds(&xs, &ys);
        let tree = fit_tree(&ds, &loose()).unwrap();
        let data = TrainingData::from_dataset(&ds).unwrap();
        check_replay(tree.root(), &ys, &(0..40).collect::<Vec<_>>(), &data);
        let (lo, hi) = (
            ys.iter().cloned().fold(f64::MAX, f64::min),
            ys.iter().cloned().fold(f64::MIN, f64::max),
        );
        assert!(tree
            .predict(&ds)
            .unwrap()
            .iter()
            .all(|p| (lo..=hi).contains(p)));
        assert_eq!(
            tree.to_string(),
            fit_tree(&ds, &loose()).unwrap().to_string()
        );
    }

    #[test]
    fn step_function_keeps_its_split() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| if *x < 10.0 { 100.0 } else { 500.0 })
            .collect();
        let ds = numeric_ds(&xs, &ys);
        let params = TreeParams {
            max_depth: 10,
            min_split: 4,
            min_leaf: 2,
            prune: Prune::CrossValidation { folds: 5 },
        };
        let tree = prune_by_cv(&ds, &params, 11).unwrap();
        assert_eq!(tree.n_leaves(), 2);
        assert_eq!(
            tree.root().split.as_ref().unwrap().condition,
            Condition::Threshold(9.5)
        );

        // Direct check: every held-out row is predicted exactly with the split,
        // and with error 160000 per row without it.
        let assign = folds::assign(20, 5, 11, "prune-folds");
        let (mut with, mut without) = (0.0, 0.0);
        for fold in 0..5 {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..20).partition(|&r| assign[r] == fold);
            let t = fit_tree(&ds.select_rows(&train), &params.unpruned()).unwrap();
            let held = ds.select_rows(&test);
            let act = held.target().unwrap();
            let sse = |p: Vec<f64>| act.iter().zip(p).map(|(a, p)| (a - p).powi(2)).sum::<f64>();
            with += sse(t.predict(&held).unwrap());
            without += sse(t.pruned_at(f64::INFINITY).predict(&held).unwrap());
        }
        assert!(with < without);
    }

    #[test]
    fn pruning_sequence_is_nested_and_monotone() {
        let xs: Vec<f64> = (0..60).map(|i| ((i * 29) % 61) as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| x * 3.0 + ((i * 7) % 13) as f64 * 8.0)
            .collect();
        let ds = numeric_ds(&xs, &ys);
        let full = fit_tree(&ds, &loose()).unwrap();
        let seq = full.pruning_sequence();
        assert_eq!(seq[0].1.n_leaves(), full.n_leaves());
        assert_eq!(seq.last().unwrap().1.n_leaves(), 1);
        for w in seq.windows(2) {
            assert!(w[0].0 < w[1].0);
            assert!(w[0].1.n_leaves() > w[1].1.n_leaves());
            assert!(w[0].1.training_sse() <= w[1].1.training_sse() + 1e-9);
        }
        let pruned = prune_by_cv(
            &ds,
            &TreeParams {
                prune: Prune::CrossValidation { folds: 10 },
                ..loose()
            },
            3,
        )
        .unwrap();
        assert!(pruned.n_leaves() <= full.n_leaves());
        assert!(full.training_sse() <= pruned.training_sse() + 1e-9);
        assert!(prune_by_cv(&ds, &loose(), 3).is_err());
    }

    #[test]
    fn parameter_validation() {
        assert!(TreeParams::default().validate().is_ok());
        assert!(TreeParams {
            max_depth: 0,
            ..loose()
        }
        .validate()
        .is_err());
        assert!(TreeParams {
            min_split: 1,
            ..loose()
        }
        .validate()
        .is_err());
        assert!(TreeParams {
            min_leaf: 3,
            min_split: 2,
            ..loose()
        }
        .validate()
        .is_err());
        assert!(TreeParams {
            prune: Prune::CrossValidation { folds: 1 },
            ..loose()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn max_depth_caps_growth() {
        let xs: Vec<f64> = (0..64).map(f64::from).collect();
        let ds = numeric_ds(&xs, &xs);
        let t = fit_tree(
            &ds,
            &TreeParams {
                max_depth: 3,
                ..loose()
            },
        )
        .unwrap();
        assert_eq!(t.depth(), 3);
        assert_eq!(t.n_leaves(), 8);
    }
}
