//! Independent reference implementations shared by the integration tests and
//! the acceptance suite.
#![allow(dead_code)]

use effort_core::dataset::{Column, ColumnSpec, Dataset, Kind, Schema};

/// Ten records whose MREs are small fractions; three sit exactly on 0.25.
pub const METRIC_FIXTURE: [(f64, f64); 10] = [
    (100.0, 150.0),
    (200.0, 100.0),
    (400.0, 400.0),
    (80.0, 100.0),
    (1000.0, 750.0),
    (250.0, 300.0),
    (120.0, 60.0),
    (500.0, 525.0),
    (64.0, 80.0),
    (3000.0, 2000.0),
];
/// Exact values worked out by hand with rational arithmetic.
pub const FIXTURE_MRE: [f64; 10] = [0.5, 0.5, 0.0, 0.25, 0.25, 0.2, 0.5, 0.05, 0.25, 1.0 / 3.0];
pub const FIXTURE_MMRE: f64 = 17.0 / 60.0;
pub const FIXTURE_MDMRE: f64 = 0.25;
pub const FIXTURE_PRED25: f64 = 0.6;
pub const FIXTURE_MEDIAN_ABS_RESIDUAL: f64 = 50.0;

/// Two-sided exact Mann-Whitney p by enumerating every assignment of the
/// pooled values to the first sample, with U counted pairwise (ties = 1/2).
pub fn brute_force_u(a: &[f64], b: &[f64]) -> (f64, f64) {
    fn u_of(a: &[f64], b: &[f64]) -> f64 {
        let mut u = 0.0;
        for x in a {
            for y in b {
                if x > y {
                    u += 1.0;
                } else if x == y {
                    u += 0.5;
                }
            }
        }
        u
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = pooled.len();
    let n1 = a.len();
    let total = (n1 * b.len()) as f64;
    let observed = u_of(a, b);
    let obs_ext = observed.min(total - observed);
    let (mut hits, mut count) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != n1 {
            continue;
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for (i, v) in pooled.iter().enumerate() {
            if mask >> i & 1 == 1 {
                x.push(*v);
            } else {
                y.push(*v);
            }
        }
        let u = u_of(&x, &y);
        count += 1;
        if u.min(total - u) <= obs_ext + 1e-9 {
            hits += 1;
        }
    }
    (observed, hits as f64 / count as f64)
}

pub fn sse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m).powi(2)).sum()
}

/// A root partition found by exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub enum OraclePartition {
    Threshold(f64),
    /// Levels sent to one side (the other side is the complement).
    Levels(Vec<String>),
}

/// Every admissible root partition of a dataset with one numeric feature
/// `x` and one categorical feature `c`, returning the minimum children SSE
/// and all partitions achieving it (within a relative tolerance), grouped by
/// feature index. Numeric partitions are listed by increasing threshold.
pub fn exhaustive_root(
    x: &[f64],
    c: &[String],
    y: &[f64],
    min_leaf: usize,
) -> Option<(f64, Vec<(usize, OraclePartition)>)> {
    let n = y.len();
    let parent = sse(y);
    let mut all: Vec<(usize, OraclePartition, f64)> = Vec::new();
    let mut xs: Vec<f64> = x.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    for w in xs.windows(2) {
        let t = (w[0] + w[1]) / 2.0;
        let (l, r): (Vec<f64>, Vec<f64>) = (0..n).map(|i| (x[i] <= t, y[i])).fold(
            (Vec::new(), Vec::new()),
            |(mut l, mut r), (left, v)| {
                if left {
                    l.push(v)
                } else {
                    r.push(v)
                }
                (l, r)
            },
        );
        if l.len() >= min_leaf && r.len() >= min_leaf {
            all.push((0, OraclePartition::Threshold(t), sse(&l) + sse(&r)));
        }
    }
    let mut levels: Vec<String> = c.to_vec();
    levels.sort();
    levels.dedup();
    let lcount = levels.len();
    if lcount >= 2 {
        // Subsets containing the first level, to count each partition once.
        for mask in 0u32..(1 << lcount) {
            if mask & 1 == 0 || mask == (1 << lcount) - 1 {
                continue;
            }
            let side: Vec<String> = (0..lcount)
                .filter(|i| mask >> i & 1 == 1)
                .map(|i| levels[i].clone())
                .collect();
            let (mut l, mut r) = (Vec::new(), Vec::new());
            for i in 0..n {
                if side.contains(&c[i]) {
                    l.push(y[i])
                } else {
                    r.push(y[i])
                }
            }
            if l.len() >= min_leaf && r.len() >= min_leaf {
                all.push((1, OraclePartition::Levels(side), sse(&l) + sse(&r)));
            }
        }
    }
    let tol = 1e-10 * parent;
    let best = all.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    if !best.is_finite() || parent - best <= tol {
        return None;
    }
    let winners = all
        .into_iter()
        .filter(|p| p.2 <= best + tol)
        .map(|p| (p.0, p.1))
        .collect();
    Some((best, winners))
}

pub fn two_feature_dataset(x: &[f64], c: &[String], y: &[f64]) -> Dataset {
    let schema = Schema::new(
        vec![
            ColumnSpec {
                name: "x".into(),
                kind: Kind::Numeric,
            },
            ColumnSpec {
                name: "c".into(),
                kind: Kind::Categorical,
            },
            ColumnSpec {
                name: "y".into(),
                kind: Kind::Numeric,
            },
        ],
        "y",
    )
    .unwrap();
    let labels: Vec<Option<&str>> = c.iter().map(|s| Some(s.as_str())).collect();
    Dataset::from_columns(
        schema,
        vec![
            Column::Numeric(x.iter().map(|v| Some(*v)).collect()),
            Column::categorical(&labels),
            Column::Numeric(y.iter().map(|v| Some(*v)).collect()),
        ],
    )
    .unwrap()
}

pub fn numeric_dataset(columns: &[(&str, Vec<f64>)], target: &str) -> Dataset {
    let schema = Schema::new(
        columns
            .iter()
            .map(|(n, _)| ColumnSpec {
                name: n.to_string(),
                kind: Kind::Numeric,
            })
            .collect(),
        target,
    )
    .unwrap();
    Dataset::from_columns(
        schema,
        columns
            .iter()
            .map(|(_, v)| Column::Numeric(v.iter().map(|x| Some(*x)).collect()))
            .collect(),
    )
    .unwrap()
}

use effort_core::cart::{Condition, Prune, RegressionTree, TreeNode, TreeParams};
use effort_core::dataset::Value;

/// Fits a depth-1 tree and checks its root split against exhaustive search.
pub fn check_root_split(x: &[f64], c: &[String], y: &[f64], min_leaf: usize) -> Result<(), String> {
    let ds = two_feature_dataset(x, c, y);
    let params = TreeParams {
        max_depth: 1,
        min_split: 2 * min_leaf,
        min_leaf,
        prune: Prune::None,
    };
    let tree = effort_core::fit_tree(&ds, &params).map_err(|e| e.to_string())?;
    let oracle = exhaustive_root(x, c, y, min_leaf);
    let root = tree.root();
    match (&root.split, oracle) {
        (None, None) => Ok(()),
        (Some(rule), None) => Err(format!("tree split on {rule} but no split reduces the SSE")),
        (None, Some((best, _))) => Err(format!("tree made no split; optimum children SSE {best}")),
        (Some(rule), Some((best, winners))) => {
            let (l, r) = &**root.children.as_ref().unwrap();
            let cost = l.sse + r.sse;
            if (cost - best).abs() > 1e-9 * sse(y).max(1.0) {
                return Err(format!("children SSE {cost}, optimum {best}"));
            }
            let first_feature = winners[0].0;
            let feature = if rule.feature == "x" { 0 } else { 1 };
            if feature != first_feature {
                return Err(format!(
                    "split on feature {feature}, tie-break wants {first_feature}"
                ));
            }
            match &rule.condition {
                Condition::Threshold(t) => match &winners[0].1 {
                    OraclePartition::Threshold(o) if o == t => Ok(()),
                    other => Err(format!("threshold {t}, oracle {other:?}")),
                },
                Condition::Categories { left, right } => {
                    let matches = winners.iter().any(|(_, p)| match p {
                        OraclePartition::Levels(side) => side == left || side == right,
                        _ => false,
                    });
                    if matches {
                        Ok(())
                    } else {
                        Err(format!("levels {left:?} not among optima {winners:?}"))
                    }
                }
            }
        }
    }
}

fn goes_left(ds: &Dataset, node: &TreeNode, row: usize) -> bool {
    let rule = node.split.as_ref().unwrap();
    match (&rule.condition, ds.value(&rule.feature, row).unwrap()) {
        (Condition::Threshold(t), Value::Num(v)) => v <= *t,
        (Condition::Categories { left, .. }, Value::Cat(l)) => left.iter().any(|x| x == l),
        other => panic!("unexpected routing input {other:?}"),
    }
}

/// Replays the training rows through the tree: every node's size and mean
/// must match the rows reaching it, and child sizes must respect `min_leaf`.
pub fn check_leaf_means(tree: &RegressionTree, ds: &Dataset) -> Result<(), String> {
    fn go(
        node: &TreeNode,
        ds: &Dataset,
        y: &[f64],
        rows: Vec<usize>,
        min_leaf: usize,
    ) -> Result<(), String> {
        let sum: f64 = rows.iter().map(|&r| y[r]).sum();
        if node.n != rows.len() {
            return Err(format!(
                "node claims n={} but {} rows reach it",
                node.n,
                rows.len()
            ));
        }
        if (node.mean * node.n as f64 - sum).abs() > 1e-9 * sum.abs().max(1.0) {
            return Err(format!(
                "node mean {} but replayed mean {}",
                node.mean,
                sum / rows.len() as f64
            ));
        }
        if let Some(children) = &node.children {
            let (l, r): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&row| goes_left(ds, node, row));
            if l.len() < min_leaf || r.len() < min_leaf {
                return Err("child below min_leaf".into());
            }
            go(&children.0, ds, y, l, min_leaf)?;
            go(&children.1, ds, y, r, min_leaf)?;
        }
        Ok(())
    }
    let y = ds.target().map_err(|e| e.to_string())?;
    go(
        tree.root(),
        ds,
        &y,
        (0..ds.n_rows()).collect(),
        tree.params().min_leaf,
    )
}
