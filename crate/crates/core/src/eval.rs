//! Accuracy criteria for effort models, the k-fold cross-validation runner
//! and the Mann-Whitney U test used to compare absolute residuals.

use std::fmt;

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::{folds, rng, special};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionRecord {
    /// Person-hours; must be positive.
    pub actual: f64,
    pub predicted: f64,
}

impl PredictionRecord {
    pub fn new(actual: f64, predicted: f64) -> Self {
        PredictionRecord { actual, predicted }
    }
}

/// Magnitude of relative error |actual - predicted| / actual.
pub fn mre(r: &PredictionRecord) -> Result<f64> {
    if r.actual.is_nan() || r.actual <= 0.0 {
        return Err(Error::invalid_data(format!(
            "MRE needs a positive actual value, got {}",
            r.actual
        )));
    }
    Ok((r.actual - r.predicted).abs() / r.actual)
}

fn mres(records: &[PredictionRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::invalid_data("no prediction records"));
    }
    records.iter().map(mre).collect()
}

pub fn mmre(records: &[PredictionRecord]) -> Result<f64> {
    let m = mres(records)?;
    Ok(m.iter().sum::<f64>() / m.len() as f64)
}

pub fn mdmre(records: &[PredictionRecord]) -> Result<f64> {
    Ok(median(&mres(records)?))
}

/// Fraction of records whose MRE is at most `x`.
pub fn pred(records: &[PredictionRecord], x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::invalid_param(format!(
            "PRED level must be >= 0, got {x}"
        )));
    }
    let m = mres(records)?;
    Ok(m.iter().filter(|&&e| e <= x).count() as f64 / m.len() as f64)
}

pub fn abs_residuals(records: &[PredictionRecord]) -> Result<Vec<f64>> {
    if records.is_empty() {
        return Err(Error::invalid_data("no prediction records"));
    }
    Ok(records
        .iter()
        .map(|r| (r.actual - r.predicted).abs())
        .collect())
}

/// Median; the mean of the two central order statistics for even lengths.
/// Panics on an empty slice.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mmre: f64,
    pub mdmre: f64,
    /// PRED at `pred_level`.
    pub pred: f64,
    pub pred_level: f64,
    pub median_abs_residual: f64,
    pub n: usize,
    pub records: Vec<PredictionRecord>,
}

impl EvalReport {
    pub const DEFAULT_PRED_LEVEL: f64 = 0.25;

    pub fn new(records: Vec<PredictionRecord>) -> Result<Self> {
        Self::with_pred_level(records, Self::DEFAULT_PRED_LEVEL)
    }

    pub fn with_pred_level(records: Vec<PredictionRecord>, pred_level: f64) -> Result<Self> {
        Ok(EvalReport {
            mmre: mmre(&records)?,
            mdmre: mdmre(&records)?,
            pred: pred(&records, pred_level)?,
            pred_level,
            median_abs_residual: median(&abs_residuals(&records)?),
            n: records.len(),
            records,
        })
    }

    pub fn abs_residuals(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| (r.actual - r.predicted).abs())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
}

/// A model-fitting procedure usable inside cross-validation.
pub trait Trainer: Sync {
    fn name(&self) -> &str;

    /// Fits on `train` and returns one effort prediction per row of `test`.
    /// `seed` is specific to the fold.
    fn fit_predict(&self, train: &Dataset, test: &Dataset, seed: u64) -> Result<Vec<f64>>;
}

/// Out-of-fold predictions for every row, in the original row order.
pub fn kfold_cv(
    ds: &Dataset,
    trainer: &dyn Trainer,
    config: CvConfig,
) -> Result<Vec<PredictionRecord>> {
    let n = ds.n_rows();
    if config.k < 2 || config.k > n {
        return Err(Error::invalid_param(format!(
            "k = {} folds is outside [2, {n}]",
            config.k
        )));
    }
    let assignment = folds::assign(n, config.k, config.seed, "cv-folds");
    let actual = ds.target()?;
    let per_fold: Vec<(Vec<usize>, Vec<f64>)> = (0..config.k)
        .into_par_iter()
        .map(|fold| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..n).partition(|&r| assignment[r] == fold);
            let seed = rng::derive_seed(config.seed, &format!("cv-fold-{fold}"));
            let wrap = |e: Error| Error::Fold {
                fold,
                source: Box::new(e),
            };
            let predicted = trainer
                .fit_predict(&ds.select_rows(&train), &ds.select_rows(&test), seed)
                .map_err(wrap)?;
            if predicted.len() != test.len() {
                return Err(wrap(Error::numeric(format!(
                    "trainer returned {} predictions for {} rows",
                    predicted.len(),
                    test.len()
                ))));
            }
            Ok((test, predicted))
        })
        .collect::<Result<_>>()?;
    let mut out = vec![None; n];
    for (rows, preds) in per_fold {
        for (r, p) in rows.into_iter().zip(preds) {
            out[r] = Some(PredictionRecord::new(actual[r], p));
        }
    }
    Ok(out
        .into_iter()
        .map(|r| r.expect("every row is in one fold"))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UTestMethod {
    Exact,
    NormalApproximation,
}

impl fmt::Display for UTestMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UTestMethod::Exact => "exact",
            UTestMethod::NormalApproximation => "normal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UTestResult {
    /// U statistic of the first sample (midranks for ties).
    pub u: f64,
    pub p_two_sided: f64,
    pub method: UTestMethod,
}

/// Largest number of label arrangements enumerated for the exact test.
pub const EXACT_LIMIT: u64 = 1_000_000;

fn binomial_capped(n: u64, k: u64, cap: u64) -> u64 {
    let k = k.min(n - k);
    let mut c: u64 = 1;
    for i in 0..k {
        c = c * (n - i) / (i + 1);
        if c > cap {
            return cap + 1;
        }
    }
    c
}

/// Doubled midranks of the pooled sample (integers: a tie group spanning
/// positions lo..=hi gets lo + hi) and the tie group sizes.
fn doubled_ranks(pooled: &[f64]) -> (Vec<u64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0u64; pooled.len()];
    let mut ties = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let doubled = (i + 1 + j + 1) as u64;
        for &idx in &order[i..=j] {
            ranks[idx] = doubled;
        }
        ties.push(j - i + 1);
        i = j + 1;
    }
    (ranks, ties)
}

/// Two-sided Mann-Whitney U test of `a` against `b`: exact when at most
/// [`EXACT_LIMIT`] label arrangements exist, normal approximation otherwise.
pub fn mann_whitney_u(a: &[f64], b: &[f64]) -> Result<UTestResult> {
    u_test(a, b, None)
}

/// The U test with the p-value method forced. Exact enumeration is still
/// refused above [`EXACT_LIMIT`] arrangements.
pub fn mann_whitney_u_with(a: &[f64], b: &[f64], method: UTestMethod) -> Result<UTestResult> {
    u_test(a, b, Some(method))
}

fn u_test(a: &[f64], b: &[f64], force: Option<UTestMethod>) -> Result<UTestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid_data(
            "Mann-Whitney U needs two nonempty samples",
        ));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::invalid_data("Mann-Whitney U needs finite values"));
    }
    let (n1, n2) = (a.len() as u64, b.len() as u64);
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let (ranks, ties) = doubled_ranks(&pooled);
    let r1_doubled: u64 = ranks[..a.len()].iter().sum();
    // 2U = 2R1 - n1(n1 + 1)
    let u2 = r1_doubled - n1 * (n1 + 1);
    let u = u2 as f64 / 2.0;
    let total2 = 2 * n1 * n2;
    let observed = u2.min(total2 - u2);

    let enumerable = binomial_capped(n, n1, EXACT_LIMIT) <= EXACT_LIMIT;
    if force == Some(UTestMethod::Exact) && !enumerable {
        return Err(Error::invalid_param(format!(
            "exact U test over C({n}, {n1}) arrangements exceeds {EXACT_LIMIT}"
        )));
    }
    if enumerable && force != Some(UTestMethod::NormalApproximation) {
        let (extreme, total) = enumerate_extreme(&ranks, n1 as usize, n1, total2, observed);
        return Ok(UTestResult {
            u,
            p_two_sided: (extreme as f64 / total as f64).min(1.0),
            method: UTestMethod::Exact,
        });
    }

    let (nf, n1f, n2f) = (n as f64, n1 as f64, n2 as f64);
    let tie_term: f64 = ties
        .iter()
        .map(|&t| {
            let t = t as f64;
            t * t * t - t
        })
        .sum();
    let var = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term / (nf * (nf - 1.0)));
    let mean = n1f * n2f / 2.0;
    if var <= 0.0 {
        if u == mean {
            return Ok(UTestResult {
                u,
                p_two_sided: 1.0,
                method: UTestMethod::NormalApproximation,
            });
        }
        return Err(Error::numeric("zero variance in the U statistic"));
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    Ok(UTestResult {
        u,
        p_two_sided: (2.0 * special::normal_cdf(-z)).min(1.0),
        method: UTestMethod::NormalApproximation,
    })
}

/// Enumerates every choice of `k` positions as the first sample and counts
/// those whose doubled U is at least as extreme as `observed`.
fn enumerate_extreme(ranks: &[u64], k: usize, n1: u64, total2: u64, observed: u64) -> (u64, u64) {
    struct Walk<'a> {
        ranks: &'a [u64],
        offset: u64,
        total2: u64,
        observed: u64,
        extreme: u64,
        total: u64,
    }
    impl Walk<'_> {
        fn go(&mut self, start: usize, left: usize, sum: u64) {
            if left == 0 {
                let u2 = sum - self.offset;
                self.total += 1;
                if u2.min(self.total2 - u2) <= self.observed {
                    self.extreme += 1;
                }
                return;
            }
            for i in start..=self.ranks.len() - left {
                self.go(i + 1, left - 1, sum + self.ranks[i]);
            }
        }
    }
    let mut w = Walk {
        ranks,
        offset: n1 * (n1 + 1),
        total2,
        observed,
        extreme: 0,
        total: 0,
    };
    w.go(0, k, 0);
    (w.extreme, w.total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub model_a: String,
    pub model_b: String,
    pub result: UTestResult,
}

/// Pairwise U tests on absolute residuals, for every pair in input order.
pub fn compare_models(reports: &[(String, EvalReport)]) -> Result<Vec<Comparison>> {
    if let Some((first_name, first)) = reports.first() {
        for (name, r) in &reports[1..] {
            let same = r.records.len() == first.records.len()
                && r.records
                    .iter()
                    .zip(&first.records)
                    .all(|(x, y)| x.actual == y.actual);
            if !same {
                return Err(Error::invalid_data(format!(
                    "reports `{first_name}` and `{name}` cover different rows"
                )));
            }
        }
    }
    let mut out = Vec::new();
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let result =
                mann_whitney_u(&reports[i].1.abs_residuals(), &reports[j].1.abs_residuals())?;
            out.push(Comparison {
                model_a: reports[i].0.clone(),
                model_b: reports[j].0.clone(),
                result,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{read_csv, Schema};

    fn recs(pairs: &[(f64, f64)]) -> Vec<PredictionRecord> {
        pairs
            .iter()
            .map(|&(a, p)| PredictionRecord::new(a, p))
            .collect()
    }

    /// Records with the given MREs (actual 100, overestimates).
    fn with_mres(m: &[f64]) -> Vec<PredictionRecord> {
        m.iter()
            .map(|&e| PredictionRecord::new(100.0, 100.0 * (1.0 + e)))
            .collect()
    }

    #[test]
    fn mre_examples() {
        assert_eq!(mre(&PredictionRecord::new(100.0, 150.0)).unwrap(), 0.5);
        assert_eq!(mre(&PredictionRecord::new(42.0, 42.0)).unwrap(), 0.0);
        assert_eq!(mre(&PredictionRecord::new(200.0, 100.0)).unwrap(), 0.5);
        assert!(mre(&PredictionRecord::new(0.0, 1.0)).is_err());
        assert!(mre(&PredictionRecord::new(-3.0, 1.0)).is_err());
    }

    #[test]
    fn mmre_examples() {
        assert_eq!(mmre(&recs(&[(100.0, 150.0), (100.0, 50.0)])).unwrap(), 0.5);
        assert_eq!(mmre(&recs(&[(3.0, 3.0), (9.0, 9.0)])).unwrap(), 0.0);
        assert!(mmre(&[]).is_err());
    }

    #[test]
    fn mdmre_examples() {
        let m = mdmre(&recs(&[(10.0, 11.0), (10.0, 12.0), (10.0, 19.0)])).unwrap();
        assert!((m - 0.2).abs() < 1e-12);
        let m = mdmre(&recs(&[(10.0, 11.0), (10.0, 13.0)])).unwrap();
        assert!((m - 0.2).abs() < 1e-12);
        assert!(mdmre(&[]).is_err());
    }

    #[test]
    fn mdmre_ignores_outlying_max() {
        let base = recs(&[(100.0, 110.0), (100.0, 130.0), (100.0, 190.0)]);
        let mut wild = base.clone();
        wild[2].predicted = 100.0 + 90.0 * 100.0;
        assert_eq!(mdmre(&base).unwrap(), mdmre(&wild).unwrap());
    }

    #[test]
    fn pred_examples() {
        let r = with_mres(&[0.1, 0.2, 0.3, 0.5]);
        assert_eq!(pred(&r, 0.25).unwrap(), 0.5);
        // MRE exactly at the level counts.
        let r = recs(&[(100.0, 125.0), (100.0, 175.0)]);
        assert_eq!(pred(&r, 0.25).unwrap(), 0.5);
        assert_eq!(pred(&r, f64::INFINITY).unwrap(), 1.0);
        assert!(pred(&[], 0.25).is_err());
        assert!(pred(&r, -0.1).is_err());
    }

    #[test]
    fn abs_residual_examples() {
        assert_eq!(abs_residuals(&recs(&[(100.0, 150.0)])).unwrap(), vec![50.0]);
        assert_eq!(
            abs_residuals(&recs(&[(5.0, 5.0), (7.0, 7.0)])).unwrap(),
            vec![0.0, 0.0]
        );
        assert!(abs_residuals(&[]).is_err());
    }

    #[test]
    fn report_is_recomputable() {
        let r = EvalReport::new(recs(&[(100.0, 80.0), (50.0, 70.0), (20.0, 21.0)])).unwrap();
        assert_eq!(r.n, 3);
        assert_eq!(r.mmre, mmre(&r.records).unwrap());
        assert_eq!(r.median_abs_residual, 20.0);
    }

    struct MeanTrainer;

    impl Trainer for MeanTrainer {
        fn name(&self) -> &str {
            "mean"
        }
        fn fit_predict(&self, train: &Dataset, test: &Dataset, _: u64) -> Result<Vec<f64>> {
            let y = train.target()?;
            let m = y.iter().sum::<f64>() / y.len() as f64;
            Ok(vec![m; test.n_rows()])
        }
    }

    fn four_rows() -> Dataset {
        let s = Schema::parse("x = numeric\ny = numeric\ntarget = y").unwrap();
        read_csv("x,y\n1,10\n2,20\n3,40\n4,80\n".as_bytes(), &s).unwrap()
    }

    #[test]
    fn two_fold_mean_trainer() {
        let ds = four_rows();
        let cfg = CvConfig { k: 2, seed: 5 };
        let records = kfold_cv(&ds, &MeanTrainer, cfg).unwrap();
        let fold = folds::assign(4, 2, 5, "cv-folds");
        let y = [10.0, 20.0, 40.0, 80.0];
        for (i, r) in records.iter().enumerate() {
            assert_eq!(r.actual, y[i]);
            let other: Vec<f64> = (0..4)
                .filter(|&j| fold[j] != fold[i])
                .map(|j| y[j])
                .collect();
            assert_eq!(r.predicted, other.iter().sum::<f64>() / other.len() as f64);
        }
        assert_eq!(kfold_cv(&ds, &MeanTrainer, cfg).unwrap(), records);
    }

    #[test]
    fn leave_one_out() {
        struct SizeCheck;
        impl Trainer for SizeCheck {
            fn name(&self) -> &str {
                "size"
            }
            fn fit_predict(&self, train: &Dataset, test: &Dataset, _: u64) -> Result<Vec<f64>> {
                assert_eq!(train.n_rows(), 3);
                Ok(vec![1.0; test.n_rows()])
            }
        }
        let ds = four_rows();
        let r = kfold_cv(&ds, &SizeCheck, CvConfig { k: 4, seed: 0 }).unwrap();
        assert_eq!(r.len(), 4);
        assert!(kfold_cv(&ds, &SizeCheck, CvConfig { k: 5, seed: 0 }).is_err());
        assert!(kfold_cv(&ds, &SizeCheck, CvConfig { k: 1, seed: 0 }).is_err());
    }

    #[test]
    fn trainer_errors_carry_fold_index() {
        struct Fails;
        impl Trainer for Fails {
            fn name(&self) -> &str {
                "fails"
            }
            fn fit_predict(&self, _: &Dataset, _: &Dataset, _: u64) -> Result<Vec<f64>> {
                Err(Error::numeric("boom"))
            }
        }
        let err = kfold_cv(&four_rows(), &Fails, CvConfig { k: 2, seed: 0 }).unwrap_err();
        assert!(matches!(err, Error::Fold { .. }));
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn u_test_separated_samples() {
        let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.method, UTestMethod::Exact);
        assert!((r.p_two_sided - 0.1).abs() < 1e-15);
    }

    #[test]
    fn u_test_identical_samples() {
        let r = mann_whitney_u(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(r.u, 2.0);
        assert_eq!(r.p_two_sided, 1.0);
    }

    #[test]
    fn u_test_large_all_tied_is_one() {
        let a = vec![3.0; 30];
        let r = mann_whitney_u(&a, &a).unwrap();
        assert_eq!(r.method, UTestMethod::NormalApproximation);
        assert_eq!(r.p_two_sided, 1.0);
        assert!(mann_whitney_u(&[], &[1.0]).is_err());
    }

    #[test]
    fn u_complement() {
        let a = [1.5, 2.0, 2.0, 7.0];
        let b = [2.0, 3.0, 0.5];
        let ab = mann_whitney_u(&a, &b).unwrap();
        let ba = mann_whitney_u(&b, &a).unwrap();
        assert_eq!(ab.u + ba.u, 12.0);
        assert!((ab.p_two_sided - ba.p_two_sided).abs() < 1e-15);
    }

    #[test]
    fn compare_models_checks_rows() {
        let a = EvalReport::new(recs(&[(10.0, 12.0), (20.0, 18.0), (30.0, 33.0)])).unwrap();
        let b = EvalReport::new(recs(&[(10.0, 15.0), (20.0, 11.0), (30.0, 39.0)])).unwrap();
        let c = EvalReport::new(recs(&[(11.0, 15.0), (20.0, 11.0), (30.0, 39.0)])).unwrap();
        let same = compare_models(&[("a".into(), a.clone()), ("a2".into(), a.clone())]).unwrap();
        assert_eq!(same[0].result.p_two_sided, 1.0);
        let three = compare_models(&[
            ("a".into(), a.clone()),
            ("b".into(), b.clone()),
            ("x".into(), a.clone()),
        ])
        .unwrap();
        let pairs: Vec<_> = three
            .iter()
            .map(|c| (c.model_a.as_str(), c.model_b.as_str()))
            .collect();
        assert_eq!(pairs, vec![("a", "b"), ("a", "x"), ("b", "x")]);
        assert!(compare_models(&[("a".into(), a), ("c".into(), c)]).is_err());
    }
}
