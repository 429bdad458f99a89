use rand::seq::SliceRandom;

use crate::rng;

/// Random partition of `n` rows into `k` folds whose sizes differ by at most
/// one. Returns the fold index of every row.
pub fn assign(n: usize, k: usize, seed: u64, label: &str) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, label, 0));
    let mut fold = vec![0; n];
    for (pos, &row) in order.iter().enumerate() {
        fold[row] = pos % k;
    }
    fold
}
