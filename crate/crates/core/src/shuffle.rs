//! The stochastic gradient operator: a uniformly random column permutation.
//!
//! Column `c` of the output is column `perm[c]` of the input, with `perm`
//! drawn by Fisher-Yates from a [`RandomSource`]. Because the output holds the
//! same multiset of entries, the Frobenius norm is unchanged and the operator
//! norm is exactly one.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::RandomSource;

/// Record of one shuffle applied during an optimizer run.
#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleEvent {
    pub iteration: usize,
    pub permutation: Vec<usize>,
    pub pre_norm: f64,
    pub post_norm: f64,
}

/// Signature of a column shuffle; swapped out in fault-injection tests.
pub type ShuffleFn = fn(&DenseMatrix, &mut RandomSource) -> (DenseMatrix, Vec<usize>);

/// Fisher-Yates: for `i = n-1 .. 1`, swap `i` with `below(i + 1)`.
pub fn random_permutation(n: usize, rng: &mut RandomSource) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i + 1);
        perm.swap(i, j);
    }
    perm
}

/// Applies a fresh uniformly random column permutation to `g`.
pub fn apply_shuffle(g: &DenseMatrix, rng: &mut RandomSource) -> (DenseMatrix, Vec<usize>) {
    let perm = random_permutation(g.cols(), rng);
    let out = g
        .permute_columns(&perm)
        .expect("permutation length matches column count");
    (out, perm)
}

/// Runs `shuffle` on `g` and packages the result as a [`ShuffleEvent`].
pub fn shuffle_event(
    shuffle: ShuffleFn,
    g: &DenseMatrix,
    iteration: usize,
    rng: &mut RandomSource,
) -> (DenseMatrix, ShuffleEvent) {
    let (out, permutation) = shuffle(g, rng);
    let event = ShuffleEvent {
        iteration,
        permutation,
        pre_norm: g.frobenius_norm(),
        post_norm: out.frobenius_norm(),
    };
    (out, event)
}

/// True when `perm` is a bijection on `0..perm.len()`.
pub fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Empirical operator norm: max over `trials` random nonzero `X` of
/// `||op(X)||_F / ||X||_F`.
pub fn estimate_operator_norm(
    op: &mut dyn FnMut(&DenseMatrix) -> DenseMatrix,
    dim: (usize, usize),
    trials: usize,
    rng: &mut RandomSource,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::Parameter("trials must be at least 1".into()));
    }
    let mut sup = 0.0f64;
    for _ in 0..trials {
        let x = loop {
            let x = DenseMatrix::random_normal(dim.0, dim.1, 1.0, rng);
            if x.frobenius_norm() > 0.0 {
                break x;
            }
        };
        let y = op(&x);
        if y.shape() != x.shape() {
            return Err(Error::Shape {
                op: "estimate_operator_norm",
                left: x.shape(),
                right: y.shape(),
            });
        }
        sup = sup.max(y.frobenius_norm() / x.frobenius_norm());
    }
    Ok(sup)
}
