use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::RandomSource;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionEstimate {
    /// Largest observed `||f(x) - f(y)|| / ||x - y||`.
    pub ratio_sup: f64,
    pub trials: usize,
    pub is_contractive: bool,
}

/// Supremum of pairwise distance ratios over `trials` random pairs.
///
/// `draw_map` is called once per pair, so a randomized operator can fix its
/// randomness (e.g. one permutation) for both points of a pair. Points are
/// standard normal matrices of shape `dim`.
pub fn contraction_ratio<F, M>(
    mut draw_map: F,
    dim: (usize, usize),
    sampler: &mut RandomSource,
    trials: usize,
) -> Result<ContractionEstimate>
where
    F: FnMut(&mut RandomSource) -> M,
    M: Fn(&DenseMatrix) -> DenseMatrix,
{
    if trials < 2 {
        return Err(Error::Parameter(format!("contraction_ratio needs at least 2 trials, got {trials}")));
    }
    let mut sup = 0.0f64;
    for _ in 0..trials {
        let map = draw_map(sampler);
        let (x, y) = loop {
            let x = DenseMatrix::random_normal(dim.0, dim.1, 1.0, sampler);
            let y = DenseMatrix::random_normal(dim.0, dim.1, 1.0, sampler);
            if x.distance(&y)? > 0.0 {
                break (x, y);
            }
        };
        let (fx, fy) = (map(&x), map(&y));
        if fx.shape() != x.shape() || fy.shape() != y.shape() {
            return Err(Error::Shape {
                op: "contraction_ratio",
                left: x.shape(),
                right: fx.shape(),
            });
        }
        sup = sup.max(fx.distance(&fy)? / x.distance(&y)?);
    }
    Ok(ContractionEstimate {
        ratio_sup: sup,
        trials,
        is_contractive: sup < 1.0,
    })
}
