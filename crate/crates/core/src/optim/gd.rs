use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// `x - sigma * grad`
pub fn gd_step(x: &DenseMatrix, grad: &DenseMatrix, sigma: f64) -> Result<DenseMatrix> {
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("gd step length must be > 0, got {sigma}")));
    }
    x.zip_map(grad, "gd_step", |a, g| a - sigma * g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_stationary() {
        let x = DenseMatrix::from_fn(2, 3, |r, c| (r * 3 + c) as f64);
        assert_eq!(gd_step(&x, &DenseMatrix::zeros(2, 3), 0.5).unwrap(), x);
    }

    #[test]
    fn scalar_square() {
        // f(x) = x^2 at x = 2, f'(x) = 4, sigma = 0.1
        let x = DenseMatrix::new(1, 1, vec![2.0]).unwrap();
        let g = DenseMatrix::new(1, 1, vec![4.0]).unwrap();
        let next = gd_step(&x, &g, 0.1).unwrap();
        assert!((next.get(0, 0) - 1.6).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let err = gd_step(&DenseMatrix::zeros(2, 2), &DenseMatrix::zeros(2, 3), 0.1).unwrap_err();
        assert!(matches!(err, Error::Shape { .. }));
    }
}
