//! Small reference problems.

use super::{Params, Problem};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

/// `f(X) = 0.5 * sum_j c_j * ||X_j - T_j||^2` with `n` equal-weight copies
/// as finite-sum components (component `i` shifts the target by `offsets[i]`).
pub struct Quadratic {
    pub curvature: Vec<f64>,
    pub targets: Vec<DenseMatrix>,
    pub offsets: Vec<f64>,
}

impl Quadratic {
    pub fn new(curvature: Vec<f64>, targets: Vec<DenseMatrix>) -> Self {
        Self {
            curvature,
            targets,
            offsets: vec![0.0],
        }
    }

    /// Splits the objective into one component per offset.
    pub fn with_offsets(mut self, offsets: Vec<f64>) -> Self {
        self.offsets = offsets;
        self
    }

    fn check(&self, params: &[DenseMatrix]) -> Result<()> {
        if params.len() != self.targets.len() || self.curvature.len() != self.targets.len() {
            return Err(Error::Parameter(format!(
                "quadratic has {} blocks, got {} parameter blocks",
                self.targets.len(),
                params.len()
            )));
        }
        Ok(())
    }

    fn component_target(&self, i: usize, j: usize) -> DenseMatrix {
        self.targets[j].map(|t| t + self.offsets[i])
    }
}

impl Problem for Quadratic {
    fn objective(&self, params: &[DenseMatrix]) -> Result<f64> {
        self.check(params)?;
        let n = self.offsets.len() as f64;
        let mut total = 0.0;
        for i in 0..self.offsets.len() {
            for (j, p) in params.iter().enumerate() {
                let d = p.sub(&self.component_target(i, j))?;
                total += 0.5 * self.curvature[j] * d.squared_norm() / n;
            }
        }
        Ok(total)
    }

    fn gradient(&self, params: &[DenseMatrix]) -> Result<Params> {
        let n = self.offsets.len();
        let mut acc: Params = params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect();
        for i in 0..n {
            let g = self.component_gradient(i, params)?;
            for (a, gi) in acc.iter_mut().zip(&g) {
                a.axpy(1.0 / n as f64, gi)?;
            }
        }
        Ok(acc)
    }

    fn components(&self) -> Option<usize> {
        Some(self.offsets.len())
    }

    fn component_gradient(&self, index: usize, params: &[DenseMatrix]) -> Result<Params> {
        self.check(params)?;
        if index >= self.offsets.len() {
            return Err(Error::Index {
                index,
                len: self.offsets.len(),
            });
        }
        params
            .iter()
            .enumerate()
            .map(|(j, p)| Ok(p.sub(&self.component_target(index, j))?.scale(self.curvature[j])))
            .collect()
    }
}

/// Gradient is zero everywhere.
pub struct Flat;

impl Problem for Flat {
    fn objective(&self, _params: &[DenseMatrix]) -> Result<f64> {
        Ok(1.0)
    }

    fn gradient(&self, params: &[DenseMatrix]) -> Result<Params> {
        Ok(params.iter().map(|p| DenseMatrix::zeros(p.rows(), p.cols())).collect())
    }
}
