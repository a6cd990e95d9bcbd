//! Scaled-form ADMM for `min ||Z||_1  s.t.  A X Y + Z = S`.
//!
//! `A` is a frozen prefix (absent for the first layer), `X` and `Y` are
//! updated by ridge-damped least squares against the target `S - Z - U`,
//! `Z` by soft thresholding at `1/beta`, and `U` accumulates the residual.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{soft_threshold, solve_spd, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmConfig {
    /// Penalty parameter.
    pub beta: f64,
    /// Diagonal damping added to every normal-equation system.
    pub ridge: f64,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { beta: 1.0, ridge: 1e-8 }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("admm beta must be > 0, got {}", self.beta)));
        }
        if !(self.ridge >= 0.0) {
            return Err(Error::Config(format!("admm ridge must be >= 0, got {}", self.ridge)));
        }
        Ok(())
    }
}

/// Borrowed view of a constrained layer: target `S` and optional frozen prefix.
/// Parameters are laid out as `[X, Y, Z]`.
#[derive(Debug, Clone, Copy)]
pub struct AdmmSplit<'a> {
    pub target: &'a DenseMatrix,
    pub prefix: Option<&'a DenseMatrix>,
}

#[derive(Debug, Clone)]
pub struct AdmmState {
    pub prefix: Option<DenseMatrix>,
    pub x: DenseMatrix,
    pub y: DenseMatrix,
    pub z: DenseMatrix,
    /// Scaled dual variable.
    pub u: DenseMatrix,
    pub beta: f64,
    pub ridge: f64,
}

impl AdmmState {
    pub fn new(
        prefix: Option<DenseMatrix>,
        x: DenseMatrix,
        y: DenseMatrix,
        z: DenseMatrix,
        config: AdmmConfig,
    ) -> Result<Self> {
        config.validate()?;
        let u = DenseMatrix::zeros(z.rows(), z.cols());
        let state = Self {
            prefix,
            x,
            y,
            z,
            u,
            beta: config.beta,
            ridge: config.ridge,
        };
        state.check_dims(None)?;
        Ok(state)
    }

    pub fn from_params(split: AdmmSplit<'_>, params: &[DenseMatrix], config: AdmmConfig) -> Result<Self> {
        if params.len() != 3 {
            return Err(Error::Parameter(format!(
                "admm expects [X, Y, Z] parameter blocks, got {}",
                params.len()
            )));
        }
        let state = Self::new(
            split.prefix.cloned(),
            params[0].clone(),
            params[1].clone(),
            params[2].clone(),
            config,
        )?;
        state.check_dims(Some(split.target))?;
        Ok(state)
    }

    pub fn write_params(&self, params: &mut [DenseMatrix]) {
        params[0].clone_from(&self.x);
        params[1].clone_from(&self.y);
        params[2].clone_from(&self.z);
    }

    fn check_dims(&self, target: Option<&DenseMatrix>) -> Result<()> {
        let lead = self.prefix.as_ref().map(|a| a.shape());
        let x_rows = lead.map(|(_, c)| c).unwrap_or(self.x.rows());
        let m = lead.map(|(r, _)| r).unwrap_or(self.x.rows());
        let shape_err = |l, r| Err(Error::Shape {
            op: "admm_state",
            left: l,
            right: r,
        });
        if self.x.rows() != x_rows {
            return shape_err(self.prefix.as_ref().unwrap().shape(), self.x.shape());
        }
        if self.x.cols() != self.y.rows() {
            return shape_err(self.x.shape(), self.y.shape());
        }
        if self.z.shape() != (m, self.y.cols()) {
            return shape_err((m, self.y.cols()), self.z.shape());
        }
        if self.u.shape() != self.z.shape() {
            return shape_err(self.z.shape(), self.u.shape());
        }
        if let Some(s) = target {
            if s.shape() != self.z.shape() {
                return shape_err(s.shape(), self.z.shape());
            }
        }
        Ok(())
    }

    /// `A X` (or `X` without a prefix).
    pub fn mixing(&self) -> Result<DenseMatrix> {
        match &self.prefix {
            Some(a) => a.matmul(&self.x),
            None => Ok(self.x.clone()),
        }
    }

    /// `A X Y + Z - S`
    pub fn residual(&self, s: &DenseMatrix) -> Result<DenseMatrix> {
        let mut r = self.mixing()?.matmul(&self.y)?;
        r.axpy(1.0, &self.z)?;
        r.axpy(-1.0, s)?;
        Ok(r)
    }

    pub fn primal_residual(&self, s: &DenseMatrix) -> Result<f64> {
        Ok(self.residual(s)?.frobenius_norm())
    }
}

/// One ADMM pass: X, Y, Z, then the dual.
pub fn admm_deep_mf_step(state: &mut AdmmState, s: &DenseMatrix) -> Result<()> {
    state.check_dims(Some(s))?;
    let ridge = state.ridge;

    // least-squares target for the product term
    let mut t = s.sub(&state.z)?;
    t.axpy(-1.0, &state.u)?;

    // X: min ||A X Y - T||  ->  (A^T A) X (Y Y^T) = A^T T Y^T
    let yyt = state.y.matmul_t(&state.y)?;
    let lhs_t = match &state.prefix {
        Some(a) => {
            let ata = a.t_matmul(a)?;
            let rhs = a.t_matmul(&t)?.matmul_t(&state.y)?;
            solve_spd(&ata, &rhs, ridge)?.transpose()
        }
        None => t.matmul_t(&state.y)?.transpose(),
    };
    state.x = solve_spd(&yyt, &lhs_t, ridge)?.transpose();

    // Y: min ||P Y - T||  ->  (P^T P) Y = P^T T
    let p = state.mixing()?;
    let ptp = p.t_matmul(&p)?;
    state.y = solve_spd(&ptp, &p.t_matmul(&t)?, ridge)?;

    // Z: prox of ||.||_1 / beta at S - P Y - U
    let py = p.matmul(&state.y)?;
    let mut z_target = s.sub(&py)?;
    z_target.axpy(-1.0, &state.u)?;
    state.z = soft_threshold(&z_target, 1.0 / state.beta)?;

    // U += P Y + Z - S
    let mut r = py;
    r.axpy(1.0, &state.z)?;
    r.axpy(-1.0, s)?;
    state.u.axpy(1.0, &r)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomSource;

    fn random_state(m: usize, n: usize, r: usize, seed: u64) -> (AdmmState, DenseMatrix) {
        let mut rng = RandomSource::new(seed);
        let s = DenseMatrix::random_normal(m, n, 1.0, &mut rng);
        let x = DenseMatrix::random_uniform(m, r, -0.1, 0.1, &mut rng);
        let y = DenseMatrix::random_uniform(r, n, -0.1, 0.1, &mut rng);
        let st = AdmmState::new(None, x, y, DenseMatrix::zeros(m, n), AdmmConfig::default()).unwrap();
        (st, s)
    }

    #[test]
    fn exact_factorization_is_a_fixed_point() {
        let mut rng = RandomSource::new(1);
        let x = DenseMatrix::random_normal(6, 2, 1.0, &mut rng);
        let y = DenseMatrix::random_normal(2, 7, 1.0, &mut rng);
        let s = x.matmul(&y).unwrap();
        let mut st = AdmmState::new(None, x.clone(), y.clone(), DenseMatrix::zeros(6, 7), AdmmConfig::default()).unwrap();
        assert_eq!(st.primal_residual(&s).unwrap(), 0.0);
        admm_deep_mf_step(&mut st, &s).unwrap();
        assert!(st.primal_residual(&s).unwrap() < 1e-6);
        assert!(st.x.matmul(&st.y).unwrap().distance(&s).unwrap() < 1e-6);
        assert_eq!(st.z, DenseMatrix::zeros(6, 7));
    }

    #[test]
    fn residual_shrinks_on_random_instance() {
        let (mut st, s) = random_state(8, 10, 3, 2);
        let r0 = st.primal_residual(&s).unwrap();
        for _ in 0..50 {
            admm_deep_mf_step(&mut st, &s).unwrap();
        }
        assert!(st.primal_residual(&s).unwrap() < r0);
    }

    #[test]
    fn small_z_targets_are_annihilated() {
        let (mut st, s) = random_state(8, 10, 2, 3);
        admm_deep_mf_step(&mut st, &s).unwrap();
        // recompute the Z target of the pass just taken (U was zero before it)
        let py = st.mixing().unwrap().matmul(&st.y).unwrap();
        let target = s.sub(&py).unwrap();
        for (t, z) in target.data().iter().zip(st.z.data()) {
            if t.abs() < 1.0 / st.beta {
                assert_eq!(*z, 0.0);
            }
        }
    }

    #[test]
    fn prefix_layer_shapes() {
        let mut rng = RandomSource::new(4);
        let a = DenseMatrix::random_normal(8, 4, 1.0, &mut rng);
        let x = DenseMatrix::random_normal(4, 2, 0.1, &mut rng);
        let y = DenseMatrix::random_normal(2, 10, 0.1, &mut rng);
        let s = DenseMatrix::random_normal(8, 10, 1.0, &mut rng);
        let mut st = AdmmState::new(Some(a), x, y, DenseMatrix::zeros(8, 10), AdmmConfig::default()).unwrap();
        let r0 = st.primal_residual(&s).unwrap();
        for _ in 0..30 {
            admm_deep_mf_step(&mut st, &s).unwrap();
        }
        assert_eq!(st.x.shape(), (4, 2));
        assert!(st.primal_residual(&s).unwrap() < r0);
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let x = DenseMatrix::zeros(4, 2);
        let y = DenseMatrix::zeros(3, 5);
        assert!(AdmmState::new(None, x, y, DenseMatrix::zeros(4, 5), AdmmConfig::default()).is_err());
        let (mut st, _) = random_state(4, 5, 2, 0);
        assert!(admm_deep_mf_step(&mut st, &DenseMatrix::zeros(4, 6)).is_err());
    }

    #[test]
    fn degenerate_normal_equations_report_condition() {
        let x = DenseMatrix::zeros(4, 2);
        let y = DenseMatrix::zeros(2, 5);
        let cfg = AdmmConfig { beta: 1.0, ridge: 0.0 };
        let mut st = AdmmState::new(None, x, y, DenseMatrix::zeros(4, 5), cfg).unwrap();
        let err = admm_deep_mf_step(&mut st, &DenseMatrix::zeros(4, 5)).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }
}
