//! Stochastic variance-reduced gradient.
//!
//! Each epoch snapshots `x~`, computes the full mean gradient `mu` there and
//! then takes inner steps along `grad f_i(x) - grad f_i(x~) + mu` with `i`
//! drawn uniformly.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::RandomSource;

use super::{OptimizerTrace, Params, Problem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvrgConfig {
    pub eta: f64,
    /// Inner loop length; `None` means twice the component count.
    pub inner_steps: Option<usize>,
}

impl Default for SvrgConfig {
    fn default() -> Self {
        Self {
            eta: 5e-4,
            inner_steps: None,
        }
    }
}

impl SvrgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config(format!("svrg eta must be > 0, got {}", self.eta)));
        }
        if self.inner_steps == Some(0) {
            return Err(Error::Config("svrg inner_steps must be at least 1".into()));
        }
        Ok(())
    }
}

fn component_count(problem: &dyn Problem) -> Result<usize> {
    match problem.components() {
        Some(n) if n >= 1 => Ok(n),
        Some(_) => Err(Error::Capability("finite-sum view has no components".into())),
        None => Err(Error::Capability("problem has no finite-sum view".into())),
    }
}

/// `(1/n) sum_i grad f_i(x)`.
pub fn full_mean_gradient(problem: &dyn Problem, x: &[DenseMatrix]) -> Result<Params> {
    let n = component_count(problem)?;
    let mut acc: Params = x.iter().map(|b| DenseMatrix::zeros(b.rows(), b.cols())).collect();
    for i in 0..n {
        let g = problem.component_gradient(i, x)?;
        for (a, gi) in acc.iter_mut().zip(&g) {
            a.axpy(1.0, gi)?;
        }
    }
    let inv = 1.0 / n as f64;
    Ok(acc.into_iter().map(|a| a.scale(inv)).collect())
}

#[derive(Debug, Clone)]
pub struct SvrgState {
    snapshot: Params,
    mu: Params,
    eta: f64,
    inner_steps: usize,
    components: usize,
    rng: RandomSource,
}

impl SvrgState {
    pub fn new(problem: &dyn Problem, _x: &[DenseMatrix], config: SvrgConfig, rng: RandomSource) -> Result<Self> {
        config.validate()?;
        let components = component_count(problem)?;
        Ok(Self {
            snapshot: Vec::new(),
            mu: Vec::new(),
            eta: config.eta,
            inner_steps: config.inner_steps.unwrap_or(2 * components),
            components,
            rng,
        })
    }

    pub fn snapshot(&self) -> &[DenseMatrix] {
        &self.snapshot
    }

    pub fn mean_gradient(&self) -> &[DenseMatrix] {
        &self.mu
    }

    pub fn inner_steps(&self) -> usize {
        self.inner_steps
    }

    /// Takes a new snapshot at `x` and recomputes `mu`.
    pub fn refresh(&mut self, problem: &dyn Problem, x: &[DenseMatrix]) -> Result<()> {
        self.mu = full_mean_gradient(problem, x)?;
        self.snapshot = x.to_vec();
        Ok(())
    }

    /// Variance-reduced direction for component `i` at `x`.
    pub fn direction(&self, problem: &dyn Problem, i: usize, x: &[DenseMatrix]) -> Result<Params> {
        if self.snapshot.is_empty() {
            return Err(Error::Parameter("svrg direction requested before the first snapshot".into()));
        }
        let at_x = problem.component_gradient(i, x)?;
        let at_snapshot = problem.component_gradient(i, &self.snapshot)?;
        at_x.iter()
            .zip(&at_snapshot)
            .zip(&self.mu)
            .map(|((a, b), m)| {
                let mut d = a.sub(b)?;
                d.axpy(1.0, m)?;
                Ok(d)
            })
            .collect()
    }

    /// One inner update with a uniformly drawn component; returns the index.
    pub fn inner_step(&mut self, problem: &dyn Problem, x: &mut Params) -> Result<usize> {
        let i = self.rng.below(self.components);
        let d = self.direction(problem, i, x)?;
        for (xi, di) in x.iter_mut().zip(&d) {
            xi.axpy(-self.eta, di)?;
        }
        Ok(i)
    }

    /// Snapshot followed by `inner_steps` inner updates.
    pub fn epoch(&mut self, problem: &dyn Problem, x: &mut Params) -> Result<()> {
        self.refresh(problem, x)?;
        for _ in 0..self.inner_steps {
            self.inner_step(problem, x)?;
        }
        Ok(())
    }
}

/// Runs `epochs` SVRG epochs of `inner_steps` updates, recording the loss
/// after every inner update.
pub fn svrg_run(
    problem: &dyn Problem,
    x0: Params,
    epochs: usize,
    inner_steps: usize,
    eta: f64,
    rng: RandomSource,
) -> Result<OptimizerTrace> {
    let config = SvrgConfig {
        eta,
        inner_steps: Some(inner_steps),
    };
    let mut state = SvrgState::new(problem, &x0, config, rng)?;
    let mut x = x0;
    let mut trace = OptimizerTrace::new("svrg", problem.report_loss(&x)?);
    for _ in 0..epochs {
        let start = Instant::now();
        state.refresh(problem, &x)?;
        let mut carried = start.elapsed().as_secs_f64() * 1e3;
        for _ in 0..inner_steps {
            let t0 = Instant::now();
            state.inner_step(problem, &mut x)?;
            let ms = t0.elapsed().as_secs_f64() * 1e3 + carried;
            carried = 0.0;
            trace.push(problem.report_loss(&x)?, ms, false);
        }
    }
    trace.params = x;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::super::problems::{Flat, Quadratic};
    use super::super::{gd_step, run_optimizer, Method, OptimizerConfig};
    use super::*;

    fn separable(n: usize, seed: u64) -> (Quadratic, Params) {
        let mut rng = RandomSource::new(seed);
        let t = DenseMatrix::random_uniform(2, 3, -1.0, 1.0, &mut rng);
        let mut q = Quadratic::new(vec![1.5], vec![t]);
        q.offsets = (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect();
        let x0 = vec![DenseMatrix::random_uniform(2, 3, -2.0, 2.0, &mut rng)];
        (q, x0)
    }

    #[test]
    fn single_component_coincides_with_gd() {
        let (q, x0) = separable(1, 3);
        let eta = 0.1;
        let trace = svrg_run(&q, x0.clone(), 5, 4, eta, RandomSource::new(1)).unwrap();
        let mut x = x0[0].clone();
        for rec in trace.records.iter().skip(1) {
            let g = q.gradient(&[x.clone()]).unwrap();
            x = gd_step(&x, &g[0], eta).unwrap();
            let loss = q.objective(&[x.clone()]).unwrap();
            assert!((rec.loss - loss).abs() <= 1e-12 * (1.0 + loss));
        }
        assert!(trace.params[0].distance(&x).unwrap() < 1e-12);
    }

    #[test]
    fn direction_at_snapshot_is_mean_gradient() {
        let (q, x0) = separable(5, 4);
        let mut s = SvrgState::new(&q, &x0, SvrgConfig::default(), RandomSource::new(0)).unwrap();
        s.refresh(&q, &x0).unwrap();
        for i in 0..5 {
            let d = s.direction(&q, i, &x0).unwrap();
            assert_eq!(d[0], s.mean_gradient()[0]);
        }
    }

    #[test]
    fn snapshot_gradient_is_component_mean() {
        let (q, x0) = separable(6, 5);
        let mu = full_mean_gradient(&q, &x0).unwrap();
        let full = q.gradient(&x0).unwrap();
        assert!(mu[0].distance(&full[0]).unwrap() < 1e-12);
    }

    #[test]
    fn unbiased_over_all_components() {
        let (q, x0) = separable(16, 6);
        let mut s = SvrgState::new(&q, &x0, SvrgConfig::default(), RandomSource::new(0)).unwrap();
        s.refresh(&q, &x0).unwrap();
        let x = vec![x0[0].map(|v| v * 0.3 + 0.2)];
        let mut avg = DenseMatrix::zeros(2, 3);
        for i in 0..16 {
            avg.axpy(1.0 / 16.0, &s.direction(&q, i, &x).unwrap()[0]).unwrap();
        }
        let full = q.gradient(&x).unwrap();
        assert!(avg.distance(&full[0]).unwrap() <= 1e-12);
    }

    #[test]
    fn converges_on_separable_quadratic() {
        let (q, x0) = separable(8, 7);
        let trace = svrg_run(&q, x0, 60, 16, 0.2, RandomSource::new(2)).unwrap();
        // minimizer: target shifted by the mean offset
        let shift = q.offsets.iter().sum::<f64>() / q.offsets.len() as f64;
        let xstar = q.targets[0].map(|t| t + shift);
        assert!(trace.params[0].distance(&xstar).unwrap() < 1e-4);
        assert_eq!(trace.records.len(), 60 * 16 + 1);
    }

    #[test]
    fn requires_finite_sum() {
        let x0 = vec![DenseMatrix::zeros(1, 1)];
        let err = svrg_run(&Flat, x0, 1, 1, 0.1, RandomSource::new(0)).unwrap_err();
        assert!(matches!(err, Error::Capability(_)));
    }

    #[test]
    fn run_optimizer_counts_epochs() {
        let (q, x0) = separable(4, 8);
        let cfg = OptimizerConfig {
            max_iters: 12,
            ..OptimizerConfig::with_method(Method::Svrg)
        };
        let trace = run_optimizer(&q, x0, &cfg, 3).unwrap();
        assert_eq!(trace.records.len(), 13);
        assert!(trace.final_loss() < trace.records[0].loss);
    }
}
