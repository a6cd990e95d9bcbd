//! First-order optimizers behind one run loop.
//!
//! Parameters are a list of matrix blocks (`Params`). Every method steps all
//! blocks together; adaptive methods keep one state per block.

mod adam;
mod admm;
mod gd;
pub mod problems;
mod sadam;
mod svrg;

pub use adam::{AdamConfig, AdamState};
pub use admm::{admm_deep_mf_step, AdmmConfig, AdmmSplit, AdmmState};
pub use gd::gd_step;
pub use sadam::SadamState;
pub use svrg::{full_mean_gradient, svrg_run, SvrgConfig, SvrgState};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::rng::RandomSource;
use crate::shuffle::{apply_shuffle, ShuffleEvent, ShuffleFn};

pub type Params = Vec<DenseMatrix>;

/// A differentiable objective over a list of matrix blocks.
pub trait Problem: Sync {
    /// Quantity minimized by the gradient methods.
    fn objective(&self, params: &[DenseMatrix]) -> Result<f64>;

    /// Quantity recorded in traces. Defaults to the objective.
    fn report_loss(&self, params: &[DenseMatrix]) -> Result<f64> {
        self.objective(params)
    }

    fn gradient(&self, params: &[DenseMatrix]) -> Result<Params>;

    /// Number of components when the objective is a finite mean
    /// `F = (1/n) sum_i f_i`.
    fn components(&self) -> Option<usize> {
        None
    }

    fn component_gradient(&self, _index: usize, _params: &[DenseMatrix]) -> Result<Params> {
        Err(Error::Capability("problem has no finite-sum view".into()))
    }

    /// Constrained form `P Y + Z = S` for ADMM, when the problem has one.
    fn admm_split(&self) -> Option<AdmmSplit<'_>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gd,
    Adam,
    Sadam,
    Svrg,
    Admm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Gd, Method::Adam, Method::Sadam, Method::Svrg, Method::Admm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Adam => "adam",
            Method::Sadam => "sadam",
            Method::Svrg => "svrg",
            Method::Admm => "admm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" => Ok(Method::Gd),
            "adam" => Ok(Method::Adam),
            "sadam" => Ok(Method::Sadam),
            "svrg" => Ok(Method::Svrg),
            "admm" => Ok(Method::Admm),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: Method,
    pub max_iters: usize,
    /// GD step length.
    pub sigma: f64,
    pub adam: AdamConfig,
    /// Shuffle trigger threshold on `||G_prev - G||_F`.
    pub trigger_eps: f64,
    pub svrg: SvrgConfig,
    pub admm: AdmmConfig,
    /// Optional early stop on relative loss change. Off by default.
    pub tolerance: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Sadam,
            max_iters: 200,
            sigma: 1e-3,
            adam: AdamConfig::default(),
            trigger_eps: 1e-5,
            svrg: SvrgConfig::default(),
            admm: AdmmConfig::default(),
            tolerance: None,
        }
    }
}

impl OptimizerConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        if let Some(tol) = self.tolerance {
            if !(tol >= 0.0) {
                return bad(format!("tolerance must be >= 0, got {tol}"));
            }
        }
        match self.method {
            Method::Gd if !(self.sigma > 0.0) => bad(format!("gd sigma must be > 0, got {}", self.sigma)),
            Method::Adam => self.adam.validate(),
            Method::Sadam => {
                self.adam.validate()?;
                if !(self.trigger_eps >= 0.0) {
                    return bad(format!("trigger_eps must be >= 0, got {}", self.trigger_eps));
                }
                Ok(())
            }
            Method::Svrg => self.svrg.validate(),
            Method::Admm => self.admm.validate(),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub loss: f64,
    pub wall_ms: f64,
    pub shuffle_fired: bool,
}

#[derive(Debug, Clone)]
pub struct OptimizerTrace {
    pub method: String,
    pub records: Vec<TraceRecord>,
    pub params: Params,
    pub shuffle_events: Vec<ShuffleEvent>,
}

impl OptimizerTrace {
    pub fn new(method: impl Into<String>, initial_loss: f64) -> Self {
        Self {
            method: method.into(),
            records: vec![TraceRecord {
                iteration: 0,
                loss: initial_loss,
                wall_ms: 0.0,
                shuffle_fired: false,
            }],
            params: Vec::new(),
            shuffle_events: Vec::new(),
        }
    }

    pub fn push(&mut self, loss: f64, wall_ms: f64, shuffle_fired: bool) {
        let iteration = self.records.len();
        self.records.push(TraceRecord {
            iteration,
            loss,
            wall_ms,
            shuffle_fired,
        });
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn final_loss(&self) -> f64 {
        self.records.last().map(|r| r.loss).unwrap_or(f64::NAN)
    }

    pub fn total_wall_ms(&self) -> f64 {
        self.records.iter().map(|r| r.wall_ms).sum()
    }

    pub fn shuffle_count(&self) -> usize {
        self.records.iter().filter(|r| r.shuffle_fired).count()
    }

    /// Bitwise equality of everything except wall time.
    pub fn same_path(&self, other: &OptimizerTrace) -> bool {
        self.records.len() == other.records.len()
            && self.records.iter().zip(&other.records).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.loss.to_bits() == b.loss.to_bits()
                    && a.shuffle_fired == b.shuffle_fired
            })
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| {
                a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

fn check_params(problem_grad: &[DenseMatrix], params: &[DenseMatrix]) -> Result<()> {
    if problem_grad.len() != params.len() {
        return Err(Error::Parameter(format!(
            "gradient has {} blocks, parameters have {}",
            problem_grad.len(),
            params.len()
        )));
    }
    for (g, p) in problem_grad.iter().zip(params) {
        if g.shape() != p.shape() {
            return Err(Error::Shape {
                op: "gradient",
                left: p.shape(),
                right: g.shape(),
            });
        }
    }
    Ok(())
}

/// Runs `config.method` for `config.max_iters` iterations from `init`.
///
/// Records the initial loss as iteration 0 (wall time 0), then one record per
/// iteration. Wall time covers the optimizer step only, not the loss
/// evaluation used for the record. For SVRG one iteration is one outer epoch
/// (snapshot plus `inner_steps` inner updates).
pub fn run_optimizer(
    problem: &dyn Problem,
    init: Params,
    config: &OptimizerConfig,
    seed: u64,
) -> Result<OptimizerTrace> {
    run_optimizer_with_shuffle(problem, init, config, seed, apply_shuffle)
}

pub fn run_optimizer_with_shuffle(
    problem: &dyn Problem,
    init: Params,
    config: &OptimizerConfig,
    seed: u64,
    shuffle: ShuffleFn,
) -> Result<OptimizerTrace> {
    config.validate()?;
    let mut x = init;
    let mut trace = OptimizerTrace::new(config.method.name(), problem.report_loss(&x)?);

    let mut stepper = Stepper::new(problem, &x, config, seed, shuffle)?;
    let mut prev_loss = trace.final_loss();
    for t in 1..=config.max_iters {
        let start = Instant::now();
        let fired = stepper.step(problem, &mut x)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let loss = problem.report_loss(&x)?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "{} produced a non-finite loss at iteration {t}",
                config.method
            )));
        }
        trace.push(loss, wall_ms, fired);
        if let Some(tol) = config.tolerance {
            if (prev_loss - loss).abs() <= tol * prev_loss.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_loss = loss;
    }
    trace.params = stepper.finish(x);
    if let Stepper::Sadam(states) = &stepper {
        let mut events: Vec<ShuffleEvent> = states.iter().flat_map(|s| s.log().iter().cloned()).collect();
        events.sort_by_key(|e| e.iteration);
        trace.shuffle_events = events;
    }
    Ok(trace)
}

enum Stepper {
    Gd(f64),
    Adam(Vec<AdamState>),
    Sadam(Vec<SadamState>),
    Svrg(SvrgState),
    Admm(AdmmState),
}

impl Stepper {
    fn new(
        problem: &dyn Problem,
        x: &[DenseMatrix],
        config: &OptimizerConfig,
        seed: u64,
        shuffle: ShuffleFn,
    ) -> Result<Self> {
        Ok(match config.method {
            Method::Gd => Stepper::Gd(config.sigma),
            Method::Adam => Stepper::Adam(x.iter().map(|b| AdamState::new(b.shape(), config.adam)).collect()),
            Method::Sadam => Stepper::Sadam(
                x.iter()
                    .enumerate()
                    .map(|(i, b)| {
                        SadamState::new(
                            b.shape(),
                            config.adam,
                            config.trigger_eps,
                            RandomSource::derive(seed, i as u64),
                        )
                        .with_shuffle(shuffle)
                    })
                    .collect(),
            ),
            Method::Svrg => {
                if problem.components().is_none() {
                    return Err(Error::Config("svrg requires a problem with a finite-sum view".into()));
                }
                Stepper::Svrg(SvrgState::new(problem, x, config.svrg, RandomSource::derive(seed, 0))?)
            }
            Method::Admm => {
                let split = problem
                    .admm_split()
                    .ok_or_else(|| Error::Config("admm requires a problem with a constrained split".into()))?;
                Stepper::Admm(AdmmState::from_params(split, x, config.admm)?)
            }
        })
    }

    fn step(&mut self, problem: &dyn Problem, x: &mut Params) -> Result<bool> {
        match self {
            Stepper::Gd(sigma) => {
                let g = problem.gradient(x)?;
                check_params(&g, x)?;
                for (xi, gi) in x.iter_mut().zip(&g) {
                    *xi = gd_step(xi, gi, *sigma)?;
                }
                Ok(false)
            }
            Stepper::Adam(states) => {
                let g = problem.gradient(x)?;
                check_params(&g, x)?;
                for ((s, xi), gi) in states.iter_mut().zip(x.iter_mut()).zip(&g) {
                    s.step(xi, gi)?;
                }
                Ok(false)
            }
            Stepper::Sadam(states) => {
                let g = problem.gradient(x)?;
                check_params(&g, x)?;
                let mut fired = false;
                for ((s, xi), gi) in states.iter_mut().zip(x.iter_mut()).zip(g) {
                    fired |= s.step(xi, gi)?;
                }
                Ok(fired)
            }
            Stepper::Svrg(state) => {
                state.epoch(problem, x)?;
                Ok(false)
            }
            Stepper::Admm(state) => {
                let split = problem.admm_split().expect("checked at construction");
                admm_deep_mf_step(state, split.target)?;
                state.write_params(x);
                Ok(false)
            }
        }
    }

    fn finish(&self, x: Params) -> Params {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::problems::*;
    use super::*;

    fn quad() -> (Quadratic, Params) {
        let mut rng = RandomSource::new(8);
        let t = DenseMatrix::random_uniform(3, 4, -1.0, 1.0, &mut rng);
        let x0 = DenseMatrix::random_uniform(3, 4, -3.0, 3.0, &mut rng);
        (Quadratic::new(vec![2.0], vec![t]), vec![x0])
    }

    #[test]
    fn trace_has_one_record_per_iteration_plus_initial() {
        let (p, x0) = quad();
        for method in [Method::Gd, Method::Adam, Method::Sadam] {
            let trace = run_optimizer(&p, x0.clone(), &OptimizerConfig::with_method(method), 1).unwrap();
            assert_eq!(trace.records.len(), 201);
            assert_eq!(trace.records[0].wall_ms, 0.0);
            assert!(trace.records.iter().enumerate().all(|(i, r)| r.iteration == i));
        }
    }

    #[test]
    fn flat_problem_gives_flat_trace() {
        let x0 = vec![DenseMatrix::from_fn(2, 2, |r, c| (r + c) as f64)];
        for method in [Method::Gd, Method::Adam] {
            let trace = run_optimizer(&Flat, x0.clone(), &OptimizerConfig::with_method(method), 0).unwrap();
            assert!(trace.losses().iter().all(|l| *l == 1.0));
            assert_eq!(trace.params, x0);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let (p, x0) = quad();
        let cfg = OptimizerConfig {
            trigger_eps: 1e-2,
            ..OptimizerConfig::with_method(Method::Sadam)
        };
        let a = run_optimizer(&p, x0.clone(), &cfg, 5).unwrap();
        let b = run_optimizer(&p, x0, &cfg, 5).unwrap();
        assert!(a.same_path(&b));
        assert_eq!(a.shuffle_events, b.shuffle_events);
    }

    #[test]
    fn method_pairing_errors() {
        let x0 = vec![DenseMatrix::zeros(2, 2)];
        let err = run_optimizer(&Flat, x0.clone(), &OptimizerConfig::with_method(Method::Admm), 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = run_optimizer(&Flat, x0.clone(), &OptimizerConfig::with_method(Method::Svrg), 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let mut cfg = OptimizerConfig::with_method(Method::Adam);
        cfg.adam.beta1 = 1.0;
        assert!(matches!(run_optimizer(&Flat, x0.clone(), &cfg, 0), Err(Error::Config(_))));
        let cfg = OptimizerConfig {
            max_iters: 0,
            ..OptimizerConfig::default()
        };
        assert!(run_optimizer(&Flat, x0, &cfg, 0).is_err());
    }

    #[test]
    fn tolerance_stops_early() {
        let (p, x0) = quad();
        let cfg = OptimizerConfig {
            sigma: 0.4,
            tolerance: Some(1e-9),
            max_iters: 10_000,
            ..OptimizerConfig::with_method(Method::Gd)
        };
        let trace = run_optimizer(&p, x0, &cfg, 0).unwrap();
        assert!(trace.records.len() < 10_001);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("storm".parse::<Method>().is_err());
    }

    #[test]
    fn gd_contracts_quadratic_at_exact_rate() {
        // f(x) = c x^2 / 2, step x - sigma c x
        let c = 4.0;
        let sigma = 0.1;
        let x = DenseMatrix::new(1, 1, vec![1.3]).unwrap();
        let y = DenseMatrix::new(1, 1, vec![-0.7]).unwrap();
        let fx = gd_step(&x, &x.scale(c), sigma).unwrap();
        let fy = gd_step(&y, &y.scale(c), sigma).unwrap();
        let ratio = fx.distance(&fy).unwrap() / x.distance(&y).unwrap();
        assert!((ratio - (1.0 - sigma * c).abs()).abs() < 1e-12);
    }
}
