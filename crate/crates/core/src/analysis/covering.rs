//! One-dimensional interval experiments.
//!
//! A gradient step `x - sigma f'(x)` applied to both ends of an interval gives
//! the next interval. Under a contractive step the intervals nest, so a
//! minimizer outside the start interval is never reached. The stochastic
//! variant relocates each contracted interval uniformly inside the search
//! domain (keeping its width), which lets the visited intervals cover the
//! domain. This relocation is the one-dimensional stand-in for the column
//! shuffle, since permuting a single coordinate does nothing.

use crate::error::{Error, Result};
use crate::linalg::Interval1D;
use crate::rng::RandomSource;

pub trait ScalarObjective {
    fn value(&self, x: f64) -> f64;
    fn derivative(&self, x: f64) -> f64;
}

/// `c x^2 / 2`
#[derive(Debug, Clone, Copy)]
pub struct Quadratic1D {
    pub curvature: f64,
}

impl ScalarObjective for Quadratic1D {
    fn value(&self, x: f64) -> f64 {
        0.5 * self.curvature * x * x
    }

    fn derivative(&self, x: f64) -> f64 {
        self.curvature * x
    }
}

/// `(x^2 - 1)^2 + tilt * x`; for positive tilt the global minimum sits near `-1`.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell {
    pub tilt: f64,
}

impl ScalarObjective for DoubleWell {
    fn value(&self, x: f64) -> f64 {
        let q = x * x - 1.0;
        q * q + self.tilt * x
    }

    fn derivative(&self, x: f64) -> f64 {
        4.0 * x * (x * x - 1.0) + self.tilt
    }
}

fn gd_map(f: &dyn ScalarObjective, x: f64, sigma: f64) -> Result<f64> {
    let d = f.derivative(x);
    if !d.is_finite() {
        return Err(Error::Numerical(format!("non-finite derivative at x = {x}")));
    }
    Ok(x - sigma * d)
}

fn contract(f: &dyn ScalarObjective, i: Interval1D, sigma: f64) -> Result<Interval1D> {
    Ok(Interval1D::spanning(gd_map(f, i.lo(), sigma)?, gd_map(f, i.hi(), sigma)?))
}

/// `steps + 1` intervals starting with `start`, each the endpoint image of
/// the previous one.
pub fn interval_sequence(
    f: &dyn ScalarObjective,
    start: Interval1D,
    sigma: f64,
    steps: usize,
) -> Result<Vec<Interval1D>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start);
    let mut cur = start;
    for _ in 0..steps {
        cur = contract(f, cur, sigma)?;
        out.push(cur);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct CoveringConfig {
    /// Search domain; relocations stay inside it and the grid spans it.
    pub domain: Interval1D,
    pub start: Interval1D,
    pub sigma: f64,
    pub steps: usize,
    pub seed: u64,
    pub stochastic: bool,
    pub grid_resolution: usize,
}

#[derive(Debug, Clone)]
pub struct CoveringResult {
    pub intervals: Vec<Interval1D>,
    /// Fraction of grid points inside at least one visited interval.
    pub union_measure_fraction: f64,
    pub best_value: f64,
    pub best_point: f64,
    /// Grid minimizer of `f` over the domain.
    pub global_point: f64,
    pub contains_global: bool,
    /// First index into `intervals` that contains the global point.
    pub first_hit: Option<usize>,
}

fn grid(domain: Interval1D, resolution: usize) -> Vec<f64> {
    if resolution == 1 {
        return vec![domain.midpoint()];
    }
    let h = domain.width() / (resolution - 1) as f64;
    (0..resolution).map(|i| domain.lo() + h * i as f64).collect()
}

pub fn covering_experiment(f: &dyn ScalarObjective, config: &CoveringConfig) -> Result<CoveringResult> {
    let CoveringConfig {
        domain,
        start,
        sigma,
        steps,
        seed,
        stochastic,
        grid_resolution,
    } = *config;
    if steps == 0 {
        return Err(Error::Parameter("covering experiment needs at least one step".into()));
    }
    if grid_resolution == 0 {
        return Err(Error::Parameter("grid resolution must be positive".into()));
    }
    if !domain.lo().is_finite() || !domain.hi().is_finite() || !start.is_subset_of(&domain) {
        return Err(Error::Parameter("start interval must be finite and inside the domain".into()));
    }

    let mut rng = RandomSource::new(seed);
    let mut intervals = Vec::with_capacity(steps + 1);
    intervals.push(start);
    let mut cur = start;
    for _ in 0..steps {
        cur = contract(f, cur, sigma)?;
        if stochastic {
            let w = cur.width().min(domain.width());
            let lo = rng.uniform_range(domain.lo(), domain.hi() - w);
            cur = Interval1D::spanning(lo, (lo + w).min(domain.hi()));
        }
        intervals.push(cur);
    }

    let points = grid(domain, grid_resolution);
    let global_point = points
        .iter()
        .copied()
        .min_by(|a, b| f.value(*a).total_cmp(&f.value(*b)))
        .expect("non-empty grid");
    let covered = points
        .iter()
        .filter(|p| intervals.iter().any(|i| i.contains(**p)))
        .count();

    let (best_point, best_value) = intervals
        .iter()
        .flat_map(|i| [i.lo(), i.midpoint(), i.hi()])
        .map(|x| (x, f.value(x)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one interval");

    let first_hit = intervals.iter().position(|i| i.contains(global_point));
    Ok(CoveringResult {
        union_measure_fraction: covered as f64 / points.len() as f64,
        best_value,
        best_point,
        global_point,
        contains_global: first_hit.is_some(),
        first_hit,
        intervals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval1D {
        Interval1D::new(lo, hi).unwrap()
    }

    #[test]
    fn zero_steps_returns_start() {
        let q = Quadratic1D { curvature: 1.0 };
        assert_eq!(interval_sequence(&q, iv(-1.0, 2.0), 0.5, 0).unwrap(), vec![iv(-1.0, 2.0)]);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let q = Quadratic1D { curvature: 3.0 };
        let seq = interval_sequence(&q, iv(-1.0, 2.0), 0.0, 5).unwrap();
        assert!(seq.iter().all(|i| *i == iv(-1.0, 2.0)));
    }

    #[test]
    fn halving_on_unit_quadratic() {
        let q = Quadratic1D { curvature: 1.0 };
        let seq = interval_sequence(&q, iv(-1.0, 2.0), 0.5, 3).unwrap();
        let expected = [iv(-1.0, 2.0), iv(-0.5, 1.0), iv(-0.25, 0.5), iv(-0.125, 0.25)];
        assert_eq!(seq, expected);
        for w in seq.windows(2) {
            assert!(w[1].is_subset_of(&w[0]) && w[1].width() < w[0].width());
        }
    }

    #[test]
    fn non_finite_derivative_is_an_error() {
        struct Bad;
        impl ScalarObjective for Bad {
            fn value(&self, _x: f64) -> f64 {
                0.0
            }
            fn derivative(&self, _x: f64) -> f64 {
                f64::NAN
            }
        }
        assert!(matches!(interval_sequence(&Bad, iv(0.0, 1.0), 0.1, 1), Err(Error::Numerical(_))));
    }

    #[test]
    fn unimodal_minimizer_is_always_covered() {
        let q = Quadratic1D { curvature: 2.0 };
        let cfg = CoveringConfig {
            domain: iv(-2.0, 2.0),
            start: iv(-1.0, 1.5),
            sigma: 0.1,
            steps: 50,
            seed: 0,
            stochastic: false,
            grid_resolution: 10_001,
        };
        let res = covering_experiment(&q, &cfg).unwrap();
        assert!(res.contains_global);
        assert_eq!(res.global_point, 0.0);
        assert_eq!(res.best_value, q.value(res.best_point));
        assert!(res.union_measure_fraction <= 1.0);
    }

    #[test]
    fn double_well_grid_oracle_and_confinement() {
        let f = DoubleWell { tilt: 0.3 };
        // brute-force scan, independent of the experiment's grid
        let (mut xbest, mut fbest) = (0.0, f64::INFINITY);
        for i in 0..=400_000 {
            let x = -2.0 + 4.0 * i as f64 / 400_000.0;
            if f.value(x) < fbest {
                xbest = x;
                fbest = f.value(x);
            }
        }
        assert!(xbest < -1.0 && xbest > -1.1);

        let cfg = CoveringConfig {
            domain: iv(-2.0, 2.0),
            start: iv(0.2, 1.8),
            sigma: 0.01,
            steps: 1000,
            seed: 0,
            stochastic: false,
            grid_resolution: 10_000,
        };
        let res = covering_experiment(&f, &cfg).unwrap();
        assert!((res.global_point - xbest).abs() < 1e-3);
        assert!(!res.contains_global);
        assert!(res.intervals.iter().all(|i| i.is_subset_of(&cfg.start)));
    }

    #[test]
    fn stochastic_relocation_stays_in_domain() {
        let f = DoubleWell { tilt: 0.3 };
        let cfg = CoveringConfig {
            domain: iv(-2.0, 2.0),
            start: iv(0.2, 1.8),
            sigma: 0.01,
            steps: 200,
            seed: 11,
            stochastic: true,
            grid_resolution: 10_000,
        };
        let res = covering_experiment(&f, &cfg).unwrap();
        assert!(res.intervals.iter().all(|i| i.is_subset_of(&cfg.domain)));
        let again = covering_experiment(&f, &cfg).unwrap();
        assert_eq!(res.intervals, again.intervals);
    }

    #[test]
    fn rejects_bad_config() {
        let f = DoubleWell { tilt: 0.3 };
        let mut cfg = CoveringConfig {
            domain: iv(-2.0, 2.0),
            start: iv(0.2, 1.8),
            sigma: 0.01,
            steps: 0,
            seed: 0,
            stochastic: false,
            grid_resolution: 100,
        };
        assert!(covering_experiment(&f, &cfg).is_err());
        cfg.steps = 1;
        cfg.start = iv(1.0, 3.0);
        assert!(covering_experiment(&f, &cfg).is_err());
    }
}
