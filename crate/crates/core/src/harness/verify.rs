//! Self-check suite run by `sadam verify`.
//!
//! Each check measures one property of this build and compares it with a
//! fixed threshold. The shuffle used by the shuffle checks can be swapped out
//! to confirm that the suite catches a broken operator.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::csv_io::write_atomic;
use crate::analysis::{
    contraction_ratio, covering_experiment, fit_rate, interval_sequence, CoveringConfig, DoubleWell, Quadratic1D,
};
use crate::deep_mf::{generate_synthetic, DeepMfModel, Layer, LayerProblem, SyntheticSpec};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, Interval1D};
use crate::optim::problems::Quadratic;
use crate::optim::{run_optimizer, run_optimizer_with_shuffle, Method, OptimizerConfig, Problem, SvrgConfig, SvrgState};
use crate::rng::RandomSource;
use crate::shuffle::{apply_shuffle, estimate_operator_norm, ShuffleFn};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    /// The property under test, in words.
    pub property: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub passed: bool,
    #[serde(rename = "check")]
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    /// 0 when every check passed, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            3
        }
    }

    /// One line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            writeln!(
                out,
                "{} {:<28} measured={:<12.6e} threshold={:<10.3e} {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.threshold,
                c.detail
            )
            .unwrap();
        }
        let failed = self.failed().len();
        writeln!(out, "{} of {} checks passed", self.checks.len() - failed, self.checks.len()).unwrap();
        out
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Input(format!("cannot serialize verify report: {e}")))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Shuffle under test.
    pub shuffle: ShuffleFn,
}

impl VerifyOptions {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            shuffle: apply_shuffle,
        }
    }
}

/// Deliberately broken shuffle: permutes like [`apply_shuffle`], then zeroes
/// the last output column.
pub fn dropped_column_shuffle(g: &DenseMatrix, rng: &mut RandomSource) -> (DenseMatrix, Vec<usize>) {
    let (mut out, perm) = apply_shuffle(g, rng);
    let last = out.cols() - 1;
    for r in 0..out.rows() {
        out.set(r, last, 0.0);
    }
    (out, perm)
}

/// Runs every check; writes the TOML report to `out` when given.
pub fn run_verify(seed: u64, out: Option<&Path>) -> Result<VerifyReport> {
    run_verify_with(&VerifyOptions::new(seed), out)
}

pub fn run_verify_with(opts: &VerifyOptions, out: Option<&Path>) -> Result<VerifyReport> {
    let checks = vec![
        shuffle_norm_preservation(opts)?,
        shuffle_operator_norm(opts)?,
        gd_contraction_ratio(opts)?,
        contraction_composition(opts)?,
        nested_intervals()?,
        deterministic_confinement()?,
        stochastic_covering(opts)?,
        rate_maintenance()?,
        sadam_degenerate_equivalence(opts)?,
        gradient_check(opts)?,
        svrg_unbiasedness(opts)?,
    ];
    let report = VerifyReport {
        seed: opts.seed,
        passed: checks.iter().all(|c| c.passed),
        checks,
    };
    if let Some(path) = out {
        write_atomic(path, report.to_toml()?.as_bytes())?;
    }
    Ok(report)
}

fn le(name: &'static str, property: &'static str, measured: f64, threshold: f64, detail: String) -> CheckResult {
    CheckResult {
        name,
        property,
        passed: measured <= threshold,
        measured,
        threshold,
        detail,
    }
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn shuffle_norm_preservation(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = RandomSource::derive(opts.seed, 1);
    let mut worst = 0.0f64;
    let mut multiset_mismatch = 0;
    for _ in 0..1000 {
        let rows = 1 + rng.below(12);
        let cols = 1 + rng.below(12);
        let scale = 10f64.powi(-(rng.below(4) as i32));
        let g = DenseMatrix::random_normal(rows, cols, scale, &mut rng);
        let (out, _) = (opts.shuffle)(&g, &mut rng);
        worst = worst.max((out.frobenius_norm() - g.frobenius_norm()).abs());
        if out.shape() != g.shape() || sorted(out.data()) != sorted(g.data()) {
            multiset_mismatch += 1;
        }
    }
    let mut c = le(
        "shuffle_norm_preservation",
        "the column shuffle preserves the Frobenius norm and the entry multiset",
        worst,
        1e-12,
        format!("1000 matrices, {multiset_mismatch} multiset mismatches"),
    );
    c.passed &= multiset_mismatch == 0;
    Ok(c)
}

fn shuffle_operator_norm(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut sampler = RandomSource::derive(opts.seed, 2);
    let mut shuffler = RandomSource::derive(opts.seed, 3);
    let shuffle = opts.shuffle;
    let mut op = |x: &DenseMatrix| shuffle(x, &mut shuffler).0;
    let n = estimate_operator_norm(&mut op, (6, 9), 200, &mut sampler)?;
    Ok(le(
        "shuffle_operator_norm",
        "the shuffle operator has unit norm",
        (n - 1.0).abs(),
        1e-12,
        format!("estimated norm {n:.15}"),
    ))
}

fn gd_map(c: f64, sigma: f64) -> impl Fn(&DenseMatrix) -> DenseMatrix {
    move |x: &DenseMatrix| x.scale(1.0 - sigma * c)
}

fn gd_contraction_ratio(opts: &VerifyOptions) -> Result<CheckResult> {
    let (c, sigma) = (4.0, 0.1);
    let mut sampler = RandomSource::derive(opts.seed, 4);
    let est = contraction_ratio(|_| gd_map(c, sigma), (3, 4), &mut sampler, 100)?;
    let expected = (1.0 - sigma * c).abs();
    Ok(le(
        "gd_contraction_ratio",
        "a gradient step on c x^2/2 contracts distances by |1 - sigma c|",
        (est.ratio_sup - expected).abs(),
        1e-12,
        format!("ratio {:.15} vs {expected} (c = 4, sigma = 0.1)", est.ratio_sup),
    ))
}

fn contraction_composition(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut sampler = RandomSource::derive(opts.seed, 5);
    let a = contraction_ratio(|_| gd_map(4.0, 0.1), (3, 4), &mut sampler, 50)?.ratio_sup;
    let b = contraction_ratio(|_| gd_map(1.0, 0.3), (3, 4), &mut sampler, 50)?.ratio_sup;
    let composed = contraction_ratio(
        |_| {
            let (f, g) = (gd_map(4.0, 0.1), gd_map(1.0, 0.3));
            move |x: &DenseMatrix| g(&f(x))
        },
        (3, 4),
        &mut sampler,
        50,
    )?;
    let mut c = le(
        "contraction_composition",
        "composed contractions contract by the product of their ratios",
        (composed.ratio_sup - a * b).abs(),
        1e-10,
        format!("composed {:.12} vs product {:.12}", composed.ratio_sup, a * b),
    );
    c.passed &= composed.is_contractive;
    Ok(c)
}

fn nested_intervals() -> Result<CheckResult> {
    let q = Quadratic1D { curvature: 1.0 };
    let seq = interval_sequence(&q, Interval1D::new(-1.0, 2.0)?, 0.5, 50)?;
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for w in seq.windows(2) {
        let shrinks = w[1].width() < w[0].width() || w[0].width() == 0.0;
        if !w[1].is_subset_of(&w[0]) || !shrinks {
            violations += 1;
        }
        if w[0].width() > 0.0 {
            worst_ratio = worst_ratio.max(w[1].width() / w[0].width());
        }
    }
    let mut c = le(
        "nested_intervals",
        "a contractive gradient map sends each interval strictly inside the previous one",
        worst_ratio,
        1.0 - 1e-12,
        format!("50 steps, {violations} nesting violations"),
    );
    c.passed &= violations == 0;
    Ok(c)
}

fn double_well_config(seed: u64, steps: usize, stochastic: bool) -> Result<CoveringConfig> {
    Ok(CoveringConfig {
        domain: Interval1D::new(-2.0, 2.0)?,
        start: Interval1D::new(0.2, 1.8)?,
        sigma: 0.01,
        steps,
        seed,
        stochastic,
        grid_resolution: 10_000,
    })
}

fn deterministic_confinement() -> Result<CheckResult> {
    let f = DoubleWell { tilt: 0.3 };
    let cfg = double_well_config(0, 1000, false)?;
    let res = covering_experiment(&f, &cfg)?;
    let escaped = res.intervals.iter().filter(|i| !i.is_subset_of(&cfg.start)).count();
    let hits = res.intervals.iter().filter(|i| i.contains(res.global_point)).count();
    let mut c = le(
        "deterministic_confinement",
        "plain gradient intervals never leave the start interval or reach the global minimizer",
        hits as f64,
        0.0,
        format!("1000 steps, global minimizer {:.4}, {escaped} intervals escaped", res.global_point),
    );
    c.passed &= escaped == 0;
    Ok(c)
}

fn stochastic_covering(opts: &VerifyOptions) -> Result<CheckResult> {
    let f = DoubleWell { tilt: 0.3 };
    let mut hits = 0usize;
    for k in 0..100 {
        let seed = RandomSource::derive(opts.seed, 100 + k).next_u64();
        if covering_experiment(&f, &double_well_config(seed, 200, true)?)?.contains_global {
            hits += 1;
        }
    }
    Ok(CheckResult {
        name: "stochastic_covering",
        property: "randomly relocated intervals reach the global minimizer",
        passed: hits >= 95,
        measured: hits as f64,
        threshold: 95.0,
        detail: "seeds containing the global minimizer within 200 steps, out of 100".into(),
    })
}

/// Quadratic, start point, and trigger used for the rate comparison. The
/// trigger first fires late in the run.
pub fn rate_probe() -> (Quadratic, DenseMatrix, f64) {
    let mut rng = RandomSource::new(1);
    let t = DenseMatrix::random_uniform(4, 6, -1.0, 1.0, &mut rng);
    let offset = DenseMatrix::random_uniform(4, 6, 0.04, 0.12, &mut rng);
    let x0 = t.add(&offset).expect("same shape");
    (Quadratic::new(vec![1.0], vec![t]), x0, 3e-4)
}

fn rate_maintenance() -> Result<CheckResult> {
    let (problem, x0, trigger) = rate_probe();
    let adam = run_optimizer(&problem, vec![x0.clone()], &OptimizerConfig::with_method(Method::Adam), 0)?;
    let sadam_cfg = OptimizerConfig {
        trigger_eps: trigger,
        ..OptimizerConfig::with_method(Method::Sadam)
    };
    let sadam = run_optimizer(&problem, vec![x0], &sadam_cfg, 0)?;
    let floor = adam
        .losses()
        .into_iter()
        .chain(sadam.losses())
        .fold(f64::INFINITY, f64::min)
        - 1e-12;
    let pa = fit_rate(&adam, floor)?;
    let ps = fit_rate(&sadam, floor)?;
    let first = sadam.records.iter().position(|r| r.shuffle_fired);
    let mut c = le(
        "rate_maintenance",
        "shuffling late in a run leaves the fitted convergence exponent unchanged",
        (pa.exponent - ps.exponent).abs(),
        0.2,
        format!(
            "exponents adam {:.3} sadam {:.3}, first shuffle at {}, {} shuffles",
            pa.exponent,
            ps.exponent,
            first.map_or("never".to_string(), |t| t.to_string()),
            sadam.shuffle_count()
        ),
    );
    c.passed &= first.is_none_or(|t| t >= 150);
    Ok(c)
}

fn sadam_degenerate_equivalence(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = RandomSource::derive(opts.seed, 6);
    let t = DenseMatrix::random_uniform(3, 5, -1.0, 1.0, &mut rng);
    let x0 = DenseMatrix::random_uniform(3, 5, -2.0, 2.0, &mut rng);
    let quad = Quadratic::new(vec![2.0], vec![t]);
    let (s, _) = generate_synthetic(&SyntheticSpec {
        rows: 10,
        cols: 12,
        ranks: vec![3, 2],
        seed: opts.seed,
        ..SyntheticSpec::default()
    })?;
    let layer = LayerProblem::new(s, None, 0.1, 1e-4, 4)?;
    let init = vec![
        DenseMatrix::random_uniform(10, 3, -0.1, 0.1, &mut rng),
        DenseMatrix::random_uniform(3, 12, -0.1, 0.1, &mut rng),
        DenseMatrix::zeros(10, 12),
    ];
    let cases: [(&dyn Problem, Vec<DenseMatrix>); 2] = [(&quad, vec![x0]), (&layer, init)];
    let mut mismatches = 0;
    for (p, x) in cases {
        let adam = run_optimizer(p, x.clone(), &OptimizerConfig::with_method(Method::Adam), opts.seed)?;
        let cfg = OptimizerConfig {
            trigger_eps: 0.0,
            ..OptimizerConfig::with_method(Method::Sadam)
        };
        let sadam = run_optimizer_with_shuffle(p, x, &cfg, opts.seed, opts.shuffle)?;
        if !adam.same_path(&sadam) {
            mismatches += 1;
        }
    }
    Ok(le(
        "sadam_degenerate_equivalence",
        "with a zero trigger threshold the shuffled optimizer reproduces its base optimizer bit for bit",
        mismatches as f64,
        0.0,
        "2 problems x 200 iterations".into(),
    ))
}

/// Largest blockwise relative error between analytic gradients of the last
/// layer and central differences of the smoothed objective.
pub fn max_gradient_error(model: &DeepMfModel, lambda: f64, delta: f64, h: f64) -> Result<f64> {
    let k = model.layers.len() - 1;
    let g = model.layer_gradients(k, lambda, delta)?;
    let f = |m: &DeepMfModel| m.smoothed_objective(k, lambda, delta);
    let numeric = |select: &dyn Fn(&mut DeepMfModel) -> &mut DenseMatrix| -> Result<DenseMatrix> {
        let mut m = model.clone();
        let (rows, cols) = select(&mut m).shape();
        let mut out = DenseMatrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = select(&mut m).get(r, c);
                select(&mut m).set(r, c, v + h);
                let up = f(&m)?;
                select(&mut m).set(r, c, v - h);
                let down = f(&m)?;
                select(&mut m).set(r, c, v);
                out.set(r, c, (up - down) / (2.0 * h));
            }
        }
        Ok(out)
    };
    let rel = |a: &DenseMatrix, n: &DenseMatrix| -> Result<f64> {
        let scale = a.frobenius_norm().max(n.frobenius_norm());
        Ok(if scale == 0.0 { 0.0 } else { a.distance(n)? / scale })
    };
    let mut worst = 0.0f64;
    for i in 0..=k {
        worst = worst.max(rel(&g.x[i], &numeric(&|m| &mut m.layers[i].x)?)?);
    }
    worst = worst.max(rel(&g.y, &numeric(&|m| &mut m.layers[k].y)?)?);
    worst = worst.max(rel(&g.z, &numeric(&|m| &mut m.layers[k].z)?)?);
    Ok(worst)
}

/// Random model with non-increasing ranks up to 3 on an input of at most 10 x 12.
pub fn random_small_model(rng: &mut RandomSource) -> Result<DeepMfModel> {
    let m = 4 + rng.below(7);
    let n = 4 + rng.below(9);
    let r1 = 1 + rng.below(3);
    let r2 = 1 + rng.below(r1);
    let s = DenseMatrix::random_normal(m, n, 1.0, rng);
    let mut layers = Vec::new();
    let mut lead = m;
    for r in [r1, r2] {
        layers.push(Layer {
            x: DenseMatrix::random_normal(lead, r, 0.5, rng),
            y: DenseMatrix::random_normal(r, n, 0.5, rng),
            // entries well away from the Huber knee at +-delta
            z: DenseMatrix::random_uniform(m, n, 0.01, 0.5, rng).zip_map(
                &DenseMatrix::random_uniform(m, n, -1.0, 1.0, rng),
                "sign",
                |a, s| a.copysign(s),
            )?,
        });
        lead = r;
    }
    DeepMfModel::new(s, layers)
}

fn gradient_check(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = RandomSource::derive(opts.seed, 7);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let model = random_small_model(&mut rng)?;
        worst = worst.max(max_gradient_error(&model, 0.1, 1e-4, 1e-6)?);
    }
    Ok(le(
        "gradient_check",
        "analytic layer gradients match central finite differences",
        worst,
        1e-5,
        "5 random instances, all blocks, h = 1e-6".into(),
    ))
}

fn svrg_unbiasedness(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = RandomSource::derive(opts.seed, 8);
    let (s, _) = generate_synthetic(&SyntheticSpec {
        rows: 10,
        cols: 16,
        ranks: vec![3],
        seed: opts.seed,
        ..SyntheticSpec::default()
    })?;
    let layer = LayerProblem::new(s, None, 0.1, 1e-4, 8)?;
    let offsets: Vec<f64> = (0..16).map(|_| rng.normal()).collect();
    let quad = Quadratic::new(
        vec![1.5],
        vec![DenseMatrix::random_normal(3, 4, 1.0, &mut rng)],
    )
    .with_offsets(offsets);
    let layer_x = vec![
        DenseMatrix::random_normal(10, 3, 0.3, &mut rng),
        DenseMatrix::random_normal(3, 16, 0.3, &mut rng),
        DenseMatrix::random_normal(10, 16, 0.1, &mut rng),
    ];
    let layer_snap: Vec<DenseMatrix> = layer_x.iter().map(|b| b.map(|v| v * 0.5 + 0.01)).collect();
    let quad_x = vec![DenseMatrix::random_normal(3, 4, 1.0, &mut rng)];
    let quad_snap = vec![DenseMatrix::random_normal(3, 4, 1.0, &mut rng)];
    let cases: [(&dyn Problem, Vec<DenseMatrix>, Vec<DenseMatrix>); 2] =
        [(&layer, layer_x, layer_snap), (&quad, quad_x, quad_snap)];

    let mut worst = 0.0f64;
    for (p, x, snap) in cases {
        let n = p.components().expect("finite sum");
        let mut state = SvrgState::new(p, &x, SvrgConfig::default(), RandomSource::new(0))?;
        state.refresh(p, &snap)?;
        let mut avg: Vec<DenseMatrix> = x.iter().map(|b| DenseMatrix::zeros(b.rows(), b.cols())).collect();
        for i in 0..n {
            for (a, d) in avg.iter_mut().zip(state.direction(p, i, &x)?) {
                a.axpy(1.0 / n as f64, &d)?;
            }
        }
        let full = p.gradient(&x)?;
        for (a, g) in avg.iter().zip(&full) {
            let scale = g.frobenius_norm().max(1.0);
            worst = worst.max(a.distance(g)? / scale);
        }
    }
    Ok(le(
        "svrg_unbiasedness",
        "the component average of variance-reduced directions equals the full gradient",
        worst,
        1e-12,
        "deep factorization layer with 8 blocks and a 16-term quadratic".into(),
    ))
}
