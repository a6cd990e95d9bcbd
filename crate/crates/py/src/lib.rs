//! Python bindings. Matrices cross the boundary as lists of rows.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use sadam_core::analysis::{fit_rate_values, icc as core_icc, timing_summary as core_timing};
use sadam_core::deep_mf::{decompose as core_decompose, generate_synthetic as core_generate, DeepMfConfig, SyntheticSpec};
use sadam_core::harness::run_verify;
use sadam_core::shuffle::apply_shuffle;
use sadam_core::{DenseMatrix, Error, Method, OptimizerConfig, OptimizerTrace, RandomSource};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        Error::Numerical(_) | Error::Degenerate(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DenseMatrix> {
    DenseMatrix::from_rows(&rows).map_err(to_py)
}

/// Loss trace of one optimizer run on one layer.
#[pyclass(get_all, frozen)]
struct Trace {
    method: String,
    iterations: Vec<usize>,
    losses: Vec<f64>,
    wall_ms: Vec<f64>,
    shuffle_fired: Vec<bool>,
}

impl From<&OptimizerTrace> for Trace {
    fn from(t: &OptimizerTrace) -> Self {
        Self {
            method: t.method.clone(),
            iterations: t.records.iter().map(|r| r.iteration).collect(),
            losses: t.losses(),
            wall_ms: t.records.iter().map(|r| r.wall_ms).collect(),
            shuffle_fired: t.records.iter().map(|r| r.shuffle_fired).collect(),
        }
    }
}

#[pymethods]
impl Trace {
    fn final_loss(&self) -> f64 {
        *self.losses.last().expect("traces hold the initial loss")
    }

    fn total_wall_ms(&self) -> f64 {
        self.wall_ms.iter().sum()
    }

    fn shuffle_count(&self) -> usize {
        self.shuffle_fired.iter().filter(|f| **f).count()
    }

    fn __len__(&self) -> usize {
        self.losses.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Trace(method={:?}, records={}, final_loss={:.6e})",
            self.method,
            self.losses.len(),
            self.final_loss()
        )
    }
}

/// Column-shuffles a matrix; returns the shuffled rows and the permutation.
#[pyfunction]
fn shuffle(g: Vec<Vec<f64>>, seed: u64) -> PyResult<(Vec<Vec<f64>>, Vec<usize>)> {
    let (out, perm) = apply_shuffle(&matrix(g)?, &mut RandomSource::new(seed));
    Ok((out.to_rows(), perm))
}

#[pyfunction]
fn frobenius_norm(g: Vec<Vec<f64>>) -> PyResult<f64> {
    Ok(matrix(g)?.frobenius_norm())
}

/// Synthetic input matrix `X_1 ... X_K Y_K + Z + noise`.
#[pyfunction]
#[pyo3(signature = (rows=64, cols=100, ranks=None, sparsity=0.05, noise_sigma=0.01, seed=0))]
fn generate_synthetic(
    rows: usize,
    cols: usize,
    ranks: Option<Vec<usize>>,
    sparsity: f64,
    noise_sigma: f64,
    seed: u64,
) -> PyResult<Vec<Vec<f64>>> {
    let spec = SyntheticSpec {
        rows,
        cols,
        ranks: ranks.unwrap_or_default(),
        sparsity,
        noise_sigma,
        seed,
        ..SyntheticSpec::default()
    };
    Ok(core_generate(&spec).map_err(to_py)?.0.to_rows())
}

/// Layer-wise factorization; returns one trace per layer.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (s, method="sadam", iters=200, trigger_eps=1e-5, ranks=None, lam=0.1, seed=0))]
fn decompose(
    py: Python<'_>,
    s: Vec<Vec<f64>>,
    method: &str,
    iters: usize,
    trigger_eps: f64,
    ranks: Option<Vec<usize>>,
    lam: f64,
    seed: u64,
) -> PyResult<Vec<Trace>> {
    let s = matrix(s)?;
    let method: Method = method.parse().map_err(to_py)?;
    let cfg = DeepMfConfig {
        ranks: ranks.unwrap_or_default(),
        lambda: lam,
        ..DeepMfConfig::default()
    };
    let opt = OptimizerConfig {
        method,
        max_iters: iters,
        trigger_eps,
        ..OptimizerConfig::default()
    };
    let (_, traces) = py.detach(|| core_decompose(&s, &cfg, &opt, seed)).map_err(to_py)?;
    Ok(traces.iter().map(Trace::from).collect())
}

/// ICC(2,1) of a subjects x raters table as a dict.
#[pyfunction]
fn icc(py: Python<'_>, table: Vec<Vec<f64>>) -> PyResult<Py<PyAny>> {
    let r = core_icc(&matrix(table)?).map_err(to_py)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("icc", r.icc)?;
    d.set_item("between_subject_ms", r.between_subject_ms)?;
    d.set_item("between_rater_ms", r.between_rater_ms)?;
    d.set_item("error_ms", r.error_ms)?;
    d.set_item("n_subjects", r.n_subjects)?;
    d.set_item("n_raters", r.n_raters)?;
    Ok(d.into_any().unbind())
}

/// `(mean, std, "mean ± std")` of run durations.
#[pyfunction]
fn timing_summary(method: &str, durations_ms: Vec<f64>) -> PyResult<(f64, f64, String)> {
    let s = core_timing(method, &durations_ms).map_err(to_py)?;
    Ok((s.mean_ms, s.std_ms, s.to_string()))
}

/// `(exponent, constant, r_squared)` of `loss - floor ~ C t^-p`.
#[pyfunction]
fn fit_rate(losses: Vec<f64>, loss_floor: f64) -> PyResult<(f64, f64, f64)> {
    let f = fit_rate_values(&losses, loss_floor).map_err(to_py)?;
    Ok((f.exponent, f.constant, f.r_squared))
}

/// Runs the self-check suite; returns `(passed, report text)`.
#[pyfunction]
#[pyo3(signature = (seed=0))]
fn verify(py: Python<'_>, seed: u64) -> PyResult<(bool, String)> {
    let report = py.detach(|| run_verify(seed, None)).map_err(to_py)?;
    Ok((report.passed, report.render()))
}

#[pymodule]
fn sadam(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Trace>()?;
    m.add_function(wrap_pyfunction!(shuffle, m)?)?;
    m.add_function(wrap_pyfunction!(frobenius_norm, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(icc, m)?)?;
    m.add_function(wrap_pyfunction!(timing_summary, m)?)?;
    m.add_function(wrap_pyfunction!(fit_rate, m)?)?;
    m.add_function(wrap_pyfunction!(verify, m)?)?;
    Ok(())
}
