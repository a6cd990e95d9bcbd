//! Benchmark orchestration over subjects, methods and seeds.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! traces/{subject}_{method}_seed{seed}_layer{k}.csv
//! curves/{method}_layer{k}.csv      iter,mean_loss,std_loss,n_runs
//! summary.toml
//! timing.txt
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::BenchConfig;
use super::csv_io::{load_matrix_csv, write_atomic, write_trace_csv};
use crate::analysis::{icc, timing_summary, IccResult, TimingSummary};
use crate::deep_mf::{decompose, generate_synthetic, SyntheticSpec};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::optim::{Method, OptimizerConfig, OptimizerTrace};
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectStatus {
    pub name: String,
    /// Why the subject could not be loaded, if it failed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// One layer of one `(subject, method, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunEntry {
    pub subject: String,
    pub method: Method,
    pub seed: u64,
    /// 1-based layer index.
    pub layer: usize,
    pub trace: PathBuf,
    pub final_loss: f64,
    pub total_wall_ms: f64,
    pub shuffle_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunFailure {
    pub subject: String,
    pub method: Method,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerTiming {
    pub method: Method,
    pub layer: usize,
    pub summary: TimingSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerIcc {
    pub method: Method,
    pub layer: usize,
    /// Iterations used as raters.
    pub checkpoints: Vec<usize>,
    pub result: Option<IccResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Loss averaged over every successful `(subject, seed)` run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCurve {
    pub method: Method,
    pub layer: usize,
    pub path: PathBuf,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_runs: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub subjects: Vec<SubjectStatus>,
    pub runs: Vec<RunEntry>,
    pub failures: Vec<RunFailure>,
    pub timing: Vec<LayerTiming>,
    pub icc: Vec<LayerIcc>,
    pub curves: Vec<LossCurve>,
    pub summary_path: PathBuf,
    pub timing_path: PathBuf,
}

impl RunReport {
    pub fn failed_subjects(&self) -> Vec<&SubjectStatus> {
        self.subjects.iter().filter(|s| s.error.is_some()).collect()
    }

    pub fn is_success(&self) -> bool {
        self.failures.is_empty() && self.subjects.iter().all(|s| s.error.is_none())
    }

    /// 0 on success, 2 when any subject or run failed.
    pub fn exit_code(&self) -> i32 {
        if self.is_success() {
            0
        } else {
            2
        }
    }

    pub fn timing_for(&self, method: Method, layer: usize) -> Option<&TimingSummary> {
        self.timing
            .iter()
            .find(|t| t.method == method && t.layer == layer)
            .map(|t| &t.summary)
    }

    pub fn curve_for(&self, method: Method, layer: usize) -> Option<&LossCurve> {
        self.curves.iter().find(|c| c.method == method && c.layer == layer)
    }
}

pub fn trace_file_name(subject: &str, method: Method, seed: u64, layer: usize) -> String {
    format!("{subject}_{method}_seed{seed}_layer{layer}.csv")
}

struct Subject {
    name: String,
    data: std::result::Result<DenseMatrix, String>,
}

fn load_subjects(config: &BenchConfig) -> Vec<Subject> {
    if config.inputs.is_empty() {
        let base = &config.synthetic.spec;
        return (0..config.synthetic.subjects)
            .map(|i| {
                let spec = SyntheticSpec {
                    seed: base.seed.wrapping_add(i as u64),
                    ..base.clone()
                };
                Subject {
                    name: format!("subject{i:02}"),
                    data: generate_synthetic(&spec).map(|(s, _)| s).map_err(|e| e.to_string()),
                }
            })
            .collect();
    }
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    config
        .inputs
        .iter()
        .map(|p| {
            let stem = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "subject".into());
            // disambiguate equal stems from different directories
            let count = seen.entry(stem.clone()).or_insert(0);
            *count += 1;
            let name = if *count == 1 { stem } else { format!("{stem}-{count}") };
            Subject {
                name,
                data: load_matrix_csv(p).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

/// (subject index, seed, trace) of one finished run.
type RunRef<'a> = (usize, u64, &'a OptimizerTrace);

struct Job {
    subject: usize,
    method: Method,
    seed: u64,
}

type JobOutcome = std::result::Result<Vec<OptimizerTrace>, String>;

/// Runs every `(subject, method, seed)` combination and writes traces,
/// averaged curves, `summary.toml` and `timing.txt`.
///
/// A subject that cannot be loaded, or a run that fails, is recorded in the
/// report and the remaining work continues. Only configuration problems and
/// I/O failures on the output directory abort the call.
pub fn run_benchmark(config: &BenchConfig) -> Result<RunReport> {
    config.validate()?;
    let subjects = load_subjects(config);

    let mut jobs = Vec::new();
    for (si, subj) in subjects.iter().enumerate() {
        if subj.data.is_err() {
            continue;
        }
        for &method in &config.methods {
            for &seed in &config.seeds {
                jobs.push(Job {
                    subject: si,
                    method,
                    seed,
                });
            }
        }
    }

    let run_job = |job: &Job| -> JobOutcome {
        let s = subjects[job.subject].data.as_ref().expect("only loaded subjects are scheduled");
        let opt = OptimizerConfig {
            method: job.method,
            ..config.optimizer.clone()
        };
        // same initialization for every method on a (subject, seed) pair
        let run_seed = RandomSource::derive(job.seed, job.subject as u64).next_u64();
        let (_, mut traces) = decompose(s, &config.deep_mf, &opt, run_seed).map_err(|e| e.to_string())?;
        if !config.record_timing {
            for t in &mut traces {
                t.records.iter_mut().for_each(|r| r.wall_ms = 0.0);
            }
        }
        Ok(traces)
    };
    let outcomes: Vec<JobOutcome> = if config.jobs == 1 {
        jobs.iter().map(run_job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run_job).collect())
    };

    let out = &config.out_dir;
    let trace_dir = out.join("traces");
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    // (method, layer) -> per-run traces in job order
    let mut grouped: BTreeMap<(Method, usize), Vec<RunRef>> = BTreeMap::new();
    for (job, outcome) in jobs.iter().zip(&outcomes) {
        let name = &subjects[job.subject].name;
        match outcome {
            Ok(traces) => {
                for (k, trace) in traces.iter().enumerate() {
                    let layer = k + 1;
                    let path = trace_dir.join(trace_file_name(name, job.method, job.seed, layer));
                    write_trace_csv(&path, trace, config.record_timing)?;
                    runs.push(RunEntry {
                        subject: name.clone(),
                        method: job.method,
                        seed: job.seed,
                        layer,
                        trace: path,
                        final_loss: trace.final_loss(),
                        total_wall_ms: trace.total_wall_ms(),
                        shuffle_count: trace.shuffle_count(),
                    });
                    grouped
                        .entry((job.method, layer))
                        .or_default()
                        .push((job.subject, job.seed, trace));
                }
            }
            Err(e) => failures.push(RunFailure {
                subject: name.clone(),
                method: job.method,
                seed: job.seed,
                error: e.clone(),
            }),
        }
    }

    let mut timing = Vec::new();
    let mut icc_results = Vec::new();
    let mut curves = Vec::new();
    for (&(method, layer), group) in &grouped {
        let durations: Vec<f64> = group.iter().map(|(_, _, t)| t.total_wall_ms()).collect();
        timing.push(LayerTiming {
            method,
            layer,
            summary: timing_summary(method.name(), &durations)?,
        });
        icc_results.push(consistency(method, layer, group, &config.icc_checkpoints));
        let curve = average_curve(method, layer, group, &out.join("curves"));
        write_atomic(&curve.path, render_curve(&curve).as_bytes())?;
        curves.push(curve);
    }

    let report = RunReport {
        out_dir: out.clone(),
        subjects: subjects
            .iter()
            .map(|s| SubjectStatus {
                name: s.name.clone(),
                error: s.data.as_ref().err().cloned(),
            })
            .collect(),
        runs,
        failures,
        timing,
        icc: icc_results,
        curves,
        summary_path: out.join("summary.toml"),
        timing_path: out.join("timing.txt"),
    };
    write_atomic(&report.summary_path, render_summary(config, &report)?.as_bytes())?;
    write_atomic(&report.timing_path, render_timing_table(&report).as_bytes())?;
    Ok(report)
}

/// Subjects as targets, checkpoint losses (averaged over seeds) as raters.
fn consistency(
    method: Method,
    layer: usize,
    group: &[(usize, u64, &OptimizerTrace)],
    checkpoints: &[usize],
) -> LayerIcc {
    let shortest = group.iter().map(|(_, _, t)| t.records.len()).min().unwrap_or(0);
    let used: Vec<usize> = checkpoints.iter().copied().filter(|&c| c < shortest).collect();
    let mut by_subject: BTreeMap<usize, Vec<&OptimizerTrace>> = BTreeMap::new();
    for (s, _, t) in group {
        by_subject.entry(*s).or_default().push(t);
    }
    let skip = |note: String| LayerIcc {
        method,
        layer,
        checkpoints: used.clone(),
        result: None,
        note: Some(note),
    };
    if by_subject.len() < 2 {
        return skip(format!("needs at least 2 subjects, have {}", by_subject.len()));
    }
    if used.len() < 2 {
        return skip(format!("needs at least 2 checkpoints within the run, have {}", used.len()));
    }
    let rows: Vec<Vec<f64>> = by_subject
        .values()
        .map(|traces| {
            used.iter()
                .map(|&c| traces.iter().map(|t| t.records[c].loss).sum::<f64>() / traces.len() as f64)
                .collect()
        })
        .collect();
    match DenseMatrix::from_rows(&rows).and_then(|m| icc(&m)) {
        Ok(r) => LayerIcc {
            method,
            layer,
            checkpoints: used,
            result: Some(r),
            note: None,
        },
        Err(e) => skip(e.to_string()),
    }
}

fn average_curve(method: Method, layer: usize, group: &[(usize, u64, &OptimizerTrace)], dir: &Path) -> LossCurve {
    let len = group.iter().map(|(_, _, t)| t.records.len()).max().unwrap_or(0);
    let mut mean = Vec::with_capacity(len);
    let mut std = Vec::with_capacity(len);
    let mut n_runs = Vec::with_capacity(len);
    for i in 0..len {
        let vals: Vec<f64> = group
            .iter()
            .filter_map(|(_, _, t)| t.records.get(i).map(|r| r.loss))
            .collect();
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        let s = if vals.len() > 1 {
            (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        mean.push(m);
        std.push(s);
        n_runs.push(vals.len());
    }
    LossCurve {
        method,
        layer,
        path: dir.join(format!("{method}_layer{layer}.csv")),
        mean,
        std,
        n_runs,
    }
}

fn render_curve(c: &LossCurve) -> String {
    let mut out = String::from("iter,mean_loss,std_loss,n_runs\n");
    for (i, ((m, s), n)) in c.mean.iter().zip(&c.std).zip(&c.n_runs).enumerate() {
        writeln!(out, "{i},{m:.16e},{s:.16e},{n}").unwrap();
    }
    out
}

/// Human-readable table: one row per method, one column per layer.
pub fn render_timing_table(report: &RunReport) -> String {
    let layers = report.timing.iter().map(|t| t.layer).max().unwrap_or(0);
    let mut methods: Vec<Method> = report.timing.iter().map(|t| t.method).collect();
    methods.dedup();
    let mut out = String::from("Time consumption per run (ms), mean ± std\n");
    write!(out, "{:<8}", "method").unwrap();
    for k in 1..=layers {
        write!(out, "  {:<22}", format!("layer {k}")).unwrap();
    }
    out.push('\n');
    for m in methods {
        write!(out, "{:<8}", m.name()).unwrap();
        for k in 1..=layers {
            let cell = report.timing_for(m, k).map(|s| s.to_string()).unwrap_or_else(|| "-".into());
            write!(out, "  {cell:<22}").unwrap();
        }
        out.push('\n');
    }
    out.trim_end_matches(' ').to_string()
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    run: RunSection<'a>,
    subjects: &'a [SubjectStatus],
    timing: BTreeMap<String, BTreeMap<String, &'a TimingSummary>>,
    icc: BTreeMap<String, BTreeMap<String, IccSection<'a>>>,
    curves: BTreeMap<String, BTreeMap<String, CurveSection>>,
    runs: Vec<RunRow<'a>>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    failures: &'a [RunFailure],
}

#[derive(Serialize)]
struct RunSection<'a> {
    methods: Vec<&'static str>,
    seeds: &'a [u64],
    max_iters: usize,
    trigger_eps: f64,
    subjects_ok: usize,
    subjects_failed: usize,
    runs_failed: usize,
    timing_recorded: bool,
}

#[derive(Serialize)]
struct IccSection<'a> {
    checkpoints: &'a [usize],
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    result: Option<&'a IccResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<&'a str>,
}

#[derive(Serialize)]
struct CurveSection {
    path: String,
    final_mean_loss: f64,
}

#[derive(Serialize)]
struct RunRow<'a> {
    subject: &'a str,
    method: Method,
    seed: u64,
    layer: usize,
    trace: String,
    final_loss: f64,
    total_wall_ms: f64,
    shuffle_count: usize,
}

fn rel(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

fn render_summary(config: &BenchConfig, report: &RunReport) -> Result<String> {
    let layer_key = |k: usize| format!("layer{k}");
    let mut timing: BTreeMap<String, BTreeMap<String, &TimingSummary>> = BTreeMap::new();
    for t in &report.timing {
        timing.entry(t.method.to_string()).or_default().insert(layer_key(t.layer), &t.summary);
    }
    let mut icc_map: BTreeMap<String, BTreeMap<String, IccSection>> = BTreeMap::new();
    for i in &report.icc {
        icc_map.entry(i.method.to_string()).or_default().insert(
            layer_key(i.layer),
            IccSection {
                checkpoints: &i.checkpoints,
                result: i.result.as_ref(),
                note: i.note.as_deref(),
            },
        );
    }
    let mut curves: BTreeMap<String, BTreeMap<String, CurveSection>> = BTreeMap::new();
    for c in &report.curves {
        curves.entry(c.method.to_string()).or_default().insert(
            layer_key(c.layer),
            CurveSection {
                path: rel(&report.out_dir, &c.path),
                final_mean_loss: c.mean.last().copied().unwrap_or(f64::NAN),
            },
        );
    }
    let doc = SummaryDoc {
        run: RunSection {
            methods: config.methods.iter().map(|m| m.name()).collect(),
            seeds: &config.seeds,
            max_iters: config.optimizer.max_iters,
            trigger_eps: config.optimizer.trigger_eps,
            subjects_ok: report.subjects.len() - report.failed_subjects().len(),
            subjects_failed: report.failed_subjects().len(),
            runs_failed: report.failures.len(),
            timing_recorded: config.record_timing,
        },
        subjects: &report.subjects,
        timing,
        icc: icc_map,
        curves,
        runs: report
            .runs
            .iter()
            .map(|r| RunRow {
                subject: &r.subject,
                method: r.method,
                seed: r.seed,
                layer: r.layer,
                trace: rel(&report.out_dir, &r.trace),
                final_loss: r.final_loss,
                total_wall_ms: r.total_wall_ms,
                shuffle_count: r.shuffle_count,
            })
            .collect(),
        failures: &report.failures,
    };
    toml::to_string(&doc).map_err(|e| Error::Input(format!("cannot serialize summary: {e}")))
}
