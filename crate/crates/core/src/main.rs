use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sadam_core::analysis::icc;
use sadam_core::deep_mf::{decompose, generate_synthetic, DeepMfConfig, SyntheticSpec};
use sadam_core::harness::bench::trace_file_name;
use sadam_core::harness::verify::dropped_column_shuffle;
use sadam_core::harness::{
    load_matrix_csv, run_benchmark, run_verify_with, write_matrix_csv, write_trace_csv, BenchConfig, VerifyOptions,
};
use sadam_core::{Error, Method, OptimizerConfig, Result};

#[derive(Parser)]
#[command(name = "sadam", version, about = "Shuffled-gradient Adam and peer optimizers on deep matrix factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic subject matrices and their ground-truth factors.
    Generate(GenerateArgs),
    /// Factorize one matrix with one optimizer.
    Decompose(DecomposeArgs),
    /// Run every method on every subject and seed.
    Bench(BenchArgs),
    /// Run the self-check suite.
    Verify(VerifyArgs),
    /// ICC(2,1) of a subjects x raters CSV table.
    Icc(IccArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Number of layers when --ranks is not given.
    #[arg(long)]
    layers: Option<usize>,
    /// Comma-separated per-layer ranks.
    #[arg(long, value_delimiter = ',')]
    ranks: Vec<usize>,
    /// Weight of the sparse penalty.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    subjects: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    rows: usize,
    #[arg(long, default_value_t = 100)]
    cols: usize,
    #[arg(long, default_value_t = 0.05)]
    sparsity: f64,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct DecomposeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "sadam")]
    method: Method,
    #[arg(long, default_value_t = 200)]
    iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    trigger_eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Write 0 in the wall_ms column.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// TOML config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Subject matrix CSV files (repeatable). Without inputs a synthetic cohort is used.
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',')]
    method: Vec<Method>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    trigger_eps: Option<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Size of the synthetic cohort.
    #[arg(long)]
    subjects: Option<usize>,
    #[command(flatten)]
    model: ModelArgs,
    /// Worker threads, 0 for all cores.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write 0 in the wall_ms column so reruns are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    DropColumn,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the TOML report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Swap in a broken shuffle to exercise the failure path.
    #[arg(long, hide = true)]
    fault: Option<Fault>,
}

#[derive(Args)]
struct IccArgs {
    #[arg(long)]
    input: PathBuf,
    /// Where to write the result as TOML.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// `min(m, n) / 4`, halving per extra layer.
fn ranks_for_layers(layers: usize, m: usize, n: usize) -> Vec<usize> {
    let base = m.min(n);
    (0..layers).map(|k| (base / (4usize << k.min(60))).max(1)).collect()
}

impl ModelArgs {
    fn resolve_ranks(&self, m: usize, n: usize) -> Result<Vec<usize>> {
        match (self.layers, self.ranks.is_empty()) {
            (Some(0), _) => Err(Error::Config("--layers must be at least 1".into())),
            (Some(l), false) if l != self.ranks.len() => Err(Error::Config(format!(
                "--layers {l} disagrees with {} ranks",
                self.ranks.len()
            ))),
            (Some(l), true) => Ok(ranks_for_layers(l, m, n)),
            _ => Ok(self.ranks.clone()),
        }
    }

    fn apply(&self, cfg: &mut DeepMfConfig, m: usize, n: usize) -> Result<()> {
        cfg.ranks = self.resolve_ranks(m, n)?;
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        Ok(())
    }
}

fn generate(args: &GenerateArgs) -> Result<()> {
    let ranks = args.model.resolve_ranks(args.rows, args.cols)?;
    for i in 0..args.subjects {
        let spec = SyntheticSpec {
            rows: args.rows,
            cols: args.cols,
            ranks: ranks.clone(),
            sparsity: args.sparsity,
            noise_sigma: args.noise,
            seed: args.seed.wrapping_add(i as u64),
            ..SyntheticSpec::default()
        };
        let (s, truth) = generate_synthetic(&spec)?;
        let name = format!("subject{i:02}");
        write_matrix_csv(args.out.join(format!("{name}.csv")), &s)?;
        let truth_dir = args.out.join("truth");
        for (k, layer) in truth.layers.iter().enumerate() {
            let k = k + 1;
            write_matrix_csv(truth_dir.join(format!("{name}_x{k}.csv")), &layer.x)?;
            write_matrix_csv(truth_dir.join(format!("{name}_y{k}.csv")), &layer.y)?;
            write_matrix_csv(truth_dir.join(format!("{name}_z{k}.csv")), &layer.z)?;
        }
        println!("{}", args.out.join(format!("{name}.csv")).display());
    }
    Ok(())
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

fn run_decompose(args: &DecomposeArgs) -> Result<()> {
    let s = load_matrix_csv(&args.input)?;
    let mut cfg = DeepMfConfig::default();
    args.model.apply(&mut cfg, s.rows(), s.cols())?;
    let opt = OptimizerConfig {
        method: args.method,
        max_iters: args.iters,
        trigger_eps: args.trigger_eps,
        ..OptimizerConfig::default()
    };
    let (model, traces) = decompose(&s, &cfg, &opt, args.seed)?;
    let name = stem(&args.input);
    for (k, (trace, layer)) in traces.iter().zip(&model.layers).enumerate() {
        let k = k + 1;
        let path = args.out.join(trace_file_name(&name, args.method, args.seed, k));
        write_trace_csv(&path, trace, !args.no_timing)?;
        write_matrix_csv(args.out.join(format!("{name}_x{k}.csv")), &layer.x)?;
        write_matrix_csv(args.out.join(format!("{name}_y{k}.csv")), &layer.y)?;
        write_matrix_csv(args.out.join(format!("{name}_z{k}.csv")), &layer.z)?;
        println!(
            "layer {k}: final loss {:.6e}, {:.2} ms, {} shuffles -> {}",
            trace.final_loss(),
            trace.total_wall_ms(),
            trace.shuffle_count(),
            path.display()
        );
    }
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<i32> {
    let mut cfg = match &args.config {
        Some(p) => BenchConfig::load(p)?,
        None => BenchConfig::default(),
    };
    if !args.input.is_empty() {
        cfg.inputs = args.input.clone();
    }
    if let Some(out) = &args.out {
        cfg.out_dir = out.clone();
    }
    if !args.method.is_empty() {
        cfg.methods = args.method.clone();
    }
    if let Some(i) = args.iters {
        cfg.optimizer.max_iters = i;
    }
    if let Some(e) = args.trigger_eps {
        cfg.optimizer.trigger_eps = e;
    }
    if !args.seed.is_empty() {
        cfg.seeds = args.seed.clone();
    }
    if let Some(n) = args.subjects {
        cfg.synthetic.subjects = n;
    }
    if let Some(j) = args.jobs {
        cfg.jobs = j;
    }
    if args.no_timing {
        cfg.record_timing = false;
    }
    if args.model.layers.is_some() || !args.model.ranks.is_empty() {
        // layer count resolves against the synthetic shape; CSV inputs need explicit ranks
        let (m, n) = (cfg.synthetic.spec.rows, cfg.synthetic.spec.cols);
        cfg.deep_mf.ranks = args.model.resolve_ranks(m, n)?;
    }
    if let Some(l) = args.model.lambda {
        cfg.deep_mf.lambda = l;
    }

    let report = run_benchmark(&cfg)?;
    print!("{}", std::fs::read_to_string(&report.timing_path)?);
    for i in &report.icc {
        match &i.result {
            Some(r) => println!("icc {} layer {}: {:.4}", i.method, i.layer, r.icc),
            None => println!("icc {} layer {}: n/a ({})", i.method, i.layer, i.note.as_deref().unwrap_or("")),
        }
    }
    for s in report.failed_subjects() {
        eprintln!("subject {} failed: {}", s.name, s.error.as_deref().unwrap_or(""));
    }
    for f in &report.failures {
        eprintln!("run {} {} seed {} failed: {}", f.subject, f.method, f.seed, f.error);
    }
    println!("summary: {}", report.summary_path.display());
    Ok(report.exit_code())
}

fn verify(args: &VerifyArgs) -> Result<i32> {
    let mut opts = VerifyOptions::new(args.seed);
    if let Some(Fault::DropColumn) = args.fault {
        opts.shuffle = dropped_column_shuffle;
    }
    let report = run_verify_with(&opts, args.out.as_deref())?;
    print!("{}", report.render());
    Ok(report.exit_code())
}

fn run_icc(args: &IccArgs) -> Result<()> {
    let table = load_matrix_csv(&args.input)?;
    let r = icc(&table)?;
    let text = toml::to_string(&r).map_err(|e| Error::Input(e.to_string()))?;
    if let Some(out) = &args.out {
        sadam_core::harness::csv_io::write_atomic(out, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Generate(a) => generate(a).map(|_| 0),
        Command::Decompose(a) => run_decompose(a).map(|_| 0),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => verify(a),
        Command::Icc(a) => run_icc(a).map(|_| 0),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
