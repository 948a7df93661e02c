//! `lcreg` command-line driver: fit, benchmark, simulate.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lcreg::estimators::{fit, init_random, Algorithm, EstimatorConfig};
use lcreg::harness::{run_benchmark_with_jobs, simulate, BenchmarkReport, TrueModel};
use lcreg::io::{
    read_dataset_file, read_true_model_json, write_dataset_csv, write_labels_csv,
    write_manifest_json, write_params_json, write_report_json, write_runs_csv, write_trace_csv,
    write_true_model_json, CsvLayout, RunManifest,
};
use lcreg::{Dataset, LcError, Result};

#[derive(Parser)]
#[command(name = "lcreg", version, about = "Latent class regression estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one estimator from a random start.
    Fit(FitArgs),
    /// Multi-start comparison of several estimators.
    Benchmark(BenchmarkArgs),
    /// Draw a dataset from a latent class regression model.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Data CSV: header row, response columns first, then covariates.
    #[arg(long)]
    data: PathBuf,
    /// Number of leading response columns.
    #[arg(long = "responses", value_name = "J")]
    n_items: usize,
    /// Category counts: one value for all items or a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    categories: Option<Vec<usize>>,
    /// Prepend a constant column to the covariates.
    #[arg(long)]
    intercept: bool,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let layout = CsvLayout {
            n_items: self.n_items,
            categories: self.categories.clone(),
            intercept: self.intercept,
        };
        read_dataset_file(&self.data, &layout)
    }
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long, default_value_t = 1e-11)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Hybrid switch threshold on the log-likelihood increment.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    /// Newton step size.
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
}

impl ConfigArgs {
    fn config(&self, seed: u64) -> Result<EstimatorConfig> {
        let cfg = EstimatorConfig {
            tol: self.tol,
            max_iter: self.max_iter,
            epsilon: self.epsilon,
            alpha: self.alpha,
            seed,
            ..EstimatorConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "nested_em")]
    algo: Algorithm,
    #[arg(long)]
    classes: usize,
    /// Seed of the random initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "nr_em,nr_em_q1,mm_em,three_step,nested_em,hybrid_em"
    )]
    algos: Vec<Algorithm>,
    #[arg(long)]
    classes: usize,
    /// Run k is initialized from seed `seed + k`.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100)]
    runs: usize,
    /// Worker threads (results do not depend on this).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Random class profiles and coefficients of the requested shape.
    Random,
    /// Three-class survey-shaped model with a party covariate.
    Election,
}

#[derive(Args)]
struct SimulateArgs {
    /// True-model JSON; overrides --preset and the shape flags.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "random")]
    preset: Preset,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    #[arg(long, default_value_t = 12)]
    items: usize,
    #[arg(long, default_value_t = 4)]
    categories: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the true class labels.
    #[arg(long)]
    labels: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn create(dir: &Path, name: &str, outputs: &mut Vec<String>) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path)
        .map_err(|e| LcError::Io(format!("cannot create {}: {e}", path.display())))?;
    outputs.push(path.display().to_string());
    Ok(BufWriter::new(file))
}

fn manifest(
    command: &str,
    inputs: Vec<String>,
    config: Option<EstimatorConfig>,
    seeds: Vec<u64>,
    outputs: Vec<String>,
) -> RunManifest {
    RunManifest {
        command: command.into(),
        args: std::env::args().skip(1).collect(),
        inputs,
        config,
        seeds,
        version: env!("CARGO_PKG_VERSION").into(),
        outputs,
    }
}

fn write_manifest(dir: &Path, m: &RunManifest) -> Result<()> {
    let mut outputs = Vec::new();
    write_manifest_json(m, create(dir, "manifest.json", &mut outputs)?)
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let data = args.data.load()?;
    let cfg = args.config.config(args.seed)?;
    let init = init_random(&data, args.classes, args.seed)?;
    let result = fit(args.algo, &data, args.classes, &init, &cfg)?;

    fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::new();
    write_params_json(
        &result.params,
        create(&args.out_dir, "params.json", &mut outputs)?,
    )?;
    write_trace_csv(
        &result.loglik_trace,
        create(&args.out_dir, "trace.csv", &mut outputs)?,
    )?;
    let m = manifest(
        "fit",
        vec![args.data.data.display().to_string()],
        Some(cfg),
        vec![args.seed],
        outputs,
    );
    write_manifest(&args.out_dir, &m)?;

    println!("algorithm   {}", result.algorithm);
    println!("loglik      {:.6}", result.final_loglik());
    println!("iterations  {}", result.iterations);
    println!("decays      {}", result.decay_count);
    println!("stop        {:?}", result.stop_reason);
    if let Some(t) = result.switch_iteration {
        println!("switched    {t}");
    }
    if let Some(t) = result.modal_ties {
        println!("modal ties  {t}");
    }
    Ok(())
}

fn fmt_opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "NA".to_string(), |v| v.to_string())
}

fn print_report(report: &BenchmarkReport) {
    println!(
        "{} runs, R = {}, max loglik {}",
        report.n_runs,
        report.n_classes,
        fmt_opt(report.global_max_loglik.map(|v| format!("{v:.4}")))
    );
    println!(
        "{:<12} {:>7} {:>7} {:>7} {:>12} {:>9} {:>10}",
        "algorithm", "decays", "local", "failed", "median gap", "iters", "time [s]"
    );
    for s in &report.per_algorithm {
        println!(
            "{:<12} {:>7} {:>7} {:>7} {:>12} {:>9} {:>10.4}",
            s.algorithm.as_str(),
            fmt_opt(s.decay_runs),
            s.local_mode_runs,
            s.failed_runs,
            fmt_opt(s.median_gap.map(|v| format!("{v:.3}"))),
            fmt_opt(s.median_iters_to_max.map(|v| format!("{v:.1}"))),
            s.mean_wall_time
        );
    }
}

fn cmd_benchmark(args: &BenchmarkArgs) -> Result<()> {
    let data = args.data.load()?;
    let cfg = args.config.config(args.seed)?;
    let report = run_benchmark_with_jobs(
        &data,
        args.classes,
        &args.algos,
        args.runs,
        &cfg,
        args.seed,
        args.jobs,
    )?;

    fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::new();
    write_report_json(&report, create(&args.out_dir, "report.json", &mut outputs)?)?;
    write_runs_csv(
        &report.runs,
        create(&args.out_dir, "runs.csv", &mut outputs)?,
    )?;
    let m = manifest(
        "benchmark",
        vec![args.data.data.display().to_string()],
        Some(cfg),
        report.seeds.clone(),
        outputs,
    );
    write_manifest(&args.out_dir, &m)?;
    print_report(&report);
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    if args.n == 0 {
        return Err(LcError::Invalid("--n must be at least 1".into()));
    }
    let (model, inputs) = match &args.model {
        Some(path) => {
            let file = File::open(path)
                .map_err(|e| LcError::Io(format!("cannot open {}: {e}", path.display())))?;
            (
                read_true_model_json(file)?,
                vec![path.display().to_string()],
            )
        }
        None => match args.preset {
            Preset::Election => (TrueModel::election_analog(), Vec::new()),
            Preset::Random => (
                TrueModel::random(args.classes, args.items, args.categories, args.seed)?,
                Vec::new(),
            ),
        },
    };
    let sim = simulate(&model, args.n, args.seed)?;

    fs::create_dir_all(&args.out_dir)?;
    let mut outputs = Vec::new();
    write_dataset_csv(
        &sim.dataset,
        create(&args.out_dir, "data.csv", &mut outputs)?,
    )?;
    write_true_model_json(&model, create(&args.out_dir, "model.json", &mut outputs)?)?;
    if args.labels {
        write_labels_csv(
            &sim.labels,
            create(&args.out_dir, "labels.csv", &mut outputs)?,
        )?;
    }
    let m = manifest("simulate", inputs, None, vec![args.seed], outputs);
    write_manifest(&args.out_dir, &m)?;
    println!(
        "wrote {} units, {} items, {} covariate columns",
        sim.dataset.n_units(),
        sim.dataset.n_items(),
        sim.dataset.n_covariates()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}
