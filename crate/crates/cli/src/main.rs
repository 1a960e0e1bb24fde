mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use haqjsk_core::cv::{cross_validate, CvConfig, DEFAULT_C_GRID};
use haqjsk_core::exec::Exec;
use haqjsk_core::io::{load_tud, read_kernel_matrix, write_kernel_matrix, TudBundle};
use haqjsk_core::kernels::{kernel_matrix_timed, psd_diagnostics, KernelConfig, KernelVariant};
use haqjsk_core::selftest;
use log::{info, warn};
use serde::Serialize;

use manifest::{
    fingerprint, manifest_path, write_manifest, DatasetFingerprint, RunManifest, Timer,
};

#[derive(Parser, Debug)]
#[command(
    name = "haqjsk",
    version,
    about = "Hierarchical aligned quantum Jensen-Shannon graph kernels"
)]
struct Cli {
    /// Worker threads; defaults to the available cores.
    #[arg(long, env = "HAQJSK_JOBS", global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute a kernel matrix for a TU dataset bundle.
    Compute(ComputeArgs),
    /// Cross-validate a C-SVM on a kernel matrix file.
    Eval(EvalArgs),
    /// Run the built-in analytic checks.
    Selftest,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum KernelArg {
    HaqjskA,
    HaqjskD,
    Qjsu,
}

impl From<KernelArg> for KernelVariant {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::HaqjskA => KernelVariant::HaqjskA,
            KernelArg::HaqjskD => KernelVariant::HaqjskD,
            KernelArg::Qjsu => KernelVariant::Qjsu,
        }
    }
}

#[derive(Args, Debug)]
struct ComputeArgs {
    /// Directory holding the bundle files.
    #[arg(long)]
    dataset_dir: PathBuf,
    /// Bundle name prefix, e.g. MUTAG.
    #[arg(long)]
    name: String,
    #[arg(long, value_enum, default_value = "haqjsk-d")]
    kernel: KernelArg,
    /// Hierarchy depth H.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    levels: u64,
    /// Level-1 prototype count M1.
    #[arg(long, default_value_t = 256, value_parser = clap::value_parser!(u64).range(1..))]
    prototypes: u64,
    /// Embedding depth K; defaults to min(longest shortest path, 10).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    max_layer: Option<u64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// QJSU decay factor.
    #[arg(long, default_value_t = 1.0)]
    mu: f64,
    /// Z-score embedding columns before clustering.
    #[arg(long)]
    standardize: bool,
    /// Kernel matrix output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    kernel_matrix: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    /// Comma-separated C values.
    #[arg(long, value_delimiter = ',')]
    c_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Shift the diagonal to make the matrix positive semidefinite first.
    #[arg(long)]
    shift_psd: bool,
    /// Report output file (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn display_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn compute(args: &ComputeArgs, jobs: usize, exec: Exec) -> Result<()> {
    let mut timer = Timer::start();
    let bundle = TudBundle::new(&args.dataset_dir, &args.name);
    let ds = load_tud(&bundle).with_context(|| format!("loading dataset {}", args.name))?;
    let sha256 = fingerprint(&bundle.required_files())?;
    timer.lap("load");
    info!(
        "{}: {} graphs, {} classes",
        ds.name(),
        ds.len(),
        ds.class_count()
    );

    let cfg = KernelConfig {
        variant: args.kernel.into(),
        levels: args.levels as usize,
        prototypes: args.prototypes as usize,
        max_layer: args.max_layer.map(|k| k as usize),
        seed: args.seed,
        mu: args.mu,
        standardize: args.standardize,
    };
    let (mut km, stages) = kernel_matrix_timed(&ds, &cfg, exec)?;
    timer.extend(stages);
    let report = km.record_diagnostics()?;
    if report.min_eigenvalue < 0.0 {
        warn!(
            "kernel matrix has min eigenvalue {:e}; eval --shift-psd adds {:e} to the diagonal",
            report.min_eigenvalue, report.suggested_shift
        );
    }
    timer.lap("diagnostics");

    let manifest_file = manifest_path(&args.out);
    km.manifest = Some(display_name(&manifest_file));
    write_kernel_matrix(&km, &args.out)
        .with_context(|| format!("writing {}", args.out.display()))?;
    timer.lap("write");

    let manifest = RunManifest {
        tool: "haqjsk compute",
        version: env!("CARGO_PKG_VERSION"),
        command_line: std::env::args().collect(),
        config: &km.config,
        dataset: Some(DatasetFingerprint {
            name: ds.name().to_string(),
            sha256,
            graphs: ds.len(),
            classes: ds.class_count(),
        }),
        jobs,
        outputs: vec![display_name(&args.out)],
        total_seconds: timer.total(),
        timings: timer.stages,
    };
    write_manifest(&manifest_file, &manifest)?;
    println!("wrote {} ({}x{})", args.out.display(), km.size(), km.size());
    Ok(())
}

#[derive(Serialize)]
struct EvalConfig<'a> {
    kernel_matrix: String,
    #[serde(flatten)]
    cv: CvEcho<'a>,
    shift_psd: bool,
    applied_shift: Option<f64>,
}

#[derive(Serialize)]
struct CvEcho<'a> {
    folds: usize,
    repeats: usize,
    inner_folds: usize,
    c_grid: &'a [f64],
    seed: u64,
}

fn eval(args: &EvalArgs, jobs: usize, exec: Exec) -> Result<()> {
    let mut timer = Timer::start();
    let mut km = read_kernel_matrix(&args.kernel_matrix)
        .with_context(|| format!("reading kernel matrix {}", args.kernel_matrix.display()))?;
    let Some(labels) = km.labels.clone() else {
        bail!("{} carries no class labels", args.kernel_matrix.display());
    };
    timer.lap("load");

    let mut applied_shift = None;
    if args.shift_psd {
        let report = psd_diagnostics(&km)?;
        if report.suggested_shift > 0.0 {
            km.shift_diagonal(report.suggested_shift);
            applied_shift = Some(report.suggested_shift);
            info!("shifted diagonal by {:e}", report.suggested_shift);
        }
        timer.lap("psd-shift");
    }

    let cfg = CvConfig {
        folds: args.folds,
        repeats: args.repeats,
        c_grid: args
            .c_grid
            .clone()
            .unwrap_or_else(|| DEFAULT_C_GRID.to_vec()),
        seed: args.seed,
        ..CvConfig::default()
    };
    let mut report = cross_validate(&km, &labels, &cfg, exec)?;
    timer.lap("cross-validation");
    println!("{:.2} ± {:.2}", report.mean_accuracy, report.std_error);

    if let Some(out) = &args.out {
        let manifest_file = manifest_path(out);
        report.manifest = Some(display_name(&manifest_file));
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
        timer.lap("write");
        let manifest = RunManifest {
            tool: "haqjsk eval",
            version: env!("CARGO_PKG_VERSION"),
            command_line: std::env::args().collect(),
            config: EvalConfig {
                kernel_matrix: args.kernel_matrix.display().to_string(),
                cv: CvEcho {
                    folds: cfg.folds,
                    repeats: cfg.repeats,
                    inner_folds: cfg.inner_folds,
                    c_grid: &cfg.c_grid,
                    seed: cfg.seed,
                },
                shift_psd: args.shift_psd,
                applied_shift,
            },
            dataset: None,
            jobs,
            outputs: vec![display_name(out)],
            total_seconds: timer.total(),
            timings: timer.stages,
        };
        write_manifest(&manifest_file, &manifest)?;
    }
    Ok(())
}

fn run_selftest() -> bool {
    let results = selftest::run();
    for r in &results {
        println!(
            "{} {:<26} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!(
        "{} of {} checks passed",
        results.len() - failed,
        results.len()
    );
    failed == 0
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };

    let jobs = cli
        .jobs
        .map(|j| j as usize)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
    {
        warn!("could not size the worker pool: {e}");
    }
    let exec = if jobs == 1 {
        Exec::Sequential
    } else {
        Exec::Parallel
    };

    let outcome = match &cli.command {
        Command::Compute(args) => compute(args, jobs, exec),
        Command::Eval(args) => eval(args, jobs, exec),
        Command::Selftest => {
            return if run_selftest() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
