use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use groupsync::analysis::{estimation_error, master_report, recovery_rate};
use groupsync::blocklin::{BlockColumn, EigenOptions};
use groupsync::experiment::{run_experiment, ExperimentConfig};
use groupsync::gen::{generate_instance, GenerateConfig};
use groupsync::groups::GroupSpec;
use groupsync::model::Instance;
use groupsync::solver::{gpm, spectral_estimator, SolveConfig};
use groupsync::{checks, par};

#[derive(Parser)]
#[command(name = "groupsync", version, about = "Group synchronization: generate, solve, sweep, check")]
struct Cli {
    /// Worker threads for the parallel sections (0 = one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic instance from a JSON config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Output instance file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run spectral initialization and GPM on an instance.
    Solve {
        /// Instance file.
        instance: PathBuf,
        /// Optional solver config (JSON).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Init::Spectral)]
        init: Init,
        /// Estimate file used with `--init file`.
        #[arg(long)]
        init_file: Option<PathBuf>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a seeded parameter sweep and write per-trial and mean CSVs.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `seed_base` in the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run the projection, contraction and rho-inequality property suites.
    Check {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Optional JSON file for the outcomes.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Init {
    Spectral,
    Groundtruth,
    File,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Input(_) => 2,
        }
    }
}

type CliResult<T> = Result<T, CliError>;

fn input<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Input(format!("{context}: {e}"))
}

fn failure<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Failure(format!("{context}: {e}"))
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(input(format!("cannot read {}", path.display())))
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(input(format!("cannot write {}", path.display())))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    serde_json::from_str(&read(path)?).map_err(input(format!("invalid config {}", path.display())))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Estimate file: the blocks of `G` in row-major order.
#[derive(Serialize, Deserialize)]
struct EstimateFile {
    spec: GroupSpec,
    n: usize,
    d: usize,
    blocks: Vec<f64>,
}

impl EstimateFile {
    fn new(spec: GroupSpec, g: &BlockColumn) -> Self {
        Self {
            spec,
            n: g.n(),
            d: g.d(),
            blocks: g.as_slice().to_vec(),
        }
    }
}

#[derive(Serialize)]
struct SolveSummary {
    init: Init,
    iterations: usize,
    converged: bool,
    final_step_norm: f64,
    degenerate_projections: usize,
    eigenvalues: Option<Vec<f64>>,
    spectral_gap: Option<f64>,
    eps_init: Option<f64>,
    eps_final: Option<f64>,
    recovery_rate: Option<f64>,
}

fn cmd_generate(config: &Path, out: Option<&Path>, seed: Option<u64>) -> CliResult<()> {
    let mut cfg: GenerateConfig = parse_json(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let inst = generate_instance(&cfg).map_err(input("generation failed"))?;
    let mut json = inst.to_json().map_err(failure("serialization failed"))?;
    json.push('\n');
    match out {
        Some(p) => write(p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    instance: &Path,
    config: Option<&Path>,
    out: &Path,
    init: Init,
    init_file: Option<&Path>,
    max_iters: Option<usize>,
    tol: Option<f64>,
) -> CliResult<()> {
    let mut cfg: SolveConfig = match config {
        Some(p) => parse_json(p)?,
        None => SolveConfig::default(),
    };
    cfg.max_iters = max_iters.unwrap_or(cfg.max_iters);
    cfg.tol = tol.unwrap_or(cfg.tol);
    cfg.validate().map_err(input("invalid solver settings"))?;

    let inst = Instance::from_json(&read(instance)?).map_err(input(format!("invalid instance {}", instance.display())))?;
    let spec = *inst.spec();

    let mut eigenvalues = None;
    let mut spectral_gap = None;
    let g0 = match init {
        Init::Spectral => {
            let s = spectral_estimator(&inst, &EigenOptions::default()).map_err(failure("spectral estimator failed"))?;
            eigenvalues = Some(s.eigenvalues);
            spectral_gap = s.gap;
            s.estimate
        }
        Init::Groundtruth => inst
            .ground_truth()
            .cloned()
            .ok_or_else(|| CliError::Input("--init groundtruth needs an instance with ground truth".into()))?,
        Init::File => {
            let path = init_file.ok_or_else(|| CliError::Input("--init file requires --init-file".into()))?;
            let f: EstimateFile = parse_json(path)?;
            if f.spec != spec {
                return Err(CliError::Input(format!("initial estimate is over {}, instance over {spec}", f.spec)));
            }
            let g = BlockColumn::from_vec(f.n, f.d, f.blocks).map_err(input("invalid initial estimate"))?;
            if let Some((i, reason)) = g.blocks().enumerate().find_map(|(i, b)| spec.membership_violation(&b).map(|r| (i, r))) {
                return Err(CliError::Input(format!("initial block {i} is not in {spec}: {reason}")));
            }
            g
        }
    };

    let res = gpm(&inst, &g0, &cfg).map_err(failure("generalized power method failed"))?;

    fs::create_dir_all(out).map_err(input(format!("cannot create {}", out.display())))?;
    write(&out.join("estimate.json"), &to_json(&EstimateFile::new(spec, &res.estimate)))?;
    write(&out.join("trace.csv"), &res.trace.to_csv())?;

    let mut summary = SolveSummary {
        init,
        iterations: res.iterations,
        converged: res.converged,
        final_step_norm: res.final_step_norm,
        degenerate_projections: res.degenerate_projections,
        eigenvalues,
        spectral_gap,
        eps_init: None,
        eps_final: None,
        recovery_rate: None,
    };
    if let Some(truth) = inst.ground_truth() {
        let err = |g: &BlockColumn| estimation_error(&spec, g, truth).map(|a| a.epsilon);
        summary.eps_init = Some(err(&g0).map_err(failure("diagnostics failed"))?);
        summary.eps_final = Some(err(&res.estimate).map_err(failure("diagnostics failed"))?);
        summary.recovery_rate = Some(recovery_rate(&spec, &res.estimate, truth).map_err(failure("diagnostics failed"))?);
        if cfg.record_trace {
            let report = master_report(&inst, &res.trace).map_err(failure("diagnostics failed"))?;
            write(&out.join("report.json"), &to_json(&report))?;
        }
    }
    let text = to_json(&summary);
    write(&out.join("summary.json"), &text)?;
    print!("{text}");
    Ok(())
}

fn cmd_experiment(config: &Path, out: &Path, seed: Option<u64>, max_iters: Option<usize>, tol: Option<f64>) -> CliResult<()> {
    let mut cfg: ExperimentConfig = parse_json(config)?;
    if let Some(s) = seed {
        cfg.seed_base = s;
    }
    cfg.solve.max_iters = max_iters.unwrap_or(cfg.solve.max_iters);
    cfg.solve.tol = tol.unwrap_or(cfg.solve.tol);
    cfg.validate().map_err(input(format!("invalid experiment {}", config.display())))?;

    let res = run_experiment(&cfg).map_err(failure("experiment failed"))?;
    fs::create_dir_all(out).map_err(input(format!("cannot create {}", out.display())))?;
    write(&out.join("trials.csv"), &res.trials_csv().map_err(failure("csv"))?)?;
    let agg = res.aggregate_csv().map_err(failure("csv"))?;
    write(&out.join("aggregate.csv"), &agg)?;
    print!("{agg}");
    let failed = res.trials.iter().filter(|r| r.failed).count();
    if failed > 0 {
        eprintln!("warning: {failed} of {} trials failed; see trials.csv", res.trials.len());
    }
    Ok(())
}

fn cmd_check(seed: u64, out: Option<&Path>) -> CliResult<()> {
    let outcomes = checks::default_suite(seed);
    for o in &outcomes {
        println!(
            "{} {} ({} samples, {} violations, worst excess {:.3e})",
            if o.passed() { "PASS" } else { "FAIL" },
            o.name,
            o.samples,
            o.violations,
            o.worst_excess
        );
    }
    if let Some(p) = out {
        write(p, &to_json(&outcomes))?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed()).count();
    if failed > 0 {
        return Err(CliError::Failure(format!("{failed} property suites failed")));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if !par::set_threads(t) {
            eprintln!("warning: --threads ignored (thread pool already set up or built without `parallel`)");
        }
    }
    match cli.command {
        Command::Generate { config, out, seed } => cmd_generate(&config, out.as_deref(), seed),
        Command::Solve {
            instance,
            config,
            out,
            init,
            init_file,
            max_iters,
            tol,
        } => cmd_solve(&instance, config.as_deref(), &out, init, init_file.as_deref(), max_iters, tol),
        Command::Experiment {
            config,
            out,
            seed,
            max_iters,
            tol,
        } => cmd_experiment(&config, &out, seed, max_iters, tol),
        Command::Check { seed, out } => cmd_check(seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
