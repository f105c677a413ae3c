//! Command-line harness: dataset generation, single-cell runs, gamma
//! sweeps, and offline noise-rate estimation.
//!
//! Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric/validation failure.

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use noisy_bandit_core::datasets::{generate_synsep, load_csv, SynSepSpec};
use noisy_bandit_core::error::{CoreError, DataError, EstimationError};
use noisy_bandit_core::experiments::{
    capture_buffer, emit_results, load_records, run_plan, sweep_gamma, Algorithm, ExperimentPlan,
};
use noisy_bandit_core::learners::LearnerConfig;
use noisy_bandit_core::nrest::{estimate_rates, EstimationProfile};
use noisy_bandit_core::seeding::{substream, STREAM_ESTIMATOR, STREAM_SHUFFLE};
use noisy_bandit_core::NoiseRates;
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable holding the default output directory.
const OUT_DIR_ENV: &str = "NOISY_BANDIT_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "noisy-bandit",
    version,
    about = "Online multiclass classification under noisy bandit feedback",
    long_about = "Online multiclass classification under noisy bandit feedback.\n\n\
        Values are resolved in precedence order: command-line flag, then the\n\
        --config TOML file, then the built-in default. Output directories\n\
        default to $NOISY_BANDIT_OUT_DIR when set, else the current directory.\n\
        Exit codes: 0 success, 1 usage, 2 I/O, 3 numeric/validation failure."
)]
struct Cli {
    /// TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the separable synthetic dataset plus its planted separator.
    GenSynsep(GenSynsepArgs),
    /// Run one algorithm on one noise setting and emit error-rate curves.
    Run(RunArgs),
    /// Sweep the exploration rate for one algorithm and noise setting.
    Sweep(SweepArgs),
    /// Estimate noise rates from a captured feedback buffer.
    Estimate(EstimateArgs),
}

#[derive(Args)]
struct GenSynsepArgs {
    /// Output CSV path; the separator lands next to it as <stem>.wstar.csv.
    #[arg(long)]
    out: PathBuf,
    /// Number of examples [default: 1000].
    #[arg(long)]
    n: Option<usize>,
    /// Generator seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Number of classes [default: 9].
    #[arg(long)]
    classes: Option<usize>,
    /// Total feature dimensions [default: 400].
    #[arg(long)]
    dims: Option<usize>,
    /// Dimensions reserved for shared noise coordinates [default: 40].
    #[arg(long)]
    noise_dims: Option<usize>,
    /// Active coordinates per example inside its class block [default: 20].
    #[arg(long)]
    block_active: Option<usize>,
    /// Active coordinates per example inside the noise block [default: 5].
    #[arg(long)]
    noise_active: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    /// Algorithm: perceptron, banditron, rcnbf, or rcine.
    #[arg(long)]
    algo: Option<String>,
    /// Dataset CSV (first column 1-based label).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Channel flip probability P(1|0); required (with --rho1) for rcnbf.
    #[arg(long)]
    rho0: Option<f64>,
    /// Channel flip probability P(0|1); required (with --rho0) for rcnbf.
    #[arg(long)]
    rho1: Option<f64>,
    /// Exploration rate in (0, 0.5) [default: 0.05].
    #[arg(long)]
    gamma: Option<f64>,
    /// Independent repetitions [default: 10].
    #[arg(long)]
    seeds: Option<usize>,
    /// Trial horizon [default: 10000].
    #[arg(long = "T", visible_alias = "trials")]
    trials: Option<usize>,
    /// RCINE re-estimation window; required for --algo rcine [default: 10000].
    #[arg(long)]
    ns: Option<usize>,
    /// Output directory [default: $NOISY_BANDIT_OUT_DIR or .].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Estimation profile: mnist, usps, fashion, iris, synsep [default: synsep].
    #[arg(long)]
    profile: Option<String>,
    /// Also render a log-log SVG chart.
    #[arg(long)]
    chart: bool,
    /// Capture feedback records of the first repetition to this CSV.
    #[arg(long)]
    capture: Option<PathBuf>,
    /// Capture only trials after this index [default: T/2].
    #[arg(long)]
    capture_after: Option<usize>,
    /// Log-spaced trial indices recorded per curve [default: 50].
    #[arg(long)]
    record_points: Option<usize>,
}

#[derive(Args)]
struct SweepArgs {
    /// Algorithm: banditron, rcnbf, or rcine.
    #[arg(long)]
    algo: Option<String>,
    /// Dataset CSV.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated gamma grid, e.g. 0.005,0.02,0.08.
    #[arg(long)]
    gammas: Option<String>,
    /// Channel flip probability P(1|0) [default: 0].
    #[arg(long)]
    rho0: Option<f64>,
    /// Channel flip probability P(0|1) [default: 0].
    #[arg(long)]
    rho1: Option<f64>,
    /// Independent repetitions [default: 10].
    #[arg(long)]
    seeds: Option<usize>,
    /// Trial horizon [default: 10000].
    #[arg(long = "T", visible_alias = "trials")]
    trials: Option<usize>,
    /// RCINE re-estimation window [default: 10000].
    #[arg(long)]
    ns: Option<usize>,
    /// Output directory [default: $NOISY_BANDIT_OUT_DIR or .].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Estimation profile: mnist, usps, fashion, iris, synsep [default: synsep].
    #[arg(long)]
    profile: Option<String>,
    /// Also render a log-log SVG chart.
    #[arg(long)]
    chart: bool,
}

#[derive(Args)]
struct EstimateArgs {
    /// Captured buffer CSV (features..., sampled_label, noisy_feedback).
    #[arg(long)]
    buffer: PathBuf,
    /// Estimation profile: mnist, usps, fashion, iris, synsep [default: synsep].
    #[arg(long)]
    profile: Option<String>,
    /// Estimator seed [default: 0].
    #[arg(long)]
    seed: Option<u64>,
    /// Result file (default: <buffer>.rates.txt).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Optional values mirroring the flags; unknown keys are rejected.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    algo: Option<String>,
    data: Option<PathBuf>,
    rho0: Option<f64>,
    rho1: Option<f64>,
    gamma: Option<f64>,
    gammas: Option<Vec<f64>>,
    seeds: Option<usize>,
    trials: Option<usize>,
    ns: Option<usize>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    profile: Option<String>,
    chart: Option<bool>,
    record_points: Option<usize>,
    n: Option<usize>,
    classes: Option<usize>,
    dims: Option<usize>,
    noise_dims: Option<usize>,
    block_active: Option<usize>,
    noise_active: Option<usize>,
    capture_after: Option<usize>,
}

enum CliError {
    Usage(String),
    Io(String),
    Invalid(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Io(_) => 2,
            CliError::Invalid(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Invalid(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(err: DataError) -> Self {
        match err {
            DataError::Io { .. } => CliError::Io(err.to_string()),
            _ => CliError::Invalid(err.to_string()),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        CliError::Invalid(err.to_string())
    }
}

impl From<EstimationError> for CliError {
    fn from(err: EstimationError) -> Self {
        CliError::Invalid(err.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let config = match load_config(cli.config.as_deref()) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {}", err.message());
            return ExitCode::from(err.code());
        }
    };

    let outcome = match cli.command {
        Command::GenSynsep(args) => cmd_gen_synsep(args, &config),
        Command::Run(args) => cmd_run(args, &config),
        Command::Sweep(args) => cmd_sweep(args, &config),
        Command::Estimate(args) => cmd_estimate(args, &config),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn parse_algorithm(name: &str) -> Result<Algorithm, CliError> {
    Algorithm::parse(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown algorithm `{name}` (expected perceptron, banditron, rcnbf, or rcine)"
        ))
    })
}

fn resolve_algo<'a>(flag: &'a Option<String>, config: &'a ConfigFile) -> Result<&'a str, CliError> {
    flag.as_deref()
        .or(config.algo.as_deref())
        .ok_or_else(|| CliError::Usage("--algo is required (flag or config)".into()))
}

fn resolve_data(flag: Option<PathBuf>, config: &ConfigFile) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.data.clone())
        .ok_or_else(|| CliError::Usage("--data is required (flag or config)".into()))
}

fn resolve_profile(name: Option<&str>) -> Result<EstimationProfile, CliError> {
    let name = name.unwrap_or("synsep");
    EstimationProfile::by_name(name).ok_or_else(|| {
        CliError::Usage(format!(
            "unknown profile `{name}` (expected mnist, usps, fashion, iris, or synsep)"
        ))
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string());
    out.with_file_name(format!("{stem}.wstar.csv"))
}

fn cmd_gen_synsep(args: GenSynsepArgs, config: &ConfigFile) -> Result<(), CliError> {
    let defaults = SynSepSpec::default();
    let spec = SynSepSpec {
        classes: args.classes.or(config.classes).unwrap_or(defaults.classes),
        dims: args.dims.or(config.dims).unwrap_or(defaults.dims),
        size: args.n.or(config.n).unwrap_or(1000),
        seed: args.seed.or(config.seed).unwrap_or(0),
        noise_dims: args
            .noise_dims
            .or(config.noise_dims)
            .unwrap_or(defaults.noise_dims),
        block_active: args
            .block_active
            .or(config.block_active)
            .unwrap_or(defaults.block_active),
        noise_active: args
            .noise_active
            .or(config.noise_active)
            .unwrap_or(defaults.noise_active),
    };
    let mut rng = substream(spec.seed, STREAM_SHUFFLE);
    let (dataset, planted) = generate_synsep(&spec, &mut rng)?;
    dataset.save_csv(&args.out)?;

    let sidecar = sidecar_path(&args.out);
    let mut body = String::new();
    for r in 0..planted.classes() {
        let row: Vec<String> = planted.row(r).iter().map(f64::to_string).collect();
        body.push_str(&row.join(","));
        body.push('\n');
    }
    std::fs::write(&sidecar, body)
        .map_err(|e| CliError::Io(format!("{}: {e}", sidecar.display())))?;
    println!(
        "wrote {} examples to {} and the separator to {}",
        dataset.len(),
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

struct RunSettings {
    algorithm: Algorithm,
    rates: (f64, f64),
    gamma: f64,
    seeds: usize,
    trials: usize,
    ns: usize,
    master_seed: u64,
    out_dir: PathBuf,
    profile: EstimationProfile,
    record_points: usize,
}

/// Flags shared by `run` and `sweep`, before config-file fallback.
#[derive(Default)]
struct RunFlags {
    rho0: Option<f64>,
    rho1: Option<f64>,
    gamma: Option<f64>,
    seeds: Option<usize>,
    trials: Option<usize>,
    ns: Option<usize>,
    out: Option<PathBuf>,
    seed: Option<u64>,
    profile: Option<String>,
    record_points: Option<usize>,
}

fn resolve_run_settings(
    algo: &str,
    flags: RunFlags,
    config: &ConfigFile,
) -> Result<RunSettings, CliError> {
    let RunFlags {
        rho0,
        rho1,
        gamma,
        seeds,
        trials,
        ns,
        out,
        seed,
        profile,
        record_points,
    } = flags;
    let algorithm = parse_algorithm(algo)?;
    let rho0 = rho0.or(config.rho0);
    let rho1 = rho1.or(config.rho1);
    if algorithm == Algorithm::Rcnbf && (rho0.is_none() || rho1.is_none()) {
        return Err(CliError::Usage(
            "--algo rcnbf requires --rho0 and --rho1 (the known channel rates)".into(),
        ));
    }
    if rho0.is_some() != rho1.is_some() {
        return Err(CliError::Usage(
            "--rho0 and --rho1 must be supplied together".into(),
        ));
    }
    let rates = (rho0.unwrap_or(0.0), rho1.unwrap_or(0.0));
    NoiseRates::new(rates.0, rates.1)?;

    let ns = match (algorithm, ns.or(config.ns)) {
        (Algorithm::Rcine, None) => {
            return Err(CliError::Usage(
                "--algo rcine requires --ns (the re-estimation window)".into(),
            ))
        }
        (_, value) => value.unwrap_or(10_000),
    };

    let profile_name = profile.or_else(|| config.profile.clone());
    Ok(RunSettings {
        algorithm,
        rates,
        gamma: gamma.or(config.gamma).unwrap_or(0.05),
        seeds: seeds.or(config.seeds).unwrap_or(10),
        trials: trials.or(config.trials).unwrap_or(10_000),
        ns,
        master_seed: seed.or(config.seed).unwrap_or(0),
        out_dir: out.or_else(|| config.out.clone()).unwrap_or_else(default_out_dir),
        profile: resolve_profile(profile_name.as_deref())?,
        record_points: record_points.or(config.record_points).unwrap_or(50),
    })
}

fn build_plan(settings: &RunSettings, dataset_name: &str, gammas: Vec<f64>) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(dataset_name);
    plan.algorithms = vec![settings.algorithm];
    plan.noise_settings = vec![settings.rates];
    plan.gamma_grid = gammas;
    plan.seeds = settings.seeds;
    plan.trials = settings.trials;
    plan.buffer_period = settings.ns;
    plan.master_seed = settings.master_seed;
    plan.record_points = settings.record_points;
    plan.estimation_profile = settings.profile.clone();
    plan
}

fn cmd_run(args: RunArgs, config: &ConfigFile) -> Result<(), CliError> {
    let settings = resolve_run_settings(
        resolve_algo(&args.algo, config)?,
        RunFlags {
            rho0: args.rho0,
            rho1: args.rho1,
            gamma: args.gamma,
            seeds: args.seeds,
            trials: args.trials,
            ns: args.ns,
            out: args.out,
            seed: args.seed,
            profile: args.profile,
            record_points: args.record_points,
        },
        config,
    )?;
    let data_path = resolve_data(args.data, config)?;
    let dataset = load_csv(&data_path)?;
    let plan = build_plan(&settings, &dataset.name, vec![settings.gamma]);
    let result = run_plan(&plan, &dataset)?;
    if let Some(reason) = result.cells.iter().find_map(|c| c.failure.clone()) {
        return Err(CliError::Invalid(format!("run aborted: {reason}")));
    }
    let chart = args.chart || config.chart.unwrap_or(false);
    let written = emit_results(&result, &settings.out_dir, chart)?;
    for cell in &result.cells {
        println!(
            "{}: final error {:.4} +/- {:.4} over {} seeds",
            cell.key.file_stem(),
            cell.final_mean,
            cell.final_std,
            settings.seeds
        );
    }
    for path in &written {
        println!("wrote {}", path.display());
    }

    if let Some(capture_path) = args.capture {
        let rates = NoiseRates::new(settings.rates.0, settings.rates.1)?;
        let learner_config = LearnerConfig {
            gamma: settings.gamma,
            rates,
            buffer_period: settings.ns,
            classes: dataset.classes,
            dims: dataset.dims,
        };
        let capture_after = args
            .capture_after
            .or(config.capture_after)
            .unwrap_or(settings.trials.min(dataset.len()) / 2);
        let run_seed =
            noisy_bandit_core::seeding::run_seed(settings.master_seed, 0, 0);
        let count = capture_buffer(
            &dataset,
            &learner_config,
            settings.trials,
            capture_after,
            run_seed,
            &capture_path,
        )?;
        println!("captured {count} records to {}", capture_path.display());
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, config: &ConfigFile) -> Result<(), CliError> {
    let gammas: Vec<f64> = match (&args.gammas, &config.gammas) {
        (Some(text), _) => {
            let mut parsed = Vec::new();
            for part in text.split(',').filter(|p| !p.trim().is_empty()) {
                parsed.push(part.trim().parse().map_err(|_| {
                    CliError::Usage(format!("--gammas entry `{part}` is not a number"))
                })?);
            }
            parsed
        }
        (None, Some(list)) => list.clone(),
        (None, None) => Vec::new(),
    };
    if gammas.is_empty() {
        return Err(CliError::Usage(
            "--gammas must supply at least one value".into(),
        ));
    }
    let settings = resolve_run_settings(
        resolve_algo(&args.algo, config)?,
        RunFlags {
            rho0: args.rho0,
            rho1: args.rho1,
            seeds: args.seeds,
            trials: args.trials,
            ns: args.ns,
            out: args.out,
            seed: args.seed,
            profile: args.profile,
            ..RunFlags::default()
        },
        config,
    )?;
    let data_path = resolve_data(args.data, config)?;
    let dataset = load_csv(&data_path)?;
    let plan = build_plan(&settings, &dataset.name, gammas);
    let table = sweep_gamma(&plan, &dataset)?;

    println!("gamma,final_mean_error,final_std_error");
    let mut body = String::from("gamma,final_mean_error,final_std_error\n");
    for row in &table.rows {
        let marker = if row.gamma == table.best_gamma { "  <- best" } else { "" };
        println!("{},{:.6},{:.6}{marker}", row.gamma, row.final_mean, row.final_std);
        body.push_str(&format!("{},{},{}\n", row.gamma, row.final_mean, row.final_std));
    }
    println!("best gamma: {}", table.best_gamma);

    std::fs::create_dir_all(&settings.out_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", settings.out_dir.display())))?;
    let out_path = settings.out_dir.join(format!(
        "sweep_{}_r0-{}_r1-{}.csv",
        settings.algorithm, settings.rates.0, settings.rates.1
    ));
    std::fs::write(&out_path, body)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_path.display())))?;
    println!("wrote {}", out_path.display());
    Ok(())
}

fn cmd_estimate(args: EstimateArgs, config: &ConfigFile) -> Result<(), CliError> {
    let profile = resolve_profile(
        args.profile
            .as_deref()
            .or(config.profile.as_deref()),
    )?;
    let records = load_records(&args.buffer)?;
    let classes = records
        .iter()
        .map(|r| r.sampled_label.get())
        .max()
        .unwrap_or(0)
        .max(2);
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let mut rng = substream(seed, STREAM_ESTIMATOR);
    let rates = estimate_rates(&records, classes, &profile, &mut rng)?;

    println!("{:.3} {:.3}", rates.rho0(), rates.rho1());
    let out_path = args.out.unwrap_or_else(|| {
        let name = args
            .buffer
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "buffer".to_string());
        args.buffer.with_file_name(format!("{name}.rates.txt"))
    });
    let body = format!("rho0={:.3}\nrho1={:.3}\n", rates.rho0(), rates.rho1());
    std::fs::write(&out_path, body)
        .map_err(|e| CliError::Io(format!("{}: {e}", out_path.display())))?;
    println!("wrote {}", out_path.display());
    Ok(())
}
