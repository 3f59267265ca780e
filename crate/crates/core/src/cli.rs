//! Command-line frontend.
//!
//! Effective configuration precedence: command-line flags, then the config
//! file, then `COPD_SEED` (seed only), then the profile defaults.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};

use crate::config::{resolve_seeding, to_config_string, ConfigFile};
use crate::experiments::{run_sweep_with, RunOptions, SweepParam, SweepSpec};
use crate::metrics::{encode_snapshot, write_timeseries_csv, SnapshotFormat};
use crate::model::{validate_config, CoevParams, Profile, SimConfig};
use crate::statespace::reachable_weights;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

pub const SEED_ENV: &str = "COPD_SEED";

#[derive(Debug, Parser)]
#[command(name = "copd", version, about = "Coevolutionary optional prisoner's dilemma on a periodic lattice")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run replicates of one configuration.
    Run(RunArgs),
    /// Run every point of a parameter grid.
    Sweep(SweepArgs),
    /// Count the link-weight states reachable for (Δ, δ) pairs.
    States(StatesArgs),
    /// Check a configuration without running it.
    Validate(SimArgs),
}

#[derive(Debug, Args, Default, Clone)]
pub struct SimArgs {
    /// Config file (TOML with flat keys).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset scale: desk or paper.
    #[arg(long)]
    pub profile: Option<Profile>,
    #[arg(long)]
    pub side: Option<usize>,
    /// Temptation to defect.
    #[arg(long)]
    pub b: Option<f64>,
    /// Loner's payoff.
    #[arg(long)]
    pub l: Option<f64>,
    /// Link-weight step.
    #[arg(long)]
    pub big_delta: Option<f64>,
    /// Link-weight amplitude.
    #[arg(long)]
    pub small_delta: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub tail_window: Option<usize>,
    /// Base seed (falls back to COPD_SEED).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// unbiased | biased | single-abstainer | all-abstainers-except-pair
    #[arg(long)]
    pub seeding: Option<String>,
    #[arg(long)]
    pub abstainer_fraction: Option<f64>,
    /// random | center (single-abstainer seeding)
    #[arg(long)]
    pub placement: Option<String>,
    /// Comma-separated MC steps at which to save snapshots.
    #[arg(long, value_delimiter = ',')]
    pub snapshot_steps: Option<Vec<usize>>,
    /// Print the resolved configuration before doing anything else.
    #[arg(long)]
    pub print_config: bool,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory.
    #[arg(long, default_value = "copd-out")]
    pub out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    /// Axis as `name=v1,v2,...` or `name=start:stop:step`; repeatable.
    /// Names: b, l, big_delta, small_delta, abstainer_fraction.
    #[arg(long = "axis", required = true)]
    pub axes: Vec<String>,
}

#[derive(Debug, Args)]
pub struct StatesArgs {
    /// Comma-separated Δ values.
    #[arg(long, value_delimiter = ',', required = true)]
    pub big_delta: Vec<f64>,
    /// Comma-separated δ values (one value is paired with every Δ).
    #[arg(long, value_delimiter = ',', required = true)]
    pub small_delta: Vec<f64>,
}

#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) => EXIT_INVALID,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Invalid(m) | CliError::Runtime(m) => m,
        }
    }
}

/// Builds the effective config from profile, file, environment and flags.
pub fn resolve_config(args: &SimArgs, env_seed: Option<&str>) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::from_profile(args.profile.unwrap_or_default());
    if let Some(raw) = env_seed {
        cfg.rng_seed = raw
            .trim()
            .parse()
            .map_err(|_| CliError::Invalid(format!("{SEED_ENV}: `{raw}` is not an unsigned 64-bit integer")))?;
    }
    if let Some(path) = &args.config {
        let file = ConfigFile::load(path).map_err(|e| match e {
            crate::config::ConfigError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Invalid(e.to_string()),
        })?;
        file.apply(&mut cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    if let Some(v) = args.side {
        cfg.side = v;
    }
    if let Some(v) = args.b {
        cfg.game.b = v;
    }
    if let Some(v) = args.l {
        cfg.game.l = v;
    }
    if let Some(v) = args.big_delta {
        cfg.coev.big_delta = v;
    }
    if let Some(v) = args.small_delta {
        cfg.coev.small_delta = v;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if let Some(v) = args.tail_window {
        cfg.tail_window = v;
    }
    if let Some(v) = args.seed {
        cfg.rng_seed = v;
    }
    if let Some(v) = args.replicates {
        cfg.replicates = v;
    }
    if let Some(v) = &args.snapshot_steps {
        cfg.snapshot_steps = v.clone();
    }
    if args.seeding.is_some() || args.abstainer_fraction.is_some() || args.placement.is_some() {
        cfg.seeding = resolve_seeding(
            args.seeding.as_deref(),
            args.abstainer_fraction,
            args.placement.as_deref(),
            cfg.seeding,
        )
        .map_err(|e| CliError::Invalid(format!("seeding: {e}")))?;
    }
    Ok(cfg)
}

/// Parses one `--axis` value.
pub fn parse_axis(spec: &str) -> Result<(SweepParam, Vec<f64>), String> {
    let (name, values) = spec
        .split_once('=')
        .ok_or_else(|| format!("axis `{spec}` must look like name=values"))?;
    let param: SweepParam = name.trim().parse()?;
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| format!("axis `{spec}`: `{s}` is not a number"))
    };
    let parts: Vec<&str> = values.split(':').collect();
    let list = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
            if !(step > 0.0) || stop < start {
                return Err(format!("axis `{spec}`: need start <= stop and step > 0"));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            // round to 12 decimals so 0.1 steps print as 0.3, not 0.30000000000000004
            (0..count)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect()
        }
        [single] => single.split(',').map(num).collect::<Result<Vec<_>, _>>()?,
        _ => return Err(format!("axis `{spec}`: use v1,v2,... or start:stop:step")),
    };
    if list.is_empty() {
        return Err(format!("axis `{spec}` has no values"));
    }
    Ok((param, list))
}

fn snapshot_name(step: usize, format: SnapshotFormat) -> String {
    format!("step-{step:06}.{}", format.extension())
}

fn replicate_dir(out: &Path, point: usize, rep: usize) -> PathBuf {
    out.join(format!("point-{point:04}")).join(format!("rep-{rep:02}"))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), String> {
    fs::write(path, bytes).map_err(|e| format!("failed to write {}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), String> {
    fs::create_dir_all(path).map_err(|e| format!("failed to create {}: {e}", path.display()))
}

fn build_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(CliError::Invalid("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    builder.build().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Runs a sweep and writes the output tree. Returns the number of summary rows.
fn execute_sweep(spec: &SweepSpec, seed: u64, output: &OutputArgs, stdout: &mut dyn Write) -> Result<usize, CliError> {
    let out = &output.out;
    create_dir(out).map_err(CliError::Runtime)?;
    let manifest = Mutex::new(Vec::new());
    let pool = build_pool(output.jobs)?;
    let outcome = pool.install(|| {
        run_sweep_with(spec, seed, RunOptions::default(), |point, rep, _cfg, result| {
            let dir = replicate_dir(out, point, rep);
            create_dir(&dir)?;
            let ts = dir.join("timeseries.csv");
            write_timeseries_csv(result, &ts).map_err(|e| e.to_string())?;
            if !result.snapshots.is_empty() {
                let snaps = dir.join("snapshots");
                create_dir(&snaps)?;
                let side = (result.snapshots.values().next().unwrap().len() as f64).sqrt() as usize;
                for (&step, cells) in &result.snapshots {
                    for format in [SnapshotFormat::TextGrid, SnapshotFormat::PortablePixmap] {
                        write_bytes(&snaps.join(snapshot_name(step, format)), &encode_snapshot(side, cells, format))?;
                    }
                }
            }
            let rel = ts.strip_prefix(out).unwrap_or(&ts).display().to_string();
            manifest.lock().unwrap().push((point, rep, result.seed, rel));
            Ok(())
        })
    });

    let mut manifest = manifest.into_inner().unwrap();
    manifest.sort();
    let mut text = String::from("point,replicate,seed,path\n");
    for (p, r, s, path) in &manifest {
        text.push_str(&format!("{p},{r},{s},{path}\n"));
    }
    write_bytes(&out.join("manifest.csv"), text.as_bytes()).map_err(CliError::Runtime)?;
    write_bytes(&out.join("summary.csv"), outcome.summary_csv().as_bytes()).map_err(CliError::Runtime)?;

    let failures: Vec<_> = outcome
        .points
        .iter()
        .filter_map(|p| p.outcome.as_ref().err().map(|e| (p.index, e)))
        .collect();
    if spec.axes.is_empty() {
        match &outcome.points[0].outcome {
            Ok(agg) => {
                let _ = writeln!(
                    stdout,
                    "rho_c={:.6} rho_d={:.6} rho_a={:.6} (mean of {} replicates)",
                    agg.mean.c, agg.mean.d, agg.mean.a, agg.replicates
                );
            }
            Err(e) => return Err(CliError::Runtime(e.clone())),
        }
    } else {
        let _ = writeln!(
            stdout,
            "{} rows written to {} ({} failed)",
            outcome.points.len(),
            out.join("summary.csv").display(),
            failures.len()
        );
    }
    Ok(outcome.points.len())
}

fn prepare(sim: &SimArgs, env_seed: Option<&str>, stdout: &mut dyn Write) -> Result<SimConfig, CliError> {
    let cfg = resolve_config(sim, env_seed)?;
    if sim.print_config {
        let _ = write!(stdout, "{}", to_config_string(&cfg));
    }
    Ok(cfg)
}

fn dispatch(cli: Cli, env_seed: Option<&str>, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Validate(sim) => {
            let cfg = prepare(&sim, env_seed, stdout)?;
            validate_config(cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
            let _ = writeln!(stdout, "valid");
            Ok(())
        }
        Command::Run(args) => {
            let cfg = prepare(&args.sim, env_seed, stdout)?;
            let cfg = validate_config(cfg).map_err(|e| CliError::Invalid(e.to_string()))?;
            create_dir(&args.output.out).map_err(CliError::Runtime)?;
            write_bytes(&args.output.out.join("config.toml"), to_config_string(&cfg).as_bytes())
                .map_err(CliError::Runtime)?;
            let spec = SweepSpec {
                axes: Vec::new(),
                replicates_per_point: cfg.replicates,
                base: cfg.clone(),
            };
            execute_sweep(&spec, cfg.rng_seed, &args.output, stdout).map(|_| ())
        }
        Command::Sweep(args) => {
            let cfg = prepare(&args.sim, env_seed, stdout)?;
            let axes = args
                .axes
                .iter()
                .map(|a| parse_axis(a))
                .collect::<Result<Vec<_>, _>>()
                .map_err(CliError::Invalid)?;
            create_dir(&args.output.out).map_err(CliError::Runtime)?;
            write_bytes(&args.output.out.join("config.toml"), to_config_string(&cfg).as_bytes())
                .map_err(CliError::Runtime)?;
            let spec = SweepSpec {
                axes,
                replicates_per_point: cfg.replicates,
                base: cfg.clone(),
            };
            execute_sweep(&spec, cfg.rng_seed, &args.output, stdout).map(|_| ())
        }
        Command::States(args) => {
            let pairs: Vec<(f64, f64)> = match (args.big_delta.len(), args.small_delta.len()) {
                (_, 1) => args.big_delta.iter().map(|&b| (b, args.small_delta[0])).collect(),
                (1, _) => args.small_delta.iter().map(|&s| (args.big_delta[0], s)).collect(),
                (a, b) if a == b => args.big_delta.iter().copied().zip(args.small_delta.iter().copied()).collect(),
                (a, b) => {
                    return Err(CliError::Invalid(format!(
                        "--big-delta has {a} values but --small-delta has {b}"
                    )))
                }
            };
            let _ = writeln!(stdout, "big_delta,small_delta,count,values");
            for (big, small) in pairs {
                let set = reachable_weights(&CoevParams::new(big, small)).map_err(|e| CliError::Invalid(e.to_string()))?;
                let values: Vec<String> = set.values.iter().map(|v| format!("{v:.6}")).collect();
                let _ = writeln!(stdout, "{big},{small},{},{}", set.count(), values.join(";"));
            }
            Ok(())
        }
    }
}

/// Full entry point: parse, run, report. Returns the process exit code.
pub fn main_with<I, T>(argv: I, env_seed: Option<&str>, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(stderr, "{e}");
                    EXIT_INVALID
                }
            };
        }
    };
    match dispatch(cli, env_seed, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.exit_code()
        }
    }
}
