use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use qbat_core::datagen::{self, FilterRules, SweepConfig};
use qbat_core::dynamics::{self, IndicatorSet};
use qbat_core::{energetics, fcs, BatteryParams, GeneratorVariant, StateVector};

#[derive(Parser)]
#[command(name = "qbat", version, about = "Cavity-mediated four-level quantum battery simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Steady state of the untilted generator.
    Steady(PhysicsArgs),
    /// Time evolution with charging, storage and leakage indicators.
    Evolve(EvolveArgs),
    /// First four cumulants of the cavity exchange current and their ratios.
    Cumulants(PhysicsArgs),
    /// Steady-state ergotropy, its coherence-free baseline and thermodynamics.
    Ergotropy(PhysicsArgs),
    /// Sample the parameter grid and write the full dataset.
    Sweep(SweepArgs),
    /// Drop inconsistent or degenerate records.
    Filter(FilterArgs),
    /// Group-aware DEV/TEST split.
    Split(SplitArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Enhanced,
    Suppressed,
}

#[derive(Args)]
struct PhysicsArgs {
    /// TOML file with the battery parameters.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in parameter set used when no config is given.
    #[arg(long, value_enum, default_value = "enhanced")]
    preset: Preset,
    #[arg(long)]
    variant: Option<GeneratorVariant>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvolveArgs {
    #[command(flatten)]
    physics: PhysicsArgs,
    /// Final dimensionless time `r t`.
    #[arg(long, default_value_t = 50.0)]
    t_end: f64,
    /// Number of output times, including `t = 0`.
    #[arg(long, default_value_t = 51)]
    points: usize,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML file with a sweep configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    values_per_param: Option<usize>,
    #[arg(long)]
    variant: Option<GeneratorVariant>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Dataset path; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    input: PathBuf,
    /// Directory receiving `dev.csv` and `test.csv`.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20_251_016)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    dev_fraction: f64,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl PhysicsArgs {
    fn params(&self) -> Result<BatteryParams> {
        let params = match &self.config {
            Some(path) => read_toml(path)?,
            None => match self.preset {
                Preset::Enhanced => BatteryParams::reference_enhanced(),
                Preset::Suppressed => BatteryParams::reference_suppressed(),
            },
        };
        params.validate()?;
        Ok(params)
    }

    fn variant(&self) -> GeneratorVariant {
        self.variant.unwrap_or_default()
    }

    fn emit<T: Serialize>(&self, value: &T) -> Result<()> {
        emit(value, self.out.as_deref())
    }
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string(value)?;
    match out {
        Some(path) => fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn steady(args: &PhysicsArgs) -> Result<()> {
    let params = args.params()?;
    let state = dynamics::steady_state(&params, args.variant())?;
    let residual = dynamics::residual(&params, &state, args.variant())?;
    args.emit(&json!({
        "params": params,
        "variant": args.variant(),
        "state": state,
        "residual": residual,
        "indicators": dynamics::indicators(&state, &params).ok(),
    }))
}

fn evolve(args: &EvolveArgs) -> Result<()> {
    let p = &args.physics;
    let params = p.params()?;
    let traj = dynamics::evolve(&params, &StateVector::empty_battery(), args.t_end, args.points, p.variant())?;
    let indicators: Vec<Option<IndicatorSet>> = traj
        .states
        .iter()
        .map(|s| dynamics::indicators(s, &params).ok())
        .collect();
    p.emit(&json!({
        "params": params,
        "variant": p.variant(),
        "times": traj.times,
        "states": traj.states,
        "indicators": indicators,
    }))
}

fn cumulants(args: &PhysicsArgs) -> Result<()> {
    let params = args.params()?;
    let set = fcs::cumulants(&params, args.variant())?;
    args.emit(&json!({ "params": params, "variant": args.variant(), "cumulants": set }))
}

fn ergotropy(args: &PhysicsArgs) -> Result<()> {
    let params = args.params()?;
    let rec = energetics::energetics(&params, args.variant())?;
    args.emit(&json!({ "params": params, "variant": args.variant(), "energetics": rec }))
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let mut cfg: SweepConfig = match &args.config {
        Some(path) => read_toml(path)?,
        None => SweepConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.values_per_param {
        cfg.values_per_param = n;
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    let Some(path) = cfg.output.clone() else {
        bail!("no output path: pass --out or set `output` in the config");
    };
    let records = datagen::sweep_to_path(&cfg, &path)?;
    let flagged = records.iter().filter(|r| !r.flags.is_empty()).count();
    emit(
        &json!({
            "output": path,
            "records": records.len(),
            "flagged": flagged,
            "seed": cfg.seed,
            "values_per_param": cfg.values_per_param,
            "variant": cfg.variant,
        }),
        None,
    )
}

fn filter(args: &FilterArgs) -> Result<()> {
    let records = datagen::read_dataset(&args.input)?;
    let outcome = datagen::filter(&records, &FilterRules::default());
    datagen::write_dataset(&outcome.kept, &args.out)?;
    let census: serde_json::Map<String, serde_json::Value> = outcome
        .census
        .iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    emit(
        &json!({
            "input": records.len(),
            "kept": outcome.kept.len(),
            "dropped": census,
            "output": args.out,
        }),
        None,
    )
}

fn split(args: &SplitArgs) -> Result<()> {
    let records = datagen::read_dataset(&args.input)?;
    let s = datagen::group_split(&records, args.dev_fraction, args.seed)?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let dev_path = args.out.join("dev.csv");
    let test_path = args.out.join("test.csv");
    datagen::write_dataset(&s.dev, &dev_path)?;
    datagen::write_dataset(&s.test, &test_path)?;
    emit(
        &json!({
            "dev": { "path": dev_path, "records": s.dev.len(), "groups": s.dev_groups().len() },
            "test": { "path": test_path, "records": s.test.len(), "groups": s.test_groups().len() },
            "dev_fraction": s.dev.len() as f64 / records.len() as f64,
        }),
        None,
    )
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<qbat_core::ModelError>() {
            return "invalid-params";
        }
        if cause.is::<qbat_core::DynamicsError>() {
            return "dynamics";
        }
        if cause.is::<qbat_core::FcsError>() {
            return "cumulants";
        }
        if cause.is::<qbat_core::EnergeticsError>() {
            return "energetics";
        }
        if cause.is::<qbat_core::DatagenError>() {
            return "dataset";
        }
        if cause.is::<toml::de::Error>() {
            return "config";
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
    }
    "error"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            // --help and --version
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let message = err.render().to_string();
            let first = message.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", json!({ "error": "usage", "message": first }));
            return ExitCode::from(2);
        }
    };
    let result = match &cli.command {
        Command::Steady(a) => steady(a),
        Command::Evolve(a) => evolve(a),
        Command::Cumulants(a) => cumulants(a),
        Command::Ergotropy(a) => ergotropy(a),
        Command::Sweep(a) => sweep(a),
        Command::Filter(a) => filter(a),
        Command::Split(a) => split(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = json!({ "error": error_kind(&err), "message": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
