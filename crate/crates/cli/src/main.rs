//! `ioncycle` command-line runner.

mod commands;
mod output;
mod presets;
mod spec;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use ioncycle::tomography::{default_grid, reference_grid, FitOptions, DEFAULT_SHOTS};
use ioncycle::CalibrationParams;

use crate::spec::{env_overrides, from_value, parse_assignment, read_spec_value, set_path, ExperimentSpec};

#[derive(Debug)]
pub enum CliError {
    /// Bad spec, flag or override.
    Validation(String),
    /// Input file does not follow the expected layout.
    Schema(String),
    /// Simulation or fit failed.
    Physics(String),
    Io(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Schema(_) => "schema",
            CliError::Physics(_) => "physics",
            CliError::Io(_) => "io",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Schema(m) | CliError::Physics(m) | CliError::Io(m) => m,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) | CliError::Schema(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind(), self.message())
    }
}

#[derive(Parser)]
#[command(name = "ioncycle", version, about = "Engine and refrigerator cycles of a trapped-ion engine driving a phonon load")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its artifacts.
    Run(SpecArgs),
    /// Run every point of the spec's sweep grid and write summary.csv.
    Sweep(SpecArgs),
    /// Fit a blue-sideband scan against a prior distribution.
    Tomo(TomoCli),
    /// Parse and validate a spec without running it.
    Validate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Print the resolved spec as TOML.
        #[arg(long)]
        print: bool,
    },
    /// List the built-in presets.
    Presets,
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Spec file (TOML, or JSON including a previous run.json).
    #[arg(long, env = "IONCYCLE_SPEC", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in experiment name.
    #[arg(long, env = "IONCYCLE_PRESET")]
    preset: Option<String>,
    /// Output directory (overrides `outputs`).
    #[arg(long, env = "IONCYCLE_OUT")]
    out: Option<PathBuf>,
    /// Random seed (overrides `seed`).
    #[arg(long, env = "IONCYCLE_SEED")]
    seed: Option<u64>,
    /// Field override, e.g. `--set cycle.n_cycles=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridArg {
    Default,
    Reference,
}

#[derive(Args)]
struct TomoCli {
    /// CSV with columns time_s, p_S, sigma_p.
    #[arg(long)]
    scan: PathBuf,
    /// CSV with columns n, p_n.
    #[arg(long)]
    prior: PathBuf,
    #[arg(long, env = "IONCYCLE_OUT", default_value = "out/tomo")]
    out: PathBuf,
    /// Take the calibration from this spec file.
    #[arg(long, conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Take the calibration from this preset.
    #[arg(long)]
    preset: Option<String>,
    /// Require the scan to use this time grid.
    #[arg(long, value_enum)]
    grid: Option<GridArg>,
    #[arg(long, default_value_t = ioncycle::tomography::DEFAULT_FIT_LEVELS)]
    levels: usize,
    #[arg(long, default_value_t = ioncycle::tomography::DEFAULT_BOX_HALFWIDTH)]
    box_halfwidth: f64,
    #[arg(long, default_value_t = ioncycle::tomography::DEFAULT_GAMMA_BASE)]
    gamma_base: f64,
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    shots: u32,
    /// Recorded in the fit.csv header.
    #[arg(long, env = "IONCYCLE_SEED", default_value_t = 0)]
    seed: u64,
}

fn load_spec(args: &SpecArgs) -> Result<ExperimentSpec, CliError> {
    let mut value = match (&args.spec, &args.preset) {
        (Some(path), _) => read_spec_value(path)?,
        (None, Some(name)) => serde_json::to_value(presets::preset(name)?)
            .map_err(|e| CliError::Validation(e.to_string()))?,
        (None, None) => return Err(CliError::Validation("give --spec PATH or --preset NAME".into())),
    };
    let mut overrides = env_overrides();
    for s in &args.set {
        overrides.push(parse_assignment(s)?);
    }
    for (path, v) in overrides {
        set_path(&mut value, &path, v)?;
    }
    let mut spec = from_value(value)?;
    if let Some(out) = &args.out {
        spec.outputs = out.clone();
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
        if let Some(t) = spec.tomography.as_mut() {
            t.seed = Some(seed);
        }
    }
    spec.validate()?;
    Ok(spec)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).unwrap_or_default());
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => {
            let spec = load_spec(&args)?;
            if spec.sweep.is_some() {
                eprintln!("note: spec has a sweep grid; `run` executes the base point only");
            }
            match commands::run(&spec) {
                Ok(rec) => {
                    print_json(&json!({ "status": rec.status, "outputs": spec.outputs, "summary": rec.summary }));
                    Ok(())
                }
                Err(b) => Err(b.1),
            }
        }
        Command::Sweep(args) => {
            let spec = load_spec(&args)?;
            let rows = commands::sweep(&spec)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            print_json(&json!({
                "points": rows.len(),
                "failed": failed,
                "summary": spec.outputs.join("summary.csv"),
            }));
            if failed > 0 {
                return Err(CliError::Physics(format!("{failed} of {} sweep points failed", rows.len())));
            }
            Ok(())
        }
        Command::Tomo(t) => {
            let calib = match (&t.spec, &t.preset) {
                (None, None) => CalibrationParams::default(),
                _ => {
                    let args = SpecArgs { spec: t.spec.clone(), preset: t.preset.clone(), out: None, seed: None, set: vec![] };
                    load_spec(&args)?.cycle.calib
                }
            };
            let args = commands::TomoArgs {
                scan: t.scan,
                prior: t.prior,
                out: t.out,
                calib,
                expected_times: t.grid.map(|g| match g {
                    GridArg::Default => default_grid(),
                    GridArg::Reference => reference_grid(),
                }),
                shots: t.shots,
                seed: t.seed,
                opts: FitOptions { box_halfwidth: t.box_halfwidth, n_levels: t.levels, gamma_base: t.gamma_base },
            };
            let rec = commands::tomo(&args)?;
            print_json(&serde_json::to_value(&rec).map_err(|e| CliError::Io(e.to_string()))?);
            Ok(())
        }
        Command::Validate { spec, print } => {
            let spec = load_spec(&spec)?;
            if print {
                print!("{}", spec::to_toml(&spec)?);
            } else {
                print_json(&json!({ "ok": true, "name": spec.name }));
            }
            Ok(())
        }
        Command::Presets => {
            for (name, what) in presets::PRESETS {
                println!("{name:<16} {what}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = json!({ "error": { "kind": e.kind(), "message": e.message() } });
            eprintln!("{}", serde_json::to_string(&body).unwrap_or_default());
            ExitCode::from(e.exit_code())
        }
    }
}
