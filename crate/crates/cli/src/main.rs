use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use stlnav_core::stl::{parse_stl, print_canonical, Formula, StlError};
use stlnav_core::world::{load_scenario, Scenario};

mod commands;
mod traj;

/// Stable process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    pub const RUNTIME: u8 = 1;
    pub const SPEC: u8 = 2;
    pub const INFEASIBLE: u8 = 3;
    pub const UNREPAIRABLE: u8 = 4;
    pub const RESOURCE: u8 = 5;
}

#[derive(Parser, Debug)]
#[command(name = "stlnav", version, about = "Plan UAV trajectories from STL specifications, repairing infeasible ones")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a specification against a scenario and print its canonical form.
    Check(CheckArgs),
    /// Plan a trajectory, optionally repairing an infeasible specification.
    Plan(commands::PlanArgs),
    /// Evaluate a trajectory CSV against a specification.
    Eval(commands::EvalArgs),
    /// Score a JSON-lines corpus of generated specifications.
    Score(commands::ScoreArgs),
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
}

/// An input the user must fix: bad scenario, unparseable spec, bad corpus.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InputError(pub String);

pub fn input_error(e: impl std::fmt::Display) -> anyhow::Error {
    InputError(e.to_string()).into()
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    load_scenario(path).map_err(input_error)
}

/// Spec text, trimmed, and its parse against the regions of `sc`.
pub fn read_spec(path: &Path, sc: &Scenario) -> Result<(String, Formula)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let text = text.trim().to_string();
    match parse_stl(&text, &sc.region_table()) {
        Ok(f) => Ok((text, f)),
        Err(e) => Err(input_error(diagnostic(&text, &e))),
    }
}

fn diagnostic(text: &str, e: &StlError) -> String {
    match e {
        StlError::Syntax { pos, .. } => {
            let col = text[..(*pos).min(text.len())].chars().count();
            format!("{e}\n  {text}\n  {}^", " ".repeat(col))
        }
        _ => e.to_string(),
    }
}

/// Write through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().with_context(|| format!("{} is not a file path", path.display()))?;
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    std::fs::write(&tmp, contents).with_context(|| format!("cannot write {}", tmp.display()))?;
    std::fs::rename(&tmp, path).with_context(|| format!("cannot move into {}", path.display()))?;
    Ok(())
}

pub fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn check(args: &CheckArgs) -> Result<u8> {
    let sc = read_scenario(&args.scenario)?;
    let (_, f) = read_spec(&args.spec, &sc)?;
    if f.lookahead() > sc.horizon {
        bail!(InputError(format!(
            "HorizonExceeded: spec looks {} steps ahead, scenario horizon is {}",
            f.lookahead(),
            sc.horizon
        )));
    }
    println!("{}", print_canonical(&f));
    Ok(exit::OK)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Check(a) => check(a),
        Command::Plan(a) => commands::plan(a),
        Command::Eval(a) => commands::eval(a),
        Command::Score(a) => commands::score(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() || e.downcast_ref::<traj::LengthMismatch>().is_some() {
                ExitCode::from(exit::SPEC)
            } else {
                ExitCode::from(exit::RUNTIME)
            }
        }
    }
}
