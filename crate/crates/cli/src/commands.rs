use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;
use stlnav_core::encode::{EncodeParams, EncodedProblem};
use stlnav_core::repair::{
    repair_loop, solve_plan, Advisor, RemoteAdvisor, RepairError, RepairParams, RepairReport, RuleBasedAdvisor,
};
use stlnav_core::rewards::{answer_text, corpus_accuracy, score as score_entry, CorpusEntry, RewardBreakdown, RewardConfig, RewardError};
use stlnav_core::solver::{SolveResult, SolveStatus};
use stlnav_core::stl::{eval_boolean, eval_robustness, exact_match, print_canonical, to_nnf, Formula, FormulaKind};
use stlnav_core::world::Trajectory;

use crate::{exit, input_error, pretty_json, read_scenario, read_spec, traj, write_atomic, InputError};

pub const ADVISOR_TIMEOUT_ENV: &str = "STLNAV_ADVISOR_TIMEOUT_S";

#[derive(Debug, Clone, PartialEq)]
pub enum RepairMode {
    Off,
    Rule,
    Remote(String),
}

fn parse_repair(s: &str) -> Result<RepairMode, String> {
    match s {
        "off" => Ok(RepairMode::Off),
        "rule" => Ok(RepairMode::Rule),
        _ => match s.strip_prefix("remote:") {
            Some(url) if !url.is_empty() => Ok(RepairMode::Remote(url.to_string())),
            _ => Err(format!("expected off, rule or remote:URL, got `{s}`")),
        },
    }
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Scenario JSON; repeat together with --spec to plan a batch.
    #[arg(long, value_name = "PATH", required = true)]
    scenario: Vec<PathBuf>,
    /// Specification file, paired with --scenario by position.
    #[arg(long, value_name = "PATH", required = true)]
    spec: Vec<PathBuf>,
    /// off, rule, or remote:URL for an HTTP advisor
    #[arg(long, value_name = "MODE", default_value = "off", value_parser = parse_repair)]
    repair: RepairMode,
    /// Use rule-based decisions when the remote advisor is unreachable or times out.
    #[arg(long)]
    advisor_fallback: bool,
    /// Penalty per meter of predicate slack
    #[arg(long, value_name = "F")]
    lambda_p: Option<f64>,
    /// Penalty per second of window extension or release
    #[arg(long, value_name = "F")]
    lambda_t: Option<f64>,
    /// Weight of control effort in the objective
    #[arg(long, value_name = "F")]
    lambda_u: Option<f64>,
    /// Upper bound on the robustness margin being maximized
    #[arg(long, value_name = "F")]
    gamma_max: Option<f64>,
    /// Wall-clock limit per solve, in seconds. Results then depend on machine speed.
    #[arg(long, value_name = "S")]
    time_limit: Option<f64>,
    /// Branch-and-bound node budget for optimizing a plan.
    #[arg(long, value_name = "N", default_value_t = RepairParams::PLAN_NODES)]
    nodes: usize,
    /// Trajectory CSV; a directory when planning a batch.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Plan report JSON; a directory when planning a batch. Printed to stdout when absent.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Batch entries planned concurrently.
    #[arg(long, value_name = "N", default_value_t = 1)]
    jobs: usize,
}

impl PlanArgs {
    fn params(&self) -> Result<RepairParams> {
        let mut p = RepairParams::default();
        let e = &mut p.encode;
        let defaults = EncodeParams::default();
        e.lambda_p = self.lambda_p.unwrap_or(defaults.lambda_p);
        e.lambda_t = self.lambda_t.unwrap_or(defaults.lambda_t);
        e.lambda_u = self.lambda_u.unwrap_or(defaults.lambda_u);
        e.gamma_max = self.gamma_max.unwrap_or(defaults.gamma_max);
        for (name, v) in [("lambda-p", e.lambda_p), ("lambda-t", e.lambda_t), ("lambda-u", e.lambda_u), ("gamma-max", e.gamma_max)] {
            if !(v.is_finite() && v >= 0.0) {
                bail!(InputError(format!("--{name} must be a finite nonnegative number")));
            }
        }
        if let Some(t) = self.time_limit {
            if !(t.is_finite() && t > 0.0) {
                bail!(InputError("--time-limit must be positive".into()));
            }
        }
        p.plan.max_nodes = self.nodes.max(1);
        p.plan.time_limit = self.time_limit;
        p.check.time_limit = self.time_limit;
        Ok(p)
    }

    fn advisor(&self) -> Result<Option<Box<dyn Advisor + Sync>>> {
        Ok(match &self.repair {
            RepairMode::Off => None,
            RepairMode::Rule => Some(Box::new(RuleBasedAdvisor)),
            RepairMode::Remote(url) => {
                let mut remote = RemoteAdvisor::new(url.clone());
                remote.fallback = self.advisor_fallback;
                if let Ok(v) = std::env::var(ADVISOR_TIMEOUT_ENV) {
                    let secs: f64 = v
                        .trim()
                        .parse()
                        .ok()
                        .filter(|s: &f64| s.is_finite() && *s > 0.0)
                        .ok_or_else(|| InputError(format!("{ADVISOR_TIMEOUT_ENV} must be a positive number of seconds, got `{v}`")))?;
                    remote.timeout = Duration::from_secs_f64(secs);
                }
                Some(Box::new(remote))
            }
        })
    }
}

/// Outcome of planning one scenario. Everything but `wall_time_s` is a
/// function of the inputs and flags alone when no time limit is set.
#[derive(Debug, Serialize)]
pub struct PlanReport {
    pub scenario: String,
    pub spec: String,
    /// Formula the trajectory satisfies; differs from `spec` after a repair.
    pub final_spec: Option<String>,
    pub status: &'static str,
    pub solver_status: Option<SolveStatus>,
    /// Whether the final solve proved optimality rather than stopping at a limit.
    pub optimal: bool,
    pub objective: Option<f64>,
    pub gamma: Option<f64>,
    pub nodes: Option<usize>,
    pub wall_time_s: f64,
    pub satisfied: Option<bool>,
    pub robustness: Option<f64>,
    pub repair: Option<RepairReport>,
    pub error: Option<String>,
}

struct Job {
    scenario: PathBuf,
    spec: PathBuf,
    out: Option<PathBuf>,
    report: Option<PathBuf>,
}

struct Planned {
    code: u8,
    report: PlanReport,
    trajectory: Option<Trajectory>,
}

fn solved(
    report: &mut PlanReport,
    formula: &Formula,
    enc: &EncodedProblem,
    solve: &SolveResult,
    tr: &Trajectory,
) -> Result<()> {
    let x = solve.x.as_ref().expect("solved plans carry a point");
    report.final_spec = Some(print_canonical(formula));
    report.solver_status = Some(solve.status);
    report.optimal = solve.status == SolveStatus::Optimal;
    report.objective = solve.objective;
    report.gamma = Some(x[enc.gamma]);
    report.nodes = Some(solve.nodes);
    report.satisfied = Some(eval_boolean(formula, tr, 0)?);
    report.robustness = Some(eval_robustness(formula, tr, 0)?);
    report.status = if report.optimal { "optimal" } else { "feasible" };
    Ok(())
}

fn plan_one(job: &Job, params: &RepairParams, advisor: Option<&(dyn Advisor + Sync)>) -> Result<Planned> {
    let start = Instant::now();
    let sc = read_scenario(&job.scenario)?;
    let (_, parsed) = read_spec(&job.spec, &sc)?;
    let f = to_nnf(&parsed).map_err(input_error)?;
    if f.lookahead() > sc.horizon {
        bail!(InputError(format!(
            "HorizonExceeded: spec looks {} steps ahead, scenario horizon is {}",
            f.lookahead(),
            sc.horizon
        )));
    }
    let mut report = PlanReport {
        scenario: job.scenario.display().to_string(),
        spec: print_canonical(&f),
        final_spec: None,
        status: "infeasible",
        solver_status: None,
        optimal: false,
        objective: None,
        gamma: None,
        nodes: None,
        wall_time_s: 0.0,
        satisfied: None,
        robustness: None,
        repair: None,
        error: None,
    };
    let mut trajectory = None;
    let code = match advisor {
        None => {
            let (enc, solve) = solve_plan(&f, &sc, params).map_err(plan_error)?;
            report.solver_status = Some(solve.status);
            report.nodes = Some(solve.nodes);
            if let Some(x) = &solve.x {
                let tr = enc.decode(x);
                solved(&mut report, &f, &enc, &solve, &tr)?;
                trajectory = Some(tr);
                exit::OK
            } else if solve.status == SolveStatus::Infeasible {
                exit::INFEASIBLE
            } else {
                report.status = "resource-limit";
                exit::RESOURCE
            }
        }
        Some(advisor) => match repair_loop(&sc, &f, advisor, params) {
            Ok(out) => {
                solved(&mut report, &out.formula, &out.encoded, &out.solve, &out.trajectory)?;
                report.repair = Some(out.report);
                trajectory = Some(out.trajectory);
                exit::OK
            }
            Err(e) => {
                let code = match &e {
                    RepairError::UnrepairableConflict(_) | RepairError::MaxItersExceeded(_) => {
                        report.status = "unrepairable";
                        exit::UNREPAIRABLE
                    }
                    RepairError::ResourceLimit { status, .. } => {
                        report.status = "resource-limit";
                        report.solver_status = Some(*status);
                        exit::RESOURCE
                    }
                    RepairError::Encode(_) | RepairError::Stl(_) => return Err(input_error(e)),
                    _ => {
                        report.status = "error";
                        exit::RUNTIME
                    }
                };
                report.error = Some(e.to_string());
                report.repair = e.report().cloned();
                code
            }
        },
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(Planned { code, report, trajectory })
}

fn plan_error(e: RepairError) -> anyhow::Error {
    match e {
        RepairError::Encode(_) | RepairError::Stl(_) => input_error(e),
        e => e.into(),
    }
}

fn emit(job: &Job, planned: &Planned) -> Result<()> {
    if let (Some(path), Some(tr)) = (&job.out, &planned.trajectory) {
        write_atomic(path, &traj::to_csv(tr)?)?;
    }
    if let Some(path) = &job.report {
        write_atomic(path, &pretty_json(&planned.report))?;
    }
    Ok(())
}

fn jobs(args: &PlanArgs) -> Result<Vec<Job>> {
    if args.scenario.len() != args.spec.len() {
        bail!(InputError(format!(
            "{} scenarios but {} specs; pass them in pairs",
            args.scenario.len(),
            args.spec.len()
        )));
    }
    if args.scenario.len() == 1 {
        return Ok(vec![Job {
            scenario: args.scenario[0].clone(),
            spec: args.spec[0].clone(),
            out: args.out.clone(),
            report: args.report.clone(),
        }]);
    }
    let mut stems = BTreeSet::new();
    let mut out = Vec::new();
    for dir in [&args.out, &args.report].into_iter().flatten() {
        std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    for (scenario, spec) in args.scenario.iter().zip(&args.spec) {
        let stem = scenario.file_stem().map(|s| s.to_string_lossy().to_string()).unwrap_or_default();
        if !stems.insert(stem.clone()) {
            bail!(InputError(format!("batch scenarios need distinct file names; `{stem}` repeats")));
        }
        out.push(Job {
            scenario: scenario.clone(),
            spec: spec.clone(),
            out: args.out.as_ref().map(|d| d.join(format!("{stem}.csv"))),
            report: args.report.as_ref().map(|d| d.join(format!("{stem}.json"))),
        });
    }
    Ok(out)
}

/// Plan every job; the exit code is the most severe one of the batch.
pub fn plan(args: &PlanArgs) -> Result<u8> {
    let params = args.params()?;
    let advisor = args.advisor()?;
    let jobs = jobs(args)?;
    let results: Vec<Mutex<Option<Result<Planned>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = args.jobs.clamp(1, jobs.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = plan_one(job, &params, advisor.as_deref()).and_then(|p| emit(job, &p).map(|_| p));
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut worst = exit::OK;
    let mut printed = Vec::new();
    for (job, r) in jobs.iter().zip(results) {
        match r.into_inner().unwrap().expect("every job ran") {
            Ok(p) => {
                worst = worst.max(p.code);
                if job.report.is_none() {
                    printed.push(p.report);
                }
            }
            Err(e) if jobs.len() == 1 => return Err(e),
            Err(e) => {
                eprintln!("error: {}: {e:#}", job.scenario.display());
                let code = if e.downcast_ref::<InputError>().is_some() { exit::SPEC } else { exit::RUNTIME };
                worst = worst.max(code);
            }
        }
    }
    match printed.len() {
        0 => {}
        1 if jobs.len() == 1 => print!("{}", pretty_json(&printed[0])),
        _ => print!("{}", pretty_json(&printed)),
    }
    Ok(worst)
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Trajectory CSV as written by `plan --out`.
    #[arg(long, value_name = "PATH")]
    trajectory: PathBuf,
    #[arg(long, value_name = "PATH")]
    spec: PathBuf,
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Write the verdict JSON here instead of stdout.
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Verdict {
    spec: String,
    satisfied: bool,
    robustness: f64,
    conjuncts: Vec<ConjunctVerdict>,
}

#[derive(Debug, Serialize)]
struct ConjunctVerdict {
    formula: String,
    satisfied: bool,
    robustness: f64,
}

pub fn eval(args: &EvalArgs) -> Result<u8> {
    let sc = read_scenario(&args.scenario)?;
    let (_, f) = read_spec(&args.spec, &sc)?;
    let tr = traj::read_csv(&args.trajectory, &sc)?;
    let parts: Vec<&Formula> = match f.kind() {
        FormulaKind::And(children) => children.iter().collect(),
        _ => vec![&f],
    };
    let conjuncts = parts
        .into_iter()
        .map(|c| {
            Ok(ConjunctVerdict {
                formula: print_canonical(c),
                satisfied: eval_boolean(c, &tr, 0).map_err(input_error)?,
                robustness: eval_robustness(c, &tr, 0).map_err(input_error)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = Verdict {
        spec: print_canonical(&f),
        satisfied: eval_boolean(&f, &tr, 0).map_err(input_error)?,
        robustness: eval_robustness(&f, &tr, 0).map_err(input_error)?,
        conjuncts,
    };
    output(args.report.as_deref(), &pretty_json(&verdict))?;
    Ok(exit::OK)
}

fn output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// JSON-lines corpus of `{"hyp": ..., "ref": ...}` objects.
    #[arg(long, value_name = "PATH")]
    corpus: PathBuf,
    /// Scenario whose regions form the allowed vocabulary.
    #[arg(long, value_name = "PATH")]
    scenario: PathBuf,
    /// Reward coefficients as JSON; omitted fields keep their defaults.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct LineScore {
    line: usize,
    exact_match: bool,
    #[serde(flatten)]
    reward: RewardBreakdown,
}

#[derive(Debug, Serialize)]
struct CorpusScore {
    entries: Vec<LineScore>,
    count: usize,
    accuracy: f64,
    mean_total: f64,
}

pub fn score(args: &ScoreArgs) -> Result<u8> {
    let sc = read_scenario(&args.scenario)?;
    let table = sc.region_table();
    let cfg: RewardConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| input_error(format!("{}: {e}", p.display())))?
        }
        None => RewardConfig::default(),
    };
    cfg.validate().map_err(input_error)?;

    let text = std::fs::read_to_string(&args.corpus).with_context(|| format!("cannot read {}", args.corpus.display()))?;
    let mut lines = Vec::new();
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let e: CorpusEntry = serde_json::from_str(line).map_err(|e| input_error(format!("corpus line {}: {e}", i + 1)))?;
        lines.push(i + 1);
        entries.push(e);
    }
    let accuracy = corpus_accuracy(&entries, &table).map_err(|e| match e {
        RewardError::InvalidReference { index, message } => input_error(format!("InvalidReference at line {}: {message}", lines[index])),
        e => input_error(e),
    })?;
    let scored: Vec<LineScore> = entries
        .iter()
        .zip(&lines)
        .map(|(e, &line)| LineScore {
            line,
            exact_match: exact_match(answer_text(&e.hyp).trim(), e.reference.trim(), &table).unwrap_or(false),
            reward: score_entry(&e.hyp, &e.reference, &cfg, &table),
        })
        .collect();
    let mean_total = scored.iter().map(|s| s.reward.total).sum::<f64>() / scored.len() as f64;
    let out = CorpusScore {
        count: scored.len(),
        entries: scored,
        accuracy,
        mean_total,
    };
    output(args.report.as_deref(), &pretty_json(&out))?;
    Ok(exit::OK)
}
