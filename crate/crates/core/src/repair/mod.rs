//! Infeasibility diagnosis and specification repair.
//!
//! An infeasible plan is explained by an irreducible infeasible subset of
//! its formula rows. The rows are projected back onto atoms of the syntax
//! tree as atomic events, an advisor chooses one repair mode per event, the
//! safety policy pins obstacle and no-fly events, and a penalized re-solve
//! decides how far each admitted relaxation goes. The result is rewritten
//! as an explicit formula and planned again without any relaxation.

mod advisor;
mod http;
mod reconstruct;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use advisor::{advise_rule_based, parse_advice, Advice, Advisor, AdvisorRequest, Provenance, RemoteAdvisor, RuleBasedAdvisor, WireEvent};
pub use http::post_json;
pub use reconstruct::{reconstruct_spec, round_up_micro, Change, ChangeKind, Reconstruction};

use crate::encode::{encode, encode_with_relaxation, safety_nodes, EncodeError, EncodeParams, EncodedProblem, RepairDecision};
use crate::milp::ConstraintId;
use crate::solver::{extract_iis, find_feasible, solve_milp, SolveResult, SolveStatus, SolverError, SolverParams};
use crate::stl::{eval_boolean, eval_robustness, print_canonical, Atom, Formula, FormulaKind, NodeId, StlError};
use crate::world::{Scenario, Trajectory};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdvisorError {
    #[error("advisor transport error: {0}")]
    Transport(String),
    #[error("advisor timed out")]
    Timeout,
    #[error("MalformedResponse: {0}")]
    MalformedResponse(String),
}

#[derive(Debug, Clone, Error)]
pub enum RepairError {
    #[error("empty conflict set")]
    EmptyIis,
    #[error("UntracedConstraint: row {0} has no formula trace")]
    UntracedConstraint(ConstraintId),
    #[error("node {0} is not in the formula")]
    UnknownNode(NodeId),
    #[error("decision {decision:?} does not apply to node {node}")]
    InadmissibleDecision { node: NodeId, decision: RepairDecision },
    #[error("NoRelaxationUsed: the relaxed plan uses no slack although the original is infeasible")]
    NoRelaxationUsed,
    #[error("UnrepairableConflict: no admissible relaxation remains")]
    UnrepairableConflict(Box<RepairReport>),
    #[error("MaxItersExceeded: still infeasible after {} repair rounds", .0.iterations)]
    MaxItersExceeded(Box<RepairReport>),
    #[error("solver stopped with {status:?} before finding a plan")]
    ResourceLimit { status: SolveStatus, report: Box<RepairReport> },
    #[error("plan fails verification against `{0}`")]
    VerificationFailed(String),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Advisor(#[from] AdvisorError),
    #[error(transparent)]
    Stl(#[from] StlError),
}

impl RepairError {
    /// Partial report carried by loop-level failures.
    pub fn report(&self) -> Option<&RepairReport> {
        match self {
            RepairError::UnrepairableConflict(r) | RepairError::MaxItersExceeded(r) => Some(r),
            RepairError::ResourceLimit { report, .. } => Some(report),
            _ => None,
        }
    }
}

/// Nearest temporal operator above an atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    G,
    F,
    #[serde(rename = "U-left")]
    ULeft,
    #[serde(rename = "U-right")]
    URight,
    #[serde(rename = "none")]
    None,
}

/// Diagnosed conflict on one atom: predicate, time support, parent
/// operator and semantic role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicEvent {
    pub node: NodeId,
    /// Canonical text of the atom.
    pub predicate: String,
    /// Smallest and largest step of the support.
    pub support: (usize, usize),
    pub steps: Vec<usize>,
    pub operator: Operator,
    /// The node `operator` refers to.
    pub operator_node: Option<NodeId>,
    /// Region role, or `numeric` for affine atoms.
    pub role: String,
}

impl AtomicEvent {
    pub fn is_safety(&self) -> bool {
        matches!(self.role.as_str(), "obstacle" | "nofly")
    }
}

/// Step range, relative to the evaluation step of `from`, at which the
/// atom `atom` below it is evaluated.
fn offset_range(from: &Formula, atom: NodeId) -> (usize, usize) {
    let path = from.path_to(atom);
    let (mut lo, mut hi) = (0, 0);
    for pair in path.windows(2) {
        match pair[0].kind() {
            FormulaKind::Globally(iv, _) | FormulaKind::Eventually(iv, _) => {
                lo += iv.a;
                hi += iv.b;
            }
            FormulaKind::Until(iv, l, _) => {
                if l.id() != pair[1].id() {
                    lo += iv.a;
                }
                hi += iv.b;
            }
            _ => {}
        }
    }
    (lo, hi)
}

fn parent_operator(f: &Formula, atom: NodeId) -> (Operator, Option<NodeId>) {
    let path = f.path_to(atom);
    for pair in path.windows(2).rev() {
        let op = match pair[0].kind() {
            FormulaKind::Globally(..) => Operator::G,
            FormulaKind::Eventually(..) => Operator::F,
            FormulaKind::Until(_, l, _) if l.id() == pair[1].id() => Operator::ULeft,
            FormulaKind::Until(..) => Operator::URight,
            _ => continue,
        };
        return (op, Some(pair[0].id()));
    }
    (Operator::None, None)
}

fn role_of(atom: &Formula) -> String {
    match atom.kind() {
        FormulaKind::Atom(Atom::Region(r)) => r.region.role.as_str().to_string(),
        _ => "numeric".to_string(),
    }
}

/// Project an IIS onto the atoms of `f`.
///
/// Rows of an atom give that atom's support directly. A row of an inner
/// node whose subtree has no other node in the IIS stands for every atom
/// below it, over the steps its windows reach. One event per atom, sorted
/// by node id.
pub fn diagnose(encoded: &EncodedProblem, iis: &[ConstraintId], f: &Formula) -> Result<Vec<AtomicEvent>, RepairError> {
    if iis.is_empty() {
        return Err(RepairError::EmptyIis);
    }
    let mut rows: BTreeMap<NodeId, BTreeSet<usize>> = BTreeMap::new();
    for &c in iis {
        let trace = encoded.problem.constraints.get(c).and_then(|row| row.trace.as_ref());
        let Some((node, k)) = trace.and_then(|t| t.node.map(|n| (n, t.k))) else {
            return Err(RepairError::UntracedConstraint(c));
        };
        if f.find(node).is_none() {
            return Err(RepairError::UntracedConstraint(c));
        }
        rows.entry(node).or_default().insert(k);
    }
    let mut steps: BTreeMap<NodeId, BTreeSet<usize>> = BTreeMap::new();
    for (&n, ks) in &rows {
        let node = f.find(n).expect("checked above");
        let covered_below = node.preorder().iter().skip(1).any(|d| rows.contains_key(&d.id()));
        if covered_below {
            continue;
        }
        for atom in node.atoms() {
            let (lo, hi) = offset_range(node, atom.id());
            let entry = steps.entry(atom.id()).or_default();
            for &k in ks {
                entry.extend(k + lo..=k + hi);
            }
        }
    }
    Ok(steps
        .into_iter()
        .map(|(node, s)| {
            let atom = f.find(node).expect("atoms come from f");
            let (operator, operator_node) = parent_operator(f, node);
            let steps: Vec<usize> = s.into_iter().collect();
            AtomicEvent {
                node,
                predicate: print_canonical(atom),
                support: (steps[0], *steps.last().expect("nonempty")),
                steps,
                operator,
                operator_node,
                role: role_of(atom),
            }
        })
        .collect())
}

/// A decision replaced by policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Override {
    pub node: NodeId,
    pub requested: RepairDecision,
    pub applied: RepairDecision,
    pub reason: String,
}

/// Pin every obstacle or no-fly event to `Fixed`, whatever the advisor
/// said. Events missing from `advice` are added as `Fixed`.
pub fn enforce_safety_policy(events: &[AtomicEvent], mut advice: Advice) -> (Advice, Vec<Override>) {
    let mut overrides = Vec::new();
    for e in events {
        let slot = advice.entry(e.node).or_insert((RepairDecision::Fixed, Provenance::Default));
        if e.is_safety() && slot.0 != RepairDecision::Fixed {
            overrides.push(Override {
                node: e.node,
                requested: slot.0,
                applied: RepairDecision::Fixed,
                reason: format!("{} constraints are never relaxed", e.role),
            });
            log::info!("safety policy: node {} forced to Fixed (advisor asked {:?})", e.node, slot.0);
            slot.0 = RepairDecision::Fixed;
        }
    }
    (advice, overrides)
}

/// Encoder decisions for the admitted event decisions. A temporal repair
/// targets the event's operator node; one whose operator is missing or
/// also governs a safety atom is inadmissible and becomes `Fixed`.
fn to_encoder_decisions(f: &Formula, events: &[AtomicEvent], advice: &mut Advice, overrides: &mut Vec<Override>) -> BTreeMap<NodeId, RepairDecision> {
    let safety = safety_nodes(f);
    let mut out = BTreeMap::new();
    for e in events {
        let slot = advice.get_mut(&e.node).expect("policy filled every event");
        let target = match slot.0 {
            RepairDecision::Fixed => continue,
            RepairDecision::PredicateRelax => Some(e.node),
            RepairDecision::TemporalRelax => e.operator_node.filter(|n| !safety.contains(n)),
        };
        match target {
            Some(n) => {
                out.insert(n, slot.0);
            }
            None => {
                overrides.push(Override {
                    node: e.node,
                    requested: slot.0,
                    applied: RepairDecision::Fixed,
                    reason: "no temporal operator that can be relaxed without touching a safety constraint".into(),
                });
                slot.0 = RepairDecision::Fixed;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub node: NodeId,
    pub mode: RepairDecision,
    pub provenance: Provenance,
}

/// One diagnose, advise, relax and rebuild pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairRound {
    pub iis: Vec<ConstraintId>,
    pub events: Vec<AtomicEvent>,
    pub decisions: Vec<DecisionRecord>,
    pub overrides: Vec<Override>,
    pub changes: Vec<Change>,
    /// Window changes undone because the plain problem stayed feasible.
    pub tightened: Vec<Change>,
    /// Formula after this round, if the relaxed problem was feasible.
    pub repaired: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairStatus {
    /// The original formula was feasible.
    NotNeeded,
    Repaired,
    Unrepairable,
    MaxIters,
    ResourceLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairReport {
    pub iterations: usize,
    pub original: String,
    pub repaired: Option<String>,
    pub status: RepairStatus,
    pub rounds: Vec<RepairRound>,
}

impl RepairReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Debug, Clone)]
pub struct RepairParams {
    pub encode: EncodeParams,
    /// Budget for optimizing plans, original, relaxed and repaired alike.
    pub plan: SolverParams,
    /// Budget for yes/no questions: IIS membership, tightening trials and
    /// settling plans whose optimization stopped without a point.
    pub check: SolverParams,
    pub max_iters: usize,
}

impl RepairParams {
    /// Node budget of [`Self::plan`] by default. Beyond the first dives
    /// extra nodes rarely improve the plan but cost seconds each on large
    /// horizons.
    pub const PLAN_NODES: usize = 200;
}

impl Default for RepairParams {
    fn default() -> Self {
        RepairParams {
            encode: EncodeParams::default(),
            plan: SolverParams {
                max_nodes: Self::PLAN_NODES,
                ..SolverParams::default()
            },
            check: SolverParams::default(),
            max_iters: 3,
        }
    }
}

/// Final plan of a repair run.
#[derive(Debug, Clone)]
pub struct RepairOutcome {
    /// The formula the plan satisfies; the original when no repair ran.
    pub formula: Formula,
    pub encoded: EncodedProblem,
    pub solve: SolveResult,
    pub trajectory: Trajectory,
    pub robustness: f64,
    pub report: RepairReport,
}

enum Verdict {
    Feasible(Box<(EncodedProblem, SolveResult)>),
    Infeasible(Box<EncodedProblem>),
    Limit(SolveStatus),
}

fn verdict(enc: EncodedProblem, r: SolveResult) -> Verdict {
    if r.has_incumbent() {
        Verdict::Feasible(Box::new((enc, r)))
    } else if r.status == SolveStatus::Infeasible {
        Verdict::Infeasible(Box::new(enc))
    } else {
        Verdict::Limit(r.status)
    }
}

/// Optimize a plan for `f` without any relaxation. A plan budget that
/// runs out without a point hands over to a feasibility search on the
/// check budget, whose status is then the one reported.
pub fn solve_plan(f: &Formula, sc: &Scenario, params: &RepairParams) -> Result<(EncodedProblem, SolveResult), RepairError> {
    let enc = encode(f, sc, &params.encode)?;
    let r = solve_milp(&enc.problem, &params.plan);
    if r.has_incumbent() || !r.status.is_limit() {
        return Ok((enc, r));
    }
    let r = find_feasible(&enc.problem, &params.check, None);
    Ok((enc, r))
}

fn plan(f: &Formula, sc: &Scenario, params: &RepairParams) -> Result<Verdict, RepairError> {
    let (enc, r) = solve_plan(f, sc, params)?;
    Ok(verdict(enc, r))
}

/// Whether `f` has any plan, on the check budget.
fn feasible(f: &Formula, sc: &Scenario, params: &RepairParams) -> Result<Verdict, RepairError> {
    let enc = encode(f, sc, &params.encode)?;
    let r = find_feasible(&enc.problem, &params.check, None);
    Ok(verdict(enc, r))
}

/// Pull each widened window back, and each shrunk one forward, one step at
/// a time while the plain problem stays feasible. The last feasible
/// formula is optimized again on the plan budget.
fn tighten(
    mut formula: Formula,
    mut best: (EncodedProblem, SolveResult),
    changes: &mut [Change],
    sc: &Scenario,
    params: &RepairParams,
) -> Result<(Formula, (EncodedProblem, SolveResult), Vec<Change>), RepairError> {
    let mut undone = Vec::new();
    for ch in changes.iter_mut() {
        let ChangeKind::Window { from, to } = &mut ch.kind else { continue };
        loop {
            let next = match to.b.cmp(&from.b) {
                std::cmp::Ordering::Greater => to.b - 1,
                std::cmp::Ordering::Less => to.b + 1,
                std::cmp::Ordering::Equal => break,
            };
            let trial_iv = crate::stl::Interval { a: to.a, b: next };
            let mut trial = formula.clone();
            reconstruct::set_interval(trial.find_mut(ch.node).expect("changed node exists"), trial_iv);
            match feasible(&trial, sc, params)? {
                Verdict::Feasible(_) => {
                    undone.push(Change {
                        node: ch.node,
                        kind: ChangeKind::Window { from: *to, to: trial_iv },
                    });
                    *to = trial_iv;
                    formula = trial;
                }
                _ => break,
            }
        }
    }
    if !undone.is_empty() {
        match plan(&formula, sc, params)? {
            Verdict::Feasible(found) => best = *found,
            _ => unreachable!("a feasibility search already found a point"),
        }
    }
    Ok((formula, best, undone))
}

fn verified(formula: Formula, enc: EncodedProblem, solve: SolveResult, report: RepairReport) -> Result<RepairOutcome, RepairError> {
    let x = solve.x.as_ref().expect("feasible verdicts carry a point");
    let trajectory = enc.decode(x);
    let robustness = eval_robustness(&formula, &trajectory, 0)?;
    if !eval_boolean(&formula, &trajectory, 0)? || robustness < -1e-6 {
        return Err(RepairError::VerificationFailed(print_canonical(&formula)));
    }
    Ok(RepairOutcome {
        formula,
        encoded: enc,
        solve,
        trajectory,
        robustness,
        report,
    })
}

/// Plan for `f` (NNF, unique ids), repairing it when infeasible.
///
/// Each round extracts an IIS, diagnoses it, asks `advisor` for modes,
/// applies the safety policy, solves the penalized relaxation, rewrites
/// the formula from the relaxation used and re-plans it without slack.
/// When a relaxed problem is itself infeasible, the next round diagnoses
/// it with the admitted relaxations kept. The returned trajectory is
/// checked against the final formula by the semantics evaluator.
pub fn repair_loop(sc: &Scenario, f: &Formula, advisor: &dyn Advisor, params: &RepairParams) -> Result<RepairOutcome, RepairError> {
    let mut report = RepairReport {
        iterations: 0,
        original: print_canonical(f),
        repaired: None,
        status: RepairStatus::NotNeeded,
        rounds: Vec::new(),
    };
    let limit = |status, mut report: RepairReport| {
        report.status = RepairStatus::ResourceLimit;
        RepairError::ResourceLimit {
            status,
            report: Box::new(report),
        }
    };
    let mut current = f.clone();
    let mut diagnosed = match plan(&current, sc, params)? {
        Verdict::Feasible(found) => {
            let (enc, r) = *found;
            return verified(current, enc, r, report);
        }
        Verdict::Infeasible(enc) => *enc,
        Verdict::Limit(status) => return Err(limit(status, report)),
    };
    // admitted relaxations of `current` carried into the next round
    let mut carried: BTreeMap<NodeId, RepairDecision> = BTreeMap::new();

    for _ in 0..params.max_iters {
        report.iterations += 1;
        let iis = match extract_iis(&diagnosed.problem, &params.check) {
            Ok(iis) => iis,
            Err(SolverError::TimeLimit) => return Err(limit(SolveStatus::TimeLimit, report)),
            Err(e) => return Err(e.into()),
        };
        let events = diagnose(&diagnosed, &iis, &current)?;
        let request = AdvisorRequest::new(sc.nl_instruction.as_deref(), print_canonical(&current), &events);
        let advice = advisor.advise(&events, &request)?;
        let (mut advice, mut overrides) = enforce_safety_policy(&events, advice);
        let admitted = to_encoder_decisions(&current, &events, &mut advice, &mut overrides);
        let mut round = RepairRound {
            iis,
            decisions: events
                .iter()
                .map(|e| DecisionRecord {
                    node: e.node,
                    mode: advice[&e.node].0,
                    provenance: advice[&e.node].1,
                })
                .collect(),
            events,
            overrides,
            changes: Vec::new(),
            tightened: Vec::new(),
            repaired: None,
        };
        let before = carried.len();
        for (n, d) in admitted {
            carried.entry(n).or_insert(d);
        }
        if carried.is_empty() || carried.len() == before {
            report.rounds.push(round);
            report.status = RepairStatus::Unrepairable;
            return Err(RepairError::UnrepairableConflict(Box::new(report)));
        }

        let relaxed = encode_with_relaxation(&current, sc, &params.encode, &carried)?;
        let rr = solve_milp(&relaxed.problem, &params.plan);
        let rr = if rr.has_incumbent() || !rr.status.is_limit() { rr } else { find_feasible(&relaxed.problem, &params.check, None) };
        let Some(x) = rr.x.as_ref() else {
            report.rounds.push(round);
            if rr.status != SolveStatus::Infeasible {
                return Err(limit(rr.status, report));
            }
            diagnosed = relaxed;
            continue;
        };
        let mut rec = reconstruct_spec(&current, x, &carried, &relaxed)?;
        carried.clear();
        let candidate = rec.formula.clone();
        match plan(&candidate, sc, params)? {
            Verdict::Feasible(found) => {
                let (formula, (enc, solve), undone) = tighten(candidate, *found, &mut rec.changes, sc, params)?;
                let text = print_canonical(&formula);
                round.changes = rec.changes;
                round.tightened = undone;
                round.repaired = Some(text.clone());
                report.rounds.push(round);
                report.repaired = Some(text);
                report.status = RepairStatus::Repaired;
                return verified(formula, enc, solve, report);
            }
            Verdict::Infeasible(enc) => {
                round.changes = rec.changes;
                round.repaired = Some(print_canonical(&candidate));
                report.rounds.push(round);
                current = candidate;
                diagnosed = *enc;
            }
            Verdict::Limit(status) => {
                round.changes = rec.changes;
                report.rounds.push(round);
                return Err(limit(status, report));
            }
        }
    }
    report.status = RepairStatus::MaxIters;
    Err(RepairError::MaxItersExceeded(Box::new(report)))
}
