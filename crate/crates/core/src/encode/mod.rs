//! Big-M encoding of NNF formulas over a scenario into a [`MilpProblem`].
//!
//! Every atom instance `(node, k)` gets a binary `z` and two rows
//! `g(x_k) + (1 - z) M >= gamma` and `g(x_k) - z M <= gamma`. Boolean and
//! temporal nodes get continuous `z` in `[0, 1]` linked one-sidedly to their
//! children (`z <= z_child` for conjunctions, `z <= sum z_child` for
//! disjunctions). Any positive `z` therefore forces some chain of atom
//! binaries to one, so the root row `z_root = 1` certifies satisfaction
//! with margin `gamma`, while a zero `z` certifies nothing. Every row is
//! traced to the node and evaluation step it encodes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{ConstraintKind, LinExpr, MilpError, MilpProblem, Sense, TraceRecord, VarId};
use crate::stl::{AtomicPredicate, Atom, Formula, FormulaKind, NodeId, EPS_STRICT};
use crate::world::{simulate, Scenario, Trajectory, WorldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeParams {
    /// Big-M constant; sized from the workspace when `None`.
    pub big_m: Option<f64>,
    pub gamma_max: f64,
    /// Lower bound on `gamma`. A small positive floor keeps the Boolean
    /// verdict of a plan stable under the solver's row tolerance.
    pub gamma_min: f64,
    pub lambda_u: f64,
    /// Penalty per meter of predicate slack.
    pub lambda_p: f64,
    /// Penalty per second of temporal extension or release.
    pub lambda_t: f64,
    pub eps_strict: f64,
}

impl Default for EncodeParams {
    fn default() -> Self {
        EncodeParams {
            big_m: None,
            gamma_max: 10.0,
            gamma_min: 1e-3,
            lambda_u: 1e-3,
            lambda_p: 1.0,
            lambda_t: 1.0,
            eps_strict: EPS_STRICT,
        }
    }
}

/// How one diagnosed node may be relaxed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RepairDecision {
    #[serde(rename = "fixed")]
    Fixed,
    #[serde(rename = "predicate")]
    PredicateRelax,
    #[serde(rename = "temporal")]
    TemporalRelax,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EncodeError {
    #[error("HorizonExceeded: node {node} needs step {step}")]
    HorizonExceeded { node: NodeId, step: usize },
    #[error("NotNNF: formula contains negation above an atom")]
    NotNnf,
    #[error("formula node ids are not unique; renumber before encoding")]
    DuplicateNodeIds,
    #[error("predicate at node {node} has {found} coefficients, expected {expected}")]
    DimensionMismatch { node: NodeId, expected: usize, found: usize },
    #[error("SafetyRelaxAttempt: node {0} constrains an obstacle or no-fly region")]
    SafetyRelaxAttempt(NodeId),
    #[error("UnknownDecisionNode: {0}")]
    UnknownDecisionNode(NodeId),
    #[error("decision {decision:?} does not apply to node {node}")]
    InvalidDecision { node: NodeId, decision: RepairDecision },
    #[error("invalid encode parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtensionKind {
    /// Witness step past the right end of an F or U window.
    Extension,
    /// Step released from the right end of a G window.
    Release,
}

/// A penalized binary added by temporal relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionVar {
    pub node: NodeId,
    /// Evaluation step of the temporal node.
    pub k: usize,
    /// Absolute step the variable extends to or releases.
    pub step: usize,
    pub var: VarId,
    pub kind: ExtensionKind,
}

/// A nonnegative slack added to a predicate row by predicate relaxation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlackVar {
    pub node: NodeId,
    pub k: usize,
    pub face: Option<usize>,
    pub var: VarId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedProblem {
    pub problem: MilpProblem,
    /// `(node, k) -> z` for every encoded node instance.
    pub z_vars: BTreeMap<(NodeId, usize), VarId>,
    pub gamma: VarId,
    /// State variables per step, positions then velocities.
    pub states: Vec<Vec<VarId>>,
    /// `(u+, u-)` pairs per step and axis; the control is their difference.
    pub controls: Vec<Vec<(VarId, VarId)>>,
    pub slacks: Vec<SlackVar>,
    pub extensions: Vec<ExtensionVar>,
    pub big_m: f64,
    pub dt: f64,
    pub amax: f64,
    pub x0: Vec<f64>,
    /// Margin used for negated region faces.
    pub eps_strict: f64,
}

impl EncodedProblem {
    pub fn trace_map(&self) -> BTreeMap<usize, TraceRecord> {
        self.problem
            .constraints
            .iter()
            .filter_map(|c| c.trace.clone().map(|t| (c.id, t)))
            .collect()
    }

    pub fn z(&self, node: NodeId, k: usize) -> Option<VarId> {
        self.z_vars.get(&(node, k)).copied()
    }

    /// Control inputs from a solution, snapped to a 1e-9 grid and clamped
    /// to the actuator limit so that simulation reproduces exact values.
    pub fn controls_of(&self, x: &[f64]) -> Vec<Vec<f64>> {
        self.controls
            .iter()
            .map(|step| {
                step.iter()
                    .map(|&(up, dn)| {
                        let u = ((x[up] - x[dn]) * 1e9).round() / 1e9;
                        u.clamp(-self.amax, self.amax)
                    })
                    .collect()
            })
            .collect()
    }

    /// Trajectory obtained by simulating the solution's controls from `x0`.
    pub fn decode(&self, x: &[f64]) -> Trajectory {
        let dims = self.x0.len() / 2;
        let model = crate::world::build_dynamics(self.dt, dims).expect("validated at encode time");
        simulate(&model, &self.x0, &self.controls_of(x))
    }

    /// Slack values above `tol`, as `(slack record, value)`.
    pub fn active_slacks(&self, x: &[f64], tol: f64) -> Vec<(&SlackVar, f64)> {
        self.slacks.iter().filter(|s| x[s.var] > tol).map(|s| (s, x[s.var])).collect()
    }

    pub fn active_extensions(&self, x: &[f64]) -> Vec<&ExtensionVar> {
        self.extensions.iter().filter(|e| x[e.var] > 0.5).collect()
    }
}

/// Nodes whose subtree references an obstacle or no-fly region.
pub fn safety_nodes(f: &Formula) -> BTreeSet<NodeId> {
    fn walk(f: &Formula, out: &mut BTreeSet<NodeId>) -> bool {
        let mut safety = matches!(f.kind(), FormulaKind::Atom(Atom::Region(r)) if r.region.role.is_safety());
        for c in f.children() {
            safety |= walk(c, out);
        }
        if safety {
            out.insert(f.id());
        }
        safety
    }
    let mut out = BTreeSet::new();
    walk(f, &mut out);
    out
}

/// Per-axis reachable position and velocity intervals from `x0`, clipped to
/// the workspace and speed limit. These are implied by the dynamics and
/// box constraints, so bounding variables with them removes no solution.
fn reachable_bounds(sc: &Scenario) -> Vec<Vec<(f64, f64)>> {
    let dims = sc.dims();
    let (dt, vmax, amax) = (sc.dt, sc.vmax, sc.amax);
    let mut out = Vec::with_capacity(sc.horizon + 1);
    let mut cur: Vec<(f64, f64)> = sc.initial_state().iter().map(|&v| (v, v)).collect();
    out.push(cur.clone());
    for _ in 0..sc.horizon {
        let mut next = cur.clone();
        for i in 0..dims {
            let (vlo, vhi) = cur[dims + i];
            let nvlo = (vlo - amax * dt).max(-vmax);
            let nvhi = (vhi + amax * dt).min(vmax);
            let (plo, phi) = cur[i];
            let nplo = (plo + dt * (vlo + nvlo) / 2.0).max(sc.workspace.min[i]);
            let nphi = (phi + dt * (vhi + nvhi) / 2.0).min(sc.workspace.max[i]);
            // An empty interval means the workspace cannot be respected;
            // the dynamics rows still prove that, so any point bound works.
            next[i] = if nplo <= nphi { (nplo, nphi) } else { (nphi, nphi) };
            next[dims + i] = (nvlo, nvhi);
        }
        out.push(next.clone());
        cur = next;
    }
    out
}

struct Encoder<'a> {
    sc: &'a Scenario,
    params: &'a EncodeParams,
    decisions: &'a BTreeMap<NodeId, RepairDecision>,
    p: MilpProblem,
    z_vars: BTreeMap<(NodeId, usize), VarId>,
    gamma: VarId,
    states: Vec<Vec<VarId>>,
    big_m: f64,
    slacks: Vec<SlackVar>,
    extensions: Vec<ExtensionVar>,
    objective: LinExpr,
    /// Latest evaluation step of each node, from the windows above it.
    max_offset: BTreeMap<NodeId, usize>,
}

impl Encoder<'_> {
    fn decision(&self, node: NodeId) -> RepairDecision {
        self.decisions.get(&node).copied().unwrap_or(RepairDecision::Fixed)
    }

    fn horizon(&self) -> usize {
        self.sc.horizon
    }

    /// Steps a relaxed window of node `node` with upper bound `b` may grow
    /// by so that the widened formula still fits the horizon at every
    /// evaluation step.
    fn extension_room(&self, node: NodeId, b: usize, child_lookahead: usize) -> usize {
        self.horizon().saturating_sub(self.max_offset[&node] + b + child_lookahead)
    }

    fn continuous_z(&mut self, node: NodeId, k: usize) -> Result<VarId, EncodeError> {
        Ok(self.p.continuous(0.0, 1.0, format!("z[n{node}][k{k}]"))?)
    }

    fn link(&mut self, parent: VarId, children: &[VarId], node: NodeId, k: usize, kind: ConstraintKind) -> Result<(), EncodeError> {
        let mut e = LinExpr::new().term(parent, 1.0);
        for &c in children {
            e.add(c, -1.0);
        }
        self.p.add_constraint(e, Sense::Le, 0.0, Some(TraceRecord::stl(node, k, kind)))?;
        Ok(())
    }

    /// Binary `z` with the two Big-M rows for `pred` at step `k`.
    fn atom_rows(&mut self, pred: &AtomicPredicate, node: NodeId, k: usize, face: Option<usize>, label: String) -> Result<VarId, EncodeError> {
        let dim = self.states[k].len();
        if pred.coefficients.len() != dim {
            return Err(EncodeError::DimensionMismatch {
                node,
                expected: dim,
                found: pred.coefficients.len(),
            });
        }
        let z = self.p.binary(label)?;
        let m = self.big_m;
        let mut g = LinExpr::new();
        for (i, &c) in pred.coefficients.iter().enumerate() {
            g.add(self.states[k][i], c);
        }
        // g.x + off + (1 - z) M + s >= gamma
        let mut lb = g.clone().term(z, -m).term(self.gamma, -1.0);
        if self.decision(node) == RepairDecision::PredicateRelax {
            let label = match face {
                Some(f) => format!("s[n{node}][k{k}][f{f}]"),
                None => format!("s[n{node}][k{k}]"),
            };
            let s = self.p.continuous(0.0, m, label)?;
            lb.add(s, 1.0);
            self.objective.add(s, self.params.lambda_p);
            self.slacks.push(SlackVar { node, k, face, var: s });
        }
        let trace = |kind| Some(TraceRecord::stl(node, k, kind).with_face(face));
        self.p.add_constraint(lb, Sense::Ge, -m - pred.offset, trace(ConstraintKind::PredicateLb))?;
        // g.x + off - z M <= gamma
        let ub = g.term(z, -m).term(self.gamma, -1.0);
        self.p.add_constraint(ub, Sense::Le, -pred.offset, trace(ConstraintKind::PredicateUb))?;
        Ok(z)
    }

    fn penalized_binary(&mut self, node: NodeId, k: usize, step: usize, kind: ExtensionKind, cost: f64) -> Result<VarId, EncodeError> {
        let tag = match kind {
            ExtensionKind::Extension => "ext",
            ExtensionKind::Release => "rel",
        };
        let v = self.p.binary(format!("{tag}[n{node}][k{k}][j{step}]"))?;
        self.objective.add(v, cost);
        self.extensions.push(ExtensionVar { node, k, step, var: v, kind });
        Ok(v)
    }

    fn z(&mut self, f: &Formula, k: usize) -> Result<VarId, EncodeError> {
        let node = f.id();
        if let Some(&v) = self.z_vars.get(&(node, k)) {
            return Ok(v);
        }
        let h = self.horizon();
        if k + f.lookahead() > h {
            return Err(EncodeError::HorizonExceeded { node, step: k + f.lookahead() });
        }
        let dt = self.sc.dt;
        let relax_t = self.decision(node) == RepairDecision::TemporalRelax;
        let v = match f.kind() {
            FormulaKind::True => self.continuous_z(node, k)?,
            FormulaKind::Atom(Atom::Predicate(pred)) => self.atom_rows(pred, node, k, None, format!("z[n{node}][k{k}]"))?,
            FormulaKind::Atom(Atom::Region(r)) => {
                let z = self.continuous_z(node, k)?;
                let mut faces = Vec::new();
                for face in 0..r.region.num_faces() {
                    let pred = r.region.face_predicate(face);
                    let pred = if r.negated { pred.strict_negation(self.params.eps_strict) } else { pred };
                    faces.push(self.atom_rows(&pred, node, k, Some(face), format!("z[n{node}][k{k}][f{face}]"))?);
                }
                if r.negated {
                    self.link(z, &faces, node, k, ConstraintKind::OrLink)?;
                } else {
                    for fz in faces {
                        self.link(z, &[fz], node, k, ConstraintKind::AndLink)?;
                    }
                }
                z
            }
            FormulaKind::Not(_) => return Err(EncodeError::NotNnf),
            FormulaKind::And(children) => {
                let z = self.continuous_z(node, k)?;
                for c in children {
                    let cz = self.z(c, k)?;
                    self.link(z, &[cz], node, k, ConstraintKind::AndLink)?;
                }
                z
            }
            FormulaKind::Or(children) => {
                let z = self.continuous_z(node, k)?;
                let mut cz = Vec::with_capacity(children.len());
                for c in children {
                    cz.push(self.z(c, k)?);
                }
                self.link(z, &cz, node, k, ConstraintKind::OrLink)?;
                z
            }
            FormulaKind::Globally(iv, child) => {
                let z = self.continuous_z(node, k)?;
                let mut prev_release: Option<VarId> = None;
                for j in (k + iv.a..=k + iv.b).rev() {
                    let cz = self.z(child, j)?;
                    if relax_t && j > k + iv.a {
                        // Releasing step j requires releasing every later step.
                        let r = self.penalized_binary(node, k, j, ExtensionKind::Release, self.params.lambda_t * dt)?;
                        self.link(z, &[cz, r], node, k, ConstraintKind::AndLink)?;
                        if let Some(later) = prev_release {
                            self.link(r, &[later], node, k, ConstraintKind::SlackLink)?;
                        }
                        prev_release = Some(r);
                    } else {
                        self.link(z, &[cz], node, k, ConstraintKind::AndLink)?;
                    }
                }
                z
            }
            FormulaKind::Eventually(iv, child) => {
                let z = self.continuous_z(node, k)?;
                let mut terms = Vec::new();
                for j in k + iv.a..=k + iv.b {
                    terms.push(self.z(child, j)?);
                }
                if relax_t {
                    let last = k + iv.b + self.extension_room(node, iv.b, child.lookahead());
                    for j in k + iv.b + 1..=last {
                        let cz = self.z(child, j)?;
                        let cost = self.params.lambda_t * (j - k - iv.b) as f64 * dt;
                        let w = self.penalized_binary(node, k, j, ExtensionKind::Extension, cost)?;
                        self.link(w, &[cz], node, k, ConstraintKind::SlackLink)?;
                        terms.push(w);
                    }
                }
                self.link(z, &terms, node, k, ConstraintKind::OrLink)?;
                z
            }
            FormulaKind::Until(iv, lhs, rhs) => {
                let z = self.continuous_z(node, k)?;
                let room = if relax_t { self.extension_room(node, iv.b, lhs.lookahead().max(rhs.lookahead())) } else { 0 };
                let last = k + iv.b + room;
                let mut terms = Vec::new();
                for j in k + iv.a..=last {
                    let w = if j > k + iv.b {
                        let cost = self.params.lambda_t * (j - k - iv.b) as f64 * dt;
                        self.penalized_binary(node, k, j, ExtensionKind::Extension, cost)?
                    } else {
                        self.p.continuous(0.0, 1.0, format!("w[n{node}][k{k}][j{j}]"))?
                    };
                    let rz = self.z(rhs, j)?;
                    self.link(w, &[rz], node, k, ConstraintKind::AndLink)?;
                    for i in k..=j {
                        let lz = self.z(lhs, i)?;
                        self.link(w, &[lz], node, k, ConstraintKind::AndLink)?;
                    }
                    terms.push(w);
                }
                self.link(z, &terms, node, k, ConstraintKind::OrLink)?;
                z
            }
        };
        self.z_vars.insert((node, k), v);
        Ok(v)
    }
}

fn validate_decisions(f: &Formula, decisions: &BTreeMap<NodeId, RepairDecision>) -> Result<(), EncodeError> {
    let safety = safety_nodes(f);
    for (&node, &d) in decisions {
        let Some(n) = f.find(node) else {
            return Err(EncodeError::UnknownDecisionNode(node));
        };
        if d == RepairDecision::Fixed {
            continue;
        }
        if safety.contains(&node) {
            return Err(EncodeError::SafetyRelaxAttempt(node));
        }
        let applies = match d {
            RepairDecision::PredicateRelax => matches!(n.kind(), FormulaKind::Atom(_)),
            RepairDecision::TemporalRelax => {
                matches!(n.kind(), FormulaKind::Globally(..) | FormulaKind::Eventually(..) | FormulaKind::Until(..))
            }
            RepairDecision::Fixed => true,
        };
        if !applies {
            return Err(EncodeError::InvalidDecision { node, decision: d });
        }
    }
    Ok(())
}

fn max_offsets(f: &Formula, offset: usize, out: &mut BTreeMap<NodeId, usize>) {
    out.insert(f.id(), offset);
    let b = match f.kind() {
        FormulaKind::Globally(iv, _) | FormulaKind::Eventually(iv, _) | FormulaKind::Until(iv, _, _) => iv.b,
        _ => 0,
    };
    for c in f.children() {
        max_offsets(c, offset + b, out);
    }
}

/// First node in preorder whose window, placed at its latest evaluation
/// step, ends past `h`.
fn first_overrun(f: &Formula, offset: usize, h: usize) -> Option<(NodeId, usize)> {
    let b = match f.kind() {
        FormulaKind::Globally(iv, _) | FormulaKind::Eventually(iv, _) | FormulaKind::Until(iv, _, _) => iv.b,
        _ => 0,
    };
    if offset + b > h {
        return Some((f.id(), offset + b));
    }
    f.children().into_iter().find_map(|c| first_overrun(c, offset + b, h))
}

/// Auto-sized Big-M: largest |g| over the state box plus `gamma_max + 1`.
fn auto_big_m(f: &Formula, extent: &[f64], params: &EncodeParams) -> f64 {
    let mut worst = 0.0f64;
    let mut visit = |pred: &AtomicPredicate| {
        let s: f64 = pred.coefficients.iter().zip(extent).map(|(c, e)| c.abs() * e).sum();
        worst = worst.max(s + pred.offset.abs());
    };
    for a in f.atoms() {
        match a.kind() {
            FormulaKind::Atom(Atom::Predicate(p)) => visit(p),
            FormulaKind::Atom(Atom::Region(r)) => {
                for face in 0..r.region.num_faces() {
                    let p = r.region.face_predicate(face);
                    visit(&if r.negated { p.strict_negation(params.eps_strict) } else { p });
                }
            }
            _ => {}
        }
    }
    worst + params.gamma_max + 1.0
}

/// Encode `f` (NNF, unique node ids) over `sc` without relaxation.
pub fn encode(f: &Formula, sc: &Scenario, params: &EncodeParams) -> Result<EncodedProblem, EncodeError> {
    encode_with_relaxation(f, sc, params, &BTreeMap::new())
}

/// Encode with slack and window-extension variables for the nodes named in
/// `decisions`. Absent nodes and `Fixed` decisions leave rows unchanged.
pub fn encode_with_relaxation(
    f: &Formula,
    sc: &Scenario,
    params: &EncodeParams,
    decisions: &BTreeMap<NodeId, RepairDecision>,
) -> Result<EncodedProblem, EncodeError> {
    sc.validate()?;
    if !(params.gamma_max > 0.0 && params.gamma_max.is_finite()) {
        return Err(EncodeError::InvalidParams("gamma_max must be positive".into()));
    }
    if !(params.gamma_min >= 0.0 && params.gamma_min < params.gamma_max) {
        return Err(EncodeError::InvalidParams("gamma_min must lie in [0, gamma_max)".into()));
    }
    if params.big_m.is_some_and(|m| !(m > 0.0 && m.is_finite())) {
        return Err(EncodeError::InvalidParams("big_m must be positive".into()));
    }
    if params.lambda_u < 0.0 || params.lambda_p < 0.0 || params.lambda_t < 0.0 || params.eps_strict < 0.0 {
        return Err(EncodeError::InvalidParams("penalty weights must be nonnegative".into()));
    }
    if !f.is_nnf() {
        return Err(EncodeError::NotNnf);
    }
    if !f.has_unique_ids() {
        return Err(EncodeError::DuplicateNodeIds);
    }
    validate_decisions(f, decisions)?;
    if let Some((node, step)) = first_overrun(f, 0, sc.horizon) {
        return Err(EncodeError::HorizonExceeded { node, step });
    }

    let dims = sc.dims();
    let h = sc.horizon;
    let mut extent = Vec::with_capacity(2 * dims);
    for i in 0..dims {
        extent.push(sc.workspace.min[i].abs().max(sc.workspace.max[i].abs()));
    }
    extent.extend(std::iter::repeat_n(sc.vmax, dims));
    let big_m = params.big_m.unwrap_or_else(|| auto_big_m(f, &extent, params));

    let mut p = MilpProblem::new();
    let bounds = reachable_bounds(sc);
    let mut states = Vec::with_capacity(h + 1);
    for (k, b) in bounds.iter().enumerate() {
        let mut row = Vec::with_capacity(2 * dims);
        for (i, &(lo, hi)) in b.iter().enumerate() {
            let name = if i < dims { format!("p{i}[{k}]") } else { format!("v{}[{k}]", i - dims) };
            row.push(p.continuous(lo, hi, name)?);
        }
        states.push(row);
    }
    let mut controls = Vec::with_capacity(h);
    for k in 0..h {
        let mut row = Vec::with_capacity(dims);
        for i in 0..dims {
            let up = p.continuous(0.0, sc.amax, format!("u{i}+[{k}]"))?;
            let dn = p.continuous(0.0, sc.amax, format!("u{i}-[{k}]"))?;
            row.push((up, dn));
        }
        controls.push(row);
    }
    let gamma = p.continuous(params.gamma_min, params.gamma_max, "gamma")?;
    let dt = sc.dt;
    for k in 0..h {
        for i in 0..dims {
            let (up, dn) = controls[k][i];
            let half = 0.5 * dt * dt;
            let pos = LinExpr::new()
                .term(states[k + 1][i], 1.0)
                .term(states[k][i], -1.0)
                .term(states[k][dims + i], -dt)
                .term(up, -half)
                .term(dn, half);
            p.add_constraint(pos, Sense::Eq, 0.0, Some(TraceRecord::core(k, ConstraintKind::Dynamics)))?;
            let vel = LinExpr::new()
                .term(states[k + 1][dims + i], 1.0)
                .term(states[k][dims + i], -1.0)
                .term(up, -dt)
                .term(dn, dt);
            p.add_constraint(vel, Sense::Eq, 0.0, Some(TraceRecord::core(k, ConstraintKind::Dynamics)))?;
        }
    }

    let mut objective = LinExpr::new().term(gamma, -1.0);
    for row in &controls {
        for &(up, dn) in row {
            objective.add(up, params.lambda_u);
            objective.add(dn, params.lambda_u);
        }
    }
    let mut enc = Encoder {
        sc,
        params,
        decisions,
        p,
        z_vars: BTreeMap::new(),
        gamma,
        states,
        big_m,
        slacks: Vec::new(),
        extensions: Vec::new(),
        objective,
        max_offset: {
            let mut m = BTreeMap::new();
            max_offsets(f, 0, &mut m);
            m
        },
    };
    let root = enc.z(f, 0)?;
    enc.p
        .add_constraint(LinExpr::new().term(root, 1.0), Sense::Eq, 1.0, Some(TraceRecord::stl(f.id(), 0, ConstraintKind::Root)))?;
    enc.p.set_objective(enc.objective.clone())?;
    Ok(EncodedProblem {
        problem: enc.p,
        z_vars: enc.z_vars,
        gamma,
        states: enc.states,
        controls,
        slacks: enc.slacks,
        extensions: enc.extensions,
        big_m,
        dt,
        amax: sc.amax,
        x0: sc.initial_state(),
        eps_strict: params.eps_strict,
    })
}
