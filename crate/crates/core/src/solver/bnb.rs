//! Best-bound branch and bound with depth-first plunging until the first
//! incumbent, plus a disjunction-guided dive with conflict backjumping.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use super::propagate::Propagator;
use super::simplex::{Basis, LpData, LpStatus, Simplex};
use super::{scaled_violation, SolveResult, SolveStatus, SolverParams};
use crate::milp::{MilpProblem, Sense, VarKind};

/// Bases are kept on open nodes only while the queue is small; beyond
/// that, children start from whatever basis the simplex holds.
const BASIS_QUEUE_CAP: usize = 2000;

/// Node interval between dives before and after an incumbent exists.
const DIVE_EVERY_OPEN: usize = 25;
const DIVE_EVERY_INCUMBENT: usize = 400;

struct Fix {
    var: usize,
    val: f64,
    parent: Option<Rc<Fix>>,
}

struct Node {
    bound: f64,
    seq: u64,
    fixes: Option<Rc<Fix>>,
    basis: Option<Rc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: lowest bound first, then lowest sequence.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

enum LpOutcome {
    Solved(f64),
    Infeasible,
    Stop(SolveStatus),
}

struct Search<'a> {
    p: &'a MilpProblem,
    params: &'a SolverParams,
    mask: Option<&'a [bool]>,
    feasibility: bool,
    bins: Vec<usize>,
    /// Rows (id, coefficient) touching each variable, active rows only.
    var_rows: Vec<Vec<(usize, f64)>>,
    links: Vec<Link>,
    prop: Propagator,
    lp: Simplex,
    root_lo: Vec<f64>,
    root_up: Vec<f64>,
    incumbent: Option<(f64, Vec<f64>)>,
    deadline: Option<Instant>,
}

impl Search<'_> {
    fn gap(&self, inc: f64) -> f64 {
        self.params.rel_gap * inc.abs().max(1.0)
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((v, _)) => v - self.gap(*v),
            None => f64::INFINITY,
        }
    }

    fn timed_out(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Apply node bounds to the LP. Returns false if propagation fails.
    fn load_bounds(&mut self, lo: &mut [f64], up: &mut [f64]) -> bool {
        if !self.prop.run(lo, up) {
            return false;
        }
        for &j in &self.bins {
            self.lp.set_bounds(j, lo[j], up[j]);
        }
        true
    }

    fn solve_lp(&mut self) -> LpOutcome {
        match self.lp.solve(self.params.max_lp_iters, self.deadline) {
            LpStatus::Optimal => LpOutcome::Solved(self.lp.objective()),
            LpStatus::Infeasible => LpOutcome::Infeasible,
            LpStatus::Unbounded => LpOutcome::Stop(SolveStatus::Unbounded),
            LpStatus::IterLimit => LpOutcome::Stop(SolveStatus::IterLimit),
            LpStatus::TimeLimit => LpOutcome::Stop(SolveStatus::TimeLimit),
        }
    }

    /// Most fractional binary, ties by lowest id.
    fn branching_var(&self) -> Option<usize> {
        let x = self.lp.values();
        let mut best = None;
        let mut best_f = self.params.int_tol;
        for &j in &self.bins {
            let f = (x[j] - x[j].round()).abs();
            if f > best_f {
                best_f = f;
                best = Some(j);
            }
        }
        best
    }

    /// Fix binaries at their rounded LP values, re-solve the continuous part
    /// and keep the point if it is feasible and improving.
    fn try_incumbent(&mut self) -> Result<bool, SolveStatus> {
        let rounded: Vec<(usize, f64)> = {
            let x = self.lp.values();
            self.bins.iter().map(|&j| (j, x[j].round())).collect()
        };
        self.try_rounding(rounded)
    }

    /// Fix binaries at the given values, re-solve the continuous part and
    /// keep the point if it is feasible and improving. LP bounds are
    /// restored afterwards.
    fn try_rounding(&mut self, rounded: Vec<(usize, f64)>) -> Result<bool, SolveStatus> {
        let saved: Vec<(f64, f64)> = rounded.iter().map(|&(j, _)| self.lp.bounds(j)).collect();
        for &(j, v) in &rounded {
            self.lp.set_bounds(j, v, v);
        }
        let outcome = self.solve_lp();
        let mut accepted = false;
        if let LpOutcome::Solved(_) = outcome {
            let mut x = self.lp.values().to_vec();
            for &(j, v) in &rounded {
                x[j] = v;
            }
            let obj = self.p.objective_value(&x);
            let ok = scaled_violation(self.p, self.mask, &x) <= self.params.feas_tol * 10.0;
            if ok && self.incumbent.as_ref().is_none_or(|(v, _)| obj < *v) {
                log::debug!("incumbent {obj}");
                self.incumbent = Some((obj, x));
                accepted = true;
            }
        }
        for (&(j, _), &(l, u)) in rounded.iter().zip(&saved) {
            self.lp.set_bounds(j, l, u);
        }
        match outcome {
            LpOutcome::Stop(s @ SolveStatus::TimeLimit) => Err(s),
            _ => Ok(accepted),
        }
    }

    /// Round the fractional binaries of `x` one at a time, least
    /// fractional first, each to the value that adds the least scaled row
    /// violation given the roundings already made and the LP values of
    /// everything else. Returns the full rounding and the binary whose
    /// rounding added the most violation, if any did.
    fn rounding_pass(&self, x: &[f64]) -> (Vec<(usize, f64)>, Option<(usize, f64)>) {
        let tol = self.params.feas_tol;
        let mut act: Vec<Option<f64>> = vec![None; self.p.constraints.len()];
        let mut frac: Vec<(f64, usize)> = Vec::new();
        let mut rounded = Vec::with_capacity(self.bins.len());
        for &j in &self.bins {
            let f = (x[j] - x[j].round()).abs();
            if f > self.params.int_tol {
                frac.push((f, j));
            } else {
                rounded.push((j, x[j].round()));
            }
        }
        frac.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let viol = |c: &crate::milp::LinConstraint, lhs: f64| match c.sense {
            Sense::Le => (lhs - c.rhs).max(0.0),
            Sense::Ge => (c.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - c.rhs).abs(),
        };
        let mut worst: Option<(f64, usize, f64)> = None;
        for &(_, j) in &frac {
            let mut inc = [0.0f64; 2];
            for &(r, a) in &self.var_rows[j] {
                let c = &self.p.constraints[r];
                let base = *act[r].get_or_insert_with(|| c.expr.eval(x));
                let norm = c.row_norm().max(1.0);
                let before = viol(c, base);
                for (v, slot) in inc.iter_mut().enumerate() {
                    *slot += (viol(c, base + a * (v as f64 - x[j])) - before) / norm;
                }
            }
            let v = if inc[1] < inc[0] - tol || (inc[1] <= inc[0] + tol && x[j] >= 0.5) { 1.0 } else { 0.0 };
            for &(r, a) in &self.var_rows[j] {
                if let Some(val) = act[r].as_mut() {
                    *val += a * (v - x[j]);
                }
            }
            let added = inc[v as usize];
            if added > tol && worst.is_none_or(|(w, _, _)| added > w) {
                worst = Some((added, j, v));
            }
            rounded.push((j, v));
        }
        (rounded, worst.map(|(_, j, v)| (j, v)))
    }

    /// Most fractional binary of `x` with its nearest value.
    fn most_fractional(&self, x: &[f64]) -> Option<(usize, f64)> {
        let mut best: Option<(f64, usize)> = None;
        for &j in &self.bins {
            let f = (x[j] - x[j].round()).abs();
            if f > self.params.int_tol && best.is_none_or(|(bf, _)| f > bf) {
                best = Some((f, j));
            }
        }
        best.map(|(_, j)| (j, x[j].round()))
    }

    /// Raise children of implications whose parent is at one, and fix
    /// binaries by propagation, until nothing changes.
    fn close_support(&self, lo: &mut [f64], up: &mut [f64]) -> bool {
        loop {
            let mut changed = false;
            for l in &self.links {
                if l.children.len() == 1 && lo[l.parent] >= 1.0 && lo[l.children[0]] < 1.0 {
                    let c = l.children[0];
                    if up[c] < 1.0 {
                        return false;
                    }
                    lo[c] = 1.0;
                    changed = true;
                }
            }
            if !self.prop.run(lo, up) {
                return false;
            }
            if !changed {
                return true;
            }
        }
    }

    /// First disjunction whose parent is at one with no child at one yet.
    fn open_disjunction(&self, lo: &[f64]) -> Option<usize> {
        self.links.iter().position(|l| l.children.len() > 1 && lo[l.parent] >= 1.0 && l.children.iter().all(|&c| lo[c] < 1.0))
    }

    /// Children of disjunction `k` that may still be raised, best first:
    /// least scaled violation of their own rows when raised at the LP
    /// point, then largest LP value, then lowest id.
    fn rank_children(&self, k: usize, up: &[f64], x: &[f64]) -> Vec<usize> {
        let mut scored: Vec<(f64, f64, usize)> = Vec::new();
        for &c in &self.links[k].children {
            if up[c] < 1.0 {
                continue;
            }
            let mut v = 0.0;
            for &(r, a) in &self.var_rows[c] {
                let row = &self.p.constraints[r];
                let lhs = row.expr.eval(x) + a * (1.0 - x[c]);
                let d = match row.sense {
                    Sense::Le => (lhs - row.rhs).max(0.0),
                    Sense::Ge => (row.rhs - lhs).max(0.0),
                    Sense::Eq => (lhs - row.rhs).abs(),
                };
                v += d / row.row_norm().max(1.0);
            }
            scored.push((v, -x[c], c));
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
        scored.into_iter().map(|t| t.2).collect()
    }

    /// Dive over disjunctions: starting from the variables already at one,
    /// pick one supporting child per open disjunction, re-solving after
    /// each pick and jumping back to the deepest pick named by an
    /// infeasibility proof. Returns the bounds reached once no disjunction
    /// is open, for the rounding dive to finish.
    fn support_dive(&mut self, lo: &[f64], up: &[f64]) -> Result<Option<(Vec<f64>, Vec<f64>)>, SolveStatus> {
        let n = lo.len();
        let mut base_lo = lo.to_vec();
        let mut base_up = up.to_vec();
        // single-variable rows that force a unit variable to one
        for c in self.p.constraints.iter().filter(|c| self.mask.is_none_or(|m| m[c.id])) {
            if let [(v, a)] = c.expr.terms() {
                let forced = *a > 0.0 && matches!(c.sense, Sense::Ge | Sense::Eq) && c.rhs / a >= 1.0;
                if forced && base_up[*v] == 1.0 {
                    base_lo[*v] = 1.0;
                }
            }
        }
        if !self.close_support(&mut base_lo, &mut base_up) {
            return Ok(None);
        }
        struct Pick {
            cands: Vec<usize>,
            at: usize,
            conflict: BTreeSet<usize>,
            lo: Vec<f64>,
            up: Vec<f64>,
        }
        let mut stack: Vec<Pick> = Vec::new();
        let mut level_of = vec![0usize; n];
        let mut solves = 0usize;
        let apply_all = |s: &mut Self, lo: &[f64], up: &[f64]| {
            for j in 0..n {
                s.lp.set_bounds(j, lo[j], up[j]);
            }
        };
        apply_all(self, &base_lo, &base_up);
        if !matches!(self.solve_lp(), LpOutcome::Solved(_)) {
            return Ok(None);
        }
        loop {
            if self.timed_out() {
                return Err(SolveStatus::TimeLimit);
            }
            let (cur_lo, cur_up) = match stack.last() {
                Some(p) => (p.lo.clone(), p.up.clone()),
                None => (base_lo.clone(), base_up.clone()),
            };
            let Some(k) = self.open_disjunction(&cur_lo) else {
                return Ok(Some((cur_lo, cur_up)));
            };
            let x = self.lp.values().to_vec();
            let cands = self.rank_children(k, &cur_up, &x);
            stack.push(Pick { cands, at: 0, conflict: BTreeSet::new(), lo: Vec::new(), up: Vec::new() });
            // try candidates, jumping back on exhaustion
            loop {
                let depth = stack.len();
                let (plo, pup) = match depth {
                    1 => (base_lo.clone(), base_up.clone()),
                    d => (stack[d - 2].lo.clone(), stack[d - 2].up.clone()),
                };
                let top = stack.last_mut().expect("nonempty");
                let failure: Option<BTreeSet<usize>> = if top.at >= top.cands.len() {
                    Some(BTreeSet::new())
                } else {
                    let c = top.cands[top.at];
                    let (mut l2, mut u2) = (plo.clone(), pup.clone());
                    l2[c] = 1.0;
                    u2[c] = 1.0;
                    let chronological: BTreeSet<usize> = (1..depth).collect();
                    if !self.close_support(&mut l2, &mut u2) {
                        Some(chronological)
                    } else {
                        apply_all(self, &l2, &u2);
                        solves += 1;
                        match self.solve_lp() {
                            LpOutcome::Solved(obj) if obj >= self.cutoff() => Some(chronological),
                            LpOutcome::Solved(_) => {
                                for j in 0..n {
                                    if (l2[j] != plo[j] || u2[j] != pup[j]) && level_of[j] == 0 {
                                        level_of[j] = depth;
                                    }
                                }
                                let top = stack.last_mut().expect("nonempty");
                                top.lo = l2;
                                top.up = u2;
                                None
                            }
                            LpOutcome::Infeasible => Some(match self.lp.ray_fixed_columns() {
                                Some(cols) => cols.into_iter().map(|j| if level_of[j] == 0 && l2[j] != plo[j] { depth } else { level_of[j] }).collect(),
                                None => chronological,
                            }),
                            LpOutcome::Stop(st) => return Err(st),
                        }
                    }
                };
                let Some(c) = failure else {
                    break;
                };
                if solves >= DIVE_SOLVES {
                    return Ok(None);
                }
                let top = stack.last_mut().expect("nonempty");
                top.conflict.extend(c.into_iter().filter(|&l| l > 0 && l < depth));
                top.at += 1;
                if top.at < top.cands.len() {
                    continue;
                }
                let conflict = std::mem::take(&mut top.conflict);
                let Some(&h) = conflict.iter().next_back() else {
                    return Ok(None);
                };
                while stack.len() > h {
                    stack.pop();
                }
                for l in level_of.iter_mut() {
                    if *l >= h {
                        *l = 0;
                    }
                }
                let top = stack.last_mut().expect("nonempty");
                top.conflict.extend(conflict.into_iter().filter(|&l| l != h));
                top.at += 1;
                // re-enter the loop to try the next candidate at level h
                if top.at < top.cands.len() {
                    continue;
                }
                // exhausted as well: let the loop handle it as a failure
                top.at = top.cands.len();
            }
        }
    }

    /// Two-stage dive from the node bounds `lo`/`up`. The support dive first
    /// commits one child of every open disjunction; the binary dive then
    /// fixes only binaries whose rounding conflicts with the LP point and
    /// tries the whole rounding once the pass is conflict free. Bounds and
    /// basis are restored afterwards.
    fn dive(&mut self, lo: &[f64], up: &[f64]) -> Result<(), SolveStatus> {
        let start_basis = self.lp.basis();
        let result = self.dive_from(lo, up);
        for j in 0..lo.len() {
            self.lp.set_bounds(j, lo[j], up[j]);
        }
        self.lp.load_basis(&start_basis);
        result
    }

    fn dive_from(&mut self, lo: &[f64], up: &[f64]) -> Result<(), SolveStatus> {
        let (lo, up) = match self.support_dive(lo, up)? {
            Some(b) => b,
            None => {
                for j in 0..lo.len() {
                    self.lp.set_bounds(j, lo[j], up[j]);
                }
                if !matches!(self.solve_lp(), LpOutcome::Solved(_)) {
                    return Ok(());
                }
                (lo.to_vec(), up.to_vec())
            }
        };
        if self.incumbent.is_some() && self.feasibility {
            return Ok(());
        }
        let mut d = DiveState {
            base_lo: lo.clone(),
            base_up: up.clone(),
            lo: lo.clone(),
            up: up.clone(),
            level_of: vec![0; lo.len()],
            levels: Vec::new(),
        };
        let mut solves = 0usize;
        let result = 'outer: loop {
            if self.timed_out() {
                break Err(SolveStatus::TimeLimit);
            }
            let x = self.lp.values().to_vec();
            let (rounded, contested) = self.rounding_pass(&x);
            let pick = match contested {
                Some(c) => Some(c),
                None => {
                    if self.try_rounding(rounded)? {
                        break Ok(());
                    }
                    self.most_fractional(&x)
                }
            };
            let Some((j, first)) = pick else {
                self.try_incumbent()?;
                break Ok(());
            };
            d.levels.push(Level {
                var: j,
                val: first,
                flipped: false,
                conflict: BTreeSet::new(),
                trail: Vec::new(),
            });
            let mut failure = self.apply_top(&mut d)?;
            solves += 1;
            while let Some(c) = failure {
                if solves >= DIVE_SOLVES {
                    break 'outer Ok(());
                }
                let depth = d.levels.len();
                let top = d.levels.last_mut().expect("nonempty");
                top.conflict.extend(c.into_iter().filter(|&l| l > 0 && l < depth));
                if !top.flipped {
                    top.flipped = true;
                    top.val = 1.0 - top.val;
                    failure = self.apply_top(&mut d)?;
                    solves += 1;
                    continue;
                }
                // Both values fail: jump back to the deepest level involved.
                let conflict = std::mem::take(&mut top.conflict);
                let Some(&h) = conflict.iter().next_back() else {
                    break 'outer Ok(());
                };
                while d.levels.len() > h {
                    d.pop();
                }
                let rest: Vec<usize> = conflict.into_iter().filter(|&l| l != h).collect();
                d.levels[h - 1].conflict.extend(rest);
                failure = Some(BTreeSet::new());
            }
        };
        result
    }

    /// (Re)apply the top decision of `d` and solve. Returns the decision
    /// levels involved in the failure, if it fails.
    fn apply_top(&mut self, d: &mut DiveState) -> Result<Option<BTreeSet<usize>>, SolveStatus> {
        let depth = d.levels.len();
        d.undo_top();
        let (j, val) = {
            let t = d.levels.last().expect("nonempty");
            (t.var, t.val)
        };
        let chronological = || (1..depth).collect::<BTreeSet<usize>>();
        let (mut lo, mut up) = (d.lo.clone(), d.up.clone());
        lo[j] = val;
        up[j] = val;
        if !self.prop.run(&mut lo, &mut up) {
            return Ok(Some(chronological()));
        }
        for &b in &self.bins {
            self.lp.set_bounds(b, lo[b], up[b]);
        }
        match self.solve_lp() {
            LpOutcome::Solved(obj) if obj < self.cutoff() => {
                let mut trail = Vec::new();
                for &b in &self.bins {
                    if lo[b] == up[b] && d.lo[b] != d.up[b] {
                        d.level_of[b] = depth;
                        trail.push(b);
                    }
                }
                d.lo = lo;
                d.up = up;
                d.levels.last_mut().expect("nonempty").trail = trail;
                Ok(None)
            }
            LpOutcome::Solved(_) => Ok(Some(chronological())),
            LpOutcome::Infeasible => Ok(Some(match self.lp.ray_fixed_columns() {
                // the top decision itself is at `depth` and filtered later
                Some(cols) => cols.into_iter().map(|c| if c == j { depth } else { d.level_of[c] }).collect(),
                None => chronological(),
            })),
            LpOutcome::Stop(st) => Err(st),
        }
    }
}

/// A row `parent <= sum(children)` over variables bounded in [0, 1]. With
/// one child it is an implication, with several a disjunction.
struct Link {
    parent: usize,
    children: Vec<usize>,
}

fn find_links(p: &MilpProblem, mask: Option<&[bool]>) -> Vec<Link> {
    let unit = |v: usize| p.vars[v].lower == 0.0 && p.vars[v].upper == 1.0;
    let mut out = Vec::new();
    for c in p.constraints.iter().filter(|c| mask.is_none_or(|m| m[c.id])) {
        if c.sense != Sense::Le || c.rhs != 0.0 {
            continue;
        }
        let terms = c.expr.terms();
        let parents: Vec<usize> = terms.iter().filter(|t| t.1 == 1.0).map(|t| t.0).collect();
        let children: Vec<usize> = terms.iter().filter(|t| t.1 == -1.0).map(|t| t.0).collect();
        if parents.len() == 1 && !children.is_empty() && parents.len() + children.len() == terms.len() && unit(parents[0]) && children.iter().all(|&v| unit(v)) {
            out.push(Link { parent: parents[0], children });
        }
    }
    out
}

/// Solves spent by one dive before it gives up.
const DIVE_SOLVES: usize = 4000;

struct Level {
    var: usize,
    val: f64,
    flipped: bool,
    /// Shallower levels that took part in failures of this one.
    conflict: BTreeSet<usize>,
    /// Binaries fixed when this decision was applied, itself included.
    trail: Vec<usize>,
}

/// Decision stack of a backjumping dive over binary fixings.
struct DiveState {
    base_lo: Vec<f64>,
    base_up: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    /// Decision level that fixed each binary; 0 before the dive.
    level_of: Vec<usize>,
    levels: Vec<Level>,
}

impl DiveState {
    fn undo_top(&mut self) {
        if let Some(t) = self.levels.last_mut() {
            for b in t.trail.drain(..) {
                self.lo[b] = self.base_lo[b];
                self.up[b] = self.base_up[b];
                self.level_of[b] = 0;
            }
        }
    }

    fn pop(&mut self) {
        self.undo_top();
        self.levels.pop();
    }
}

pub(crate) fn branch_and_bound(p: &MilpProblem, params: &SolverParams, mask: Option<&[bool]>, feasibility: bool) -> SolveResult {
    // Feasibility searches keep the true objective: a zero objective makes
    // every dual pivot degenerate. It is only dropped when the relaxation
    // turns out unbounded.
    let res = search(p, params, mask, feasibility, false);
    if feasibility && res.status == SolveStatus::Unbounded {
        search(p, params, mask, feasibility, true)
    } else {
        res
    }
}

fn search(p: &MilpProblem, params: &SolverParams, mask: Option<&[bool]>, feasibility: bool, zero_objective: bool) -> SolveResult {
    let start = Instant::now();
    let mut res = SolveResult {
        status: SolveStatus::Infeasible,
        x: None,
        objective: None,
        best_bound: f64::INFINITY,
        nodes: 0,
        lp_iterations: 0,
        wall_time: Duration::ZERO,
        duals: None,
    };
    if params.validate().is_err() {
        res.status = SolveStatus::IterLimit;
        return res;
    }
    let mut root_lo: Vec<f64> = p.vars.iter().map(|v| v.lower).collect();
    let mut root_up: Vec<f64> = p.vars.iter().map(|v| v.upper).collect();
    let prop = Propagator::new(p, mask, params.feas_tol);
    if !prop.run(&mut root_lo, &mut root_up) {
        res.wall_time = start.elapsed();
        return res;
    }
    let data = LpData::from_problem(p, mask, zero_objective);
    let lp = Simplex::new(data, &root_lo, &root_up, params.feas_tol);
    let mut s = Search {
        p,
        params,
        mask,
        feasibility,
        bins: p.vars.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.id).collect(),
        var_rows: {
            let mut br = vec![Vec::new(); p.vars.len()];
            for c in p.constraints.iter().filter(|c| mask.is_none_or(|m| m[c.id])) {
                for &(v, a) in c.expr.terms() {
                    br[v].push((c.id, a));
                }
            }
            br
        },
        links: find_links(p, mask),
        prop,
        lp,
        root_lo,
        root_up,
        incumbent: None,
        deadline: params.deadline(start),
    };

    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq,
        fixes: None,
        basis: None,
    });
    // Depth-first plunging until the first incumbent, best bound after.
    let mut stack: Vec<Node> = Vec::new();
    let mut stop: Option<SolveStatus> = None;
    let mut unbounded = false;
    loop {
        if s.incumbent.is_some() && !stack.is_empty() {
            heap.extend(stack.drain(..));
        }
        let Some(node) = stack.pop().or_else(|| heap.pop()) else {
            break;
        };
        if node.bound >= s.cutoff() {
            heap.clear();
            break;
        }
        if res.nodes >= params.max_nodes {
            heap.push(node);
            stop = Some(SolveStatus::NodeLimit);
            break;
        }
        if s.timed_out() {
            heap.push(node);
            stop = Some(SolveStatus::TimeLimit);
            break;
        }
        res.nodes += 1;
        let mut lo = s.root_lo.clone();
        let mut up = s.root_up.clone();
        let mut f = node.fixes.as_ref();
        while let Some(fx) = f {
            lo[fx.var] = fx.val;
            up[fx.var] = fx.val;
            f = fx.parent.as_ref();
        }
        if !s.load_bounds(&mut lo, &mut up) {
            continue;
        }
        if let Some(b) = &node.basis {
            s.lp.load_basis(b);
        }
        let out = s.solve_lp();
        let obj = match out {
            LpOutcome::Solved(v) => v,
            LpOutcome::Infeasible => continue,
            LpOutcome::Stop(SolveStatus::Unbounded) => {
                unbounded = true;
                break;
            }
            LpOutcome::Stop(st) => {
                heap.push(node);
                stop = Some(st);
                break;
            }
        };
        if obj >= s.cutoff() {
            continue;
        }
        let Some(j) = s.branching_var() else {
            match s.try_incumbent() {
                Ok(_) => {}
                Err(st) => {
                    stop = Some(st);
                    break;
                }
            }
            if feasibility && s.incumbent.is_some() {
                break;
            }
            continue;
        };
        let dive_every = if s.incumbent.is_none() { DIVE_EVERY_OPEN } else { DIVE_EVERY_INCUMBENT };
        if res.nodes == 1 || res.nodes % dive_every == 0 {
            if let Err(st) = s.dive(&lo, &up) {
                stop = Some(st);
                heap.push(node);
                break;
            }
            if feasibility && s.incumbent.is_some() {
                break;
            }
            // dive() restored the basis but left dive bounds on the LP
            for &b in &s.bins {
                s.lp.set_bounds(b, lo[b], up[b]);
            }
            if obj >= s.cutoff() {
                continue;
            }
        }
        let basis = (heap.len() + stack.len() < BASIS_QUEUE_CAP).then(|| Rc::new(s.lp.basis()));
        let plunge = s.incumbent.is_none();
        // pushed down-first so a plunge pops the up child next
        for val in [0.0, 1.0] {
            seq += 1;
            let child = Node {
                bound: obj,
                seq,
                fixes: Some(Rc::new(Fix {
                    var: j,
                    val,
                    parent: node.fixes.clone(),
                })),
                basis: basis.clone(),
            };
            if plunge {
                stack.push(child);
            } else {
                heap.push(child);
            }
        }
    }

    res.lp_iterations = s.lp.iterations;
    if unbounded {
        res.status = SolveStatus::Unbounded;
        res.best_bound = f64::NEG_INFINITY;
    } else {
        heap.extend(stack.drain(..));
        let open_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
        match (&s.incumbent, stop) {
            (Some((v, x)), None) => {
                res.status = SolveStatus::Optimal;
                res.objective = Some(p.objective_value(x));
                res.x = Some(x.clone());
                res.best_bound = if feasibility { *v } else { open_bound.min(*v) };
            }
            (Some((v, x)), Some(st)) => {
                res.status = st;
                res.objective = Some(p.objective_value(x));
                res.x = Some(x.clone());
                res.best_bound = open_bound.min(*v);
            }
            (None, Some(st)) => {
                res.status = st;
                res.best_bound = open_bound;
            }
            (None, None) => res.status = SolveStatus::Infeasible,
        }
    }
    res.wall_time = start.elapsed();
    res
}
