//! LP, MILP and irreducible-infeasible-subset solving for [`MilpProblem`]s.
//!
//! Row feasibility is measured after dividing each row by its largest
//! absolute coefficient, which keeps Big-M rows from producing false
//! infeasibility verdicts.

mod bnb;
mod eta;
mod iis;
mod propagate;
mod simplex;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::milp::{ConstraintId, MilpProblem, Sense};

pub use iis::extract_iis;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub feas_tol: f64,
    pub int_tol: f64,
    pub rel_gap: f64,
    pub max_nodes: usize,
    /// Wall-clock limit in seconds; `None` means unlimited.
    pub time_limit: Option<f64>,
    /// Simplex iteration cap per LP solve.
    pub max_lp_iters: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            feas_tol: 1e-7,
            int_tol: 1e-6,
            rel_gap: 1e-6,
            max_nodes: 1_000_000,
            time_limit: None,
            max_lp_iters: 1_000_000,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.feas_tol > 0.0
            && self.int_tol > 0.0
            && self.rel_gap > 0.0
            && self.max_nodes > 0
            && self.max_lp_iters > 0
            && self.time_limit.is_none_or(|t| t > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidParams)
        }
    }

    fn deadline(&self, start: Instant) -> Option<Instant> {
        self.time_limit.map(|s| start + Duration::from_secs_f64(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
    NodeLimit,
    TimeLimit,
}

impl SolveStatus {
    pub fn is_limit(self) -> bool {
        matches!(self, SolveStatus::IterLimit | SolveStatus::NodeLimit | SolveStatus::TimeLimit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    /// Optimal point, or the best incumbent when a limit stopped the search.
    pub x: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Proven lower bound on the optimum (minimization).
    pub best_bound: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    pub wall_time: Duration,
    /// Row multipliers indexed by constraint id (LP solves only).
    pub duals: Option<Vec<f64>>,
}

impl SolveResult {
    /// A limit status that still carries a feasible point.
    pub fn has_incumbent(&self) -> bool {
        self.x.is_some()
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SolverError {
    #[error("solve_lp called on a problem with binary variables")]
    HasBinaries,
    #[error("solver parameters must be positive")]
    InvalidParams,
    #[error("NotInfeasible: the problem has a feasible point")]
    NotInfeasible,
    #[error("TimeLimit: limit reached before the answer was proven")]
    TimeLimit,
}

/// Largest scaled violation over the rows selected by `mask`, and over the
/// variable bounds.
pub fn scaled_violation(p: &MilpProblem, mask: Option<&[bool]>, x: &[f64]) -> f64 {
    let rows = p
        .constraints
        .iter()
        .filter(|c| mask.is_none_or(|m| m[c.id]))
        .map(|c| c.violation(x) / c.row_norm().max(1.0))
        .fold(0.0f64, f64::max);
    let bounds = p
        .vars
        .iter()
        .map(|v| (v.lower - x[v.id]).max(x[v.id] - v.upper).max(0.0))
        .fold(0.0f64, f64::max);
    rows.max(bounds)
}

/// Solve a problem without binary variables.
pub fn solve_lp(p: &MilpProblem, params: &SolverParams) -> Result<SolveResult, SolverError> {
    params.validate()?;
    if p.num_binaries() > 0 {
        return Err(SolverError::HasBinaries);
    }
    let start = Instant::now();
    let data = simplex::LpData::from_problem(p, None, false);
    let row_ids = data.row_ids.clone();
    let lo: Vec<f64> = p.vars.iter().map(|v| v.lower).collect();
    let up: Vec<f64> = p.vars.iter().map(|v| v.upper).collect();
    let mut s = simplex::Simplex::new(data, &lo, &up, params.feas_tol);
    let st = s.solve(params.max_lp_iters, params.deadline(start));
    let mut res = SolveResult {
        status: SolveStatus::Infeasible,
        x: None,
        objective: None,
        best_bound: f64::NEG_INFINITY,
        nodes: 0,
        lp_iterations: s.iterations,
        wall_time: Duration::ZERO,
        duals: None,
    };
    match st {
        simplex::LpStatus::Optimal => {
            let x = s.values().to_vec();
            let obj = p.objective_value(&x);
            let mut duals = vec![0.0; p.constraints.len()];
            for (y, id) in s.row_duals().into_iter().zip(&row_ids) {
                duals[*id] = y;
            }
            res.status = SolveStatus::Optimal;
            res.objective = Some(obj);
            res.best_bound = obj;
            res.x = Some(x);
            res.duals = Some(duals);
        }
        simplex::LpStatus::Infeasible => res.best_bound = f64::INFINITY,
        simplex::LpStatus::Unbounded => res.status = SolveStatus::Unbounded,
        simplex::LpStatus::IterLimit => res.status = SolveStatus::IterLimit,
        simplex::LpStatus::TimeLimit => res.status = SolveStatus::TimeLimit,
    }
    res.wall_time = start.elapsed();
    Ok(res)
}

/// Branch and bound over the binaries of `p`.
pub fn solve_milp(p: &MilpProblem, params: &SolverParams) -> SolveResult {
    bnb::branch_and_bound(p, params, None, false)
}

/// Feasibility-only solve over the rows selected by `mask`; stops at the
/// first integral point.
pub fn find_feasible(p: &MilpProblem, params: &SolverParams, mask: Option<&[bool]>) -> SolveResult {
    bnb::branch_and_bound(p, params, mask, true)
}

/// Lagrangian lower bound `sum_i min(pi_i * r_i) + sum_j min(d_j * x_j)` over
/// row ranges and variable bounds. Equals the optimum for optimal duals.
pub fn dual_bound(p: &MilpProblem, duals: &[f64]) -> f64 {
    fn min_lin(coef: f64, lo: f64, hi: f64) -> f64 {
        // Round-off sized multipliers on infinite sides carry no information.
        if coef.abs() <= 1e-11 {
            0.0
        } else if coef > 0.0 {
            coef * lo
        } else {
            coef * hi
        }
    }
    let mut reduced: Vec<f64> = vec![0.0; p.vars.len()];
    for &(v, c) in p.objective.terms() {
        reduced[v] = c;
    }
    let mut bound = 0.0;
    for c in &p.constraints {
        let pi = duals[c.id];
        for &(v, a) in c.expr.terms() {
            reduced[v] -= pi * a;
        }
        let (lo, hi) = match c.sense {
            Sense::Le => (f64::NEG_INFINITY, c.rhs),
            Sense::Ge => (c.rhs, f64::INFINITY),
            Sense::Eq => (c.rhs, c.rhs),
        };
        bound += min_lin(pi, lo, hi);
    }
    for v in &p.vars {
        bound += min_lin(reduced[v.id], v.lower, v.upper);
    }
    bound
}

/// Ids of all rows marked removable by their trace record.
pub fn removable_rows(p: &MilpProblem) -> Vec<ConstraintId> {
    p.constraints.iter().filter(|c| c.is_removable()).map(|c| c.id).collect()
}
