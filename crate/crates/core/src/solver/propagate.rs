//! Activity-based bound propagation that fixes binaries and detects rows
//! that can no longer be satisfied.

use crate::milp::{MilpProblem, Sense, VarKind};

struct Row {
    terms: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
    tol: f64,
}

pub(crate) struct Propagator {
    rows: Vec<Row>,
    var_rows: Vec<Vec<usize>>,
    is_bin: Vec<bool>,
}

impl Propagator {
    pub fn new(p: &MilpProblem, mask: Option<&[bool]>, feas_tol: f64) -> Self {
        let mut rows = Vec::new();
        let mut var_rows = vec![Vec::new(); p.vars.len()];
        for c in &p.constraints {
            if mask.is_some_and(|m| !m[c.id]) {
                continue;
            }
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            for &(v, _) in c.expr.terms() {
                var_rows[v].push(rows.len());
            }
            rows.push(Row {
                terms: c.expr.terms().to_vec(),
                lo,
                hi,
                tol: 10.0 * feas_tol * c.row_norm().max(1.0),
            });
        }
        Propagator {
            rows,
            var_rows,
            is_bin: p.vars.iter().map(|v| v.kind == VarKind::Binary).collect(),
        }
    }

    /// Tighten binary bounds in place. Returns false when some row is
    /// provably violated.
    pub fn run(&self, lo: &mut [f64], up: &mut [f64]) -> bool {
        let mut queued = vec![true; self.rows.len()];
        let mut queue: std::collections::VecDeque<usize> = (0..self.rows.len()).collect();
        while let Some(r) = queue.pop_front() {
            queued[r] = false;
            let row = &self.rows[r];
            let (mut min_act, mut max_act) = (0.0, 0.0);
            let (mut min_inf, mut max_inf) = (0usize, 0usize);
            for &(v, a) in &row.terms {
                let (l, u) = if a > 0.0 { (lo[v], up[v]) } else { (up[v], lo[v]) };
                if l.is_finite() {
                    min_act += a * l;
                } else {
                    min_inf += 1;
                }
                if u.is_finite() {
                    max_act += a * u;
                } else {
                    max_inf += 1;
                }
            }
            if min_inf == 0 && min_act > row.hi + row.tol {
                return false;
            }
            if max_inf == 0 && max_act < row.lo - row.tol {
                return false;
            }
            for &(v, a) in &row.terms {
                if !self.is_bin[v] || lo[v] == up[v] {
                    continue;
                }
                let mut fix = None;
                if min_inf == 0 && row.hi.is_finite() && (a.abs() > row.hi - min_act + row.tol) {
                    fix = Some(if a > 0.0 { 0.0 } else { 1.0 });
                }
                if fix.is_none() && max_inf == 0 && row.lo.is_finite() && (a.abs() > max_act - row.lo + row.tol) {
                    fix = Some(if a > 0.0 { 1.0 } else { 0.0 });
                }
                if let Some(val) = fix {
                    lo[v] = val;
                    up[v] = val;
                    for &r2 in &self.var_rows[v] {
                        if !queued[r2] {
                            queued[r2] = true;
                            queue.push_back(r2);
                        }
                    }
                }
            }
        }
        true
    }
}
