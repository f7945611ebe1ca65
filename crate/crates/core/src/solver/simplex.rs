//! Bounded-variable revised simplex over `A x + s = 0`.
//!
//! Each row `L <= a.x <= U` is scaled by its largest coefficient and gets a
//! logical `s = -a.x / scale` bounded by `[-U, -L] / scale`, so the initial
//! basis is the identity. The dual method drives the search; a primal pass
//! removes dual infeasibilities left by tolerance-based ratio tests.
//! Infinite bounds of nonbasic variables are replaced by `±BIG` so every
//! start is dual feasible; an optimum resting on such a bound with nonzero
//! reduced cost is reported as unbounded.

use std::time::Instant;

use super::eta::EtaFile;
use crate::milp::{MilpProblem, Sense};

pub(crate) const BIG: f64 = 1e7;
const PIVOT_TOL: f64 = 1e-9;
/// Updates after which the final verification refactors first.
const VERIFY_REFACTOR: usize = 20;
const REFACTOR_EVERY: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum VStat {
    Basic,
    Lower,
    Upper,
    /// Free nonbasic variable held at zero.
    Zero,
}

/// Basic set and nonbasic positions; the row order is rebuilt on load.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    pub stat: Vec<VStat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
    TimeLimit,
}

/// Column and row views of the scaled constraint matrix.
#[derive(Debug, Clone)]
pub(crate) struct LpData {
    pub m: usize,
    pub n: usize,
    col_idx: Vec<Vec<usize>>,
    col_val: Vec<Vec<f64>>,
    row_idx: Vec<Vec<usize>>,
    row_val: Vec<Vec<f64>>,
    pub cost: Vec<f64>,
    pub scale: Vec<f64>,
    /// Bounds of the logical variables.
    pub slo: Vec<f64>,
    pub sup: Vec<f64>,
    /// Original constraint id of each row.
    pub row_ids: Vec<usize>,
}

impl LpData {
    /// Build from the rows of `p` selected by `mask` (all when `None`).
    /// With `zero_objective` the cost vector is dropped (pure feasibility).
    pub fn from_problem(p: &MilpProblem, mask: Option<&[bool]>, zero_objective: bool) -> Self {
        let n = p.vars.len();
        let mut col_idx = vec![Vec::new(); n];
        let mut col_val = vec![Vec::new(); n];
        let mut row_idx = Vec::new();
        let mut row_val = Vec::new();
        let mut scale = Vec::new();
        let mut slo = Vec::new();
        let mut sup = Vec::new();
        let mut row_ids = Vec::new();
        for c in &p.constraints {
            if mask.is_some_and(|m| !m[c.id]) {
                continue;
            }
            let i = row_ids.len();
            let s = c.row_norm();
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            slo.push(-hi / s);
            sup.push(-lo / s);
            scale.push(s);
            let mut ri = Vec::with_capacity(c.expr.terms().len());
            let mut rv = Vec::with_capacity(c.expr.terms().len());
            for &(v, a) in c.expr.terms() {
                let a = a / s;
                col_idx[v].push(i);
                col_val[v].push(a);
                ri.push(v);
                rv.push(a);
            }
            row_idx.push(ri);
            row_val.push(rv);
            row_ids.push(c.id);
        }
        let mut cost = vec![0.0; n];
        if !zero_objective {
            for &(v, c) in p.objective.terms() {
                cost[v] = c;
            }
        }
        LpData {
            m: row_ids.len(),
            n,
            col_idx,
            col_val,
            row_idx,
            row_val,
            cost,
            scale,
            slo,
            sup,
            row_ids,
        }
    }
}

pub(crate) struct Simplex {
    pub data: LpData,
    lo: Vec<f64>,
    up: Vec<f64>,
    stat: Vec<VStat>,
    head: Vec<usize>,
    x: Vec<f64>,
    dj: Vec<f64>,
    eta: EtaFile,
    pub feas_tol: f64,
    pub dual_tol: f64,
    pub iterations: usize,
    alpha: Vec<f64>,
    rho: Vec<f64>,
    col: Vec<f64>,
    bland: bool,
    /// The last solve ended on a dual ray whose row is still in `alpha`.
    ray: bool,
    /// Eta count right after the last refactorization.
    base_etas: usize,
}

impl Simplex {
    pub fn new(data: LpData, lo: &[f64], up: &[f64], feas_tol: f64) -> Self {
        let (m, n) = (data.m, data.n);
        let mut l = lo.to_vec();
        let mut u = up.to_vec();
        l.extend_from_slice(&data.slo);
        u.extend_from_slice(&data.sup);
        let mut stat = vec![VStat::Lower; n + m];
        for s in stat.iter_mut().skip(n) {
            *s = VStat::Basic;
        }
        let head = (n..n + m).collect();
        let mut dj = vec![0.0; n + m];
        dj[..n].copy_from_slice(&data.cost);
        let mut s = Simplex {
            data,
            lo: l,
            up: u,
            stat,
            head,
            x: vec![0.0; n + m],
            dj,
            eta: EtaFile::default(),
            feas_tol,
            dual_tol: 1e-9,
            iterations: 0,
            alpha: vec![0.0; n + m],
            rho: vec![0.0; m],
            col: vec![0.0; m],
            bland: false,
            ray: false,
            base_etas: 0,
        };
        s.place_nonbasic();
        s.compute_primal();
        s
    }

    fn ncols(&self) -> usize {
        self.data.n + self.data.m
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, up: f64) {
        self.lo[j] = lo;
        self.up[j] = up;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.up[j])
    }

    pub fn basis(&self) -> Basis {
        Basis { stat: self.stat.clone() }
    }

    pub fn load_basis(&mut self, b: &Basis) {
        self.stat.clone_from(&b.stat);
        self.refactor();
        self.compute_duals();
    }

    /// Fixed structural columns that appear in the infeasibility proof of
    /// the last solve, or `None` when it did not end on a dual ray.
    pub fn ray_fixed_columns(&self) -> Option<Vec<usize>> {
        if !self.ray {
            return None;
        }
        Some((0..self.data.n).filter(|&j| self.stat[j] != VStat::Basic && self.lo[j] == self.up[j] && self.alpha[j].abs() > PIVOT_TOL).collect())
    }

    /// Structural part of the current point.
    pub fn values(&self) -> &[f64] {
        &self.x[..self.data.n]
    }

    pub fn objective(&self) -> f64 {
        self.data.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    /// Row multipliers in the unscaled row space, one per kept row.
    pub fn row_duals(&self) -> Vec<f64> {
        let m = self.data.m;
        let mut y: Vec<f64> = (0..m).map(|i| self.cost_of(self.head[i])).collect();
        self.eta.btran(&mut y);
        y.iter().zip(&self.data.scale).map(|(yi, s)| yi / s).collect()
    }

    fn cost_of(&self, j: usize) -> f64 {
        if j < self.data.n {
            self.data.cost[j]
        } else {
            0.0
        }
    }

    fn nb_value(&self, j: usize) -> f64 {
        match self.stat[j] {
            VStat::Lower => {
                if self.lo[j].is_finite() {
                    self.lo[j]
                } else {
                    -BIG
                }
            }
            VStat::Upper => {
                if self.up[j].is_finite() {
                    self.up[j]
                } else {
                    BIG
                }
            }
            VStat::Zero => 0.0,
            VStat::Basic => self.x[j],
        }
    }

    /// Scatter column `j` into `out` (length m, assumed zero).
    fn scatter(&self, j: usize, out: &mut [f64]) {
        let n = self.data.n;
        if j < n {
            for (&i, &a) in self.data.col_idx[j].iter().zip(&self.data.col_val[j]) {
                out[i] = a;
            }
        } else {
            out[j - n] = 1.0;
        }
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        let n = self.data.n;
        if j < n {
            self.data.col_idx[j]
                .iter()
                .zip(&self.data.col_val[j])
                .map(|(&i, &a)| a * y[i])
                .sum()
        } else {
            y[j - n]
        }
    }

    /// Put every nonbasic variable on the bound its reduced cost prefers.
    fn place_nonbasic(&mut self) {
        let tol = self.dual_tol;
        for j in 0..self.ncols() {
            if self.stat[j] == VStat::Basic {
                continue;
            }
            let (lo, up, d) = (self.lo[j], self.up[j], self.dj[j]);
            let new = if lo == up {
                VStat::Lower
            } else if d > tol {
                VStat::Lower
            } else if d < -tol {
                VStat::Upper
            } else {
                match self.stat[j] {
                    VStat::Lower if lo.is_finite() => VStat::Lower,
                    VStat::Upper if up.is_finite() => VStat::Upper,
                    _ if lo.is_finite() => VStat::Lower,
                    _ if up.is_finite() => VStat::Upper,
                    _ => VStat::Zero,
                }
            };
            self.stat[j] = new;
            self.x[j] = self.nb_value(j);
        }
    }

    fn compute_primal(&mut self) {
        let m = self.data.m;
        let mut rhs = vec![0.0; m];
        let n = self.data.n;
        for j in 0..self.ncols() {
            if self.stat[j] == VStat::Basic {
                continue;
            }
            let v = self.nb_value(j);
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            if j < n {
                for (&i, &a) in self.data.col_idx[j].iter().zip(&self.data.col_val[j]) {
                    rhs[i] -= a * v;
                }
            } else {
                rhs[j - n] -= v;
            }
        }
        self.eta.ftran(&mut rhs);
        for i in 0..m {
            self.x[self.head[i]] = rhs[i];
        }
    }

    fn compute_duals(&mut self) {
        let m = self.data.m;
        let mut y: Vec<f64> = (0..m).map(|i| self.cost_of(self.head[i])).collect();
        self.eta.btran(&mut y);
        for j in 0..self.ncols() {
            self.dj[j] = if self.stat[j] == VStat::Basic {
                0.0
            } else {
                self.cost_of(j) - self.col_dot(j, &y)
            };
        }
    }

    /// Rebuild the eta file from scratch for the current basic set. Columns
    /// found dependent are dropped to a bound and replaced by logicals.
    fn refactor(&mut self) {
        let (m, n) = (self.data.m, self.data.n);
        self.eta.clear();
        let mut taken = vec![false; m];
        let mut head = vec![usize::MAX; m];
        let mut structs = Vec::new();
        for j in 0..n + m {
            if self.stat[j] != VStat::Basic {
                continue;
            }
            if j >= n {
                taken[j - n] = true;
                head[j - n] = j;
            } else {
                structs.push(j);
            }
        }
        structs.sort_by_key(|&j| (self.data.col_idx[j].len(), j));
        let mut work = vec![0.0; m];
        for j in structs {
            work.iter_mut().for_each(|w| *w = 0.0);
            self.scatter(j, &mut work);
            self.eta.ftran(&mut work);
            let mut best = 0.0f64;
            for i in 0..m {
                if !taken[i] {
                    best = best.max(work[i].abs());
                }
            }
            if best < 1e-9 {
                self.stat[j] = if self.lo[j].is_finite() { VStat::Lower } else if self.up[j].is_finite() { VStat::Upper } else { VStat::Zero };
                continue;
            }
            let mut pick = usize::MAX;
            let mut pick_len = usize::MAX;
            for i in 0..m {
                if !taken[i] && work[i].abs() >= 0.1 * best {
                    let len = self.data.row_idx[i].len();
                    if len < pick_len {
                        pick = i;
                        pick_len = len;
                    }
                }
            }
            self.eta.push(pick, &work);
            taken[pick] = true;
            head[pick] = j;
        }
        for i in 0..m {
            if !taken[i] {
                head[i] = n + i;
                self.stat[n + i] = VStat::Basic;
            }
        }
        self.head = head;
        self.base_etas = self.eta.len();
    }

    fn refresh(&mut self) {
        self.refactor();
        self.compute_duals();
        self.place_nonbasic();
        self.compute_primal();
    }

    fn primal_infeasibility(&self, j: usize) -> f64 {
        let x = self.x[j];
        if x < self.lo[j] - self.feas_tol {
            self.lo[j] - x
        } else if x > self.up[j] + self.feas_tol {
            x - self.up[j]
        } else {
            0.0
        }
    }

    fn max_dual_infeasibility(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.ncols() {
            let d = self.dj[j];
            let v = match self.stat[j] {
                VStat::Basic => 0.0,
                _ if self.lo[j] == self.up[j] => 0.0,
                VStat::Lower => -d,
                VStat::Upper => d,
                VStat::Zero => d.abs(),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Pivot row `alpha_j = (e_r^T B^-1) a_j` for every column.
    fn compute_pivot_row(&mut self, r: usize) {
        let m = self.data.m;
        let n = self.data.n;
        self.rho.iter_mut().for_each(|v| *v = 0.0);
        self.rho[r] = 1.0;
        self.eta.btran(&mut self.rho);
        self.alpha.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let ri = self.rho[i];
            if ri.abs() <= 1e-13 {
                continue;
            }
            for (&j, &a) in self.data.row_idx[i].iter().zip(&self.data.row_val[i]) {
                self.alpha[j] += ri * a;
            }
            self.alpha[n + i] = ri;
        }
    }

    fn ftran_col(&mut self, q: usize) {
        self.col.iter_mut().for_each(|v| *v = 0.0);
        let mut c = std::mem::take(&mut self.col);
        self.scatter(q, &mut c);
        self.eta.ftran(&mut c);
        self.col = c;
    }

    fn pivot(&mut self, r: usize, q: usize, leave_stat: VStat) {
        let p = self.head[r];
        self.stat[p] = leave_stat;
        self.stat[q] = VStat::Basic;
        self.head[r] = q;
        self.eta.push(r, &self.col);
        self.iterations += 1;
    }

    /// Dual simplex until primal feasible (optimal) or a dual ray proves
    /// primal infeasibility.
    fn dual_loop(&mut self, limit: usize, deadline: Option<Instant>) -> LpStatus {
        let m = self.data.m;
        let mut last_obj = f64::NEG_INFINITY;
        let mut stall = 0usize;
        let mut retries = 0usize;
        loop {
            if self.iterations >= limit {
                return LpStatus::IterLimit;
            }
            if self.iterations % 64 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                return LpStatus::TimeLimit;
            }
            if self.eta.len() - self.base_etas >= REFACTOR_EVERY {
                self.refresh();
            }
            // leaving row
            let mut r = usize::MAX;
            let mut best = 0.0;
            for i in 0..m {
                let inf = self.primal_infeasibility(self.head[i]);
                if inf > 0.0 {
                    if self.bland {
                        if r == usize::MAX || self.head[i] < self.head[r] {
                            r = i;
                        }
                    } else if inf > best {
                        best = inf;
                        r = i;
                    }
                }
            }
            if r == usize::MAX {
                return LpStatus::Optimal;
            }
            let p = self.head[r];
            let to_lower = self.x[p] < self.lo[p];
            let bound = if to_lower { self.lo[p] } else { self.up[p] };
            let sgn = if to_lower { -1.0 } else { 1.0 };
            self.compute_pivot_row(r);

            // Eligible breakpoints: (ratio, |alpha|, j)
            let mut cands: Vec<(f64, f64, usize)> = Vec::new();
            for j in 0..self.ncols() {
                let st = self.stat[j];
                if st == VStat::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let a = sgn * self.alpha[j];
                let (ok, dcorr) = match st {
                    VStat::Lower => (a > PIVOT_TOL, self.dj[j].max(0.0)),
                    VStat::Upper => (a < -PIVOT_TOL, (-self.dj[j]).max(0.0)),
                    VStat::Zero => (a.abs() > PIVOT_TOL, 0.0),
                    VStat::Basic => unreachable!(),
                };
                if ok {
                    cands.push((dcorr / a.abs(), a.abs(), j));
                }
            }
            if cands.is_empty() {
                self.ray = true;
                return LpStatus::Infeasible;
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));

            // Bound flipping: pass boxed breakpoints while the leaving
            // variable's infeasibility still dominates.
            let mut slope = (self.x[p] - bound).abs();
            let mut stop = cands.len();
            for (k, &(_, a, j)) in cands.iter().enumerate() {
                let range = self.up[j] - self.lo[j];
                if self.bland || !range.is_finite() || self.stat[j] == VStat::Zero {
                    stop = k;
                    break;
                }
                let next = slope - a * range;
                if next <= 0.0 {
                    stop = k;
                    break;
                }
                slope = next;
            }
            if stop == cands.len() {
                // every breakpoint passed: the dual ray is unbounded
                self.ray = true;
                return LpStatus::Infeasible;
            }
            // Harris selection among breakpoints close to the stopping one.
            let q = if self.bland {
                let t0 = cands[stop].0;
                cands[stop..]
                    .iter()
                    .filter(|c| c.0 <= t0)
                    .map(|c| c.2)
                    .min()
                    .unwrap()
            } else {
                let tmax = cands[stop..]
                    .iter()
                    .map(|&(t, a, _)| t + self.dual_tol / a)
                    .fold(f64::INFINITY, f64::min);
                let mut q = usize::MAX;
                let mut qa = 0.0;
                for &(t, a, j) in &cands[stop..] {
                    if t <= tmax && a > qa {
                        qa = a;
                        q = j;
                    }
                }
                q
            };
            let flips: Vec<usize> = cands[..stop].iter().map(|c| c.2).filter(|&j| j != q).collect();

            self.ftran_col(q);
            let aq = self.alpha[q];
            if (self.col[r] - aq).abs() > 1e-6 * (1.0 + aq.abs()) || self.col[r].abs() < PIVOT_TOL {
                retries += 1;
                if retries > 3 {
                    self.bland = true;
                }
                if retries > 10 {
                    return LpStatus::IterLimit;
                }
                self.refresh();
                continue;
            }

            // dual update
            let theta_d = self.dj[q] / aq;
            for j in 0..self.ncols() {
                if self.stat[j] != VStat::Basic && self.alpha[j] != 0.0 {
                    self.dj[j] -= theta_d * self.alpha[j];
                }
            }
            self.dj[p] = -theta_d;
            self.dj[q] = 0.0;

            // flipped boxed variables
            if !flips.is_empty() {
                let mut delta = vec![0.0; m];
                for &j in &flips {
                    let (old, new_stat) = match self.stat[j] {
                        VStat::Lower => (self.lo[j], VStat::Upper),
                        _ => (self.up[j], VStat::Lower),
                    };
                    self.stat[j] = new_stat;
                    let newv = self.nb_value(j);
                    self.x[j] = newv;
                    let dv = newv - old;
                    let n = self.data.n;
                    if j < n {
                        for (&i, &a) in self.data.col_idx[j].iter().zip(&self.data.col_val[j]) {
                            delta[i] -= a * dv;
                        }
                    } else {
                        delta[j - n] -= dv;
                    }
                }
                self.eta.ftran(&mut delta);
                for i in 0..m {
                    self.x[self.head[i]] += delta[i];
                }
            }

            // primal update
            let theta_p = (self.x[p] - bound) / self.col[r];
            for i in 0..m {
                let c = self.col[i];
                if c != 0.0 {
                    self.x[self.head[i]] -= theta_p * c;
                }
            }
            self.x[q] += theta_p;
            self.x[p] = bound;
            self.pivot(r, q, if to_lower { VStat::Lower } else { VStat::Upper });

            let obj = self.objective();
            if obj > last_obj + 1e-12 * (1.0 + obj.abs()) {
                last_obj = obj;
                stall = 0;
                self.bland = false;
            } else {
                stall += 1;
                if stall > 200 {
                    self.bland = true;
                }
            }
        }
    }

    /// Primal simplex from a primal feasible basis to remove residual dual
    /// infeasibilities.
    fn primal_loop(&mut self, limit: usize, deadline: Option<Instant>) -> LpStatus {
        let m = self.data.m;
        let mut stall = 0usize;
        let mut last_obj = f64::INFINITY;
        loop {
            if self.iterations >= limit {
                return LpStatus::IterLimit;
            }
            if self.iterations % 64 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                return LpStatus::TimeLimit;
            }
            if self.eta.len() - self.base_etas >= REFACTOR_EVERY {
                self.refactor();
                self.compute_duals();
                self.compute_primal();
            }
            let tol = self.dual_tol.max(1e-9);
            let mut q = usize::MAX;
            let mut best = 0.0;
            let mut dir = 0.0;
            for j in 0..self.ncols() {
                if self.stat[j] == VStat::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let d = self.dj[j];
                let (viol, dj_dir) = match self.stat[j] {
                    VStat::Lower if d < -tol => (-d, 1.0),
                    VStat::Upper if d > tol => (d, -1.0),
                    VStat::Zero if d.abs() > tol => (d.abs(), -d.signum()),
                    _ => continue,
                };
                let better = if self.bland { q == usize::MAX } else { viol > best };
                if better {
                    best = viol;
                    q = j;
                    dir = dj_dir;
                }
            }
            if q == usize::MAX {
                return LpStatus::Optimal;
            }
            self.ftran_col(q);
            // Harris two-pass on basic bounds.
            let ftol = self.feas_tol;
            let mut tmax = f64::INFINITY;
            for i in 0..m {
                let rate = -dir * self.col[i];
                let b = self.head[i];
                if rate < -PIVOT_TOL && self.lo[b].is_finite() {
                    tmax = tmax.min((self.x[b] - self.lo[b] + ftol) / -rate);
                } else if rate > PIVOT_TOL && self.up[b].is_finite() {
                    tmax = tmax.min((self.up[b] - self.x[b] + ftol) / rate);
                }
            }
            let mut r = usize::MAX;
            let mut ra = 0.0;
            let mut t_r = 0.0;
            for i in 0..m {
                let rate = -dir * self.col[i];
                let b = self.head[i];
                let t = if rate < -PIVOT_TOL && self.lo[b].is_finite() {
                    (self.x[b] - self.lo[b]) / -rate
                } else if rate > PIVOT_TOL && self.up[b].is_finite() {
                    (self.up[b] - self.x[b]) / rate
                } else {
                    continue;
                };
                let pick = if self.bland { t <= tmax && (r == usize::MAX || b < self.head[r]) } else { t <= tmax && rate.abs() > ra };
                if pick {
                    r = i;
                    ra = rate.abs();
                    t_r = t.max(0.0);
                }
            }
            let range = self.up[q] - self.lo[q];
            let flip = range.is_finite() && (r == usize::MAX || range <= t_r) && self.stat[q] != VStat::Zero;
            if flip {
                let t = range;
                for i in 0..m {
                    let c = self.col[i];
                    if c != 0.0 {
                        self.x[self.head[i]] -= dir * t * c;
                    }
                }
                self.stat[q] = if self.stat[q] == VStat::Lower { VStat::Upper } else { VStat::Lower };
                self.x[q] = self.nb_value(q);
                self.iterations += 1;
                continue;
            }
            if r == usize::MAX {
                return LpStatus::Unbounded;
            }
            let p = self.head[r];
            let rate = -dir * self.col[r];
            let leave = if rate < 0.0 { VStat::Lower } else { VStat::Upper };
            for i in 0..m {
                let c = self.col[i];
                if c != 0.0 {
                    self.x[self.head[i]] -= dir * t_r * c;
                }
            }
            self.x[q] += dir * t_r;
            self.x[p] = if leave == VStat::Lower { self.lo[p] } else { self.up[p] };
            self.compute_pivot_row(r);
            let aq = self.alpha[q];
            if aq.abs() < PIVOT_TOL {
                self.refresh();
                continue;
            }
            let theta_d = self.dj[q] / aq;
            for j in 0..self.ncols() {
                if self.stat[j] != VStat::Basic && self.alpha[j] != 0.0 {
                    self.dj[j] -= theta_d * self.alpha[j];
                }
            }
            self.dj[p] = -theta_d;
            self.dj[q] = 0.0;
            self.pivot(r, q, leave);
            let obj = self.objective();
            if obj < last_obj - 1e-12 * (1.0 + obj.abs()) {
                last_obj = obj;
                stall = 0;
                self.bland = false;
            } else {
                stall += 1;
                if stall > 200 {
                    self.bland = true;
                }
            }
        }
    }

    /// Solve from the current basis after bound changes.
    pub fn solve(&mut self, iter_limit: usize, deadline: Option<Instant>) -> LpStatus {
        self.ray = false;
        let n = self.ncols();
        for j in 0..n {
            if self.lo[j] > self.up[j] + self.feas_tol {
                return LpStatus::Infeasible;
            }
        }
        let limit = self.iterations.saturating_add(iter_limit);
        self.bland = false;
        self.place_nonbasic();
        self.compute_primal();
        for _round in 0..6 {
            match self.dual_loop(limit, deadline) {
                LpStatus::Optimal => {}
                other => return other,
            }
            if self.max_dual_infeasibility() > 1e-7 {
                match self.primal_loop(limit, deadline) {
                    LpStatus::Optimal => {}
                    other => return other,
                }
            }
            // Verify from recomputed values; refactor first unless the eta
            // file is still short.
            if self.eta.len() - self.base_etas >= VERIFY_REFACTOR {
                self.refactor();
            }
            self.compute_duals();
            self.compute_primal();
            let primal_ok = (0..self.data.m).all(|i| self.primal_infeasibility(self.head[i]) == 0.0);
            let dual_ok = self.max_dual_infeasibility() <= 1e-7;
            if primal_ok && dual_ok {
                return self.check_artificial();
            }
            if !dual_ok {
                self.place_nonbasic();
                self.compute_primal();
            }
        }
        LpStatus::IterLimit
    }

    fn check_artificial(&self) -> LpStatus {
        for j in 0..self.ncols() {
            let at_art = match self.stat[j] {
                VStat::Lower => !self.lo[j].is_finite(),
                VStat::Upper => !self.up[j].is_finite(),
                _ => false,
            };
            if at_art && self.dj[j].abs() > 1e-9 {
                return LpStatus::Unbounded;
            }
        }
        LpStatus::Optimal
    }
}
