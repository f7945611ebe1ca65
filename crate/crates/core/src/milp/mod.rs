//! Solver-independent mixed-integer linear programs whose rows can carry a
//! record of the formula node and time step that produced them.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::NodeId;

pub type VarId = usize;
pub type ConstraintId = usize;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum MilpError {
    #[error("DuplicateId: label `{0}` already declared")]
    DuplicateId(String),
    #[error("UnknownVar: {0}")]
    UnknownVar(VarId),
    #[error("constraint has no nonzero coefficient")]
    EmptyExpression,
    #[error("variable `{label}` has bounds [{lower}, {upper}]")]
    InvalidBounds { label: String, lower: f64, upper: f64 },
    #[error("non-finite coefficient or right-hand side")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDef {
    pub id: VarId,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    pub label: String,
}

/// Sparse linear form with terms sorted by variable id, merged, and free of
/// zero coefficients.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LinExpr {
    terms: Vec<(VarId, f64)>,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Self {
        let mut t: Vec<(VarId, f64)> = terms.into_iter().collect();
        t.sort_by_key(|(v, _)| *v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(t.len());
        for (v, c) in t {
            match merged.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        LinExpr { terms: merged }
    }

    pub fn term(mut self, v: VarId, c: f64) -> Self {
        self.add(v, c);
        self
    }

    pub fn add(&mut self, v: VarId, c: f64) {
        match self.terms.binary_search_by_key(&v, |(id, _)| *id) {
            Ok(i) => {
                self.terms[i].1 += c;
                if self.terms[i].1 == 0.0 {
                    self.terms.remove(i);
                }
            }
            Err(i) if c != 0.0 => self.terms.insert(i, (v, c)),
            Err(_) => {}
        }
    }

    pub fn terms(&self) -> &[(VarId, f64)] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coef(&self, v: VarId) -> f64 {
        self.terms
            .binary_search_by_key(&v, |(id, _)| *id)
            .map(|i| self.terms[i].1)
            .unwrap_or(0.0)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[*v]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Sense {
    pub fn symbol(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConstraintKind {
    PredicateLb,
    PredicateUb,
    AndLink,
    OrLink,
    Root,
    Dynamics,
    Bound,
    SlackLink,
}

impl ConstraintKind {
    /// Rows describing physics or variable domains; never reported in an IIS.
    pub fn is_core(self) -> bool {
        matches!(self, ConstraintKind::Dynamics | ConstraintKind::Bound)
    }
}

/// Link from a row back to the formula node and time step that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub node: Option<NodeId>,
    pub k: usize,
    pub kind: ConstraintKind,
    pub removable: bool,
    /// Box face index for rows generated from a region reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face: Option<usize>,
}

impl TraceRecord {
    pub fn stl(node: NodeId, k: usize, kind: ConstraintKind) -> Self {
        TraceRecord {
            node: Some(node),
            k,
            kind,
            removable: !kind.is_core(),
            face: None,
        }
    }

    pub fn core(k: usize, kind: ConstraintKind) -> Self {
        TraceRecord {
            node: None,
            k,
            kind,
            removable: false,
            face: None,
        }
    }

    pub fn with_face(mut self, face: Option<usize>) -> Self {
        self.face = face;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinConstraint {
    pub id: ConstraintId,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
    pub trace: Option<TraceRecord>,
}

impl LinConstraint {
    pub fn is_removable(&self) -> bool {
        self.trace.as_ref().is_some_and(|t| t.removable)
    }

    /// Amount by which `x` violates the row, zero when satisfied.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.expr.eval(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }

    pub fn row_norm(&self) -> f64 {
        self.expr.terms().iter().fold(0.0f64, |m, (_, c)| m.max(c.abs()))
    }
}

/// Minimize `objective . x + objective_offset` over the declared rows and bounds.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MilpProblem {
    pub vars: Vec<VarDef>,
    pub constraints: Vec<LinConstraint>,
    pub objective: LinExpr,
    #[serde(skip)]
    labels: HashMap<String, VarId>,
}

impl MilpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind, lower: f64, upper: f64, label: impl Into<String>) -> Result<VarId, MilpError> {
        let label = label.into();
        if self.labels.contains_key(&label) {
            return Err(MilpError::DuplicateId(label));
        }
        let bad = lower.is_nan()
            || upper.is_nan()
            || lower > upper
            || lower == f64::INFINITY
            || upper == f64::NEG_INFINITY
            || (kind == VarKind::Binary && (lower < 0.0 || upper > 1.0));
        if bad {
            return Err(MilpError::InvalidBounds { label, lower, upper });
        }
        let id = self.vars.len();
        self.labels.insert(label.clone(), id);
        self.vars.push(VarDef {
            id,
            kind,
            lower,
            upper,
            label,
        });
        Ok(id)
    }

    pub fn continuous(&mut self, lower: f64, upper: f64, label: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_var(VarKind::Continuous, lower, upper, label)
    }

    pub fn binary(&mut self, label: impl Into<String>) -> Result<VarId, MilpError> {
        self.add_var(VarKind::Binary, 0.0, 1.0, label)
    }

    fn check_expr(&self, expr: &LinExpr) -> Result<(), MilpError> {
        for (v, c) in expr.terms() {
            if *v >= self.vars.len() {
                return Err(MilpError::UnknownVar(*v));
            }
            if !c.is_finite() {
                return Err(MilpError::NonFinite);
            }
        }
        Ok(())
    }

    pub fn add_constraint(
        &mut self,
        expr: LinExpr,
        sense: Sense,
        rhs: f64,
        trace: Option<TraceRecord>,
    ) -> Result<ConstraintId, MilpError> {
        self.check_expr(&expr)?;
        if expr.is_empty() {
            return Err(MilpError::EmptyExpression);
        }
        if !rhs.is_finite() {
            return Err(MilpError::NonFinite);
        }
        let id = self.constraints.len();
        self.constraints.push(LinConstraint {
            id,
            expr,
            sense,
            rhs,
            trace,
        });
        Ok(id)
    }

    pub fn set_objective(&mut self, expr: LinExpr) -> Result<(), MilpError> {
        self.check_expr(&expr)?;
        self.objective = expr;
        Ok(())
    }

    pub fn var_by_label(&self, label: &str) -> Option<VarId> {
        self.labels.get(label).copied()
    }

    pub fn num_binaries(&self) -> usize {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.vars.iter().filter(|v| v.kind == VarKind::Binary).map(|v| v.id).collect()
    }

    /// Same problem with every binary replaced by a continuous `[0, 1]` variable.
    pub fn lp_relaxation(&self) -> MilpProblem {
        let mut p = self.clone();
        for v in &mut p.vars {
            v.kind = VarKind::Continuous;
        }
        p
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest row violation scaled by the row's max coefficient, and largest
    /// bound violation, over all constraints in `rows` (all when `None`).
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(x) / c.row_norm().max(1.0))
            .fold(0.0f64, f64::max);
        let bounds = self
            .vars
            .iter()
            .map(|v| (v.lower - x[v.id]).max(x[v.id] - v.upper).max(0.0))
            .fold(0.0f64, f64::max);
        rows.max(bounds)
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.max_violation(x) <= tol
    }

    /// `{constraint id: {node, k, kind}}` for every traced row.
    pub fn trace_map_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for c in &self.constraints {
            if let Some(t) = &c.trace {
                let mut rec = serde_json::json!({ "node": t.node, "k": t.k, "kind": t.kind });
                if let Some(face) = t.face {
                    rec["face"] = face.into();
                }
                map.insert(c.id.to_string(), rec);
            }
        }
        serde_json::Value::Object(map)
    }

    /// CPLEX LP text. Variables are named `x<id>`; labels appear as comments.
    pub fn to_lp_string(&self) -> String {
        fn expr_text(e: &LinExpr) -> String {
            if e.is_empty() {
                return "0 x0".into();
            }
            let mut s = String::new();
            for (i, (v, c)) in e.terms().iter().enumerate() {
                let sign = if *c < 0.0 { "-" } else { "+" };
                if i == 0 && *c >= 0.0 {
                    let _ = write!(s, "{} x{v}", c.abs());
                } else {
                    let _ = write!(s, " {sign} {} x{v}", c.abs());
                }
            }
            s.trim_start().to_string()
        }
        let mut out = String::new();
        for v in &self.vars {
            let _ = writeln!(out, "\\ x{} = {}", v.id, v.label);
        }
        let _ = writeln!(out, "Minimize\n obj: {}", expr_text(&self.objective));
        out.push_str("Subject To\n");
        for c in &self.constraints {
            let _ = writeln!(out, " c{}: {} {} {}", c.id, expr_text(&c.expr), c.sense.symbol(), c.rhs);
        }
        out.push_str("Bounds\n");
        for v in &self.vars {
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (true, true) => {
                    let _ = writeln!(out, " {} <= x{} <= {}", v.lower, v.id, v.upper);
                }
                (true, false) => {
                    let _ = writeln!(out, " x{} >= {}", v.id, v.lower);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= x{} <= {}", v.id, v.upper);
                }
                (false, false) => {
                    let _ = writeln!(out, " x{} free", v.id);
                }
            }
        }
        let bins = self.binaries();
        if !bins.is_empty() {
            out.push_str("Binaries\n");
            for b in bins {
                let _ = writeln!(out, " x{b}");
            }
        }
        out.push_str("End\n");
        out
    }
}
