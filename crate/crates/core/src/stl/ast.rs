use std::fmt;

use serde::{Deserialize, Serialize};

use super::StlError;
use crate::world::Region;

/// Preorder index of a node inside its formula.
pub type NodeId = usize;

/// Margin used to turn `!(g >= 0)` into the closed constraint `-g >= eps`.
pub const EPS_STRICT: f64 = 1e-6;

/// Closed window `[a, b]` in whole time steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub a: usize,
    pub b: usize,
}

impl Interval {
    pub fn new(a: usize, b: usize) -> Result<Self, StlError> {
        if a > b {
            return Err(StlError::BadInterval { a: a as i64, b: b as i64 });
        }
        Ok(Interval { a, b })
    }

    pub fn len(&self) -> usize {
        self.b - self.a + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.a, self.b)
    }
}

/// `g(x) = coefficients . x + offset`, satisfied when `g(x) >= 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicPredicate {
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

impl AtomicPredicate {
    pub fn new(coefficients: Vec<f64>, offset: f64) -> Self {
        AtomicPredicate { coefficients, offset }
    }

    pub fn eval(&self, state: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(state)
            .fold(self.offset, |acc, (c, x)| acc + c * x)
    }

    /// `-g - eps >= 0`, the closed complement of `g >= 0` shrunk by `eps`.
    pub fn strict_negation(&self, eps: f64) -> Self {
        AtomicPredicate {
            coefficients: self.coefficients.iter().map(|c| -c).collect(),
            offset: -self.offset - eps,
        }
    }

    pub fn shifted(&self, delta: f64) -> Self {
        AtomicPredicate {
            coefficients: self.coefficients.clone(),
            offset: self.offset + delta,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coefficients.iter().all(|c| *c == 0.0)
    }
}

/// Reference to a named box. A negated reference means "outside the box".
#[derive(Debug, Clone, PartialEq)]
pub struct RegionAtom {
    pub region: Region,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Atom {
    Predicate(AtomicPredicate),
    Region(RegionAtom),
}

#[derive(Debug, Clone, PartialEq)]
pub enum FormulaKind {
    True,
    Atom(Atom),
    Not(Box<Formula>),
    And(Vec<Formula>),
    Or(Vec<Formula>),
    Globally(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

/// STL syntax tree node. Equality ignores node ids.
#[derive(Debug, Clone)]
pub struct Formula {
    id: NodeId,
    kind: FormulaKind,
}

impl PartialEq for Formula {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Formula {
    pub fn new(kind: FormulaKind) -> Self {
        Formula { id: 0, kind }
    }

    pub fn tt() -> Self {
        Self::new(FormulaKind::True)
    }

    pub fn predicate(p: AtomicPredicate) -> Self {
        Self::new(FormulaKind::Atom(Atom::Predicate(p)))
    }

    pub fn region(region: Region) -> Self {
        Self::new(FormulaKind::Atom(Atom::Region(RegionAtom { region, negated: false })))
    }

    pub fn outside(region: Region) -> Self {
        Self::new(FormulaKind::Atom(Atom::Region(RegionAtom { region, negated: true })))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(f: Formula) -> Self {
        Self::new(FormulaKind::Not(Box::new(f)))
    }

    /// Flattening conjunction; one child collapses to itself, none to `true`.
    pub fn and(children: Vec<Formula>) -> Self {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c.kind {
                FormulaKind::And(inner) => flat.extend(inner),
                kind => flat.push(Formula { id: c.id, kind }),
            }
        }
        match flat.len() {
            0 => Self::tt(),
            1 => flat.pop().unwrap(),
            _ => Self::new(FormulaKind::And(flat)),
        }
    }

    /// Flattening disjunction; one child collapses to itself.
    ///
    /// # Panics
    /// On an empty child list, which has no representation in the grammar.
    pub fn or(children: Vec<Formula>) -> Self {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c.kind {
                FormulaKind::Or(inner) => flat.extend(inner),
                kind => flat.push(Formula { id: c.id, kind }),
            }
        }
        match flat.len() {
            0 => panic!("empty disjunction"),
            1 => flat.pop().unwrap(),
            _ => Self::new(FormulaKind::Or(flat)),
        }
    }

    pub fn globally(iv: Interval, f: Formula) -> Self {
        Self::new(FormulaKind::Globally(iv, Box::new(f)))
    }

    pub fn eventually(iv: Interval, f: Formula) -> Self {
        Self::new(FormulaKind::Eventually(iv, Box::new(f)))
    }

    pub fn until(iv: Interval, lhs: Formula, rhs: Formula) -> Self {
        Self::new(FormulaKind::Until(iv, Box::new(lhs), Box::new(rhs)))
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn with_id(mut self, id: NodeId) -> Self {
        self.id = id;
        self
    }

    /// Largest node id in the tree.
    pub fn max_id(&self) -> NodeId {
        self.preorder().iter().map(|f| f.id).max().unwrap_or(0)
    }

    pub fn kind(&self) -> &FormulaKind {
        &self.kind
    }

    pub fn kind_mut(&mut self) -> &mut FormulaKind {
        &mut self.kind
    }

    pub fn into_kind(self) -> FormulaKind {
        self.kind
    }

    pub fn children(&self) -> Vec<&Formula> {
        match &self.kind {
            FormulaKind::True | FormulaKind::Atom(_) => vec![],
            FormulaKind::Not(c) | FormulaKind::Globally(_, c) | FormulaKind::Eventually(_, c) => vec![c],
            FormulaKind::And(cs) | FormulaKind::Or(cs) => cs.iter().collect(),
            FormulaKind::Until(_, l, r) => vec![l, r],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Formula> {
        match &mut self.kind {
            FormulaKind::True | FormulaKind::Atom(_) => vec![],
            FormulaKind::Not(c) | FormulaKind::Globally(_, c) | FormulaKind::Eventually(_, c) => vec![c],
            FormulaKind::And(cs) | FormulaKind::Or(cs) => cs.iter_mut().collect(),
            FormulaKind::Until(_, l, r) => vec![l, r],
        }
    }

    /// Reassign ids in preorder starting from 0.
    pub fn renumbered(mut self) -> Self {
        fn go(f: &mut Formula, next: &mut NodeId) {
            f.id = *next;
            *next += 1;
            for c in f.children_mut() {
                go(c, next);
            }
        }
        let mut next = 0;
        go(&mut self, &mut next);
        self
    }

    pub fn preorder(&self) -> Vec<&Formula> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            out.push(f);
            let cs = f.children();
            stack.extend(cs.into_iter().rev());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.preorder().len()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn find(&self, id: NodeId) -> Option<&Formula> {
        self.preorder().into_iter().find(|f| f.id == id)
    }

    pub fn find_mut(&mut self, id: NodeId) -> Option<&mut Formula> {
        if self.id == id {
            return Some(self);
        }
        for c in self.children_mut() {
            if let Some(hit) = c.find_mut(id) {
                return Some(hit);
            }
        }
        None
    }

    /// Nodes from the root down to `id`, inclusive; empty if absent.
    pub fn path_to(&self, id: NodeId) -> Vec<&Formula> {
        fn go<'a>(f: &'a Formula, id: NodeId, path: &mut Vec<&'a Formula>) -> bool {
            path.push(f);
            if f.id == id {
                return true;
            }
            for c in f.children() {
                if go(c, id, path) {
                    return true;
                }
            }
            path.pop();
            false
        }
        let mut path = Vec::new();
        go(self, id, &mut path);
        path
    }

    pub fn has_unique_ids(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.preorder().iter().all(|f| seen.insert(f.id))
    }

    /// Number of steps past the evaluation time this formula can look at.
    pub fn lookahead(&self) -> usize {
        match &self.kind {
            FormulaKind::True | FormulaKind::Atom(_) => 0,
            FormulaKind::Not(c) => c.lookahead(),
            FormulaKind::And(cs) | FormulaKind::Or(cs) => cs.iter().map(|c| c.lookahead()).max().unwrap_or(0),
            FormulaKind::Globally(iv, c) | FormulaKind::Eventually(iv, c) => iv.b + c.lookahead(),
            FormulaKind::Until(iv, l, r) => iv.b + l.lookahead().max(r.lookahead()),
        }
    }

    /// Negation only sits directly on atoms, and then only as a region's polarity.
    pub fn is_nnf(&self) -> bool {
        self.preorder().iter().all(|f| !matches!(f.kind, FormulaKind::Not(_)))
    }

    /// Atom nodes in preorder.
    pub fn atoms(&self) -> Vec<&Formula> {
        self.preorder()
            .into_iter()
            .filter(|f| matches!(f.kind, FormulaKind::Atom(_)))
            .collect()
    }

    /// Add `delta` to every affine offset and widen every region by `delta`
    /// per face. Positive `delta` loosens non-negated atoms.
    pub fn shift_atoms(&self, delta: f64) -> Formula {
        let mut out = self.clone();
        fn go(f: &mut Formula, delta: f64) {
            if let FormulaKind::Atom(a) = &mut f.kind {
                match a {
                    Atom::Predicate(p) => *p = p.shifted(delta),
                    Atom::Region(r) => {
                        let s = if r.negated { -delta } else { delta };
                        for (lo, hi) in r.region.min.iter_mut().zip(r.region.max.iter_mut()) {
                            *lo -= s;
                            *hi += s;
                        }
                    }
                }
            }
            for c in f.children_mut() {
                go(c, delta);
            }
        }
        go(&mut out, delta);
        out
    }
}
