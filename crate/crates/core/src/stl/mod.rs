//! Signal temporal logic: syntax tree, text grammar, canonical printing,
//! negation normal form and discrete-time semantics.
//!
//! Text grammar, loosest binding first:
//!
//! ```text
//! formula := and ("|" and)*
//! and     := until ("&" until)*
//! until   := prefix ("U[a,b]" until)?
//! prefix  := "!" prefix | "G[a,b]" prefix | "F[a,b]" prefix | primary
//! primary := "true" | IDENT | "{" affine "}" | "(" formula ")"
//! affine  := ["-"] term (("+"|"-") term)* (">="|"<=") ["-"] number
//! term    := number "*" VAR | VAR        VAR in px py pz vx vy vz
//! ```

mod ast;
mod nnf;
mod parse;
mod print;
mod semantics;

pub use ast::{Atom, AtomicPredicate, Formula, FormulaKind, Interval, NodeId, RegionAtom, EPS_STRICT};
pub use nnf::to_nnf;
pub use parse::{lex, parse_stl, tokenize, Spanned, Tok};
pub use print::{canonicalize, fmt_num, print_canonical, print_predicate};
pub use semantics::{eval_boolean, eval_robustness};

use thiserror::Error;

use crate::world::RegionTable;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StlError {
    #[error("SyntaxError at byte {pos}: expected {expected}, found `{found}`")]
    Syntax { pos: usize, expected: String, found: String },
    #[error("UnknownRegion: `{0}`")]
    UnknownRegion(String),
    #[error("BadInterval: [{a},{b}]")]
    BadInterval { a: i64, b: i64 },
    #[error("UnsupportedNegation: negation over node {0} has no normal form")]
    UnsupportedNegation(NodeId),
    #[error("HorizonExceeded: node {node} needs step {step}")]
    HorizonExceeded { node: NodeId, step: usize },
    #[error("state has {found} entries, predicate expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("InvalidReference: {0}")]
    InvalidReference(String),
}

/// Canonical-text equality. An unparseable hypothesis is a mismatch; an
/// unparseable reference is an error.
pub fn exact_match(hypothesis: &str, reference: &str, table: &RegionTable) -> Result<bool, StlError> {
    let reference = parse_stl(reference, table).map_err(|e| StlError::InvalidReference(e.to_string()))?;
    Ok(match parse_stl(hypothesis, table) {
        Ok(h) => print_canonical(&h) == print_canonical(&reference),
        Err(_) => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_cases() {
        let t = RegionTable::symbolic(2, ["a", "b"]);
        assert!(exact_match("F[0,5] a & G[0,9] b", "G[0,9] b & F[0,5] a", &t).unwrap());
        assert!(!exact_match("F[0,5] a", "F[0,6] a", &t).unwrap());
        assert!(!exact_match("F[0,5", "a", &t).unwrap());
        assert!(matches!(exact_match("a", "F[0,5", &t), Err(StlError::InvalidReference(_))));
    }
}
