use super::ast::{Atom, Formula, FormulaKind, RegionAtom, EPS_STRICT};
use super::StlError;

/// Push negations onto atoms. Negated affine atoms become their strict
/// complement; negated regions flip polarity. Ids are reassigned in preorder.
pub fn to_nnf(f: &Formula) -> Result<Formula, StlError> {
    Ok(pos(f)?.renumbered())
}

fn pos(f: &Formula) -> Result<Formula, StlError> {
    Ok(match f.kind() {
        FormulaKind::True | FormulaKind::Atom(_) => f.clone(),
        FormulaKind::Not(c) => neg(c)?,
        FormulaKind::And(cs) => Formula::and(cs.iter().map(pos).collect::<Result<_, _>>()?),
        FormulaKind::Or(cs) => Formula::or(cs.iter().map(pos).collect::<Result<_, _>>()?),
        FormulaKind::Globally(iv, c) => Formula::globally(*iv, pos(c)?),
        FormulaKind::Eventually(iv, c) => Formula::eventually(*iv, pos(c)?),
        FormulaKind::Until(iv, l, r) => Formula::until(*iv, pos(l)?, pos(r)?),
    })
}

fn neg(f: &Formula) -> Result<Formula, StlError> {
    Ok(match f.kind() {
        FormulaKind::True => return Err(StlError::UnsupportedNegation(f.id())),
        FormulaKind::Atom(Atom::Predicate(p)) => Formula::predicate(p.strict_negation(EPS_STRICT)),
        FormulaKind::Atom(Atom::Region(r)) => Formula::new(FormulaKind::Atom(Atom::Region(RegionAtom {
            region: r.region.clone(),
            negated: !r.negated,
        }))),
        FormulaKind::Not(c) => pos(c)?,
        FormulaKind::And(cs) => Formula::or(cs.iter().map(neg).collect::<Result<_, _>>()?),
        FormulaKind::Or(cs) => Formula::and(cs.iter().map(neg).collect::<Result<_, _>>()?),
        FormulaKind::Globally(iv, c) => Formula::eventually(*iv, neg(c)?),
        FormulaKind::Eventually(iv, c) => Formula::globally(*iv, neg(c)?),
        FormulaKind::Until(..) => return Err(StlError::UnsupportedNegation(f.id())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::{parse_stl, print_canonical};
    use crate::world::RegionTable;

    fn t() -> RegionTable {
        RegionTable::symbolic(1, ["p", "q"])
    }

    fn nnf_text(s: &str) -> Result<String, StlError> {
        to_nnf(&parse_stl(s, &t()).unwrap()).map(|f| print_canonical(&f))
    }

    #[test]
    fn dualities() {
        assert_eq!(nnf_text("!G[0,4] p").unwrap(), "F[0,4] !p");
        assert_eq!(nnf_text("!!p").unwrap(), "p");
        assert_eq!(nnf_text("!(p & F[1,2] q)").unwrap(), "!p | G[1,2] !q");
        assert_eq!(nnf_text("!{px >= 2}").unwrap(), "{-px >= -1.999999}");
    }

    #[test]
    fn negated_until_rejected() {
        assert_eq!(nnf_text("!(p U[0,3] q)"), Err(StlError::UnsupportedNegation(1)));
    }

    #[test]
    fn output_has_no_not_nodes() {
        let f = to_nnf(&parse_stl("!(!(p | !q) & G[0,1] !{px >= 1})", &t()).unwrap()).unwrap();
        assert!(f.is_nnf());
        assert!(f.has_unique_ids());
    }
}
