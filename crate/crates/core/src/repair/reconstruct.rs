//! Turn the slack and window variables of a relaxed solve into an explicit
//! formula without relaxation artifacts.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::RepairError;
use crate::encode::{EncodedProblem, ExtensionKind, RepairDecision};
use crate::stl::{Atom, Formula, FormulaKind, Interval, NodeId};

/// Slack below this is solver noise, not a relaxation.
const SLACK_TOL: f64 = 1e-9;

/// Round `s` up to the next multiple of 1e-6, treating values within a
/// thousandth of a grid step above a grid point as on it.
pub fn round_up_micro(s: f64) -> f64 {
    ((s * 1e6 - 1e-3).ceil() / 1e6).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ChangeKind {
    /// Threshold of an affine atom, or of one face of a region, moved by
    /// `loosened_by` (the largest slack used, rounded up).
    Threshold { face: Option<usize>, slack: f64, loosened_by: f64 },
    Window { from: Interval, to: Interval },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Change {
    pub node: NodeId,
    #[serde(flatten)]
    pub kind: ChangeKind,
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    /// Repaired formula. Untouched nodes keep their ids; nodes created by
    /// expanding a loosened region get fresh ids.
    pub formula: Formula,
    pub changes: Vec<Change>,
}

fn interval_of(f: &Formula) -> Option<Interval> {
    match f.kind() {
        FormulaKind::Globally(iv, _) | FormulaKind::Eventually(iv, _) | FormulaKind::Until(iv, _, _) => Some(*iv),
        _ => None,
    }
}

pub(crate) fn set_interval(f: &mut Formula, new: Interval) {
    match f.kind_mut() {
        FormulaKind::Globally(iv, _) | FormulaKind::Eventually(iv, _) | FormulaKind::Until(iv, _, _) => *iv = new,
        _ => unreachable!("window change on a non-temporal node"),
    }
}

/// Explicit repaired formula from a relaxed solution `x` of `encoded`,
/// which was built from `f` with `decisions`.
///
/// A loosened affine atom keeps its node; a region reference with a
/// loosened face becomes the conjunction (or, when negated, disjunction) of
/// its face predicates. Eventually and until windows grow by the largest
/// extension used; always windows end at the last step enforced at every
/// evaluation time.
pub fn reconstruct_spec(
    f: &Formula,
    x: &[f64],
    decisions: &BTreeMap<NodeId, RepairDecision>,
    encoded: &EncodedProblem,
) -> Result<Reconstruction, RepairError> {
    let mut out = f.clone();
    let mut next_id = f.max_id() + 1;
    let mut changes = Vec::new();
    for (&node, &decision) in decisions {
        let original = f.find(node).ok_or(RepairError::UnknownNode(node))?;
        match decision {
            RepairDecision::Fixed => {}
            RepairDecision::PredicateRelax => {
                let mut used: BTreeMap<Option<usize>, f64> = BTreeMap::new();
                for s in encoded.slacks.iter().filter(|s| s.node == node) {
                    let v = used.entry(s.face).or_insert(0.0);
                    *v = v.max(x[s.var]);
                }
                used.retain(|_, v| *v > SLACK_TOL);
                if used.is_empty() {
                    continue;
                }
                let target = out.find_mut(node).expect("node present in the copy");
                match original.kind() {
                    FormulaKind::Atom(Atom::Predicate(p)) => {
                        let loosen = round_up_micro(used[&None]);
                        let mut p = p.clone();
                        p.offset += loosen;
                        *target = Formula::predicate(p).with_id(node);
                        changes.push(Change {
                            node,
                            kind: ChangeKind::Threshold { face: None, slack: used[&None], loosened_by: loosen },
                        });
                    }
                    FormulaKind::Atom(Atom::Region(r)) => {
                        let mut faces = Vec::with_capacity(r.region.num_faces());
                        for face in 0..r.region.num_faces() {
                            let mut p = r.region.face_predicate(face);
                            if r.negated {
                                p = p.strict_negation(encoded.eps_strict);
                            }
                            if let Some(&s) = used.get(&Some(face)) {
                                let loosen = round_up_micro(s);
                                p.offset += loosen;
                                changes.push(Change {
                                    node,
                                    kind: ChangeKind::Threshold { face: Some(face), slack: s, loosened_by: loosen },
                                });
                            }
                            faces.push(Formula::predicate(p).with_id(next_id));
                            next_id += 1;
                        }
                        let joined = if r.negated { Formula::or(faces) } else { Formula::and(faces) };
                        *target = joined.with_id(node);
                    }
                    _ => return Err(RepairError::InadmissibleDecision { node, decision }),
                }
            }
            RepairDecision::TemporalRelax => {
                let iv = interval_of(original).ok_or(RepairError::InadmissibleDecision { node, decision })?;
                let used: Vec<_> = encoded.active_extensions(x).into_iter().filter(|e| e.node == node).collect();
                if used.is_empty() {
                    continue;
                }
                let new_b = match original.kind() {
                    FormulaKind::Globally(..) => {
                        // per evaluation step, the earliest released step
                        let mut first: BTreeMap<usize, usize> = BTreeMap::new();
                        for e in used.iter().filter(|e| e.kind == ExtensionKind::Release) {
                            let v = first.entry(e.k).or_insert(e.step);
                            *v = (*v).min(e.step);
                        }
                        first.iter().map(|(&k, &j)| j - 1 - k).min().unwrap_or(iv.b)
                    }
                    _ => iv.b + used.iter().map(|e| e.step - e.k - iv.b).max().unwrap_or(0),
                };
                if new_b == iv.b {
                    continue;
                }
                let to = Interval { a: iv.a, b: new_b };
                set_interval(out.find_mut(node).expect("node present in the copy"), to);
                changes.push(Change {
                    node,
                    kind: ChangeKind::Window { from: iv, to },
                });
            }
        }
    }
    if changes.is_empty() {
        return Err(RepairError::NoRelaxationUsed);
    }
    Ok(Reconstruction { formula: out, changes })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_rounding() {
        assert_eq!(round_up_micro(0.37), 0.37);
        assert_eq!(round_up_micro(0.3700004), 0.370001);
        assert_eq!(round_up_micro(2e-7), 1e-6);
        assert_eq!(round_up_micro(0.0), 0.0);
    }
}
