//! Deletion filter over removable rows.

use std::collections::BTreeMap;

use super::{find_feasible, SolveStatus, SolverError, SolverParams};
use crate::milp::{ConstraintId, MilpProblem};

/// Above this many removable rows, coarse groups are tried before the
/// final single-row pass.
const GROUP_THRESHOLD: usize = 64;

enum Verdict {
    Feasible,
    Infeasible,
}

fn check(p: &MilpProblem, params: &SolverParams, mask: &[bool]) -> Result<Verdict, SolverError> {
    let r = find_feasible(p, params, Some(mask));
    match r.status {
        SolveStatus::Optimal => Ok(Verdict::Feasible),
        SolveStatus::Infeasible => Ok(Verdict::Infeasible),
        // An unbounded relaxation still has feasible points.
        SolveStatus::Unbounded => Ok(Verdict::Feasible),
        _ if r.has_incumbent() => Ok(Verdict::Feasible),
        _ => Err(SolverError::TimeLimit),
    }
}

/// Drop `group` from `mask` if the rest stays infeasible.
fn try_drop(p: &MilpProblem, params: &SolverParams, mask: &mut [bool], group: &[ConstraintId]) -> Result<(), SolverError> {
    if group.iter().all(|&c| !mask[c]) {
        return Ok(());
    }
    for &c in group {
        mask[c] = false;
    }
    if let Verdict::Feasible = check(p, params, mask)? {
        for &c in group {
            mask[c] = true;
        }
    }
    Ok(())
}

/// Irreducible infeasible subset of the removable rows of an infeasible
/// problem, relative to the non-removable core.
///
/// Rows are deleted in ascending id order. Large problems first try to
/// delete whole groups (all rows of one formula node, then of one node,
/// kind and face) so the final single-row pass only sees a small set; the
/// result is irreducible either way.
pub fn extract_iis(p: &MilpProblem, params: &SolverParams) -> Result<Vec<ConstraintId>, SolverError> {
    params.validate()?;
    let mut mask = vec![true; p.constraints.len()];
    if let Verdict::Feasible = check(p, params, &mask)? {
        return Err(SolverError::NotInfeasible);
    }
    let removable: Vec<ConstraintId> = p.constraints.iter().filter(|c| c.is_removable()).map(|c| c.id).collect();

    if removable.len() > GROUP_THRESHOLD {
        let mut by_node: BTreeMap<Option<usize>, Vec<ConstraintId>> = BTreeMap::new();
        let mut by_face: BTreeMap<(Option<usize>, u8, Option<usize>), Vec<ConstraintId>> = BTreeMap::new();
        for &c in &removable {
            let t = p.constraints[c].trace.as_ref().expect("removable rows are traced");
            by_node.entry(t.node).or_default().push(c);
            by_face.entry((t.node, t.kind as u8, t.face)).or_default().push(c);
        }
        let mut groups: Vec<Vec<ConstraintId>> = by_node.into_values().collect();
        groups.sort_by_key(|g| g[0]);
        for g in &groups {
            try_drop(p, params, &mut mask, g)?;
        }
        let mut groups: Vec<Vec<ConstraintId>> = by_face.into_values().collect();
        groups.sort_by_key(|g| g[0]);
        for g in &groups {
            try_drop(p, params, &mut mask, g)?;
        }
    }
    for &c in &removable {
        try_drop(p, params, &mut mask, &[c])?;
    }
    Ok(removable.into_iter().filter(|&c| mask[c]).collect())
}
