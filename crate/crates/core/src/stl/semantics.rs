use super::ast::{Atom, Formula, FormulaKind, RegionAtom, EPS_STRICT};
use super::StlError;
use crate::world::Trajectory;

fn state<'a>(f: &Formula, tr: &'a Trajectory, k: usize) -> Result<&'a [f64], StlError> {
    tr.states
        .get(k)
        .map(|s| s.as_slice())
        .ok_or(StlError::HorizonExceeded { node: f.id(), step: k })
}

fn window_end(f: &Formula, tr: &Trajectory, k: usize, b: usize) -> Result<usize, StlError> {
    let end = k + b;
    if end > tr.horizon() {
        return Err(StlError::HorizonExceeded { node: f.id(), step: end });
    }
    Ok(end)
}

fn check_dims(coeffs: usize, s: &[f64]) -> Result<(), StlError> {
    if coeffs != s.len() {
        return Err(StlError::DimensionMismatch {
            expected: coeffs,
            found: s.len(),
        });
    }
    Ok(())
}

/// Robustness of a region reference. Inside: min face margin. Outside:
/// max over faces of the strict complement margin.
fn region_rho(r: &RegionAtom, s: &[f64]) -> Result<f64, StlError> {
    check_dims(2 * r.region.dims(), s)?;
    let faces = 0..r.region.num_faces();
    Ok(if r.negated {
        faces
            .map(|i| -r.region.face_margin(i, s) - EPS_STRICT)
            .fold(f64::NEG_INFINITY, f64::max)
    } else {
        faces.map(|i| r.region.face_margin(i, s)).fold(f64::INFINITY, f64::min)
    })
}

fn region_holds(r: &RegionAtom, s: &[f64]) -> Result<bool, StlError> {
    check_dims(2 * r.region.dims(), s)?;
    let mut faces = 0..r.region.num_faces();
    Ok(if r.negated {
        faces.any(|i| -r.region.face_margin(i, s) - EPS_STRICT >= 0.0)
    } else {
        faces.all(|i| r.region.face_margin(i, s) >= 0.0)
    })
}

/// Boolean satisfaction at step `k`. Any reference past the last state is an
/// error rather than a violation.
pub fn eval_boolean(f: &Formula, tr: &Trajectory, k: usize) -> Result<bool, StlError> {
    match f.kind() {
        FormulaKind::True => Ok(true),
        FormulaKind::Atom(a) => {
            let s = state(f, tr, k)?;
            match a {
                Atom::Predicate(p) => {
                    check_dims(p.coefficients.len(), s)?;
                    Ok(p.eval(s) >= 0.0)
                }
                Atom::Region(r) => region_holds(r, s),
            }
        }
        FormulaKind::Not(c) => Ok(!eval_boolean(c, tr, k)?),
        FormulaKind::And(cs) => {
            let mut all = true;
            for c in cs {
                all &= eval_boolean(c, tr, k)?;
            }
            Ok(all)
        }
        FormulaKind::Or(cs) => {
            let mut any = false;
            for c in cs {
                any |= eval_boolean(c, tr, k)?;
            }
            Ok(any)
        }
        FormulaKind::Globally(iv, c) => {
            let end = window_end(f, tr, k, iv.b)?;
            let mut all = true;
            for j in k + iv.a..=end {
                all &= eval_boolean(c, tr, j)?;
            }
            Ok(all)
        }
        FormulaKind::Eventually(iv, c) => {
            let end = window_end(f, tr, k, iv.b)?;
            let mut any = false;
            for j in k + iv.a..=end {
                any |= eval_boolean(c, tr, j)?;
            }
            Ok(any)
        }
        FormulaKind::Until(iv, l, r) => {
            let end = window_end(f, tr, k, iv.b)?;
            let mut lhs_so_far = true;
            let mut any = false;
            for j in k..=end {
                lhs_so_far &= eval_boolean(l, tr, j)?;
                if j >= k + iv.a {
                    any |= lhs_so_far && eval_boolean(r, tr, j)?;
                }
            }
            Ok(any)
        }
    }
}

/// Quantitative satisfaction margin at step `k`; `true` has margin `+inf`.
pub fn eval_robustness(f: &Formula, tr: &Trajectory, k: usize) -> Result<f64, StlError> {
    match f.kind() {
        FormulaKind::True => Ok(f64::INFINITY),
        FormulaKind::Atom(a) => {
            let s = state(f, tr, k)?;
            match a {
                Atom::Predicate(p) => {
                    check_dims(p.coefficients.len(), s)?;
                    Ok(p.eval(s))
                }
                Atom::Region(r) => region_rho(r, s),
            }
        }
        FormulaKind::Not(c) => Ok(-eval_robustness(c, tr, k)?),
        FormulaKind::And(cs) => cs
            .iter()
            .try_fold(f64::INFINITY, |m, c| Ok(m.min(eval_robustness(c, tr, k)?))),
        FormulaKind::Or(cs) => cs
            .iter()
            .try_fold(f64::NEG_INFINITY, |m, c| Ok(m.max(eval_robustness(c, tr, k)?))),
        FormulaKind::Globally(iv, c) => {
            let end = window_end(f, tr, k, iv.b)?;
            (k + iv.a..=end).try_fold(f64::INFINITY, |m, j| Ok(m.min(eval_robustness(c, tr, j)?)))
        }
        FormulaKind::Eventually(iv, c) => {
            let end = window_end(f, tr, k, iv.b)?;
            (k + iv.a..=end).try_fold(f64::NEG_INFINITY, |m, j| Ok(m.max(eval_robustness(c, tr, j)?)))
        }
        FormulaKind::Until(iv, l, r) => {
            let end = window_end(f, tr, k, iv.b)?;
            let mut lhs_min = f64::INFINITY;
            let mut best = f64::NEG_INFINITY;
            for j in k..=end {
                lhs_min = lhs_min.min(eval_robustness(l, tr, j)?);
                if j >= k + iv.a {
                    best = best.max(eval_robustness(r, tr, j)?.min(lhs_min));
                }
            }
            Ok(best)
        }
    }
}
