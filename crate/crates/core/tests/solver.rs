mod common;

use common::{enumerate_binaries as enumerate, random_problem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlnav_core::milp::{ConstraintKind, LinExpr, MilpProblem, Sense, TraceRecord, VarKind};
use stlnav_core::solver::*;

fn params() -> SolverParams {
    SolverParams::default()
}

fn removable() -> Option<TraceRecord> {
    Some(TraceRecord::stl(0, 0, ConstraintKind::PredicateLb))
}

#[test]
fn lp_lower_bound_is_optimal() {
    let mut p = MilpProblem::new();
    let x = p.continuous(f64::NEG_INFINITY, f64::INFINITY, "x").unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Ge, 1.0, None).unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Le, 4.0, None).unwrap();
    p.set_objective(LinExpr::new().term(x, 1.0)).unwrap();
    let r = solve_lp(&p, &params()).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!((r.x.unwrap()[x] - 1.0).abs() < 1e-9);
}

#[test]
fn lp_infeasible_and_unbounded() {
    let mut p = MilpProblem::new();
    let x = p.continuous(f64::NEG_INFINITY, f64::INFINITY, "x").unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Ge, 1.0, None).unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Le, 0.0, None).unwrap();
    let r = solve_lp(&p, &params()).unwrap();
    assert_eq!(r.status, SolveStatus::Infeasible);
    assert!(r.x.is_none());

    let mut q = MilpProblem::new();
    let x = q.continuous(0.0, f64::INFINITY, "x").unwrap();
    q.set_objective(LinExpr::new().term(x, -1.0)).unwrap();
    assert_eq!(solve_lp(&q, &params()).unwrap().status, SolveStatus::Unbounded);
    // with a row present too
    q.add_constraint(LinExpr::new().term(x, 1.0), Sense::Ge, 2.0, None).unwrap();
    assert_eq!(solve_lp(&q, &params()).unwrap().status, SolveStatus::Unbounded);
}

#[test]
fn lp_rejects_binaries() {
    let mut p = MilpProblem::new();
    p.binary("z").unwrap();
    assert_eq!(solve_lp(&p, &params()), Err(SolverError::HasBinaries));
}

/// Random bounded instance; `bins` binaries followed by `conts` continuous
/// variables in [-3, 3].
#[test]
fn lp_duality_certificate_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut optimal = 0;
    for _ in 0..300 {
        let n = rng.random_range(2..7);
        let m = rng.random_range(1..7);
        let p = random_problem(&mut rng, 0, n, m);
        let r = solve_lp(&p, &params()).unwrap();
        match r.status {
            SolveStatus::Optimal => {
                optimal += 1;
                let x = r.x.as_ref().unwrap();
                assert!(scaled_violation(&p, None, x) <= 1e-7);
                let obj = r.objective.unwrap();
                let lb = dual_bound(&p, r.duals.as_ref().unwrap());
                assert!(lb <= obj + 1e-6, "dual bound {lb} above primal {obj}");
                assert!(obj - lb <= 1e-6, "gap {} on\n{}", obj - lb, p.to_lp_string());
            }
            SolveStatus::Infeasible => {}
            s => panic!("unexpected {s:?}"),
        }
    }
    assert!(optimal > 100);
}

#[test]
fn lp_infeasible_verdicts_survive_sampling() {
    // An infeasible verdict must never coexist with a sampled feasible point.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let p = random_problem(&mut rng, 0, 2, 3);
        let r = solve_lp(&p, &params()).unwrap();
        if r.status == SolveStatus::Infeasible {
            for a in -30..=30 {
                for b in -30..=30 {
                    let x = [a as f64 * 0.1, b as f64 * 0.1];
                    assert!(scaled_violation(&p, None, &x) > 1e-9);
                }
            }
        }
    }
}

#[test]
fn milp_matches_enumeration_eight_binaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut feasible = 0;
    for _ in 0..60 {
        let p = random_problem(&mut rng, 8, 2, 5);
        let r = solve_milp(&p, &params());
        let oracle = enumerate(&p);
        match oracle {
            Some(o) => {
                feasible += 1;
                assert_eq!(r.status, SolveStatus::Optimal);
                assert!((r.objective.unwrap() - o).abs() <= 1e-6, "{} vs {o}", r.objective.unwrap());
                let x = r.x.unwrap();
                assert!(scaled_violation(&p, None, &x) <= 1e-6);
                for b in p.binaries() {
                    assert!(x[b] == 0.0 || x[b] == 1.0);
                }
            }
            None => assert_eq!(r.status, SolveStatus::Infeasible),
        }
    }
    assert!(feasible > 10);
}

#[test]
fn milp_matches_enumeration_ten_binaries_pure() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..15 {
        let p = random_problem(&mut rng, 10, 0, 4);
        let r = solve_milp(&p, &params());
        match enumerate(&p) {
            Some(o) => assert!((r.objective.unwrap() - o).abs() <= 1e-6),
            None => assert_eq!(r.status, SolveStatus::Infeasible),
        }
    }
}

#[test]
fn relaxation_bounds_milp() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..40 {
        let p = random_problem(&mut rng, 5, 2, 4);
        let m = solve_milp(&p, &params());
        let l = solve_lp(&p.lp_relaxation(), &params()).unwrap();
        if m.status == SolveStatus::Optimal {
            assert_eq!(l.status, SolveStatus::Optimal);
            assert!(l.objective.unwrap() <= m.objective.unwrap() + 1e-9);
        }
    }
}

#[test]
fn milp_rounds_down_and_knapsack() {
    let mut p = MilpProblem::new();
    let z = p.binary("z").unwrap();
    p.add_constraint(LinExpr::new().term(z, 1.0), Sense::Le, 0.5, None).unwrap();
    p.set_objective(LinExpr::new().term(z, -1.0)).unwrap();
    let r = solve_milp(&p, &params());
    assert_eq!(r.status, SolveStatus::Optimal);
    assert_eq!(r.x.unwrap()[z], 0.0);

    let mut k = MilpProblem::new();
    let a = k.binary("a").unwrap();
    let b = k.binary("b").unwrap();
    k.add_constraint(LinExpr::new().term(a, 1.0).term(b, 1.0), Sense::Le, 1.0, None).unwrap();
    k.set_objective(LinExpr::new().term(a, -3.0).term(b, -2.0)).unwrap();
    let r = solve_milp(&k, &params());
    assert_eq!(r.objective, Some(-3.0));
    assert_eq!(r.x.unwrap()[a], 1.0);
}

#[test]
fn milp_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let p = random_problem(&mut rng, 8, 3, 6);
        let a = solve_milp(&p, &params());
        let b = solve_milp(&p, &params());
        assert_eq!((a.status, a.objective, a.x, a.nodes), (b.status, b.objective, b.x, b.nodes));
    }
}

#[test]
fn node_limit_reports_status() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_problem(&mut rng, 10, 0, 3);
    let r = solve_milp(&p, &SolverParams { max_nodes: 1, ..params() });
    assert!(r.status == SolveStatus::NodeLimit || r.status == SolveStatus::Optimal || r.status == SolveStatus::Infeasible);
}

fn bound_rows(rows: &[(Sense, f64)]) -> MilpProblem {
    let mut p = MilpProblem::new();
    let x = p.continuous(-100.0, 100.0, "x").unwrap();
    for &(s, r) in rows {
        p.add_constraint(LinExpr::new().term(x, 1.0), s, r, removable()).unwrap();
    }
    p
}

#[test]
fn iis_unique_conflict() {
    let mut p = MilpProblem::new();
    let x = p.continuous(-10.0, 10.0, "x").unwrap();
    let y = p.continuous(-10.0, 10.0, "y").unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Ge, 1.0, removable()).unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Le, 0.0, removable()).unwrap();
    p.add_constraint(LinExpr::new().term(y, 1.0), Sense::Ge, 0.0, removable()).unwrap();
    assert_eq!(extract_iis(&p, &params()).unwrap(), vec![0, 1]);
}

#[test]
fn iis_ascending_deletion_order() {
    // Deleting x >= 3 first leaves {x >= 2, x <= 1}, still infeasible.
    let p = bound_rows(&[(Sense::Ge, 3.0), (Sense::Ge, 2.0), (Sense::Le, 1.0)]);
    assert_eq!(extract_iis(&p, &params()).unwrap(), vec![1, 2]);
}

#[test]
fn iis_rejects_feasible() {
    let p = bound_rows(&[(Sense::Ge, 0.0), (Sense::Le, 1.0)]);
    assert_eq!(extract_iis(&p, &params()), Err(SolverError::NotInfeasible));
}

#[test]
fn iis_respects_core_rows() {
    let mut p = MilpProblem::new();
    let x = p.continuous(-10.0, 10.0, "x").unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Le, 0.0, Some(TraceRecord::core(0, ConstraintKind::Dynamics)))
        .unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Ge, -5.0, removable()).unwrap();
    p.add_constraint(LinExpr::new().term(x, 1.0), Sense::Ge, 2.0, removable()).unwrap();
    assert_eq!(extract_iis(&p, &params()).unwrap(), vec![2]);
}

fn mask_of(p: &MilpProblem, keep: &[usize]) -> Vec<bool> {
    p.constraints.iter().map(|c| !c.is_removable() || keep.contains(&c.id)).collect()
}

#[test]
fn iis_sound_and_irreducible_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut checked = 0;
    for _ in 0..80 {
        let p = random_problem(&mut rng, 3, 2, 7);
        if solve_milp(&p, &params()).status != SolveStatus::Infeasible {
            continue;
        }
        checked += 1;
        let iis = extract_iis(&p, &params()).unwrap();
        assert!(!iis.is_empty());
        let m = mask_of(&p, &iis);
        assert_eq!(find_feasible(&p, &params(), Some(&m)).status, SolveStatus::Infeasible);
        for &c in &iis {
            let rest: Vec<usize> = iis.iter().copied().filter(|&d| d != c).collect();
            let m = mask_of(&p, &rest);
            assert_eq!(find_feasible(&p, &params(), Some(&m)).status, SolveStatus::Optimal);
        }
        assert_eq!(extract_iis(&p, &params()).unwrap(), iis);
    }
    assert!(checked > 5);
}

#[test]
fn binary_kind_survives_relaxation_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = random_problem(&mut rng, 3, 0, 2);
    assert!(p.lp_relaxation().vars.iter().all(|v| v.kind == VarKind::Continuous));
}

#[test]
fn lp_duality_certificate_on_larger_instances() {
    // Large enough that the basis inverse is rebuilt several times.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut optimal = 0;
    for _ in 0..12 {
        let p = random_problem(&mut rng, 0, 120, 90);
        let r = solve_lp(&p, &params()).unwrap();
        if r.status == SolveStatus::Optimal {
            optimal += 1;
            let obj = r.objective.unwrap();
            assert!(scaled_violation(&p, None, r.x.as_ref().unwrap()) <= 1e-7);
            let lb = dual_bound(&p, r.duals.as_ref().unwrap());
            assert!((obj - lb).abs() <= 1e-6 * (1.0 + obj.abs()), "{obj} vs {lb}");
        }
    }
    assert!(optimal > 0);
}
