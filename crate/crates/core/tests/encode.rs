mod common;

use std::collections::BTreeMap;

use common::*;
use stlnav_core::encode::*;
use stlnav_core::milp::{ConstraintKind, VarKind};
use stlnav_core::solver::{find_feasible, solve_milp, SolveStatus, SolverParams};
use stlnav_core::stl::*;
use stlnav_core::world::{BoxBounds, InitialState, Region, RegionTable, Role, Scenario};

fn line_world(horizon: usize) -> Scenario {
    Scenario {
        workspace: BoxBounds {
            min: vec![-10.0],
            max: vec![10.0],
        },
        dt: 1.0,
        horizon,
        vmax: 2.0,
        amax: 1.0,
        x0: InitialState { p: vec![-1.0], v: vec![0.0] },
        regions: vec![
            Region {
                name: "a".into(),
                role: Role::Goal,
                min: vec![2.0],
                max: vec![4.0],
            },
            Region {
                name: "nf".into(),
                role: Role::Nofly,
                min: vec![-6.0],
                max: vec![-4.0],
            },
        ],
        nl_instruction: None,
    }
}

fn nnf(text: &str, table: &RegionTable) -> Formula {
    to_nnf(&parse_stl(text, table).unwrap()).unwrap()
}

fn kind_count(enc: &EncodedProblem, kind: ConstraintKind) -> usize {
    enc.problem.constraints.iter().filter(|c| c.trace.as_ref().is_some_and(|t| t.kind == kind)).count()
}

#[test]
fn hand_expanded_counts() {
    let sc = line_world(1);
    let f = nnf("F[0,1] {px >= 0}", &sc.region_table());
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    // states 2x2, control pair 2, gamma, two atom binaries, one F variable
    assert_eq!(enc.problem.vars.len(), 10);
    assert_eq!(enc.problem.num_binaries(), 2);
    assert_eq!(kind_count(&enc, ConstraintKind::PredicateLb), 2);
    assert_eq!(kind_count(&enc, ConstraintKind::PredicateUb), 2);
    assert_eq!(kind_count(&enc, ConstraintKind::OrLink), 1);
    assert_eq!(kind_count(&enc, ConstraintKind::Root), 1);
    assert_eq!(kind_count(&enc, ConstraintKind::Dynamics), 2);
    assert_eq!(enc.problem.constraints.len(), 8);
}

#[test]
fn big_m_auto_sizing() {
    let sc = line_world(1);
    let f = nnf("F[0,1] {2*px >= 3}", &sc.region_table());
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    assert_eq!(enc.big_m, 2.0 * 10.0 + 3.0 + 10.0 + 1.0);
    let fixed = EncodeParams { big_m: Some(500.0), ..Default::default() };
    assert_eq!(encode(&f, &sc, &fixed).unwrap().big_m, 500.0);
}

#[test]
fn globally_forces_every_atom() {
    let sc = line_world(4);
    let f = nnf("G[0,4] {px >= -3}", &sc.region_table());
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let r = solve_milp(&enc.problem, &SolverParams::default());
    assert_eq!(r.status, SolveStatus::Optimal);
    let x = r.x.unwrap();
    for k in 0..=4 {
        assert!((x[enc.z(f.atoms()[0].id(), k).unwrap()] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn duplicated_subtrees_get_separate_chains() {
    let sc = line_world(6);
    let f = nnf("F[0,5] a & F[0,5] a", &sc.region_table());
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let atom_nodes: Vec<NodeId> = f.atoms().iter().map(|a| a.id()).collect();
    assert_eq!(atom_nodes.len(), 2);
    for n in atom_nodes {
        let steps = enc.z_vars.keys().filter(|(node, _)| *node == n).count();
        assert_eq!(steps, 6);
    }
    // one binary per face and step in each chain
    assert_eq!(enc.problem.num_binaries(), 2 * 6 * 2);
}

#[test]
fn all_fixed_is_identical_to_plain() {
    let (sc, f, _) = load_fixture("task3");
    let decisions: BTreeMap<NodeId, RepairDecision> = f.preorder().iter().map(|n| (n.id(), RepairDecision::Fixed)).collect();
    let plain = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let fixed = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &decisions).unwrap();
    assert_eq!(plain, fixed);
    assert_eq!(plain.problem.to_lp_string(), fixed.problem.to_lp_string());
}

#[test]
fn temporal_relaxation_extends_eventually_window() {
    let (sc, f, _) = load_fixture("task3");
    let ev = f.preorder().into_iter().find(|n| matches!(n.kind(), FormulaKind::Eventually(..))).unwrap().id();
    let decisions = BTreeMap::from([(ev, RepairDecision::TemporalRelax)]);
    let enc = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &decisions).unwrap();
    assert_eq!(enc.extensions.len(), 20);
    let steps: Vec<usize> = enc.extensions.iter().map(|e| e.step).collect();
    assert_eq!(steps, (21..=40).collect::<Vec<_>>());
    assert!(enc.extensions.iter().all(|e| e.kind == ExtensionKind::Extension));
    let plain = encode(&f, &sc, &EncodeParams::default()).unwrap();
    assert_eq!(enc.problem.num_binaries(), plain.problem.num_binaries() + 20 + 20 * 4);
}

#[test]
fn temporal_relaxation_releases_globally_steps() {
    let sc = line_world(5);
    let f = nnf("G[0,5] {px >= -1}", &sc.region_table());
    let decisions = BTreeMap::from([(f.id(), RepairDecision::TemporalRelax)]);
    let enc = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &decisions).unwrap();
    assert_eq!(enc.extensions.len(), 5);
    assert!(enc.extensions.iter().all(|e| e.kind == ExtensionKind::Release));
}

#[test]
fn safety_nodes_cannot_be_relaxed() {
    let sc = line_world(4);
    let f = nnf("G[0,4] !nf & F[0,4] a", &sc.region_table());
    let g = f.preorder().into_iter().find(|n| matches!(n.kind(), FormulaKind::Globally(..))).unwrap();
    let atom = g.children()[0].id();
    for (node, d) in [(atom, RepairDecision::PredicateRelax), (g.id(), RepairDecision::TemporalRelax)] {
        let r = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &BTreeMap::from([(node, d)]));
        assert!(matches!(r, Err(EncodeError::SafetyRelaxAttempt(n)) if n == node));
    }
    let r = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &BTreeMap::from([(99, RepairDecision::Fixed)]));
    assert!(matches!(r, Err(EncodeError::UnknownDecisionNode(99))));
}

#[test]
fn predicate_relaxation_adds_penalized_slacks() {
    let sc = line_world(3);
    let f = nnf("F[0,2] a", &sc.region_table());
    let atom = f.atoms()[0].id();
    let enc = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &BTreeMap::from([(atom, RepairDecision::PredicateRelax)])).unwrap();
    assert_eq!(enc.slacks.len(), 3 * 2);
    for s in &enc.slacks {
        assert_eq!(enc.problem.vars[s.var].kind, VarKind::Continuous);
        assert_eq!(enc.problem.objective.coef(s.var), 1.0);
    }
    // the goal at [2,4] is out of reach from -1 in 2 steps; slack buys it
    let r = solve_milp(&enc.problem, &SolverParams::default());
    assert_eq!(r.status, SolveStatus::Optimal);
    let x = r.x.unwrap();
    assert!(!enc.active_slacks(&x, 1e-6).is_empty());
    let plain = encode(&f, &sc, &EncodeParams::default()).unwrap();
    assert_eq!(solve_milp(&plain.problem, &SolverParams::default()).status, SolveStatus::Infeasible);
}

#[test]
fn rejects_bad_inputs() {
    let sc = line_world(3);
    let t = sc.region_table();
    let f = nnf("F[0,3] a", &t);
    for params in [
        EncodeParams { gamma_max: 0.0, ..Default::default() },
        EncodeParams { gamma_min: -1.0, ..Default::default() },
        EncodeParams { gamma_min: 10.0, ..Default::default() },
        EncodeParams { big_m: Some(-1.0), ..Default::default() },
        EncodeParams { lambda_t: -1.0, ..Default::default() },
    ] {
        assert!(matches!(encode(&f, &sc, &params), Err(EncodeError::InvalidParams(_))));
    }
    let late = nnf("F[0,4] a", &t);
    assert!(matches!(encode(&late, &sc, &EncodeParams::default()), Err(EncodeError::HorizonExceeded { step: 4, .. })));
    let raw = parse_stl("!(F[0,2] a)", &t).unwrap();
    assert!(matches!(encode(&raw, &sc, &EncodeParams::default()), Err(EncodeError::NotNnf)));
}

#[test]
fn every_stl_row_is_traced() {
    let (sc, f, _) = load_fixture("task2");
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    for c in &enc.problem.constraints {
        let t = c.trace.as_ref().expect("all encoder rows carry a trace");
        if t.removable {
            assert!(f.find(t.node.unwrap()).is_some());
        } else {
            assert!(t.kind.is_core());
        }
    }
    assert_eq!(kind_count(&enc, ConstraintKind::Root), 1);
    let again = encode(&f, &sc, &EncodeParams::default()).unwrap();
    assert_eq!(enc, again);
}

/// Soundness and margin consistency of one solved point.
fn check_sound(enc: &EncodedProblem, f: &Formula, x: &[f64]) {
    let tr = enc.decode(x);
    assert!(eval_boolean(f, &tr, 0).unwrap());
    assert!(eval_robustness(f, &tr, 0).unwrap() >= -1e-6);
    let gamma = x[enc.gamma];
    for a in f.atoms() {
        for k in 0..=tr.horizon() {
            let Some(_) = enc.z(a.id(), k) else { continue };
            let margins: Vec<(f64, f64)> = match a.kind() {
                FormulaKind::Atom(Atom::Predicate(p)) => vec![(x[enc.z(a.id(), k).unwrap()], p.eval(&tr.states[k]))],
                FormulaKind::Atom(Atom::Region(r)) => (0..r.region.num_faces())
                    .map(|face| {
                        let label = format!("z[n{}][k{k}][f{face}]", a.id());
                        let z = enc.problem.var_by_label(&label).unwrap();
                        let p = r.region.face_predicate(face);
                        let p = if r.negated { p.strict_negation(EPS_STRICT) } else { p };
                        (x[z], p.eval(&tr.states[k]))
                    })
                    .collect(),
                _ => unreachable!(),
            };
            for (z, g) in margins {
                if z > 0.5 {
                    assert!(gamma <= g + 1e-6, "gamma {gamma} above active margin {g}");
                }
            }
        }
    }
}

#[test]
fn fixture_incumbent_is_sound() {
    let (sc, f, _) = load_fixture("task1");
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let r = find_feasible(&enc.problem, &SolverParams::default(), None);
    assert_eq!(r.status, SolveStatus::Optimal);
    check_sound(&enc, &f, r.x.as_ref().unwrap());
}

#[test]
fn micro_worlds_sound_and_complete() {
    let mut rng = seeded(7);
    let mut satisfiable = 0;
    for case in 0..24 {
        let (dims, h) = if case % 2 == 0 { (1, 5) } else { (2, 3) };
        let sc = micro_scenario(&mut rng, dims, h);
        let f = random_formula(&mut rng, &sc, 3);
        let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
        let r = solve_milp(&enc.problem, &SolverParams::default());
        let expected = lattice_satisfiable(&sc, &f);
        if expected {
            satisfiable += 1;
            assert_eq!(r.status, SolveStatus::Optimal, "case {case}: {}", print_canonical(&f));
        }
        if r.status == SolveStatus::Optimal {
            check_sound(&enc, &f, r.x.as_ref().unwrap());
        } else {
            assert_eq!(r.status, SolveStatus::Infeasible);
        }
    }
    assert!(satisfiable >= 6, "generator produced too few satisfiable cases: {satisfiable}");
}

#[test]
fn relaxation_never_shrinks_the_feasible_set() {
    let sc = line_world(4);
    let f = nnf("F[0,2] a & G[0,4] {px <= 3.5}", &sc.region_table());
    let plain = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let plain_r = solve_milp(&plain.problem, &SolverParams::default());
    let decisions: BTreeMap<NodeId, RepairDecision> = f
        .preorder()
        .iter()
        .filter_map(|n| match n.kind() {
            FormulaKind::Eventually(..) | FormulaKind::Globally(..) => Some((n.id(), RepairDecision::TemporalRelax)),
            FormulaKind::Atom(_) => Some((n.id(), RepairDecision::PredicateRelax)),
            _ => None,
        })
        .collect();
    let relaxed = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &decisions).unwrap();
    let relaxed_r = solve_milp(&relaxed.problem, &SolverParams::default());
    assert_eq!(relaxed_r.status, SolveStatus::Optimal);
    if plain_r.status == SolveStatus::Optimal {
        assert!(relaxed_r.objective.unwrap() <= plain_r.objective.unwrap() + 1e-6);
    }
}
