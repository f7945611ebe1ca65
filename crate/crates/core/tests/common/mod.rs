//! Shared generators and oracles for the integration and acceptance tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::Rng;
use stlnav_core::milp::{ConstraintKind, LinExpr, MilpProblem, Sense, TraceRecord};
use stlnav_core::solver::{solve_lp, SolveStatus, SolverParams};
use stlnav_core::stl::{eval_boolean, parse_stl, to_nnf, AtomicPredicate, Formula, Interval};
use stlnav_core::world::{simulate, BoxBounds, InitialState, Region, Role, Scenario, Trajectory};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Scenario and NNF formula of a fixture pair `<name>.json` / `<name>.stl`.
pub fn load_fixture(name: &str) -> (Scenario, Formula, String) {
    let dir = fixture_dir();
    let sc = stlnav_core::world::load_scenario(dir.join(format!("{name}.json"))).unwrap();
    let text = std::fs::read_to_string(dir.join(format!("{name}.stl"))).unwrap();
    let text = text.trim().to_string();
    let f = to_nnf(&parse_stl(&text, &sc.region_table()).unwrap()).unwrap();
    (sc, f, text)
}

/// Small world on a half-meter lattice: `dt = 1`, `amax = 1`, start at rest
/// on an integer point. Region faces sit on quarter offsets so every
/// reachable position has margin at least 0.25 from every face.
pub fn micro_scenario(rng: &mut impl Rng, dims: usize, horizon: usize) -> Scenario {
    let half = 4.0;
    let mut regions = Vec::new();
    let roles = [Role::Goal, Role::Target, Role::Obstacle, Role::Nofly, Role::Search];
    for i in 0..rng.random_range(1..=3) {
        let mut min = Vec::new();
        let mut max = Vec::new();
        for _ in 0..dims {
            let lo = rng.random_range(-3..=2) as f64 + 0.25;
            let len = rng.random_range(1..=3) as f64 - 0.5;
            min.push(lo);
            max.push((lo + len).min(half - 0.25));
        }
        regions.push(Region {
            name: format!("r{i}"),
            role: *roles.choose(rng).unwrap(),
            min,
            max,
        });
    }
    Scenario {
        workspace: BoxBounds {
            min: vec![-half; dims],
            max: vec![half; dims],
        },
        dt: 1.0,
        horizon,
        vmax: 2.0,
        amax: 1.0,
        x0: InitialState {
            p: (0..dims).map(|_| rng.random_range(-1..=1) as f64).collect(),
            v: vec![0.0; dims],
        },
        regions,
        nl_instruction: None,
    }
}

fn axis_predicate(rng: &mut impl Rng, dims: usize) -> AtomicPredicate {
    let mut c = vec![0.0; 2 * dims];
    let velocity = rng.random_bool(0.25);
    let axis = rng.random_range(0..dims) + if velocity { dims } else { 0 };
    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    c[axis] = sign;
    // Positions are multiples of 0.5 and velocities integers, so these
    // thresholds keep every margin at least 0.25 away from zero.
    let t = if velocity { rng.random_range(-1..=1) as f64 + 0.5 } else { rng.random_range(-3..=3) as f64 + 0.25 };
    AtomicPredicate::new(c, -sign * t)
}

fn leaf(rng: &mut impl Rng, sc: &Scenario) -> Formula {
    if rng.random_bool(0.6) {
        let r = sc.regions.choose(rng).unwrap().clone();
        if r.role.is_safety() || rng.random_bool(0.3) {
            Formula::outside(r)
        } else {
            Formula::region(r)
        }
    } else {
        Formula::predicate(axis_predicate(rng, sc.dims()))
    }
}

fn window(rng: &mut impl Rng, budget: usize) -> Interval {
    let b = rng.random_range(0..=budget);
    let a = rng.random_range(0..=b);
    Interval::new(a, b).unwrap()
}

fn gen(rng: &mut impl Rng, sc: &Scenario, depth: usize, budget: usize) -> Formula {
    if depth <= 1 || rng.random_bool(0.2) {
        return leaf(rng, sc);
    }
    match rng.random_range(0..5) {
        0 => Formula::and((0..rng.random_range(2..=3)).map(|_| gen(rng, sc, depth - 1, budget)).collect()),
        1 => Formula::or((0..rng.random_range(2..=3)).map(|_| gen(rng, sc, depth - 1, budget)).collect()),
        2 => {
            let iv = window(rng, budget);
            Formula::globally(iv, gen(rng, sc, depth - 1, budget - iv.b))
        }
        3 => {
            let iv = window(rng, budget);
            Formula::eventually(iv, gen(rng, sc, depth - 1, budget - iv.b))
        }
        _ => {
            let iv = window(rng, budget);
            let l = gen(rng, sc, depth - 1, budget - iv.b);
            let r = gen(rng, sc, depth - 1, budget - iv.b);
            Formula::until(iv, l, r)
        }
    }
}

/// Random NNF formula of depth at most `depth` whose windows fit `sc`.
pub fn random_formula(rng: &mut impl Rng, sc: &Scenario, depth: usize) -> Formula {
    gen(rng, sc, depth, sc.horizon).renumbered()
}

/// Every trajectory with per-axis controls in `{-amax, 0, amax}` that stays
/// inside the workspace and speed box; `visit` returns true to stop early.
pub fn enumerate_lattice(sc: &Scenario, mut visit: impl FnMut(&Trajectory) -> bool) -> bool {
    let dims = sc.dims();
    let model = sc.dynamics().unwrap();
    let choices = 3usize.pow(dims as u32);
    let total = choices.pow(sc.horizon as u32);
    let x0 = sc.initial_state();
    for code in 0..total {
        let mut c = code;
        let mut controls = Vec::with_capacity(sc.horizon);
        for _ in 0..sc.horizon {
            let mut u = Vec::with_capacity(dims);
            for _ in 0..dims {
                u.push((c % 3) as f64 - 1.0);
                c /= 3;
            }
            controls.push(u.iter().map(|v| v * sc.amax).collect());
        }
        let tr = simulate(&model, &x0, &controls);
        let admissible = tr.states.iter().all(|s| {
            (0..dims).all(|i| s[i] >= sc.workspace.min[i] && s[i] <= sc.workspace.max[i] && s[dims + i].abs() <= sc.vmax)
        });
        if admissible && visit(&tr) {
            return true;
        }
    }
    false
}

/// Whether some lattice trajectory satisfies `f`.
pub fn lattice_satisfiable(sc: &Scenario, f: &Formula) -> bool {
    enumerate_lattice(sc, |tr| eval_boolean(f, tr, 0).unwrap())
}

pub fn seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// Random MILP with small half-integer coefficients; every row is removable.
pub fn random_problem(rng: &mut impl Rng, bins: usize, conts: usize, rows: usize) -> MilpProblem {
    let mut p = MilpProblem::new();
    for i in 0..bins {
        p.binary(format!("z{i}")).unwrap();
    }
    for i in 0..conts {
        p.continuous(-3.0, 3.0, format!("x{i}")).unwrap();
    }
    let n = bins + conts;
    for _ in 0..rows {
        let mut e = LinExpr::new();
        for v in 0..n {
            if rng.random_bool(0.5) {
                e.add(v, rng.random_range(-4i32..=4) as f64 * 0.5);
            }
        }
        if e.is_empty() {
            e.add(rng.random_range(0..n), 1.0);
        }
        let sense = match rng.random_range(0..3) {
            0 => Sense::Le,
            1 => Sense::Ge,
            _ => Sense::Eq,
        };
        let rhs = if sense == Sense::Eq { rng.random_range(-1.0..1.0) } else { rng.random_range(-4.0..4.0) };
        p.add_constraint(e, sense, rhs, Some(TraceRecord::stl(0, 0, ConstraintKind::PredicateLb))).unwrap();
    }
    let obj = LinExpr::from_terms((0..n).map(|v| (v, rng.random_range(-5i32..=5) as f64)));
    p.set_objective(obj).unwrap();
    p
}

/// Minimum over every binary assignment of the LP over the continuous part.
pub fn enumerate_binaries(p: &MilpProblem) -> Option<f64> {
    let bins = p.binaries();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut q = p.lp_relaxation();
        for (i, &b) in bins.iter().enumerate() {
            let v = ((mask >> i) & 1) as f64;
            q.vars[b].lower = v;
            q.vars[b].upper = v;
        }
        let r = solve_lp(&q, &SolverParams::default()).unwrap();
        if r.status == SolveStatus::Optimal {
            let o = r.objective.unwrap();
            best = Some(best.map_or(o, |b: f64| b.min(o)));
        }
    }
    best
}
