mod common;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::time::Duration;

use common::*;
use stlnav_core::encode::{encode, encode_with_relaxation, EncodeParams, RepairDecision};
use stlnav_core::milp::ConstraintKind;
use stlnav_core::repair::*;
use stlnav_core::solver::{find_feasible, solve_milp, SolveStatus, SolverParams};
use stlnav_core::stl::{parse_stl, print_canonical, to_nnf, Formula, FormulaKind, NodeId};
use stlnav_core::world::{BoxBounds, InitialState, Region, Role, Scenario};

fn line_world(x0: f64, horizon: usize, regions: Vec<Region>) -> Scenario {
    Scenario {
        workspace: BoxBounds { min: vec![-4.0], max: vec![4.0] },
        dt: 1.0,
        horizon,
        vmax: 2.0,
        amax: 1.0,
        x0: InitialState { p: vec![x0], v: vec![0.0] },
        regions,
        nl_instruction: None,
    }
}

fn region(name: &str, role: Role, lo: f64, hi: f64) -> Region {
    Region { name: name.into(), role, min: vec![lo], max: vec![hi] }
}

fn formula(sc: &Scenario, text: &str) -> Formula {
    to_nnf(&parse_stl(text, &sc.region_table()).unwrap()).unwrap()
}

/// A wall `o` between the start and the goal `g` on a line; no deadline
/// helps because the horizon ends with the window.
fn walled() -> (Scenario, Formula) {
    let sc = line_world(
        0.0,
        4,
        vec![region("o", Role::Obstacle, 1.25, 2.75), region("g", Role::Goal, 3.25, 3.75)],
    );
    let f = formula(&sc, "G[0,4] !o & F[0,4] g");
    (sc, f)
}

fn subtree_text(f: &Formula, pred: impl Fn(&Formula) -> bool) -> String {
    print_canonical(f.preorder().into_iter().find(|n| pred(n)).expect("subtree present"))
}

fn is_globally(n: &Formula) -> bool {
    matches!(n.kind(), FormulaKind::Globally(..))
}

fn event(node: NodeId, role: &str, operator: Operator) -> AtomicEvent {
    AtomicEvent {
        node,
        predicate: format!("r{node}"),
        support: (0, 3),
        steps: vec![0, 1, 2, 3],
        operator,
        operator_node: Some(node + 100),
        role: role.into(),
    }
}

/// Asks for a predicate repair of every event, safety ones included.
struct Greedy;

impl Advisor for Greedy {
    fn advise(&self, events: &[AtomicEvent], _: &AdvisorRequest<'_>) -> Result<Advice, AdvisorError> {
        Ok(events.iter().map(|e| (e.node, (RepairDecision::PredicateRelax, Provenance::Remote))).collect())
    }
}

struct AllFixed;

impl Advisor for AllFixed {
    fn advise(&self, events: &[AtomicEvent], _: &AdvisorRequest<'_>) -> Result<Advice, AdvisorError> {
        Ok(events.iter().map(|e| (e.node, (RepairDecision::Fixed, Provenance::Remote))).collect())
    }
}

#[test]
fn task3_deadline_is_extended_minimally() {
    let (sc, f, _) = load_fixture("task3");
    let params = RepairParams::default();
    let out = repair_loop(&sc, &f, &RuleBasedAdvisor, &params).unwrap();
    let report = &out.report;
    assert_eq!(report.status, RepairStatus::Repaired);
    assert_eq!(report.iterations, 1);

    let round = &report.rounds[0];
    assert_eq!(round.events.len(), 1);
    let ev = &round.events[0];
    assert_eq!((ev.predicate.as_str(), ev.support, ev.operator, ev.role.as_str()), ("g", (0, 20), Operator::F, "goal"));
    assert!(round.decisions.iter().all(|d| d.mode == RepairDecision::TemporalRelax && d.provenance == Provenance::Rule));
    assert!(round.overrides.is_empty());
    assert!(round.changes.iter().all(|c| matches!(c.kind, ChangeKind::Window { .. })));

    assert_eq!(subtree_text(&f, is_globally), subtree_text(&out.formula, is_globally));
    let deadline = out
        .formula
        .preorder()
        .into_iter()
        .find_map(|n| match n.kind() {
            FormulaKind::Eventually(iv, _) => Some(*iv),
            _ => None,
        })
        .unwrap();
    assert_eq!(deadline.a, 0);
    assert!(deadline.b > 20 && deadline.b <= 40);
    assert!(out.robustness >= 0.0);

    // one step less is infeasible without any relaxation
    let shorter = formula(&sc, &format!("G[0,40] !o & F[0,{}] g", deadline.b - 1));
    let enc = encode(&shorter, &sc, &params.encode).unwrap();
    assert_eq!(find_feasible(&enc.problem, &params.check, None).status, SolveStatus::Infeasible);
}

#[test]
fn repair_report_is_deterministic() {
    let (sc, f, _) = load_fixture("task3");
    let params = RepairParams::default();
    let a = repair_loop(&sc, &f, &RuleBasedAdvisor, &params).unwrap().report.to_json();
    let b = repair_loop(&sc, &f, &RuleBasedAdvisor, &params).unwrap().report.to_json();
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["status"], "repaired");
    assert_eq!(v["rounds"][0]["decisions"][0]["mode"], "temporal");
}

#[test]
fn feasible_specs_skip_repair() {
    let sc = line_world(0.0, 4, vec![region("g", Role::Goal, 1.25, 2.75)]);
    let f = formula(&sc, "F[0,4] g");
    let out = repair_loop(&sc, &f, &Greedy, &RepairParams::default()).unwrap();
    assert_eq!(out.report.status, RepairStatus::NotNeeded);
    assert_eq!(out.report.iterations, 0);
    assert!(out.report.rounds.is_empty());
    assert_eq!(print_canonical(&out.formula), print_canonical(&f));
}

#[test]
fn blocked_goal_is_unrepairable_when_nothing_may_move() {
    let (sc, f) = walled();
    let err = repair_loop(&sc, &f, &AllFixed, &RepairParams::default()).unwrap_err();
    let RepairError::UnrepairableConflict(report) = err else { panic!("unexpected {err:?}") };
    assert_eq!(report.status, RepairStatus::Unrepairable);
    assert_eq!(report.iterations, 1);

    // stretching the deadline cannot help either: the window already ends
    // at the horizon
    let err = repair_loop(&sc, &f, &RuleBasedAdvisor, &RepairParams::default()).unwrap_err();
    assert!(matches!(err, RepairError::UnrepairableConflict(_)), "{err:?}");
}

#[test]
fn adversarial_advice_never_touches_safety() {
    let (sc, f) = walled();
    let out = repair_loop(&sc, &f, &Greedy, &RepairParams::default()).unwrap();
    let round = &out.report.rounds[0];
    let o = round.events.iter().find(|e| e.role == "obstacle").expect("wall is part of the conflict");
    assert!(round
        .overrides
        .iter()
        .any(|ov| ov.node == o.node && ov.requested == RepairDecision::PredicateRelax && ov.applied == RepairDecision::Fixed));
    let rec = round.decisions.iter().find(|d| d.node == o.node).unwrap();
    assert_eq!(rec.mode, RepairDecision::Fixed);
    assert!(round.changes.iter().all(|c| c.node != o.node));
    assert_eq!(subtree_text(&f, is_globally), subtree_text(&out.formula, is_globally));
    // the goal moved in front of the wall
    assert!(out.trajectory.states.iter().all(|s| !(1.25..=2.75).contains(&s[0])));
}

#[test]
fn diagnose_sorts_atom_events() {
    let (sc, f) = walled();
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let iis = stlnav_core::solver::extract_iis(&enc.problem, &SolverParams::default()).unwrap();
    let events = diagnose(&enc, &iis, &f).unwrap();
    assert_eq!(events.len(), 2);
    assert!(events[0].node < events[1].node);
    let by_role: BTreeMap<_, _> = events.iter().map(|e| (e.role.as_str(), e)).collect();
    assert_eq!(by_role["obstacle"].operator, Operator::G);
    assert_eq!(by_role["goal"].operator, Operator::F);
    assert!(by_role["obstacle"].is_safety());
    assert!(matches!(diagnose(&enc, &[], &f), Err(RepairError::EmptyIis)));
}

#[test]
fn link_only_conflicts_project_onto_child_atoms() {
    let sc = line_world(0.0, 3, vec![region("g", Role::Goal, 1.25, 2.75)]);
    let f = formula(&sc, "F[0,3] g");
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let or_rows: Vec<_> = enc
        .problem
        .constraints
        .iter()
        .enumerate()
        .filter(|(_, c)| c.trace.as_ref().is_some_and(|t| t.kind == ConstraintKind::OrLink && t.node == Some(f.id())))
        .map(|(i, _)| i)
        .collect();
    assert!(!or_rows.is_empty());
    let events = diagnose(&enc, &or_rows, &f).unwrap();
    assert_eq!(events.len(), 1);
    let g = f.atoms()[0].id();
    assert_eq!(events[0].node, g);
    assert_eq!(events[0].operator, Operator::F);
    assert_eq!(events[0].operator_node, Some(f.id()));
    assert_eq!(events[0].support, (0, 3));
}

#[test]
fn rule_based_modes() {
    let events = vec![
        event(1, "goal", Operator::F),
        event(2, "obstacle", Operator::G),
        event(3, "nofly", Operator::F),
        event(4, "search", Operator::G),
        event(5, "numeric", Operator::G),
        event(6, "target", Operator::URight),
        event(7, "goal", Operator::ULeft),
    ];
    let got = advise_rule_based(&events);
    use RepairDecision::*;
    let want = [(1, TemporalRelax), (2, Fixed), (3, Fixed), (4, TemporalRelax), (5, PredicateRelax), (6, TemporalRelax), (7, PredicateRelax)];
    assert_eq!(got, want.into_iter().collect());
}

#[test]
fn advisor_replies_are_parsed_strictly() {
    let events = vec![event(1, "goal", Operator::F), event(2, "numeric", Operator::G)];
    let advice = parse_advice(r#"{"decisions":[{"node":1,"mode":"temporal"},{"node":99,"mode":"predicate"}]}"#, &events).unwrap();
    assert_eq!(advice[&1], (RepairDecision::TemporalRelax, Provenance::Remote));
    assert_eq!(advice[&2], (RepairDecision::Fixed, Provenance::Default));
    assert!(!advice.contains_key(&99));

    for bad in [
        r#"{"decisions":[{"node":1,"mode":"both"}]}"#,
        r#"{"decisions":[{"node":1,"mode":"temporal"},{"node":1,"mode":"predicate"}]}"#,
        r#"{"modes":[]}"#,
        "not json",
    ] {
        assert!(matches!(parse_advice(bad, &events), Err(AdvisorError::MalformedResponse(_))), "{bad}");
    }
}

#[test]
fn safety_policy_overrides_and_fills_gaps() {
    let events = vec![event(1, "nofly", Operator::G), event(2, "goal", Operator::F), event(3, "goal", Operator::F)];
    let advice: Advice = [
        (1, (RepairDecision::PredicateRelax, Provenance::Remote)),
        (2, (RepairDecision::TemporalRelax, Provenance::Remote)),
    ]
    .into_iter()
    .collect();
    let (advice, overrides) = enforce_safety_policy(&events, advice);
    assert_eq!(advice[&1].0, RepairDecision::Fixed);
    assert_eq!(advice[&2].0, RepairDecision::TemporalRelax);
    assert_eq!(advice[&3], (RepairDecision::Fixed, Provenance::Default));
    assert_eq!(overrides.len(), 1);
    assert_eq!((overrides[0].node, overrides[0].requested), (1, RepairDecision::PredicateRelax));
}

#[test]
fn slack_becomes_a_loosened_face() {
    // furthest reach at step 2 is 1.0, so the lower face needs 0.37
    let sc = line_world(-1.0, 2, vec![region("a", Role::Goal, 1.37, 3.75), region("b", Role::Goal, -3.75, 3.75)]);
    let f = formula(&sc, "F[0,2] a & G[0,2] b");
    let params = EncodeParams { gamma_min: 0.0, lambda_p: 2.0, ..EncodeParams::default() };
    let a = f.atoms().iter().find(|n| print_canonical(n) == "a").unwrap().id();
    let b = f.atoms().iter().find(|n| print_canonical(n) == "b").unwrap().id();
    let decisions: BTreeMap<_, _> = [(a, RepairDecision::PredicateRelax), (b, RepairDecision::PredicateRelax)].into_iter().collect();
    let enc = encode_with_relaxation(&f, &sc, &params, &decisions).unwrap();
    let r = solve_milp(&enc.problem, &SolverParams::default());
    let rec = reconstruct_spec(&f, r.x.as_ref().unwrap(), &decisions, &enc).unwrap();

    assert_eq!(rec.changes.len(), 1, "{:?}", rec.changes);
    let ch = &rec.changes[0];
    assert_eq!(ch.node, a);
    let ChangeKind::Threshold { face, slack, loosened_by } = ch.kind else { panic!() };
    assert_eq!(face, Some(0));
    assert!((slack - 0.37).abs() < 1e-6);
    assert_eq!(loosened_by, 0.37);

    // untouched atom keeps its node, the loosened one becomes its faces
    assert_eq!(print_canonical(rec.formula.find(b).unwrap()), "b");
    let repaired = rec.formula.find(a).unwrap();
    assert!(matches!(repaired.kind(), FormulaKind::And(c) if c.len() == 2));
    let enc = encode(&rec.formula, &sc, &params).unwrap();
    assert!(find_feasible(&enc.problem, &SolverParams::default(), None).has_incumbent());
}

#[test]
fn unused_relaxation_is_reported() {
    let sc = line_world(0.0, 3, vec![region("g", Role::Goal, 1.25, 2.75)]);
    let f = formula(&sc, "F[0,3] g");
    let g = f.atoms()[0].id();
    let decisions: BTreeMap<_, _> = [(g, RepairDecision::PredicateRelax)].into_iter().collect();
    let enc = encode_with_relaxation(&f, &sc, &EncodeParams::default(), &decisions).unwrap();
    let r = solve_milp(&enc.problem, &SolverParams::default());
    assert!(matches!(reconstruct_spec(&f, r.x.as_ref().unwrap(), &decisions, &enc), Err(RepairError::NoRelaxationUsed)));
}

/// Serve one request per canned reply; each received body is forwarded.
fn mock_advisor(replies: Vec<Option<String>>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for reply in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut raw = Vec::new();
            let mut buf = [0u8; 4096];
            let body = loop {
                let n = stream.read(&mut buf).unwrap();
                raw.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&raw).to_string();
                if let Some((head, body)) = text.split_once("\r\n\r\n") {
                    let len: usize = head
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(|v| v.trim().parse().unwrap()))
                        .unwrap();
                    if body.len() >= len {
                        assert!(head.starts_with("POST /repair-mode "));
                        break body.to_string();
                    }
                }
            };
            tx.send(body).unwrap();
            match reply {
                Some(json) => {
                    let resp = format!("HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{json}", json.len());
                    stream.write_all(resp.as_bytes()).unwrap();
                }
                // never answer; hold the connection past the client timeout
                None => std::thread::sleep(Duration::from_millis(1500)),
            }
        }
    });
    (url, rx)
}

#[test]
fn remote_advisor_round_trip_respects_policy() {
    let (sc, f) = walled();
    let sc = Scenario { nl_instruction: Some("reach g, never enter o".into()), ..sc };
    let enc = encode(&f, &sc, &EncodeParams::default()).unwrap();
    let iis = stlnav_core::solver::extract_iis(&enc.problem, &SolverParams::default()).unwrap();
    let events = diagnose(&enc, &iis, &f).unwrap();
    let reply = format!(
        r#"{{"decisions":[{}]}}"#,
        events.iter().map(|e| format!(r#"{{"node":{},"mode":"predicate"}}"#, e.node)).collect::<Vec<_>>().join(",")
    );
    let (url, rx) = mock_advisor(vec![Some(reply)]);
    let remote = RemoteAdvisor { timeout: Duration::from_secs(5), ..RemoteAdvisor::new(url) };
    let request = AdvisorRequest::new(sc.nl_instruction.as_deref(), print_canonical(&f), &events);
    let advice = remote.advise(&events, &request).unwrap();

    let sent: serde_json::Value = serde_json::from_str(&rx.recv().unwrap()).unwrap();
    assert_eq!(sent["nl_instruction"], "reach g, never enter o");
    assert_eq!(sent["events"].as_array().unwrap().len(), events.len());
    assert!(sent["events"].as_array().unwrap().iter().any(|e| e["role"] == "obstacle" && e["operator"] == "G"));

    assert!(advice.values().all(|(d, p)| *d == RepairDecision::PredicateRelax && *p == Provenance::Remote));
    let (advice, overrides) = enforce_safety_policy(&events, advice);
    for e in events.iter().filter(|e| e.is_safety()) {
        assert_eq!(advice[&e.node].0, RepairDecision::Fixed);
        assert!(overrides.iter().any(|o| o.node == e.node));
    }
}

#[test]
fn remote_timeout_falls_back_only_when_allowed() {
    let events = vec![event(1, "goal", Operator::F), event(2, "obstacle", Operator::G)];
    let request = AdvisorRequest::new(None, "F[0,3] g".into(), &events);

    let (url, _rx) = mock_advisor(vec![None, None]);
    let strict = RemoteAdvisor { timeout: Duration::from_millis(300), ..RemoteAdvisor::new(url.clone()) };
    assert_eq!(strict.advise(&events, &request), Err(AdvisorError::Timeout));

    let lenient = RemoteAdvisor { fallback: true, ..strict };
    let advice = lenient.advise(&events, &request).unwrap();
    assert_eq!(advice[&1], (RepairDecision::TemporalRelax, Provenance::RuleFallback));
    assert_eq!(advice[&2], (RepairDecision::Fixed, Provenance::RuleFallback));
}

#[test]
fn malformed_remote_reply_is_not_masked_by_fallback() {
    let events = vec![event(1, "goal", Operator::F)];
    let request = AdvisorRequest::new(None, "F[0,3] g".into(), &events);
    let (url, _rx) = mock_advisor(vec![Some(r#"{"decisions":[{"node":1,"mode":"both"}]}"#.into())]);
    let remote = RemoteAdvisor { fallback: true, timeout: Duration::from_secs(5), ..RemoteAdvisor::new(url) };
    assert!(matches!(remote.advise(&events, &request), Err(AdvisorError::MalformedResponse(_))));
}

#[test]
fn unreachable_advisor_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let events = vec![event(1, "goal", Operator::F)];
    let request = AdvisorRequest::new(None, "F[0,3] g".into(), &events);
    let remote = RemoteAdvisor { timeout: Duration::from_secs(2), ..RemoteAdvisor::new(format!("http://127.0.0.1:{port}")) };
    assert!(matches!(remote.advise(&events, &request), Err(AdvisorError::Transport(_))));
}
