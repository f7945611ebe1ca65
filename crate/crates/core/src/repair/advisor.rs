//! Repair-mode advisors. An advisor picks one mode per event; magnitudes
//! always come from the penalized re-solve.

use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{http, AdvisorError, AtomicEvent, Operator};
use crate::encode::RepairDecision;
use crate::stl::NodeId;

/// Where a decision came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Rule,
    Remote,
    /// The remote advisor failed and the rule-based advisor stood in.
    RuleFallback,
    /// The advisor gave no decision for the event.
    Default,
}

/// Everything an advisor sees: the instruction, the unrepaired formula and
/// the diagnosed events.
#[derive(Debug, Clone, Serialize)]
pub struct AdvisorRequest<'a> {
    pub nl_instruction: Option<&'a str>,
    pub stl: String,
    pub events: Vec<WireEvent<'a>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct WireEvent<'a> {
    pub node: NodeId,
    pub predicate: &'a str,
    pub support: [usize; 2],
    pub operator: Operator,
    pub role: &'a str,
}

impl<'a> AdvisorRequest<'a> {
    pub fn new(nl_instruction: Option<&'a str>, stl: String, events: &'a [AtomicEvent]) -> Self {
        AdvisorRequest {
            nl_instruction,
            stl,
            events: events
                .iter()
                .map(|e| WireEvent {
                    node: e.node,
                    predicate: &e.predicate,
                    support: [e.support.0, e.support.1],
                    operator: e.operator,
                    role: &e.role,
                })
                .collect(),
        }
    }
}

/// Decisions keyed by event node, each with its provenance.
pub type Advice = BTreeMap<NodeId, (RepairDecision, Provenance)>;

pub trait Advisor {
    fn advise(&self, events: &[AtomicEvent], request: &AdvisorRequest<'_>) -> Result<Advice, AdvisorError>;
}

/// Deterministic default: safety roles stay fixed, deadlines of reach-type
/// operators stretch, and everything else loosens its threshold.
pub fn advise_rule_based(events: &[AtomicEvent]) -> BTreeMap<NodeId, RepairDecision> {
    events
        .iter()
        .map(|e| {
            let d = if e.is_safety() {
                RepairDecision::Fixed
            } else if matches!(e.operator, Operator::F | Operator::URight) {
                RepairDecision::TemporalRelax
            } else if e.operator == Operator::G && matches!(e.role.as_str(), "goal" | "target" | "search") {
                RepairDecision::TemporalRelax
            } else {
                RepairDecision::PredicateRelax
            };
            (e.node, d)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedAdvisor;

impl Advisor for RuleBasedAdvisor {
    fn advise(&self, events: &[AtomicEvent], _: &AdvisorRequest<'_>) -> Result<Advice, AdvisorError> {
        Ok(advise_rule_based(events).into_iter().map(|(n, d)| (n, (d, Provenance::Rule))).collect())
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WireResponse {
    decisions: Vec<WireDecision>,
}

#[derive(Deserialize)]
struct WireDecision {
    node: NodeId,
    mode: String,
}

/// Parse an advisor reply. Events the reply omits default to `Fixed`;
/// nodes that name no event are ignored.
pub fn parse_advice(body: &str, events: &[AtomicEvent]) -> Result<Advice, AdvisorError> {
    let reply: WireResponse = serde_json::from_str(body).map_err(|e| AdvisorError::MalformedResponse(e.to_string()))?;
    let mut out: Advice = events.iter().map(|e| (e.node, (RepairDecision::Fixed, Provenance::Default))).collect();
    for d in reply.decisions {
        let mode = match d.mode.as_str() {
            "predicate" => RepairDecision::PredicateRelax,
            "temporal" => RepairDecision::TemporalRelax,
            "fixed" => RepairDecision::Fixed,
            other => return Err(AdvisorError::MalformedResponse(format!("unknown mode `{other}` for node {}", d.node))),
        };
        match out.get_mut(&d.node) {
            Some(slot) if slot.1 == Provenance::Remote && slot.0 != mode => {
                return Err(AdvisorError::MalformedResponse(format!("conflicting modes for node {}", d.node)));
            }
            Some(slot) => *slot = (mode, Provenance::Remote),
            None => log::warn!("advisor named node {} which is not a diagnosed event", d.node),
        }
    }
    Ok(out)
}

/// Advisor behind the `POST /repair-mode` protocol.
#[derive(Debug, Clone)]
pub struct RemoteAdvisor {
    pub endpoint: String,
    pub timeout: Duration,
    /// Use the rule-based advisor when the endpoint cannot be reached or
    /// does not answer in time.
    pub fallback: bool,
}

impl RemoteAdvisor {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

    pub fn new(endpoint: impl Into<String>) -> Self {
        RemoteAdvisor {
            endpoint: endpoint.into(),
            timeout: Self::DEFAULT_TIMEOUT,
            fallback: false,
        }
    }

    fn url(&self) -> String {
        let base = self.endpoint.trim_end_matches('/');
        if base.ends_with("/repair-mode") {
            base.to_string()
        } else {
            format!("{base}/repair-mode")
        }
    }
}

impl Advisor for RemoteAdvisor {
    fn advise(&self, events: &[AtomicEvent], request: &AdvisorRequest<'_>) -> Result<Advice, AdvisorError> {
        let body = serde_json::to_string(request).expect("request serializes");
        match http::post_json(&self.url(), &body, self.timeout) {
            Ok(reply) => parse_advice(&reply, events),
            Err(e @ (AdvisorError::Transport(_) | AdvisorError::Timeout)) if self.fallback => {
                log::warn!("remote advisor failed ({e}); using rule-based decisions");
                Ok(advise_rule_based(events).into_iter().map(|(n, d)| (n, (d, Provenance::RuleFallback))).collect())
            }
            Err(e) => Err(e),
        }
    }
}
