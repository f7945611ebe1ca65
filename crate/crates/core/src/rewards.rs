//! Rewards for NL-to-STL generations and the exact-match accuracy metric.
//!
//! A generation is free text that should hold a `<think>` span with the
//! reasoning and an `<answer>` span with the formula. Every function here
//! is pure and deterministic.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stl::{exact_match, parse_stl, tokenize};
use crate::world::RegionTable;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RewardError {
    #[error("GroupTooSmall: advantages need at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("InvalidReference at entry {index}: {message}")]
    InvalidReference { index: usize, message: String },
    #[error("EmptyCorpus")]
    EmptyCorpus,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
}

/// Reward coefficients. `k1 > k2 > k3` orders the format cases; `k4` pays
/// per reasoning token up to `l_max`; `k5` is the syntax bonus (or
/// penalty); `k6` scales BLEU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
    pub k5: f64,
    pub k6: f64,
    pub l_max: usize,
    pub bleu_n: usize,
    /// Per-order BLEU weights; uniform over `bleu_n` orders when empty.
    pub bleu_weights: Vec<f64>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            k1: 1.0,
            k2: 0.25,
            k3: -1.0,
            k4: 0.001,
            k5: 1.0,
            k6: 2.0,
            l_max: 512,
            bleu_n: 4,
            bleu_weights: Vec::new(),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), RewardError> {
        let bad = |m: &str| Err(RewardError::InvalidConfig(m.to_string()));
        if self.l_max == 0 {
            return bad("l_max must be positive");
        }
        if self.bleu_n == 0 {
            return bad("bleu_n must be at least 1");
        }
        if !self.bleu_weights.is_empty() {
            if self.bleu_weights.len() != self.bleu_n {
                return bad("bleu_weights needs one weight per order");
            }
            if self.bleu_weights.iter().any(|w| !w.is_finite() || *w < 0.0) || (self.bleu_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return bad("bleu_weights must be nonnegative and sum to 1");
            }
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        if self.bleu_weights.is_empty() {
            vec![1.0 / self.bleu_n as f64; self.bleu_n]
        } else {
            self.bleu_weights.clone()
        }
    }
}

/// Byte range of the contents of the first `<tag>…</tag>` pair, where the
/// contents hold no second opening tag.
fn span(text: &str, tag: &str, from: usize) -> Option<(usize, usize)> {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    let start = from + text[from..].find(&open)? + open.len();
    let len = text[start..].find(&close)?;
    if text[start..start + len].contains(&open) {
        return None;
    }
    Some((start, start + len))
}

/// Well-formed think and answer spans. When the two overlap, the one that
/// opens later is dropped.
fn spans(text: &str) -> (Option<(usize, usize)>, Option<(usize, usize)>) {
    let think = span(text, "think", 0);
    let answer = span(text, "answer", 0);
    let outer = |(s, e): (usize, usize), tag: &str| (s - tag.len() - 2, e + tag.len() + 3);
    match (think, answer) {
        (Some(t), Some(a)) => {
            let (ts, te) = outer(t, "think");
            let (as_, ae) = outer(a, "answer");
            if te <= as_ || ae <= ts {
                (Some(t), Some(a))
            } else if ts < as_ {
                (Some(t), None)
            } else {
                (None, Some(a))
            }
        }
        other => other,
    }
}

fn think_span(text: &str) -> Option<&str> {
    spans(text).0.map(|(s, e)| &text[s..e])
}

/// Contents of the answer span, or the whole text when there is none.
pub fn answer_text(text: &str) -> &str {
    match spans(text).1 {
        Some((s, e)) => &text[s..e],
        None => text,
    }
}

pub fn reward_cot_format(text: &str, cfg: &RewardConfig) -> f64 {
    match spans(text) {
        (Some(_), Some(_)) => cfg.k1,
        (None, None) => cfg.k3,
        _ => cfg.k2,
    }
}

/// `k4` per whitespace-separated token of the think span, capped at `l_max`.
pub fn reward_cot_length(text: &str, cfg: &RewardConfig) -> f64 {
    let n = think_span(text).map_or(0, |t| t.split_whitespace().count());
    cfg.k4 * n.min(cfg.l_max) as f64
}

/// `+k5` when the answer parses with every region known to `table`,
/// `-k5` otherwise.
pub fn reward_stl_syntax(text: &str, cfg: &RewardConfig, table: &RegionTable) -> f64 {
    if parse_stl(answer_text(text).trim(), table).is_ok() {
        cfg.k5
    } else {
        -cfg.k5
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Clipped n-gram precision of `hyp` against `reference`; `None` when
/// `hyp` has no n-gram of that order.
pub fn ngram_precision(hyp: &[String], reference: &[String], order: usize) -> Option<f64> {
    let total = hyp.len().checked_sub(order - 1).filter(|&t| t > 0)?;
    let refs = ngram_counts(reference, order);
    let matched: usize = ngram_counts(hyp, order).iter().map(|(g, &c)| c.min(refs.get(g).copied().unwrap_or(0))).sum();
    Some(matched as f64 / total as f64)
}

/// BLEU with clipped n-gram precision and no smoothing. An order for which
/// neither sequence has an n-gram is left out and the remaining weights
/// are rescaled, so identical short sequences still score 1.
pub fn bleu(hyp: &[String], reference: &[String], n: usize, weights: &[f64]) -> f64 {
    assert!(n >= 1 && weights.len() == n, "one weight per n-gram order");
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    let mut weight_sum = 0.0;
    for order in 1..=n {
        let p = match ngram_precision(hyp, reference, order) {
            None if reference.len() < order => continue,
            None => return 0.0,
            Some(p) if p == 0.0 => return 0.0,
            Some(p) => p,
        };
        let w = weights[order - 1];
        log_sum += w * p.ln();
        weight_sum += w;
    }
    let c = hyp.len() as f64;
    let r = reference.len() as f64;
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };
    if weight_sum > 0.0 {
        bp * (log_sum / weight_sum).exp()
    } else {
        bp
    }
}

/// `k6` times BLEU between the lexer tokens of the answer and of `reference`.
pub fn reward_bleu(text: &str, reference: &str, cfg: &RewardConfig) -> f64 {
    let hyp = tokenize(answer_text(text));
    let reference = tokenize(reference);
    cfg.k6 * bleu(&hyp, &reference, cfg.bleu_n, &cfg.weights())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub format: f64,
    pub length: f64,
    pub syntax: f64,
    pub correct: f64,
    pub total: f64,
}

pub fn score(text: &str, reference: &str, cfg: &RewardConfig, table: &RegionTable) -> RewardBreakdown {
    let format = reward_cot_format(text, cfg);
    let length = reward_cot_length(text, cfg);
    let syntax = reward_stl_syntax(text, cfg, table);
    let correct = reward_bleu(text, reference, cfg);
    RewardBreakdown {
        format,
        length,
        syntax,
        correct,
        total: format + length + syntax + correct,
    }
}

pub fn total_reward(text: &str, reference: &str, cfg: &RewardConfig, table: &RegionTable) -> f64 {
    score(text, reference, cfg, table).total
}

/// Rewards of one sampling group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupRewards {
    pub rewards: Vec<f64>,
    /// Added to the standard deviation so constant groups map to zero.
    pub eps: f64,
}

impl GroupRewards {
    pub const DEFAULT_EPS: f64 = 1e-8;

    pub fn new(rewards: Vec<f64>) -> Self {
        GroupRewards {
            rewards,
            eps: Self::DEFAULT_EPS,
        }
    }
}

/// `(R_i - mean) / (std + eps)` with the population standard deviation.
/// Every token of sample `i` shares its advantage.
pub fn group_advantages(gr: &GroupRewards) -> Result<Vec<f64>, RewardError> {
    let g = gr.rewards.len();
    if g < 2 {
        return Err(RewardError::GroupTooSmall(g));
    }
    let mean = gr.rewards.iter().sum::<f64>() / g as f64;
    let var = gr.rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / g as f64;
    let denom = var.sqrt() + gr.eps;
    Ok(gr.rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// One line of a scoring corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub hyp: String,
    #[serde(rename = "ref")]
    pub reference: String,
}

/// Fraction of entries whose answer is canonically equal to the reference.
/// An unparseable hypothesis is a miss; an unparseable reference is an error.
pub fn corpus_accuracy(entries: &[CorpusEntry], table: &RegionTable) -> Result<f64, RewardError> {
    if entries.is_empty() {
        return Err(RewardError::EmptyCorpus);
    }
    let mut hits = 0;
    for (index, e) in entries.iter().enumerate() {
        match exact_match(answer_text(&e.hyp).trim(), e.reference.trim(), table) {
            Ok(true) => hits += 1,
            Ok(false) => {}
            Err(err) => {
                return Err(RewardError::InvalidReference {
                    index,
                    message: err.to_string(),
                })
            }
        }
    }
    Ok(hits as f64 / entries.len() as f64)
}
