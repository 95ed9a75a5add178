//! Reliable pseudo-pair selection.
//!
//! Two strategies feed the dual training loop:
//!
//! * **Round-trip filtering** ([`select_backward`]): a pseudo source produced by
//!   the backward model from an external question is kept when the forward
//!   model's regeneration from that source stays semantically close to the
//!   external question.
//! * **Relevant-but-different** ([`select_forward`]): among a training
//!   instance's generated questions that are relevant to the gold question,
//!   keep the single one whose wording differs most from it.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Instance, Question};
use crate::metrics::diverse_pair;
use crate::relevance::{Relevance, RelevanceError};
use crate::textproc::{linearize, token_set, tokenize, TokenizeConfig};

pub const SCORE_ROUNDTRIP: &str = "roundtrip_semantic";
pub const SCORE_RELEVANCE: &str = "relevance";
pub const SCORE_DIVERSE: &str = "diverse";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("{origin_id}: {source}")]
    Scorer {
        origin_id: String,
        #[source]
        source: RelevanceError,
    },
    #[error("instance {0:?} has no generated questions")]
    EmptyGroup(String),
}

/// Which model produced the pair's synthetic side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// `(b(Q), Q)`: synthetic source for an external question.
    Backward,
    /// `(f(G), G)`: synthetic question for a training subgraph.
    Forward,
}

/// A training pair where one side is model-generated.
///
/// `source` is always the triplet-side sequence and `target` the question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoPair {
    pub source: String,
    pub target: String,
    pub origin_id: String,
    pub direction: Direction,
    pub iteration: u32,
    pub epoch: u32,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejected {
    pub pair: PseudoPair,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub selected: Vec<PseudoPair>,
    pub rejected: Vec<Rejected>,
    pub threshold_used: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub input: usize,
    pub selected: usize,
    pub rejected: usize,
    pub threshold: f64,
}

impl SelectionOutcome {
    pub fn summary(&self) -> SelectionSummary {
        SelectionSummary {
            input: self.selected.len() + self.rejected.len(),
            selected: self.selected.len(),
            rejected: self.rejected.len(),
            threshold: self.threshold_used,
        }
    }
}

/// A score threshold and whether equality passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRule {
    pub threshold: f64,
    pub inclusive: bool,
}

impl ThresholdRule {
    pub fn strict(threshold: f64) -> Self {
        ThresholdRule {
            threshold,
            inclusive: false,
        }
    }

    pub fn inclusive(threshold: f64) -> Self {
        ThresholdRule {
            threshold,
            inclusive: true,
        }
    }

    pub fn passes(&self, score: f64) -> bool {
        if self.inclusive {
            score >= self.threshold
        } else {
            score > self.threshold
        }
    }

    fn failure(&self, name: &str, score: f64) -> String {
        let op = if self.inclusive { "<" } else { "≤" };
        format!("{name} {score:?} {op} {:?}", self.threshold)
    }
}

/// Iteration and epoch stamped on every produced pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Provenance {
    pub iteration: u32,
    pub epoch: u32,
}

/// One external question with its backward-model source and the forward
/// model's regeneration from that source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrip {
    pub origin_id: String,
    pub pseudo_source: String,
    pub external: Question,
    pub roundtrip: Question,
}

/// Keeps pairs whose round-trip question scores above `rule` against the
/// external question.
pub fn select_backward(
    items: &[RoundTrip],
    scorer: &dyn Relevance,
    rule: ThresholdRule,
    provenance: Provenance,
) -> Result<SelectionOutcome, SelectionError> {
    let mut outcome = SelectionOutcome {
        selected: Vec::new(),
        rejected: Vec::new(),
        threshold_used: rule.threshold,
    };
    if items.is_empty() {
        return Ok(outcome);
    }
    let pairs: Vec<(&str, &str)> = items
        .iter()
        .map(|t| (t.roundtrip.text.as_str(), t.external.text.as_str()))
        .collect();
    let scores = scorer.batch_score(&pairs).map_err(|e| match e {
        RelevanceError::AtPair { index, source } => SelectionError::Scorer {
            origin_id: items[index].origin_id.clone(),
            source: *source,
        },
        other => SelectionError::Scorer {
            origin_id: items[0].origin_id.clone(),
            source: other,
        },
    })?;
    for (item, score) in items.iter().zip(scores) {
        let pair = PseudoPair {
            source: item.pseudo_source.clone(),
            target: item.external.text.clone(),
            origin_id: item.origin_id.clone(),
            direction: Direction::Backward,
            iteration: provenance.iteration,
            epoch: provenance.epoch,
            scores: BTreeMap::from([(SCORE_ROUNDTRIP.to_owned(), score)]),
        };
        if rule.passes(score) {
            outcome.selected.push(pair);
        } else {
            outcome.rejected.push(Rejected {
                reason: rule.failure(SCORE_ROUNDTRIP, score),
                pair,
            });
        }
    }
    Ok(outcome)
}

/// A training instance and the forward model's top-k questions for it.
#[derive(Debug, Clone, Copy)]
pub struct ForwardGroup<'a> {
    pub instance: &'a Instance,
    pub generated: &'a [Question],
}

#[derive(Debug, Clone)]
pub struct ForwardOptions {
    pub rule: ThresholdRule,
    /// Only the first `k` generated questions of each group are considered.
    pub k: usize,
    pub separator: String,
    pub tokenizer: TokenizeConfig,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        ForwardOptions {
            rule: ThresholdRule::inclusive(0.7),
            k: 5,
            separator: crate::textproc::DEFAULT_SEPARATOR.to_owned(),
            tokenizer: TokenizeConfig::default(),
        }
    }
}

fn select_group(
    group: &ForwardGroup<'_>,
    scorer: &dyn Relevance,
    opts: &ForwardOptions,
    provenance: Provenance,
) -> Result<(Option<PseudoPair>, Vec<Rejected>), SelectionError> {
    let inst = group.instance;
    if group.generated.is_empty() {
        return Err(SelectionError::EmptyGroup(inst.id.clone()));
    }
    let generated = &group.generated[..opts.k.min(group.generated.len())];
    let pairs: Vec<(&str, &str)> = generated.iter().map(|q| (q.text.as_str(), inst.gold.text.as_str())).collect();
    let relevance = scorer.batch_score(&pairs).map_err(|e| SelectionError::Scorer {
        origin_id: inst.id.clone(),
        source: match e {
            RelevanceError::AtPair { source, .. } => *source,
            other => other,
        },
    })?;

    let source = linearize(&inst.subgraph, &opts.separator);
    let gold_tokens = token_set(&tokenize(&inst.gold.text, &opts.tokenizer));
    let make_pair = |q: &Question, scores: BTreeMap<String, f64>| PseudoPair {
        source: source.clone(),
        target: q.text.clone(),
        origin_id: inst.id.clone(),
        direction: Direction::Forward,
        iteration: provenance.iteration,
        epoch: provenance.epoch,
        scores,
    };

    let mut rejected = Vec::new();
    let mut keepers: Vec<(usize, f64, PseudoPair)> = Vec::new();
    for (rank, (q, rel)) in generated.iter().zip(relevance).enumerate() {
        let mut scores = BTreeMap::from([(SCORE_RELEVANCE.to_owned(), rel)]);
        if !opts.rule.passes(rel) {
            rejected.push(Rejected {
                reason: opts.rule.failure(SCORE_RELEVANCE, rel),
                pair: make_pair(q, scores),
            });
            continue;
        }
        let div = diverse_pair(&token_set(&tokenize(&q.text, &opts.tokenizer)), &gold_tokens).unwrap_or(0.0);
        scores.insert(SCORE_DIVERSE.to_owned(), div);
        keepers.push((rank, div, make_pair(q, scores)));
    }

    // Highest diversity wins; ties keep the earliest rank.
    let mut best: Option<usize> = None;
    for (idx, (_, div, _)) in keepers.iter().enumerate() {
        if best.is_none_or(|b| *div > keepers[b].1) {
            best = Some(idx);
        }
    }
    let Some(best) = best else {
        return Ok((None, rejected));
    };
    let (best_rank, best_div) = (keepers[best].0, keepers[best].1);
    let mut winner = None;
    for (idx, (_, div, pair)) in keepers.into_iter().enumerate() {
        if idx == best {
            winner = Some(pair);
            continue;
        }
        let reason = if div == best_div {
            format!("diverse {div:?} tied with rank {best_rank}, lower rank wins")
        } else {
            format!("diverse {div:?} below best {best_div:?} at rank {best_rank}")
        };
        rejected.push(Rejected { pair, reason });
    }
    Ok((winner, rejected))
}

/// Picks at most one relevant-but-different question per instance.
pub fn select_forward(
    groups: &[ForwardGroup<'_>],
    scorer: &dyn Relevance,
    opts: &ForwardOptions,
    provenance: Provenance,
) -> Result<SelectionOutcome, SelectionError> {
    let per_group: Vec<_> = groups
        .par_iter()
        .map(|g| select_group(g, scorer, opts, provenance))
        .collect::<Result<_, _>>()?;
    let mut outcome = SelectionOutcome {
        selected: Vec::new(),
        rejected: Vec::new(),
        threshold_used: opts.rule.threshold,
    };
    for (winner, rejected) in per_group {
        outcome.selected.extend(winner);
        outcome.rejected.extend(rejected);
    }
    Ok(outcome)
}
