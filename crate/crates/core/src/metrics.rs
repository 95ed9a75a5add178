//! Diversity and relevance metrics over top-k generated questions.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CandidateSet, Instance, Question};
use crate::relevance::{Relevance, RelevanceError};
use crate::textproc::{ngrams, token_set, tokenize, NGramBag, TextError, TokenSeq, TokenSet, TokenizeConfig};

/// Relevance threshold for counting a question toward diversity.
pub const DEFAULT_ALPHA: f64 = 0.7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("both token sets are empty")]
    BothEmpty,
    #[error("k must be at least {min}, got {k}")]
    InvalidK { k: usize, min: usize },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error("need at least 2 questions, got {0}")]
    TooFewQuestions(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("input has zero variance")]
    ZeroVariance,
    #[error("key sets differ: only in first {only_first:?}, only in second {only_second:?}")]
    KeyMismatch {
        only_first: Vec<String>,
        only_second: Vec<String>,
    },
    #[error("instance {0:?} has no candidates")]
    MissingCandidates(String),
    #[error("no instances to aggregate")]
    EmptyCorpus,
    #[error("instance {id:?}: {source}")]
    Scorer {
        id: String,
        #[source]
        source: RelevanceError,
    },
}

/// Sums by recursive halving to bound rounding growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BASE: usize = 8;
    if xs.len() <= BASE {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| pairwise_sum(xs) / xs.len() as f64)
}

/// `(|a \ b| + |b \ a|) / |a ∪ b|`, i.e. one minus Jaccard similarity.
pub fn diverse_pair(a: &TokenSet, b: &TokenSet) -> Result<f64, MetricError> {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Err(MetricError::BothEmpty);
    }
    let sym = (a.len() - inter) + (b.len() - inter);
    Ok(sym as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiverseReport {
    pub instance_id: String,
    pub k_requested: usize,
    pub k_surviving: usize,
    /// Ranks (0-based, in the original candidate order) of questions that passed the gate.
    pub surviving_ranks: Vec<usize>,
    pub pair_scores: Vec<PairScore>,
    pub instance_score: f64,
}

impl DiverseReport {
    /// Unnormalized sum of pair scores.
    pub fn raw_sum(&self) -> f64 {
        let v: Vec<f64> = self.pair_scores.iter().map(|p| p.score).collect();
        pairwise_sum(&v)
    }
}

/// Gated mean pairwise diversity of the top `k` candidates.
///
/// Candidates scoring below `alpha` against `gold` are dropped before
/// pairing. With fewer than two survivors the score is 0. Two survivors whose
/// token sets are both empty count as identical.
pub fn diverse_at_k(
    candidates: &CandidateSet,
    gold: &Question,
    k: usize,
    scorer: &dyn Relevance,
    alpha: f64,
    tokenizer: &TokenizeConfig,
) -> Result<DiverseReport, MetricError> {
    if k < 2 {
        return Err(MetricError::InvalidK { k, min: 2 });
    }
    let top = candidates.top(k);
    if top.is_empty() {
        return Err(MetricError::MissingCandidates(candidates.instance_id.clone()));
    }
    let pairs: Vec<(&str, &str)> = top.iter().map(|q| (q.text.as_str(), gold.text.as_str())).collect();
    let relevance = scorer.batch_score(&pairs).map_err(|source| MetricError::Scorer {
        id: candidates.instance_id.clone(),
        source,
    })?;

    let survivors: Vec<(usize, TokenSet)> = top
        .iter()
        .zip(&relevance)
        .enumerate()
        .filter(|(_, (_, r))| **r >= alpha)
        .map(|(rank, (q, _))| (rank, token_set(&tokenize(&q.text, tokenizer))))
        .collect();

    let mut pair_scores = Vec::new();
    for (x, (ri, ti)) in survivors.iter().enumerate() {
        for (rj, tj) in &survivors[x + 1..] {
            let score = match diverse_pair(ti, tj) {
                Ok(s) => s,
                Err(MetricError::BothEmpty) => 0.0,
                Err(e) => return Err(e),
            };
            pair_scores.push(PairScore { i: *ri, j: *rj, score });
        }
    }
    let scores: Vec<f64> = pair_scores.iter().map(|p| p.score).collect();
    Ok(DiverseReport {
        instance_id: candidates.instance_id.clone(),
        k_requested: k,
        k_surviving: survivors.len(),
        surviving_ranks: survivors.iter().map(|(r, _)| *r).collect(),
        instance_score: mean(&scores).unwrap_or(0.0),
        pair_scores,
    })
}

/// Unique over total n-grams, pooled across the top `k` questions.
pub fn distinct_n(questions: &[TokenSeq], n: usize) -> Result<f64, MetricError> {
    let mut bag = NGramBag::empty(n)?;
    for q in questions {
        bag.extend_from(q);
    }
    if bag.total() == 0 {
        return Ok(0.0);
    }
    Ok(bag.unique() as f64 / bag.total() as f64)
}

/// Clipped n-gram precision for a single order, with optional brevity penalty.
pub fn bleu_n(candidate: &TokenSeq, reference: &TokenSeq, n: usize, brevity_penalty: bool) -> Result<f64, MetricError> {
    let cand = ngrams(candidate, n)?;
    if cand.total() == 0 {
        return Ok(0.0);
    }
    let refs = ngrams(reference, n)?;
    let clipped: usize = cand.iter().map(|(g, c)| c.min(refs.count(g))).sum();
    let precision = clipped as f64 / cand.total() as f64;
    let bp = if brevity_penalty && candidate.len() < reference.len() {
        (1.0 - reference.len() as f64 / candidate.len() as f64).exp()
    } else {
        1.0
    };
    Ok(precision * bp)
}

/// Mean `bleu_n` over all ordered pairs `(i, j)`, `i != j`, without brevity penalty.
pub fn self_bleu(questions: &[TokenSeq], n: usize) -> Result<f64, MetricError> {
    if questions.len() < 2 {
        return Err(MetricError::TooFewQuestions(questions.len()));
    }
    let mut scores = Vec::with_capacity(questions.len() * (questions.len() - 1));
    for (i, a) in questions.iter().enumerate() {
        for (j, b) in questions.iter().enumerate() {
            if i != j {
                scores.push(bleu_n(a, b, n, false)?);
            }
        }
    }
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(MetricError::TooFewQuestions(x.len()));
    }
    let constant = |v: &[f64]| v.iter().all(|e| *e == v[0]);
    if constant(x) || constant(y) {
        return Err(MetricError::ZeroVariance);
    }
    let (mx, my) = (mean(x).unwrap(), mean(y).unwrap());
    let dx: Vec<f64> = x.iter().map(|v| v - mx).collect();
    let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
    let sxy: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a * b).collect();
    let sxx: Vec<f64> = dx.iter().map(|a| a * a).collect();
    let syy: Vec<f64> = dy.iter().map(|b| b * b).collect();
    let (sxx, syy) = (pairwise_sum(&sxx), pairwise_sum(&syy));
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::ZeroVariance);
    }
    Ok((pairwise_sum(&sxy) / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson over two id-keyed score maps that must cover the same ids.
pub fn pearson_by_key(first: &BTreeMap<String, f64>, second: &BTreeMap<String, f64>) -> Result<f64, MetricError> {
    let only = |a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>| -> Vec<String> {
        a.keys().filter(|k| !b.contains_key(*k)).cloned().collect()
    };
    let (only_first, only_second) = (only(first, second), only(second, first));
    if !only_first.is_empty() || !only_second.is_empty() {
        return Err(MetricError::KeyMismatch { only_first, only_second });
    }
    let x: Vec<f64> = first.values().copied().collect();
    let y: Vec<f64> = second.values().copied().collect();
    pearson(&x, &y)
}

/// A per-instance metric over the top `k` candidates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "kebab-case")]
pub enum MetricSpec {
    /// Mean relevance of the top-k questions to the gold question.
    Relevance { k: usize },
    /// Mean single-order BLEU of the top-k questions against the gold question.
    Bleu { k: usize, n: usize, brevity_penalty: bool },
    Diverse { k: usize, alpha: f64 },
    Distinct { k: usize, n: usize },
    SelfBleu { k: usize, n: usize },
}

impl MetricSpec {
    pub fn k(&self) -> usize {
        match *self {
            MetricSpec::Relevance { k }
            | MetricSpec::Bleu { k, .. }
            | MetricSpec::Diverse { k, .. }
            | MetricSpec::Distinct { k, .. }
            | MetricSpec::SelfBleu { k, .. } => k,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            MetricSpec::Relevance { k } => format!("relevance@{k}"),
            MetricSpec::Bleu { k, n, .. } => format!("bleu-{n}@{k}"),
            MetricSpec::Diverse { k, .. } => format!("diverse@{k}"),
            MetricSpec::Distinct { k, n } => format!("dist-{n}@{k}"),
            MetricSpec::SelfBleu { k, n } => format!("self-bleu-{n}@{k}"),
        }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        let min_k = match self {
            MetricSpec::Diverse { .. } | MetricSpec::SelfBleu { .. } => 2,
            _ => 1,
        };
        if self.k() < min_k {
            return Err(MetricError::InvalidK { k: self.k(), min: min_k });
        }
        match *self {
            MetricSpec::Bleu { n, .. } | MetricSpec::Distinct { n, .. } | MetricSpec::SelfBleu { n, .. } if n == 0 => {
                Err(TextError::InvalidN(n).into())
            }
            _ => Ok(()),
        }
    }

    /// Value of this metric for one instance.
    pub fn instance_value(
        &self,
        instance: &Instance,
        scorer: &dyn Relevance,
        tokenizer: &TokenizeConfig,
    ) -> Result<f64, MetricError> {
        let candidates = instance
            .candidates
            .as_ref()
            .ok_or_else(|| MetricError::MissingCandidates(instance.id.clone()))?;
        let top = candidates.top(self.k());
        let toks = || -> Vec<TokenSeq> { top.iter().map(|q| tokenize(&q.text, tokenizer)).collect() };
        match *self {
            MetricSpec::Relevance { .. } => {
                let pairs: Vec<(&str, &str)> = top.iter().map(|q| (q.text.as_str(), instance.gold.text.as_str())).collect();
                let scores = scorer.batch_score(&pairs).map_err(|source| MetricError::Scorer {
                    id: instance.id.clone(),
                    source,
                })?;
                Ok(mean(&scores).unwrap_or(0.0))
            }
            MetricSpec::Bleu { n, brevity_penalty, .. } => {
                let gold = tokenize(&instance.gold.text, tokenizer);
                let scores = toks()
                    .iter()
                    .map(|c| bleu_n(c, &gold, n, brevity_penalty))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(mean(&scores).unwrap_or(0.0))
            }
            MetricSpec::Diverse { k, alpha } => {
                Ok(diverse_at_k(candidates, &instance.gold, k, scorer, alpha, tokenizer)?.instance_score)
            }
            MetricSpec::Distinct { n, .. } => distinct_n(&toks(), n),
            MetricSpec::SelfBleu { n, .. } => self_bleu(&toks(), n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceValue {
    pub id: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusMetricReport {
    pub metric_name: String,
    pub params: MetricSpec,
    pub corpus_value: f64,
    pub per_instance: Vec<InstanceValue>,
}

/// Evaluates `metric` on every instance (in parallel) and averages.
pub fn corpus_metric(
    instances: &[Instance],
    metric: &MetricSpec,
    scorer: &dyn Relevance,
    tokenizer: &TokenizeConfig,
) -> Result<CorpusMetricReport, MetricError> {
    metric.validate()?;
    if instances.is_empty() {
        return Err(MetricError::EmptyCorpus);
    }
    if let Some(i) = instances.iter().find(|i| i.candidates.is_none()) {
        return Err(MetricError::MissingCandidates(i.id.clone()));
    }
    let values: Vec<f64> = instances
        .par_iter()
        .map(|inst| metric.instance_value(inst, scorer, tokenizer))
        .collect::<Result<_, _>>()?;
    Ok(CorpusMetricReport {
        metric_name: metric.name(),
        params: *metric,
        corpus_value: mean(&values).expect("non-empty"),
        per_instance: instances
            .iter()
            .zip(values)
            .map(|(i, value)| InstanceValue { id: i.id.clone(), value })
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Subgraph, Triplet};
    use crate::relevance::{RelevanceScorer, ScorerKind};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn set(v: &[&str]) -> TokenSet {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn seq(v: &[&str]) -> TokenSeq {
        TokenSeq::from_tokens(v.iter().copied())
    }

    fn cands(texts: &[&str]) -> CandidateSet {
        CandidateSet::new(
            "i",
            texts.iter().enumerate().map(|(n, t)| Question::new(format!("c{n}"), *t)).collect(),
        )
    }

    /// Scores every candidate by a fixed per-text table.
    struct Fixed(Vec<(String, f64)>);

    impl Relevance for Fixed {
        fn score(&self, a: &str, _b: &str) -> Result<f64, RelevanceError> {
            Ok(self.0.iter().find(|(t, _)| t == a).map(|(_, s)| *s).unwrap_or(0.0))
        }
        fn kind(&self) -> ScorerKind {
            ScorerKind::Lexical
        }
    }

    fn lexical() -> RelevanceScorer {
        RelevanceScorer::lexical(TokenizeConfig::default())
    }

    #[test]
    fn diverse_pair_examples() {
        assert_eq!(diverse_pair(&set(&["x", "y"]), &set(&["x", "y"])).unwrap(), 0.0);
        assert_eq!(diverse_pair(&set(&["x", "y"]), &set(&["u", "v"])).unwrap(), 1.0);
        let a = set(&["what", "team", "did", "warren", "moon", "play", "for"]);
        let b = set(&["who", "did", "warren", "moon", "play", "for"]);
        assert_eq!(diverse_pair(&a, &b).unwrap(), 0.375);
        assert_eq!(diverse_pair(&set(&[]), &set(&[])), Err(MetricError::BothEmpty));
        assert_eq!(diverse_pair(&set(&["a"]), &set(&[])).unwrap(), 1.0);
    }

    #[test]
    fn diverse_at_k_examples() {
        let gold = Question::new("g", "who did warren moon play for");
        let c = cands(&["same q", "same q", "same q"]);
        let pass = Fixed(vec![("same q".into(), 1.0)]);
        let r = diverse_at_k(&c, &gold, 3, &pass, 0.7, &TokenizeConfig::default()).unwrap();
        assert_eq!((r.k_surviving, r.instance_score), (3, 0.0));

        let c = cands(&["a", "b", "c"]);
        let one = Fixed(vec![("b".into(), 0.9), ("a".into(), 0.1), ("c".into(), 0.69)]);
        let r = diverse_at_k(&c, &gold, 3, &one, 0.7, &TokenizeConfig::default()).unwrap();
        assert_eq!((r.k_surviving, r.instance_score), (1, 0.0));
        assert!(r.pair_scores.is_empty());
        assert_eq!(r.surviving_ranks, vec![1]);

        let c = cands(&[
            "who did warren moon play for",
            "what team did warren moon play for",
            "who did warren moon play for",
        ]);
        let r = diverse_at_k(&c, &gold, 3, &lexical(), 0.0, &TokenizeConfig::default()).unwrap();
        let scores: Vec<_> = r.pair_scores.iter().map(|p| (p.i, p.j, p.score)).collect();
        assert_eq!(scores, vec![(0, 1, 0.375), (0, 2, 0.0), (1, 2, 0.375)]);
        assert_eq!(r.instance_score, 0.25);
        assert_eq!(r.raw_sum(), 0.75);
    }

    #[test]
    fn diverse_at_k_rejects_small_k() {
        let c = cands(&["a", "b"]);
        let gold = Question::new("g", "a");
        assert_eq!(
            diverse_at_k(&c, &gold, 1, &lexical(), 0.7, &TokenizeConfig::default()),
            Err(MetricError::InvalidK { k: 1, min: 2 })
        );
    }

    #[test]
    fn diverse_at_k_truncates_to_k() {
        let c = cands(&["a b", "a c", "x y", "z w"]);
        let gold = Question::new("g", "a");
        let r = diverse_at_k(&c, &gold, 2, &Fixed(vec![]), -1.0, &TokenizeConfig::default()).unwrap();
        assert_eq!(r.k_surviving, 2);
        // {a,b} vs {a,c}: 2 / 3
        assert!((r.instance_score - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn distinct_examples() {
        assert!((distinct_n(&[seq(&["a", "a", "b"])], 1).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(distinct_n(&[seq(&["a", "b"]), seq(&["a", "b"])], 1).unwrap(), 0.5);
        assert_eq!(distinct_n(&[seq(&["a", "b"]), seq(&["c", "d"])], 1).unwrap(), 1.0);
        assert_eq!(distinct_n(&[seq(&["a"])], 2).unwrap(), 0.0);
        assert_eq!(distinct_n(&[seq(&["a"])], 0), Err(MetricError::Text(TextError::InvalidN(0))));
        // No window crosses from one question into the next.
        assert_eq!(distinct_n(&[seq(&["a", "b"]), seq(&["c", "d"])], 2).unwrap(), 1.0);
    }

    #[test]
    fn bleu_examples() {
        let abc = seq(&["a", "b", "c"]);
        assert_eq!(bleu_n(&abc, &abc, 1, true).unwrap(), 1.0);
        assert!((bleu_n(&seq(&["a", "a", "a"]), &seq(&["a", "b"]), 1, false).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(bleu_n(&seq(&["x", "y"]), &seq(&["a", "b"]), 1, true).unwrap(), 0.0);
        assert_eq!(bleu_n(&seq(&["a"]), &abc, 2, true).unwrap(), 0.0);
        // Short candidate: precision 1, penalty exp(1 - 3/2).
        let p = bleu_n(&seq(&["a", "b"]), &abc, 1, true).unwrap();
        assert!((p - (-0.5f64).exp()).abs() < 1e-15);
        assert_eq!(bleu_n(&abc, &abc, 0, true), Err(MetricError::Text(TextError::InvalidN(0))));
    }

    #[test]
    fn self_bleu_examples() {
        let q = seq(&["a", "b"]);
        assert_eq!(self_bleu(&[q.clone(), q.clone()], 1).unwrap(), 1.0);
        assert_eq!(self_bleu(&[q.clone(), seq(&["c", "d"])], 1).unwrap(), 0.0);
        let v = self_bleu(&[seq(&["a", "b"]), seq(&["a", "c"]), seq(&["a", "b"])], 1).unwrap();
        assert!((v - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(self_bleu(&[q], 1), Err(MetricError::TooFewQuestions(1)));
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), Err(MetricError::ZeroVariance));
        assert_eq!(pearson(&[1.0, 2.0], &[1.0]), Err(MetricError::LengthMismatch(2, 1)));
        assert_eq!(pearson(&[0.1; 3], &[1.0, 2.0, 3.0]), Err(MetricError::ZeroVariance));
    }

    fn instance(id: &str, cands_text: Option<&[&str]>) -> Instance {
        Instance {
            id: id.into(),
            subgraph: Subgraph {
                triplets: vec![Triplet::new("a", "r", "b")],
                answer: None,
            },
            gold: Question::new("g", "a b c"),
            candidates: cands_text.map(|t| {
                let mut c = cands(t);
                c.instance_id = id.into();
                c
            }),
        }
    }

    #[test]
    fn corpus_mean_and_errors() {
        // Dist-1 values 0.5 and 1.0.
        let insts = vec![instance("i1", Some(&["a b", "a b"])), instance("i2", Some(&["a b", "c d"]))];
        let spec = MetricSpec::Distinct { k: 2, n: 1 };
        let rep = corpus_metric(&insts, &spec, &lexical(), &TokenizeConfig::default()).unwrap();
        assert_eq!(rep.corpus_value, 0.75);
        assert_eq!(rep.per_instance.iter().map(|v| v.id.as_str()).collect::<Vec<_>>(), ["i1", "i2"]);
        assert_eq!(rep.metric_name, "dist-1@2");

        let one = corpus_metric(&insts[..1], &spec, &lexical(), &TokenizeConfig::default()).unwrap();
        assert_eq!(one.corpus_value, one.per_instance[0].value);

        let bad = vec![instance("i1", Some(&["a"])), instance("i2", None)];
        assert_eq!(
            corpus_metric(&bad, &spec, &lexical(), &TokenizeConfig::default()),
            Err(MetricError::MissingCandidates("i2".into()))
        );
        assert!(matches!(
            corpus_metric(&insts, &MetricSpec::Diverse { k: 1, alpha: 0.7 }, &lexical(), &TokenizeConfig::default()),
            Err(MetricError::InvalidK { .. })
        ));
    }

    #[test]
    fn relevance_and_bleu_columns() {
        let insts = vec![instance("i1", Some(&["a b c", "x y z"]))];
        let tok = TokenizeConfig::default();
        let rel = corpus_metric(&insts, &MetricSpec::Relevance { k: 2 }, &lexical(), &tok).unwrap();
        assert_eq!(rel.corpus_value, 0.5);
        let bleu = corpus_metric(
            &insts,
            &MetricSpec::Bleu {
                k: 2,
                n: 1,
                brevity_penalty: true,
            },
            &lexical(),
            &tok,
        )
        .unwrap();
        assert_eq!(bleu.corpus_value, 0.5);
    }

    fn small_set() -> impl Strategy<Value = BTreeSet<String>> {
        prop::collection::btree_set("[a-h]", 0..6)
    }

    proptest! {
        #[test]
        fn diverse_pair_is_symmetric_bounded_jaccard(a in small_set(), b in small_set()) {
            prop_assume!(!(a.is_empty() && b.is_empty()));
            let ab = diverse_pair(&a, &b).unwrap();
            prop_assert_eq!(ab, diverse_pair(&b, &a).unwrap());
            prop_assert!((0.0..=1.0).contains(&ab));
            let inter = a.intersection(&b).count() as f64;
            let union = a.union(&b).count() as f64;
            prop_assert!((ab - (1.0 - inter / union)).abs() < 1e-15);
            prop_assert_eq!(diverse_pair(&a, &a).unwrap_or(0.0), 0.0);
        }

        #[test]
        fn raising_alpha_never_adds_survivors(scores in prop::collection::vec(0.0f64..1.0, 2..8), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let texts: Vec<String> = (0..scores.len()).map(|i| format!("t{i} x")).collect();
            let fixed = Fixed(texts.iter().cloned().zip(scores).collect());
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let c = cands(&refs);
            let g = Question::new("g", "x");
            let tok = TokenizeConfig::default();
            let a = diverse_at_k(&c, &g, 10, &fixed, lo, &tok).unwrap();
            let b = diverse_at_k(&c, &g, 10, &fixed, hi, &tok).unwrap();
            prop_assert!(b.k_surviving <= a.k_surviving);
            prop_assert_eq!(a.pair_scores.len(), a.k_surviving * a.k_surviving.saturating_sub(1) / 2);
        }

        #[test]
        fn duplicating_never_raises_distinct(qs in prop::collection::vec(prop::collection::vec("[a-c]", 1..5), 1..4), n in 1usize..3) {
            let seqs: Vec<TokenSeq> = qs.into_iter().map(TokenSeq::from_tokens).collect();
            let doubled: Vec<TokenSeq> = seqs.iter().chain(seqs.iter()).cloned().collect();
            let once = distinct_n(&seqs, n).unwrap();
            let twice = distinct_n(&doubled, n).unwrap();
            prop_assert!(twice <= once);
            if once > 0.0 {
                prop_assert!((twice - once / 2.0).abs() < 1e-12);
                prop_assert!(once <= 1.0);
            }
        }

        #[test]
        fn bleu_bounded_and_reflexive(a in prop::collection::vec("[a-c]", 0..8), b in prop::collection::vec("[a-c]", 0..8), n in 1usize..4) {
            let (a, b) = (TokenSeq::from_tokens(a), TokenSeq::from_tokens(b));
            let v = bleu_n(&a, &b, n, true).unwrap();
            prop_assert!((0.0..=1.0).contains(&v));
            if a.len() >= n {
                prop_assert_eq!(bleu_n(&a, &a, n, true).unwrap(), 1.0);
            }
        }

        #[test]
        fn pearson_affine_invariant(
            x in prop::collection::vec(-10.0f64..10.0, 3..20),
            noise in prop::collection::vec(-1.0f64..1.0, 20),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, e)| a * 0.5 + e).collect();
            let Ok(r) = pearson(&x, &y) else { return Ok(()) };
            let x2: Vec<f64> = x.iter().map(|v| v * scale + shift).collect();
            let r2 = pearson(&x2, &y).unwrap();
            prop_assert!((r - r2).abs() < 1e-12, "{} vs {}", r, r2);
        }
    }
}
