//! How the relevance gate changes Diverse@k: off-topic candidates look
//! diverse but are dropped once alpha is raised.

use divq::corpus::{CandidateSet, Question};
use divq::metrics::diverse_at_k;
use divq::relevance::{Relevance, RelevanceScorer};
use divq::textproc::TokenizeConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold = Question::new("g", "who is the head coach of the ravens ?");
    let candidates = CandidateSet::new(
        "wq-17",
        ["who is the coach of the ravens ?", "the ravens head coach is who ?", "how tall is mount everest ?", "which city hosts the ravens ?"]
            .iter()
            .enumerate()
            .map(|(i, t)| Question::new(format!("c{i}"), *t))
            .collect(),
    );
    let scorer = RelevanceScorer::lexical(TokenizeConfig::default());
    for q in &candidates.questions {
        println!("relevance {:.3}  {}", scorer.score(&q.text, &gold.text)?, q.text);
    }
    println!();
    for alpha in [0.0, 0.3, 0.5, 0.7] {
        let r = diverse_at_k(&candidates, &gold, 4, &scorer, alpha, &TokenizeConfig::default())?;
        println!(
            "alpha {alpha:.1}: {} of {} survive {:?}, Diverse@4 = {:.4}",
            r.k_surviving, r.k_requested, r.surviving_ranks, r.instance_score
        );
    }
    Ok(())
}
