//! Both selection rules: round-trip filtering of external questions and
//! most-diverse-relevant choice among generated questions.

use divq::corpus::{Instance, Question, Subgraph, Triplet};
use divq::relevance::RelevanceScorer;
use divq::selection::{
    select_backward, select_forward, ForwardGroup, ForwardOptions, Provenance, RoundTrip, ThresholdRule,
};
use divq::textproc::TokenizeConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scorer = RelevanceScorer::lexical(TokenizeConfig::default());

    let trips = vec![
        RoundTrip {
            origin_id: "q1".into(),
            pseudo_source: "ravens </s> plays in </s> baltimore".into(),
            external: Question::new("q1", "where do the ravens play ?"),
            roundtrip: Question::new("q1#rt", "where do the ravens play ?"),
        },
        RoundTrip {
            origin_id: "q2".into(),
            pseudo_source: "film </s> directed by".into(),
            external: Question::new("q2", "who directed the film ?"),
            roundtrip: Question::new("q2#rt", "what year was it released ?"),
        },
    ];
    let back = select_backward(&trips, &scorer, ThresholdRule::strict(0.7), Provenance::default())?;
    println!("round trips: {:?}", back.summary());
    for r in &back.rejected {
        println!("  rejected {}: {}", r.pair.origin_id, r.reason);
    }

    let inst = Instance {
        id: "wq-3".into(),
        subgraph: Subgraph {
            triplets: vec![Triplet::new("baltimore ravens", "sports.team.coach", "john harbaugh")],
            answer: Some("john harbaugh".into()),
        },
        gold: Question::new("g", "who is the coach of the baltimore ravens ?"),
        candidates: None,
    };
    let generated: Vec<Question> = [
        "who is the coach of the baltimore ravens ?",
        "the baltimore ravens are coached by whom ?",
        "who coaches the ravens of baltimore ?",
        "how tall is mount everest ?",
    ]
    .iter()
    .enumerate()
    .map(|(i, t)| Question::new(format!("wq-3#{i}"), *t))
    .collect();
    let opts = ForwardOptions {
        rule: ThresholdRule::inclusive(0.45),
        ..ForwardOptions::default()
    };
    let fwd = select_forward(&[ForwardGroup { instance: &inst, generated: &generated }], &scorer, &opts, Provenance::default())?;
    for p in &fwd.selected {
        println!("kept for {}: {:?} {:?}", p.origin_id, p.target, p.scores);
    }
    for r in &fwd.rejected {
        println!("  dropped {:?}: {}", r.pair.target, r.reason);
    }
    Ok(())
}
