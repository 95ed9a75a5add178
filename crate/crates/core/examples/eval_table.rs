//! Top-k evaluation table over a candidates corpus, scored with the mock
//! hashed-bag-of-words embedder standing in for a sentence encoder.

use std::path::PathBuf;

use divq::cli::render_table;
use divq::corpus::load_instances;
use divq::metrics::{corpus_metric, MetricSpec};
use divq::mock::{EchoRole, MockServer};
use divq::relevance::{EmbedClient, RelevanceScorer};
use divq::textproc::TokenizeConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval_instances.jsonl");
    let instances = load_instances(&path, None)?;
    let embedder = MockServer::echo(EchoRole::Embedder)?;
    let scorer = RelevanceScorer::embedding_endpoint(EmbedClient::new(embedder.url(), std::time::Duration::from_secs(5), 2)).with_cache();
    let tok = TokenizeConfig::default();
    let alpha = 0.7;

    let mut reports = Vec::new();
    for k in [3, 5, 10] {
        for spec in [
            MetricSpec::Relevance { k },
            MetricSpec::Bleu { k, n: 1, brevity_penalty: true },
            MetricSpec::Diverse { k, alpha },
            MetricSpec::Distinct { k, n: 1 },
        ] {
            reports.push(corpus_metric(&instances, &spec, &scorer, &tok)?);
        }
    }
    print!("{}", render_table(&reports, true, alpha));
    println!("({} instances, {} embeddings cached)", instances.len(), scorer.cached_len());
    Ok(())
}
