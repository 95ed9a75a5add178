//! Pearson correlation between per-instance metric scores and human ratings.
//!
//! ```text
//! cargo run --example correlate_with_human [system.json human.json]
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use divq::metrics::pearson_by_key;

fn load(path: &PathBuf) -> Result<BTreeMap<String, f64>, Box<dyn std::error::Error>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fixtures = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut args = std::env::args().skip(1).map(PathBuf::from);
    let system = args.next().unwrap_or_else(|| fixtures.join("correlate_system.json"));
    let human = args.next().unwrap_or_else(|| fixtures.join("correlate_human.json"));
    let (s, h) = (load(&system)?, load(&human)?);
    let r = pearson_by_key(&s, &h)?;
    println!("{} paired ratings, pearson r = {r:.3}", s.len());
    Ok(())
}
