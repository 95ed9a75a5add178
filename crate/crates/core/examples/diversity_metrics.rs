//! Diverse, Distinct-n, BLEU-n and Self-BLEU on a handful of questions.

use divq::metrics::{bleu_n, distinct_n, diverse_pair, self_bleu};
use divq::textproc::{token_set, tokenize_default};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold = "who is the head coach of the baltimore ravens ?";
    let generated = [
        "who is the coach of the baltimore ravens ?",
        "the baltimore ravens are coached by whom ?",
        "who is the coach of the baltimore ravens ?",
        "name the ravens head coach",
    ];
    let seqs: Vec<_> = generated.iter().map(|q| tokenize_default(q)).collect();
    let gold_seq = tokenize_default(gold);

    println!("pairwise Diverse (1 - Jaccard):");
    for i in 0..seqs.len() {
        for j in i + 1..seqs.len() {
            let d = diverse_pair(&token_set(&seqs[i]), &token_set(&seqs[j]))?;
            println!("  {i} vs {j}: {d:.4}");
        }
    }
    for (q, s) in generated.iter().zip(&seqs) {
        println!("BLEU-1 vs gold {:.4}  {q}", bleu_n(s, &gold_seq, 1, true)?);
    }
    println!("Dist-1     {:.4}", distinct_n(&seqs, 1)?);
    println!("Dist-2     {:.4}", distinct_n(&seqs, 2)?);
    println!("Self-BLEU-1 {:.4}", self_bleu(&seqs, 1)?);
    Ok(())
}
