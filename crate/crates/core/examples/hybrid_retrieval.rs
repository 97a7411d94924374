//! Belief-aware reads: hybrid similarity times staleness decay, with every
//! surviving candidate of each returned attribute.

use beliefmem::retrieval::deterministic_embed;
use beliefmem::{read, HashEmbedder, MemoryBank, Observation, Query, RuleExtractor};

fn main() {
    let a = deterministic_embed("api x timeout", 256).unwrap();
    for other in ["api x timeout retry", "weather sunny paris"] {
        let b = deterministic_embed(other, 256).unwrap();
        println!("cosine(\"api x timeout\", \"{other}\") = {:.6}", a.cosine(&b));
    }

    let mut bank = MemoryBank::default();
    let stream: [&[&str]; 4] = [
        &["api_x | status | failed | 0.7", "api_x | status | rate limited | 0.6"],
        &["user | preferred language | rust | 0.8"],
        &["weather | paris forecast | sunny | 0.75"],
        &["user | preferred language | python | 0.7"],
    ];
    for (i, lines) in stream.iter().enumerate() {
        bank.ingest(Observation::structured(format!("o{i}"), "", lines.iter().copied()), &RuleExtractor)
            .unwrap();
    }

    let embedder = HashEmbedder::default();
    for text in ["api x status", "which language does the user prefer"] {
        let result = read(&bank, &Query::new(text, bank.config()).with_k(3), &embedder).unwrap();
        println!("\n{text}");
        for e in &result.entries {
            println!("  {:.6} (sim {:.6}, tau {})  {}", e.score, e.similarity, e.tau_at_query, e.attribute);
            for c in &e.candidates {
                println!("      {:.6}  {}", c.probability.get(), c.hypothesis);
            }
        }
    }
}
