//! Structured SVO lines to validated memories, plus the prompt the remote
//! extractor sends for free text.

use beliefmem::extraction::{rule_extract, validate_extracted, RawMemory, RemoteExtractor};
use beliefmem::Observation;

fn main() {
    let obs = Observation::structured(
        "s1",
        "",
        [
            "api_x | status | operational | 0.9 | this morning | !failed,!rate_limited",
            "alice | ran | charity race | 0.8 | last Saturday | | event",
        ],
    );
    for m in rule_extract(&obs).unwrap() {
        println!(
            "{} | {} | {} | p={:.6} | time='{}' | contradicts={:?} | type={}",
            m.subject,
            m.predicate,
            m.hypothesis(),
            m.prob,
            m.time_text,
            m.contradicted(),
            m.kind
        );
    }

    match rule_extract(&Observation::structured("bad", "", ["api_x | status | failed | 1.7"])) {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }

    let raw = RawMemory {
        kind: "fact".into(),
        prob: Some(0.5),
        ..RawMemory::default()
    };
    let err = validate_extracted(&raw).unwrap_err();
    println!("invalid fields: {:?}", err.fields().collect::<Vec<_>>());

    let mut chat = Observation::from_text("d1", "D1:1 Alice: I ran a charity race last Saturday.");
    chat.timestamp_text = Some("7 May 2023".into());
    let prompt = RemoteExtractor::render_prompt(&chat);
    println!("\nremote prompt tail:\n{}", &prompt[prompt.len().saturating_sub(120)..]);
}
