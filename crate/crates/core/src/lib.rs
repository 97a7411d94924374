//! Probabilistic agent memory.
//!
//! Each attribute keeps several candidate conclusions, each with a
//! probability. New evidence is folded in with a capped noisy-OR, contradicted
//! candidates are downgraded with their prior value archived, and reads rank
//! attributes by similarity decayed with staleness while exposing every
//! surviving candidate.
//!
//! ```
//! use beliefmem::{MemoryBank, Observation, RuleExtractor};
//!
//! let mut bank = MemoryBank::default();
//! let timeout = ["api_x | status | failed | 0.7", "api_x | status | rate limited | 0.6"];
//! bank.ingest(Observation::structured("t1", "", timeout), &RuleExtractor).unwrap();
//! bank.ingest(Observation::structured("t2", "", timeout), &RuleExtractor).unwrap();
//!
//! let entry = bank.entries().next().unwrap();
//! let ranked: Vec<_> = entry.ranked().iter().map(|c| c.hypothesis.clone()).collect();
//! assert_eq!(ranked, ["failed", "rate limited"]);
//! ```

pub mod bank;
pub mod baselines;
pub mod belief;
pub mod canonical;
pub mod cli;
pub mod extraction;
pub mod harness;
pub mod retrieval;
pub mod text;

pub use bank::{AttributeKey, BankError, BeliefEntry, Candidate, IngestReport, MemoryBank};
pub use belief::{noisy_or_merge, BeliefConfig, ContradictionMode, EvidenceStrength, Probability};
pub use extraction::{ExtractedMemory, Extractor, Observation, RuleExtractor};
pub use retrieval::{read, read_at, Embedder, HashEmbedder, Query, RetrievalResult};
