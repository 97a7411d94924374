//! Belief-aware reads: hybrid similarity times staleness decay, top-K
//! attributes, and a per-attribute cap on returned candidates.

mod embed;

pub use embed::{
    deterministic_embed, EmbedError, Embedder, EmbeddingVector, HashEmbedder, RemoteEmbedder,
    HASH_SEED, MIN_EMBED_DIM, STOPWORDS,
};

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bank::{AttributeKey, BeliefEntry, CandidateStatus, LogicalTime, MemoryBank};
use crate::belief::{decay_weight, BeliefConfig, Probability};
use crate::text::{jaccard, token_set};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("as_of {as_of} is beyond the current logical clock {clock}")]
    FutureTime { as_of: LogicalTime, clock: LogicalTime },
    #[error(transparent)]
    Embed(#[from] EmbedError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub as_of: Option<LogicalTime>,
    pub k: usize,
    pub max_candidates: usize,
}

impl Query {
    /// A current-time query with the configured K and candidate cap.
    pub fn new(text: impl Into<String>, cfg: &BeliefConfig) -> Self {
        Self {
            text: text.into(),
            as_of: None,
            k: cfg.top_k,
            max_candidates: cfg.max_candidates_per_attribute,
        }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_max_candidates(mut self, m: usize) -> Self {
        self.max_candidates = m;
        self
    }

    pub fn as_of(mut self, t: LogicalTime) -> Self {
        self.as_of = Some(t);
        self
    }

    fn validate(&self) -> Result<(), RetrievalError> {
        if self.k == 0 {
            return Err(RetrievalError::InvalidQuery("k must be at least 1".into()));
        }
        if self.max_candidates == 0 {
            return Err(RetrievalError::InvalidQuery(
                "max_candidates must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub hypothesis: String,
    pub probability: Probability,
    pub status: CandidateStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub attribute: AttributeKey,
    /// Highest probability first, at most `max_candidates`.
    pub candidates: Vec<ScoredCandidate>,
    pub similarity: f64,
    /// `similarity · λ^τ`
    pub score: f64,
    pub tau_at_query: u64,
    pub last_updated_at: LogicalTime,
}

impl ScoredEntry {
    pub fn top(&self) -> Option<&ScoredCandidate> {
        self.candidates.first()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query: Query,
    /// Logical time the read was evaluated at.
    pub evaluated_at: LogicalTime,
    pub entries: Vec<ScoredEntry>,
}

/// `w_e · max(0, cosine) + w_l · mean(lexical_attr, lexical_hyp)`.
pub fn combine_similarity(cosine: f64, lexical_attribute: f64, lexical_hypothesis: f64, cfg: &BeliefConfig) -> f64 {
    cfg.sim_weight_embed * cosine.max(0.0)
        + cfg.sim_weight_lexical * (lexical_attribute + lexical_hypothesis) / 2.0
}

/// Text embedded for an entry: serialized slots then hypothesis texts.
pub fn entry_text<'a>(attribute: &AttributeKey, hypotheses: impl IntoIterator<Item = &'a str>) -> String {
    let mut text = attribute.slot_text();
    for h in hypotheses {
        text.push(' ');
        text.push_str(h);
    }
    text
}

/// Hybrid similarity between a query and an entry's active candidates.
pub fn hybrid_sim(
    query_text: &str,
    entry: &BeliefEntry,
    embedder: &dyn Embedder,
    cfg: &BeliefConfig,
) -> Result<f64, RetrievalError> {
    let prepared = PreparedQuery::new(query_text, embedder)?;
    let hyps: Vec<&str> = entry.active().map(|c| c.hypothesis.as_str()).collect();
    prepared.similarity(&entry.attribute, &hyps, embedder, cfg)
}

pub(crate) struct PreparedQuery {
    vector: EmbeddingVector,
    tokens: BTreeSet<String>,
}

impl PreparedQuery {
    pub(crate) fn new(text: &str, embedder: &dyn Embedder) -> Result<Self, RetrievalError> {
        Ok(Self {
            vector: embedder.embed(text)?,
            tokens: token_set(text),
        })
    }

    pub(crate) fn similarity(
        &self,
        attribute: &AttributeKey,
        hypotheses: &[&str],
        embedder: &dyn Embedder,
        cfg: &BeliefConfig,
    ) -> Result<f64, RetrievalError> {
        let text = entry_text(attribute, hypotheses.iter().copied());
        let cosine = self.vector.cosine(&embedder.embed(&text)?);
        let lex_attr = jaccard(&self.tokens, &token_set(&attribute.slot_text()));
        let lex_hyp = jaccard(&self.tokens, &token_set(&hypotheses.join(" ")));
        Ok(combine_similarity(cosine, lex_attr, lex_hyp, cfg))
    }
}

/// Current-time read. Delegates to [`read_at`] when the query names a time.
pub fn read(
    bank: &MemoryBank,
    query: &Query,
    embedder: &dyn Embedder,
) -> Result<RetrievalResult, RetrievalError> {
    if let Some(t) = query.as_of {
        return read_at(bank, query, t, embedder);
    }
    query.validate()?;
    let cfg = bank.config();
    let prepared = PreparedQuery::new(&query.text, embedder)?;
    let mut scored = Vec::with_capacity(bank.len());
    for entry in bank.entries() {
        let ranked = entry.ranked();
        if ranked.is_empty() {
            continue;
        }
        let hyps: Vec<&str> = ranked.iter().map(|c| c.hypothesis.as_str()).collect();
        let similarity = prepared.similarity(&entry.attribute, &hyps, embedder, cfg)?;
        let tau = entry.staleness_tau;
        scored.push(ScoredEntry {
            attribute: entry.attribute.clone(),
            candidates: ranked
                .iter()
                .take(query.max_candidates)
                .map(|c| ScoredCandidate {
                    hypothesis: c.hypothesis.clone(),
                    probability: c.probability,
                    status: c.status,
                })
                .collect(),
            similarity,
            score: similarity * decay_weight(cfg.decay_rate, tau),
            tau_at_query: tau,
            last_updated_at: entry.last_updated_at(),
        });
    }
    Ok(finish(query, bank.logical_clock(), scored))
}

/// Read as the bank stood at logical time `t`: candidates carry the
/// probability current at `t`, anything created later is invisible and
/// staleness is measured from `t`.
pub fn read_at(
    bank: &MemoryBank,
    query: &Query,
    t: LogicalTime,
    embedder: &dyn Embedder,
) -> Result<RetrievalResult, RetrievalError> {
    query.validate()?;
    let clock = bank.logical_clock();
    if t > clock {
        return Err(RetrievalError::FutureTime { as_of: t, clock });
    }
    let cfg = bank.config();
    let prepared = PreparedQuery::new(&query.text, embedder)?;
    let mut scored = Vec::new();
    for entry in bank.entries() {
        let Some(last_touch) = entry.last_touch_at_or_before(t) else {
            continue;
        };
        let mut visible: Vec<ScoredCandidate> = entry
            .active()
            .filter_map(|c| {
                c.probability_at(t).map(|p| ScoredCandidate {
                    hypothesis: c.hypothesis.clone(),
                    probability: p,
                    status: c.status,
                })
            })
            .collect();
        if visible.is_empty() {
            continue;
        }
        visible.sort_by(|a, b| {
            b.probability
                .get()
                .total_cmp(&a.probability.get())
                .then_with(|| a.hypothesis.cmp(&b.hypothesis))
        });
        let hyps: Vec<&str> = visible.iter().map(|c| c.hypothesis.as_str()).collect();
        let similarity = prepared.similarity(&entry.attribute, &hyps, embedder, cfg)?;
        let tau = t - last_touch;
        visible.truncate(query.max_candidates);
        scored.push(ScoredEntry {
            attribute: entry.attribute.clone(),
            candidates: visible,
            similarity,
            score: similarity * decay_weight(cfg.decay_rate, tau),
            tau_at_query: tau,
            last_updated_at: last_touch,
        });
    }
    let mut result = finish(query, t, scored);
    result.query.as_of = Some(t);
    Ok(result)
}

fn finish(query: &Query, evaluated_at: LogicalTime, mut scored: Vec<ScoredEntry>) -> RetrievalResult {
    scored.sort_by(rank_order);
    scored.truncate(query.k);
    RetrievalResult {
        query: query.clone(),
        evaluated_at,
        entries: scored,
    }
}

/// Orders two scored entries the way [`read`] does.
pub fn rank_order(a: &ScoredEntry, b: &ScoredEntry) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| b.last_updated_at.cmp(&a.last_updated_at))
        .then_with(|| a.attribute.to_string().cmp(&b.attribute.to_string()))
        .then_with(|| a.attribute.cmp(&b.attribute))
}
