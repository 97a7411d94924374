//! LLM-backed extractor speaking JSON over HTTP.
//!
//! Request body: `{"prompt", "session_date", "conversation"}`. Response body:
//! `{"memories": [ ... ]}`. Items that are not objects are dropped and counted;
//! object items are returned raw and validated at ingest.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ExtractError, Extractor, Observation, RawMemory};

/// Extraction prompt template with `{session_date}` and `{conversation}` slots.
pub const EXTRACTION_PROMPT: &str = include_str!("../../prompts/memory_extraction.txt");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteExtractorConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub retries: u32,
}

impl RemoteExtractorConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout_ms: 30_000,
            retries: 2,
        }
    }
}

pub struct RemoteExtractor {
    config: RemoteExtractorConfig,
    client: reqwest::blocking::Client,
    malformed: AtomicUsize,
}

impl RemoteExtractor {
    pub fn new(config: RemoteExtractorConfig) -> Result<Self, ExtractError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| ExtractError::Remote(e.to_string()))?;
        Ok(Self {
            config,
            client,
            malformed: AtomicUsize::new(0),
        })
    }

    /// Items dropped so far because they were not JSON objects.
    pub fn malformed_items(&self) -> usize {
        self.malformed.load(Ordering::Relaxed)
    }

    pub fn render_prompt(observation: &Observation) -> String {
        EXTRACTION_PROMPT
            .replace("{session_date}", observation.timestamp_text.as_deref().unwrap_or(""))
            .replace("{conversation}", &observation.text)
    }

    pub fn request_body(observation: &Observation) -> Value {
        json!({
            "prompt": Self::render_prompt(observation),
            "session_date": observation.timestamp_text.clone().unwrap_or_default(),
            "conversation": observation.text,
        })
    }

    /// Splits a response body into raw items and a count of non-object items.
    pub fn parse_response(body: &str) -> Result<(Vec<RawMemory>, usize), ExtractError> {
        let value: Value = serde_json::from_str(body)
            .map_err(|e| ExtractError::Remote(format!("response is not JSON: {e}")))?;
        let Some(items) = value.get("memories").and_then(Value::as_array) else {
            return Err(ExtractError::Remote(
                "response lacks a `memories` array".into(),
            ));
        };
        let mut out = Vec::with_capacity(items.len());
        let mut dropped = 0;
        for item in items {
            match serde_json::from_value::<RawMemory>(item.clone()) {
                Ok(raw) if item.is_object() => out.push(raw),
                _ => dropped += 1,
            }
        }
        Ok((out, dropped))
    }

    fn post_once(&self, body: &Value) -> Result<String, ExtractError> {
        let response = self
            .client
            .post(&self.config.url)
            .json(body)
            .send()
            .map_err(|e| ExtractError::Remote(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ExtractError::Remote(format!("HTTP {status}")));
        }
        response
            .text()
            .map_err(|e| ExtractError::Remote(e.to_string()))
    }
}

impl Extractor for RemoteExtractor {
    fn extract(&self, observation: &Observation) -> Result<Vec<RawMemory>, ExtractError> {
        if observation.text.trim().is_empty() {
            return Ok(Vec::new());
        }
        let body = Self::request_body(observation);
        let mut last_err = None;
        for attempt in 0..=self.config.retries {
            match self.post_once(&body) {
                Ok(text) => {
                    let (items, dropped) = Self::parse_response(&text)?;
                    self.malformed.fetch_add(dropped, Ordering::Relaxed);
                    return Ok(items);
                }
                Err(e) => {
                    log::warn!("extraction attempt {} failed: {e}", attempt + 1);
                    last_err = Some(e);
                }
            }
        }
        Err(last_err.expect("at least one attempt"))
    }
}
