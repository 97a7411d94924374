//! Token normalization shared by attribute identity, lexical overlap and the
//! hash embedder.

use std::collections::BTreeSet;

/// Lowercased alphanumeric tokens of `text`, in order of appearance.
///
/// Every non-alphanumeric character is a separator, so `"API_X"`, `"api-x"`
/// and `"api x"` all tokenize to `["api", "x"]`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            current.extend(ch.to_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Canonical form of a slot or hypothesis string: tokens joined by one space.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Jaccard index of two sets. Two empty sets score 0.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let intersection = a.intersection(b).count();
    let union = a.len() + b.len() - intersection;
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Token-Jaccard of two strings after normalization.
pub fn lexical_overlap(a: &str, b: &str) -> f64 {
    jaccard(&token_set(a), &token_set(b))
}
