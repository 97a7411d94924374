use super::AttributeKey;
use crate::extraction::ExtractedMemory;
use crate::text::jaccard;

/// Resolves the attribute an extracted memory refers to among `keys`.
///
/// Keys sharing the memory's subject and predicate win outright. Otherwise the
/// key with the highest slot-unit Jaccard is taken if it reaches `threshold`.
/// Ties go to the lexicographically smallest serialized key.
pub fn match_key<'a, I>(keys: I, item: &ExtractedMemory, threshold: f64) -> Option<AttributeKey>
where
    I: IntoIterator<Item = &'a AttributeKey>,
    I::IntoIter: Clone,
{
    let target = item.attribute_key();
    let keys = keys.into_iter();
    let exact = keys
        .clone()
        .filter(|k| k.subject() == target.subject() && k.predicate() == target.predicate());
    if let Some((_, key)) = best_by_jaccard(&target, exact) {
        return Some(key.clone());
    }
    best_by_jaccard(&target, keys)
        .filter(|(score, _)| *score >= threshold)
        .map(|(_, key)| key.clone())
}

fn best_by_jaccard<'a>(
    target: &AttributeKey,
    keys: impl Iterator<Item = &'a AttributeKey>,
) -> Option<(f64, &'a AttributeKey)> {
    let target_units = target.slot_units();
    let mut best: Option<(f64, String, &AttributeKey)> = None;
    for key in keys {
        let score = jaccard(&target_units, &key.slot_units());
        let better = match &best {
            None => true,
            Some((s, name, _)) => score > *s || (score == *s && key.to_string() < *name),
        };
        if better {
            best = Some((score, key.to_string(), key));
        }
    }
    best.map(|(score, _, key)| (score, key))
}
