use std::collections::BTreeSet;

use crate::corpus::{shuffle_negatives, Corpus, ResponseSource, Split};
use crate::error::{Error, Result};
use crate::featurestore::{negative_key, shuffled_key, FeatureKind, FeatureStore};

use super::config::Negatives;

/// Pair features of a gold response and a negative for the same context.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub example_id: String,
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

impl TrainingPair {
    pub fn dim(&self) -> usize {
        self.positive.len()
    }
}

#[derive(Debug, Clone, Default)]
pub struct PairSet {
    pub pairs: Vec<TrainingPair>,
    /// Store keys that had no feature record.
    pub missing: Vec<String>,
}

/// Builds training pairs from the gold (human) responses in `split`.
///
/// Positive features are `PAIR_NSP` records keyed by example id. Fixed
/// negatives read `PAIR_NSP_NEG` at `{context}::neg{j}`, one pair per text;
/// shuffled negatives read `{context}::shuf{seed}`. The full corpus is
/// needed for shuffled negatives since the pool lies outside the split.
pub fn build_pairs(
    corpus: &Corpus,
    store: &FeatureStore,
    split: Split,
    negatives: &Negatives,
    strict: bool,
) -> Result<PairSet> {
    let ctx_ids = corpus.context_ids();
    let shuffled: Option<(u64, BTreeSet<String>)> = match negatives {
        Negatives::Fixed { .. } => None,
        Negatives::Shuffled { window, seed } => {
            let drawn = shuffle_negatives(corpus, *window, *seed, true)?;
            Some((*seed, drawn.into_iter().map(|n| n.context_id).collect()))
        }
    };
    let mut out = PairSet::default();
    let fetch = |key: String, kind: FeatureKind, missing: &mut Vec<String>| -> Option<Vec<f64>> {
        let v = store.get(&key, kind).and_then(|r| r.values_f64());
        if v.is_none() {
            missing.push(key);
        }
        v
    };
    for (ex, ctx) in corpus.examples.iter().zip(&ctx_ids) {
        if ex.split != split || ex.response.source != ResponseSource::Human {
            continue;
        }
        let neg_keys: Vec<String> = match (negatives, &shuffled) {
            (Negatives::Fixed { texts }, _) => {
                (0..texts.len()).map(|j| negative_key(ctx, j)).collect()
            }
            (Negatives::Shuffled { .. }, Some((seed, drawn))) => {
                if !drawn.contains(ctx) {
                    continue;
                }
                vec![shuffled_key(ctx, *seed)]
            }
            _ => unreachable!(),
        };
        let Some(pos) = fetch(ex.id.clone(), FeatureKind::PairNsp, &mut out.missing) else {
            continue;
        };
        for key in neg_keys {
            if let Some(neg) = fetch(key, FeatureKind::PairNspNeg, &mut out.missing) {
                out.pairs.push(TrainingPair {
                    example_id: ex.id.clone(),
                    positive: pos.clone(),
                    negative: neg,
                });
            }
        }
    }
    if strict && !out.missing.is_empty() {
        return Err(Error::MissingFeatures(out.missing));
    }
    if out.pairs.is_empty() {
        return Err(Error::Empty(format!(
            "no {split} training pairs could be built"
        )));
    }
    Ok(out)
}
