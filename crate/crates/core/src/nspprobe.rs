//! Top-k masking of NSP features and next-sentence-prediction accuracy
//! through the exported NSP head.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurestore::{FeatureKind, FeatureStore, NspHead};
use crate::idk::RelevanceModel;
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NspLabel {
    IsNext,
    NotNext,
}

impl fmt::Display for NspLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NspLabel::IsNext => "is_next",
            NspLabel::NotNext => "not_next",
        })
    }
}

/// One line of the gold-label sidecar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub example_id: String,
    pub label: NspLabel,
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRecord>> {
    jsonl::read(path)
}

pub fn write_labels(path: &Path, labels: &[LabelRecord]) -> Result<()> {
    jsonl::write(path, labels)
}

/// True on the `k` dimensions with the largest `|w_i|`; ties go to the
/// lower index.
pub fn top_k_mask(model: &RelevanceModel, k: usize) -> Result<Vec<bool>> {
    top_k_mask_weights(&model.weights, k)
}

pub fn top_k_mask_weights(weights: &[f64], k: usize) -> Result<Vec<bool>> {
    let d = weights.len();
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!(
            "k must be in 1..={d}, got {k}"
        )));
    }
    if !weights.iter().all(|w| w.is_finite()) {
        return Err(Error::NonFinite("weights".into()));
    }
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| {
        weights[b]
            .abs()
            .total_cmp(&weights[a].abs())
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; d];
    for &i in &idx[..k] {
        mask[i] = true;
    }
    Ok(mask)
}

/// Argmax of the head logits on the (masked) feature; a tie is `is_next`.
pub fn nsp_predict(head: &NspHead, feature: &[f64], mask: Option<&[bool]>) -> Result<NspLabel> {
    if feature.len() != head.dim || head.weights.iter().any(|r| r.len() != head.dim) {
        return Err(Error::DimMismatch {
            context: "NSP feature".into(),
            expected: head.dim,
            found: feature.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != head.dim {
            return Err(Error::DimMismatch {
                context: "NSP mask".into(),
                expected: head.dim,
                found: m.len(),
            });
        }
    }
    let logit = |row: usize| -> f64 {
        let dot: f64 = head.weights[row]
            .iter()
            .zip(feature)
            .enumerate()
            .filter(|(i, _)| mask.is_none_or(|m| m[*i]))
            .map(|(_, (w, x))| w * x)
            .sum();
        dot + head.bias[row]
    };
    Ok(if logit(0) >= logit(1) {
        NspLabel::IsNext
    } else {
        NspLabel::NotNext
    })
}

/// Fraction of pairs whose prediction matches the gold label.
pub fn nsp_accuracy(
    head: &NspHead,
    pairs: &[(Vec<f64>, NspLabel)],
    mask: Option<&[bool]>,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("no NSP evaluation pairs".into()));
    }
    let mut correct = 0usize;
    for (x, gold) in pairs {
        if nsp_predict(head, x, mask)? == *gold {
            correct += 1;
        }
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// `SOLO_NSP` features aligned with their gold labels.
pub fn labelled_features(
    store: &FeatureStore,
    labels: &[LabelRecord],
) -> Result<Vec<(Vec<f64>, NspLabel)>> {
    let mut out = Vec::with_capacity(labels.len());
    let mut missing = Vec::new();
    for l in labels {
        match store
            .get(&l.example_id, FeatureKind::SoloNsp)
            .and_then(|r| r.values_f64())
        {
            Some(v) => out.push((v, l.label)),
            None => missing.push(l.example_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingFeatures(missing));
    }
    Ok(out)
}

/// Accuracy with and without the top-k mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskReport {
    pub k: usize,
    pub dim: usize,
    pub kept_dims: Vec<usize>,
    pub n: usize,
    pub unmasked_accuracy: f64,
    pub masked_accuracy: f64,
}

pub fn mask_probe(
    head: &NspHead,
    model: &RelevanceModel,
    pairs: &[(Vec<f64>, NspLabel)],
    k: usize,
) -> Result<MaskReport> {
    head.validate()?;
    if model.dim != head.dim {
        return Err(Error::DimMismatch {
            context: "IDK model vs NSP head".into(),
            expected: head.dim,
            found: model.dim,
        });
    }
    let mask = top_k_mask(model, k)?;
    Ok(MaskReport {
        k,
        dim: head.dim,
        kept_dims: mask
            .iter()
            .enumerate()
            .filter(|(_, m)| **m)
            .map(|(i, _)| i)
            .collect(),
        n: pairs.len(),
        unmasked_accuracy: nsp_accuracy(head, pairs, None)?,
        masked_accuracy: nsp_accuracy(head, pairs, Some(&mask))?,
    })
}
