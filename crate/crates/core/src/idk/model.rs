use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::{Scored, ScoredExample};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::featurestore::FeatureStore;
use crate::jsonl;

use super::config::TrainConfig;

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Trained head: `y = sigmoid(w . x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceModel {
    #[serde(rename = "D")]
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: TrainConfig,
    pub fingerprint: String,
    pub seed: u64,
}

impl RelevanceModel {
    pub fn new(weights: Vec<f64>, bias: f64, config: TrainConfig) -> Self {
        RelevanceModel {
            dim: weights.len(),
            weights,
            bias,
            fingerprint: config.fingerprint(),
            seed: config.seed,
            config,
        }
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::DimMismatch {
                context: "model input".into(),
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.logit(x).map(sigmoid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.dim {
            return Err(Error::DimMismatch {
                context: "model weights".into(),
                expected: self.dim,
                found: self.weights.len(),
            });
        }
        if !self.weights.iter().all(|w| w.is_finite()) || !self.bias.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        self.config.validate()
    }

    pub fn read(path: &Path) -> Result<Self> {
        let m: RelevanceModel = jsonl::read_json(path)?;
        m.validate()?;
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        jsonl::write_json(path, self)
    }
}

/// Scores every example's pair feature of the model's kind.
pub fn score(
    model: &RelevanceModel,
    corpus: &Corpus,
    store: &FeatureStore,
    metric: &str,
    strict: bool,
) -> Result<Scored> {
    let kind = model.config.feature_kind;
    let mut out = Scored::default();
    for ex in &corpus.examples {
        match store.get(&ex.id, kind).and_then(|r| r.values_f64()) {
            Some(x) => out.scores.push(ScoredExample {
                example_id: ex.id.clone(),
                metric: metric.to_string(),
                score: model.forward(&x)?,
            }),
            None => out.missing.push(ex.id.clone()),
        }
    }
    out.finish(strict)
}

/// Affine map of `scores` onto `[lo, hi]` by the sample min and max.
pub fn rescale(scores: &[f64], lo: f64, hi: f64) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("no scores to rescale".into()));
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Err(Error::Degenerate("all scores are equal".into()));
    }
    Ok(scores
        .iter()
        .map(|s| lo + (s - min) / (max - min) * (hi - lo))
        .collect())
}

/// Histogram of `log10 |w|` over nonzero weights, plus the zero count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightHistogram {
    /// `bins + 1` edges in log10 units.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub zeros: usize,
}

impl WeightHistogram {
    pub fn total(&self) -> usize {
        self.zeros + self.counts.iter().sum::<usize>()
    }
}

pub fn weight_histogram(weights: &[f64], bins: usize) -> Result<WeightHistogram> {
    if bins == 0 {
        return Err(Error::InvalidArgument(
            "histogram needs at least one bin".into(),
        ));
    }
    if !weights.iter().all(|w| w.is_finite()) {
        return Err(Error::NonFinite("weights".into()));
    }
    let logs: Vec<f64> = weights
        .iter()
        .filter(|w| **w != 0.0)
        .map(|w| w.abs().log10())
        .collect();
    let zeros = weights.len() - logs.len();
    if logs.is_empty() {
        return Ok(WeightHistogram {
            edges: Vec::new(),
            counts: Vec::new(),
            zeros,
        });
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Ok(WeightHistogram {
            edges: vec![lo, hi],
            counts: vec![logs.len()],
            zeros,
        });
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for v in logs {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(WeightHistogram {
        edges,
        counts,
        zeros,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_oracle() {
        let m = RelevanceModel::new(vec![0.5, -1.0, 2.0], 0.25, TrainConfig::default());
        let z: f64 = 0.5 * 1.0 - 1.0 * 2.0 + 2.0 * 0.5 + 0.25;
        let expected = 1.0 / (1.0 + (-z).exp());
        assert!((m.forward(&[1.0, 2.0, 0.5]).unwrap() - expected).abs() < 1e-12);
        assert!(m.forward(&[1.0]).is_err());
    }

    #[test]
    fn sigmoid_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert!(sigmoid(800.0) <= 1.0);
        assert!((sigmoid(3.0) + sigmoid(-3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rescale_to_likert() {
        assert_eq!(
            rescale(&[0.0, 0.5, 1.0], 1.0, 5.0).unwrap(),
            vec![1.0, 3.0, 5.0]
        );
        assert!(matches!(
            rescale(&[0.3, 0.3], 1.0, 5.0),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn histogram_cases() {
        let h = weight_histogram(&[0.0, 0.0], 10).unwrap();
        assert_eq!(h.zeros, 2);
        assert!(h.counts.is_empty());
        let h = weight_histogram(&[0.1, -0.1, 0.0], 4).unwrap();
        assert_eq!(h.counts, vec![2]);
        let h = weight_histogram(&[1e-4, 1e-3, 1e-2, 1e-1, 1.0], 4).unwrap();
        assert_eq!(h.counts, vec![1, 1, 1, 2]);
        assert_eq!(h.total(), 5);
        assert!(weight_histogram(&[1.0], 0).is_err());
    }
}
