//! Closed-form prior relevance metrics computed over stored artifacts.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::featurestore::{
    context_key, response_key, FeatureKind, FeatureStore, Followup, Payload,
};
use crate::jsonl;

/// One line of a scores file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredExample {
    pub example_id: String,
    pub metric: String,
    pub score: f64,
}

pub fn write_scores(path: &Path, scores: &[ScoredExample]) -> Result<()> {
    jsonl::write(path, scores)
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoredExample>> {
    let scores: Vec<ScoredExample> = jsonl::read(path)?;
    if let Some(s) = scores.iter().find(|s| !s.score.is_finite()) {
        return Err(Error::NonFinite(format!("score of `{}`", s.example_id)));
    }
    Ok(scores)
}

/// Scores for the examples that had features, plus the ids that did not.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scored {
    pub scores: Vec<ScoredExample>,
    pub missing: Vec<String>,
}

impl Scored {
    pub(crate) fn finish(self, strict: bool) -> Result<Self> {
        if strict && !self.missing.is_empty() {
            return Err(Error::MissingFeatures(self.missing));
        }
        Ok(self)
    }
}

/// Cosine similarity, clamped to [-1, 1] against rounding.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimMismatch {
            context: "cosine".into(),
            expected: u.len(),
            found: v.len(),
        });
    }
    let (mut dot, mut uu, mut vv) = (0.0, 0.0, 0.0);
    for (a, b) in u.iter().zip(v) {
        dot += a * b;
        uu += a * a;
        vv += b * b;
    }
    if uu == 0.0 || vv == 0.0 {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    Ok((dot / (uu.sqrt() * vv.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CosineVariant {
    /// Averaged static subword embeddings.
    CosFt,
    /// Max-pooled contextual token embeddings.
    CosMax,
    /// Pooled NSP features of context-only and response-only inputs.
    CosNsp,
}

impl CosineVariant {
    pub fn feature_kind(self) -> FeatureKind {
        match self {
            CosineVariant::CosFt => FeatureKind::AvgStatic,
            CosineVariant::CosMax => FeatureKind::Maxpool,
            CosineVariant::CosNsp => FeatureKind::SoloNsp,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            CosineVariant::CosFt => "COS-FT",
            CosineVariant::CosMax => "COS-MAX-BERT",
            CosineVariant::CosNsp => "COS-NSP-BERT",
        }
    }
}

impl fmt::Display for CosineVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.metric_name())
    }
}

pub fn cosine_metric(
    corpus: &Corpus,
    store: &FeatureStore,
    variant: CosineVariant,
    strict: bool,
) -> Result<Scored> {
    let kind = variant.feature_kind();
    let mut out = Scored::default();
    for (ex, ctx_id) in corpus.examples.iter().zip(corpus.context_ids()) {
        let ctx = store
            .get(&context_key(&ctx_id), kind)
            .and_then(|r| r.values_f64());
        let resp = store
            .get(&response_key(&ex.id), kind)
            .and_then(|r| r.values_f64());
        match (ctx, resp) {
            (Some(c), Some(r)) => out.scores.push(ScoredExample {
                example_id: ex.id.clone(),
                metric: variant.metric_name().to_string(),
                score: cosine(&c, &r)?,
            }),
            _ => out.missing.push(ex.id.clone()),
        }
    }
    out.finish(strict)
}

/// Percentile with linear interpolation between closest ranks.
///
/// `p` is in [0, 100]; position `(n - 1) * p / 100` in the sorted sample,
/// so `p = 0` is the minimum and `p = 100` the maximum.
pub fn percentile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("percentile of an empty sample".into()));
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "percentile {p} outside [0, 100]"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogProbEntry {
    pub example_id: String,
    pub logprob_sum: f64,
    pub token_count: u32,
}

impl LogProbEntry {
    /// Per-token mean log-probability.
    pub fn mean(&self) -> f64 {
        self.logprob_sum / self.token_count as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormProbBatchStats {
    /// 5th percentile of per-token mean log-probabilities in the batch.
    pub c5th: f64,
    /// Set when the clip point is not strictly negative, so every member scores 0.
    pub degenerate: bool,
}

pub const NORM_PROB: &str = "NORM-PROB";

/// Batch-normalized conditional log-probability.
///
/// With `L` the per-token mean log-probability and `c` the batch 5th
/// percentile of `L`, the score is `-(max(c, L) - c) / c`, in [0, 1].
pub fn norm_prob(batch: &[LogProbEntry]) -> Result<(Vec<ScoredExample>, NormProbBatchStats)> {
    if batch.is_empty() {
        return Err(Error::Empty("NORM-PROB batch".into()));
    }
    for e in batch {
        if e.token_count == 0 {
            return Err(Error::InvalidArgument(format!(
                "`{}` has token_count 0",
                e.example_id
            )));
        }
        if !e.logprob_sum.is_finite() {
            return Err(Error::NonFinite(format!(
                "log-probability of `{}`",
                e.example_id
            )));
        }
        if e.logprob_sum > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "`{}` has positive log-probability {}",
                e.example_id, e.logprob_sum
            )));
        }
    }
    let means: Vec<f64> = batch.iter().map(LogProbEntry::mean).collect();
    let c5th = percentile(&means, 5.0)?;
    let degenerate = c5th >= 0.0 || means.iter().all(|&m| m == means[0]);
    if degenerate {
        log::warn!("degenerate NORM-PROB batch (c5th = {c5th}); all scores are 0");
    }
    let scores = batch
        .iter()
        .zip(&means)
        .map(|(e, &l)| ScoredExample {
            example_id: e.example_id.clone(),
            metric: NORM_PROB.to_string(),
            score: if degenerate || l <= c5th {
                0.0
            } else {
                (-(l.max(c5th) - c5th) / c5th).clamp(0.0, 1.0)
            },
        })
        .collect();
    Ok((scores, NormProbBatchStats { c5th, degenerate }))
}

/// NORM-PROB over one corpus batch, reading COND_LOGPROB records.
pub fn norm_prob_metric(
    corpus: &Corpus,
    store: &FeatureStore,
    strict: bool,
) -> Result<(Scored, NormProbBatchStats)> {
    let mut batch = Vec::with_capacity(corpus.len());
    let mut missing = Vec::new();
    for ex in &corpus.examples {
        match store
            .get(&ex.id, FeatureKind::CondLogprob)
            .map(|r| &r.payload)
        {
            Some(Payload::LogProb {
                logprob_sum,
                token_count,
            }) => batch.push(LogProbEntry {
                example_id: ex.id.clone(),
                logprob_sum: *logprob_sum,
                token_count: *token_count,
            }),
            _ => missing.push(ex.id.clone()),
        }
    }
    let (scores, stats) = norm_prob(&batch)?;
    let scored = Scored { scores, missing }.finish(strict)?;
    Ok((scored, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FedAggregate {
    #[default]
    Sum,
    Mean,
}

impl FromStr for FedAggregate {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" => Ok(FedAggregate::Sum),
            "mean" => Ok(FedAggregate::Mean),
            other => Err(Error::InvalidArgument(format!(
                "unknown aggregate `{other}`"
            ))),
        }
    }
}

/// Negated sum of follow-up log-probabilities, where each follow-up is an
/// utterance signalling that the response was irrelevant.
pub fn fed_score(logprobs: &[f64], aggregate: FedAggregate) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::Empty("no follow-up log-probabilities".into()));
    }
    if let Some(lp) = logprobs.iter().find(|lp| !lp.is_finite() || **lp > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "follow-up log-probability {lp} is not a finite value <= 0"
        )));
    }
    let total = -logprobs.iter().sum::<f64>();
    Ok(match aggregate {
        FedAggregate::Sum => total,
        FedAggregate::Mean => total / logprobs.len() as f64,
    })
}

/// Follow-up scoring over a corpus. `utterances` selects which follow-ups of
/// each record take part (by `utterance_id`); `None` keeps them all.
pub fn fed_metric(
    corpus: &Corpus,
    store: &FeatureStore,
    metric: &str,
    utterances: Option<&[String]>,
    aggregate: FedAggregate,
    strict: bool,
) -> Result<Scored> {
    let mut out = Scored::default();
    for ex in &corpus.examples {
        let Some(Payload::Followups(fs)) = store
            .get(&ex.id, FeatureKind::FollowupLogprobs)
            .map(|r| &r.payload)
        else {
            out.missing.push(ex.id.clone());
            continue;
        };
        let selected: Vec<f64> = fs
            .iter()
            .filter(|f: &&Followup| utterances.is_none_or(|u| u.contains(&f.utterance_id)))
            .map(|f| f.logprob_sum)
            .collect();
        if selected.is_empty() {
            out.missing.push(ex.id.clone());
            continue;
        }
        out.scores.push(ScoredExample {
            example_id: ex.id.clone(),
            metric: metric.to_string(),
            score: fed_score(&selected, aggregate)?,
        });
    }
    out.finish(strict)
}
