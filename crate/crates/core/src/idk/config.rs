use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurestore::FeatureKind;

/// Lowercase with a trailing period. The unpunctuated variant is accepted via
/// `Negatives::Fixed`.
pub const DEFAULT_NEGATIVE: &str = "i don't know.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    BceSigmoid,
    BceSoftmax2,
    TripletMod,
}

impl Loss {
    pub fn flag(self) -> &'static str {
        match self {
            Loss::BceSigmoid => "bce",
            Loss::BceSoftmax2 => "bce-softmax2",
            Loss::TripletMod => "triplet",
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "bce" | "bce-sigmoid" => Ok(Loss::BceSigmoid),
            "bce-softmax2" | "softmax2" | "softmax" => Ok(Loss::BceSoftmax2),
            "triplet" | "triplet-mod" => Ok(Loss::TripletMod),
            other => Err(Error::InvalidArgument(format!("unknown loss `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    None,
    L1,
    L2,
}

impl fmt::Display for Regularizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regularizer::None => "none",
            Regularizer::L1 => "l1",
            Regularizer::L2 => "l2",
        })
    }
}

impl FromStr for Regularizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" | "off" => Ok(Regularizer::None),
            "l1" => Ok(Regularizer::L1),
            "l2" => Ok(Regularizer::L2),
            other => Err(Error::InvalidArgument(format!(
                "unknown regularizer `{other}`"
            ))),
        }
    }
}

/// Source of the negative member of each training pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme")]
pub enum Negatives {
    /// Constant texts paired with every training context.
    Fixed { texts: Vec<String> },
    /// Gold responses of other contexts, drawn once with `seed`.
    Shuffled { window: usize, seed: u64 },
}

impl Negatives {
    pub fn fixed(text: &str) -> Self {
        Negatives::Fixed {
            texts: vec![text.to_string()],
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, Negatives::Fixed { .. })
    }
}

impl fmt::Display for Negatives {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Negatives::Fixed { texts } => write!(f, "fixed:{}", texts.join("|")),
            Negatives::Shuffled { .. } => f.write_str("shuffled"),
        }
    }
}

/// Parses `fixed:<text>[|<text>...]` or `shuffled`. The shuffled pool
/// size and seed come from separate settings.
pub fn parse_negatives(s: &str, window: usize, shuffle_seed: u64) -> Result<Negatives> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("shuffled") {
        return Ok(Negatives::Shuffled {
            window,
            seed: shuffle_seed,
        });
    }
    if s.eq_ignore_ascii_case("fixed") {
        return Ok(Negatives::fixed(DEFAULT_NEGATIVE));
    }
    match s.split_once(':') {
        Some((scheme, texts)) if scheme.eq_ignore_ascii_case("fixed") => {
            let texts: Vec<String> = texts
                .split('|')
                .map(str::to_string)
                .filter(|t| !t.trim().is_empty())
                .collect();
            if texts.is_empty() {
                return Err(Error::InvalidArgument(
                    "`fixed:` needs a negative text".into(),
                ));
            }
            Ok(Negatives::Fixed { texts })
        }
        _ => Err(Error::InvalidArgument(format!(
            "negatives must be `fixed:<text>` or `shuffled`, got `{s}`"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub feature_kind: FeatureKind,
    pub loss: Loss,
    pub regularizer: Regularizer,
    pub lambda: f64,
    pub negatives: Negatives,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Triplet margin; unused by the BCE losses.
    pub margin: f64,
    #[serde(default)]
    pub adam: AdamParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            feature_kind: FeatureKind::PairNsp,
            loss: Loss::BceSigmoid,
            regularizer: Regularizer::L1,
            lambda: 1.0,
            negatives: Negatives::fixed(DEFAULT_NEGATIVE),
            epochs: 2,
            batch_size: 6,
            learning_rate: 0.001,
            seed: 0,
            margin: 0.4,
            adam: AdamParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate must be > 0, got {}",
                self.learning_rate
            ));
        }
        if self.loss == Loss::TripletMod && !(self.margin.is_finite() && self.margin > 0.0) {
            return bad(format!("triplet margin must be > 0, got {}", self.margin));
        }
        if let Negatives::Fixed { texts } = &self.negatives {
            if texts.is_empty() {
                return bad("fixed negatives need at least one text".into());
            }
        }
        let AdamParams { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad("Adam parameters out of range".into());
        }
        Ok(())
    }

    /// Short content hash of the configuration.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }
}
