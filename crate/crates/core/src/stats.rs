//! Correlation, significance and aggregation for metric-vs-human comparisons.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::{Dataset, Split};
use crate::error::{Error, Result};

/// A correlation counts as significant below this p-value.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;
pub const MIN_PERMUTATIONS: usize = 1_000;
pub const DEFAULT_PERMUTATIONS: usize = 10_000;
pub const REPORT_SCHEMA_VERSION: u32 = 1;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimMismatch {
            context: "correlation inputs".into(),
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 points, got {}",
            x.len()
        )));
    }
    if !x.iter().chain(y).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("correlation input".into()));
    }
    Ok(())
}

/// Centered copy of `x` and its sum of squares.
fn centered(x: &[f64]) -> (Vec<f64>, f64) {
    let mean = x.iter().sum::<f64>() / x.len() as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let ss = c.iter().map(|v| v * v).sum();
    (c, ss)
}

/// Sample Pearson correlation (two-pass).
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (cx, sx) = centered(x);
    let (cy, sy) = centered(y);
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::Degenerate(
            "zero variance in correlation input".into(),
        ));
    }
    let sxy: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    Ok((sxy / (sx.sqrt() * sy.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && x[order[j]] == x[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) hold ranks i+1..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Spearman,
    Pearson,
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "spearman" | "s" => Ok(Statistic::Spearman),
            "pearson" | "p" => Ok(Statistic::Pearson),
            other => Err(Error::InvalidArgument(format!(
                "unknown statistic `{other}`"
            ))),
        }
    }
}

fn lexical_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Two-sided permutation p-value, `(1 + #{|stat*| >= |stat|}) / (n_perm + 1)`.
///
/// Trial `t` shuffles with a ChaCha8 stream seeded by `seed` on stream `t`,
/// so the result does not depend on thread scheduling. The vector that gets
/// permuted is chosen by a fixed ordering of the two inputs, which makes the
/// p-value symmetric in its arguments.
pub fn perm_pvalue(x: &[f64], y: &[f64], stat: Statistic, n_perm: usize, seed: u64) -> Result<f64> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(Error::InvalidArgument(format!(
            "n_perm must be at least {MIN_PERMUTATIONS}, got {n_perm}"
        )));
    }
    check_pair(x, y)?;
    let (fixed, moving) = match lexical_cmp(x, y) {
        Ordering::Greater => (y, x),
        _ => (x, y),
    };
    let (a, b) = match stat {
        Statistic::Spearman => (average_ranks(fixed), average_ranks(moving)),
        Statistic::Pearson => (fixed.to_vec(), moving.to_vec()),
    };
    let (a, sa) = centered(&a);
    let (b, sb) = centered(&b);
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::Degenerate(
            "zero variance in correlation input".into(),
        ));
    }
    let scale = 1.0 / (sa.sqrt() * sb.sqrt());
    let dot = |v: &[f64]| a.iter().zip(v).map(|(p, q)| p * q).sum::<f64>() * scale;
    let observed = dot(&b).abs();

    let exceed: usize = (0..n_perm as u64)
        .into_par_iter()
        .map_init(
            || b.clone(),
            |buf, trial| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(trial);
                buf.copy_from_slice(&b);
                buf.shuffle(&mut rng);
                usize::from(dot(buf).abs() + 1e-12 >= observed)
            },
        )
        .sum();
    Ok((1 + exceed) as f64 / (n_perm + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Significance {
    /// Every run significant.
    All,
    /// At least one run significant.
    Some,
    None,
}

impl Significance {
    pub fn from_counts(significant: usize, runs: usize) -> Self {
        if runs > 0 && significant == runs {
            Significance::All
        } else if significant > 0 {
            Significance::Some
        } else {
            Significance::None
        }
    }

    pub fn marker(self) -> &'static str {
        match self {
            Significance::All => "*",
            Significance::Some => "‡",
            Significance::None => "",
        }
    }
}

/// Correlation of one metric with mean human ratings on one (dataset, split).
///
/// For a single run `p_*` is the run's p-value; after [`aggregate_runs`] it
/// is the largest p-value across runs and `significant_runs_*` counts the
/// runs below [`SIGNIFICANCE_LEVEL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub schema_version: u32,
    pub metric: String,
    pub dataset: Dataset,
    pub split: Split,
    pub n: usize,
    pub spearman: f64,
    pub pearson: f64,
    pub p_spearman: f64,
    pub p_pearson: f64,
    pub runs: usize,
    pub spearman_std: f64,
    pub pearson_std: f64,
    pub significant_runs_spearman: usize,
    pub significant_runs_pearson: usize,
}

impl CorrelationReport {
    pub fn spearman_significance(&self) -> Significance {
        Significance::from_counts(self.significant_runs_spearman, self.runs)
    }

    pub fn pearson_significance(&self) -> Significance {
        Significance::from_counts(self.significant_runs_pearson, self.runs)
    }

    fn key(&self) -> (&str, Dataset, Split) {
        (&self.metric, self.dataset, self.split)
    }
}

/// Correlates metric scores with human ratings and attaches permutation p-values.
pub fn correlate(
    metric: &str,
    dataset: Dataset,
    split: Split,
    human: &[f64],
    scores: &[f64],
    n_perm: usize,
    seed: u64,
) -> Result<CorrelationReport> {
    let s = spearman(scores, human)?;
    let p = pearson(scores, human)?;
    let ps = perm_pvalue(scores, human, Statistic::Spearman, n_perm, seed)?;
    let pp = perm_pvalue(scores, human, Statistic::Pearson, n_perm, seed)?;
    Ok(CorrelationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        metric: metric.to_string(),
        dataset,
        split,
        n: human.len(),
        spearman: s,
        pearson: p,
        p_spearman: ps,
        p_pearson: pp,
        runs: 1,
        spearman_std: 0.0,
        pearson_std: 0.0,
        significant_runs_spearman: usize::from(ps < SIGNIFICANCE_LEVEL),
        significant_runs_pearson: usize::from(pp < SIGNIFICANCE_LEVEL),
    })
}

fn mean_and_population_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Combines single-run reports of one (metric, dataset, split) into mean and
/// population standard deviation.
pub fn aggregate_runs(reports: &[CorrelationReport]) -> Result<CorrelationReport> {
    let Some(first) = reports.first() else {
        return Err(Error::Empty("no reports to aggregate".into()));
    };
    for r in reports {
        if r.key() != first.key() {
            return Err(Error::Inconsistent(format!(
                "cannot aggregate {}/{}/{} with {}/{}/{}",
                first.metric, first.dataset, first.split, r.metric, r.dataset, r.split
            )));
        }
        if r.schema_version != first.schema_version {
            return Err(Error::Inconsistent("mixed report schema versions".into()));
        }
        if r.runs != 1 {
            return Err(Error::Inconsistent(format!(
                "report for {} already aggregates {} runs",
                r.metric, r.runs
            )));
        }
    }
    let s: Vec<f64> = reports.iter().map(|r| r.spearman).collect();
    let p: Vec<f64> = reports.iter().map(|r| r.pearson).collect();
    let (s_mean, s_std) = mean_and_population_std(&s);
    let (p_mean, p_std) = mean_and_population_std(&p);
    let max_p = |f: fn(&CorrelationReport) -> f64| reports.iter().map(f).fold(0.0, f64::max);
    Ok(CorrelationReport {
        schema_version: first.schema_version,
        metric: first.metric.clone(),
        dataset: first.dataset,
        split: first.split,
        n: first.n,
        spearman: s_mean,
        pearson: p_mean,
        p_spearman: max_p(|r| r.p_spearman),
        p_pearson: max_p(|r| r.p_pearson),
        runs: reports.len(),
        spearman_std: s_std,
        pearson_std: p_std,
        significant_runs_spearman: reports.iter().map(|r| r.significant_runs_spearman).sum(),
        significant_runs_pearson: reports.iter().map(|r| r.significant_runs_pearson).sum(),
    })
}

/// Groups reports by (metric, dataset, split) and aggregates each group.
/// Output keeps the order in which keys first appear.
pub fn aggregate_all(reports: &[CorrelationReport]) -> Result<Vec<CorrelationReport>> {
    let mut groups: Vec<Vec<CorrelationReport>> = Vec::new();
    for r in reports {
        match groups.iter_mut().find(|g| g[0].key() == r.key()) {
            Some(g) => g.push(r.clone()),
            None => groups.push(vec![r.clone()]),
        }
    }
    groups.iter().map(|g| aggregate_runs(g)).collect()
}

/// Best-to-worst Spearman ratio of one metric across datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub metric: String,
    pub best_dataset: Dataset,
    pub best: f64,
    pub worst_dataset: Dataset,
    pub worst: f64,
    #[serde(serialize_with = "ser_extended", deserialize_with = "de_extended")]
    pub ratio: f64,
}

impl fmt::Display for SensitivityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.ratio.is_infinite() {
            write!(f, "{}: ∞", self.metric)
        } else {
            write!(f, "{}: {:.1}", self.metric, self.ratio)
        }
    }
}

fn ser_extended<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else if *v < 0.0 {
        s.serialize_str("-inf")
    } else {
        s.serialize_str("nan")
    }
}

fn de_extended<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        F(f64),
        S(String),
    }
    match Num::deserialize(d)? {
        Num::F(v) => Ok(v),
        Num::S(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
        },
    }
}

/// Ratio of the best to the worst Spearman correlation. The sign is kept, so a
/// metric that turns negative on some dataset gets a negative ratio; a worst
/// value of exactly zero gives infinity.
pub fn sensitivity_ratio(
    metric: &str,
    per_dataset: &BTreeMap<Dataset, f64>,
) -> Result<SensitivityReport> {
    if per_dataset.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "sensitivity needs at least 2 datasets, got {}",
            per_dataset.len()
        )));
    }
    if per_dataset.values().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("per-dataset Spearman".into()));
    }
    // BTreeMap iteration is ordered, so ties resolve the same way regardless of insertion order.
    let (best_dataset, best) = per_dataset
        .iter()
        .fold(None::<(Dataset, f64)>, |acc, (&d, &v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((d, v)),
        })
        .expect("non-empty");
    let (worst_dataset, worst) = per_dataset
        .iter()
        .fold(None::<(Dataset, f64)>, |acc, (&d, &v)| match acc {
            Some((_, w)) if w <= v => acc,
            _ => Some((d, v)),
        })
        .expect("non-empty");
    let ratio = if worst == 0.0 {
        f64::INFINITY
    } else {
        best / worst
    };
    Ok(SensitivityReport {
        metric: metric.to_string(),
        best_dataset,
        best,
        worst_dataset,
        worst,
        ratio,
    })
}
