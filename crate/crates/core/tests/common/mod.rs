#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use dialrel::corpus::{
    CandidateResponse, Corpus, Dataset, DialogueContext, EvalExample, ResponseSource, Split,
};
use dialrel::featurestore::{negative_key, shuffled_key, FeatureKind, FeatureRecord, FeatureStore};
use dialrel::idk::TrainingPair;

pub const TAG: &str = "synthetic";

/// Ground-truth separator with `k` nonzero coordinates of alternating sign.
pub fn sparse_truth(dim: usize, k: usize) -> Vec<f64> {
    let mut w = vec![0.0; dim];
    for j in 0..k {
        let idx = (j * 97 + 13) % dim;
        w[idx] = if j % 2 == 0 { 1.0 } else { -1.0 };
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pair feature for relevance `r` in [-1, 1]: shared context noise plus a
/// shift of `amp * r` along `truth` (entries in {-1, 0, 1}).
pub fn pair_feature(
    rng: &mut ChaCha8Rng,
    context: &[f64],
    truth: &[f64],
    r: f64,
    amp: f64,
) -> Vec<f64> {
    pair_feature_sd(rng, context, truth, r, amp, 0.5)
}

pub fn pair_feature_sd(
    rng: &mut ChaCha8Rng,
    context: &[f64],
    truth: &[f64],
    r: f64,
    amp: f64,
    sd: f64,
) -> Vec<f64> {
    let noise = Normal::new(0.0, sd).unwrap();
    context
        .iter()
        .zip(truth)
        .map(|(c, t)| c + amp * r * t + noise.sample(rng))
        .collect()
}

pub fn context_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    context_vector_sd(rng, dim, 1.0)
}

pub fn context_vector_sd(rng: &mut ChaCha8Rng, dim: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd).unwrap();
    (0..dim).map(|_| normal.sample(rng)).collect()
}

/// Training pairs whose positive outranks the negative under `truth`
/// (rejection-sampled). Context noise has standard deviation `sd`, pair
/// noise `sd / 2`.
pub fn separable_pairs(n: usize, truth: &[f64], amp: f64, sd: f64, seed: u64) -> Vec<TrainingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let c = context_vector_sd(&mut rng, truth.len(), sd);
        let pos = pair_feature_sd(&mut rng, &c, truth, 1.0, amp, sd / 2.0);
        let neg = pair_feature_sd(&mut rng, &c, truth, -1.0, amp, sd / 2.0);
        if dot(truth, &pos) <= dot(truth, &neg) {
            continue;
        }
        out.push(TrainingPair {
            example_id: format!("p{}", out.len()),
            positive: pos,
            negative: neg,
        });
    }
    out
}

pub fn example(
    id: &str,
    dataset: Dataset,
    split: Split,
    turns: &[&str],
    text: &str,
    source: ResponseSource,
    ratings: Vec<f64>,
) -> EvalExample {
    EvalExample {
        id: id.to_string(),
        dataset,
        split,
        context: DialogueContext::from_texts(turns, 0),
        response: CandidateResponse::new(text, source, ratings),
    }
}

/// A synthetic rated corpus with pair features.
///
/// Each context has a gold response and a random-human response. Ratings
/// (three annotators on the dataset's Likert scale) follow a latent
/// relevance that also drives the features, unless `signal` is false, in
/// which case ratings are independent noise. The first `n_train` contexts
/// are `train`, the rest `test`. Fixed-negative and shuffled-negative pair
/// features are stored for every context.
pub struct SyntheticSet {
    pub corpus: Corpus,
    pub store: FeatureStore,
    pub truth: Vec<f64>,
}

pub fn synthetic_set(
    dataset: Dataset,
    contexts: usize,
    n_train: usize,
    dim: usize,
    signal: bool,
    shuffle_seed: u64,
    seed: u64,
) -> SyntheticSet {
    let truth = sparse_truth(dim, 7.min(dim));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = dataset.likert_range();
    let mut examples = Vec::new();
    let mut records = Vec::new();
    let f32s = |v: Vec<f64>| v.into_iter().map(|x| x as f32).collect::<Vec<f32>>();
    for i in 0..contexts {
        let split = if i < n_train {
            Split::Train
        } else {
            Split::Test
        };
        let c = context_vector(&mut rng, dim);
        let ctx_text = format!("context {i} of {}", dataset.code());
        for (slot, source) in [(0, ResponseSource::Human), (1, ResponseSource::RandomHuman)] {
            let relevance: f64 = if source == ResponseSource::Human {
                rng.gen_range(0.3..1.0)
            } else {
                rng.gen_range(0.0..0.7)
            };
            let latent = if signal {
                relevance
            } else {
                rng.gen_range(0.0..1.0)
            };
            let ratings: Vec<f64> = (0..3)
                .map(|_| {
                    let jitter: f64 = rng.gen_range(-0.15..0.15);
                    (lo + (latent + jitter).clamp(0.0, 1.0) * (hi - lo)).round()
                })
                .collect();
            let id = format!("{}-{i:05}/{slot}", dataset.code());
            let x = pair_feature(&mut rng, &c, &truth, 2.0 * relevance - 1.0, 1.5);
            records.push(FeatureRecord::vector(
                &id,
                FeatureKind::PairNsp,
                f32s(x),
                TAG,
            ));
            examples.push(example(
                &id,
                dataset,
                split,
                &[&ctx_text],
                &format!("response {i}/{slot}"),
                source,
                ratings,
            ));
        }
        let ctx_id = format!("{}-{i:05}/0", dataset.code());
        let idk = pair_feature(&mut rng, &c, &truth, -0.8, 1.5);
        records.push(FeatureRecord::vector(
            negative_key(&ctx_id, 0),
            FeatureKind::PairNspNeg,
            f32s(idk),
            TAG,
        ));
        let shuf = pair_feature(&mut rng, &c, &truth, -0.5, 1.5);
        records.push(FeatureRecord::vector(
            shuffled_key(&ctx_id, shuffle_seed),
            FeatureKind::PairNspNeg,
            f32s(shuf),
            TAG,
        ));
    }
    SyntheticSet {
        corpus: Corpus::new(dataset, examples, "synthetic"),
        store: FeatureStore::from_records(records).unwrap(),
        truth,
    }
}

/// Fraction of the total |w| carried by the nonzero coordinates of `truth`.
pub fn mass_on_support(w: &[f64], truth: &[f64]) -> f64 {
    let total: f64 = w.iter().map(|x| x.abs()).sum();
    let on: f64 = w
        .iter()
        .zip(truth)
        .filter(|(_, t)| **t != 0.0)
        .map(|(x, _)| x.abs())
        .sum();
    on / total
}
