use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dialrel::featurestore::{FeatureKind, FeatureRecord, FeatureStore, NspHead};
use dialrel::idk::{RelevanceModel, TrainConfig};
use dialrel::nspprobe::{
    labelled_features, mask_probe, nsp_accuracy, nsp_predict, read_labels, top_k_mask_weights,
    write_labels, LabelRecord, NspLabel,
};
use dialrel::Error;

fn random_head(rng: &mut ChaCha8Rng, dim: usize) -> NspHead {
    NspHead {
        dim,
        weights: (0..2)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
        bias: vec![rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)],
    }
}

fn random_pairs(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> Vec<(Vec<f64>, NspLabel)> {
    (0..n)
        .map(|_| {
            let x = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let label = if rng.gen_bool(0.5) {
                NspLabel::IsNext
            } else {
                NspLabel::NotNext
            };
            (x, label)
        })
        .collect()
}

/// Affine head evaluated with compensated sums on the zeroed feature.
fn oracle_predict(head: &NspHead, x: &[f64], mask: Option<&[bool]>) -> NspLabel {
    let logit = |row: usize| {
        let (mut s, mut c) = (head.bias[row], 0.0f64);
        for (i, (w, v)) in head.weights[row].iter().zip(x).enumerate() {
            let v = if mask.is_some_and(|m| !m[i]) { 0.0 } else { *v };
            let p = w * v;
            let t = s + p;
            c += if s.abs() >= p.abs() {
                (s - t) + p
            } else {
                (p - t) + s
            };
            s = t;
        }
        s + c
    };
    if logit(0) >= logit(1) {
        NspLabel::IsNext
    } else {
        NspLabel::NotNext
    }
}

#[test]
fn predictions_match_affine_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut agree = 0;
    for _ in 0..200 {
        let dim = rng.gen_range(1..100);
        let head = random_head(&mut rng, dim);
        let mask = top_k_mask_weights(&head.weights[0], rng.gen_range(1..=dim)).unwrap();
        for (x, _) in random_pairs(&mut rng, dim, 20) {
            assert_eq!(
                nsp_predict(&head, &x, None).unwrap(),
                oracle_predict(&head, &x, None)
            );
            assert_eq!(
                nsp_predict(&head, &x, Some(&mask)).unwrap(),
                oracle_predict(&head, &x, Some(&mask))
            );
            agree += 1;
        }
    }
    assert_eq!(agree, 4_000);
}

#[test]
fn zero_feature_is_decided_by_bias() {
    let mut head = NspHead {
        dim: 3,
        weights: vec![vec![1.0; 3], vec![-1.0; 3]],
        bias: vec![0.2, 0.1],
    };
    assert_eq!(
        nsp_predict(&head, &[0.0; 3], None).unwrap(),
        NspLabel::IsNext
    );
    head.bias = vec![0.1, 0.2];
    assert_eq!(
        nsp_predict(&head, &[0.0; 3], None).unwrap(),
        NspLabel::NotNext
    );
    assert!(matches!(
        nsp_predict(&head, &[0.0; 2], None),
        Err(Error::DimMismatch { .. })
    ));
}

#[test]
fn mask_ranking_examples() {
    assert_eq!(
        top_k_mask_weights(&[0.5, 0.01, -0.3], 2).unwrap(),
        vec![true, false, true]
    );
    assert_eq!(
        top_k_mask_weights(&[0.5, 0.01, -0.3], 3).unwrap(),
        vec![true; 3]
    );
    assert_eq!(
        top_k_mask_weights(&[0.2, -0.2], 1).unwrap(),
        vec![true, false]
    );
    assert!(top_k_mask_weights(&[0.2, -0.2], 0).is_err());
    assert!(top_k_mask_weights(&[0.2, -0.2], 3).is_err());
}

#[test]
fn mask_probe_with_full_mask_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let head = random_head(&mut rng, 32);
    let pairs = random_pairs(&mut rng, 32, 500);
    let w: Vec<f64> = (0..32).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let model = RelevanceModel::new(w, 0.0, TrainConfig::default());
    let full = mask_probe(&head, &model, &pairs, 32).unwrap();
    assert_eq!(full.masked_accuracy, full.unmasked_accuracy);
    assert_eq!(full.kept_dims, (0..32).collect::<Vec<_>>());
    let seven = mask_probe(&head, &model, &pairs, 7).unwrap();
    assert_eq!(seven.kept_dims.len(), 7);
    assert_eq!(seven.unmasked_accuracy, full.unmasked_accuracy);
    let small = RelevanceModel::new(vec![1.0; 8], 0.0, TrainConfig::default());
    assert!(matches!(
        mask_probe(&head, &small, &pairs, 4),
        Err(Error::DimMismatch { .. })
    ));
}

#[test]
fn masked_out_zero_weights_change_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let mut head = random_head(&mut rng, 40);
        let mask = top_k_mask_weights(
            &(0..40)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<_>>(),
            10,
        )
        .unwrap();
        for row in &mut head.weights {
            for (w, keep) in row.iter_mut().zip(&mask) {
                if !keep {
                    *w = 0.0;
                }
            }
        }
        for (x, _) in random_pairs(&mut rng, 40, 30) {
            assert_eq!(
                nsp_predict(&head, &x, Some(&mask)).unwrap(),
                nsp_predict(&head, &x, None).unwrap()
            );
        }
    }
}

#[test]
fn labels_join_solo_features() {
    let dir = tempfile::tempdir().unwrap();
    let labels = vec![
        LabelRecord {
            example_id: "brown-0".into(),
            label: NspLabel::IsNext,
        },
        LabelRecord {
            example_id: "brown-1".into(),
            label: NspLabel::NotNext,
        },
    ];
    let path = dir.path().join("labels.jsonl");
    write_labels(&path, &labels).unwrap();
    assert!(std::fs::read_to_string(&path)
        .unwrap()
        .contains("\"not_next\""));
    assert_eq!(read_labels(&path).unwrap(), labels);
    let store = FeatureStore::from_records([FeatureRecord::vector(
        "brown-0",
        FeatureKind::SoloNsp,
        vec![1.0, 2.0],
        "t",
    )])
    .unwrap();
    match labelled_features(&store, &labels).unwrap_err() {
        Error::MissingFeatures(ids) => assert_eq!(ids, vec!["brown-1".to_string()]),
        other => panic!("{other}"),
    }
}

#[test]
fn all_correct_is_perfect_accuracy() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let head = random_head(&mut rng, 16);
    let pairs: Vec<(Vec<f64>, NspLabel)> = random_pairs(&mut rng, 16, 50)
        .into_iter()
        .map(|(x, _)| {
            let l = nsp_predict(&head, &x, None).unwrap();
            (x, l)
        })
        .collect();
    assert_eq!(nsp_accuracy(&head, &pairs, None).unwrap(), 1.0);
    assert!(nsp_accuracy(&head, &[], None).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accuracy_ignores_order_and_duplication(seed in any::<u64>(), copies in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head = random_head(&mut rng, 12);
        let pairs = random_pairs(&mut rng, 12, 40);
        let mask = top_k_mask_weights(&head.weights[1], 5).unwrap();
        let base = nsp_accuracy(&head, &pairs, Some(&mask)).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(nsp_accuracy(&head, &shuffled, Some(&mask)).unwrap(), base);
        let repeated: Vec<_> = (0..copies).flat_map(|_| pairs.clone()).collect();
        prop_assert!((nsp_accuracy(&head, &repeated, Some(&mask)).unwrap() - base).abs() < 1e-15);
    }
}
