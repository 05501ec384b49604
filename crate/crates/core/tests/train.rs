use dconv_core::frontend::{synth_corpus, FeatureConfig};
use dconv_core::model::{build_model, ModelConfig};
use dconv_core::seeding::derive_rng;
use dconv_core::train::{clean_accuracy, train, ClassifierHead, TrainConfig, TrainSet};
use proptest::prelude::*;

fn setup(speakers: usize, utts: usize, seed: u64) -> (dconv_core::model::Model, ClassifierHead, TrainSet) {
    let corpus = synth_corpus(speakers, utts, 2.0, seed).unwrap();
    let data = TrainSet::new(corpus.utterances, &FeatureConfig::default()).unwrap();
    let cfg = ModelConfig::tiny();
    let model = build_model(&cfg, seed).unwrap();
    let head = ClassifierHead::new(&mut derive_rng(seed, "head"), cfg.embedding_dim, data.n_speakers()).unwrap();
    (model, head, data)
}

fn param_bits(model: &dconv_core::model::Model, head: &ClassifierHead) -> Vec<u64> {
    model
        .parameters()
        .iter()
        .chain(head.parameters().iter())
        .flat_map(|p| p.to_vec())
        .map(f64::to_bits)
        .collect()
}

#[test]
fn two_speakers_are_learned_in_two_hundred_steps() {
    let (mut model, head, data) = setup(2, 8, 21);
    let cfg = TrainConfig {
        epochs: 100,
        batch_size: 8,
        lr_increment: 1e-4,
        seed: 21,
        ..TrainConfig::default()
    };
    let report = train(&mut model, &head, &data, &cfg, None).unwrap();
    assert_eq!(report.steps, 200);
    let acc = clean_accuracy(&model, &head, &data).unwrap();
    assert!(acc > 0.95, "accuracy {acc}");
    assert!(model.parameters().iter().all(|p| p.to_vec().iter().all(|v| v.is_finite())));
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let (mut model, head, data) = setup(3, 4, 5);
    let before = param_bits(&model, &head);
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 4,
        lr_start: 0.0,
        lr_peak: 0.0,
        lr_increment: 0.0,
        seed: 5,
        ..TrainConfig::default()
    };
    train(&mut model, &head, &data, &cfg, None).unwrap();
    assert_eq!(param_bits(&model, &head), before);
}

#[test]
fn same_seed_replays_the_loss_log_and_starts_near_chance() {
    let cfg = TrainConfig {
        epochs: 1,
        batch_size: 8,
        lr_increment: 1e-4,
        seed: 13,
        ..TrainConfig::default()
    };
    let run = || {
        let (mut model, head, data) = setup(8, 4, 13);
        let report = train(&mut model, &head, &data, &cfg, None).unwrap();
        (report, param_bits(&model, &head))
    };
    let (a, pa) = run();
    let (b, pb) = run();
    assert_eq!(a.log_csv(), b.log_csv());
    assert_eq!(pa, pb);
    let chance = (8f64).ln();
    assert!((a.first_loss - chance).abs() <= 0.1 * chance, "first loss {}", a.first_loss);
    assert!(a.log.iter().all(|s| s.loss.is_finite()));
}

#[test]
fn bad_recipes_are_rejected() {
    let bad = [
        TrainConfig { batch_size: 1, ..TrainConfig::default() },
        TrainConfig { lr_start: -1.0, ..TrainConfig::default() },
        TrainConfig { lr_start: 1.0, lr_peak: 0.1, ..TrainConfig::default() },
        TrainConfig { augment_prob: 1.5, ..TrainConfig::default() },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

proptest! {
    #[test]
    fn schedule_rises_to_its_cap(start in 0.0f64..1e-3, extra in 0.0f64..1e-2, inc in 0.0f64..1e-3, s in 0usize..100_000) {
        let cfg = TrainConfig { lr_start: start, lr_peak: start + extra, lr_increment: inc, ..TrainConfig::default() };
        let (a, b) = (cfg.lr_at(s), cfg.lr_at(s + 1));
        prop_assert!(a <= b);
        prop_assert!(a >= start && a <= start + extra);
        prop_assert_eq!(cfg.lr_at(0), start);
    }
}
