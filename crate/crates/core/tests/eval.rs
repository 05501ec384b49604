use dconv_core::eval::{eer, evaluate, min_dcf, parse_scores, DcfParams, ScoreSet, Trial, TrialList};
use dconv_core::frontend::{synth_corpus, FeatureConfig};
use dconv_core::model::{build_model, ModelConfig};
use dconv_core::seeding::derive_rng;
use dconv_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn random_set(seed: u64, n: usize, shift: f64) -> ScoreSet {
    let mut r = derive_rng(seed, "scores");
    let mut labels: Vec<bool> = (0..n).map(|_| r.random_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = labels
        .iter()
        .map(|&l| r.random_range(-1.0..1.0) + if l { shift } else { 0.0 })
        .collect();
    ScoreSet::new(labels, scores).unwrap()
}

#[test]
fn separated_scores_have_zero_eer_and_inverted_have_full() {
    let labels = vec![true, true, false, false];
    let good = ScoreSet::new(labels.clone(), vec![0.9, 0.8, 0.1, 0.2]).unwrap();
    let bad = ScoreSet::new(labels, vec![0.1, 0.2, 0.9, 0.8]).unwrap();
    assert_eq!(eer(&good).unwrap().0, 0.0);
    assert_eq!(eer(&bad).unwrap().0, 1.0);
    assert_eq!(min_dcf(&good, &DcfParams::default()).unwrap().0, 0.0);
}

#[test]
fn one_class_score_set_is_a_metric_error() {
    let s = ScoreSet::new(vec![true, true], vec![0.1, 0.2]).unwrap();
    assert!(matches!(eer(&s), Err(Error::Metric(_))));
}

#[test]
fn nan_score_line_is_rejected_with_its_line() {
    let err = parse_scores("target a b 0.5\nnontarget a c NaN\n", "s.txt").unwrap_err();
    assert!(err.to_string().contains('2'), "{err}");
}

fn small_setup() -> (dconv_core::model::Model, dconv_core::frontend::SynthCorpus) {
    let model = build_model(&ModelConfig::tiny(), 3).unwrap();
    let corpus = synth_corpus(3, 4, 0.5, 8).unwrap();
    (model, corpus)
}

#[test]
fn unknown_trial_id_is_named() {
    let (model, corpus) = small_setup();
    let mut trials = corpus.test_trials.clone();
    trials.trials.push(Trial::new(false, corpus.utterances[0].utterance_id.clone(), "ghost-utt"));
    let err = evaluate(&model, &corpus.utterances, &trials, &DcfParams::default(), &FeatureConfig::default()).unwrap_err();
    match err {
        Error::MissingIds(ids) => assert_eq!(ids, vec!["ghost-utt".to_string()]),
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn each_utterance_is_embedded_once() {
    let (model, corpus) = small_setup();
    let trials: &TrialList = &corpus.test_trials;
    let (report, rows) =
        evaluate(&model, &corpus.utterances, trials, &DcfParams::default(), &FeatureConfig::default()).unwrap();
    let unique = trials.unique_ids().len();
    assert_eq!(report.n_embedded, unique);
    assert_eq!(report.cache_hits, 2 * trials.len() - unique);
    assert_eq!(rows.len(), trials.len());
    assert_eq!(report.n_target + report.n_nontarget, trials.len());
}

#[test]
fn untrained_model_probe() {
    let (model, corpus) = small_setup();
    let (report, _) =
        evaluate(&model, &corpus.utterances, &corpus.test_trials, &DcfParams::default(), &FeatureConfig::default())
            .unwrap();
    println!("untrained eer {:.4} min_dcf {:.4}", report.eer, report.min_dcf);
    assert!((0.0..=1.0).contains(&report.eer));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eer_ignores_monotone_maps(seed in any::<u64>(), n in 4usize..200, shift in -1.0f64..2.0, a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let s = random_set(seed, n, shift);
        let mapped: Vec<f64> = s.scores().iter().map(|x| (a * x + b).exp()).collect();
        let m = ScoreSet::new(s.labels().to_vec(), mapped).unwrap();
        prop_assert!((eer(&s).unwrap().0 - eer(&m).unwrap().0).abs() < 1e-12);
        let p = DcfParams::default();
        prop_assert!((min_dcf(&s, &p).unwrap().0 - min_dcf(&m, &p).unwrap().0).abs() < 1e-12);
    }

    #[test]
    fn eer_survives_label_flip_with_negation(seed in any::<u64>(), n in 4usize..200, shift in -1.0f64..2.0) {
        let s = random_set(seed, n, shift);
        let f = ScoreSet::new(
            s.labels().iter().map(|l| !l).collect(),
            s.scores().iter().map(|x| -x).collect(),
        ).unwrap();
        let step = 1.0 / s.n_target().min(s.n_nontarget()) as f64;
        prop_assert!((eer(&s).unwrap().0 - eer(&f).unwrap().0).abs() <= step + 1e-12);
    }

    #[test]
    fn metrics_are_bounded(seed in any::<u64>(), n in 4usize..200, shift in -2.0f64..2.0, pt in 0.001f64..0.5, cm in 0.1f64..10.0, cf in 0.1f64..10.0) {
        let s = random_set(seed, n, shift);
        let (e, _) = eer(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        let (d, _) = min_dcf(&s, &DcfParams { p_target: pt, c_miss: cm, c_fa: cf }).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&d));
    }
}
