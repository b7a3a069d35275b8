use ambitag::corpus::{split_for_learning_curve, word_count, AnnotatedSentence};
use ambitag::decoder::Mode;
use ambitag::evalstats::{evaluate, learning_curve, tradeoff_sweep};
use ambitag::model::{CandidateSource, Dictionary, Model, TrainConfig};
use ambitag::synth::{SynthSpec, SyntheticHmm};

fn corpus(words: usize, seed: u64) -> (SyntheticHmm, Vec<AnnotatedSentence>) {
    let hmm = SyntheticHmm::random(&SynthSpec {
        vocabulary: 800,
        seed,
        ..SynthSpec::default()
    })
    .unwrap();
    let c = hmm.generate(words, seed).unwrap();
    (hmm, c)
}

#[test]
fn single_point_curve_matches_direct_scoring() {
    let (hmm, c) = corpus(6_000, 1);
    let split = split_for_learning_curve(&c, &[3_000], 2_000, 5).unwrap();
    let config = TrainConfig::default();
    let points = learning_curve(&split, hmm.tagset(), &config, &CandidateSource::Lexicon, Mode::Viterbi).unwrap();
    let model = Model::train(split.slice(0), hmm.tagset(), &config).unwrap();
    let direct = evaluate(&model, &split.eval, &CandidateSource::Lexicon, 1.0, Mode::Viterbi).unwrap();
    assert_eq!(points.len(), 1);
    assert_eq!(points[0].report, direct);
    assert_eq!(points[0].train_words, word_count(split.slice(0)));
}

#[test]
fn more_training_data_does_not_hurt_beyond_noise() {
    let (hmm, c) = corpus(30_000, 2);
    let split = split_for_learning_curve(&c, &[1_000, 5_000, 25_000], 4_000, 8).unwrap();
    let points = learning_curve(
        &split,
        hmm.tagset(),
        &TrainConfig::default(),
        &CandidateSource::Lexicon,
        Mode::Viterbi,
    )
    .unwrap();
    let first = points[0].report;
    let last = points.last().unwrap().report;
    let sd = (first.error_rate * (1.0 - first.error_rate) / first.words as f64).sqrt();
    assert!(last.error_rate <= first.error_rate + 3.0 * sd, "{points:?}");
}

/// Without training data every path has the same weight, so each word
/// gets its lowest-numbered candidate.
#[test]
fn untrained_model_is_the_tie_break_baseline() {
    let (hmm, c) = corpus(5_000, 3);
    let split = split_for_learning_curve(&c, &[0], 2_000, 1).unwrap();
    assert!(split.slice(0).is_empty());
    let mut dict = Dictionary::new();
    for s in &split.eval {
        for t in &s.tokens {
            dict.insert(&t.surface, hmm.class_of(&t.surface).unwrap());
        }
    }
    let source = CandidateSource::Dictionary(dict.clone());
    let points = learning_curve(&split, hmm.tagset(), &TrainConfig::default(), &source, Mode::Viterbi).unwrap();

    let mut hits = 0;
    for s in &split.eval {
        for (tok, gold) in s.iter() {
            if dict.get(&tok.surface).unwrap()[0] == gold {
                hits += 1;
            }
        }
    }
    let words = word_count(&split.eval);
    let expected = 1.0 - hits as f64 / words as f64;
    assert!((points[0].report.error_rate - expected).abs() < 1e-12);
    assert_eq!(points[0].train_words, 0);
}

#[test]
fn sweep_rows_agree_with_single_evaluations() {
    let (hmm, c) = corpus(8_000, 4);
    let (train, eval) = c.split_at(c.len() * 3 / 4);
    let model = Model::train(train, hmm.tagset(), &TrainConfig::default()).unwrap();
    let source = CandidateSource::Lexicon;
    let one = tradeoff_sweep(&model, eval, &source, &[1.0], Mode::Viterbi).unwrap();
    assert_eq!(one.rows.len(), 1);
    assert_eq!(one.rows[0].report.ambiguity, 1.0);
    let full = evaluate(&model, eval, &source, 1.0, Mode::Viterbi).unwrap();
    assert_eq!(one.rows[0].report, full);

    let table = tradeoff_sweep(&model, eval, &source, &[0.0, 0.25, 1.0, 0.05], Mode::Posterior).unwrap();
    let order: Vec<f64> = table.rows.iter().map(|r| r.threshold).collect();
    assert_eq!(order, [1.0, 0.25, 0.05, 0.0]);
    for (row, &t) in table.rows.iter().zip(&order) {
        assert_eq!(row.report, evaluate(&model, eval, &source, t, Mode::Posterior).unwrap());
    }
    for w in table.rows.windows(2) {
        assert!(w[1].report.ambiguity >= w[0].report.ambiguity);
        assert!(w[1].report.error_rate <= w[0].report.error_rate);
    }
}

#[test]
fn posterior_and_viterbi_modes_are_both_reported() {
    let (hmm, c) = corpus(8_000, 5);
    let (train, eval) = c.split_at(c.len() * 3 / 4);
    let model = Model::train(train, hmm.tagset(), &TrainConfig::default()).unwrap();
    let v = evaluate(&model, eval, &CandidateSource::Lexicon, 1.0, Mode::Viterbi).unwrap();
    let p = evaluate(&model, eval, &CandidateSource::Lexicon, 1.0, Mode::Posterior).unwrap();
    assert_eq!((v.ambiguity, p.ambiguity), (1.0, 1.0));
    assert!((v.error_rate - p.error_rate).abs() < 0.05);
}
