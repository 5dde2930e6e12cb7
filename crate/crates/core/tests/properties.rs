mod common;

use proptest::prelude::*;
use steersmc::engine::{
    effective_sample_size, normalize_weights, resample_indices, run_inference, InferenceConfig,
    Method, ResampleScheme,
};
use steersmc::rng::StreamRng;
use steersmc::tasks::{verify, weighted_pass_at_1, ConstraintSpec, PositionedWord};
use steersmc::token_model::{ModelQuery, TokenModel, Tokenizer};

use common::naive::naive_check;

const CORPUS: &str = "the cat sat. a cat ran! the dog sat on a mat.\nrun, cat, run?";

fn ngram(order: usize) -> TokenModel {
    TokenModel::train_ngram(CORPUS, order, 0.1, Tokenizer::Char).unwrap()
}

fn ids(model: &TokenModel, max_len: usize) -> impl Strategy<Value = Vec<u32>> {
    let v = model.vocabulary().size() as u32;
    prop::collection::vec(0..v, 0..max_len)
}

/// Short texts over an alphabet that exercises word, punctuation and
/// sentence boundaries.
fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec![
            "a", "b", "cat", "Dog", " ", " ", "\n", ".", "!", "?", ",", "é", "x.",
        ]),
        0..14,
    )
    .prop_map(|parts| parts.concat())
}

fn word() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["a", "b", "cat", "Dog", "x", "é"]).prop_map(String::from)
}

fn constraint() -> impl Strategy<Value = ConstraintSpec> {
    prop_oneof![
        (0usize..20).prop_map(|count| ConstraintSpec::CharCountExact { count }),
        (0usize..6).prop_map(|count| ConstraintSpec::WordCountExact { count }),
        (0usize..6).prop_map(|count| ConstraintSpec::WordCountMin { count }),
        prop::collection::vec((1usize..5, word()), 1..3).prop_map(|ws| {
            ConstraintSpec::PositionedWords {
                words: ws
                    .into_iter()
                    .map(|(position, word)| PositionedWord { position, word })
                    .collect(),
            }
        }),
        prop::collection::vec(word(), 1..3)
            .prop_map(|words| ConstraintSpec::ContainsWords { words }),
        prop::collection::vec(word(), 1..3)
            .prop_map(|words| ConstraintSpec::ForbiddenWords { words }),
        (1usize..5).prop_map(|max| ConstraintSpec::MaxWordLength { max }),
        (0usize..4).prop_map(|count| ConstraintSpec::SentenceCountExact { count }),
        prop::collection::vec(word(), 1..3)
            .prop_map(|words| ConstraintSpec::SentenceLastWords { words }),
        (prop::option::of(1usize..3), prop::option::of(1usize..5))
            .prop_map(|(min, max)| ConstraintSpec::PerSentenceWordBounds { min, max }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ngram_rows_are_distributions(order in 1usize..5, ctx in ids(&ngram(1), 12)) {
        let m = ngram(order);
        let d = m.next_distribution(&ModelQuery::new(&ctx, "proposal")).unwrap();
        prop_assert!(d.iter().all(|p| *p > 0.0));
        prop_assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn queries_are_pure(order in 1usize..4, ctx in ids(&ngram(1), 8)) {
        let m = ngram(order);
        let q = ModelQuery::new(&ctx, "prior");
        let first = m.next_distribution(&q).unwrap();
        for _ in 0..20 {
            prop_assert_eq!(&m.next_distribution(&q).unwrap(), &first);
        }
    }

    #[test]
    fn sequence_logprob_is_additive(order in 1usize..4, a in ids(&ngram(1), 6), b in ids(&ngram(1), 6)) {
        let m = ngram(order);
        let whole = m.sequence_logprob(&[], &[a.clone(), b.clone()].concat(), "prior").unwrap();
        let head = m.sequence_logprob(&[], &a, "prior").unwrap();
        let tail = m.sequence_logprob(&a, &b, "prior").unwrap();
        prop_assert!((whole - head - tail).abs() < 1e-9);
        let mut stepwise = 0.0;
        let all = [a, b].concat();
        for i in 0..all.len() {
            stepwise += m.next_distribution(&ModelQuery::new(&all[..i], "prior")).unwrap()[all[i] as usize].ln();
        }
        prop_assert!((whole - stepwise).abs() < 1e-9);
    }

    #[test]
    fn verifier_agrees_with_scanner(c in constraint(), t in text()) {
        let report = verify(std::slice::from_ref(&c), &t);
        prop_assert_eq!(report.passed, naive_check(&c, &t), "{:?} on {:?}", c, t);
    }

    #[test]
    fn verifier_is_total_on_unicode(t in "\\PC{0,40}", n in 0usize..10) {
        let cs = [
            ConstraintSpec::CharCountExact { count: n },
            ConstraintSpec::SentenceCountExact { count: n },
            ConstraintSpec::MaxWordLength { max: n.max(1) },
        ];
        let a = verify(&cs, &t);
        prop_assert_eq!(a, verify(&cs, &t));
    }

    #[test]
    fn weighted_pass_is_shift_invariant(
        ws in prop::collection::vec((-30.0f64..30.0, any::<bool>()), 1..12),
        shift in -500.0f64..500.0,
    ) {
        let base: Vec<_> = ws.iter().map(|(w, p)| (Some(*w), *p)).collect();
        let moved: Vec<_> = ws.iter().map(|(w, p)| (Some(w + shift), *p)).collect();
        let (x, y) = (weighted_pass_at_1(&base), weighted_pass_at_1(&moved));
        prop_assert!((0.0..=1.0).contains(&x));
        prop_assert!((x - y).abs() < 1e-9);
    }

    #[test]
    fn normalized_weights_and_ess(lw in prop::collection::vec(-50.0f64..5.0, 1..64)) {
        let w = normalize_weights(&lw).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let ess = effective_sample_size(&w);
        prop_assert!(ess >= 1.0 - 1e-9 && ess <= lw.len() as f64 + 1e-9);
    }

    #[test]
    fn resampling_never_picks_dead_particles(
        raw in prop::collection::vec(prop_oneof![Just(0.0f64), 0.01f64..1.0], 1..40),
        seed in any::<u64>(),
        systematic in any::<bool>(),
    ) {
        prop_assume!(raw.iter().any(|w| *w > 0.0));
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let scheme = if systematic { ResampleScheme::Systematic } else { ResampleScheme::Multinomial };
        let idx = resample_indices(&w, scheme, &mut StreamRng::from_key(seed));
        prop_assert_eq!(idx.len(), w.len());
        prop_assert!(idx.iter().all(|i| w[*i] > 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn inference_is_a_function_of_the_seed(seed in any::<u64>(), which in 0usize..5, smc in any::<bool>()) {
        let (plan, models) = common::enumerable(common::ENUMERABLE[which]);
        let method = if smc { Method::Smc } else { Method::Importance };
        let cfg = InferenceConfig::new(method, 64, seed);
        let a = run_inference(&plan, &models, &cfg);
        let b = run_inference(&plan, &models, &cfg);
        prop_assert_eq!(serde_json::to_string(&a.candidates).unwrap(), serde_json::to_string(&b.candidates).unwrap());
        prop_assert_eq!(a.selected_index, b.selected_index);
    }
}
