use declab_core::autoregress::{generate, GenerationParams};
use declab_core::frame::{build_world, rollout, FrameGrid};
use declab_core::ngram::{tokenize, NGramModel, NextTokenModel};
use declab_core::prob::{argmax_onehot, cross_entropy, entropy, softmax, TargetDistribution};
use declab_core::sampler::{run_pipeline, Stage};
use declab_core::{LogitVector, RandomStream, SamplerConfig, TokenAlphabet, TokenId};
use proptest::prelude::*;

const D: usize = 40;

fn logits(len: usize) -> impl Strategy<Value = LogitVector> {
    prop::collection::vec(-12.0f64..12.0, len).prop_map(|v| LogitVector::new(v).unwrap())
}

fn sampler_config() -> impl Strategy<Value = SamplerConfig> {
    (
        prop_oneof![Just(0.0), 0.05f64..4.0],
        1usize..=60,
        prop_oneof![Just(1.0), 0.01f64..1.0],
        prop_oneof![Just(0.0), 0.0f64..0.99],
        any::<u64>(),
    )
        .prop_map(|(t, k, p, m, seed)| SamplerConfig::new(t, k, p, m, seed).unwrap())
}

proptest! {
    #[test]
    fn softmax_normalizes(z in logits(D), t in 0.001f64..1000.0) {
        let p = softmax(&z, t).unwrap();
        prop_assert!((p.total() - 1.0).abs() <= 1e-9);
        prop_assert!(p.validate().is_ok());
    }

    #[test]
    fn softmax_shift_invariant(z in logits(D), t in 0.1f64..10.0, c in -100.0f64..100.0) {
        let shifted = LogitVector::new(z.as_slice().iter().map(|v| v + c).collect()).unwrap();
        let a = softmax(&z, t).unwrap();
        let b = softmax(&shifted, t).unwrap();
        for (x, y) in a.masses().zip(b.masses()) {
            prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn temperature_keeps_the_mode(z in logits(D), t in 0.01f64..100.0) {
        prop_assert_eq!(argmax_onehot(&softmax(&z, t).unwrap()).unwrap(), z.argmax());
    }

    #[test]
    fn entropy_grows_with_temperature(z in logits(D), t1 in 0.1f64..10.0, ratio in 1.05f64..4.0) {
        let spread = z.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - z.as_slice().iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 0.5);
        let h1 = entropy(&softmax(&z, t1).unwrap());
        let h2 = entropy(&softmax(&z, t1 * ratio).unwrap());
        prop_assert!(h2 > h1, "H({t1})={h1} H({})={h2}", t1 * ratio);
        prop_assert!(h2 <= (D as f64).ln() + 1e-12);
    }

    #[test]
    fn constant_logits_have_max_entropy(c in -50.0f64..50.0, t in 0.01f64..100.0) {
        let z = LogitVector::new(vec![c; D]).unwrap();
        prop_assert!((entropy(&softmax(&z, t).unwrap()) - (D as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn low_temperature_is_one_hot(mut v in prop::collection::vec(-5.0f64..5.0, D), at in 0usize..D) {
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        v[at] = max + 0.1;
        let z = LogitVector::new(v).unwrap();
        let p = softmax(&z, 1e-4).unwrap();
        prop_assert!(p.mass_of(TokenId::from_index(at)) >= 1.0 - 1e-9);
    }

    #[test]
    fn cross_entropy_nonnegative(z in logits(D), target in 0usize..D, t in 0.1f64..5.0) {
        let a = TokenAlphabet::default_text();
        let p = softmax(&z, t).unwrap();
        let target = TargetDistribution::new(&a, TokenId::from_index(target)).unwrap();
        let ce = cross_entropy(&p, &target);
        prop_assert!(ce >= 0.0);
        prop_assert!(ce > 0.0 || p.mass_of(target.correct()) == 1.0);
    }

    #[test]
    fn trace_invariants(z in logits(D), cfg in sampler_config()) {
        let (token, trace) = run_pipeline(&z, &cfg, &mut cfg.stream()).unwrap();
        let counts = trace.survivor_counts();
        prop_assert_eq!(counts.len(), 4);
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
        for stage in &trace.stages {
            prop_assert!((stage.total() - 1.0).abs() <= 1e-9);
        }
        let last = trace.final_stage();
        prop_assert!(last.index_map.contains(&z.argmax()));
        prop_assert!(last.index_map.contains(&token));
        prop_assert!(last.masses[last.index_map.iter().position(|&t| t == token).unwrap()] > 0.0);
    }

    #[test]
    fn argmax_equivalences(z in logits(D), seed in any::<u64>(), t in 0.05f64..4.0) {
        let expected = z.argmax();
        let k1 = SamplerConfig::new(t, 1, 0.95, 0.0, seed).unwrap();
        let floor = SamplerConfig::new(t, 40, 1.0, 0.99, seed).unwrap();
        for cfg in [k1, floor, SamplerConfig::argmax(seed)] {
            let (token, _) = run_pipeline(&z, &cfg, &mut cfg.stream()).unwrap();
            prop_assert_eq!(token, expected);
        }
    }

    #[test]
    fn neutral_config_is_plain_softmax(z in logits(D), seed in any::<u64>()) {
        let cfg = SamplerConfig::neutral(D, seed);
        let (_, trace) = run_pipeline(&z, &cfg, &mut cfg.stream()).unwrap();
        let dense = trace.final_stage().distribution().unwrap().to_dense(D);
        let reference = softmax(&z, 1.0).unwrap();
        for (a, b) in dense.iter().zip(reference.masses()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn permutation_equivariance(
        z in logits(D),
        perm in Just((0..D).collect::<Vec<_>>()).prop_shuffle(),
        cfg in sampler_config(),
    ) {
        let permuted = LogitVector::new(perm.iter().map(|&i| z.as_slice()[i]).collect()).unwrap();
        let (_, a) = run_pipeline(&z, &cfg, &mut cfg.stream()).unwrap();
        let (_, b) = run_pipeline(&permuted, &cfg, &mut cfg.stream()).unwrap();
        let a = a.final_stage().distribution().unwrap().to_dense(D);
        let b = b.final_stage().distribution().unwrap().to_dense(D);
        for (new, &old) in perm.iter().enumerate() {
            prop_assert!((b[new] - a[old]).abs() <= 1e-12);
        }
    }

    #[test]
    fn ngram_conditionals_normalize(text in "[a-z ,.]{8,80}", ctx in "[a-z]{0,6}", n in 1usize..5, alpha in 0.0f64..2.0) {
        let a = TokenAlphabet::default_text();
        let corpus = tokenize(&text, &a);
        let model = NGramModel::train(&corpus, a.clone(), n, alpha).unwrap();
        let z = model.logits_for(&tokenize(&ctx, &a));
        prop_assert_eq!(z.len(), D);
        let p = softmax(&z, 1.0).unwrap();
        prop_assert!((p.total() - 1.0).abs() <= 1e-9);
        let again = NGramModel::train(&corpus, a, n, alpha).unwrap();
        prop_assert_eq!(again.logits_for(&tokenize(&ctx, &TokenAlphabet::default_text())), z);
    }

    #[test]
    fn generation_terminates_and_replays(seed in any::<u64>(), max_len in 1usize..80, cap in 1usize..16) {
        let a = TokenAlphabet::default_text();
        let model = NGramModel::train(&tokenize("the cat sat. the dog ran.# a man.#", &a), a.clone(), 3, 0.05).unwrap();
        let p = GenerationParams::new(SamplerConfig::default().with_seed(seed), max_len, cap).unwrap();
        let prompt = tokenize("the", &a);
        let out = generate(&model, &p, &prompt).unwrap();
        prop_assert!(out.output_tokens.len() <= max_len);
        prop_assert_eq!(out.traces.len(), out.output_tokens.len());
        prop_assert_eq!(generate(&model, &p, &prompt).unwrap(), out);
    }

    #[test]
    fn freeze_at_k1(world_seed in any::<u64>(), frame_seed in any::<u64>(), seed in any::<u64>()) {
        let w = build_world(8, 8, 16, 0.9, world_seed).unwrap();
        let f = FrameGrid::random(8, 8, 16, frame_seed).unwrap();
        let cfg = SamplerConfig::new(1.0, 1, 1.0, 0.0, seed).unwrap();
        let r = rollout(&w, &f, &cfg, 6).unwrap();
        prop_assert_eq!(r.freeze_index, Some(1));
        prop_assert!(r.frames.iter().all(|fr| *fr == f));
    }

    #[test]
    fn world_conditionals_valid(stay in 0.07f64..0.999, v in 2usize..40, seed in any::<u64>(), r in 0usize..5, c in 0usize..5) {
        prop_assume!(stay > 1.0 / v as f64);
        let w = build_world(5, 5, v, stay, seed).unwrap();
        let f = FrameGrid::random(5, 5, v, seed ^ 1).unwrap();
        let p = w.conditional(&f, r, c);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let s = f.get(r, c) as usize;
        prop_assert!(p.iter().enumerate().all(|(t, &m)| t == s || m < p[s]));
    }
}

#[test]
fn empirical_frequencies_match_final_stage() {
    let z = LogitVector::new(
        (0..D)
            .map(|i| ((i * 37 % 11) as f64) * 0.45 - (i as f64) * 0.05)
            .collect(),
    )
    .unwrap();
    let cfg = SamplerConfig::new(0.8, 40, 0.95, 0.0, 2024).unwrap();
    let mut rng = cfg.stream();
    let (_, first) = run_pipeline(&z, &cfg, &mut rng).unwrap();
    let target = first.final_stage().distribution().unwrap().to_dense(D);
    let n = 100_000;
    let mut hist = [0u32; D];
    hist[first.drawn_token.index()] += 1;
    for _ in 1..n {
        let (t, _) = run_pipeline(&z, &cfg, &mut rng).unwrap();
        hist[t.index()] += 1;
    }
    let tv: f64 = hist
        .iter()
        .zip(&target)
        .map(|(&h, &p)| (h as f64 / n as f64 - p).abs())
        .sum::<f64>()
        / 2.0;
    assert!(tv <= 0.01, "total variation {tv}");
}

#[test]
fn uniform_draw_frequencies() {
    // Binomial σ = √(0.25·0.75/1e5) ≈ 1.37e-3, so ±0.01 is about 7σ.
    let p = declab_core::ProbabilityDistribution::from_masses(vec![0.25; 4]).unwrap();
    let mut rng = RandomStream::new(8);
    let mut hist = [0u32; 4];
    for _ in 0..100_000 {
        hist[declab_core::sampler::draw(&p, &mut rng).unwrap().index()] += 1;
    }
    for h in hist {
        assert!((h as f64 / 1e5 - 0.25).abs() <= 0.01, "{hist:?}");
    }
}

#[test]
fn context_window_limits_influence() {
    let a = TokenAlphabet::default_text();
    let corpus = tokenize(
        "the quick brown fox jumps over the lazy dog. pack my box with five dozen liquor jugs.",
        &a,
    );
    let model = NGramModel::train(&corpus, a.clone(), 4, 0.1).unwrap();
    let cfg = SamplerConfig::new(1.0, 40, 1.0, 0.0, 3).unwrap();
    let p = GenerationParams::new(cfg, 1, 2).unwrap();
    let x = generate(&model, &p, &tokenize("pack my box with fi", &a)).unwrap();
    let y = generate(&model, &p, &tokenize("over the lazy dog. ju fi", &a)).unwrap();
    assert_eq!(x.traces[0], y.traces[0]);

    // "he " and "ve " share two tokens and differ on the third.
    let narrow = generate(&model, &p, &tokenize("jumps over the ", &a)).unwrap();
    assert_eq!(
        narrow.traces[0],
        generate(&model, &p, &tokenize("with five ", &a))
            .unwrap()
            .traces[0]
    );
    let wide = GenerationParams::new(cfg, 1, 3).unwrap();
    let x = generate(&model, &wide, &tokenize("jumps over the ", &a)).unwrap();
    let y = generate(&model, &wide, &tokenize("with five ", &a)).unwrap();
    assert_ne!(
        x.traces[0].stage(Stage::Softmax).unwrap().masses,
        y.traces[0].stage(Stage::Softmax).unwrap().masses
    );
}
