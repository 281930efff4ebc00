use cos_core::decode::{combine_step, SelectionMode, TokenDistribution};
use cos_core::grounding::{ground, GroundingOptions, RetryPolicy};
use cos_core::harness::{generate_synthetic_suite, SyntheticSpec};
use cos_core::media::{DecodedFrame, FrameDirectory, InMemoryVideo};
use cos_core::oracles::{
    CountingOracle, MockOracle, MockOracleConfig, ToyBackend, ToyBackendConfig,
};
use cos_core::{answer_baseline, answer_cos, sample_shots, PipelineConfig};
use image::{Rgb, RgbImage};
use proptest::prelude::*;

fn tagged_video(tags: &[Vec<&'static str>]) -> InMemoryVideo {
    InMemoryVideo {
        id: "prop".into(),
        frames: tags
            .iter()
            .map(|t| DecodedFrame {
                pixels: RgbImage::from_pixel(3, 3, Rgb([1, 2, 3])),
                tags: t.iter().map(|s| s.to_string()).collect(),
            })
            .collect(),
        fps: None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grounding_matches_group_tags(
        tags in prop::collection::vec(prop::sample::subsequence(vec!["cat", "tree", "hat"], 0..=2), 1..40),
        k in 1usize..6,
    ) {
        let shots = sample_shots(&tagged_video(&tags), tags.len(), None).unwrap();
        let oracle = CountingOracle::new(MockOracle::new(["cat"]));
        let options = GroundingOptions { group_size: k, parallelism: 0, retry: RetryPolicy::none() };
        let g = ground(&oracle, &shots, "any cats?", &options).unwrap();
        prop_assert_eq!(oracle.calls(), tags.len().div_ceil(k));
        for (i, &bit) in g.code.bits().iter().enumerate() {
            let start = i / k * k;
            let hit = tags[start..(start + k).min(tags.len())].iter().any(|t| t.contains(&"cat"));
            prop_assert_eq!(bit, hit);
        }
    }

    #[test]
    fn identical_contrast_contexts_cancel(
        lx in prop::collection::vec(-50.0f64..50.0, 1..32),
        seed in any::<u64>(),
        alpha in 0.0f64..=1.0,
    ) {
        let lp: Vec<f64> = lx.iter().enumerate().map(|(i, x)| x * 0.5 + (seed % 7) as f64 - i as f64).collect();
        let x = TokenDistribution::new(lx).unwrap();
        let p = TokenDistribution::new(lp).unwrap();
        prop_assert_eq!(combine_step(&x, &p, &p, alpha).unwrap(), x.clone());
        prop_assert_eq!(combine_step(&x, &p, &x, 0.0).unwrap(), x);
    }
}

#[test]
fn frames_on_disk_through_the_whole_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec {
        items: 6,
        shots: 32,
        relevant: 3,
        distractors: 20,
        ..SyntheticSpec::default()
    };
    let suite = generate_synthetic_suite(&spec, dir.path(), 21).unwrap();
    let mock = MockOracleConfig::load(&suite.mock_config).unwrap();
    let backend = ToyBackend::new(ToyBackendConfig::load(&suite.toy_config).unwrap()).unwrap();
    let mut config = PipelineConfig {
        num_shots: 32,
        tile_size: Some(8),
        ..PipelineConfig::default()
    };

    let mut cos_correct = 0;
    for item in &suite.items {
        let video = FrameDirectory::open(dir.path().join(&item.frames_path))
            .unwrap()
            .with_tags(mock.tags.clone());
        let shots = config.sample(&video).unwrap();
        assert_eq!(shots.len(), 32);
        assert_eq!(
            shots.shots().iter().filter(|s| !s.tags.is_empty()).count(),
            23
        );

        config.alpha_override = None;
        let cos = answer_cos(
            &mock.oracle,
            &backend,
            &shots,
            &item.question,
            &item.decoder_prompt(),
            &config,
        )
        .unwrap();
        assert_eq!(cos.grounding.oracle_calls(), 8);
        assert!(cos.grounding.code.relevant_count() >= 3);
        cos_correct += (cos.generation.text == item.answer) as usize;

        config.alpha_override = Some(0.0);
        let flat = answer_cos(
            &mock.oracle,
            &backend,
            &shots,
            &item.question,
            &item.decoder_prompt(),
            &config,
        )
        .unwrap();
        let base = answer_baseline(&backend, &shots, &item.decoder_prompt(), &config).unwrap();
        assert_eq!(flat.generation.tokens, base.tokens);
    }
    assert!(cos_correct >= 4, "only {cos_correct} of 6 answered");
}

#[test]
fn sampling_is_reproducible_per_seed() {
    let tags: Vec<Vec<&str>> = (0..12)
        .map(|i| {
            if i % 3 == 0 {
                vec!["evidence_B"]
            } else {
                vec![]
            }
        })
        .collect();
    let shots = sample_shots(&tagged_video(&tags), 12, None).unwrap();
    let backend = ToyBackend::new(ToyBackendConfig::default()).unwrap();
    let oracle = MockOracle::new(["evidence_B"]);
    let run = |seed| {
        let mut config = PipelineConfig {
            num_shots: 12,
            ..PipelineConfig::default()
        };
        config.generation.mode = SelectionMode::Sample {
            temperature: 2.0,
            seed,
        };
        answer_cos(&oracle, &backend, &shots, "q", "q", &config)
            .unwrap()
            .generation
            .tokens
    };
    assert_eq!(run(5), run(5));
    let distinct: std::collections::BTreeSet<_> = (0..40).map(run).collect();
    assert!(distinct.len() > 1);
}
