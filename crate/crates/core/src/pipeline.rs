//! End-to-end answering of one question about one video.

use thiserror::Error;

use crate::decode::{baseline_decode, co_reason_decode, DecodeError, Generation, GenerationConfig};
use crate::grounding::{ground, Grounding, GroundingError, GroundingOptions, RetryPolicy};
use crate::media::{
    sample_shots, MediaError, Resolution, ShotSequence, VideoSource, DEFAULT_GROUP_SIZE,
    DEFAULT_NUM_SHOTS, DEFAULT_TILE_SIZE,
};
use crate::oracles::{DecoderBackend, RelevanceOracle};
use crate::subshots::{materialize, SubShotError, SubShotPair};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Grounding(#[from] GroundingError),
    #[error(transparent)]
    SubShots(#[from] SubShotError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// Everything that shapes one run, independent of which models are used.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub num_shots: usize,
    pub group_size: usize,
    /// Per-tile resolution frames are resized to; `None` keeps the source
    /// resolution (all frames must then already agree).
    pub tile_size: Option<u32>,
    pub alpha_override: Option<f64>,
    pub generation: GenerationConfig,
    /// Concurrent oracle requests per query; `0` uses the ambient pool.
    pub oracle_parallelism: usize,
    /// Concurrent benchmark items; `0` uses the ambient pool.
    pub item_parallelism: usize,
    pub retry: RetryPolicy,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            num_shots: DEFAULT_NUM_SHOTS,
            group_size: DEFAULT_GROUP_SIZE,
            tile_size: Some(DEFAULT_TILE_SIZE),
            alpha_override: None,
            generation: GenerationConfig::default(),
            oracle_parallelism: 0,
            item_parallelism: 0,
            retry: RetryPolicy::default(),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.num_shots == 0 {
            return Err(PipelineError::Config("num_shots must be at least 1".into()));
        }
        if self.group_size == 0 {
            return Err(PipelineError::Config(
                "group_size must be at least 1".into(),
            ));
        }
        if self.tile_size == Some(0) {
            return Err(PipelineError::Config("tile_size must be positive".into()));
        }
        if let Some(a) = self.alpha_override {
            if !(0.0..=1.0).contains(&a) {
                return Err(PipelineError::Config(format!(
                    "alpha_override must lie in [0, 1], got {a}"
                )));
            }
        }
        self.generation.validate()?;
        Ok(())
    }

    pub fn grounding_options(&self) -> GroundingOptions {
        GroundingOptions {
            group_size: self.group_size,
            parallelism: self.oracle_parallelism,
            retry: self.retry,
        }
    }

    fn normalize(&self) -> Option<Resolution> {
        self.tile_size.map(|s| Resolution {
            width: s,
            height: s,
        })
    }

    pub fn sample(&self, video: &dyn VideoSource) -> Result<ShotSequence, PipelineError> {
        Ok(sample_shots(video, self.num_shots, self.normalize())?)
    }
}

/// What a chain-of-shot run produced, beyond the answer text.
#[derive(Debug, Clone)]
pub struct CosOutcome {
    pub generation: Generation,
    pub grounding: Grounding,
    pub pair: SubShotPair,
}

impl CosOutcome {
    pub fn alpha(&self) -> f64 {
        self.pair.alpha
    }
}

/// Grounds, builds the sub-shots and co-reasons over already sampled shots.
pub fn answer_cos(
    oracle: &dyn RelevanceOracle,
    backend: &dyn DecoderBackend,
    shots: &ShotSequence,
    grounding_question: &str,
    decode_question: &str,
    config: &PipelineConfig,
) -> Result<CosOutcome, PipelineError> {
    config.validate()?;
    let grounding = ground(
        oracle,
        shots,
        grounding_question,
        &config.grounding_options(),
    )?;
    let mut pair = SubShotPair::from_code(grounding.code.clone());
    if let Some(alpha) = config.alpha_override {
        pair = pair.with_alpha(alpha)?;
    }
    let contexts = materialize(shots, &pair)?;
    let generation = co_reason_decode(
        backend,
        shots,
        &contexts,
        decode_question,
        &config.generation,
    )?;
    Ok(CosOutcome {
        generation,
        grounding,
        pair,
    })
}

pub fn answer_baseline(
    backend: &dyn DecoderBackend,
    shots: &ShotSequence,
    question: &str,
    config: &PipelineConfig,
) -> Result<Generation, PipelineError> {
    config.validate()?;
    Ok(baseline_decode(
        backend,
        shots,
        question,
        &config.generation,
    )?)
}
