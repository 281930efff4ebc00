//! Question answering over long videos by grounding relevant shots and
//! contrasting them with the rest while decoding.
//!
//! A long video is uniformly sampled into shots. Groups of consecutive shots
//! are tiled into mosaics and a vision-language model answers "yes" or "no"
//! for each mosaic, which yields a per-shot relevance code. From that code
//! two sequences of the same length are built, one made only of relevant
//! shots and one made only of irrelevant shots. The answer is then decoded
//! from the sampled shots with every step's logits nudged toward the
//! relevant sequence and away from the irrelevant one, by a weight that grows
//! as relevant shots get sparser.
//!
//! | module | role |
//! |---|---|
//! | [`media`] | frame sources, uniform sampling, mosaics, black frames |
//! | [`grounding`] | summary prompt, verdict parsing, relevance code |
//! | [`subshots`] | positive / negative sequences and their weight |
//! | [`decode`] | plain and co-reasoning decoders |
//! | [`oracles`] | model interfaces, mock/toy doubles, HTTP adapters |
//! | [`harness`] | manifests, benchmark runs, reports, synthetic suites |
//! | [`pipeline`] | the stages wired together |
//!
//! The guide under `book/` walks through each stage; its code listings are
//! compiled and run as doctests of this crate.

pub mod decode;
pub mod grounding;
pub mod harness;
pub mod kv;
pub mod media;
pub mod oracles;
pub mod pipeline;
pub mod subshots;

pub use decode::{
    baseline_decode, co_reason_decode, combine_step, combined_probability, Generation,
    GenerationConfig, SelectionMode, TokenDistribution,
};
pub use grounding::{build_summary_prompt, ground, parse_verdict, RelevanceCode};
pub use media::{compose_mosaics, make_black_frame, sample_shots, FrameRef, ShotSequence};
pub use pipeline::{answer_baseline, answer_cos, CosOutcome, PipelineConfig, PipelineError};
pub use subshots::{build_negative, build_positive, compute_alpha, materialize, SubShotPair};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/mosaics.md")]
    mod mosaics {}
    #[doc = include_str!("../../../book/src/grounding.md")]
    mod grounding {}
    #[doc = include_str!("../../../book/src/subshots.md")]
    mod subshots {}
    #[doc = include_str!("../../../book/src/co-reasoning.md")]
    mod co_reasoning {}
    #[doc = include_str!("../../../book/src/backends.md")]
    mod backends {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
