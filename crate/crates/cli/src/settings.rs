//! Layered configuration: command-line flags override the config file, which
//! overrides built-in defaults.
//!
//! The config file is flat `key = value` text whose keys are the long flag
//! names without dashes in front (`num-shots = 64`). It comes from `--config`
//! or, failing that, the `COS_CONFIG` environment variable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::Args;
use cos_core::decode::{GenerationConfig, SelectionMode};
use cos_core::grounding::RetryPolicy;
use cos_core::kv::KvFile;
use cos_core::media::{DEFAULT_GROUP_SIZE, DEFAULT_NUM_SHOTS, DEFAULT_TILE_SIZE};
use cos_core::oracles::RemoteSettings;
use cos_core::PipelineConfig;

use crate::error::CliError;

/// Options shared by the pipeline subcommands. Every field is optional so
/// that "not given" can fall through to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Knobs {
    /// Shots sampled uniformly from each video [default: 128]
    #[arg(long)]
    pub num_shots: Option<usize>,
    /// Consecutive shots per mosaic; 1 classifies every shot on its own [default: 4]
    #[arg(long)]
    pub group_size: Option<usize>,
    /// Side length, in pixels, each frame is resized to [default: 336]
    #[arg(long)]
    pub tile_size: Option<u32>,
    /// Relevance oracle: `mock:FILE` or an HTTP endpoint
    #[arg(long)]
    pub oracle: Option<String>,
    /// Decoder backend: `toy`, `toy:FILE` or an HTTP base URL
    #[arg(long)]
    pub backend: Option<String>,
    /// Replace the computed contrast weight (0 gives plain decoding)
    #[arg(long)]
    pub alpha_override: Option<f64>,
    /// Greedy decoding (the default); overrides `sample` from a config file
    #[arg(long, conflicts_with = "sample")]
    pub greedy: bool,
    /// Sample with this temperature instead of greedy decoding
    #[arg(long, value_name = "TEMPERATURE")]
    pub sample: Option<f64>,
    /// Seed for sampling and mock oracle noise [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generation length limit [default: 16]
    #[arg(long)]
    pub max_new_tokens: Option<usize>,
    /// Concurrent oracle requests per question (0 = number of cores) [default: 0]
    #[arg(long)]
    pub oracle_parallelism: Option<usize>,
    /// Concurrent benchmark items (0 = number of cores) [default: 0]
    #[arg(long)]
    pub item_parallelism: Option<usize>,
    /// Retries for failed oracle requests [default: 3]
    #[arg(long)]
    pub retries: Option<u32>,
    /// Per-request deadline for remote models, in seconds [default: 60]
    #[arg(long)]
    pub timeout_secs: Option<f64>,
    /// Requests in flight per remote adapter [default: 4]
    #[arg(long)]
    pub max_concurrency: Option<usize>,
    /// Bearer token forwarded to remote models
    #[arg(long)]
    pub auth_token: Option<String>,
}

impl Knobs {
    /// Fills every unset field from `file`.
    pub fn layer_file(mut self, file: &KvFile) -> Result<Self, CliError> {
        for entry in &file.entries {
            match entry.key.as_str() {
                "num-shots" => fill(&mut self.num_shots, file.value(entry)?),
                "group-size" => fill(&mut self.group_size, file.value(entry)?),
                "tile-size" => fill(&mut self.tile_size, file.value(entry)?),
                "oracle" => fill(&mut self.oracle, entry.value.clone()),
                "backend" => fill(&mut self.backend, entry.value.clone()),
                "alpha-override" => fill(&mut self.alpha_override, file.value(entry)?),
                "sample" => {
                    if !self.greedy {
                        fill(&mut self.sample, file.value(entry)?)
                    }
                }
                "seed" => fill(&mut self.seed, file.value(entry)?),
                "max-new-tokens" => fill(&mut self.max_new_tokens, file.value(entry)?),
                "oracle-parallelism" => fill(&mut self.oracle_parallelism, file.value(entry)?),
                "item-parallelism" => fill(&mut self.item_parallelism, file.value(entry)?),
                "retries" => fill(&mut self.retries, file.value(entry)?),
                "timeout-secs" => fill(&mut self.timeout_secs, file.value(entry)?),
                "max-concurrency" => fill(&mut self.max_concurrency, file.value(entry)?),
                "auth-token" => fill(&mut self.auth_token, entry.value.clone()),
                _ => return Err(file.unknown(entry).into()),
            }
        }
        Ok(self)
    }

    pub fn resolve(&self) -> Result<Effective, CliError> {
        let mode = match self.sample {
            Some(t) if !self.greedy => SelectionMode::Sample {
                temperature: t,
                seed: self.seed.unwrap_or(0),
            },
            _ => SelectionMode::Greedy,
        };
        let timeout = self.timeout_secs.unwrap_or(60.0);
        if !(timeout > 0.0 && timeout.is_finite()) {
            return Err(CliError::usage("timeout-secs must be positive"));
        }
        let pipeline = PipelineConfig {
            num_shots: self.num_shots.unwrap_or(DEFAULT_NUM_SHOTS),
            group_size: self.group_size.unwrap_or(DEFAULT_GROUP_SIZE),
            tile_size: Some(self.tile_size.unwrap_or(DEFAULT_TILE_SIZE)),
            alpha_override: self.alpha_override,
            generation: GenerationConfig {
                max_new_tokens: self.max_new_tokens.unwrap_or(16),
                mode,
                ..GenerationConfig::default()
            },
            oracle_parallelism: self.oracle_parallelism.unwrap_or(0),
            item_parallelism: self.item_parallelism.unwrap_or(0),
            retry: RetryPolicy {
                max_retries: self.retries.unwrap_or(3),
                ..RetryPolicy::default()
            },
            seed: self.seed.unwrap_or(0),
        };
        pipeline.validate()?;
        Ok(Effective {
            pipeline,
            oracle: self.oracle.clone(),
            backend: self.backend.clone(),
            remote: RemoteSettings {
                timeout: Duration::from_secs_f64(timeout),
                bearer_token: self.auth_token.clone(),
                max_concurrency: self.max_concurrency.unwrap_or(4),
            },
        })
    }
}

fn fill<T>(slot: &mut Option<T>, value: T) {
    if slot.is_none() {
        *slot = Some(value);
    }
}

/// The final configuration after layering.
#[derive(Debug, Clone)]
pub struct Effective {
    pub pipeline: PipelineConfig,
    pub oracle: Option<String>,
    pub backend: Option<String>,
    pub remote: RemoteSettings,
}

impl Effective {
    /// Renders the configuration in config-file syntax. Secrets are masked.
    pub fn render(&self) -> String {
        let p = &self.pipeline;
        let mut out = String::from("# effective configuration\n");
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("num-shots", p.num_shots.to_string());
        line("group-size", p.group_size.to_string());
        line(
            "tile-size",
            p.tile_size.unwrap_or(DEFAULT_TILE_SIZE).to_string(),
        );
        if let Some(o) = &self.oracle {
            line("oracle", o.clone());
        }
        if let Some(b) = &self.backend {
            line("backend", b.clone());
        }
        if let Some(a) = p.alpha_override {
            line("alpha-override", a.to_string());
        }
        if let SelectionMode::Sample { temperature, .. } = p.generation.mode {
            line("sample", temperature.to_string());
        }
        line("seed", p.seed.to_string());
        line("max-new-tokens", p.generation.max_new_tokens.to_string());
        line("oracle-parallelism", p.oracle_parallelism.to_string());
        line("item-parallelism", p.item_parallelism.to_string());
        line("retries", p.retry.max_retries.to_string());
        line(
            "timeout-secs",
            self.remote.timeout.as_secs_f64().to_string(),
        );
        line("max-concurrency", self.remote.max_concurrency.to_string());
        if self.remote.bearer_token.is_some() {
            line("auth-token", "<redacted>".into());
        }
        out
    }
}

/// Picks the config file: explicit flag first, then `COS_CONFIG`.
pub fn config_path(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf).or_else(|| {
        std::env::var_os("COS_CONFIG")
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
    })
}

pub fn load(knobs: &Knobs, config: Option<&Path>) -> Result<Effective, CliError> {
    let knobs = match config_path(config) {
        Some(path) => knobs.clone().layer_file(&KvFile::read(&path)?)?,
        None => knobs.clone(),
    };
    knobs.resolve()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_file_beat_defaults() {
        let file = KvFile::parse("cfg", "num-shots = 64\ngroup-size = 2\nsample = 0.7\n").unwrap();
        let flags = Knobs {
            group_size: Some(8),
            ..Knobs::default()
        };
        let eff = flags.layer_file(&file).unwrap().resolve().unwrap();
        assert_eq!(eff.pipeline.num_shots, 64);
        assert_eq!(eff.pipeline.group_size, 8);
        assert_eq!(eff.pipeline.tile_size, Some(DEFAULT_TILE_SIZE));
        assert!(
            matches!(eff.pipeline.generation.mode, SelectionMode::Sample { temperature, .. } if temperature == 0.7)
        );
    }

    #[test]
    fn greedy_flag_wins_over_file_sampling() {
        let file = KvFile::parse("cfg", "sample = 0.7\n").unwrap();
        let flags = Knobs {
            greedy: true,
            ..Knobs::default()
        };
        let eff = flags.layer_file(&file).unwrap().resolve().unwrap();
        assert_eq!(eff.pipeline.generation.mode, SelectionMode::Greedy);
    }

    #[test]
    fn rendered_block_reads_back_identically() {
        let flags = Knobs {
            num_shots: Some(32),
            alpha_override: Some(0.25),
            sample: Some(0.5),
            seed: Some(9),
            oracle: Some("mock:o.txt".into()),
            ..Knobs::default()
        };
        let eff = flags.resolve().unwrap();
        let text = eff.render();
        let again = Knobs::default()
            .layer_file(&KvFile::parse("rendered", &text).unwrap())
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(again.pipeline, eff.pipeline);
        assert_eq!(again.render(), text);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        let unknown = KvFile::parse("cfg", "shots = 3\n").unwrap();
        assert!(Knobs::default().layer_file(&unknown).is_err());
        let bad = KvFile::parse("cfg", "num-shots = lots\n").unwrap();
        assert!(Knobs::default().layer_file(&bad).is_err());
        let zero = Knobs {
            num_shots: Some(0),
            ..Knobs::default()
        };
        assert!(zero.resolve().is_err());
        let alpha = Knobs {
            alpha_override: Some(2.0),
            ..Knobs::default()
        };
        assert!(alpha.resolve().is_err());
    }
}
