use std::fs;
use std::path::Path;
use std::sync::Arc;

use cos_core::decode::Generation;
use cos_core::grounding::{ground, Grounding, RelevanceCode};
use cos_core::harness::{generate_synthetic_suite, SyntheticSpec};
use cos_core::harness::{load_manifest, run_benchmark, BenchMode, BenchSetup};
use cos_core::media::{FrameDirectory, TagTable};
use cos_core::oracles::{
    DecoderBackend, MockOracle, MockOracleConfig, RelevanceOracle, RemoteBackend, RemoteOracle,
    ToyBackend, ToyBackendConfig,
};
use cos_core::subshots::{SourceSlot, SubShotPair};
use cos_core::{answer_baseline, answer_cos, ShotSequence};

use crate::error::{Category, CliError};
use crate::settings::Effective;

fn is_url(spec: &str) -> bool {
    spec.starts_with("http://") || spec.starts_with("https://")
}

/// A relevance oracle plus, for mock oracles, the frame tags it reads.
pub struct OracleChoice {
    pub oracle: Box<dyn RelevanceOracle>,
    pub tags: Option<Arc<TagTable>>,
}

pub fn build_oracle(spec: &str, eff: &Effective) -> Result<OracleChoice, CliError> {
    if let Some(path) = spec.strip_prefix("mock:") {
        let mut config = MockOracleConfig::load(Path::new(path))?;
        config.oracle.seed = eff.pipeline.seed;
        Ok(OracleChoice {
            oracle: Box::new(config.oracle),
            tags: Some(config.tags),
        })
    } else if is_url(spec) {
        Ok(OracleChoice {
            oracle: Box::new(RemoteOracle::new(spec, eff.remote.clone())),
            tags: None,
        })
    } else {
        Err(CliError::usage(format!(
            "oracle must be `mock:FILE` or an http(s) URL, got {spec:?}"
        )))
    }
}

pub fn build_backend(spec: &str, eff: &Effective) -> Result<Box<dyn DecoderBackend>, CliError> {
    let toy = |config| -> Result<Box<dyn DecoderBackend>, CliError> {
        Ok(Box::new(
            ToyBackend::new(config).map_err(|e| CliError::usage(e.to_string()))?,
        ))
    };
    if spec == "toy" {
        toy(ToyBackendConfig::default())
    } else if let Some(path) = spec.strip_prefix("toy:") {
        toy(ToyBackendConfig::load(Path::new(path))?)
    } else if is_url(spec) {
        Ok(Box::new(RemoteBackend::connect(spec, eff.remote.clone())?))
    } else {
        Err(CliError::usage(format!(
            "backend must be `toy`, `toy:FILE` or an http(s) URL, got {spec:?}"
        )))
    }
}

fn required<'a>(value: &'a Option<String>, flag: &str) -> Result<&'a str, CliError> {
    value
        .as_deref()
        .ok_or_else(|| CliError::usage(format!("missing --{flag} (flag or config file)")))
}

fn sample_frames(
    dir: &Path,
    tags: Option<Arc<TagTable>>,
    eff: &Effective,
) -> Result<ShotSequence, CliError> {
    let mut video = FrameDirectory::open(dir)?;
    if let Some(tags) = tags {
        video = video.with_tags(tags);
    }
    Ok(eff.pipeline.sample(&video)?)
}

/// Every group failing means the oracle was never reached.
fn check_reachable(grounding: &Grounding) -> Result<(), CliError> {
    let failed = grounding.failures().count();
    if failed > 0 && failed == grounding.groups.len() {
        let reason = grounding.groups[0].error.clone().unwrap_or_default();
        return Err(CliError::new(
            Category::Transport,
            format!("all {failed} oracle requests failed; last error: {reason}"),
        ));
    }
    Ok(())
}

fn print_trace(generation: &Generation, backend: &dyn DecoderBackend) {
    let name = |id: u32| match backend.detokenize(&[id]) {
        Ok(s) if !s.is_empty() => s,
        _ => format!("#{id}"),
    };
    for step in &generation.trace {
        let top: Vec<String> = step
            .top
            .iter()
            .map(|&(id, logit)| format!("{}={logit:.4}", name(id)))
            .collect();
        eprintln!(
            "step {:>3}  pick {:<8} top5 {}",
            step.step,
            name(step.token),
            top.join(" ")
        );
    }
}

pub fn run(frames: &Path, question: &str, trace: bool, eff: &Effective) -> Result<(), CliError> {
    let choice = build_oracle(required(&eff.oracle, "oracle")?, eff)?;
    let backend = build_backend(required(&eff.backend, "backend")?, eff)?;
    let shots = sample_frames(frames, choice.tags.clone(), eff)?;
    let out = answer_cos(
        choice.oracle.as_ref(),
        backend.as_ref(),
        &shots,
        question,
        question,
        &eff.pipeline,
    )?;
    check_reachable(&out.grounding)?;
    if trace {
        eprintln!(
            "code {}  relevant {}/{}  alpha {}",
            out.grounding.code,
            out.grounding.code.relevant_count(),
            out.grounding.code.n(),
            out.alpha()
        );
        print_trace(&out.generation, backend.as_ref());
    }
    println!("{}", out.generation.text);
    Ok(())
}

pub fn run_baseline(
    frames: &Path,
    question: &str,
    trace: bool,
    eff: &Effective,
) -> Result<(), CliError> {
    let tags = match &eff.oracle {
        Some(spec) => build_oracle(spec, eff)?.tags,
        None => None,
    };
    let backend = build_backend(required(&eff.backend, "backend")?, eff)?;
    let shots = sample_frames(frames, tags, eff)?;
    let generation = answer_baseline(backend.as_ref(), &shots, question, &eff.pipeline)?;
    if trace {
        print_trace(&generation, backend.as_ref());
    }
    println!("{}", generation.text);
    Ok(())
}

pub fn ground_cmd(frames: &Path, question: &str, eff: &Effective) -> Result<(), CliError> {
    let choice = build_oracle(required(&eff.oracle, "oracle")?, eff)?;
    let shots = sample_frames(frames, choice.tags.clone(), eff)?;
    let grounding = ground(
        choice.oracle.as_ref(),
        &shots,
        question,
        &eff.pipeline.grounding_options(),
    )?;
    check_reachable(&grounding)?;
    println!("{}", grounding.code);
    println!(
        "{}",
        serde_json::to_string_pretty(&grounding).expect("grounding reports always serialize")
    );
    Ok(())
}

fn slots(map: &[SourceSlot]) -> String {
    map.iter()
        .map(|s| match s {
            SourceSlot::Original(i) => i.to_string(),
            SourceSlot::Black => "B".to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn subshots(code: &str, alpha_override: Option<f64>) -> Result<(), CliError> {
    let code: RelevanceCode = code.parse()?;
    let mut pair = SubShotPair::from_code(code);
    if let Some(alpha) = alpha_override {
        pair = pair.with_alpha(alpha)?;
    }
    println!("code:     {}", pair.code);
    println!("positive: {}", slots(&pair.positive));
    println!("negative: {}", slots(&pair.negative));
    println!("alpha:    {}", pair.alpha);
    Ok(())
}

pub struct BenchArgs<'a> {
    pub manifest: &'a Path,
    pub frames_root: Option<&'a Path>,
    pub mode: BenchMode,
    pub out: &'a Path,
}

pub fn bench(args: &BenchArgs<'_>, eff: &Effective) -> Result<(), CliError> {
    let items = load_manifest(args.manifest)?;
    let choice = match (&eff.oracle, args.mode) {
        (Some(spec), _) => build_oracle(spec, eff)?,
        (None, BenchMode::Baseline) => OracleChoice {
            oracle: Box::new(MockOracle::new(Vec::<String>::new())),
            tags: None,
        },
        (None, BenchMode::Cos) => return Err(CliError::usage("cos mode needs --oracle")),
    };
    let backend = build_backend(required(&eff.backend, "backend")?, eff)?;
    let frames_root = match args.frames_root {
        Some(root) => root.to_path_buf(),
        None => args
            .manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
    };
    let setup = BenchSetup {
        oracle: choice.oracle.as_ref(),
        backend: backend.as_ref(),
        config: &eff.pipeline,
        frames_root,
        tags: choice.tags,
    };
    let report = run_benchmark(&items, &setup, args.mode)?;
    fs::write(args.out, report.to_json() + "\n")
        .map_err(|e| CliError::io(format!("{}: {e}", args.out.display())))?;
    print!("{}", report.table());
    Ok(())
}

pub fn synth(spec: &SyntheticSpec, out: &Path, seed: u64) -> Result<(), CliError> {
    let suite = generate_synthetic_suite(spec, out, seed)?;
    println!("manifest     {}", suite.manifest.display());
    println!("mock oracle  {}", suite.mock_config.display());
    println!("toy backend  {}", suite.toy_config.display());
    println!("items        {}", suite.items.len());
    Ok(())
}
