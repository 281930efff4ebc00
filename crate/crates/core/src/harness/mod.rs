//! Multiple-choice benchmark evaluation.
//!
//! Items come from a JSON-lines manifest; each item is answered either by
//! the plain decoder or by the full chain-of-shot pipeline, the answer letter
//! is pulled out of the generated text and scored against the gold letter.

mod report;
mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::decode::SelectionMode;
use crate::media::{FrameDirectory, TagTable};
use crate::oracles::{DecoderBackend, RelevanceOracle};
use crate::pipeline::{answer_baseline, answer_cos, PipelineConfig, PipelineError};

pub use report::{ClassSummary, ItemRecord, RunReport, Summary};
pub use synthetic::{generate_synthetic_suite, SyntheticSpec, SyntheticSuite};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed JSON: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: field `{field}`: {reason}")]
    Validation {
        path: PathBuf,
        line: usize,
        field: String,
        reason: String,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DurationClass {
    Short,
    Medium,
    Long,
}

impl DurationClass {
    pub const ALL: [Self; 3] = [Self::Short, Self::Medium, Self::Long];

    pub fn label(self) -> &'static str {
        match self {
            Self::Short => "short",
            Self::Medium => "medium",
            Self::Long => "long",
        }
    }
}

/// One multiple-choice question about one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkItem {
    pub id: String,
    pub frames_path: PathBuf,
    pub question: String,
    pub options: Vec<String>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_class: Option<DurationClass>,
}

impl BenchmarkItem {
    pub fn letters(&self) -> impl Iterator<Item = char> {
        (0..self.options.len()).map(|i| (b'A' + i as u8) as char)
    }

    /// Question text handed to the decoder: the question followed by one
    /// `X. option` line per option.
    pub fn decoder_prompt(&self) -> String {
        let mut out = self.question.clone();
        for (letter, text) in self.letters().zip(&self.options) {
            out.push_str(&format!("\n{letter}. {text}"));
        }
        out
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("benchmark items always serialize")
    }
}

#[derive(Debug, Deserialize)]
struct RawItem {
    id: Option<String>,
    frames_path: Option<PathBuf>,
    question: Option<String>,
    options: Option<Vec<String>>,
    answer: Option<String>,
    #[serde(default)]
    duration_class: Option<DurationClass>,
}

/// Reads a JSON-lines manifest. Blank lines are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<BenchmarkItem>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(path, &text)
}

pub fn parse_manifest(path: &Path, text: &str) -> Result<Vec<BenchmarkItem>, HarnessError> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawItem = serde_json::from_str(line).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        let invalid = |field: &str, reason: &str| HarnessError::Validation {
            path: path.to_path_buf(),
            line: line_no,
            field: field.to_string(),
            reason: reason.to_string(),
        };
        let missing = |field: &str| invalid(field, "missing");
        let item = BenchmarkItem {
            id: raw.id.ok_or_else(|| missing("id"))?,
            frames_path: raw.frames_path.ok_or_else(|| missing("frames_path"))?,
            question: raw.question.ok_or_else(|| missing("question"))?,
            options: raw.options.ok_or_else(|| missing("options"))?,
            answer: raw.answer.ok_or_else(|| missing("answer"))?,
            duration_class: raw.duration_class,
        };
        if item.options.len() < 2 {
            return Err(invalid("options", "at least two options are required"));
        }
        if item.options.len() > 26 {
            return Err(invalid("options", "at most 26 options are supported"));
        }
        let valid_answer =
            item.answer.len() == 1 && item.letters().any(|l| item.answer.starts_with(l));
        if !valid_answer {
            return Err(invalid("answer", "must be one of the option letters"));
        }
        if !seen.insert(item.id.clone()) {
            return Err(invalid("id", &format!("duplicate id {:?}", item.id)));
        }
        items.push(item);
    }
    Ok(items)
}

/// First standalone option letter in `output`, ignoring case.
///
/// Words are maximal runs of alphanumeric characters; a word counts when it
/// is a single letter among the first `option_count` letters.
pub fn extract_answer(output: &str, option_count: usize) -> Option<char> {
    output
        .split(|c: char| !c.is_alphanumeric())
        .filter_map(|word| {
            let mut chars = word.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) if c.is_ascii_alphabetic() => Some(c.to_ascii_uppercase()),
                _ => None,
            }
        })
        .find(|&c| ((c as u8 - b'A') as usize) < option_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchMode {
    Baseline,
    Cos,
}

impl BenchMode {
    pub fn label(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Cos => "cos",
        }
    }
}

/// The models and settings a benchmark run uses.
pub struct BenchSetup<'a> {
    pub oracle: &'a dyn RelevanceOracle,
    pub backend: &'a dyn DecoderBackend,
    pub config: &'a PipelineConfig,
    /// Relative `frames_path` values are resolved against this directory.
    pub frames_root: PathBuf,
    /// Frame labels for mock components.
    pub tags: Option<Arc<TagTable>>,
}

/// Mixes the run seed with a label, so concurrent items get independent
/// but reproducible random streams.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let digest = Sha256::new()
        .chain_update(seed.to_le_bytes())
        .chain_update(label.as_bytes())
        .finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

fn run_item(item: &BenchmarkItem, setup: &BenchSetup<'_>, mode: BenchMode) -> ItemRecord {
    let started = Instant::now();
    let mut record = ItemRecord::new(item);

    let mut config = setup.config.clone();
    if let SelectionMode::Sample { temperature, seed } = config.generation.mode {
        config.generation.mode = SelectionMode::Sample {
            temperature,
            seed: derive_seed(seed, &item.id),
        };
    }

    let outcome = (|| -> Result<String, HarnessError> {
        let path = setup.frames_root.join(&item.frames_path);
        let mut video = FrameDirectory::open(&path).map_err(PipelineError::from)?;
        if let Some(tags) = &setup.tags {
            video = video.with_tags(tags.clone());
        }
        let shots = config.sample(&video)?;
        match mode {
            BenchMode::Baseline => {
                Ok(answer_baseline(setup.backend, &shots, &item.decoder_prompt(), &config)?.text)
            }
            BenchMode::Cos => {
                let out = answer_cos(
                    setup.oracle,
                    setup.backend,
                    &shots,
                    &item.question,
                    &item.decoder_prompt(),
                    &config,
                )?;
                record.alpha = Some(out.alpha());
                record.relevant_count = Some(out.grounding.code.relevant_count());
                record.oracle_calls = out.grounding.oracle_calls();
                record.oracle_failures = out.grounding.failures().count();
                Ok(out.generation.text)
            }
        }
    })();

    match outcome {
        Ok(text) => {
            record.predicted = extract_answer(&text, item.options.len()).map(String::from);
            record.correct = record.predicted.as_deref() == Some(item.answer.as_str());
            record.raw_output = text;
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    record.wall_time_ms = started.elapsed().as_secs_f64() * 1e3;
    record
}

/// Runs every item and aggregates the accuracy report.
///
/// Failures of single items are recorded on the item (and scored as wrong);
/// they never stop the run.
pub fn run_benchmark(
    items: &[BenchmarkItem],
    setup: &BenchSetup<'_>,
    mode: BenchMode,
) -> Result<RunReport, HarnessError> {
    setup.config.validate()?;
    let run_all = || -> Vec<ItemRecord> {
        items
            .par_iter()
            .map(|item| run_item(item, setup, mode))
            .collect()
    };
    let records = if setup.config.item_parallelism == 0 {
        run_all()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(setup.config.item_parallelism)
            .build()
            .map_err(|e| HarnessError::Argument(format!("cannot build worker pool: {e}")))?
            .install(run_all)
    };
    Ok(RunReport::new(mode, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"id":"vmme-001","frames_path":"videos/001","question":"What is the man holding?","options":["A cup","A phone","A book","A pen"],"answer":"C","duration_class":"long"}"#;

    fn parse(text: &str) -> Result<Vec<BenchmarkItem>, HarnessError> {
        parse_manifest(Path::new("m.jsonl"), text)
    }

    #[test]
    fn empty_manifest() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("\n  \n").unwrap().is_empty());
    }

    #[test]
    fn round_trip() {
        let items = parse(LINE).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].duration_class, Some(DurationClass::Long));
        assert_eq!(items[0].to_json_line(), LINE);
    }

    #[test]
    fn missing_answer_is_named() {
        let line = r#"{"id":"x","frames_path":"f","question":"q","options":["a","b"]}"#;
        match parse(line).unwrap_err() {
            HarnessError::Validation { field, line, .. } => {
                assert_eq!(field, "answer");
                assert_eq!(line, 1);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = format!("{LINE}\n{{not json\n");
        match parse(&text).unwrap_err() {
            HarnessError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_duplicates_and_bad_answers() {
        let dup = format!("{LINE}\n{LINE}\n");
        assert!(
            matches!(parse(&dup), Err(HarnessError::Validation { ref field, line: 2, .. }) if field == "id")
        );
        let bad = LINE.replace(r#""answer":"C""#, r#""answer":"E""#);
        assert!(
            matches!(parse(&bad), Err(HarnessError::Validation { ref field, .. }) if field == "answer")
        );
        let one = r#"{"id":"x","frames_path":"f","question":"q","options":["a"],"answer":"A"}"#;
        assert!(
            matches!(parse(one), Err(HarnessError::Validation { ref field, .. }) if field == "options")
        );
    }

    #[test]
    fn answer_extraction() {
        assert_eq!(extract_answer("The answer is B.", 4), Some('B'));
        assert_eq!(extract_answer("b", 4), Some('B'));
        assert_eq!(extract_answer("Both brands", 4), None);
        assert_eq!(extract_answer("(C) a knife", 4), Some('C'));
        assert_eq!(extract_answer("E", 4), None);
        assert_eq!(extract_answer("", 4), None);
        assert_eq!(extract_answer("Option 2: D", 4), Some('D'));
    }

    #[test]
    fn decoder_prompt_lists_options() {
        let item = &parse(LINE).unwrap()[0];
        assert_eq!(
            item.decoder_prompt(),
            "What is the man holding?\nA. A cup\nB. A phone\nC. A book\nD. A pen"
        );
    }

    #[test]
    fn seeds_differ_by_label() {
        assert_eq!(derive_seed(1, "a"), derive_seed(1, "a"));
        assert_ne!(derive_seed(1, "a"), derive_seed(1, "b"));
        assert_ne!(derive_seed(1, "a"), derive_seed(2, "a"));
    }
}
