//! Generated benchmark suites with known relevance structure.
//!
//! Every item is a directory of solid-colour frames. The meaning of each
//! frame lives in the tag lines of the accompanying mock oracle file: a few
//! frames carry the evidence tag of the gold option, a configurable number
//! carry the distractor tag, and the rest are background.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BenchmarkItem, DurationClass, HarnessError};
use crate::oracles::ToyBackendConfig;

const BACKGROUND: Rgb<u8> = Rgb([96, 96, 96]);
const EVIDENCE: Rgb<u8> = Rgb([220, 70, 60]);
const DISTRACTOR: Rgb<u8> = Rgb([60, 80, 220]);

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub items: usize,
    /// Frames per item.
    pub shots: usize,
    /// Frames carrying the gold option's evidence tag.
    pub relevant: usize,
    pub distractors: usize,
    pub options: usize,
    /// Side length of the written frames, in pixels.
    pub raster: u32,
    /// Noise level written into the mock oracle file.
    pub flip_rate: f64,
    pub toy: ToyBackendConfig,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            items: 200,
            shots: 64,
            relevant: 4,
            distractors: 40,
            options: 4,
            raster: 8,
            flip_rate: 0.0,
            toy: ToyBackendConfig::default(),
        }
    }
}

/// Paths of a generated suite.
#[derive(Debug, Clone)]
pub struct SyntheticSuite {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub mock_config: PathBuf,
    pub toy_config: PathBuf,
    pub items: Vec<BenchmarkItem>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes a suite under `root` (created if needed). Deterministic per seed.
pub fn generate_synthetic_suite(
    spec: &SyntheticSpec,
    root: &Path,
    seed: u64,
) -> Result<SyntheticSuite, HarnessError> {
    if spec.shots == 0 || spec.relevant + spec.distractors > spec.shots {
        return Err(HarnessError::Argument(format!(
            "{} relevant plus {} distractor frames do not fit in {} shots",
            spec.relevant, spec.distractors, spec.shots
        )));
    }
    if spec.options < 2 || spec.options > spec.toy.options {
        return Err(HarnessError::Argument(format!(
            "{} options requested but the toy backend scores {}",
            spec.options, spec.toy.options
        )));
    }
    if spec.raster == 0 || !(0.0..=1.0).contains(&spec.flip_rate) {
        return Err(HarnessError::Argument(
            "raster must be positive and flip_rate in [0, 1]".into(),
        ));
    }
    fs::create_dir_all(root).map_err(io_err(root))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keywords: Vec<String> = (0..spec.options)
        .map(|o| spec.toy.evidence_tag(o))
        .collect();
    let mut mock = String::new();
    let _ = writeln!(mock, "keywords = {}", keywords.join(", "));
    let _ = writeln!(mock, "flip_rate = {}", spec.flip_rate);
    let _ = writeln!(mock, "seed = {seed}");

    let mut items = Vec::with_capacity(spec.items);
    let mut manifest = String::new();
    for item_no in 0..spec.items {
        let id = format!("item_{item_no:04}");
        let dir = root.join(&id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;

        let gold = rng.random_range(0..spec.options);
        let picked =
            index::sample(&mut rng, spec.shots, spec.relevant + spec.distractors).into_vec();
        let evidence: BTreeSet<usize> = picked[..spec.relevant].iter().copied().collect();
        let distractors: BTreeSet<usize> = picked[spec.relevant..].iter().copied().collect();
        let evidence_tag = spec.toy.evidence_tag(gold);

        for shot in 0..spec.shots {
            let name = format!("frame_{shot:06}.png");
            let (colour, tag) = if evidence.contains(&shot) {
                (EVIDENCE, Some(evidence_tag.as_str()))
            } else if distractors.contains(&shot) {
                (DISTRACTOR, Some(spec.toy.distractor_tag.as_str()))
            } else {
                (BACKGROUND, None)
            };
            let path = dir.join(&name);
            RgbImage::from_pixel(spec.raster, spec.raster, colour)
                .save(&path)
                .map_err(|e| HarnessError::Io {
                    path: path.clone(),
                    source: std::io::Error::other(e.to_string()),
                })?;
            if let Some(tag) = tag {
                let _ = writeln!(mock, "{id}/{name} = {tag}");
            }
        }

        let item = BenchmarkItem {
            id: id.clone(),
            frames_path: PathBuf::from(&id),
            question: format!("Which object is shown in clip {item_no}?"),
            options: (0..spec.options)
                .map(|o| format!("object {}", ToyBackendConfig::option_letter(o)))
                .collect(),
            answer: ToyBackendConfig::option_letter(gold).to_string(),
            duration_class: Some(DurationClass::ALL[item_no % 3]),
        };
        manifest.push_str(&item.to_json_line());
        manifest.push('\n');
        items.push(item);
    }

    let manifest_path = root.join("manifest.jsonl");
    fs::write(&manifest_path, manifest).map_err(io_err(&manifest_path))?;
    let mock_path = root.join("mock_oracle.txt");
    fs::write(&mock_path, mock).map_err(io_err(&mock_path))?;
    let toy_path = root.join("toy_backend.txt");
    fs::write(&toy_path, spec.toy.to_kv_string()).map_err(io_err(&toy_path))?;

    Ok(SyntheticSuite {
        root: root.to_path_buf(),
        manifest: manifest_path,
        mock_config: mock_path,
        toy_config: toy_path,
        items,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::load_manifest;
    use crate::oracles::MockOracleConfig;

    fn small() -> SyntheticSpec {
        SyntheticSpec {
            items: 3,
            shots: 10,
            relevant: 2,
            distractors: 5,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn writes_consistent_suite() {
        let dir = tempfile::tempdir().unwrap();
        let suite = generate_synthetic_suite(&small(), dir.path(), 4).unwrap();
        assert_eq!(load_manifest(&suite.manifest).unwrap(), suite.items);
        let mock = MockOracleConfig::load(&suite.mock_config).unwrap();
        assert_eq!(mock.oracle.keywords.len(), 4);
        // 2 evidence + 5 distractor lines per item
        assert_eq!(mock.tags.len(), 3 * 7);
        assert!(ToyBackendConfig::load(&suite.toy_config).is_ok());
        for item in &suite.items {
            let frames = fs::read_dir(dir.path().join(&item.frames_path))
                .unwrap()
                .count();
            assert_eq!(frames, 10);
        }
    }

    #[test]
    fn same_seed_same_suite() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic_suite(&small(), a.path(), 9).unwrap();
        generate_synthetic_suite(&small(), b.path(), 9).unwrap();
        for file in ["manifest.jsonl", "mock_oracle.txt", "toy_backend.txt"] {
            assert_eq!(
                fs::read_to_string(a.path().join(file)).unwrap(),
                fs::read_to_string(b.path().join(file)).unwrap()
            );
        }
    }

    #[test]
    fn rejects_overfull_spec() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            relevant: 8,
            distractors: 8,
            shots: 10,
            ..small()
        };
        assert!(generate_synthetic_suite(&spec, dir.path(), 0).is_err());
    }
}
