use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{OracleError, RelevanceOracle};
use crate::kv::{split_list, KvError, KvFile};
use crate::media::{MosaicImage, TagTable};

/// Tag-matching stand-in for the vision-language relevance oracle.
///
/// A mosaic is relevant when any member frame carries a tag from
/// `keywords`. With a non-zero `flip_rate` each verdict is inverted with that
/// probability. The flip draw is keyed on the seed, the prompt and the
/// mosaic's member identities, so it does not depend on call order.
#[derive(Debug, Clone, PartialEq)]
pub struct MockOracle {
    pub keywords: BTreeSet<String>,
    pub flip_rate: f64,
    pub seed: u64,
}

impl MockOracle {
    pub fn new(keywords: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            keywords: keywords.into_iter().map(Into::into).collect(),
            flip_rate: 0.0,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, flip_rate: f64, seed: u64) -> Self {
        assert!(
            (0.0..=1.0).contains(&flip_rate),
            "flip_rate must lie in [0, 1]"
        );
        self.flip_rate = flip_rate;
        self.seed = seed;
        self
    }

    /// The noiseless verdict.
    pub fn matches(&self, mosaic: &MosaicImage) -> bool {
        mosaic
            .member_frames()
            .iter()
            .any(|f| !f.tags.is_disjoint(&self.keywords))
    }

    fn flips(&self, mosaic: &MosaicImage, prompt: &str) -> bool {
        if self.flip_rate <= 0.0 {
            return false;
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(prompt.as_bytes());
        for frame in mosaic.member_frames() {
            hasher.update(frame.video_id.as_bytes());
            hasher.update([0]);
            hasher.update((frame.index as u64).to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest[..32]);
        ChaCha8Rng::from_seed(seed).random_bool(self.flip_rate)
    }
}

pub fn mock_classify(oracle: &MockOracle, mosaic: &MosaicImage, prompt: &str) -> String {
    let verdict = oracle.matches(mosaic) ^ oracle.flips(mosaic, prompt);
    if verdict { "yes" } else { "no" }.to_string()
}

impl RelevanceOracle for MockOracle {
    fn classify(&self, mosaic: &MosaicImage, prompt: &str) -> Result<String, OracleError> {
        Ok(mock_classify(self, mosaic, prompt))
    }
}

/// Contents of a mock oracle file: settings plus the frame tag manifest.
///
/// ```text
/// keywords = dragon, castle
/// flip_rate = 0.0
/// seed = 7
/// frame_000003.png = dragon
/// clip_01/frame_000010.png = castle, knight
/// ```
///
/// Any key other than the three settings names a frame file, relative to
/// the directory holding the config or as a bare file name.
#[derive(Debug, Clone)]
pub struct MockOracleConfig {
    pub oracle: MockOracle,
    pub tags: Arc<TagTable>,
}

impl MockOracleConfig {
    pub fn load(path: &Path) -> Result<Self, KvError> {
        let file = KvFile::read(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_kv(&file, base)
    }

    pub fn from_kv(
        file: &KvFile,
        base_dir: impl Into<std::path::PathBuf>,
    ) -> Result<Self, KvError> {
        let mut oracle = MockOracle::new(Vec::<String>::new());
        let mut tags = TagTable::new(base_dir);
        for entry in &file.entries {
            match entry.key.as_str() {
                "keywords" => {
                    oracle.keywords = split_list(&entry.value).map(str::to_string).collect();
                }
                "flip_rate" => {
                    let rate: f64 = file.value(entry)?;
                    if !(0.0..=1.0).contains(&rate) {
                        return Err(file.bad_value(entry, "flip_rate must lie in [0, 1]"));
                    }
                    oracle.flip_rate = rate;
                }
                "seed" => oracle.seed = file.value(entry)?,
                path => tags.insert(path, split_list(&entry.value).map(str::to_string).collect()),
            }
        }
        Ok(Self {
            oracle,
            tags: Arc::new(tags),
        })
    }
}
