use std::collections::BTreeSet;
use std::path::Path;

use super::{DecoderBackend, OracleError, TokenId};
use crate::decode::TokenDistribution;
use crate::kv::{split_list, KvError, KvFile};
use crate::media::ShotSequence;

const EOS: &str = "<eos>";
const UNK: &str = "<unk>";

/// Parameters of the toy scoring rule.
///
/// For option letter `L`, with `e` frames tagged `{evidence_prefix}L` and `d`
/// frames tagged `distractor_tag` in view:
///
/// ```text
/// logit(L) = base[L] + bonus * e - penalty * d   (when e > 0)
/// logit(L) = base[L]                               (when e = 0)
/// ```
///
/// Distractors only weaken options that have visible support. All other
/// tokens sit at `filler_logit`. Tokens listed in `canned` are emitted first
/// (each forced with `forced_logit`), then one option letter, then `<eos>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBackendConfig {
    pub options: usize,
    pub base: Vec<f64>,
    pub bonus: f64,
    pub penalty: f64,
    pub filler_logit: f64,
    pub forced_logit: f64,
    pub canned: Vec<String>,
    pub evidence_prefix: String,
    pub distractor_tag: String,
}

impl Default for ToyBackendConfig {
    fn default() -> Self {
        Self {
            options: 4,
            base: vec![0.0; 4],
            bonus: 1.0,
            penalty: 0.15,
            filler_logit: -1000.0,
            forced_logit: 1000.0,
            canned: Vec::new(),
            evidence_prefix: "evidence_".into(),
            distractor_tag: "distractor".into(),
        }
    }
}

impl ToyBackendConfig {
    pub fn load(path: &Path) -> Result<Self, KvError> {
        Self::from_kv(&KvFile::read(path)?)
    }

    pub fn from_kv(file: &KvFile) -> Result<Self, KvError> {
        let mut cfg = Self::default();
        let mut base_given = false;
        for entry in &file.entries {
            match entry.key.as_str() {
                "options" => {
                    cfg.options = file.value(entry)?;
                    if !(2..=26).contains(&cfg.options) {
                        return Err(file.bad_value(entry, "options must be between 2 and 26"));
                    }
                }
                "base" => {
                    cfg.base = split_list(&entry.value)
                        .map(|v| {
                            v.parse::<f64>()
                                .map_err(|e| file.bad_value(entry, e.to_string()))
                        })
                        .collect::<Result<_, _>>()?;
                    base_given = true;
                }
                "bonus" => cfg.bonus = file.value(entry)?,
                "penalty" => cfg.penalty = file.value(entry)?,
                "filler_logit" => cfg.filler_logit = file.value(entry)?,
                "forced_logit" => cfg.forced_logit = file.value(entry)?,
                "canned" => {
                    cfg.canned = entry.value.split_whitespace().map(str::to_string).collect()
                }
                "evidence_prefix" => cfg.evidence_prefix = entry.value.clone(),
                "distractor_tag" => cfg.distractor_tag = entry.value.clone(),
                _ => return Err(file.unknown(entry)),
            }
        }
        if !base_given {
            cfg.base = vec![0.0; cfg.options];
        }
        if cfg.base.len() != cfg.options {
            return Err(KvError::Value {
                origin: file.origin.clone(),
                line: 0,
                key: "base".into(),
                reason: format!("{} values for {} options", cfg.base.len(), cfg.options),
            });
        }
        Ok(cfg)
    }

    /// Serializes back to the key-value format read by [`Self::load`].
    pub fn to_kv_string(&self) -> String {
        let base: Vec<String> = self.base.iter().map(|b| b.to_string()).collect();
        let mut out = format!(
            "options = {}\nbase = {}\nbonus = {}\npenalty = {}\nfiller_logit = {}\nforced_logit = {}\nevidence_prefix = {}\ndistractor_tag = {}\n",
            self.options,
            base.join(", "),
            self.bonus,
            self.penalty,
            self.filler_logit,
            self.forced_logit,
            self.evidence_prefix,
            self.distractor_tag,
        );
        if !self.canned.is_empty() {
            out.push_str(&format!("canned = {}\n", self.canned.join(" ")));
        }
        out
    }

    pub fn option_letter(i: usize) -> char {
        (b'A' + i as u8) as char
    }

    pub fn evidence_tag(&self, option: usize) -> String {
        format!("{}{}", self.evidence_prefix, Self::option_letter(option))
    }
}

/// A tiny deterministic decoder whose logits depend only on frame tags and
/// the prefix length.
#[derive(Debug, Clone)]
pub struct ToyBackend {
    config: ToyBackendConfig,
    vocab: Vec<String>,
    canned_ids: Vec<TokenId>,
    option_ids: Vec<TokenId>,
}

impl ToyBackend {
    pub fn new(config: ToyBackendConfig) -> Result<Self, OracleError> {
        if config.base.len() != config.options || !(2..=26).contains(&config.options) {
            return Err(OracleError::Backend(format!(
                "toy backend needs 2..=26 options with one base each, got {} options and {} bases",
                config.options,
                config.base.len()
            )));
        }
        let mut vocab = vec![EOS.to_string(), UNK.to_string()];
        let mut canned_ids = Vec::new();
        for word in &config.canned {
            let id = match vocab.iter().position(|v| v == word) {
                Some(i) => i,
                None => {
                    vocab.push(word.clone());
                    vocab.len() - 1
                }
            };
            canned_ids.push(id as TokenId);
        }
        let mut option_ids = Vec::new();
        for i in 0..config.options {
            let letter = ToyBackendConfig::option_letter(i).to_string();
            if vocab.contains(&letter) {
                return Err(OracleError::Backend(format!(
                    "canned word {letter:?} collides with an option letter"
                )));
            }
            vocab.push(letter);
            option_ids.push((vocab.len() - 1) as TokenId);
        }
        if vocab.len() > 64 {
            return Err(OracleError::Backend(format!(
                "toy vocabulary has {} tokens, limit is 64",
                vocab.len()
            )));
        }
        Ok(Self {
            config,
            vocab,
            canned_ids,
            option_ids,
        })
    }

    pub fn config(&self) -> &ToyBackendConfig {
        &self.config
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn option_token(&self, option: usize) -> TokenId {
        self.option_ids[option]
    }

    /// The option scores for a set of frames, before placing them into the
    /// full vocabulary.
    pub fn option_scores(&self, frames: &ShotSequence) -> Vec<f64> {
        let cfg = &self.config;
        let distractors = frames
            .shots()
            .iter()
            .filter(|f| f.tags.contains(&cfg.distractor_tag))
            .count() as f64;
        (0..cfg.options)
            .map(|o| {
                let tag = cfg.evidence_tag(o);
                let evidence = frames
                    .shots()
                    .iter()
                    .filter(|f| f.tags.contains(&tag))
                    .count();
                if evidence > 0 {
                    cfg.base[o] + cfg.bonus * evidence as f64 - cfg.penalty * distractors
                } else {
                    cfg.base[o]
                }
            })
            .collect()
    }
}

pub fn toy_step(
    backend: &ToyBackend,
    frames: &ShotSequence,
    prefix: &[TokenId],
) -> TokenDistribution {
    let cfg = &backend.config;
    let mut logits = vec![cfg.filler_logit; backend.vocab.len()];
    let t = prefix.len();
    let canned = backend.canned_ids.len();
    if t < canned {
        logits[backend.canned_ids[t] as usize] = cfg.forced_logit;
    } else if t == canned {
        for (o, score) in backend.option_scores(frames).into_iter().enumerate() {
            logits[backend.option_ids[o] as usize] = score;
        }
    } else {
        logits[0] = cfg.forced_logit;
    }
    TokenDistribution::new(logits).expect("toy logits are finite")
}

impl DecoderBackend for ToyBackend {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, OracleError> {
        Ok(text
            .split_whitespace()
            .map(|w| self.vocab.iter().position(|v| v == w).unwrap_or(1) as TokenId)
            .collect())
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String, OracleError> {
        let words = ids
            .iter()
            .filter(|&&id| id != 0)
            .map(|&id| {
                self.vocab
                    .get(id as usize)
                    .map(String::as_str)
                    .ok_or_else(|| {
                        OracleError::Backend(format!("token {id} outside the vocabulary"))
                    })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(words.join(" "))
    }

    fn step(
        &self,
        frames: &ShotSequence,
        _question: &str,
        prefix: &[TokenId],
    ) -> Result<TokenDistribution, OracleError> {
        if prefix.iter().any(|&id| id as usize >= self.vocab.len()) {
            return Err(OracleError::Backend(
                "prefix holds unknown token ids".into(),
            ));
        }
        Ok(toy_step(self, frames, prefix))
    }

    fn stop_token_ids(&self) -> BTreeSet<TokenId> {
        BTreeSet::from([0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{sample_shots, DecodedFrame, InMemoryVideo};
    use image::RgbImage;

    fn frames(tags: &[&[&str]]) -> ShotSequence {
        let video = InMemoryVideo {
            id: "toy".into(),
            frames: tags
                .iter()
                .map(|t| DecodedFrame {
                    pixels: RgbImage::new(1, 1),
                    tags: t.iter().map(|s| s.to_string()).collect(),
                })
                .collect(),
            fps: None,
        };
        sample_shots(&video, tags.len(), None).unwrap()
    }

    fn repeated(
        tag: &'static [&'static str],
        count: usize,
        rest: &mut Vec<&'static [&'static str]>,
    ) {
        rest.extend(std::iter::repeat_n(tag, count));
    }

    #[test]
    fn evidence_wins_without_distractors() {
        let toy = ToyBackend::new(ToyBackendConfig::default()).unwrap();
        let mut tags = Vec::new();
        repeated(&["evidence_A"], 3, &mut tags);
        repeated(&[], 5, &mut tags);
        let logits = toy_step(&toy, &frames(&tags), &[]);
        assert_eq!(logits.argmax(), toy.option_token(0));
    }

    #[test]
    fn distractors_pull_argmax_off_supported_option() {
        // bonus 1, penalty 2: A scores 0 + 1*1 - 2*10 = -19, B..D stay at 0
        let cfg = ToyBackendConfig {
            penalty: 2.0,
            ..ToyBackendConfig::default()
        };
        let toy = ToyBackend::new(cfg).unwrap();
        let mut tags = Vec::new();
        repeated(&["evidence_A"], 1, &mut tags);
        repeated(&["distractor"], 10, &mut tags);
        let seq = frames(&tags);
        assert_eq!(toy.option_scores(&seq), vec![-19.0, 0.0, 0.0, 0.0]);
        assert_eq!(toy_step(&toy, &seq, &[]).argmax(), toy.option_token(1));
    }

    #[test]
    fn untagged_frames_contribute_nothing() {
        let toy = ToyBackend::new(ToyBackendConfig::default()).unwrap();
        let black = crate::media::make_black_frame(1, 1).unwrap();
        let seq = ShotSequence::new("b", vec![black; 5]).unwrap();
        assert_eq!(toy.option_scores(&seq), vec![0.0; 4]);
    }

    #[test]
    fn stops_after_answer_and_is_deterministic() {
        let toy = ToyBackend::new(ToyBackendConfig::default()).unwrap();
        let seq = frames(&[&["evidence_C"]]);
        let after = toy_step(&toy, &seq, &[toy.option_token(2)]);
        assert_eq!(after.argmax(), 0);
        let a = toy.step(&seq, "q", &[]).unwrap();
        let b = toy.step(&seq, "q", &[]).unwrap();
        assert_eq!(
            a.logits().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.logits().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn canned_words_come_first() {
        let cfg = ToyBackendConfig {
            canned: vec!["The".into(), "answer".into(), "is".into()],
            ..ToyBackendConfig::default()
        };
        let toy = ToyBackend::new(cfg).unwrap();
        let seq = frames(&[&["evidence_B"]]);
        let mut prefix = Vec::new();
        for _ in 0..3 {
            prefix.push(toy_step(&toy, &seq, &prefix).argmax());
        }
        assert_eq!(toy.detokenize(&prefix).unwrap(), "The answer is");
        assert_eq!(toy_step(&toy, &seq, &prefix).argmax(), toy.option_token(1));
        assert_eq!(toy.tokenize("The answer is B").unwrap(), {
            let mut p = prefix.clone();
            p.push(toy.option_token(1));
            p
        });
    }

    #[test]
    fn config_round_trip() {
        let cfg = ToyBackendConfig {
            options: 3,
            base: vec![0.5, 0.0, -0.25],
            canned: vec!["Answer:".into()],
            ..ToyBackendConfig::default()
        };
        let back =
            ToyBackendConfig::from_kv(&KvFile::parse("t", &cfg.to_kv_string()).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let file = KvFile::parse("t", "bogus = 1\n").unwrap();
        assert!(ToyBackendConfig::from_kv(&file).is_err());
    }
}
