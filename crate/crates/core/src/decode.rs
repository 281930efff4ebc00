//! Token selection, the plain decoder and the three-context co-reasoning
//! decoder.
//!
//! Co-reasoning runs the backend on the sampled shots, the positive
//! sub-shots and the negative sub-shots with one shared prefix. At every step
//! the three logit vectors are merged as
//!
//! ```text
//! combined = l_x + alpha * (l_pos - l_neg)
//! ```
//!
//! and the next token is chosen from `softmax(combined)`. Softmax of that sum
//! equals `p_x * (p_pos / p_neg)^alpha` after renormalization, so the weight
//! tilts the plain distribution toward what the relevant shots support and
//! away from what the irrelevant ones support. Grouping the contrast as
//! `alpha * (l_pos - l_neg)` makes identical positive and negative logits
//! cancel exactly.

use std::collections::BTreeSet;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::ShotSequence;
use crate::oracles::{DecoderBackend, OracleError, TokenId};
use crate::subshots::MaterializedPair;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("backend failed in the {context} context at step {step}: {source}")]
    Backend {
        context: ContextKind,
        step: usize,
        #[source]
        source: OracleError,
    },
}

impl DecodeError {
    pub fn backend_error(&self) -> Option<&OracleError> {
        match self {
            Self::Backend { source, .. } => Some(source),
            Self::Argument(_) => None,
        }
    }
}

/// Which of the three conditioning contexts a step belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextKind {
    Original,
    Positive,
    Negative,
}

impl fmt::Display for ContextKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Original => "original",
            Self::Positive => "positive",
            Self::Negative => "negative",
        })
    }
}

/// Raw logits over the whole vocabulary for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenDistribution(Vec<f64>);

impl TokenDistribution {
    pub fn new(logits: Vec<f64>) -> Result<Self, DecodeError> {
        if logits.is_empty() {
            return Err(DecodeError::Argument("empty logit vector".into()));
        }
        if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
            return Err(DecodeError::Argument(format!(
                "logit {i} is not finite ({})",
                logits[i]
            )));
        }
        Ok(Self(logits))
    }

    pub fn logits(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Highest logit, lowest token id on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best as TokenId
    }

    pub fn softmax(&self) -> Vec<f64> {
        softmax(&self.0, 1.0)
    }

    /// The `k` largest entries, best first, ties by token id.
    pub fn top_k(&self, k: usize) -> Vec<(TokenId, f64)> {
        let mut order: Vec<usize> = (0..self.0.len()).collect();
        order.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .take(k)
            .map(|i| (i as TokenId, self.0[i]))
            .collect()
    }
}

fn softmax(logits: &[f64], temperature: f64) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits
        .iter()
        .map(|&l| ((l - max) / temperature).exp())
        .collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Merges the three per-context logit vectors into one.
pub fn combine_step(
    lx: &TokenDistribution,
    lp: &TokenDistribution,
    ln: &TokenDistribution,
    alpha: f64,
) -> Result<TokenDistribution, DecodeError> {
    if lx.len() != lp.len() || lx.len() != ln.len() {
        return Err(DecodeError::Argument(format!(
            "logit lengths differ: {} / {} / {}",
            lx.len(),
            lp.len(),
            ln.len()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(DecodeError::Argument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let combined =
        lx.0.iter()
            .zip(&lp.0)
            .zip(&ln.0)
            .map(|((&x, &p), &n)| x + alpha * (p - n))
            .collect();
    Ok(TokenDistribution(combined))
}

/// `softmax(combine_step(..))`.
pub fn combined_probability(
    lx: &TokenDistribution,
    lp: &TokenDistribution,
    ln: &TokenDistribution,
    alpha: f64,
) -> Result<Vec<f64>, DecodeError> {
    Ok(combine_step(lx, lp, ln, alpha)?.softmax())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    Greedy,
    Sample { temperature: f64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationConfig {
    pub max_new_tokens: usize,
    pub mode: SelectionMode,
    /// Extra stop tokens on top of the backend's own.
    pub stop_tokens: BTreeSet<TokenId>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 16,
            mode: SelectionMode::Greedy,
            stop_tokens: BTreeSet::new(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), DecodeError> {
        if self.max_new_tokens == 0 {
            return Err(DecodeError::Argument(
                "max_new_tokens must be at least 1".into(),
            ));
        }
        if let SelectionMode::Sample { temperature, .. } = self.mode {
            if !(temperature > 0.0 && temperature.is_finite()) {
                return Err(DecodeError::Argument(format!(
                    "temperature must be positive, got {temperature}"
                )));
            }
        }
        Ok(())
    }
}

/// Picks tokens from logits according to a [`SelectionMode`].
#[derive(Debug)]
pub struct TokenSelector {
    mode: SelectionMode,
    rng: Option<ChaCha8Rng>,
}

impl TokenSelector {
    pub fn new(mode: SelectionMode) -> Self {
        let rng = match mode {
            SelectionMode::Greedy => None,
            SelectionMode::Sample { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        };
        Self { mode, rng }
    }

    pub fn select(&mut self, logits: &TokenDistribution) -> TokenId {
        match (self.mode, self.rng.as_mut()) {
            (SelectionMode::Sample { temperature, .. }, Some(rng)) => {
                let probs = softmax(&logits.0, temperature);
                match WeightedIndex::new(&probs) {
                    Ok(dist) => dist.sample(rng) as TokenId,
                    Err(_) => logits.argmax(),
                }
            }
            _ => logits.argmax(),
        }
    }
}

/// One decoding step, kept for tracing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub step: usize,
    pub token: TokenId,
    /// Five best (token, logit) pairs of the distribution the token was
    /// selected from.
    pub top: Vec<(TokenId, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub trace: Vec<StepTrace>,
}

fn run_loop(
    backend: &dyn DecoderBackend,
    config: &GenerationConfig,
    mut next_logits: impl FnMut(usize, &[TokenId]) -> Result<TokenDistribution, DecodeError>,
) -> Result<Generation, DecodeError> {
    config.validate()?;
    let mut stops = backend.stop_token_ids();
    stops.extend(config.stop_tokens.iter().copied());
    let vocab = backend.vocab_size();
    let mut selector = TokenSelector::new(config.mode);
    let mut prefix: Vec<TokenId> = Vec::new();
    let mut trace = Vec::new();
    for step in 0..config.max_new_tokens {
        let logits = next_logits(step, &prefix)?;
        if logits.len() != vocab {
            return Err(DecodeError::Argument(format!(
                "step {step}: backend returned {} logits for a vocabulary of {vocab}",
                logits.len()
            )));
        }
        let token = selector.select(&logits);
        trace.push(StepTrace {
            step,
            token,
            top: logits.top_k(5),
        });
        if stops.contains(&token) {
            break;
        }
        prefix.push(token);
    }
    let text = backend
        .detokenize(&prefix)
        .map_err(|source| DecodeError::Backend {
            context: ContextKind::Original,
            step: prefix.len(),
            source,
        })?;
    Ok(Generation {
        text,
        tokens: prefix,
        trace,
    })
}

fn query(
    backend: &dyn DecoderBackend,
    context: ContextKind,
    step: usize,
    frames: &ShotSequence,
    question: &str,
    prefix: &[TokenId],
) -> Result<TokenDistribution, DecodeError> {
    let wrap = |source| DecodeError::Backend {
        context,
        step,
        source,
    };
    let logits = backend.step(frames, question, prefix).map_err(wrap)?;
    if let Some(bad) = logits.0.iter().position(|v| !v.is_finite()) {
        return Err(wrap(OracleError::Backend(format!(
            "non-finite logit at token {bad}"
        ))));
    }
    Ok(logits)
}

/// Ordinary auto-regressive decoding conditioned on the sampled shots.
pub fn baseline_decode(
    backend: &dyn DecoderBackend,
    shots: &ShotSequence,
    question: &str,
    config: &GenerationConfig,
) -> Result<Generation, DecodeError> {
    run_loop(backend, config, |step, prefix| {
        query(
            backend,
            ContextKind::Original,
            step,
            shots,
            question,
            prefix,
        )
    })
}

/// Decoding with the positive/negative contrast folded into every step.
///
/// The three backend calls of a step run concurrently; the chosen token is
/// appended to the one shared prefix.
pub fn co_reason_decode(
    backend: &dyn DecoderBackend,
    shots: &ShotSequence,
    pair: &MaterializedPair,
    question: &str,
    config: &GenerationConfig,
) -> Result<Generation, DecodeError> {
    if pair.positive.len() != shots.len() || pair.negative.len() != shots.len() {
        return Err(DecodeError::Argument(format!(
            "context lengths differ: {} / {} / {}",
            shots.len(),
            pair.positive.len(),
            pair.negative.len()
        )));
    }
    run_loop(backend, config, |step, prefix| {
        let (lx, (lp, ln)) = rayon::join(
            || {
                query(
                    backend,
                    ContextKind::Original,
                    step,
                    shots,
                    question,
                    prefix,
                )
            },
            || {
                rayon::join(
                    || {
                        query(
                            backend,
                            ContextKind::Positive,
                            step,
                            &pair.positive,
                            question,
                            prefix,
                        )
                    },
                    || {
                        query(
                            backend,
                            ContextKind::Negative,
                            step,
                            &pair.negative,
                            question,
                            prefix,
                        )
                    },
                )
            },
        );
        combine_step(&lx?, &lp?, &ln?, pair.alpha)
    })
}
