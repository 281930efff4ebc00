//! The two pluggable models and their implementations.
//!
//! [`RelevanceOracle`] answers the yes/no relevance question for one mosaic.
//! [`DecoderBackend`] produces full-vocabulary logits for one decoding step.
//! Each comes with a deterministic desk-scale double ([`MockOracle`],
//! [`ToyBackend`]) and an HTTP adapter ([`RemoteOracle`], [`RemoteBackend`]).

mod mock;
mod remote;
mod toy;

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use thiserror::Error;

use crate::decode::TokenDistribution;
use crate::media::{MosaicImage, ShotSequence};

pub use mock::{mock_classify, MockOracle, MockOracleConfig};
pub use remote::{
    ClassifyRequest, ClassifyResponse, RemoteBackend, RemoteOracle, RemoteSettings, StepRequest,
    StepResponse, VocabResponse,
};
pub use toy::{toy_step, ToyBackend, ToyBackendConfig};

pub type TokenId = u32;

#[derive(Debug, Clone, Error)]
pub enum OracleError {
    #[error(
        "transport error talking to {endpoint} (status {status:?}, after {elapsed:?}): {reason}"
    )]
    Transport {
        endpoint: String,
        status: Option<u16>,
        elapsed: Duration,
        reason: String,
    },
    #[error("request to {endpoint} timed out after {elapsed:?}")]
    Timeout { endpoint: String, elapsed: Duration },
    #[error("malformed response from {endpoint}: {reason}")]
    Schema { endpoint: String, reason: String },
    #[error("backend error: {0}")]
    Backend(String),
}

impl OracleError {
    /// Transient failures worth another attempt.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Self::Transport { .. } | Self::Timeout { .. })
    }

    /// True for failures to reach the model at all, as opposed to bad
    /// answers.
    pub fn is_transport(&self) -> bool {
        matches!(
            self,
            Self::Transport { .. } | Self::Timeout { .. } | Self::Schema { .. }
        )
    }
}

/// A vision-language model asked whether a mosaic is relevant to a prompt.
pub trait RelevanceOracle: Send + Sync {
    fn classify(&self, mosaic: &MosaicImage, prompt: &str) -> Result<String, OracleError>;
}

/// A multimodal language model exposing raw per-step logits.
///
/// `step` must be deterministic for identical inputs and always return
/// `vocab_size()` logits.
pub trait DecoderBackend: Send + Sync {
    fn vocab_size(&self) -> usize;
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, OracleError>;
    fn detokenize(&self, ids: &[TokenId]) -> Result<String, OracleError>;
    fn step(
        &self,
        frames: &ShotSequence,
        question: &str,
        prefix: &[TokenId],
    ) -> Result<TokenDistribution, OracleError>;
    fn stop_token_ids(&self) -> BTreeSet<TokenId>;
}

impl<T: RelevanceOracle + ?Sized> RelevanceOracle for &T {
    fn classify(&self, mosaic: &MosaicImage, prompt: &str) -> Result<String, OracleError> {
        (**self).classify(mosaic, prompt)
    }
}

impl<T: RelevanceOracle + ?Sized> RelevanceOracle for Box<T> {
    fn classify(&self, mosaic: &MosaicImage, prompt: &str) -> Result<String, OracleError> {
        (**self).classify(mosaic, prompt)
    }
}

impl<T: DecoderBackend + ?Sized> DecoderBackend for Box<T> {
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, OracleError> {
        (**self).tokenize(text)
    }
    fn detokenize(&self, ids: &[TokenId]) -> Result<String, OracleError> {
        (**self).detokenize(ids)
    }
    fn step(
        &self,
        frames: &ShotSequence,
        question: &str,
        prefix: &[TokenId],
    ) -> Result<TokenDistribution, OracleError> {
        (**self).step(frames, question, prefix)
    }
    fn stop_token_ids(&self) -> BTreeSet<TokenId> {
        (**self).stop_token_ids()
    }
}

/// Wraps an oracle and counts how often it is asked.
#[derive(Debug, Default)]
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicUsize,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }
}

impl<O: RelevanceOracle> RelevanceOracle for CountingOracle<O> {
    fn classify(&self, mosaic: &MosaicImage, prompt: &str) -> Result<String, OracleError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.classify(mosaic, prompt)
    }
}
