//! JSON-over-HTTP adapters for real inference servers.
//!
//! Classification: `POST <endpoint>` with `{"image": <base64 PNG>, "prompt":
//! ...}`, answered by `{"text": ...}`.
//!
//! Decoding: `GET <base>/vocab` answered by `{"tokens": [...],
//! "stop_token_ids": [...]}`, then `POST <base>/step` with `{"frames":
//! [<base64 PNG>...], "question": ..., "prefix": [...]}` answered by
//! `{"logits": [...]}` covering the full vocabulary. Servers that only expose
//! top-k log-probabilities cannot be used.

use std::collections::BTreeSet;
use std::io::Cursor;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use image::{ImageFormat, RgbImage};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{DecoderBackend, OracleError, RelevanceOracle, TokenId};
use crate::decode::TokenDistribution;
use crate::media::{MosaicImage, ShotSequence};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub image: String,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub frames: Vec<String>,
    pub question: String,
    pub prefix: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepResponse {
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabResponse {
    pub tokens: Vec<String>,
    pub stop_token_ids: Vec<TokenId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteSettings {
    /// Deadline for one whole request.
    pub timeout: Duration,
    /// Sent as `Authorization: Bearer <token>` when present.
    pub bearer_token: Option<String>,
    /// Maximum requests in flight through one adapter.
    pub max_concurrency: usize,
}

impl Default for RemoteSettings {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(60),
            bearer_token: None,
            max_concurrency: 4,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        {
            let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
            while *free == 0 {
                free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
            }
            *free -= 1;
        }
        let out = f();
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Debug)]
struct Client {
    agent: ureq::Agent,
    settings: RemoteSettings,
    gate: Gate,
}

impl Client {
    fn new(settings: RemoteSettings) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(settings.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            gate: Gate::new(settings.max_concurrency),
            settings,
        }
    }

    fn transport(url: &str, started: Instant, status: Option<u16>, reason: String) -> OracleError {
        OracleError::Transport {
            endpoint: url.to_string(),
            status,
            elapsed: started.elapsed(),
            reason,
        }
    }

    fn call<T: DeserializeOwned>(
        &self,
        url: &str,
        body: Option<&impl Serialize>,
    ) -> Result<T, OracleError> {
        self.gate.run(|| {
            let started = Instant::now();
            let auth = self
                .settings
                .bearer_token
                .as_ref()
                .map(|t| format!("Bearer {t}"));
            let result = match body {
                Some(body) => {
                    let mut req = self.agent.post(url);
                    if let Some(auth) = &auth {
                        req = req.header("Authorization", auth);
                    }
                    req.send_json(body)
                }
                None => {
                    let mut req = self.agent.get(url);
                    if let Some(auth) = &auth {
                        req = req.header("Authorization", auth);
                    }
                    req.call()
                }
            };
            let mut response = result.map_err(|e| match e {
                ureq::Error::Timeout(_) => OracleError::Timeout {
                    endpoint: url.to_string(),
                    elapsed: started.elapsed(),
                },
                other => Self::transport(url, started, None, other.to_string()),
            })?;
            let status = response.status().as_u16();
            let text = response.body_mut().read_to_string().map_err(|e| match e {
                ureq::Error::Timeout(_) => OracleError::Timeout {
                    endpoint: url.to_string(),
                    elapsed: started.elapsed(),
                },
                other => Self::transport(url, started, Some(status), other.to_string()),
            })?;
            if !(200..300).contains(&status) {
                let snippet: String = text.chars().take(200).collect();
                return Err(Self::transport(url, started, Some(status), snippet));
            }
            serde_json::from_str(&text).map_err(|e| OracleError::Schema {
                endpoint: url.to_string(),
                reason: e.to_string(),
            })
        })
    }
}

pub(crate) fn encode_png(image: &RgbImage) -> Result<String, OracleError> {
    let mut bytes = Vec::new();
    image
        .write_to(&mut Cursor::new(&mut bytes), ImageFormat::Png)
        .map_err(|e| OracleError::Backend(format!("PNG encoding failed: {e}")))?;
    Ok(STANDARD.encode(bytes))
}

/// Relevance oracle served over HTTP, one request per mosaic.
#[derive(Debug)]
pub struct RemoteOracle {
    endpoint: String,
    client: Client,
}

impl RemoteOracle {
    pub fn new(endpoint: impl Into<String>, settings: RemoteSettings) -> Self {
        Self {
            endpoint: endpoint.into(),
            client: Client::new(settings),
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl RelevanceOracle for RemoteOracle {
    fn classify(&self, mosaic: &MosaicImage, prompt: &str) -> Result<String, OracleError> {
        let request = ClassifyRequest {
            image: encode_png(&mosaic.pixels)?,
            prompt: prompt.to_string(),
        };
        let response: ClassifyResponse = self.client.call(&self.endpoint, Some(&request))?;
        Ok(response.text)
    }
}

/// Stepwise decoder served over HTTP.
#[derive(Debug)]
pub struct RemoteBackend {
    base: String,
    client: Client,
    vocab: Vec<String>,
    stops: BTreeSet<TokenId>,
}

impl RemoteBackend {
    /// Connects and downloads the vocabulary.
    pub fn connect(base: impl Into<String>, settings: RemoteSettings) -> Result<Self, OracleError> {
        let base = base.into().trim_end_matches('/').to_string();
        let client = Client::new(settings);
        let url = format!("{base}/vocab");
        let vocab: VocabResponse = client.call(&url, None::<&()>)?;
        if vocab.tokens.is_empty() {
            return Err(OracleError::Schema {
                endpoint: url,
                reason: "empty vocabulary".into(),
            });
        }
        if let Some(bad) = vocab
            .stop_token_ids
            .iter()
            .find(|&&id| id as usize >= vocab.tokens.len())
        {
            return Err(OracleError::Schema {
                endpoint: url,
                reason: format!("stop token {bad} outside the vocabulary"),
            });
        }
        Ok(Self {
            base,
            client,
            stops: vocab.stop_token_ids.into_iter().collect(),
            vocab: vocab.tokens,
        })
    }
}

impl DecoderBackend for RemoteBackend {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Greedy longest-match over the downloaded vocabulary.
    fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, OracleError> {
        let mut ids = Vec::new();
        let mut rest = text;
        while !rest.is_empty() {
            let best = self
                .vocab
                .iter()
                .enumerate()
                .filter(|(_, t)| !t.is_empty() && rest.starts_with(t.as_str()))
                .max_by_key(|(i, t)| (t.len(), std::cmp::Reverse(*i)));
            match best {
                Some((id, token)) => {
                    ids.push(id as TokenId);
                    rest = &rest[token.len()..];
                }
                None => {
                    return Err(OracleError::Backend(format!(
                        "cannot tokenize {:?}",
                        rest.chars().take(16).collect::<String>()
                    )))
                }
            }
        }
        Ok(ids)
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String, OracleError> {
        ids.iter()
            .filter(|id| !self.stops.contains(id))
            .map(|&id| {
                self.vocab
                    .get(id as usize)
                    .map(String::as_str)
                    .ok_or_else(|| {
                        OracleError::Backend(format!("token {id} outside the vocabulary"))
                    })
            })
            .collect()
    }

    fn step(
        &self,
        frames: &ShotSequence,
        question: &str,
        prefix: &[TokenId],
    ) -> Result<TokenDistribution, OracleError> {
        // TODO: cache the encoded frames of a sequence across steps of one generation
        let request = StepRequest {
            frames: frames
                .shots()
                .iter()
                .map(|f| encode_png(&f.pixels))
                .collect::<Result<_, _>>()?,
            question: question.to_string(),
            prefix: prefix.to_vec(),
        };
        let url = format!("{}/step", self.base);
        let response: StepResponse = self.client.call(&url, Some(&request))?;
        if response.logits.len() != self.vocab.len() {
            return Err(OracleError::Schema {
                endpoint: url,
                reason: format!(
                    "{} logits for a vocabulary of {}",
                    response.logits.len(),
                    self.vocab.len()
                ),
            });
        }
        TokenDistribution::new(response.logits).map_err(|e| OracleError::Schema {
            endpoint: url,
            reason: e.to_string(),
        })
    }

    fn stop_token_ids(&self) -> BTreeSet<TokenId> {
        self.stops.clone()
    }
}
