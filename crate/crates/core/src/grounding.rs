//! Binary video summary: ask the relevance oracle about each mosaic and turn
//! the yes/no answers into a per-shot relevance code.

use std::fmt;
use std::str::FromStr;
use std::thread;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{compose_mosaics, MediaError, MosaicImage, ShotSequence};
use crate::oracles::RelevanceOracle;

/// Fixed instruction placed in front of the question.
pub const SUMMARY_PROMPT_PREFIX: &str =
    "Is anything in the keyword list present in the image? Just answer yes or no. ";

#[derive(Debug, Error)]
pub enum GroundingError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Builds the summary prompt for one query. The same prompt is used for every
/// mosaic of that query.
pub fn build_summary_prompt(question: &str) -> Result<String, GroundingError> {
    if question.trim().is_empty() {
        return Err(GroundingError::Argument("question is empty".into()));
    }
    Ok(format!("{SUMMARY_PROMPT_PREFIX}{question}"))
}

/// `true` iff the first alphabetic word of `text` is "yes" (any case).
pub fn parse_verdict(text: &str) -> bool {
    text.split(|c: char| !c.is_alphabetic())
        .find(|w| !w.is_empty())
        .is_some_and(|w| w.eq_ignore_ascii_case("yes"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupVerdict {
    pub group_index: usize,
    pub relevant: bool,
    pub raw_response: String,
}

/// Per-shot relevance bits, with the group verdicts they were expanded from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceCode {
    bits: Vec<bool>,
    groups: Vec<bool>,
    k: usize,
}

impl RelevanceCode {
    /// A code at single-shot granularity (`k = 1`).
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self {
            groups: bits.clone(),
            bits,
            k: 1,
        }
    }

    pub fn from_groups(groups: Vec<bool>, n: usize, k: usize) -> Result<Self, GroundingError> {
        if k == 0 {
            return Err(GroundingError::Argument(
                "group size must be at least 1".into(),
            ));
        }
        if groups.len() != n.div_ceil(k) {
            return Err(GroundingError::Argument(format!(
                "{} group verdicts for {n} shots in groups of {k}; expected {}",
                groups.len(),
                n.div_ceil(k)
            )));
        }
        let bits = (0..n).map(|i| groups[i / k]).collect();
        Ok(Self { bits, groups, k })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn groups(&self) -> &[bool] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.bits.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_relevant(&self, i: usize) -> bool {
        self.bits[i]
    }

    /// The relevant shot indices, ascending.
    pub fn relevant_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.bits[i]).collect()
    }

    pub fn relevant_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

impl fmt::Display for RelevanceCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for RelevanceCode {
    type Err = GroundingError;

    /// Parses a string of `0`/`1` characters into a per-shot code.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(GroundingError::Argument(format!(
                    "relevance code may only contain 0 and 1, found {other:?}"
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        if bits.is_empty() {
            return Err(GroundingError::Argument("relevance code is empty".into()));
        }
        Ok(Self::from_bits(bits))
    }
}

/// Spreads each group verdict over the shots of that group.
pub fn expand_verdicts(
    verdicts: &[GroupVerdict],
    n: usize,
    k: usize,
) -> Result<RelevanceCode, GroundingError> {
    if k == 0 {
        return Err(GroundingError::Argument(
            "group size must be at least 1".into(),
        ));
    }
    let m = n.div_ceil(k);
    if verdicts.len() != m {
        return Err(GroundingError::Argument(format!(
            "expected {m} verdicts for n={n}, k={k}, got {}",
            verdicts.len()
        )));
    }
    let mut groups = vec![None; m];
    for v in verdicts {
        match groups.get_mut(v.group_index) {
            Some(slot @ None) => *slot = Some(v.relevant),
            Some(Some(_)) => {
                return Err(GroundingError::Argument(format!(
                    "group {} reported twice",
                    v.group_index
                )))
            }
            None => {
                return Err(GroundingError::Argument(format!(
                    "group index {} outside 0..{m}",
                    v.group_index
                )))
            }
        }
    }
    let groups = groups.into_iter().map(|g| g.unwrap_or(false)).collect();
    RelevanceCode::from_groups(groups, n, k)
}

/// How often and how patiently to retry transient oracle failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self {
            max_retries: 0,
            ..Self::default()
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .mul_f64(self.multiplier.powi(attempt as i32))
    }
}

/// Everything observed while classifying one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_index: usize,
    pub members: Vec<usize>,
    pub raw_response: String,
    pub relevant: bool,
    pub attempts: u32,
    pub latency_ms: f64,
    /// Final oracle error when every attempt failed; the group then counts
    /// as irrelevant.
    pub error: Option<String>,
}

impl GroupRecord {
    pub fn verdict(&self) -> GroupVerdict {
        GroupVerdict {
            group_index: self.group_index,
            relevant: self.relevant,
            raw_response: self.raw_response.clone(),
        }
    }
}

/// Classifies one mosaic, retrying transient failures.
///
/// If the oracle never answers, the group is reported as irrelevant with the
/// error attached. Failures never produce a positive verdict.
pub fn classify_group(
    oracle: &dyn RelevanceOracle,
    group_index: usize,
    mosaic: &MosaicImage,
    prompt: &str,
    retry: &RetryPolicy,
) -> GroupRecord {
    let started = Instant::now();
    let mut attempts = 0;
    let outcome = loop {
        attempts += 1;
        match oracle.classify(mosaic, prompt) {
            Ok(text) => break Ok(text),
            Err(e) if e.is_retriable() && attempts <= retry.max_retries => {
                thread::sleep(retry.backoff(attempts - 1));
            }
            Err(e) => break Err(e),
        }
    };
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;
    let (raw_response, relevant, error) = match outcome {
        Ok(text) => {
            let relevant = parse_verdict(&text);
            (text, relevant, None)
        }
        Err(e) => (String::new(), false, Some(e.to_string())),
    };
    GroupRecord {
        group_index,
        members: mosaic.members(),
        raw_response,
        relevant,
        attempts,
        latency_ms,
        error,
    }
}

/// Knobs for [`ground`].
#[derive(Debug, Clone)]
pub struct GroundingOptions {
    pub group_size: usize,
    /// Upper bound on concurrent oracle requests. `0` means "use the current
    /// rayon pool as is".
    pub parallelism: usize,
    pub retry: RetryPolicy,
}

impl Default for GroundingOptions {
    fn default() -> Self {
        Self {
            group_size: crate::media::DEFAULT_GROUP_SIZE,
            parallelism: 0,
            retry: RetryPolicy::default(),
        }
    }
}

/// The code plus the audit trail of oracle interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub code: RelevanceCode,
    pub prompt: String,
    pub groups: Vec<GroupRecord>,
}

impl Grounding {
    pub fn oracle_calls(&self) -> usize {
        self.groups.iter().map(|g| g.attempts as usize).sum()
    }

    pub fn failures(&self) -> impl Iterator<Item = &GroupRecord> {
        self.groups.iter().filter(|g| g.error.is_some())
    }
}

/// Mosaics the shots, classifies every group and expands the verdicts.
pub fn ground(
    oracle: &dyn RelevanceOracle,
    shots: &ShotSequence,
    question: &str,
    options: &GroundingOptions,
) -> Result<Grounding, GroundingError> {
    let prompt = build_summary_prompt(question)?;
    let k = options.group_size;
    let mosaics = compose_mosaics(shots, k)?;
    let classify_all = || -> Vec<GroupRecord> {
        mosaics
            .par_iter()
            .enumerate()
            .map(|(g, mosaic)| classify_group(oracle, g, mosaic, &prompt, &options.retry))
            .collect()
    };
    let groups = if options.parallelism == 0 {
        classify_all()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.parallelism)
            .build()
            .map_err(|e| GroundingError::Pool(e.to_string()))?
            .install(classify_all)
    };
    let verdicts: Vec<GroupVerdict> = groups.iter().map(GroupRecord::verdict).collect();
    let code = expand_verdicts(&verdicts, shots.len(), k)?;
    Ok(Grounding {
        code,
        prompt,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::OracleError;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn prompt_template() {
        assert_eq!(
            build_summary_prompt("Q").unwrap(),
            "Is anything in the keyword list present in the image? Just answer yes or no. Q"
        );
        assert!(build_summary_prompt("").is_err());
        assert!(build_summary_prompt("  \t\n").is_err());
    }

    #[test]
    fn verdict_parsing() {
        assert!(parse_verdict("Yes."));
        assert!(parse_verdict("YES"));
        assert!(parse_verdict("  **yes**, a dragon"));
        assert!(!parse_verdict("no, nothing visible"));
        assert!(!parse_verdict("Not sure"));
        assert!(!parse_verdict(""));
        assert!(!parse_verdict("...!"));
        assert!(!parse_verdict("yesterday"));
        assert!(parse_verdict("42 yes"));
    }

    fn verdicts(bits: &[bool]) -> Vec<GroupVerdict> {
        bits.iter()
            .enumerate()
            .map(|(g, &relevant)| GroupVerdict {
                group_index: g,
                relevant,
                raw_response: String::new(),
            })
            .collect()
    }

    #[test]
    fn expansion_by_hand() {
        // n=8, k=4: shot i belongs to group floor(i/4)
        let code = expand_verdicts(&verdicts(&[true, false]), 8, 4).unwrap();
        assert_eq!(code.to_string(), "11110000");
        assert_eq!(code.relevant_indices(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn expansion_edge_cases() {
        let none = expand_verdicts(&verdicts(&[false, false]), 7, 4).unwrap();
        assert!(none.relevant_indices().is_empty());
        let ident = expand_verdicts(&verdicts(&[true, false, true]), 3, 1).unwrap();
        assert_eq!(ident.bits(), &[true, false, true]);
        let partial = expand_verdicts(&verdicts(&[false, true]), 5, 4).unwrap();
        assert_eq!(partial.to_string(), "00001");
        assert!(expand_verdicts(&verdicts(&[true]), 8, 4).is_err());
        let mut dup = verdicts(&[true, false]);
        dup[1].group_index = 0;
        assert!(expand_verdicts(&dup, 8, 4).is_err());
    }

    #[test]
    fn code_parsing() {
        let code: RelevanceCode = "0110".parse().unwrap();
        assert_eq!(code.bits(), &[false, true, true, false]);
        assert_eq!(code.k(), 1);
        assert!("01x".parse::<RelevanceCode>().is_err());
        assert!("".parse::<RelevanceCode>().is_err());
    }

    struct Flaky {
        failures: usize,
        calls: AtomicUsize,
        answer: &'static str,
    }

    impl RelevanceOracle for Flaky {
        fn classify(&self, _: &MosaicImage, _: &str) -> Result<String, OracleError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(OracleError::Transport {
                    endpoint: "test".into(),
                    status: Some(503),
                    elapsed: Duration::ZERO,
                    reason: "busy".into(),
                })
            } else {
                Ok(self.answer.to_string())
            }
        }
    }

    fn one_mosaic() -> MosaicImage {
        let frame = crate::media::make_black_frame(2, 2).unwrap();
        let seq = ShotSequence::new("b", vec![frame]).unwrap();
        compose_mosaics(&seq, 1).unwrap().remove(0)
    }

    fn quick() -> RetryPolicy {
        RetryPolicy {
            initial_backoff: Duration::from_millis(1),
            ..RetryPolicy::default()
        }
    }

    #[test]
    fn retries_then_succeeds() {
        let oracle = Flaky {
            failures: 2,
            calls: AtomicUsize::new(0),
            answer: "Yes.",
        };
        let rec = classify_group(&oracle, 0, &one_mosaic(), "p", &quick());
        assert!(rec.relevant);
        assert_eq!(rec.attempts, 3);
        assert!(rec.error.is_none());
    }

    #[test]
    fn gives_up_as_irrelevant() {
        let oracle = Flaky {
            failures: usize::MAX,
            calls: AtomicUsize::new(0),
            answer: "yes",
        };
        let rec = classify_group(&oracle, 5, &one_mosaic(), "p", &quick());
        assert!(!rec.relevant);
        assert_eq!(rec.attempts, 4);
        assert_eq!(rec.group_index, 5);
        assert!(rec.error.as_deref().unwrap().contains("busy"));
    }
}
