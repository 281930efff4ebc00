//! Positive and negative sub-shot sequences and the dynamic weight.
//!
//! Both sequences keep the length of the sampled sequence. Each position of
//! the positive sequence holds a relevant shot: the shot itself when it is
//! relevant, otherwise the nearest relevant shot after it, otherwise the
//! nearest one before it. The negative sequence is the mirror image over the
//! irrelevant shots, with a black frame when no irrelevant shot exists.
//!
//! The weight is `1 - r / n` for `r` relevant shots out of `n`, forced to
//! zero when `r` is `0` or `n` because the pair then carries no contrast.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::RelevanceCode;
use crate::media::{make_black_frame, MediaError, ShotSequence};

#[derive(Debug, Error)]
pub enum SubShotError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Media(#[from] MediaError),
}

/// Where one position of a sub-shot sequence takes its frame from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceSlot {
    Original(usize),
    Black,
}

impl SourceSlot {
    pub fn index(self) -> Option<usize> {
        match self {
            Self::Original(i) => Some(i),
            Self::Black => None,
        }
    }
}

/// Nearest index after `i` satisfying `keep`, else nearest before, else none.
fn nearest(i: usize, n: usize, keep: impl Fn(usize) -> bool) -> Option<usize> {
    (i + 1..n)
        .find(|&j| keep(j))
        .or_else(|| (0..i).rev().find(|&j| keep(j)))
}

pub fn build_positive(code: &RelevanceCode) -> Vec<SourceSlot> {
    let n = code.n();
    (0..n)
        .map(|i| {
            if code.is_relevant(i) {
                SourceSlot::Original(i)
            } else {
                // no relevant shot anywhere: keep the original sequence
                SourceSlot::Original(nearest(i, n, |j| code.is_relevant(j)).unwrap_or(i))
            }
        })
        .collect()
}

pub fn build_negative(code: &RelevanceCode) -> Vec<SourceSlot> {
    let n = code.n();
    (0..n)
        .map(|i| {
            if !code.is_relevant(i) {
                SourceSlot::Original(i)
            } else {
                nearest(i, n, |j| !code.is_relevant(j))
                    .map_or(SourceSlot::Black, SourceSlot::Original)
            }
        })
        .collect()
}

pub fn compute_alpha(code: &RelevanceCode) -> f64 {
    let r = code.relevant_count();
    let n = code.n();
    if r == 0 || r == n {
        0.0
    } else {
        1.0 - r as f64 / n as f64
    }
}

/// The two sub-shot index maps and their weight, derived from one code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubShotPair {
    pub positive: Vec<SourceSlot>,
    pub negative: Vec<SourceSlot>,
    pub alpha: f64,
    pub code: RelevanceCode,
}

impl SubShotPair {
    pub fn from_code(code: RelevanceCode) -> Self {
        Self {
            positive: build_positive(&code),
            negative: build_negative(&code),
            alpha: compute_alpha(&code),
            code,
        }
    }

    /// Replaces the computed weight, e.g. for ablations.
    pub fn with_alpha(mut self, alpha: f64) -> Result<Self, SubShotError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(SubShotError::Argument(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.positive.len()
    }
}

/// Concrete frame sequences for the positive and negative contexts.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterializedPair {
    pub positive: ShotSequence,
    pub negative: ShotSequence,
    pub alpha: f64,
}

/// Resolves the slots of `pair` against the sampled shots.
pub fn materialize(
    shots: &ShotSequence,
    pair: &SubShotPair,
) -> Result<MaterializedPair, SubShotError> {
    if pair.n() != shots.len() || pair.negative.len() != shots.len() {
        return Err(SubShotError::Argument(format!(
            "sub-shot pair covers {} shots but the sequence has {}",
            pair.n(),
            shots.len()
        )));
    }
    let res = shots.resolution();
    let black = make_black_frame(res.height, res.width)?;
    let resolve = |slots: &[SourceSlot]| -> Result<ShotSequence, SubShotError> {
        let frames = slots
            .iter()
            .map(|slot| match *slot {
                SourceSlot::Original(i) => shots.get(i).cloned().ok_or_else(|| {
                    SubShotError::Argument(format!("slot points at missing shot {i}"))
                }),
                SourceSlot::Black => Ok(black.clone()),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ShotSequence::new(shots.source(), frames)?)
    };
    Ok(MaterializedPair {
        positive: resolve(&pair.positive)?,
        negative: resolve(&pair.negative)?,
        alpha: pair.alpha,
    })
}
