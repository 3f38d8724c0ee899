//! Vote tallies over self-consistency samples and the rule turning a tally
//! into a final label.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::RelevanceLabel;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("tally covers {tally} samples but the policy expects {expected}")]
    SizeMismatch { tally: u32, expected: u32 },
    #[error("invalid threshold policy: {0}")]
    Invalid(String),
}

/// Per-sentence vote counts. `invalid` counts unparseable samples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteTally {
    pub essential: u32,
    pub supplementary: u32,
    pub not_relevant: u32,
    pub invalid: u32,
}

impl VoteTally {
    pub fn new(essential: u32, supplementary: u32, not_relevant: u32, invalid: u32) -> Self {
        Self {
            essential,
            supplementary,
            not_relevant,
            invalid,
        }
    }

    pub fn total(&self) -> u32 {
        self.essential + self.supplementary + self.not_relevant + self.invalid
    }

    pub fn votes_for(&self, label: RelevanceLabel) -> u32 {
        match label {
            RelevanceLabel::Essential => self.essential,
            RelevanceLabel::Supplementary => self.supplementary,
            RelevanceLabel::NotRelevant => self.not_relevant,
        }
    }
}

/// Counts parsed samples per class; `None` entries are invalid samples.
pub fn tally(parsed: &[Option<RelevanceLabel>]) -> VoteTally {
    let mut t = VoteTally::default();
    for p in parsed {
        match p {
            Some(RelevanceLabel::Essential) => t.essential += 1,
            Some(RelevanceLabel::Supplementary) => t.supplementary += 1,
            Some(RelevanceLabel::NotRelevant) => t.not_relevant += 1,
            None => t.invalid += 1,
        }
    }
    t
}

/// How a fractional essential threshold becomes a vote count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rounding {
    Ceil,
    Floor,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Essential threshold is `essential_min` votes.
    Absolute,
    /// Essential threshold is `fraction * n_samples`, rounded as configured.
    Fractional { fraction: f64, rounding: Rounding },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub n_samples: u32,
    pub essential_min: u32,
    pub supplementary_min: u32,
    pub mode: ThresholdMode,
    /// When set, a single essential vote below the essential threshold still
    /// makes the sentence supplementary.
    pub lone_essential_is_supplementary: bool,
}

impl Default for ThresholdPolicy {
    /// 20 samples, essential at 2 votes, supplementary at 1.
    fn default() -> Self {
        Self {
            n_samples: 20,
            essential_min: 2,
            supplementary_min: 1,
            mode: ThresholdMode::Absolute,
            lone_essential_is_supplementary: true,
        }
    }
}

impl ThresholdPolicy {
    pub fn absolute(n_samples: u32, essential_min: u32, supplementary_min: u32) -> Self {
        Self {
            n_samples,
            essential_min,
            supplementary_min,
            ..Self::default()
        }
    }

    pub fn fractional(n_samples: u32, fraction: f64, rounding: Rounding, supplementary_min: u32) -> Self {
        let mut p = Self::absolute(n_samples, 1, supplementary_min);
        p.mode = ThresholdMode::Fractional { fraction, rounding };
        p.essential_min = p.essential_threshold().max(supplementary_min);
        p
    }

    /// Effective number of essential votes needed for an essential label.
    pub fn essential_threshold(&self) -> u32 {
        match self.mode {
            ThresholdMode::Absolute => self.essential_min,
            ThresholdMode::Fractional { fraction, rounding } => {
                let exact = fraction * self.n_samples as f64;
                // absorb binary noise such as 0.26 * 20 = 5.2000000000000002
                let snapped = (exact * 1e9).round() / 1e9;
                let votes = match rounding {
                    Rounding::Ceil => snapped.ceil(),
                    Rounding::Floor => snapped.floor(),
                };
                (votes as u32).clamp(1, self.n_samples)
            }
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let invalid = |m: &str| Err(PolicyError::Invalid(m.to_string()));
        if self.n_samples == 0 {
            return invalid("n_samples must be positive");
        }
        if self.essential_min == 0 || self.supplementary_min == 0 {
            return invalid("minimum vote counts must be positive");
        }
        if self.essential_min > self.n_samples {
            return invalid("essential_min exceeds n_samples");
        }
        if self.supplementary_min > self.essential_min {
            return invalid("supplementary_min exceeds essential_min");
        }
        if let ThresholdMode::Fractional { fraction, .. } = self.mode {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return invalid("fraction must lie in (0, 1]");
            }
        }
        Ok(())
    }
}

/// Maps a tally to a label.
///
/// Essential when the essential votes reach the threshold; otherwise
/// supplementary when supplementary votes reach `supplementary_min` or (if
/// enabled) any essential vote was cast; otherwise not-relevant. Invalid votes
/// count for nothing.
pub fn apply_threshold(t: &VoteTally, p: &ThresholdPolicy) -> Result<RelevanceLabel, PolicyError> {
    if t.total() != p.n_samples {
        return Err(PolicyError::SizeMismatch {
            tally: t.total(),
            expected: p.n_samples,
        });
    }
    if t.essential >= p.essential_threshold() {
        Ok(RelevanceLabel::Essential)
    } else if t.supplementary >= p.supplementary_min || (p.lone_essential_is_supplementary && t.essential >= 1) {
        Ok(RelevanceLabel::Supplementary)
    } else {
        Ok(RelevanceLabel::NotRelevant)
    }
}
