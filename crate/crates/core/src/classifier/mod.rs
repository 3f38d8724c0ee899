//! Sentence relevance classification with few-shot prompts, self-consistency
//! sampling and vote thresholds.
//!
//! Every note sentence is classified on its own: the prompt carries the
//! question, a balanced few-shot set drawn once per case, and the sentence.
//! `n_samples` completions are drawn at temperature 1.0, parsed, tallied and
//! mapped to a label by a [`ThresholdPolicy`].

mod prompt;
mod threshold;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use prompt::{build_classifier_prompt, parse_label, parse_shots, sample_few_shot_set, FewShotExample};
pub use threshold::{apply_threshold, tally, PolicyError, Rounding, ThresholdMode, ThresholdPolicy, VoteTally};

use crate::corpus::{CaseRecord, RelevanceLabel, SentenceLabels};
use crate::gateway::{Gateway, GatewayError};
use crate::seed::derive_rng;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("insufficient {label} examples: need {needed}, pool has {available}")]
    InsufficientShots {
        label: RelevanceLabel,
        needed: usize,
        available: usize,
    },
    #[error("few-shot count must be a positive multiple of 3, got {0}")]
    ShotCount(usize),
    #[error("shots pool: {0}")]
    ShotsPool(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("case `{case_id}` sentence {sentence_id}: {source}")]
    Backend {
        case_id: String,
        sentence_id: u32,
        #[source]
        source: GatewayError,
    },
    #[error("audit line {line}: {message}")]
    Audit { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierSettings {
    pub policy: ThresholdPolicy,
    /// Few-shot examples per prompt; a multiple of 3.
    pub shots_per_prompt: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub seed: u64,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        Self {
            policy: ThresholdPolicy::default(),
            shots_per_prompt: 30,
            temperature: 1.0,
            max_output_tokens: 8,
            seed: 0,
        }
    }
}

/// Everything recorded about one sentence's classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAudit {
    pub case_id: String,
    pub sentence_id: u32,
    pub samples: Vec<String>,
    pub tally: VoteTally,
    pub label: RelevanceLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseClassification {
    pub labels: SentenceLabels,
    pub audit: Vec<SentenceAudit>,
}

/// Labels every sentence of `case`.
///
/// The few-shot set is drawn from a stream seeded by `(seed, case_id)`, so
/// the labels do not depend on sentence order or on other cases.
pub fn classify_case(
    case: &CaseRecord,
    settings: &ClassifierSettings,
    pool: &[FewShotExample],
    gateway: &Gateway,
) -> Result<CaseClassification, ClassifierError> {
    settings.policy.validate()?;
    let mut rng = derive_rng(settings.seed, &["shots", &case.case_id]);
    let shots = sample_few_shot_set(pool, settings.shots_per_prompt, &mut rng)?;

    let mut labels = SentenceLabels::new();
    let mut audit = Vec::with_capacity(case.sentences.len());
    for sentence in &case.sentences {
        let (system, user) = build_classifier_prompt(&case.clinician_question, sentence, &shots)?;
        let samples = gateway
            .sample_n(
                &system,
                &user,
                settings.policy.n_samples,
                settings.temperature,
                settings.max_output_tokens,
            )
            .map_err(|source| ClassifierError::Backend {
                case_id: case.case_id.clone(),
                sentence_id: sentence.id,
                source,
            })?;
        let parsed: Vec<Option<RelevanceLabel>> = samples.iter().map(|s| parse_label(s)).collect();
        let votes = tally(&parsed);
        let label = apply_threshold(&votes, &settings.policy)?;
        labels.insert(sentence.id, label);
        audit.push(SentenceAudit {
            case_id: case.case_id.clone(),
            sentence_id: sentence.id,
            samples,
            tally: votes,
            label,
        });
    }
    Ok(CaseClassification { labels, audit })
}

pub fn write_audit<W: Write>(records: &[SentenceAudit], mut sink: W) -> std::io::Result<()> {
    for rec in records {
        writeln!(sink, "{}", serde_json::to_string(rec).expect("audit serializes"))?;
    }
    Ok(())
}

pub fn read_audit<R: BufRead>(reader: R) -> Result<Vec<SentenceAudit>, ClassifierError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SentenceAudit = serde_json::from_str(&line).map_err(|e| ClassifierError::Audit {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}
