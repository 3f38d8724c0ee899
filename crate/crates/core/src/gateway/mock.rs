//! Deterministic backends for tests and offline runs.
//!
//! * [`ScriptedBackend`] answers from a rule table. A rule matches when its
//!   `contains` string occurs in the request's target block (the last
//!   blank-line separated paragraph of the user prompt); the response is
//!   `responses[sample_index % len]`.
//! * [`NoisyOracleBackend`] answers classification prompts from gold labels,
//!   corrupted through a per-class confusion matrix, and answers summarization
//!   prompts extractively. Randomness is derived from the seed, the prompt
//!   target and the sample index only, so outputs are identical across runs and
//!   thread schedules.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Backend, GatewayError, GenerationRequest, Result};
use crate::citations::{self, Answer};
use crate::corpus::{CaseRecord, RelevanceLabel};
use crate::prompts::{prompt_kind, target_block, PromptKind};
use crate::seed::{derive_rng, sha256_hex};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    /// Substring of the target block; empty matches everything.
    #[serde(default)]
    pub contains: String,
    /// Restricts the rule to classification or summarization prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ScriptKind>,
    pub responses: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScriptKind {
    Classify,
    Summarize,
}

impl ScriptRule {
    pub fn new(contains: impl Into<String>, responses: Vec<String>) -> Self {
        Self {
            contains: contains.into(),
            kind: None,
            responses,
        }
    }

    pub fn for_kind(mut self, kind: ScriptKind) -> Self {
        self.kind = Some(kind);
        self
    }
}

/// Row-stochastic 3x3 matrix: `rows[gold][emitted]`, classes ordered
/// essential, supplementary, not-relevant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRates {
    pub rows: [[f64; 3]; 3],
}

impl ConfusionRates {
    pub fn identity() -> Self {
        Self::flip(0.0)
    }

    /// Keeps the gold label with probability `1 - rate`, otherwise emits one of
    /// the two other labels uniformly.
    pub fn flip(rate: f64) -> Self {
        let mut rows = [[rate / 2.0; 3]; 3];
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = 1.0 - rate;
        }
        Self { rows }
    }

    pub fn validate(&self) -> Result<()> {
        for row in &self.rows {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(GatewayError::Mock("confusion rates must lie in [0, 1]".into()));
            }
            if (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(GatewayError::Mock("confusion rows must sum to 1".into()));
            }
        }
        Ok(())
    }

    fn draw(&self, gold: RelevanceLabel, u: f64) -> RelevanceLabel {
        let row = &self.rows[class_index(gold)];
        let mut acc = 0.0;
        for (i, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return RelevanceLabel::ALL[i];
            }
        }
        // u fell into rounding slack at the top of the row
        RelevanceLabel::ALL[row.iter().rposition(|&p| p > 0.0).unwrap_or(0)]
    }
}

fn class_index(label: RelevanceLabel) -> usize {
    RelevanceLabel::ALL
        .iter()
        .position(|&l| l == label)
        .expect("known label")
}

/// Serializable mock configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MockScript {
    Scripted {
        rules: Vec<ScriptRule>,
        /// Used when no rule matches.
        #[serde(default)]
        default: Vec<String>,
    },
    NoisyOracle {
        rates: ConfusionRates,
        seed: u64,
    },
}

impl MockScript {
    /// Builds the backend. The noisy oracle reads gold labels from `cases`.
    pub fn into_backend(self, cases: &[CaseRecord]) -> Result<Arc<dyn Backend>> {
        Ok(match self {
            MockScript::Scripted { rules, default } => Arc::new(ScriptedBackend::new(rules).with_default(default)),
            MockScript::NoisyOracle { rates, seed } => Arc::new(NoisyOracleBackend::new(cases, rates, seed)?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    default: Vec<String>,
    name: String,
}

/// Model name carrying a digest of the mock's behaviour, so cached responses
/// from a differently configured mock are never reused.
fn mock_name(prefix: &str, content: &impl Serialize) -> String {
    let json = serde_json::to_string(content).expect("mock settings serialize");
    format!("{prefix}-{}", &sha256_hex(json.as_bytes())[..12])
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptRule>) -> Self {
        Self {
            name: mock_name("mock-scripted", &(&rules, &Vec::<String>::new())),
            rules,
            default: Vec::new(),
        }
    }

    pub fn with_default(mut self, default: Vec<String>) -> Self {
        self.name = mock_name("mock-scripted", &(&self.rules, &default));
        self.default = default;
        self
    }

    /// Loads a `{"rules": [...], "default": [...]}` document.
    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            rules: Vec<ScriptRule>,
            #[serde(default)]
            default: Vec<String>,
        }
        let doc: Doc = serde_json::from_str(text).map_err(|e| GatewayError::Mock(e.to_string()))?;
        Ok(Self::new(doc.rules).with_default(doc.default))
    }
}

impl Backend for ScriptedBackend {
    fn model_name(&self) -> &str {
        &self.name
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        let target = target_block(&request.user_prompt);
        let kind = match prompt_kind(&request.system_prompt) {
            PromptKind::Classify => Some(ScriptKind::Classify),
            PromptKind::Summarize => Some(ScriptKind::Summarize),
            PromptKind::Other => None,
        };
        let responses = self
            .rules
            .iter()
            .find(|r| r.kind.is_none_or(|k| Some(k) == kind) && target.contains(&r.contains))
            .map(|r| &r.responses)
            .unwrap_or(&self.default);
        if responses.is_empty() {
            return Err(GatewayError::Mock(format!("no scripted response for `{target}`")));
        }
        Ok(responses[request.sample_index as usize % responses.len()].clone())
    }
}

pub struct NoisyOracleBackend {
    gold: HashMap<(String, String), RelevanceLabel>,
    rates: ConfusionRates,
    seed: u64,
    word_limit: usize,
    name: String,
}

impl NoisyOracleBackend {
    pub fn new(cases: &[CaseRecord], rates: ConfusionRates, seed: u64) -> Result<Self> {
        rates.validate()?;
        let mut gold = HashMap::new();
        for case in cases {
            let Some(labels) = &case.gold_labels else {
                continue;
            };
            for s in &case.sentences {
                gold.entry((case.clinician_question.clone(), s.text.clone()))
                    .or_insert(labels[&s.id]);
            }
        }
        Ok(Self {
            gold,
            name: mock_name("mock-noisy-oracle", &(&rates, seed, 75)),
            rates,
            seed,
            word_limit: 75,
        })
    }

    /// Word budget used when answering summarization prompts.
    pub fn with_word_limit(mut self, limit: usize) -> Self {
        self.word_limit = limit.max(1);
        self.name = mock_name("mock-noisy-oracle", &(&self.rates, self.seed, self.word_limit));
        self
    }

    fn classify(&self, request: &GenerationRequest) -> Result<String> {
        let target = target_block(&request.user_prompt);
        let field = |name: &str| {
            target
                .lines()
                .find_map(|l| l.strip_prefix(name))
                .map(|v| v.trim().to_string())
        };
        let (Some(question), Some(context)) = (field("Question:"), field("Context:")) else {
            return Err(GatewayError::Mock(
                "classification prompt without Question/Context".into(),
            ));
        };
        let gold = *self
            .gold
            .get(&(question.clone(), context.clone()))
            .ok_or_else(|| GatewayError::Mock(format!("no gold label for context `{context}`")))?;
        let mut rng = derive_rng(self.seed, &[&question, &context, &request.sample_index.to_string()]);
        let u: f64 = rng.random();
        Ok(self.rates.draw(gold, u).as_str().to_string())
    }

    /// Keeps the leading words of the input, moving citations of dropped
    /// sentences onto the last kept sentence.
    fn summarize(&self, request: &GenerationRequest) -> Result<String> {
        let input = citations::parse_answer(target_block(&request.user_prompt))
            .map_err(|e| GatewayError::Mock(format!("summarization input: {e}")))?;
        let all = citations::collect_cited_ids(&input);
        let kept = citations::truncate_to_limit(&input, self.word_limit);
        let missing: Vec<u32> = all.difference(&citations::collect_cited_ids(&kept)).copied().collect();
        let mut sentences = kept.into_sentences();
        if let Some(last) = sentences.last_mut() {
            last.citations.extend(missing);
        }
        let answer = Answer::new(sentences).map_err(|e| GatewayError::Mock(e.to_string()))?;
        Ok(citations::emit_answer(&answer))
    }
}

impl Backend for NoisyOracleBackend {
    fn model_name(&self) -> &str {
        &self.name
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String> {
        match prompt_kind(&request.system_prompt) {
            PromptKind::Summarize => self.summarize(request),
            _ => self.classify(request),
        }
    }
}
