//! Answer composition from classified sentences.
//!
//! Selected sentences are used verbatim when they fit the word limit and are
//! summarized by the generation backend otherwise. Summaries are parsed and
//! their citations repaired against the selection. An empty selection yields
//! the `No citations found` placeholder with a random citation in 1..=10.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::citations::{self, Answer, AnswerSentence, CitationSet};
use crate::corpus::{CaseRecord, RelevanceLabel, SentenceLabels};
use crate::gateway::{Gateway, GatewayError, GenerationRequest};
use crate::prompts;
use crate::seed::derive_rng;

pub const FALLBACK_TEXT: &str = "No citations found";

#[derive(Debug, Error)]
pub enum AnswerError {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("case `{case_id}`: {source}")]
    Backend {
        case_id: String,
        #[source]
        source: GatewayError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// Essential sentences only.
    Strict,
    /// Essential and supplementary sentences.
    Lenient,
}

impl SelectionMode {
    pub fn admits(self, label: RelevanceLabel) -> bool {
        match self {
            SelectionMode::Strict => label == RelevanceLabel::Essential,
            SelectionMode::Lenient => label.is_relevant(),
        }
    }
}

impl std::str::FromStr for SelectionMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "strict" => Ok(SelectionMode::Strict),
            "lenient" => Ok(SelectionMode::Lenient),
            other => Err(format!("unknown selection mode `{other}`")),
        }
    }
}

/// When the placeholder answer is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackTrigger {
    /// The active mode selected nothing.
    EmptySelection,
    /// No sentence was labeled essential, whatever the mode.
    NoEssential,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectedSentence {
    pub id: u32,
    pub text: String,
}

/// Selected sentences in note order (ascending ids).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SelectedSet(Vec<SelectedSentence>);

impl SelectedSet {
    pub fn new(mut sentences: Vec<SelectedSentence>) -> Self {
        sentences.sort_by_key(|s| s.id);
        sentences.dedup_by_key(|s| s.id);
        Self(sentences)
    }

    pub fn sentences(&self) -> &[SelectedSentence] {
        &self.0
    }

    pub fn ids(&self) -> BTreeSet<u32> {
        self.0.iter().map(|s| s.id).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn word_count(&self) -> usize {
        self.0.iter().map(|s| s.text.split_whitespace().count()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationSettings {
    pub mode: SelectionMode,
    pub word_limit: usize,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Extra summarizer attempts after an unparseable output.
    pub summarize_retries: u32,
    /// Drop citations of sentences outside the selection.
    pub remove_hallucinated: bool,
    pub fallback_trigger: FallbackTrigger,
}

impl Default for GenerationSettings {
    fn default() -> Self {
        Self {
            mode: SelectionMode::Lenient,
            word_limit: 75,
            temperature: 0.0,
            max_output_tokens: 256,
            summarize_retries: 2,
            remove_hallucinated: true,
            fallback_trigger: FallbackTrigger::EmptySelection,
        }
    }
}

/// Which path produced an answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Fallback,
    Direct,
    Summarized,
    /// The summarizer never produced parseable output.
    GreedyPrefix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedAnswer {
    pub answer: Answer,
    pub branch: Branch,
}

pub fn select_sentences(labels: &SentenceLabels, case: &CaseRecord, mode: SelectionMode) -> SelectedSet {
    SelectedSet::new(
        case.sentences
            .iter()
            .filter(|s| labels.get(&s.id).is_some_and(|&l| mode.admits(l)))
            .map(|s| SelectedSentence {
                id: s.id,
                text: s.text.clone(),
            })
            .collect(),
    )
}

fn direct_unchecked(sel: &SelectedSet) -> Answer {
    let sentences = sel
        .0
        .iter()
        .map(|s| AnswerSentence {
            text: s.text.clone(),
            citations: CitationSet::single(s.id),
        })
        .collect();
    Answer::new(sentences).expect("selection is non-empty")
}

/// One answer sentence per selected sentence, verbatim, citing itself.
pub fn compose_direct(sel: &SelectedSet, word_limit: usize) -> Result<Answer, AnswerError> {
    if sel.is_empty() {
        return Err(AnswerError::Contract(
            "cannot compose an answer from an empty selection".into(),
        ));
    }
    let words = sel.word_count();
    if words > word_limit {
        return Err(AnswerError::Contract(format!(
            "selection has {words} words, over the {word_limit}-word limit; summarize instead"
        )));
    }
    Ok(direct_unchecked(sel))
}

/// `(system_prompt, user_prompt)` for summarization: one `text |id|` line per
/// selected sentence.
pub fn build_summary_prompt(sel: &SelectedSet) -> (String, String) {
    let user = sel
        .0
        .iter()
        .map(|s| citations::render_cited(&s.text, &CitationSet::single(s.id)))
        .collect::<Vec<_>>()
        .join("\n");
    (prompts::summary_system().to_string(), user)
}

/// Aligns a parsed summary's citations with the selection.
///
/// Selected ids the summary never cites are appended, ascending, to the final
/// sentence. With `remove_hallucinated`, ids outside the selection are dropped;
/// a sentence left without citations is merged into the next sentence (or the
/// previous one when it is last).
pub fn repair_citations(parsed: &Answer, sel: &SelectedSet, remove_hallucinated: bool) -> Answer {
    let selected = sel.ids();
    let mut sentences: Vec<AnswerSentence> = Vec::new();
    if remove_hallucinated {
        let mut pending: Vec<String> = Vec::new();
        for s in parsed.sentences() {
            match s.citations.retain(|id| selected.contains(&id)) {
                None => pending.push(s.text.clone()),
                Some(kept) => {
                    pending.push(s.text.clone());
                    sentences.push(AnswerSentence {
                        text: join_texts(&pending),
                        citations: kept,
                    });
                    pending.clear();
                }
            }
        }
        if !pending.is_empty() {
            match sentences.last_mut() {
                Some(last) => {
                    let mut texts = vec![last.text.clone()];
                    texts.extend(pending);
                    last.text = join_texts(&texts);
                }
                None => match selected.iter().next() {
                    Some(&first) => sentences.push(AnswerSentence {
                        text: join_texts(&pending),
                        citations: CitationSet::single(first),
                    }),
                    // nothing selected and nothing valid cited: leave as is
                    None => return parsed.clone(),
                },
            }
        }
    } else {
        sentences = parsed.sentences().to_vec();
    }

    let mut answer = Answer::new(sentences).expect("repair keeps at least one sentence");
    let cited = citations::collect_cited_ids(&answer);
    let missing: Vec<u32> = selected.difference(&cited).copied().collect();
    if let Some(last) = answer.sentences_mut().last_mut() {
        last.citations.extend(missing);
    }
    answer
}

fn join_texts(texts: &[String]) -> String {
    texts
        .iter()
        .map(|t| t.trim())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// `No citations found |k|` with `k` uniform in 1..=10.
pub fn fallback_answer<R: Rng + ?Sized>(rng: &mut R) -> Answer {
    let k = rng.random_range(1..=10u32);
    Answer::new(vec![AnswerSentence {
        text: FALLBACK_TEXT.to_string(),
        citations: CitationSet::single(k),
    }])
    .expect("one sentence")
}

fn greedy_prefix(sel: &SelectedSet, word_limit: usize) -> Answer {
    let mut budget = word_limit;
    let mut prefix = Vec::new();
    for s in sel.sentences() {
        let n = s.text.split_whitespace().count();
        if !prefix.is_empty() && n > budget {
            break;
        }
        budget = budget.saturating_sub(n);
        prefix.push(s.clone());
    }
    let mut answer = direct_unchecked(&SelectedSet(prefix));
    let rest: Vec<u32> = sel
        .ids()
        .difference(&citations::collect_cited_ids(&answer))
        .copied()
        .collect();
    if let Some(last) = answer.sentences_mut().last_mut() {
        last.citations.extend(rest);
    }
    answer
}

/// Builds the answer for one case. The fallback citation is drawn from a
/// stream seeded by `(seed, case_id)`.
pub fn generate_answer(
    case: &CaseRecord,
    labels: &SentenceLabels,
    settings: &GenerationSettings,
    gateway: &Gateway,
    seed: u64,
) -> Result<GeneratedAnswer, AnswerError> {
    if settings.word_limit == 0 {
        return Err(AnswerError::Contract("word limit must be at least 1".into()));
    }
    crate::corpus::check_coverage(case, labels).map_err(|e| AnswerError::Contract(e.to_string()))?;

    let sel = select_sentences(labels, case, settings.mode);
    let no_essential = !labels.values().any(|&l| l == RelevanceLabel::Essential);
    let fallback = match settings.fallback_trigger {
        FallbackTrigger::EmptySelection => sel.is_empty(),
        FallbackTrigger::NoEssential => sel.is_empty() || no_essential,
    };
    if fallback {
        let mut rng = derive_rng(seed, &["fallback", &case.case_id]);
        return Ok(GeneratedAnswer {
            answer: fallback_answer(&mut rng),
            branch: Branch::Fallback,
        });
    }

    if sel.word_count() <= settings.word_limit {
        return Ok(GeneratedAnswer {
            answer: compose_direct(&sel, settings.word_limit)?,
            branch: Branch::Direct,
        });
    }

    let (system_prompt, user_prompt) = build_summary_prompt(&sel);
    for attempt in 0..=settings.summarize_retries {
        let request = GenerationRequest {
            system_prompt: system_prompt.clone(),
            user_prompt: user_prompt.clone(),
            temperature: settings.temperature,
            max_output_tokens: settings.max_output_tokens,
            sample_index: attempt,
        };
        let raw = gateway.complete(&request).map_err(|source| AnswerError::Backend {
            case_id: case.case_id.clone(),
            source,
        })?;
        match citations::parse_answer(&raw) {
            Ok(parsed) => {
                return Ok(GeneratedAnswer {
                    answer: repair_citations(&parsed, &sel, settings.remove_hallucinated),
                    branch: Branch::Summarized,
                })
            }
            Err(e) => log::warn!("case {}: summarizer attempt {attempt} unparseable: {e}", case.case_id),
        }
    }
    Ok(GeneratedAnswer {
        answer: greedy_prefix(&sel, settings.word_limit),
        branch: Branch::GreedyPrefix,
    })
}
