//! Citation grammar for answer text.
//!
//! An answer is one sentence per line. Every line ends with a single citation
//! group of comma-separated sentence ids inside a pair of pipes, optionally
//! followed by terminal punctuation:
//!
//! ```text
//! The company launched a new product in April, and sales exceeded expectations in the first month |1,2|.
//! Customer feedback highlighted technical issues |3,4|.
//! ```
//!
//! Ranges (`|7-10|`), duplicate ids and empty groups are rejected. Terminal
//! punctuation after the group belongs to the sentence text, and [`emit_answer`]
//! places the group back in front of it, so parse and emit are inverse for
//! canonical text.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const TERMINAL_PUNCT: &[char] = &['.', '!', '?'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CitationError {
    #[error("empty answer")]
    EmptyAnswer,
    #[error("line {line}: sentence does not end with a citation group")]
    MissingCitation { line: usize },
    #[error("line {line}: citation ranges are not allowed (`{token}`)")]
    RangeForbidden { line: usize, token: String },
    #[error("line {line}: duplicate citation id {id}")]
    Duplicate { line: usize, id: u32 },
    #[error("line {line}: invalid citation syntax: {detail}")]
    Syntax { line: usize, detail: String },
    #[error("citation set must be non-empty")]
    EmptyCitationSet,
    #[error("sentence text must not contain `|`")]
    PipeInText,
}

pub type Result<T> = std::result::Result<T, CitationError>;

/// Ordered, duplicate-free, non-empty list of positive sentence ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CitationSet(Vec<u32>);

impl CitationSet {
    pub fn new(ids: Vec<u32>) -> Result<Self> {
        if ids.is_empty() {
            return Err(CitationError::EmptyCitationSet);
        }
        let mut seen = BTreeSet::new();
        for &id in &ids {
            if id == 0 {
                return Err(CitationError::Syntax {
                    line: 0,
                    detail: "citation ids are 1-based".into(),
                });
            }
            if !seen.insert(id) {
                return Err(CitationError::Duplicate { line: 0, id });
            }
        }
        Ok(Self(ids))
    }

    pub fn single(id: u32) -> Self {
        assert!(id > 0, "citation ids are 1-based");
        Self(vec![id])
    }

    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn contains(&self, id: u32) -> bool {
        self.0.contains(&id)
    }

    /// Appends ids not already present, keeping the existing order.
    pub fn extend(&mut self, ids: impl IntoIterator<Item = u32>) {
        for id in ids {
            if id > 0 && !self.0.contains(&id) {
                self.0.push(id);
            }
        }
    }

    /// Keeps only ids satisfying `keep`; `None` when nothing is left.
    pub fn retain(&self, keep: impl Fn(u32) -> bool) -> Option<Self> {
        let ids: Vec<u32> = self.0.iter().copied().filter(|&id| keep(id)).collect();
        (!ids.is_empty()).then_some(Self(ids))
    }
}

impl fmt::Display for CitationSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("|")?;
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{id}")?;
        }
        f.write_str("|")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSentence {
    pub text: String,
    pub citations: CitationSet,
}

impl AnswerSentence {
    pub fn new(text: impl Into<String>, citations: CitationSet) -> Result<Self> {
        let text = text.into();
        if text.contains('|') {
            return Err(CitationError::PipeInText);
        }
        Ok(Self { text, citations })
    }

    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }

    /// `text |ids|` with the group placed before any terminal punctuation.
    pub fn render(&self) -> String {
        render_cited(&self.text, &self.citations)
    }
}

/// A generated response: non-empty list of cited sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    sentences: Vec<AnswerSentence>,
}

impl Answer {
    pub fn new(sentences: Vec<AnswerSentence>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(CitationError::EmptyAnswer);
        }
        Ok(Self { sentences })
    }

    pub fn sentences(&self) -> &[AnswerSentence] {
        &self.sentences
    }

    pub fn sentences_mut(&mut self) -> &mut [AnswerSentence] {
        &mut self.sentences
    }

    pub fn into_sentences(self) -> Vec<AnswerSentence> {
        self.sentences
    }

    /// Sentence texts joined with single spaces, citations excluded.
    pub fn plain_text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&emit_answer(self))
    }
}

/// Renders `text` with a citation group, keeping terminal punctuation last.
pub fn render_cited(text: &str, citations: &CitationSet) -> String {
    let head = text.trim_end_matches(TERMINAL_PUNCT);
    let punct = &text[head.len()..];
    let head = head.trim_end();
    if head.is_empty() {
        format!("{citations}{punct}")
    } else {
        format!("{head} {citations}{punct}")
    }
}

pub fn parse_answer(raw: &str) -> Result<Answer> {
    let mut sentences = Vec::new();
    for (idx, line) in raw.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        sentences.push(parse_line(line, idx + 1)?);
    }
    Answer::new(sentences)
}

fn parse_line(line: &str, line_no: usize) -> Result<AnswerSentence> {
    let body = line.trim_end_matches(TERMINAL_PUNCT);
    let punct = &line[body.len()..];
    let body = body.trim_end();
    let Some(before_close) = body.strip_suffix('|') else {
        return Err(CitationError::MissingCitation { line: line_no });
    };
    let Some(open) = before_close.rfind('|') else {
        return Err(CitationError::Syntax {
            line: line_no,
            detail: "unbalanced pipe".into(),
        });
    };
    let group = &before_close[open + 1..];
    let head = before_close[..open].trim_end();
    if head.contains('|') {
        return Err(CitationError::Syntax {
            line: line_no,
            detail: "citation group before the end of the sentence".into(),
        });
    }

    let mut ids = Vec::new();
    for token in group.split(',') {
        let token = token.trim();
        if let Some((a, b)) = token.split_once('-') {
            if a.trim().parse::<u32>().is_ok() && b.trim().parse::<u32>().is_ok() {
                return Err(CitationError::RangeForbidden {
                    line: line_no,
                    token: token.to_string(),
                });
            }
        }
        let id: u32 = token.parse().map_err(|_| CitationError::Syntax {
            line: line_no,
            detail: format!("`{token}` is not a sentence id"),
        })?;
        if id == 0 {
            return Err(CitationError::Syntax {
                line: line_no,
                detail: "citation ids are 1-based".into(),
            });
        }
        if ids.contains(&id) {
            return Err(CitationError::Duplicate { line: line_no, id });
        }
        ids.push(id);
    }

    Ok(AnswerSentence {
        text: format!("{head}{punct}"),
        citations: CitationSet(ids),
    })
}

/// One sentence per line, each carrying its citation group.
pub fn emit_answer(answer: &Answer) -> String {
    answer
        .sentences
        .iter()
        .map(AnswerSentence::render)
        .collect::<Vec<_>>()
        .join("\n")
}

/// Whitespace-delimited words across all sentence texts; citations never count.
pub fn word_count(answer: &Answer) -> usize {
    answer.sentences.iter().map(AnswerSentence::word_count).sum()
}

/// Keeps the first `limit` words in reading order.
///
/// A partially kept sentence keeps its whole citation set; sentences after the
/// cut are dropped along with their citations. Answers already within the
/// limit are returned unchanged.
pub fn truncate_to_limit(answer: &Answer, limit: usize) -> Answer {
    assert!(limit >= 1, "word limit must be at least 1");
    if word_count(answer) <= limit {
        return answer.clone();
    }
    let mut remaining = limit;
    let mut kept = Vec::new();
    for sentence in &answer.sentences {
        if remaining == 0 {
            break;
        }
        let n = sentence.word_count();
        if n <= remaining {
            remaining -= n;
            kept.push(sentence.clone());
        } else {
            let text = sentence
                .text
                .split_whitespace()
                .take(remaining)
                .collect::<Vec<_>>()
                .join(" ");
            remaining = 0;
            kept.push(AnswerSentence {
                text,
                citations: sentence.citations.clone(),
            });
        }
    }
    Answer { sentences: kept }
}

pub fn collect_cited_ids(answer: &Answer) -> BTreeSet<u32> {
    answer
        .sentences
        .iter()
        .flat_map(|s| s.citations.ids().iter().copied())
        .collect()
}

/// One line of the answers file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub case_id: String,
    pub answer: String,
}

/// Reads `case_id -> raw answer text`. Answer text is not parsed here so that
/// the evaluator can score malformed answers case by case.
pub fn read_answers<R: BufRead>(reader: R) -> std::io::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnswerRecord = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("answers line {}: {e}", idx + 1),
            )
        })?;
        out.insert(rec.case_id, rec.answer);
    }
    Ok(out)
}

pub fn write_answer_record<W: Write>(sink: &mut W, case_id: &str, answer: &Answer) -> std::io::Result<()> {
    let rec = AnswerRecord {
        case_id: case_id.to_string(),
        answer: emit_answer(answer),
    };
    writeln!(sink, "{}", serde_json::to_string(&rec).expect("record serializes"))
}
