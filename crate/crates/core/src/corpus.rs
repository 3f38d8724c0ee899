//! Case data model and the line-delimited cases / labels files.
//!
//! A cases file holds one JSON object per line:
//!
//! ```text
//! {"case_id":"c1","clinician_question":"Why dialysis?","patient_question":null,
//!  "sentences":[{"id":1,"text":"..."},{"id":2,"text":"..."}],
//!  "gold":{"1":"essential","2":"not-relevant"}}
//! ```
//!
//! A labels file holds `{"case_id":"c1","labels":{"1":"essential",...}}` per line.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-case map from sentence id to label.
pub type SentenceLabels = BTreeMap<u32, RelevanceLabel>;

/// Labels for a whole corpus, keyed by case id.
pub type LabelMap = BTreeMap<String, SentenceLabels>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: invalid field `{field}`: {message}")]
    Malformed {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: duplicate case_id `{case_id}`")]
    DuplicateCase { line: usize, case_id: String },
    #[error("line {line}: case `{case_id}`: non-contiguous sentence ids")]
    NonContiguousIds { line: usize, case_id: String },
    #[error("line {line}: case `{case_id}`: gold label for unknown sentence {sentence_id}")]
    UnknownGoldSentence {
        line: usize,
        case_id: String,
        sentence_id: u32,
    },
    #[error("case `{case_id}`: no label for sentence {sentence_id}")]
    MissingLabel { case_id: String, sentence_id: u32 },
    #[error("unknown relevance label `{0}`")]
    UnknownLabel(String),
    #[error("unknown case_id `{0}`")]
    UnknownCase(String),
    #[error("case `{case_id}`: label for unknown sentence {sentence_id}")]
    UnknownSentence { case_id: String, sentence_id: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CorpusError>;

/// The three relevance classes a note sentence can take.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RelevanceLabel {
    Essential,
    Supplementary,
    NotRelevant,
}

impl RelevanceLabel {
    pub const ALL: [RelevanceLabel; 3] = [
        RelevanceLabel::Essential,
        RelevanceLabel::Supplementary,
        RelevanceLabel::NotRelevant,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RelevanceLabel::Essential => "essential",
            RelevanceLabel::Supplementary => "supplementary",
            RelevanceLabel::NotRelevant => "not-relevant",
        }
    }

    /// Essential or supplementary.
    pub fn is_relevant(self) -> bool {
        !matches!(self, RelevanceLabel::NotRelevant)
    }

    /// Rank used for monotonicity checks: essential > supplementary > not-relevant.
    pub fn rank(self) -> u8 {
        match self {
            RelevanceLabel::Essential => 2,
            RelevanceLabel::Supplementary => 1,
            RelevanceLabel::NotRelevant => 0,
        }
    }

    /// Lenient string parsing shared by the label files and the classifier.
    ///
    /// Trims, lowercases, collapses internal whitespace and accepts the
    /// spellings `not relevant` / `not_relevant` for `not-relevant`.
    pub fn normalize(token: &str) -> Option<RelevanceLabel> {
        let collapsed = token.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        match collapsed.as_str() {
            "essential" => Some(RelevanceLabel::Essential),
            "supplementary" => Some(RelevanceLabel::Supplementary),
            "not-relevant" | "not relevant" | "not_relevant" => Some(RelevanceLabel::NotRelevant),
            _ => None,
        }
    }
}

impl fmt::Display for RelevanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RelevanceLabel {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self> {
        RelevanceLabel::normalize(s).ok_or_else(|| CorpusError::UnknownLabel(s.to_string()))
    }
}

impl From<RelevanceLabel> for String {
    fn from(l: RelevanceLabel) -> String {
        l.as_str().to_string()
    }
}

impl TryFrom<String> for RelevanceLabel {
    type Error = CorpusError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteSentence {
    pub id: u32,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub case_id: String,
    pub clinician_question: String,
    pub patient_question: Option<String>,
    /// Sorted by id; ids are exactly `1..=n`.
    pub sentences: Vec<NoteSentence>,
    pub gold_labels: Option<SentenceLabels>,
}

impl CaseRecord {
    pub fn sentence(&self, id: u32) -> Option<&NoteSentence> {
        self.sentences.get((id as usize).checked_sub(1)?)
    }

    pub fn sentence_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.sentences.iter().map(|s| s.id)
    }

    /// All note sentences joined by single spaces.
    pub fn note_text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_line(&self) -> String {
        let raw = RawCase {
            case_id: self.case_id.clone(),
            clinician_question: self.clinician_question.clone(),
            patient_question: self.patient_question.clone(),
            sentences: self.sentences.clone(),
            gold: self.gold_labels.as_ref().map(labels_to_raw),
        };
        serde_json::to_string(&raw).expect("case serializes")
    }
}

#[derive(Serialize, Deserialize)]
struct RawCase {
    case_id: String,
    clinician_question: String,
    #[serde(default)]
    patient_question: Option<String>,
    sentences: Vec<NoteSentence>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gold: Option<BTreeMap<String, String>>,
}

#[derive(Serialize, Deserialize)]
struct RawLabels {
    case_id: String,
    labels: BTreeMap<String, String>,
}

fn labels_to_raw(labels: &SentenceLabels) -> BTreeMap<String, String> {
    labels
        .iter()
        .map(|(id, l)| (id.to_string(), l.as_str().to_string()))
        .collect()
}

fn malformed(line: usize, field: &str, message: impl Into<String>) -> CorpusError {
    CorpusError::Malformed {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

/// Reads every case from a cases stream, in file order.
///
/// Blank lines are skipped. Line numbers in errors are 1-based.
pub fn parse_cases<R: BufRead>(reader: R) -> Result<Vec<CaseRecord>> {
    let mut cases = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let case = parse_case_line(&line, line_no)?;
        if !seen.insert(case.case_id.clone()) {
            return Err(CorpusError::DuplicateCase {
                line: line_no,
                case_id: case.case_id,
            });
        }
        cases.push(case);
    }
    Ok(cases)
}

fn parse_case_line(line: &str, line_no: usize) -> Result<CaseRecord> {
    let raw: RawCase = serde_json::from_str(line).map_err(|e| {
        let msg = e.to_string();
        // serde reports the offending field as "missing field `x`" or "unknown ... `x`"
        let field = msg.split('`').nth(1).unwrap_or("record").to_string();
        malformed(line_no, &field, msg)
    })?;

    if raw.case_id.trim().is_empty() {
        return Err(malformed(line_no, "case_id", "must be non-empty"));
    }
    if raw.clinician_question.trim().is_empty() {
        return Err(malformed(line_no, "clinician_question", "must be non-empty"));
    }
    if raw.sentences.is_empty() {
        return Err(malformed(line_no, "sentences", "must be non-empty"));
    }
    for s in &raw.sentences {
        if s.text.trim().is_empty() {
            return Err(malformed(
                line_no,
                "sentences.text",
                format!("sentence {} is empty", s.id),
            ));
        }
        if s.text.contains('|') {
            return Err(malformed(
                line_no,
                "sentences.text",
                format!("sentence {} contains a pipe character", s.id),
            ));
        }
    }

    let mut sentences = raw.sentences;
    sentences.sort_by_key(|s| s.id);
    let contiguous = sentences.iter().enumerate().all(|(i, s)| s.id as usize == i + 1);
    if !contiguous {
        return Err(CorpusError::NonContiguousIds {
            line: line_no,
            case_id: raw.case_id,
        });
    }

    let gold_labels = match raw.gold {
        None => None,
        Some(gold) => {
            let mut labels = SentenceLabels::new();
            for (key, value) in gold {
                let id: u32 = key
                    .trim()
                    .parse()
                    .map_err(|_| malformed(line_no, "gold", format!("`{key}` is not a sentence id")))?;
                if id == 0 || id as usize > sentences.len() {
                    return Err(CorpusError::UnknownGoldSentence {
                        line: line_no,
                        case_id: raw.case_id,
                        sentence_id: id,
                    });
                }
                let label = RelevanceLabel::normalize(&value)
                    .ok_or_else(|| malformed(line_no, "gold", format!("unknown relevance label `{value}`")))?;
                labels.insert(id, label);
            }
            if labels.len() != sentences.len() {
                let missing = (1..=sentences.len() as u32)
                    .find(|id| !labels.contains_key(id))
                    .unwrap_or(0);
                return Err(malformed(
                    line_no,
                    "gold",
                    format!("no gold label for sentence {missing}"),
                ));
            }
            Some(labels)
        }
    };

    Ok(CaseRecord {
        case_id: raw.case_id,
        clinician_question: raw.clinician_question,
        patient_question: raw.patient_question,
        sentences,
        gold_labels,
    })
}

/// Writes one labels line per labeled case, in `cases` order.
pub fn write_labels<W: Write>(cases: &[CaseRecord], labels: &LabelMap, mut sink: W) -> Result<()> {
    for case_id in labels.keys() {
        if !cases.iter().any(|c| &c.case_id == case_id) {
            return Err(CorpusError::UnknownCase(case_id.clone()));
        }
    }
    for case in cases {
        let Some(case_labels) = labels.get(&case.case_id) else {
            continue;
        };
        if let Some(&sentence_id) = case_labels.keys().find(|id| case.sentence(**id).is_none()) {
            return Err(CorpusError::UnknownSentence {
                case_id: case.case_id.clone(),
                sentence_id,
            });
        }
        let raw = RawLabels {
            case_id: case.case_id.clone(),
            labels: labels_to_raw(case_labels),
        };
        let line = serde_json::to_string(&raw).expect("labels serialize");
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

pub fn parse_labels<R: BufRead>(reader: R) -> Result<LabelMap> {
    let mut out = LabelMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLabels = serde_json::from_str(&line).map_err(|e| malformed(line_no, "labels", e.to_string()))?;
        let mut case_labels = SentenceLabels::new();
        for (key, value) in raw.labels {
            let id: u32 = key
                .trim()
                .parse()
                .map_err(|_| malformed(line_no, "labels", format!("`{key}` is not a sentence id")))?;
            case_labels.insert(id, value.parse()?);
        }
        if out.insert(raw.case_id.clone(), case_labels).is_some() {
            return Err(CorpusError::DuplicateCase {
                line: line_no,
                case_id: raw.case_id,
            });
        }
    }
    Ok(out)
}

/// Checks that `labels` assigns exactly one label to every sentence of `case`.
pub fn check_coverage(case: &CaseRecord, labels: &SentenceLabels) -> Result<()> {
    for id in case.sentence_ids() {
        if !labels.contains_key(&id) {
            return Err(CorpusError::MissingLabel {
                case_id: case.case_id.clone(),
                sentence_id: id,
            });
        }
    }
    if let Some(&sentence_id) = labels.keys().find(|id| case.sentence(**id).is_none()) {
        return Err(CorpusError::UnknownSentence {
            case_id: case.case_id.clone(),
            sentence_id,
        });
    }
    Ok(())
}
