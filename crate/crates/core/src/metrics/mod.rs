//! Scoring of answers: citation P/R/F1, lexical relevance and the overall
//! score (mean of factuality and relevance).
//!
//! [`score_corpus`] mirrors the order a task scorer applies: parse the
//! citations, truncate to the word limit, then score.

mod classification;
mod lexical;

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use classification::{
    case_counts, citation_metrics, confusion, gold_positive, prf, scores_from_counts, CaseCitationCounts,
    CitationScores, ConfusionCounts, Prf,
};
pub use lexical::{bleu, bleu_tokens, rouge_l, rouge_l_tokens, sari, tokenize};

use crate::citations::{self, Answer};
use crate::corpus::CaseRecord;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("id {0} is outside the universe")]
    OutsideUniverse(u32),
    #[error("no gold labels for case `{0}`")]
    MissingGold(String),
    #[error("no reference answer for case `{0}`")]
    MissingReference(String),
    #[error("SARI needs at least one reference")]
    NoReferences,
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which citation F1 stands in for factuality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactualitySource {
    StrictMicro,
    StrictMacro,
    LenientMicro,
    LenientMacro,
}

impl FactualitySource {
    pub fn pick(self, s: &CitationScores) -> f64 {
        match self {
            FactualitySource::StrictMicro => s.strict_micro.f1,
            FactualitySource::StrictMacro => s.strict_macro.f1,
            FactualitySource::LenientMicro => s.lenient_micro.f1,
            FactualitySource::LenientMacro => s.lenient_macro.f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AggregateConfig {
    pub factuality: FactualitySource,
    /// Metric names averaged into relevance: `rouge_l`, `bleu`, `sari`, or
    /// the name of an external metric.
    pub relevance_metrics: Vec<String>,
}

impl Default for AggregateConfig {
    fn default() -> Self {
        Self {
            factuality: FactualitySource::LenientMicro,
            relevance_metrics: vec!["rouge_l".into(), "bleu".into(), "sari".into()],
        }
    }
}

/// Mean of factuality and relevance.
pub fn overall(factuality: f64, relevance: f64) -> f64 {
    (factuality + relevance) / 2.0
}

/// Unweighted mean; zero for an empty set.
pub fn relevance(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub strict_micro: Prf,
    pub strict_macro: Prf,
    pub lenient_micro: Prf,
    pub lenient_macro: Prf,
    pub rouge_l: f64,
    pub bleu: f64,
    /// On a 0..1 scale.
    pub sari: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub external: BTreeMap<String, f64>,
    pub factuality: f64,
    pub relevance: f64,
    pub overall: f64,
}

impl EvaluationReport {
    /// Copy with every score rounded to 4 decimals, for rendering.
    pub fn rounded(&self) -> Self {
        let r = |p: Prf| Prf {
            precision: round4(p.precision),
            recall: round4(p.recall),
            f1: round4(p.f1),
        };
        Self {
            strict_micro: r(self.strict_micro),
            strict_macro: r(self.strict_macro),
            lenient_micro: r(self.lenient_micro),
            lenient_macro: r(self.lenient_macro),
            rouge_l: round4(self.rouge_l),
            bleu: round4(self.bleu),
            sari: round4(self.sari),
            external: self.external.iter().map(|(k, v)| (k.clone(), round4(*v))).collect(),
            factuality: round4(self.factuality),
            relevance: round4(self.relevance),
            overall: round4(self.overall),
        }
    }
}

pub fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Corpus-level lexical scores keyed by metric name.
pub fn aggregate(
    citation: &CitationScores,
    lexical: &BTreeMap<String, f64>,
    config: &AggregateConfig,
) -> Result<EvaluationReport, MetricsError> {
    let mut parts = Vec::with_capacity(config.relevance_metrics.len());
    for name in &config.relevance_metrics {
        parts.push(
            *lexical
                .get(name)
                .ok_or_else(|| MetricsError::UnknownMetric(name.clone()))?,
        );
    }
    let factuality = config.factuality.pick(citation);
    let relevance = relevance(&parts);
    let get = |k: &str| lexical.get(k).copied().unwrap_or(0.0);
    Ok(EvaluationReport {
        strict_micro: citation.strict_micro,
        strict_macro: citation.strict_macro,
        lenient_micro: citation.lenient_micro,
        lenient_macro: citation.lenient_macro,
        rouge_l: get("rouge_l"),
        bleu: get("bleu"),
        sari: get("sari"),
        external: lexical
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "rouge_l" | "bleu" | "sari"))
            .map(|(k, v)| (k.clone(), *v))
            .collect(),
        factuality,
        relevance,
        overall: overall(factuality, relevance),
    })
}

/// Per-case scores from a model-based metric computed outside this crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetric {
    pub name: String,
    pub scores: BTreeMap<String, f64>,
}

impl ExternalMetric {
    /// Reads `{"case_id": ..., "score": ...}` lines.
    pub fn read<R: BufRead>(name: &str, reader: R) -> Result<Self, MetricsError> {
        #[derive(Deserialize)]
        struct Rec {
            case_id: String,
            score: f64,
        }
        let mut scores = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Rec = serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            scores.insert(rec.case_id, rec.score);
        }
        Ok(Self {
            name: name.to_string(),
            scores,
        })
    }
}

/// Reference answers: `{"case_id": ..., "reference": ...}` per line.
pub fn read_references<R: BufRead>(reader: R) -> Result<BTreeMap<String, String>, MetricsError> {
    #[derive(Deserialize)]
    struct Rec {
        case_id: String,
        reference: String,
    }
    let mut out = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Rec = serde_json::from_str(&line).map_err(|e| MetricsError::Parse {
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.insert(rec.case_id, rec.reference);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case_id: String,
    pub cited: BTreeSet<u32>,
    pub strict: Prf,
    pub lenient: Prf,
    pub rouge_l: f64,
    pub bleu: f64,
    pub sari: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusScores {
    pub report: EvaluationReport,
    pub cases: Vec<CaseScore>,
}

/// Scores raw answer texts for every gold-labeled case.
///
/// Each answer is parsed, truncated to `word_limit` words, and scored. A
/// missing or unparseable answer scores zero for its case and carries a
/// diagnostic; scoring continues.
pub fn score_corpus(
    cases: &[CaseRecord],
    answers: &BTreeMap<String, String>,
    references: &BTreeMap<String, String>,
    external: &[ExternalMetric],
    word_limit: usize,
    config: &AggregateConfig,
) -> Result<CorpusScores, MetricsError> {
    let mut counts = Vec::new();
    let mut per_case = Vec::new();
    for case in cases {
        let Some(gold) = &case.gold_labels else {
            continue;
        };
        let reference = references
            .get(&case.case_id)
            .ok_or_else(|| MetricsError::MissingReference(case.case_id.clone()))?;

        let parsed: Result<Answer, String> = match answers.get(&case.case_id) {
            None => Err("no answer".into()),
            Some(raw) => citations::parse_answer(raw).map_err(|e| format!("unparseable answer: {e}")),
        };
        let score = match parsed {
            Ok(answer) => {
                let kept = citations::truncate_to_limit(&answer, word_limit.max(1));
                let cited = citations::collect_cited_ids(&kept);
                let c = case_counts(&cited, gold);
                counts.push(c);
                let text = kept.plain_text();
                CaseScore {
                    case_id: case.case_id.clone(),
                    cited,
                    strict: prf(&c.strict),
                    lenient: prf(&c.lenient),
                    rouge_l: rouge_l(&text, reference),
                    bleu: bleu(&text, &[reference]),
                    sari: sari(&case.note_text(), &text, &[reference])?,
                    diagnostic: None,
                }
            }
            Err(diagnostic) => {
                log::warn!("case {}: {diagnostic}", case.case_id);
                counts.push(case_counts(&BTreeSet::new(), gold));
                CaseScore {
                    case_id: case.case_id.clone(),
                    cited: BTreeSet::new(),
                    strict: Prf::default(),
                    lenient: Prf::default(),
                    rouge_l: 0.0,
                    bleu: 0.0,
                    sari: 0.0,
                    diagnostic: Some(diagnostic),
                }
            }
        };
        per_case.push(score);
    }

    let n = per_case.len().max(1) as f64;
    let mut lexical = BTreeMap::new();
    lexical.insert(
        "rouge_l".to_string(),
        per_case.iter().map(|c| c.rouge_l).sum::<f64>() / n,
    );
    lexical.insert("bleu".to_string(), per_case.iter().map(|c| c.bleu).sum::<f64>() / n);
    lexical.insert("sari".to_string(), per_case.iter().map(|c| c.sari).sum::<f64>() / n);
    for metric in external {
        let total: f64 = per_case
            .iter()
            .map(|c| metric.scores.get(&c.case_id).copied().unwrap_or(0.0))
            .sum();
        lexical.insert(metric.name.clone(), total / n);
    }

    let report = aggregate(&scores_from_counts(&counts), &lexical, config)?;
    Ok(CorpusScores {
        report,
        cases: per_case,
    })
}

/// Tab-separated per-case table, scores with 4 decimals.
pub fn write_case_table<W: Write>(cases: &[CaseScore], mut sink: W) -> std::io::Result<()> {
    writeln!(
        sink,
        "case_id\tcited\tstrict_p\tstrict_r\tstrict_f1\tlenient_p\tlenient_r\tlenient_f1\trouge_l\tbleu\tsari\tdiagnostic"
    )?;
    for c in cases {
        let cited = c.cited.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        writeln!(
            sink,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
            c.case_id,
            cited,
            c.strict.precision,
            c.strict.recall,
            c.strict.f1,
            c.lenient.precision,
            c.lenient.recall,
            c.lenient.f1,
            c.rouge_l,
            c.bleu,
            c.sari,
            c.diagnostic.as_deref().unwrap_or("")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn lex(r: f64, b: f64, s: f64) -> BTreeMap<String, f64> {
        [
            ("rouge_l".to_string(), r),
            ("bleu".to_string(), b),
            ("sari".to_string(), s),
        ]
        .into()
    }

    #[test]
    fn overall_is_mean() {
        assert_abs_diff_eq!(overall(0.527, 0.321), 0.424, epsilon = 1e-12);
        assert_eq!(overall(1.0, 1.0), 1.0);
        assert_abs_diff_eq!(relevance(&[1.0, 0.5, 0.0]), 0.5);
    }

    #[test]
    fn aggregate_uses_configured_sources() {
        let mut scores = CitationScores::default();
        scores.lenient_micro = Prf::new(1.0, 1.0);
        let report = aggregate(&scores, &lex(1.0, 0.5, 0.0), &AggregateConfig::default()).unwrap();
        assert_eq!(report.factuality, 1.0);
        assert_abs_diff_eq!(report.relevance, 0.5);
        assert_abs_diff_eq!(report.overall, 0.75);

        let cfg = AggregateConfig {
            factuality: FactualitySource::StrictMicro,
            relevance_metrics: vec!["bleu".into(), "medcon".into()],
        };
        assert!(matches!(
            aggregate(&scores, &lex(1.0, 0.5, 0.0), &cfg),
            Err(MetricsError::UnknownMetric(_))
        ));
    }

    #[test]
    fn rounding() {
        assert_eq!(round4(0.42424242), 0.4242);
        assert_eq!(round4(0.99995), 1.0);
    }
}
