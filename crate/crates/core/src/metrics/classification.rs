//! Citation-level precision, recall and F1.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::citations::{self, Answer};
use crate::corpus::{LabelMap, RelevanceLabel, SentenceLabels};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }
}

impl std::ops::Add for ConfusionCounts {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }
}

/// Counts over `universe` for a predicted and a gold-positive id set.
pub fn confusion(
    pred: &BTreeSet<u32>,
    gold_positive: &BTreeSet<u32>,
    universe: &BTreeSet<u32>,
) -> Result<ConfusionCounts, MetricsError> {
    if let Some(id) = pred.iter().chain(gold_positive).find(|id| !universe.contains(id)) {
        return Err(MetricsError::OutsideUniverse(*id));
    }
    let tp = pred.intersection(gold_positive).count() as u64;
    let fp = pred.difference(gold_positive).count() as u64;
    let fn_ = gold_positive.difference(pred).count() as u64;
    let tn = universe.len() as u64 - tp - fp - fn_;
    Ok(ConfusionCounts::new(tp, fp, fn_, tn))
}

/// Precision, recall and F1 with the zero-denominator convention `0`.
pub fn prf(c: &ConfusionCounts) -> Prf {
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    Prf::new(ratio(c.tp, c.tp + c.fp), ratio(c.tp, c.tp + c.fn_))
}

/// Per-case score used for macro averaging. A case with no gold positives
/// scores 1 when nothing was predicted and 0 otherwise.
fn case_prf(c: &ConfusionCounts) -> Prf {
    if c.tp + c.fn_ == 0 {
        if c.fp == 0 {
            Prf {
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
            }
        } else {
            Prf::default()
        }
    } else {
        prf(c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CitationScores {
    pub strict_micro: Prf,
    pub strict_macro: Prf,
    pub lenient_micro: Prf,
    pub lenient_macro: Prf,
}

/// Per-case confusion counts behind [`CitationScores`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CaseCitationCounts {
    pub strict: ConfusionCounts,
    pub lenient: ConfusionCounts,
}

pub fn gold_positive(labels: &SentenceLabels, lenient: bool) -> BTreeSet<u32> {
    labels
        .iter()
        .filter(|(_, &l)| l == RelevanceLabel::Essential || (lenient && l == RelevanceLabel::Supplementary))
        .map(|(&id, _)| id)
        .collect()
}

/// Confusion counts of one predicted id set against one case's gold labels.
/// Predicted ids outside the note widen the universe and count as false
/// positives.
pub fn case_counts(pred: &BTreeSet<u32>, gold: &SentenceLabels) -> CaseCitationCounts {
    let universe: BTreeSet<u32> = gold.keys().copied().chain(pred.iter().copied()).collect();
    let count = |lenient| confusion(pred, &gold_positive(gold, lenient), &universe).expect("universe covers both sets");
    CaseCitationCounts {
        strict: count(false),
        lenient: count(true),
    }
}

fn average(scores: &[Prf]) -> Prf {
    if scores.is_empty() {
        return Prf::default();
    }
    let n = scores.len() as f64;
    Prf {
        precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: scores.iter().map(|s| s.f1).sum::<f64>() / n,
    }
}

/// Micro scores pool counts across cases; macro scores average per-case values.
pub fn scores_from_counts(per_case: &[CaseCitationCounts]) -> CitationScores {
    let strict: ConfusionCounts = per_case.iter().map(|c| c.strict).sum();
    let lenient: ConfusionCounts = per_case.iter().map(|c| c.lenient).sum();
    let strict_cases: Vec<Prf> = per_case.iter().map(|c| case_prf(&c.strict)).collect();
    let lenient_cases: Vec<Prf> = per_case.iter().map(|c| case_prf(&c.lenient)).collect();
    CitationScores {
        strict_micro: prf(&strict),
        strict_macro: average(&strict_cases),
        lenient_micro: prf(&lenient),
        lenient_macro: average(&lenient_cases),
    }
}

/// Strict (essential) and lenient (essential + supplementary) citation scores.
pub fn citation_metrics(answers: &BTreeMap<String, Answer>, gold: &LabelMap) -> Result<CitationScores, MetricsError> {
    let mut per_case = Vec::with_capacity(answers.len());
    for (case_id, answer) in answers {
        let labels = gold
            .get(case_id)
            .ok_or_else(|| MetricsError::MissingGold(case_id.clone()))?;
        per_case.push(case_counts(&citations::collect_cited_ids(answer), labels));
    }
    Ok(scores_from_counts(&per_case))
}
