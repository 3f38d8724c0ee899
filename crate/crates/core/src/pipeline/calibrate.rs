//! Threshold sweep over stored vote tallies. Never calls a backend.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::classifier::{apply_threshold, SentenceAudit, ThresholdPolicy};
use crate::corpus::{LabelMap, RelevanceLabel};
use crate::metrics::{prf, ConfusionCounts, Prf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub essential_min: u32,
    pub supplementary_min: u32,
    pub essential: Prf,
    pub supplementary: Prf,
    pub not_relevant: Prf,
    /// Relevant (essential or supplementary) against not-relevant.
    pub lenient: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub rows: Vec<CalibrationRow>,
    /// Index into `rows` of the highest lenient F1 (first on ties).
    pub best: usize,
    /// The held-out case scored under the best row.
    pub holdout: Option<(String, CalibrationRow)>,
}

fn count(pairs: &[(RelevanceLabel, RelevanceLabel)], positive: impl Fn(RelevanceLabel) -> bool) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for &(pred, gold) in pairs {
        match (positive(pred), positive(gold)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    c
}

/// Scores one threshold pair over `records`.
pub fn score_thresholds(
    records: &[&SentenceAudit],
    gold: &LabelMap,
    essential_min: u32,
    supplementary_min: u32,
    lone_essential_is_supplementary: bool,
) -> Result<CalibrationRow, PipelineError> {
    let mut pairs = Vec::with_capacity(records.len());
    for rec in records {
        let gold_label = gold
            .get(&rec.case_id)
            .and_then(|l| l.get(&rec.sentence_id))
            .ok_or_else(|| {
                PipelineError::Config(format!(
                    "no gold label for case {} sentence {}",
                    rec.case_id, rec.sentence_id
                ))
            })?;
        let mut policy = ThresholdPolicy::absolute(rec.tally.total(), essential_min, supplementary_min);
        policy.lone_essential_is_supplementary = lone_essential_is_supplementary;
        let pred = apply_threshold(&rec.tally, &policy).expect("policy sized to the tally");
        pairs.push((pred, *gold_label));
    }
    let class = |l: RelevanceLabel| prf(&count(&pairs, |x| x == l));
    Ok(CalibrationRow {
        essential_min,
        supplementary_min,
        essential: class(RelevanceLabel::Essential),
        supplementary: class(RelevanceLabel::Supplementary),
        not_relevant: class(RelevanceLabel::NotRelevant),
        lenient: prf(&count(&pairs, RelevanceLabel::is_relevant)),
    })
}

/// Recomputes labels from `audit` for every grid pair with
/// `supplementary_min <= essential_min`.
pub fn sweep(
    audit: &[SentenceAudit],
    gold: &LabelMap,
    essential_grid: &[u32],
    supplementary_grid: &[u32],
    lone_essential_is_supplementary: bool,
    holdout_case: Option<&str>,
) -> Result<Calibration, PipelineError> {
    if let Some(h) = holdout_case {
        if !audit.iter().any(|r| r.case_id == h) {
            return Err(PipelineError::Config(format!("holdout case {h} not in audit")));
        }
    }
    let (held, tuning): (Vec<&SentenceAudit>, Vec<&SentenceAudit>) =
        audit.iter().partition(|r| Some(r.case_id.as_str()) == holdout_case);
    if tuning.is_empty() {
        return Err(PipelineError::Config("audit has no records to calibrate on".into()));
    }

    let mut rows = Vec::new();
    for &e in essential_grid {
        for &s in supplementary_grid {
            if s == 0 || e == 0 || s > e {
                continue;
            }
            rows.push(score_thresholds(&tuning, gold, e, s, lone_essential_is_supplementary)?);
        }
    }
    if rows.is_empty() {
        return Err(PipelineError::Config(
            "calibration grid has no valid threshold pairs".into(),
        ));
    }
    let mut best = 0;
    for (i, row) in rows.iter().enumerate() {
        if row.lenient.f1 > rows[best].lenient.f1 {
            best = i;
        }
    }
    let holdout = match holdout_case {
        Some(h) => {
            let b = &rows[best];
            Some((
                h.to_string(),
                score_thresholds(
                    &held,
                    gold,
                    b.essential_min,
                    b.supplementary_min,
                    lone_essential_is_supplementary,
                )?,
            ))
        }
        None => None,
    };
    Ok(Calibration { rows, best, holdout })
}

/// Tab-separated sweep table; the best row is marked with `*`.
pub fn write_table<W: Write>(cal: &Calibration, mut sink: W) -> std::io::Result<()> {
    writeln!(
        sink,
        "essential_min\tsupplementary_min\tessential_p\tessential_r\tessential_f1\tsupplementary_f1\tnot_relevant_f1\tlenient_p\tlenient_r\tlenient_f1\tbest"
    )?;
    let line = |sink: &mut W, r: &CalibrationRow, mark: &str| {
        writeln!(
            sink,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}",
            r.essential_min,
            r.supplementary_min,
            r.essential.precision,
            r.essential.recall,
            r.essential.f1,
            r.supplementary.f1,
            r.not_relevant.f1,
            r.lenient.precision,
            r.lenient.recall,
            r.lenient.f1,
            mark
        )
    };
    for (i, row) in cal.rows.iter().enumerate() {
        line(&mut sink, row, if i == cal.best { "*" } else { "" })?;
    }
    if let Some((case_id, row)) = &cal.holdout {
        line(&mut sink, row, &format!("holdout:{case_id}"))?;
    }
    Ok(())
}
