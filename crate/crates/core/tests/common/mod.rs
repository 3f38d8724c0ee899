#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;

use ehrqa::corpus::SentenceLabels;
use ehrqa::pipeline::{MockSpec, RunConfig};
use ehrqa::{Answer, AnswerSentence, CaseRecord, CitationSet, NoteSentence, RelevanceLabel};

pub const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

const WORDS: &[&str] = &[
    "the",
    "patient",
    "was",
    "given",
    "apixaban",
    "5",
    "mg",
    "twice",
    "daily",
    "creatinine",
    "fell",
    "to",
    "1.3",
    "mg/dL",
    "after",
    "fluids,",
    "and",
    "pain",
    "improved;",
    "CT",
    "showed",
    "no",
    "bleed",
    "(stable)",
    "A1c",
    "11.4%",
    "follow-up",
    "in",
    "two",
    "weeks",
];

pub fn random_sentence_text<R: Rng>(rng: &mut R, max_words: usize) -> String {
    let n = rng.random_range(1..=max_words);
    let mut words: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
    if rng.random_bool(0.5) {
        words[0] = "Patient";
    }
    let mut text = words.join(" ");
    text.push_str(["", ".", ".", "!", "?"].choose(rng).unwrap());
    text
}

pub fn random_citations<R: Rng>(rng: &mut R, max_id: u32) -> CitationSet {
    let n = rng.random_range(1..=4usize.min(max_id as usize));
    let mut ids: Vec<u32> = (1..=max_id)
        .collect::<Vec<_>>()
        .choose_multiple(rng, n)
        .copied()
        .collect();
    if rng.random_bool(0.5) {
        ids.sort_unstable();
    }
    CitationSet::new(ids).unwrap()
}

pub fn random_answer<R: Rng>(rng: &mut R) -> Answer {
    let n = rng.random_range(1..=6);
    let sentences = (0..n)
        .map(|_| AnswerSentence::new(random_sentence_text(rng, 14), random_citations(rng, 30)).unwrap())
        .collect();
    Answer::new(sentences).unwrap()
}

pub fn label_from_index(i: usize) -> RelevanceLabel {
    RelevanceLabel::ALL[i % 3]
}

/// A case with `n` sentences and the given gold labels (cycled).
pub fn synthetic_case(case_id: &str, texts: &[String], labels: &[RelevanceLabel]) -> CaseRecord {
    let sentences: Vec<NoteSentence> = texts
        .iter()
        .enumerate()
        .map(|(i, t)| NoteSentence {
            id: i as u32 + 1,
            text: t.clone(),
        })
        .collect();
    let gold: SentenceLabels = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id, labels[i % labels.len()]))
        .collect();
    CaseRecord {
        case_id: case_id.to_string(),
        clinician_question: format!("What happened during admission {case_id}?"),
        patient_question: None,
        sentences,
        gold_labels: Some(gold),
    }
}

pub fn write_cases(path: &Path, cases: &[CaseRecord]) {
    let text: String = cases.iter().map(|c| c.to_line() + "\n").collect();
    std::fs::write(path, text).unwrap();
}

/// Run config over the bundled data with the noisy-oracle mock.
pub fn bundled_config(out: &Path, rate: f64) -> RunConfig {
    let mut config = RunConfig::default();
    config.paths.cases = PathBuf::from(format!("{DATA}/cases.jsonl"));
    config.paths.shots = PathBuf::from(format!("{DATA}/shots.jsonl"));
    config.paths.refs = Some(PathBuf::from(format!("{DATA}/refs.jsonl")));
    config.paths.out = out.to_path_buf();
    config.mock = Some(MockSpec::Oracle(rate));
    config
}
