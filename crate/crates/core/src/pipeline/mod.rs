//! Stage commands over a run directory.
//!
//! A run directory holds fixed file names ([`LABELS_FILE`], [`AUDIT_FILE`],
//! [`ANSWERS_FILE`], [`REPORT_FILE`], ...) plus a [`manifest::RunManifest`]
//! with digests of everything written. Every stage reads its inputs from
//! files, so stages can be rerun independently.

pub mod calibrate;
pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::answer::{generate_answer, AnswerError, Branch};
use crate::citations::{self, read_answers, write_answer_record};
use crate::classifier::{
    classify_case, parse_shots, read_audit, sample_few_shot_set, write_audit, ClassifierError, SentenceAudit,
};
use crate::corpus::{self, CaseRecord, CorpusError, LabelMap};
use crate::gateway::{
    Backend, BackendProfile, ConfusionRates, Gateway, GatewayError, NoisyOracleBackend, OpenAiBackend, ResponseCache,
    ScriptedBackend,
};
use crate::metrics::{self, score_corpus, CorpusScores, EvaluationReport, ExternalMetric, MetricsError};
use crate::seed::derive_rng;

pub use calibrate::{Calibration, CalibrationRow};
pub use config::{MockSpec, Overrides, RunConfig};
pub use manifest::{RunManifest, StageRecord};

use manifest::StageTimer;

pub const LABELS_FILE: &str = "labels.jsonl";
pub const AUDIT_FILE: &str = "audit.jsonl";
pub const ANSWERS_FILE: &str = "answers.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const CASE_TABLE_FILE: &str = "report_cases.tsv";
pub const CACHE_FILE: &str = "cache.jsonl";
pub const CALIBRATION_FILE: &str = "calibration.tsv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Corpus {
        path: PathBuf,
        #[source]
        source: CorpusError,
    },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error(transparent)]
    Answer(#[from] AnswerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| PipelineError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PipelineError::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

/// Writes through a buffer and flushes, attributing errors to `path`.
fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut sink = create(path)?;
    f(&mut sink)
        .and_then(|_| sink.flush())
        .map_err(|e| PipelineError::io(path, e))
}

pub fn load_cases(path: &Path) -> Result<Vec<CaseRecord>> {
    corpus::parse_cases(open(path)?).map_err(|source| PipelineError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_labels(path: &Path) -> Result<LabelMap> {
    corpus::parse_labels(open(path)?).map_err(|source| PipelineError::Corpus {
        path: path.to_path_buf(),
        source,
    })
}

pub fn gold_label_map(cases: &[CaseRecord]) -> LabelMap {
    cases
        .iter()
        .filter_map(|c| c.gold_labels.clone().map(|g| (c.case_id.clone(), g)))
        .collect()
}

/// Backend for one stage: the configured mock if any, else the HTTP client.
pub fn build_backend(config: &RunConfig, profile: &BackendProfile, cases: &[CaseRecord]) -> Result<Arc<dyn Backend>> {
    Ok(match &config.mock {
        Some(MockSpec::Oracle(rate)) => Arc::new(
            NoisyOracleBackend::new(cases, ConfusionRates::flip(*rate), config.seed)?
                .with_word_limit(config.word_limit),
        ),
        Some(MockSpec::Scripted(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
            Arc::new(ScriptedBackend::from_json(&text)?)
        }
        None => Arc::new(OpenAiBackend::from_env(profile)?),
    })
}

fn load_cache(run_dir: &Path) -> Result<Arc<ResponseCache>> {
    let path = run_dir.join(CACHE_FILE);
    ResponseCache::load_or_default(&path)
        .map(Arc::new)
        .map_err(|e| PipelineError::io(&path, e))
}

fn save_cache(run_dir: &Path, cache: &ResponseCache) -> Result<()> {
    let path = run_dir.join(CACHE_FILE);
    cache.save(&path).map_err(|e| PipelineError::io(&path, e))
}

/// Applies `f` to every item on up to `workers` threads. Results keep the
/// input order.
fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                *slots[i].lock() = Some(f(&items[i]));
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.into_inner().expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifyOutcome {
    pub labels: LabelMap,
    pub audit: Vec<SentenceAudit>,
    pub backend_calls: u64,
}

/// Labels every sentence of every case and writes the labels and audit files.
///
/// The shots pool is read and checked before any backend is built. Responses
/// are cached in the run directory, so a rerun with the same settings makes
/// no backend calls.
pub fn cmd_classify(config: &RunConfig) -> Result<ClassifyOutcome> {
    config.validate()?;
    let mut timer = StageTimer::start("classify");
    let pool = parse_shots(open(&config.paths.shots)?)?;
    let cases = load_cases(&config.paths.cases)?;
    timer.input(&config.paths.shots)?;
    timer.input(&config.paths.cases)?;
    let settings = config.classifier_settings();
    // a pool too small for the per-class quota fails here, before any backend call
    sample_few_shot_set(
        &pool,
        settings.shots_per_prompt,
        &mut derive_rng(config.seed, &["pool-check"]),
    )?;

    let out = &config.paths.out;
    ensure_dir(out)?;
    let cache = load_cache(out)?;
    let gateway = Gateway::new(
        build_backend(config, &config.classify_backend, &cases)?,
        &config.classify_backend,
    )
    .with_cache(cache.clone());

    let results = parallel_map(&cases, config.workers, |case| {
        log::info!("classifying case {}", case.case_id);
        classify_case(case, &settings, &pool, &gateway)
    });
    // keep whatever finished before reporting a failure
    let save_result = save_cache(out, &cache);

    let mut labels = LabelMap::new();
    let mut audit = Vec::new();
    for (case, result) in cases.iter().zip(results) {
        let classified = result?;
        labels.insert(case.case_id.clone(), classified.labels);
        audit.extend(classified.audit);
    }
    save_result?;

    write_file(&out.join(LABELS_FILE), |w| {
        corpus::write_labels(&cases, &labels, &mut *w).map_err(|e| std::io::Error::other(e.to_string()))
    })?;
    write_file(&out.join(AUDIT_FILE), |w| write_audit(&audit, &mut *w))?;

    let backend_calls = gateway.backend_calls();
    let mut m = RunManifest::open(out, config);
    m.record(timer.finish(out, &[LABELS_FILE, AUDIT_FILE], backend_calls)?);
    m.save(out)?;
    Ok(ClassifyOutcome {
        labels,
        audit,
        backend_calls,
    })
}

/// Where [`cmd_generate`] takes sentence labels from.
#[derive(Debug, Clone, PartialEq)]
pub enum LabelsSource {
    /// `labels.jsonl` in the run directory.
    RunDir,
    File(PathBuf),
    /// The gold labels embedded in the cases file.
    Gold,
}

impl std::str::FromStr for LabelsSource {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s {
            "gold" => LabelsSource::Gold,
            "" | "run" => LabelsSource::RunDir,
            path => LabelsSource::File(PathBuf::from(path)),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateOutcome {
    /// Emitted answer text per case, in cases-file order.
    pub answers: Vec<(String, String)>,
    pub branches: BTreeMap<String, Branch>,
    pub backend_calls: u64,
}

/// Writes one answer per case to the answers file.
pub fn cmd_generate(config: &RunConfig, source: &LabelsSource) -> Result<GenerateOutcome> {
    config.validate()?;
    let mut timer = StageTimer::start("generate");
    let cases = load_cases(&config.paths.cases)?;
    timer.input(&config.paths.cases)?;
    let out = &config.paths.out;
    let labels = match source {
        LabelsSource::Gold => gold_label_map(&cases),
        LabelsSource::RunDir => {
            let path = out.join(LABELS_FILE);
            timer.input(&path)?;
            load_labels(&path)?
        }
        LabelsSource::File(path) => {
            timer.input(path)?;
            load_labels(path)?
        }
    };
    for case in &cases {
        let case_labels = labels
            .get(&case.case_id)
            .ok_or_else(|| PipelineError::Config(format!("labels do not cover case {}", case.case_id)))?;
        corpus::check_coverage(case, case_labels).map_err(|source| PipelineError::Corpus {
            path: PathBuf::from("labels"),
            source,
        })?;
    }

    ensure_dir(out)?;
    let cache = load_cache(out)?;
    let gateway = Gateway::new(
        build_backend(config, &config.generate_backend, &cases)?,
        &config.generate_backend,
    )
    .with_cache(cache.clone());
    let settings = config.generation_settings();

    let results = parallel_map(&cases, config.workers, |case| {
        generate_answer(case, &labels[&case.case_id], &settings, &gateway, config.seed)
    });
    let save_result = save_cache(out, &cache);

    let mut answers = Vec::with_capacity(cases.len());
    let mut branches = BTreeMap::new();
    for (case, result) in cases.iter().zip(results) {
        let generated = result?;
        log::info!("case {}: {:?} answer", case.case_id, generated.branch);
        branches.insert(case.case_id.clone(), generated.branch);
        answers.push((case.case_id.clone(), generated.answer));
    }
    save_result?;

    write_file(&out.join(ANSWERS_FILE), |w| {
        for (case_id, answer) in &answers {
            write_answer_record(w, case_id, answer)?;
        }
        Ok(())
    })?;

    let backend_calls = gateway.backend_calls();
    let mut m = RunManifest::open(out, config);
    m.record(timer.finish(out, &[ANSWERS_FILE], backend_calls)?);
    m.save(out)?;
    Ok(GenerateOutcome {
        answers: answers
            .into_iter()
            .map(|(id, a)| (id, citations::emit_answer(&a)))
            .collect(),
        branches,
        backend_calls,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseDiagnostic {
    pub case_id: String,
    pub message: String,
}

/// The report file: rounded corpus scores plus per-case diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub cases_scored: usize,
    pub word_limit: usize,
    #[serde(flatten)]
    pub scores: EvaluationReport,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<CaseDiagnostic>,
}

/// Scores an answers file against gold labels and references and writes the
/// report and the per-case table.
pub fn cmd_evaluate(config: &RunConfig, answers_path: Option<&Path>) -> Result<CorpusScores> {
    config.validate()?;
    let mut timer = StageTimer::start("evaluate");
    let out = &config.paths.out;
    let answers_path = answers_path
        .map(Path::to_path_buf)
        .unwrap_or_else(|| out.join(ANSWERS_FILE));
    let refs_path = config
        .paths
        .refs
        .clone()
        .ok_or_else(|| PipelineError::Config("evaluation needs a references file".into()))?;

    let cases = load_cases(&config.paths.cases)?;
    let answers = read_answers(open(&answers_path)?).map_err(|e| PipelineError::io(&answers_path, e))?;
    let references = metrics::read_references(open(&refs_path)?)?;
    let mut external = Vec::new();
    for ext in &config.evaluation.external {
        external.push(ExternalMetric::read(&ext.name, open(&ext.path)?)?);
        timer.input(&ext.path)?;
    }
    for path in [&config.paths.cases, &answers_path, &refs_path] {
        timer.input(path)?;
    }

    let scores = score_corpus(
        &cases,
        &answers,
        &references,
        &external,
        config.word_limit,
        &config.aggregate_config(),
    )?;

    ensure_dir(out)?;
    let doc = ReportDocument {
        cases_scored: scores.cases.len(),
        word_limit: config.word_limit,
        scores: scores.report.rounded(),
        diagnostics: scores
            .cases
            .iter()
            .filter_map(|c| {
                c.diagnostic.as_ref().map(|m| CaseDiagnostic {
                    case_id: c.case_id.clone(),
                    message: m.clone(),
                })
            })
            .collect(),
    };
    write_file(&out.join(REPORT_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &doc)?;
        writeln!(w)
    })?;
    write_file(&out.join(CASE_TABLE_FILE), |w| {
        metrics::write_case_table(&scores.cases, &mut *w)
    })?;

    let mut m = RunManifest::open(out, config);
    m.record(timer.finish(out, &[REPORT_FILE, CASE_TABLE_FILE], 0)?);
    m.save(out)?;
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub classify: ClassifyOutcome,
    pub generate: GenerateOutcome,
    pub scores: CorpusScores,
}

/// Classify, generate and evaluate in sequence. A failing stage stops the
/// run; files written by earlier stages stay in place.
pub fn cmd_run(config: &RunConfig) -> Result<RunOutcome> {
    let classify = cmd_classify(config)?;
    let generate = cmd_generate(config, &LabelsSource::RunDir)?;
    let scores = cmd_evaluate(config, None)?;
    Ok(RunOutcome {
        classify,
        generate,
        scores,
    })
}

/// Sweeps the configured threshold grid over the stored audit and writes the
/// calibration table. Gold labels come from the cases file.
pub fn cmd_calibrate(config: &RunConfig) -> Result<Calibration> {
    let out = &config.paths.out;
    let audit_path = out.join(AUDIT_FILE);
    if !audit_path.exists() {
        return Err(PipelineError::Config(format!(
            "no audit at {}; run classify first",
            audit_path.display()
        )));
    }
    let mut timer = StageTimer::start("calibrate");
    let audit = read_audit(open(&audit_path)?)?;
    let cases = load_cases(&config.paths.cases)?;
    timer.input(&audit_path)?;
    timer.input(&config.paths.cases)?;
    let gold = gold_label_map(&cases);
    let c = &config.calibration;
    let cal = calibrate::sweep(
        &audit,
        &gold,
        &c.essential_grid,
        &c.supplementary_grid,
        config.threshold.lone_essential_is_supplementary,
        c.holdout_case.as_deref(),
    )?;
    write_file(&out.join(CALIBRATION_FILE), |w| calibrate::write_table(&cal, &mut *w))?;
    let mut m = RunManifest::open(out, config);
    m.record(timer.finish(out, &[CALIBRATION_FILE], 0)?);
    m.save(out)?;
    Ok(cal)
}
