//! Run configuration: a TOML document, environment defaults and command-line
//! overrides, applied in that order.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::answer::{FallbackTrigger, GenerationSettings, SelectionMode};
use crate::classifier::{ClassifierSettings, Rounding, ThresholdMode, ThresholdPolicy};
use crate::gateway::http::ENDPOINT_ENV;
use crate::gateway::BackendProfile;
use crate::metrics::{AggregateConfig, FactualitySource};

/// `scripted:PATH` or `oracle:RATE`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum MockSpec {
    Scripted(PathBuf),
    Oracle(f64),
}

impl FromStr for MockSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.split_once(':') {
            Some(("scripted", path)) if !path.is_empty() => Ok(MockSpec::Scripted(PathBuf::from(path))),
            Some(("oracle", rate)) => {
                let rate: f64 = rate.parse().map_err(|_| format!("invalid oracle rate `{rate}`"))?;
                if !(0.0..=1.0).contains(&rate) {
                    return Err(format!("oracle rate {rate} outside [0, 1]"));
                }
                Ok(MockSpec::Oracle(rate))
            }
            _ => Err(format!("expected scripted:PATH or oracle:RATE, got `{s}`")),
        }
    }
}

impl From<MockSpec> for String {
    fn from(m: MockSpec) -> String {
        match m {
            MockSpec::Scripted(p) => format!("scripted:{}", p.display()),
            MockSpec::Oracle(r) => format!("oracle:{r}"),
        }
    }
}

impl TryFrom<String> for MockSpec {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdConfig {
    pub essential_min: u32,
    pub supplementary_min: u32,
    /// When set, the essential threshold is this fraction of the sample count.
    pub fraction: Option<f64>,
    pub rounding: Rounding,
    pub lone_essential_is_supplementary: bool,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self {
            essential_min: 2,
            supplementary_min: 1,
            fraction: None,
            rounding: Rounding::Ceil,
            lone_essential_is_supplementary: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub cases: PathBuf,
    pub shots: PathBuf,
    pub refs: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            cases: PathBuf::from("cases.jsonl"),
            shots: PathBuf::from("shots.jsonl"),
            refs: None,
            out: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalMetricPath {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub factuality: FactualitySource,
    pub relevance_metrics: Vec<String>,
    pub external: Vec<ExternalMetricPath>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let agg = AggregateConfig::default();
        Self {
            factuality: agg.factuality,
            relevance_metrics: agg.relevance_metrics,
            external: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub essential_grid: Vec<u32>,
    pub supplementary_grid: Vec<u32>,
    pub holdout_case: Option<String>,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            essential_grid: vec![1, 2, 3, 5, 6],
            supplementary_grid: vec![1, 2],
            holdout_case: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub samples: u32,
    pub shots_per_prompt: usize,
    pub word_limit: usize,
    pub mode: SelectionMode,
    /// Cases processed concurrently.
    pub workers: usize,
    pub classify_temperature: f64,
    pub classify_max_tokens: u32,
    pub mock: Option<MockSpec>,
    pub threshold: ThresholdConfig,
    pub paths: PathsConfig,
    pub classify_backend: BackendProfile,
    pub generate_backend: BackendProfile,
    pub generation: GenerationConfig,
    pub evaluation: EvaluationConfig,
    pub calibration: CalibrationConfig,
}

/// Answer-generation knobs other than mode and word limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub summarize_retries: u32,
    pub remove_hallucinated: bool,
    pub fallback_trigger: FallbackTrigger,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        let g = GenerationSettings::default();
        Self {
            temperature: g.temperature,
            max_output_tokens: g.max_output_tokens,
            summarize_retries: g.summarize_retries,
            remove_hallucinated: g.remove_hallucinated,
            fallback_trigger: g.fallback_trigger,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        let generate_backend = BackendProfile {
            model_name: "llama-3.1-70b-instruct".into(),
            ..BackendProfile::default()
        };
        Self {
            seed: 0,
            samples: 20,
            shots_per_prompt: 30,
            word_limit: 75,
            mode: SelectionMode::Lenient,
            workers: 4,
            classify_temperature: 1.0,
            classify_max_tokens: 8,
            mock: None,
            threshold: ThresholdConfig::default(),
            paths: PathsConfig::default(),
            classify_backend: BackendProfile::default(),
            generate_backend,
            generation: GenerationConfig::default(),
            evaluation: EvaluationConfig::default(),
            calibration: CalibrationConfig::default(),
        }
    }
}

/// Command-line overrides; `None` leaves the configured value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub cases: Option<PathBuf>,
    pub shots: Option<PathBuf>,
    pub refs: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub mode: Option<SelectionMode>,
    pub samples: Option<u32>,
    pub essential_min: Option<u32>,
    pub supplementary_min: Option<u32>,
    pub fraction: Option<f64>,
    pub seed: Option<u64>,
    pub word_limit: Option<usize>,
    pub backend_classify: Option<String>,
    pub backend_generate: Option<String>,
    pub mock: Option<MockSpec>,
    pub holdout_case: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Uses `EHRQA_ENDPOINT` for both backends when set.
    pub fn apply_env(&mut self) {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.is_empty() {
                self.classify_backend.endpoint = url.clone();
                self.generate_backend.endpoint = url;
            }
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($field:expr, $value:expr) => {
                if let Some(v) = $value.clone() {
                    $field = v;
                }
            };
        }
        set!(self.paths.cases, o.cases);
        set!(self.paths.shots, o.shots);
        if o.refs.is_some() {
            self.paths.refs = o.refs.clone();
        }
        set!(self.paths.out, o.out);
        set!(self.mode, o.mode);
        set!(self.samples, o.samples);
        set!(self.threshold.essential_min, o.essential_min);
        set!(self.threshold.supplementary_min, o.supplementary_min);
        if o.fraction.is_some() {
            self.threshold.fraction = o.fraction;
        }
        set!(self.seed, o.seed);
        set!(self.word_limit, o.word_limit);
        set!(self.classify_backend.endpoint, o.backend_classify);
        set!(self.generate_backend.endpoint, o.backend_generate);
        if o.mock.is_some() {
            self.mock = o.mock.clone();
        }
        if o.holdout_case.is_some() {
            self.calibration.holdout_case = o.holdout_case.clone();
        }
    }

    pub fn policy(&self) -> ThresholdPolicy {
        let t = &self.threshold;
        let mut policy = ThresholdPolicy::absolute(self.samples, t.essential_min, t.supplementary_min);
        policy.lone_essential_is_supplementary = t.lone_essential_is_supplementary;
        if let Some(fraction) = t.fraction {
            policy.mode = ThresholdMode::Fractional {
                fraction,
                rounding: t.rounding,
            };
            policy.essential_min = policy.essential_threshold().max(t.supplementary_min);
        }
        policy
    }

    pub fn classifier_settings(&self) -> ClassifierSettings {
        ClassifierSettings {
            policy: self.policy(),
            shots_per_prompt: self.shots_per_prompt,
            temperature: self.classify_temperature,
            max_output_tokens: self.classify_max_tokens,
            seed: self.seed,
        }
    }

    pub fn generation_settings(&self) -> GenerationSettings {
        let g = &self.generation;
        GenerationSettings {
            mode: self.mode,
            word_limit: self.word_limit,
            temperature: g.temperature,
            max_output_tokens: g.max_output_tokens,
            summarize_retries: g.summarize_retries,
            remove_hallucinated: g.remove_hallucinated,
            fallback_trigger: g.fallback_trigger,
        }
    }

    pub fn aggregate_config(&self) -> AggregateConfig {
        AggregateConfig {
            factuality: self.evaluation.factuality,
            relevance_metrics: self.evaluation.relevance_metrics.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.word_limit == 0 {
            return bad("word_limit must be at least 1".into());
        }
        if self.samples == 0 {
            return bad("samples must be at least 1".into());
        }
        if self.shots_per_prompt == 0 || self.shots_per_prompt % 3 != 0 {
            return bad(format!(
                "shots_per_prompt must be a positive multiple of 3, got {}",
                self.shots_per_prompt
            ));
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        self.policy()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for profile in [&self.classify_backend, &self.generate_backend] {
            profile.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_spec_parsing() {
        assert_eq!("oracle:0.1".parse::<MockSpec>(), Ok(MockSpec::Oracle(0.1)));
        assert_eq!(
            "scripted:/tmp/x.json".parse::<MockSpec>(),
            Ok(MockSpec::Scripted(PathBuf::from("/tmp/x.json")))
        );
        assert!("oracle:2".parse::<MockSpec>().is_err());
        assert!("nope".parse::<MockSpec>().is_err());
    }

    #[test]
    fn toml_round_trip_and_overrides() {
        let mut cfg = RunConfig::from_toml(
            r#"
            seed = 7
            mode = "strict"
            mock = "oracle:0"
            [threshold]
            essential_min = 3
            [classify_backend]
            model_name = "small"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.mode, SelectionMode::Strict);
        assert_eq!(cfg.threshold.essential_min, 3);
        assert_eq!(cfg.threshold.supplementary_min, 1);
        assert_eq!(cfg.classify_backend.model_name, "small");
        assert_eq!(cfg.word_limit, 75);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);

        cfg.apply(&Overrides {
            seed: Some(9),
            word_limit: Some(10),
            fraction: Some(0.26),
            ..Overrides::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.word_limit, 10);
        assert_eq!(cfg.policy().essential_threshold(), 6);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.shots_per_prompt = 10;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.word_limit = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.threshold.essential_min = 50;
        assert!(cfg.validate().is_err());
    }
}
