use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use ehrqa::answer::SelectionMode;
use ehrqa::pipeline::{self, calibrate, LabelsSource, MockSpec, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "ehrqa",
    version,
    about = "Grounded question answering over clinical note excerpts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label every note sentence and write labels and audit files.
    Classify(Common),
    /// Compose cited answers from a labels file.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Labels file, `gold` for the labels in the cases file, or `run` for the run directory.
        #[arg(long, default_value = "run")]
        labels: LabelsSource,
    },
    /// Score an answers file.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to the answers file in the run directory.
        #[arg(long)]
        answers: Option<PathBuf>,
    },
    /// Classify, generate and evaluate.
    Run(Common),
    /// Sweep thresholds over the stored audit.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        holdout_case: Option<String>,
        /// Essential vote thresholds to try, comma separated.
        #[arg(long, value_delimiter = ',')]
        grid_essential: Option<Vec<u32>>,
        #[arg(long, value_delimiter = ',')]
        grid_supplementary: Option<Vec<u32>>,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    cases: Option<PathBuf>,
    #[arg(long)]
    shots: Option<PathBuf>,
    #[arg(long)]
    refs: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `strict` or `lenient`.
    #[arg(long)]
    mode: Option<SelectionMode>,
    #[arg(long)]
    samples: Option<u32>,
    #[arg(long)]
    essential_min: Option<u32>,
    #[arg(long)]
    supplementary_min: Option<u32>,
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    word_limit: Option<usize>,
    #[arg(long, value_name = "URL")]
    backend_classify: Option<String>,
    #[arg(long, value_name = "URL")]
    backend_generate: Option<String>,
    /// `scripted:PATH` or `oracle:RATE`.
    #[arg(long)]
    mock: Option<MockSpec>,
}

impl Common {
    fn load(&self, holdout_case: Option<String>) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        config.apply_env();
        config.apply(&Overrides {
            cases: self.cases.clone(),
            shots: self.shots.clone(),
            refs: self.refs.clone(),
            out: self.out.clone(),
            mode: self.mode,
            samples: self.samples,
            essential_min: self.essential_min,
            supplementary_min: self.supplementary_min,
            fraction: self.fraction,
            seed: self.seed,
            word_limit: self.word_limit,
            backend_classify: self.backend_classify.clone(),
            backend_generate: self.backend_generate.clone(),
            mock: self.mock.clone(),
            holdout_case,
        });
        config.validate()?;
        Ok(config)
    }
}

fn print_report(path: &std::path::Path) -> Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Classify(common) => {
            let config = common.load(None)?;
            let out = pipeline::cmd_classify(&config)?;
            eprintln!(
                "labeled {} cases ({} backend calls)",
                out.labels.len(),
                out.backend_calls
            );
        }
        Command::Generate { common, labels } => {
            let config = common.load(None)?;
            let out = pipeline::cmd_generate(&config, &labels)?;
            eprintln!(
                "wrote {} answers ({} backend calls)",
                out.answers.len(),
                out.backend_calls
            );
        }
        Command::Evaluate { common, answers } => {
            let config = common.load(None)?;
            pipeline::cmd_evaluate(&config, answers.as_deref())?;
            print_report(&config.paths.out.join(pipeline::REPORT_FILE))?;
        }
        Command::Run(common) => {
            let config = common.load(None)?;
            pipeline::cmd_run(&config)?;
            print_report(&config.paths.out.join(pipeline::REPORT_FILE))?;
        }
        Command::Calibrate {
            common,
            holdout_case,
            grid_essential,
            grid_supplementary,
        } => {
            let mut config = common.load(holdout_case)?;
            if let Some(g) = grid_essential {
                config.calibration.essential_grid = g;
            }
            if let Some(g) = grid_supplementary {
                config.calibration.supplementary_grid = g;
            }
            let cal = pipeline::cmd_calibrate(&config)?;
            calibrate::write_table(&cal, std::io::stdout().lock())?;
        }
    }
    Ok(())
}
