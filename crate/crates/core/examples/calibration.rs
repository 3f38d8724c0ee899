// Sweeps essential/supplementary thresholds over a stored audit. The audit
// comes from a noisy mock that rarely votes essential, so high thresholds
// miss essential sentences.
//
// ```bash
// cargo run --example calibration
// ```

use std::path::PathBuf;

use ehrqa::gateway::ConfusionRates;
use ehrqa::pipeline::{self, calibrate, RunConfig};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

pub fn run_example() -> anyhow::Result<()> {
    let out = tempfile::tempdir()?;
    let mut config = RunConfig::default();
    config.paths.cases = PathBuf::from(format!("{DATA}/cases.jsonl"));
    config.paths.shots = PathBuf::from(format!("{DATA}/shots.jsonl"));
    config.paths.out = out.path().to_path_buf();
    config.calibration.essential_grid = vec![1, 2, 3, 5, 6];
    config.calibration.supplementary_grid = vec![1, 2];

    // essential sentences get an essential vote only 10% of the time
    let rates = ConfusionRates {
        rows: [[0.10, 0.15, 0.75], [0.05, 0.45, 0.50], [0.02, 0.08, 0.90]],
    };
    let cases = pipeline::load_cases(&config.paths.cases)?;
    let backend = ehrqa::gateway::NoisyOracleBackend::new(&cases, rates, 5)?;
    let gateway = ehrqa::Gateway::new(std::sync::Arc::new(backend), &config.classify_backend);
    let pool = ehrqa::classifier::parse_shots(std::io::BufReader::new(std::fs::File::open(&config.paths.shots)?))?;
    let mut audit = Vec::new();
    for case in &cases {
        audit.extend(ehrqa::classify_case(case, &config.classifier_settings(), &pool, &gateway)?.audit);
    }
    ehrqa::classifier::write_audit(&audit, std::fs::File::create(out.path().join(pipeline::AUDIT_FILE))?)?;

    let cal = pipeline::cmd_calibrate(&config)?;
    calibrate::write_table(&cal, std::io::stdout().lock())?;

    config.calibration.holdout_case = Some("c05".into());
    let cal = pipeline::cmd_calibrate(&config)?;
    let best = &cal.rows[cal.best];
    let (case_id, held) = cal.holdout.as_ref().expect("holdout requested");
    println!(
        "\nwithout {case_id}: best E={} S={}; on {case_id} lenient F1 {:.4}",
        best.essential_min, best.supplementary_min, held.lenient.f1
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
