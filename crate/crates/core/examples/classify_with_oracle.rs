// Labels one case with the noisy-oracle mock at two noise levels and shows
// the per-sentence vote tallies.
//
// ```bash
// cargo run --example classify_with_oracle
// ```

use std::fs::File;
use std::io::BufReader;
use std::sync::Arc;

use ehrqa::classifier::{parse_shots, ClassifierSettings};
use ehrqa::corpus::parse_cases;
use ehrqa::gateway::{ConfusionRates, NoisyOracleBackend};
use ehrqa::{classify_case, BackendProfile, Gateway};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

pub fn run_example() -> anyhow::Result<()> {
    let cases = parse_cases(BufReader::new(File::open(format!("{DATA}/cases.jsonl"))?))?;
    let pool = parse_shots(BufReader::new(File::open(format!("{DATA}/shots.jsonl"))?))?;
    let case = &cases[0];
    let gold = case.gold_labels.as_ref().expect("synthetic cases carry gold labels");
    println!("case {}: {}", case.case_id, case.clinician_question);

    for rate in [0.0, 0.4] {
        let backend = NoisyOracleBackend::new(&cases, ConfusionRates::flip(rate), 11)?;
        let gateway = Gateway::new(Arc::new(backend), &BackendProfile::default());
        let result = classify_case(case, &ClassifierSettings::default(), &pool, &gateway)?;
        println!("\nflip rate {rate} ({} backend calls)", gateway.backend_calls());
        for a in &result.audit {
            println!(
                "  s{:<2} votes E/S/N={:>2}/{:>2}/{:>2}  label={:<13} gold={}",
                a.sentence_id,
                a.tally.essential,
                a.tally.supplementary,
                a.tally.not_relevant,
                a.label.as_str(),
                gold[&a.sentence_id]
            );
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
