// Turning self-consistency vote tallies into labels.
//
// ```bash
// cargo run --example threshold_policies
// ```

use ehrqa::classifier::{apply_threshold, tally, Rounding, ThresholdPolicy, VoteTally};
use ehrqa::RelevanceLabel;

pub fn run_example() -> anyhow::Result<()> {
    let absolute = ThresholdPolicy::default();
    let ceil = ThresholdPolicy::fractional(20, 0.26, Rounding::Ceil, 1);
    let floor = ThresholdPolicy::fractional(20, 0.26, Rounding::Floor, 1);
    println!(
        "essential thresholds: absolute={} fractional(ceil)={} fractional(floor)={}",
        absolute.essential_threshold(),
        ceil.essential_threshold(),
        floor.essential_threshold()
    );

    let tallies = [
        VoteTally::new(0, 0, 20, 0),
        VoteTally::new(1, 0, 19, 0),
        VoteTally::new(2, 0, 18, 0),
        VoteTally::new(0, 3, 17, 0),
        VoteTally::new(5, 2, 13, 0),
        VoteTally::new(6, 0, 14, 0),
        VoteTally::new(1, 0, 17, 2),
    ];
    println!(
        "{:<22} {:<14} {:<14} {:<14}",
        "tally (E/S/N/?)", "absolute 2,1", "0.26 ceil", "0.26 floor"
    );
    for t in &tallies {
        let label = |p: &ThresholdPolicy| apply_threshold(t, p).map(RelevanceLabel::as_str);
        println!(
            "{:<22} {:<14} {:<14} {:<14}",
            format!("{}/{}/{}/{}", t.essential, t.supplementary, t.not_relevant, t.invalid),
            label(&absolute)?,
            label(&ceil)?,
            label(&floor)?
        );
    }

    // raw samples: one essential vote among 20 still marks the sentence relevant
    let mut parsed = vec![Some(RelevanceLabel::NotRelevant); 19];
    parsed.push(Some(RelevanceLabel::Essential));
    let t = tally(&parsed);
    let mut strict = absolute;
    strict.lone_essential_is_supplementary = false;
    println!(
        "one essential vote: {} (lone vote counts) / {} (lone vote ignored)",
        apply_threshold(&t, &absolute)?,
        apply_threshold(&t, &strict)?
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
