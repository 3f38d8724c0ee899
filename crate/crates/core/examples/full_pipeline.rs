// Classify, generate and evaluate the bundled synthetic cases with the
// noisy-oracle mock, then check the run manifest.
//
// ```bash
// cargo run --example full_pipeline
// ```

use std::path::PathBuf;

use ehrqa::pipeline::{self, MockSpec, RunConfig, RunManifest};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

pub fn run_example() -> anyhow::Result<()> {
    let out = tempfile::tempdir()?;
    let mut config = RunConfig::default();
    config.paths.cases = PathBuf::from(format!("{DATA}/cases.jsonl"));
    config.paths.shots = PathBuf::from(format!("{DATA}/shots.jsonl"));
    config.paths.refs = Some(PathBuf::from(format!("{DATA}/refs.jsonl")));
    config.paths.out = out.path().to_path_buf();
    config.mock = Some(MockSpec::Oracle(0.15));
    config.seed = 7;
    // small enough that some lenient selections go through the summarizer
    config.word_limit = 40;

    let run = pipeline::cmd_run(&config)?;
    println!(
        "classified {} cases with {} backend calls; generation made {}",
        run.classify.labels.len(),
        run.classify.backend_calls,
        run.generate.backend_calls
    );
    let mut branches = std::collections::BTreeMap::new();
    for b in run.generate.branches.values() {
        *branches.entry(format!("{b:?}")).or_insert(0) += 1;
    }
    println!("answer branches: {branches:?}");
    let r = &run.scores.report;
    println!(
        "strict micro F1 {:.4}, lenient micro F1 {:.4}, rouge_l {:.4}, bleu {:.4}, sari {:.4}, overall {:.4}",
        r.strict_micro.f1, r.lenient_micro.f1, r.rouge_l, r.bleu, r.sari, r.overall
    );

    let again = pipeline::cmd_classify(&config)?;
    println!("rerun of classify: {} backend calls (all cached)", again.backend_calls);

    let manifest = RunManifest::load(out.path())?;
    for stage in &manifest.stages {
        println!(
            "stage {:<9} outputs {:?}",
            stage.name,
            stage.outputs.keys().collect::<Vec<_>>()
        );
    }
    println!("tampered files: {:?}", manifest.verify(out.path()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
