mod threshold_policies {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/threshold_policies.rs"));
}

mod citation_grammar {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/citation_grammar.rs"));
}

mod classify_with_oracle {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/classify_with_oracle.rs"));
}

mod compose_answer {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/compose_answer.rs"));
}

mod scoring_tables {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/scoring_tables.rs"));
}

mod full_pipeline {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/full_pipeline.rs"));
}

mod calibration {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/calibration.rs"));
}

mod openai_backend {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/openai_backend.rs"));
}

#[test]
fn threshold_policies_runs() {
    threshold_policies::run_example().expect("threshold_policies example should run");
}

#[test]
fn citation_grammar_runs() {
    citation_grammar::run_example().expect("citation_grammar example should run");
}

#[test]
fn classify_with_oracle_runs() {
    classify_with_oracle::run_example().expect("classify_with_oracle example should run");
}

#[test]
fn compose_answer_runs() {
    compose_answer::run_example().expect("compose_answer example should run");
}

#[test]
fn scoring_tables_runs() {
    scoring_tables::run_example().expect("scoring_tables example should run");
}

#[test]
fn full_pipeline_runs() {
    full_pipeline::run_example().expect("full_pipeline example should run");
}

#[test]
fn calibration_runs() {
    calibration::run_example().expect("calibration example should run");
}

#[test]
fn openai_backend_runs() {
    // only exercises the offline path; a configured endpoint would make this a network test
    if std::env::var(ehrqa::gateway::http::ENDPOINT_ENV).is_ok() {
        return;
    }
    openai_backend::run_example().expect("openai_backend example should run");
}
