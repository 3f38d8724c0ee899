// Classifies one sentence against a real OpenAI-compatible endpoint.
//
// Set `EHRQA_ENDPOINT` (for example `http://localhost:8000/v1`) and, if the
// server needs one, `EHRQA_API_KEY`. Without an endpoint the example only
// prints the request it would send.
//
// ```bash
// EHRQA_ENDPOINT=http://localhost:8000/v1 cargo run --example openai_backend
// ```

use std::sync::Arc;

use ehrqa::classifier::{build_classifier_prompt, parse_label, tally, FewShotExample};
use ehrqa::gateway::http::ENDPOINT_ENV;
use ehrqa::gateway::OpenAiBackend;
use ehrqa::{BackendProfile, Gateway, NoteSentence, RelevanceLabel};

pub fn run_example() -> anyhow::Result<()> {
    let shots = vec![
        FewShotExample {
            question: "What medications is the patient currently taking?".into(),
            context: "The patient is currently prescribed metformin and lisinopril.".into(),
            label: RelevanceLabel::Essential,
        },
        FewShotExample {
            question: "Has the patient experienced any recent falls?".into(),
            context: "The patient has a history of osteoarthritis in the knees.".into(),
            label: RelevanceLabel::Supplementary,
        },
        FewShotExample {
            question: "What medications is the patient currently taking?".into(),
            context: "The patient lives with their daughter and two grandchildren.".into(),
            label: RelevanceLabel::NotRelevant,
        },
    ];
    let sentence = NoteSentence {
        id: 1,
        text: "Apixaban 5 mg twice daily was started for stroke prevention.".into(),
    };
    let (system, user) = build_classifier_prompt("Why was the patient started on blood thinners?", &sentence, &shots)?;

    let Ok(endpoint) = std::env::var(ENDPOINT_ENV) else {
        println!("{ENDPOINT_ENV} not set; the user prompt would be:\n\n{user}");
        return Ok(());
    };
    let profile = BackendProfile {
        endpoint,
        model_name: std::env::var("EHRQA_MODEL").unwrap_or_else(|_| BackendProfile::default().model_name),
        ..BackendProfile::default()
    };
    let gateway = Gateway::new(Arc::new(OpenAiBackend::from_env(&profile)?), &profile);
    let samples = gateway.sample_n(&system, &user, 5, 1.0, 8)?;
    let parsed: Vec<_> = samples.iter().map(|s| parse_label(s)).collect();
    println!("samples: {samples:?}");
    println!("tally: {:?}", tally(&parsed));
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
