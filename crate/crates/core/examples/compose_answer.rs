// The three ways an answer is built: direct, summarized with citation
// repair, and the placeholder fallback.
//
// ```bash
// cargo run --example compose_answer
// ```

use std::sync::Arc;

use ehrqa::answer::{generate_answer, Branch, GenerationSettings};
use ehrqa::corpus::SentenceLabels;
use ehrqa::gateway::mock::ScriptKind;
use ehrqa::gateway::{ScriptRule, ScriptedBackend};
use ehrqa::{emit_answer, BackendProfile, CaseRecord, Gateway, NoteSentence, RelevanceLabel};

fn case() -> CaseRecord {
    let texts = [
        "Hemoglobin dropped from 9.8 to 6.7 over twelve hours while the patient remained on the medical ward.",
        "The patient reported black tarry stools since the prior evening and felt lightheaded when standing up.",
        "Two units of packed red blood cells were transfused with an appropriate rise in hemoglobin to 8.9 by the next afternoon.",
        "Endoscopy on the following morning revealed a duodenal ulcer with a visible vessel that was treated with two clips and an epinephrine injection.",
        "Visitors were limited to two at a time on the unit.",
    ];
    CaseRecord {
        case_id: "demo".into(),
        clinician_question: "Why was the patient given a blood transfusion?".into(),
        patient_question: None,
        sentences: texts
            .iter()
            .enumerate()
            .map(|(i, t)| NoteSentence {
                id: i as u32 + 1,
                text: t.to_string(),
            })
            .collect(),
        gold_labels: None,
    }
}

fn show(title: &str, branch: Branch, text: &str) {
    println!("{title} [{branch:?}]\n{text}\n");
}

pub fn run_example() -> anyhow::Result<()> {
    use RelevanceLabel::*;
    let case = case();
    let labels: SentenceLabels = [
        (1, Essential),
        (2, Essential),
        (3, Supplementary),
        (4, Supplementary),
        (5, NotRelevant),
    ]
    .into();

    // The scripted summarizer drops sentence 4 and invents a citation to 9.
    let summary =
        "Hemoglobin fell to 6.7 with black stools, so two units were transfused |1,2,3|.\nThe patient improved |9|.";
    let backend = ScriptedBackend::new(vec![
        ScriptRule::new("", vec![summary.into()]).for_kind(ScriptKind::Summarize)
    ]);
    let gateway = Gateway::new(Arc::new(backend), &BackendProfile::default());

    let strict = GenerationSettings {
        mode: ehrqa::SelectionMode::Strict,
        ..GenerationSettings::default()
    };
    let a = generate_answer(&case, &labels, &strict, &gateway, 0)?;
    show("strict selection fits the limit", a.branch, &emit_answer(&a.answer));

    let lenient = GenerationSettings::default();
    let a = generate_answer(&case, &labels, &lenient, &gateway, 0)?;
    show("lenient selection exceeds 75 words", a.branch, &emit_answer(&a.answer));

    let nothing: SentenceLabels = (1..=5).map(|id| (id, NotRelevant)).collect();
    for seed in [1, 2] {
        let a = generate_answer(&case, &nothing, &lenient, &gateway, seed)?;
        show(
            &format!("nothing relevant, seed {seed}"),
            a.branch,
            &emit_answer(&a.answer),
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
