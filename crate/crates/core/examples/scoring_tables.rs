// Scorer arithmetic: confusion counts to precision, recall and F1, the
// overall score, and the lexical metrics.
//
// ```bash
// cargo run --example scoring_tables
// ```

use ehrqa::metrics::{bleu, overall, prf, rouge_l, sari, ConfusionCounts};

pub fn run_example() -> anyhow::Result<()> {
    println!("three-class sentence classification");
    let strict = [
        ("essential", ConfusionCounts::new(64, 67, 74, 223)),
        ("supplementary", ConfusionCounts::new(18, 89, 33, 288)),
        ("not-relevant", ConfusionCounts::new(130, 60, 109, 129)),
    ];
    let lenient = [
        ("relevant", ConfusionCounts::new(129, 109, 60, 130)),
        ("not-relevant", ConfusionCounts::new(130, 60, 109, 129)),
    ];
    for (name, c) in strict {
        let s = prf(&c);
        println!("  {name:<14} P={:.4} R={:.4} F1={:.4}", s.precision, s.recall, s.f1);
    }
    println!("binary (essential and supplementary merged)");
    for (name, c) in lenient {
        let s = prf(&c);
        println!("  {name:<14} P={:.4} R={:.4} F1={:.4}", s.precision, s.recall, s.f1);
    }

    println!("\noverall = mean(factuality, relevance)");
    for (name, f, r) in [
        ("8B lenient", 0.527, 0.321),
        ("gold lenient", 0.8440, 0.3939),
        ("gold strict", 1.0, 0.4916),
    ] {
        println!("  {name:<13} {:.4}", overall(f, r));
    }

    let note = "the patient was admitted with chest pain . troponin was negative twice";
    let reference = "chest pain was not a heart attack because troponin was negative";
    println!("\nlexical metrics against {reference:?}");
    for cand in [
        "troponin was negative twice so chest pain was not a heart attack",
        "the patient was admitted with chest pain",
        reference,
    ] {
        println!(
            "  rouge_l={:.4} bleu={:.4} sari={:.4}  {cand:?}",
            rouge_l(cand, reference),
            bleu(cand, &[reference]),
            sari(note, cand, &[reference])?
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
