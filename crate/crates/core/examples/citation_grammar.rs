// Parsing, emitting and truncating cited answers.
//
// ```bash
// cargo run --example citation_grammar
// ```

use ehrqa::citations::{collect_cited_ids, truncate_to_limit, word_count};
use ehrqa::{emit_answer, parse_answer};

pub fn run_example() -> anyhow::Result<()> {
    let raw = "The company launched a new product in April, and sales exceeded expectations in the first month |1,2|.\n\
               Customer feedback highlighted technical issues, and the technical team promised a software update to address them |3,4|.";
    let answer = parse_answer(raw)?;
    for (i, s) in answer.sentences().iter().enumerate() {
        println!("sentence {}: {:?} cites {}", i + 1, s.text, s.citations);
    }
    println!("canonical form:\n{}", emit_answer(&answer));
    println!(
        "words: {}, cited ids: {:?}",
        word_count(&answer),
        collect_cited_ids(&answer)
    );

    for bad in [
        "The research team published their findings |1-3|.",
        "A sentence without any citation.",
        "Repeated ids |2,2|.",
        "Zero is not a sentence id |0|.",
    ] {
        match parse_answer(bad) {
            Ok(_) => println!("accepted: {bad}"),
            Err(e) => println!("rejected: {bad:?}: {e}"),
        }
    }

    // a sentence cut by the word limit keeps every citation it carried
    let long =
        parse_answer("one two three four five |1|.\nsix seven eight nine ten eleven |2,3|.\ntwelve thirteen |4|.")?;
    for limit in [3, 8, 100] {
        let kept = truncate_to_limit(&long, limit);
        println!("limit {limit}: {}", emit_answer(&kept).replace('\n', " / "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> anyhow::Result<()> {
    run_example()
}
