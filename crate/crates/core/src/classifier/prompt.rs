//! Few-shot prompt construction and label parsing.

use std::io::BufRead;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::corpus::{NoteSentence, RelevanceLabel};
use crate::prompts;

/// A labeled `Question / Context / Label` triplet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub question: String,
    pub context: String,
    pub label: RelevanceLabel,
}

/// Reads a shots pool: one `{"question", "context", "label"}` object per line.
pub fn parse_shots<R: BufRead>(reader: R) -> Result<Vec<FewShotExample>, ClassifierError> {
    let mut pool = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let shot: FewShotExample =
            serde_json::from_str(&line).map_err(|e| ClassifierError::ShotsPool(format!("line {}: {e}", idx + 1)))?;
        if shot.question.trim().is_empty() || shot.context.trim().is_empty() {
            return Err(ClassifierError::ShotsPool(format!(
                "line {}: question and context must be non-empty",
                idx + 1
            )));
        }
        pool.push(shot);
    }
    Ok(pool)
}

/// Draws `k` examples, `k / 3` from each class, in shuffled order.
pub fn sample_few_shot_set<R: Rng + ?Sized>(
    pool: &[FewShotExample],
    k: usize,
    rng: &mut R,
) -> Result<Vec<FewShotExample>, ClassifierError> {
    if k == 0 || k % 3 != 0 {
        return Err(ClassifierError::ShotCount(k));
    }
    let per_class = k / 3;
    let mut picked = Vec::with_capacity(k);
    for label in RelevanceLabel::ALL {
        let class: Vec<&FewShotExample> = pool.iter().filter(|s| s.label == label).collect();
        if class.len() < per_class {
            return Err(ClassifierError::InsufficientShots {
                label,
                needed: per_class,
                available: class.len(),
            });
        }
        picked.extend(class.choose_multiple(rng, per_class).map(|s| (*s).clone()));
    }
    picked.shuffle(rng);
    Ok(picked)
}

fn push_block(out: &mut String, question: &str, context: &str, label: Option<RelevanceLabel>) {
    out.push_str("Question: ");
    out.push_str(question);
    out.push_str("\nContext: ");
    out.push_str(context);
    out.push_str("\nLabel:");
    if let Some(label) = label {
        out.push(' ');
        out.push_str(label.as_str());
    }
}

/// Returns `(system_prompt, user_prompt)`. Each shot is a
/// `Question:/Context:/Label:` block; the target block comes last with an
/// empty label.
pub fn build_classifier_prompt(
    question: &str,
    sentence: &NoteSentence,
    shots: &[FewShotExample],
) -> Result<(String, String), ClassifierError> {
    if shots.is_empty() {
        return Err(ClassifierError::ShotCount(0));
    }
    let mut user = String::new();
    for shot in shots {
        push_block(&mut user, &shot.question, &shot.context, Some(shot.label));
        user.push_str("\n\n");
    }
    push_block(&mut user, question, &sentence.text, None);
    Ok((prompts::classifier_system().to_string(), user))
}

/// Reads a label out of raw model output, or `None` when the output is not
/// exactly one label.
pub fn parse_label(raw: &str) -> Option<RelevanceLabel> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let lower = line.to_lowercase();
    let body = lower.strip_prefix("label:").unwrap_or(&lower).trim();
    let body = body.trim_end_matches(['.', '!', '?', ',', ';', ':']).trim();
    RelevanceLabel::normalize(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shot(label: RelevanceLabel, i: usize) -> FewShotExample {
        FewShotExample {
            question: format!("q{i}"),
            context: format!("{label} context {i}"),
            label,
        }
    }

    fn pool(per: [usize; 3]) -> Vec<FewShotExample> {
        let mut out = Vec::new();
        for (label, n) in RelevanceLabel::ALL.into_iter().zip(per) {
            out.extend((0..n).map(|i| shot(label, i)));
        }
        out
    }

    #[test]
    fn balanced_thirty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = sample_few_shot_set(&pool([12, 11, 15]), 30, &mut rng).unwrap();
        assert_eq!(set.len(), 30);
        for label in RelevanceLabel::ALL {
            assert_eq!(set.iter().filter(|s| s.label == label).count(), 10);
        }
    }

    #[test]
    fn exact_pool_of_three() {
        let p = pool([1, 1, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut set = sample_few_shot_set(&p, 3, &mut rng).unwrap();
        set.sort_by_key(|s| s.label);
        assert_eq!(set, p);
    }

    #[test]
    fn insufficient_class_is_named() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_few_shot_set(&pool([10, 5, 10]), 30, &mut rng).unwrap_err();
        assert!(err.to_string().contains("insufficient supplementary examples"), "{err}");
        assert!(sample_few_shot_set(&pool([10, 10, 10]), 10, &mut rng).is_err());
    }

    #[test]
    fn prompt_layout() {
        let target = NoteSentence {
            id: 1,
            text: "Dialysis was started.".into(),
        };
        let (system, user) =
            build_classifier_prompt("Why dialysis?", &target, &[shot(RelevanceLabel::Essential, 0)]).unwrap();
        assert_eq!(system, prompts::classifier_system());
        assert_eq!(user.matches("Question:").count(), 2);
        assert_eq!(user.lines().last(), Some("Label:"));
        assert!(user.ends_with("Question: Why dialysis?\nContext: Dialysis was started.\nLabel:"));
    }

    #[test]
    fn renders_worked_shot() {
        let s = FewShotExample {
            question: "What medications is the patient currently taking?".into(),
            context: "The patient is currently prescribed metformin and lisinopril.".into(),
            label: RelevanceLabel::Essential,
        };
        let target = NoteSentence {
            id: 1,
            text: "x".into(),
        };
        let (_, user) = build_classifier_prompt("q", &target, &[s]).unwrap();
        assert!(user.starts_with(
            "Question: What medications is the patient currently taking?\n\
             Context: The patient is currently prescribed metformin and lisinopril.\n\
             Label: essential\n\n"
        ));
    }

    #[test]
    fn empty_shots_rejected() {
        let target = NoteSentence {
            id: 1,
            text: "x".into(),
        };
        assert!(build_classifier_prompt("q", &target, &[]).is_err());
    }

    #[test]
    fn parse_label_table() {
        use RelevanceLabel::*;
        let table = [
            ("essential", Some(Essential)),
            ("Label: Not-Relevant.", Some(NotRelevant)),
            ("  \nSupplementary\nbecause ...", Some(Supplementary)),
            ("ESSENTIAL!", Some(Essential)),
            ("label:essential", Some(Essential)),
            ("not relevant", Some(NotRelevant)),
            ("The sentence is essential because...", None),
            ("\"essential\"", None),
            ("", None),
            ("relevant", None),
        ];
        for (raw, expected) in table {
            assert_eq!(parse_label(raw), expected, "raw {raw:?}");
        }
    }
}
