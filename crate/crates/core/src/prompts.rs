//! Canonical prompt texts, embedded at build time.

const CLASSIFIER_SYSTEM: &str = include_str!("../assets/prompts/classifier_system.txt");
const SUMMARY_SYSTEM: &str = include_str!("../assets/prompts/summary_system.txt");

/// System instruction for sentence relevance classification.
pub fn classifier_system() -> &'static str {
    CLASSIFIER_SYSTEM.trim_end()
}

/// System instruction for citation-preserving summarization.
pub fn summary_system() -> &'static str {
    SUMMARY_SYSTEM.trim_end()
}

/// Which of the two pipeline prompts a system prompt belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptKind {
    Classify,
    Summarize,
    Other,
}

pub fn prompt_kind(system_prompt: &str) -> PromptKind {
    let s = system_prompt.trim_end();
    if s == classifier_system() {
        PromptKind::Classify
    } else if s == summary_system() {
        PromptKind::Summarize
    } else {
        PromptKind::Other
    }
}

/// The last blank-line separated block of a user prompt: the target
/// `Question:/Context:/Label:` triplet for classification, or the whole
/// sentence list for summarization.
pub fn target_block(user_prompt: &str) -> &str {
    let trimmed = user_prompt.trim_end();
    match trimmed.rfind("\n\n") {
        Some(pos) => trimmed[pos + 2..].trim_start_matches('\n'),
        None => trimmed,
    }
}
