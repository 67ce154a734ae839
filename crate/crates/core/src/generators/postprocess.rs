use crate::text::{capitalize_first, truncate_words};

use super::GenerationError;

const LABEL: &str = "subject line:";

fn strip_label(text: &str) -> &str {
    let trimmed = text.trim_start();
    match trimmed.get(..LABEL.len()) {
        Some(head) if head.eq_ignore_ascii_case(LABEL) => trimmed[LABEL.len()..].trim_start(),
        _ => trimmed,
    }
}

fn strip_quotes(text: &str) -> &str {
    let t = text.trim();
    for (open, close) in [('"', '"'), ('“', '”')] {
        if t.len() >= 2 && t.starts_with(open) && t.ends_with(close) {
            return t[open.len_utf8()..t.len() - close.len_utf8()].trim();
        }
    }
    t
}

/// Cleans a raw generator completion into a servable subject line: drops a
/// leading "Subject line:" label and wrapping quotes, cuts to `max_words`
/// words with a "..." marker, and capitalizes the first character.
pub fn postprocess(text: &str, max_words: usize) -> Result<String, GenerationError> {
    let body = strip_quotes(strip_label(text));
    let (cut, _) = truncate_words(body, max_words);
    if cut.is_empty() {
        return Err(GenerationError::EmptyCandidate);
    }
    Ok(capitalize_first(&cut))
}
