use crate::text::{capitalize_first, truncate_words, word_count};

use super::GenerationError;

fn ends_sentence(token: &str) -> bool {
    token.ends_with(['.', '!', '?'])
}

/// First sentence of the post, cut to `max_words` words and capitalized.
///
/// A sentence ends at the first `.`, `!` or `?` followed by whitespace or the
/// end of the text. Without such a boundary the first `max_words` words are
/// used.
pub fn rule_based_subject(post: &str, max_words: usize) -> Result<String, GenerationError> {
    let tokens: Vec<&str> = post.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(GenerationError::EmptyPost);
    }
    let end = tokens
        .iter()
        .position(|t| ends_sentence(t))
        .map_or(tokens.len(), |i| i + 1);
    let sentence = tokens[..end].join(" ");
    let subject = if word_count(&sentence) > max_words {
        truncate_words(&sentence, max_words).0
    } else {
        sentence
    };
    Ok(capitalize_first(&subject))
}
