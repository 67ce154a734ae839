//! Word-level helpers shared by the generators and the featurizer.
//!
//! Words are maximal runs of non-whitespace (Unicode whitespace). A standalone
//! ellipsis token is a truncation marker, not a word.

/// Marker appended when a subject line is cut.
pub const ELLIPSIS: &str = "...";

pub fn is_ellipsis_marker(token: &str) -> bool {
    token == "..." || token == "…"
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().filter(|t| !is_ellipsis_marker(t)).count()
}

/// Keeps the first `max_words` words, joined by single spaces. Returns the
/// text and whether anything was cut; a cut text ends with [`ELLIPSIS`].
pub fn truncate_words(text: &str, max_words: usize) -> (String, bool) {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let mut kept = Vec::new();
    let mut counted = 0;
    let mut cut = false;
    for (i, tok) in tokens.iter().enumerate() {
        if is_ellipsis_marker(tok) {
            kept.push(*tok);
            continue;
        }
        if counted == max_words {
            cut = tokens[i..].iter().any(|t| !is_ellipsis_marker(t));
            break;
        }
        kept.push(*tok);
        counted += 1;
    }
    if !cut {
        return (kept.join(" "), false);
    }
    while kept.last().is_some_and(|t| is_ellipsis_marker(t)) {
        kept.pop();
    }
    let mut out = kept.join(" ");
    let trimmed_len = out.trim_end_matches([',', ';', ':', '-']).len();
    out.truncate(trimmed_len);
    if !out.ends_with(ELLIPSIS) && !out.ends_with('…') {
        out.push_str(ELLIPSIS);
    }
    (out, true)
}

/// Uppercases the first character; the rest is left untouched.
pub fn capitalize_first(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// True when the first character has no distinct uppercase form left to apply.
pub fn is_capitalized(text: &str) -> bool {
    match text.chars().next() {
        Some(c) => {
            let mut up = c.to_uppercase();
            up.next() == Some(c) && up.next().is_none()
        }
        None => false,
    }
}

/// Lowercased word with surrounding punctuation removed; empty for pure punctuation.
pub fn normalize_token(token: &str) -> String {
    token.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_skip_markers() {
        assert_eq!(word_count("a b c ..."), 3);
        assert_eq!(word_count("a b c..."), 3);
        assert_eq!(word_count("  "), 0);
        assert_eq!(word_count("tab\tand\nnewline\u{2003}em"), 4);
    }

    #[test]
    fn truncation_appends_marker_only_when_cut() {
        let twelve = "one two three four five six seven eight nine ten eleven twelve";
        let (out, cut) = truncate_words(twelve, 10);
        assert!(cut);
        assert_eq!(out, "one two three four five six seven eight nine ten...");
        assert_eq!(word_count(&out), 10);

        let (out, cut) = truncate_words("just a few words", 10);
        assert!(!cut);
        assert_eq!(out, "just a few words");
    }

    #[test]
    fn truncation_drops_trailing_comma_before_marker() {
        let (out, _) = truncate_words("Yesterday, my son found a dog, barking", 6);
        assert_eq!(out, "Yesterday, my son found a dog...");
    }

    #[test]
    fn capitalization() {
        assert_eq!(capitalize_first("hello there"), "Hello there");
        assert_eq!(capitalize_first("élan"), "Élan");
        assert_eq!(capitalize_first("123 go"), "123 go");
        assert!(is_capitalized("123 go"));
        assert!(!is_capitalized("hello"));
        assert!(!is_capitalized(""));
    }
}
