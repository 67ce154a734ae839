//! Prompt payloads for the reward-model training formats, the policy-model
//! export and the remote subject line generator.
//!
//! Templates use `{name}` placeholders, filled in a single left-to-right pass
//! so substituted text is never re-scanned.

use thiserror::Error;

pub const POINTWISE_TEMPLATE: &str = "Text: {post}

Subject line: {subject_line}

Question: Is the above an excellent subject line for an email post of the given text?

An excellent subject line is coherent, informative, and engaging. We will send this email to our users hoping the users find it interesting and want to click on the email.

Answer with yes or no.

Answer:

###";

pub const PAIRWISE_TEMPLATE: &str = "Text: {post}

Subject line a: {subject_line_a}

Subject line b: {subject_line_b}

Question: Which subject line is more engaging for an email post?

An excellent subject line is coherent, informative, and engaging. We will send this email to our users hoping the users find it interesting and want to click on the email.

Answer with a or b.

Answer:

###";

pub const POLICY_TEMPLATE: &str = "We will send an email containing a post from a Nextdoor user. We want to use the most interesting part of the post as an email subject line.

Task description: Given a post, output the most interesting phrase in the post.

Post: {post}";

pub const BASE_GENERATOR_TEMPLATE: &str = "We will send an email containing a post from a Nextdoor user. We want to use the most interesting part of the post as an email subject line.

Task description: Given a post, output the most interesting phrase in the post.

Here are the requirements:

1. Extract the phrase as-is. Do not change any single character.

2. Do not paraphrase. Copy the exact phrase. If the phrase you selected has stop words like \"but\", \"and\", \"the\", keep them in the output.

3. Do not insert or remove any word.

3. If you cannot choose the most interesting phrase, return the first 10 words of the post.

5. Try to keep it within 10 words. If you cannot complete within 10 words, generate an incomplete line with \"...\"

6. Put the most important words in the beginning.

7. If the first 10 words of the post contain unique and interesting words, reuse it.

8. Make a subject line that brings curiosity. If the subject line gets too long, cut the phrase before the last part. For example, if the post has \"Yesterday, my son found a dog barking at other people\", output \"Yesterday, my son found a dog barking at ...\"

9. If the first 10 words of the post contain informal words, you can keep these words in the subject line. We want to respect the post content in the subject line.

10. If the post has a phrase starting with \"I\" in the first 10 words, please use the same words in the subject line. It will make the subject line more personal. For example, if the post has \"Hi All, I left my phone\", use \"I left my phone\" in the subject line.

11. If the some part of the post is all capitals, it is okay to extract that part. That part is what user wanted to emphasize. For example, extract all capital phrases like \"CRIME ALERT\".

12. Do not use people's names in the subject line.

13. Do not add \"Subject line:\" in the output. Just output the content of the subject line.

14. Capitalize the first character of the subject line. If the part you selected starts with a lower-cased character, capitalize the character.


These are examples.

Example 1



Post: {post}";

/// Marker that every generator prompt ends with, followed by the post text.
pub const POST_MARKER: &str = "Post: ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("placeholder {{{0}}} has no value")]
    MissingValue(String),
    #[error("placeholder {{{name}}} appears {count} times, expected exactly once")]
    PlaceholderCount { name: String, count: usize },
    #[error("rendered text does not match the template: {0}")]
    Unparseable(&'static str),
}

/// Number of `{name}` occurrences in `template`.
pub fn placeholder_count(template: &str, name: &str) -> usize {
    template.matches(&format!("{{{name}}}")).count()
}

/// Substitutes `{name}` placeholders in one pass. Braces that do not form a
/// known placeholder name are copied through literally.
pub fn render(template: &str, values: &[(&str, &str)]) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_placeholder_name(&after[..close]) => {
                let name = &after[..close];
                let value = values
                    .iter()
                    .find(|(k, _)| *k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| TemplateError::MissingValue(name.to_string()))?;
                out.push_str(value);
                rest = &after[close + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

fn is_placeholder_name(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_lowercase() || c == '_')
}

/// Escapes a field so it cannot break the line structure of the reward
/// templates: backslashes, line breaks and `#` are backslash-escaped.
pub fn escape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    for c in field.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '#' => out.push_str("\\#"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(field: &str) -> String {
    let mut out = String::with_capacity(field.len());
    let mut chars = field.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => out.push(other),
            None => out.push('\\'),
        }
    }
    out
}

pub fn render_pointwise(post: &str, subject: &str) -> String {
    render(
        POINTWISE_TEMPLATE,
        &[("post", &escape_field(post)), ("subject_line", &escape_field(subject))],
    )
    .expect("pointwise template placeholders are fixed")
}

pub fn render_pairwise(post: &str, subject_a: &str, subject_b: &str) -> String {
    render(
        PAIRWISE_TEMPLATE,
        &[
            ("post", &escape_field(post)),
            ("subject_line_a", &escape_field(subject_a)),
            ("subject_line_b", &escape_field(subject_b)),
        ],
    )
    .expect("pairwise template placeholders are fixed")
}

fn field_after<'a>(lines: &[&'a str], index: usize, prefix: &'static str) -> Result<&'a str, TemplateError> {
    lines
        .get(index)
        .and_then(|l| l.strip_prefix(prefix))
        .ok_or(TemplateError::Unparseable(prefix))
}

/// Recovers `(post, subject)` from a rendered pointwise input.
pub fn parse_pointwise(input: &str) -> Result<(String, String), TemplateError> {
    let lines: Vec<&str> = input.split('\n').collect();
    let post = field_after(&lines, 0, "Text: ")?;
    let subject = field_after(&lines, 2, "Subject line: ")?;
    Ok((unescape_field(post), unescape_field(subject)))
}

/// Recovers `(post, subject_a, subject_b)` from a rendered pairwise input.
pub fn parse_pairwise(input: &str) -> Result<(String, String, String), TemplateError> {
    let lines: Vec<&str> = input.split('\n').collect();
    let post = field_after(&lines, 0, "Text: ")?;
    let a = field_after(&lines, 2, "Subject line a: ")?;
    let b = field_after(&lines, 4, "Subject line b: ")?;
    Ok((unescape_field(post), unescape_field(a), unescape_field(b)))
}

pub fn render_policy(post: &str) -> String {
    render(POLICY_TEMPLATE, &[("post", post)]).expect("policy template placeholders are fixed")
}

/// Text following the first [`POST_MARKER`] in a generator prompt. The
/// built-in templates carry the marker only once, right before the post.
pub fn extract_post(prompt: &str) -> Option<&str> {
    prompt.find(POST_MARKER).map(|i| &prompt[i + POST_MARKER.len()..])
}
