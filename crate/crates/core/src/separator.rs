//! The `#k` sentence separator convention shared by rendering and recovery.
//!
//! A separator is a whitespace-delimited token consisting of `#` followed by
//! one or more ASCII digits. Fragments such as `C#5` or `#5a` are plain text.

/// Index carried by a separator token, if `token` is one.
pub fn separator_index(token: &str) -> Option<usize> {
    let digits = token.strip_prefix('#')?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    // Absurdly long digit runs saturate; they can never be a valid index.
    Some(digits.parse().unwrap_or(usize::MAX))
}

pub fn is_separator_token(token: &str) -> bool {
    separator_index(token).is_some()
}

/// `"#1 s1 #2 s2 ... #n sn"`, numbering from 1.
pub fn render_separated<S: AsRef<str>>(sentences: &[S]) -> String {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push('#');
        out.push_str(&(i + 1).to_string());
        out.push(' ');
        out.push_str(s.as_ref());
    }
    out
}

/// Removes every separator token and joins the remaining tokens with single
/// spaces.
pub fn strip_separators(text: &str) -> String {
    text.split_whitespace()
        .filter(|t| !is_separator_token(t))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Byte spans of whitespace-delimited tokens.
pub(crate) fn token_spans(text: &str) -> impl Iterator<Item = (usize, usize)> + '_ {
    let mut start = None;
    let mut chars = text.char_indices().chain(std::iter::once((text.len(), ' ')));
    std::iter::from_fn(move || {
        for (i, c) in chars.by_ref() {
            match (start, c.is_whitespace()) {
                (None, false) => start = Some(i),
                (Some(s), true) => {
                    start = None;
                    return Some((s, i));
                }
                _ => {}
            }
        }
        None
    })
}
