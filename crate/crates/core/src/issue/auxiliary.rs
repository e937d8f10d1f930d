//! Removal of crash-dump noise: timestamps, memory addresses and thread-dump
//! banners.

use std::borrow::Cow;
use std::sync::LazyLock;

use regex::Regex;

use super::lexer::{lex_line, LineToken};

static LEADING_NOISE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"^\s*(?:",
        // bracketed forms may be glued to the next token: `[2023-05-01 08:00:00,1][WARN]`
        r"\[\d{4}-\d{2}-\d{2}[T ][^\]]*\]\s*",
        r"|\[\d{2}:\d{2}:\d{2}[^\]]*\]\s*",
        r"|\[\d{10}(?:\d{3}|\.\d+)?\]\s*",
        r"|[<\[]0x[0-9a-fA-F]+[>\]]:?\s*",
        r"|(?:",
        // ISO-8601 date-time
        r"\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(?:[.,]\d+)?(?:Z|[+-]\d{2}:?\d{2})?",
        r"|\d{2}:\d{2}:\d{2}(?:[.,]\d+)?",
        // Unix epoch seconds or milliseconds
        r"|\d{10}(?:\d{3}|\.\d+)?",
        r"|0x[0-9a-fA-F]+:?",
        r")(?:\s+|$)",
        r")"
    ))
    .expect("leading noise regex")
});

static INLINE_HEX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"[<\[]?\b0x[0-9a-fA-F]+\b[>\]]?").expect("inline hex regex")
});

static BANNER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"^\s*(?:",
        r"Full thread dump\b",
        r#"|"[^"]*"\s.*\b(?:prio|tid|nid)="#,
        r"|java\.lang\.Thread\.State:",
        r"|-\s+(?:locked|waiting on|waiting to lock|parking to wait for|eliminated)\s+<",
        r"|Locked ownable synchronizers:",
        r"|JNI global (?:refs|references):",
        r"|Heap\s*$",
        r")"
    ))
    .expect("banner regex")
});

/// Cleans one line. `None` means the line is pure noise and should be dropped.
///
/// Leading timestamps and addresses are cut off as a prefix, so recognized
/// frames and headers stay exact substrings of the input. Inline addresses are
/// only removed from lines that are neither frames nor headers.
pub fn clean_line(line: &str) -> Option<Cow<'_, str>> {
    let mut rest = line;
    let mut stripped = false;
    while let Some(m) = LEADING_NOISE.find(rest) {
        if m.end() == 0 {
            break;
        }
        rest = &rest[m.end()..];
        stripped = true;
    }
    if (stripped && rest.trim().is_empty()) || BANNER.is_match(rest) {
        return None;
    }
    match lex_line(rest) {
        LineToken::Other if INLINE_HEX.is_match(rest) => {
            let replaced = INLINE_HEX.replace_all(rest, "");
            let collapsed = replaced.split_whitespace().collect::<Vec<_>>().join(" ");
            if collapsed.is_empty() {
                None
            } else {
                Some(Cow::Owned(collapsed))
            }
        }
        _ => Some(Cow::Borrowed(rest)),
    }
}

/// Applies [`clean_line`] to every line, dropping pure-noise lines.
pub fn strip_auxiliary<S: AsRef<str>>(lines: &[S]) -> Vec<String> {
    lines
        .iter()
        .filter_map(|l| clean_line(l.as_ref()).map(Cow::into_owned))
        .collect()
}
