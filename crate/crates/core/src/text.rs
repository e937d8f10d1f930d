//! Small text helpers shared across stages.

/// Collapses every whitespace run to a single space and trims both ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Issue numbers explicitly mentioned in `text`: standalone integers of 4 to 7
/// digits, optionally written as `#NNNN`. Order of first mention, deduplicated.
pub fn referenced_issue_numbers(text: &str) -> Vec<u64> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        let end = i;
        let len = end - start;
        if !(4..=7).contains(&len) {
            continue;
        }
        let before_ok = match start.checked_sub(1).map(|p| bytes[p]) {
            None => true,
            Some(b'#') => start < 2 || !is_word_byte(bytes[start - 2]),
            Some(b) => !is_word_byte(b) && b != b'.' && b != b'/' && b != b'-' && b != b':',
        };
        let after_ok = match bytes.get(end) {
            None => true,
            Some(b'.') => !bytes.get(end + 1).is_some_and(u8::is_ascii_digit),
            Some(b) => !is_word_byte(*b) && *b != b'-' && *b != b'/' && *b != b':',
        };
        if before_ok && after_ok {
            if let Ok(n) = text[start..end].parse::<u64>() {
                if !out.contains(&n) {
                    out.push(n);
                }
            }
        }
    }
    out
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

/// Lowercased alphanumeric word tokens.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Truncates to at most `max` characters on a char boundary.
pub fn truncate_chars(text: &str, max: usize) -> &str {
    match text.char_indices().nth(max) {
        Some((idx, _)) => &text[..idx],
        None => text,
    }
}
