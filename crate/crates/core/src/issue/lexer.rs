//! Line-level lexer feeding the stack-trace grammar.
//!
//! The grammar is stated over trace elements, so each (already cleaned) line
//! is classified as an exception header, a frame, an elided-frames marker or
//! anything else. All captured values borrow from the input line.

use std::sync::LazyLock;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineToken<'a> {
    ExceptionHeader {
        type_name: &'a str,
        message: Option<&'a str>,
        /// Introduced by `Caused by:` (or `Suppressed:`), i.e. a nested exception.
        nested: bool,
    },
    Frame {
        class: &'a str,
        method: &'a str,
        file: Option<&'a str>,
        line: Option<&'a str>,
    },
    /// `... 12 more` / `... 12 common frames omitted`
    Elided,
    Other,
}

static HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r#"^(?:(?P<nested>Caused by|Suppressed|Wrapped by):\s*|Exception in thread "[^"]*"\s+)?(?P<ty>[A-Za-z_$][\w$]*(?:\.[A-Za-z_$][\w$]*)*)(?:\s*:\s*(?P<msg>.*))?$"#,
    )
    .expect("header regex")
});

static THREAD_PREFIX: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"^Exception in thread ""#).expect("thread prefix regex"));

static EXCEPTION_SUFFIX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?:Exception|Error|Throwable|Failure|Fault|Panic|Exit)$").expect("suffix regex")
});

// Optional module / classloader prefixes such as `java.base/`, `java.base@17/`
// or `app//` precede the class name.
static FRAME: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"^at\s+(?:[\w.$@-]*/)*(?P<cls>[\w$]+(?:\.[\w$]+)*)\.(?P<m>[\w$<>-]+)\((?P<loc>[^()]*)\)(?:\s.*)?$",
    )
    .expect("frame regex")
});

static LOCATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?P<file>[\w$.-]+\.[A-Za-z]\w*)(?::(?P<line>\d+))?$").expect("location regex")
});

static ELIDED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^\.\.\.\s*\d+\s+(?:more|common frames omitted)\b").expect("elided regex")
});

pub fn lex_line(line: &str) -> LineToken<'_> {
    let t = line.trim();
    if t.is_empty() {
        return LineToken::Other;
    }
    if let Some(c) = FRAME.captures(t) {
        let class = c.name("cls").expect("cls group").as_str();
        let method = c.name("m").expect("m group").as_str();
        let loc = c.name("loc").expect("loc group").as_str().trim();
        let (file, line) = match LOCATION.captures(loc) {
            Some(l) => (
                Some(l.name("file").expect("file group").as_str()),
                l.name("line").map(|m| m.as_str()),
            ),
            None => (None, None),
        };
        return LineToken::Frame { class, method, file, line };
    }
    if ELIDED.is_match(t) {
        return LineToken::Elided;
    }
    if let Some(c) = HEADER.captures(t) {
        let ty = c.name("ty").expect("ty group").as_str();
        let nested = c.name("nested").is_some();
        let simple = ty.rsplit('.').next().unwrap_or(ty);
        let starts_upper = simple.chars().next().is_some_and(|ch| ch.is_ascii_uppercase());
        let looks_like_exception = EXCEPTION_SUFFIX.is_match(simple);
        let introduced = nested || THREAD_PREFIX.is_match(t);
        if starts_upper && ty.contains('.') && (looks_like_exception || introduced) {
            let message = c.name("msg").map(|m| m.as_str().trim()).filter(|m| !m.is_empty());
            return LineToken::ExceptionHeader { type_name: ty, message, nested };
        }
    }
    LineToken::Other
}
