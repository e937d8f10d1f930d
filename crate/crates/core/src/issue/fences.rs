//! Separation of fenced code blocks from issue prose.

use std::ops::Range;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeSplit {
    pub prose: String,
    pub code_blocks: Vec<String>,
    /// Byte range of each block's content within the input.
    pub block_spans: Vec<Range<usize>>,
    pub warnings: Vec<String>,
}

fn fence_len(line: &str) -> Option<usize> {
    let t = line.trim_start();
    if line.len() - t.len() > 3 {
        return None;
    }
    let n = t.bytes().take_while(|&b| b == b'`').count();
    (n >= 3).then_some(n)
}

/// Splits `body` into prose and triple-backtick code blocks (language tag
/// optional). Block content is kept verbatim; fence lines belong to neither
/// side. An unterminated fence turns the rest of the body into one block.
pub fn separate_code_blocks(body: &str) -> CodeSplit {
    let mut split = CodeSplit::default();
    let mut prose_lines: Vec<&str> = Vec::new();
    // (fence length, content start offset, fence line number)
    let mut open: Option<(usize, usize, usize)> = None;
    let mut offset = 0;

    for (lineno, raw) in body.split('\n').enumerate() {
        let line_start = offset;
        let line_end = offset + raw.len();
        offset = line_end + 1;
        let line = raw.trim_end_matches('\r');

        match open {
            None => match fence_len(line) {
                Some(n) => open = Some((n, offset.min(body.len()), lineno + 1)),
                None => prose_lines.push(raw),
            },
            Some((n, start, _)) => {
                let closes = fence_len(line).is_some_and(|m| m >= n)
                    && line.trim().bytes().all(|b| b == b'`');
                if closes {
                    let end = line_start.saturating_sub(1).max(start);
                    split.code_blocks.push(body[start..end].to_string());
                    split.block_spans.push(start..end);
                    open = None;
                }
            }
        }
    }
    if let Some((_, start, lineno)) = open {
        split.code_blocks.push(body[start..].to_string());
        split.block_spans.push(start..body.len());
        split.warnings.push(format!(
            "unterminated code fence opened on line {lineno}; rest of the text treated as code"
        ));
    }
    split.prose = prose_lines.join("\n");
    split
}
