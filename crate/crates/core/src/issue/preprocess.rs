use super::fences::separate_code_blocks;
use super::trace::find_traces;
use super::{IssueRecord, RawIssue, RecordDiagnostics, StackTrace};

/// Turns a raw issue into a structured record.
///
/// Body and every comment go through code-block separation and trace
/// detection. Code blocks that contain traces stay listed as code blocks.
pub fn preprocess(raw: &RawIssue) -> IssueRecord {
    let mut diagnostics = RecordDiagnostics::default();
    let mut code_blocks = Vec::new();
    let mut stack_traces = Vec::new();

    let body_split = separate_code_blocks(&raw.body);
    let prose_text = body_split.prose.clone();
    absorb(&raw.body, "body", &mut code_blocks, &mut stack_traces, &mut diagnostics);

    for (i, comment) in raw.comments.iter().enumerate() {
        absorb(comment, &format!("comment {}", i + 1), &mut code_blocks, &mut stack_traces, &mut diagnostics);
    }

    IssueRecord {
        repo: raw.repo.clone(),
        number: raw.number,
        title: raw.title.clone(),
        state: raw.state,
        labels: raw.labels.clone(),
        assignees: raw.assignees.clone(),
        created_at: raw.created_at,
        updated_at: raw.updated_at,
        body: raw.body.clone(),
        comments: raw.comments.clone(),
        prose_text,
        code_blocks,
        stack_traces,
        diagnostics,
    }
}

fn absorb(
    text: &str,
    origin: &str,
    code_blocks: &mut Vec<String>,
    stack_traces: &mut Vec<StackTrace>,
    diagnostics: &mut RecordDiagnostics,
) {
    let split = separate_code_blocks(text);
    diagnostics.warnings.extend(split.warnings.iter().map(|w| format!("{origin}: {w}")));

    let mut scan = |segment: &str| {
        let (traces, outcome) = find_traces(segment);
        diagnostics.skipped_lines += outcome.skipped_lines;
        for note in outcome.notes {
            let note = format!("{origin}: {note}");
            if !diagnostics.warnings.contains(&note) {
                diagnostics.warnings.push(note);
            }
        }
        stack_traces.extend(traces);
    };

    // Scan in source order: prose runs between blocks, then each block.
    let mut cursor = 0;
    for (block, span) in split.code_blocks.iter().zip(&split.block_spans) {
        if span.start > cursor {
            scan(&text[cursor..span.start]);
        }
        scan(block);
        cursor = span.end;
    }
    if cursor < text.len() {
        scan(&text[cursor..]);
    }
    code_blocks.extend(split.code_blocks);
}
