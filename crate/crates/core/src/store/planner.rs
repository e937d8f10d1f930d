//! Natural-language question to [`StructuredQuery`] planning.

use super::query::StructuredQuery;
use crate::llm::LlmError;
use crate::prompts::{PLAN_QUERY, PLAN_QUERY_RETRY};
use crate::transcript::{Session, Stage};

#[derive(Debug, Clone, thiserror::Error)]
pub enum PlanningError {
    #[error("query planning needs a non-empty question")]
    EmptyQuestion,
    #[error("query-directed retrieval failure: {0}")]
    Unparseable(String),
    #[error("query planning backend error: {0}")]
    Backend(#[from] LlmError),
}

/// Pulls the first JSON object out of a reply, tolerating code fences and
/// surrounding prose.
fn extract_json(reply: &str) -> &str {
    let start = reply.find('{');
    let end = reply.rfind('}');
    match (start, end) {
        (Some(s), Some(e)) if e > s => &reply[s..=e],
        _ => reply.trim(),
    }
}

fn parse_reply(reply: &str) -> Result<StructuredQuery, String> {
    StructuredQuery::from_json(extract_json(reply)).map_err(|e| e.0)
}

/// Asks the backend to translate `question` into a structured query. An
/// unusable reply gets one retry with the parse problem explained.
pub fn plan_query(question: &str, session: &Session<'_>) -> Result<StructuredQuery, PlanningError> {
    if question.trim().is_empty() {
        return Err(PlanningError::EmptyQuestion);
    }
    let reply = session.call(Stage::Plan, PLAN_QUERY.id, PLAN_QUERY.render(&[("question", question)]))?;
    let problem = match parse_reply(&reply) {
        Ok(q) => return Ok(q),
        Err(problem) => problem,
    };
    let retry = PLAN_QUERY_RETRY.render(&[("question", question), ("reply", &reply), ("problem", &problem)]);
    let second = session.call(Stage::Plan, PLAN_QUERY_RETRY.id, retry)?;
    parse_reply(&second).map_err(PlanningError::Unparseable)
}
