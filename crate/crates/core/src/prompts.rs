//! Versioned prompt templates.
//!
//! Each template is a text asset made of `[system]` and `[user]` sections.
//! `{name}` placeholders are filled in one pass, so substituted values are
//! never expanded again.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;

use crate::llm::{ChatMessage, Role};

#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub id: &'static str,
    sections: Vec<(Role, String)>,
}

static PLACEHOLDER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\{([a-z_]+)\}").expect("placeholder regex"));

impl PromptTemplate {
    fn parse(id: &'static str, source: &str) -> Self {
        let mut sections: Vec<(Role, String)> = Vec::new();
        for line in source.lines() {
            let role = match line.trim_end() {
                "[system]" => Some(Role::System),
                "[user]" => Some(Role::User),
                "[assistant]" => Some(Role::Assistant),
                _ => None,
            };
            match (role, sections.last_mut()) {
                (Some(role), _) => sections.push((role, String::new())),
                (None, Some((_, text))) => {
                    if !text.is_empty() {
                        text.push('\n');
                    }
                    text.push_str(line);
                }
                (None, None) => panic!("prompt {id}: text before the first section marker"),
            }
        }
        for (_, text) in &mut sections {
            let trimmed = text.trim_end().to_string();
            *text = trimmed;
        }
        assert!(!sections.is_empty(), "prompt {id} has no sections");
        Self { id, sections }
    }

    /// Placeholder names used by the template.
    pub fn placeholders(&self) -> BTreeSet<&str> {
        self.sections
            .iter()
            .flat_map(|(_, t)| PLACEHOLDER.captures_iter(t).map(|c| c.get(1).expect("group").as_str()))
            .collect()
    }

    /// The system section, verbatim.
    pub fn instruction(&self) -> &str {
        self.sections
            .iter()
            .find(|(r, _)| *r == Role::System)
            .map(|(_, t)| t.as_str())
            .unwrap_or_default()
    }

    /// Fills placeholders. Panics when a placeholder has no value, which is
    /// a programming error in the caller.
    pub fn render(&self, vars: &[(&str, &str)]) -> Vec<ChatMessage> {
        self.sections
            .iter()
            .map(|(role, text)| {
                let filled = PLACEHOLDER.replace_all(text, |c: &regex::Captures<'_>| {
                    let name = &c[1];
                    vars.iter()
                        .find(|(k, _)| *k == name)
                        .map(|(_, v)| v.to_string())
                        .unwrap_or_else(|| panic!("prompt {}: no value for {{{name}}}", self.id))
                });
                ChatMessage { role: *role, text: filled.into_owned() }
            })
            .collect()
    }
}

macro_rules! template {
    ($static:ident, $id:literal, $file:literal) => {
        pub static $static: LazyLock<PromptTemplate> =
            LazyLock::new(|| PromptTemplate::parse($id, include_str!(concat!("../assets/prompts/", $file))));
    };
}

template!(RAG_ANSWER, "rag-answer/v1", "rag-answer.txt");
template!(TRANSFORM_YN, "transform-yn/v1", "transform-yn.txt");
template!(TRANSFORM_FACT, "transform-fact/v1", "transform-fact.txt");
template!(TRANSFORM_SUMMARY, "transform-summary/v1", "transform-summary.txt");
template!(CLASSIFY_TYPE, "classify-type/v1", "classify-type.txt");
template!(PLAN_QUERY, "plan-query/v1", "plan-query.txt");
template!(PLAN_QUERY_RETRY, "plan-query-retry/v1", "plan-query-retry.txt");
template!(COVE_FOLLOWUPS, "cove-followups/v1", "cove-followups.txt");
template!(COVE_SYNTHESIS, "cove-synthesis/v1", "cove-synthesis.txt");
template!(MT_MUTATE, "mt-mutate/v1", "mt-mutate.txt");
template!(MT_MUTATE_RETRY, "mt-mutate-retry/v1", "mt-mutate-retry.txt");
template!(MT_REPHRASE, "mt-rephrase/v1", "mt-rephrase.txt");
template!(GRADE_YN, "grade-yn/v1", "grade-yn.txt");

pub fn all() -> [&'static PromptTemplate; 13] {
    [
        &RAG_ANSWER,
        &TRANSFORM_YN,
        &TRANSFORM_FACT,
        &TRANSFORM_SUMMARY,
        &CLASSIFY_TYPE,
        &PLAN_QUERY,
        &PLAN_QUERY_RETRY,
        &COVE_FOLLOWUPS,
        &COVE_SYNTHESIS,
        &MT_MUTATE,
        &MT_MUTATE_RETRY,
        &MT_REPHRASE,
        &GRADE_YN,
    ]
}

/// The template whose system instruction opens `messages`, if any.
pub fn identify(messages: &[ChatMessage]) -> Option<&'static PromptTemplate> {
    let first = messages.first().filter(|m| m.role == Role::System)?;
    all().into_iter().find(|t| t.instruction() == first.text)
}
