//! Structured queries over issue records.

use std::collections::BTreeMap;
use std::num::NonZeroUsize;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::issue::{ElementKind, IssueKey, IssueRecord, IssueState};

/// Time window on a timestamp field. All bounds present must hold.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DateRange {
    /// Inclusive lower bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<DateTime<Utc>>,
    /// Exclusive upper bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub before: Option<DateTime<Utc>>,
    /// Strictly older than `now - N days`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub older_than_days: Option<u32>,
    /// At or after `now - N days`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_days: Option<u32>,
}

impl DateRange {
    pub fn contains(&self, ts: DateTime<Utc>, now: DateTime<Utc>) -> bool {
        self.after.is_none_or(|a| ts >= a)
            && self.before.is_none_or(|b| ts < b)
            && self.older_than_days.is_none_or(|d| ts < now - Duration::days(d.into()))
            && self.within_days.is_none_or(|d| ts >= now - Duration::days(d.into()))
    }

    fn is_empty(&self) -> bool {
        self == &DateRange::default()
    }
}

/// One conjunct of a [`StructuredQuery`].
///
/// Text comparisons on labels, assignees and repo are case-insensitive.
/// `exception_type` and `class` match either the fully qualified name or its
/// last segment; `file` matches the file name exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case", deny_unknown_fields)]
pub enum Predicate {
    Label { value: String },
    Assignee { value: String },
    State { value: IssueState },
    CreatedAt {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        after: Option<DateTime<Utc>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        before: Option<DateTime<Utc>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        older_than_days: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        within_days: Option<u32>,
    },
    UpdatedAt {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        after: Option<DateTime<Utc>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        before: Option<DateTime<Utc>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        older_than_days: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        within_days: Option<u32>,
    },
    ExceptionType { value: String },
    File { value: String },
    Class { value: String },
    Repo { value: String },
    /// Issue number in the given set.
    Number { values: Vec<u64> },
}

impl Predicate {
    pub fn created(range: DateRange) -> Self {
        Predicate::CreatedAt {
            after: range.after,
            before: range.before,
            older_than_days: range.older_than_days,
            within_days: range.within_days,
        }
    }

    pub fn updated(range: DateRange) -> Self {
        Predicate::UpdatedAt {
            after: range.after,
            before: range.before,
            older_than_days: range.older_than_days,
            within_days: range.within_days,
        }
    }

    fn range(&self) -> Option<DateRange> {
        match self {
            Predicate::CreatedAt { after, before, older_than_days, within_days }
            | Predicate::UpdatedAt { after, before, older_than_days, within_days } => Some(DateRange {
                after: *after,
                before: *before,
                older_than_days: *older_than_days,
                within_days: *within_days,
            }),
            _ => None,
        }
    }

    pub fn matches(&self, record: &IssueRecord, now: DateTime<Utc>) -> bool {
        let eq = |a: &str, b: &str| a.trim().eq_ignore_ascii_case(b.trim());
        match self {
            Predicate::Label { value } => record.labels.iter().any(|l| eq(l, value)),
            Predicate::Assignee { value } => record.assignees.iter().any(|a| eq(a, value)),
            Predicate::State { value } => record.state == *value,
            Predicate::CreatedAt { .. } => {
                self.range().expect("date predicate").contains(record.created_at, now)
            }
            Predicate::UpdatedAt { .. } => {
                self.range().expect("date predicate").contains(record.updated_at, now)
            }
            Predicate::ExceptionType { value } => {
                element_values(record, ElementKind::ExceptionType).any(|v| qualified_match(v, value))
            }
            Predicate::Class { value } => {
                element_values(record, ElementKind::ClassElem).any(|v| qualified_match(v, value))
            }
            Predicate::File { value } => {
                element_values(record, ElementKind::FileElem).any(|v| v == value.trim())
            }
            Predicate::Repo { value } => eq(&record.repo, value),
            Predicate::Number { values } => values.contains(&record.number),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            Predicate::Number { values } if values.is_empty() => {
                Err("number predicate needs at least one value".into())
            }
            Predicate::CreatedAt { .. } | Predicate::UpdatedAt { .. }
                if self.range().is_some_and(|r| r.is_empty()) =>
            {
                Err("date predicate needs at least one bound".into())
            }
            _ => Ok(()),
        }
    }
}

fn element_values(record: &IssueRecord, kind: ElementKind) -> impl Iterator<Item = &str> {
    record.stack_traces.iter().flat_map(move |t| t.values_of(kind))
}

/// `java.lang.Foo` matches `java.lang.Foo` and `Foo`.
pub(crate) fn qualified_match(value: &str, wanted: &str) -> bool {
    let wanted = wanted.trim();
    value == wanted || simple_name(value) == wanted
}

pub(crate) fn simple_name(value: &str) -> &str {
    value.rsplit('.').next().unwrap_or(value)
}

/// Fields available for projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Repo,
    Number,
    Title,
    State,
    Labels,
    Assignees,
    CreatedAt,
    UpdatedAt,
    ProseText,
    CodeBlocks,
    StackTraces,
    ExceptionTypes,
    Body,
    Comments,
}

impl Field {
    pub const ALL: [Field; 14] = [
        Field::Repo,
        Field::Number,
        Field::Title,
        Field::State,
        Field::Labels,
        Field::Assignees,
        Field::CreatedAt,
        Field::UpdatedAt,
        Field::ProseText,
        Field::CodeBlocks,
        Field::StackTraces,
        Field::ExceptionTypes,
        Field::Body,
        Field::Comments,
    ];

    pub fn name(self) -> String {
        serde_json::to_value(self)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default()
    }

    pub fn extract(self, r: &IssueRecord) -> Value {
        match self {
            Field::Repo => Value::from(r.repo.clone()),
            Field::Number => Value::from(r.number),
            Field::Title => Value::from(r.title.clone()),
            Field::State => Value::from(r.state.as_str()),
            Field::Labels => json(&r.labels),
            Field::Assignees => json(&r.assignees),
            Field::CreatedAt => Value::from(r.created_at.to_rfc3339()),
            Field::UpdatedAt => Value::from(r.updated_at.to_rfc3339()),
            Field::ProseText => Value::from(r.prose_text.clone()),
            Field::CodeBlocks => json(&r.code_blocks),
            Field::StackTraces => json(&r.stack_traces),
            Field::ExceptionTypes => json(&r.exception_types().collect::<Vec<_>>()),
            Field::Body => Value::from(r.body.clone()),
            Field::Comments => json(&r.comments),
        }
    }
}

fn json<T: Serialize + ?Sized>(value: &T) -> Value {
    serde_json::to_value(value).unwrap_or(Value::Null)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructuredQuery {
    #[serde(default)]
    pub filters: Vec<Predicate>,
    /// Explicit marker for an unfiltered query.
    #[serde(default)]
    pub select_all: bool,
    /// Empty means every field.
    #[serde(default)]
    pub projection: Vec<Field>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<NonZeroUsize>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid query: {0}")]
pub struct InvalidQuery(pub String);

impl StructuredQuery {
    pub fn select_all() -> Self {
        Self { select_all: true, ..Self::default() }
    }

    pub fn filter(predicates: impl IntoIterator<Item = Predicate>) -> Self {
        Self { filters: predicates.into_iter().collect(), ..Self::default() }
    }

    pub fn project(mut self, fields: impl IntoIterator<Item = Field>) -> Self {
        self.projection = fields.into_iter().collect();
        self
    }

    pub fn limit(mut self, n: usize) -> Self {
        self.limit = NonZeroUsize::new(n);
        self
    }

    /// Parses the JSON predicate schema; unknown fields or operators are
    /// rejected.
    pub fn from_json(text: &str) -> Result<Self, InvalidQuery> {
        let q: StructuredQuery =
            serde_json::from_str(text).map_err(|e| InvalidQuery(e.to_string()))?;
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<(), InvalidQuery> {
        if self.filters.is_empty() && !self.select_all {
            return Err(InvalidQuery("query needs at least one filter or select_all".into()));
        }
        for p in &self.filters {
            p.validate().map_err(InvalidQuery)?;
        }
        Ok(())
    }

    pub fn matches(&self, record: &IssueRecord, now: DateTime<Utc>) -> bool {
        self.filters.iter().all(|p| p.matches(record, now))
    }
}

/// One result row: the record key plus projected fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedRow {
    pub key: IssueKey,
    pub fields: BTreeMap<String, Value>,
}

impl ProjectedRow {
    pub fn project(record: &IssueRecord, projection: &[Field]) -> Self {
        let fields: &[Field] = if projection.is_empty() { &Field::ALL } else { projection };
        Self {
            key: record.key(),
            fields: fields.iter().map(|f| (f.name(), f.extract(record))).collect(),
        }
    }
}
