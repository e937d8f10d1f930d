//! Response validation: chain-of-verification followed by metamorphic
//! testing of the question.
//!
//! Every backend call goes through the caller's [`Session`], so the
//! transcript lists each exchange exactly once and in issue order.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::llm::{cosine, Embedder};
use crate::prompts::{COVE_FOLLOWUPS, COVE_SYNTHESIS, MT_MUTATE, MT_MUTATE_RETRY, MT_REPHRASE, RAG_ANSWER};
use crate::query::QueryType;
use crate::retrieval::answer_prompt;
use crate::text::normalize_whitespace;
use crate::transcript::{Adjudication, QaPair, Session, Stage, StageStatus, ValidationTranscript, Verdict, Votes};

pub const MIN_FOLLOWUPS: usize = 1;
pub const MAX_FOLLOWUPS: usize = 5;
pub const MUTATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarity {
    Yes,
    No,
}

impl Polarity {
    pub fn flip(self) -> Self {
        match self {
            Polarity::Yes => Polarity::No,
            Polarity::No => Polarity::Yes,
        }
    }
}

/// Polarity of a leading yes/no token, ignoring leading punctuation and
/// markup.
pub fn leading_polarity(text: &str) -> Option<Polarity> {
    let word: String = text
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    match word.as_str() {
        "yes" | "yeah" | "yep" | "yup" => Some(Polarity::Yes),
        "no" | "nope" => Some(Polarity::No),
        _ => None,
    }
}

static UNCERTAIN: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)\b(?:not sure|unclear|unknown|cannot (?:be )?determine[d]?|can't (?:be )?determine[d]?|unable to determine|do(?:es)? not know|don't know|insufficient|not enough information|no information)\b",
    )
    .expect("uncertainty regex")
});

pub fn is_uncertain(text: &str) -> bool {
    UNCERTAIN.is_match(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Vote {
    Affirm,
    Deny,
    Abstain,
}

fn similarity(embedder: &dyn Embedder, a: &str, b: &str) -> f64 {
    match (embedder.embed(a), embedder.embed(b)) {
        (Ok(x), Ok(y)) => cosine(&x, &y).unwrap_or(0.0),
        _ => 0.0,
    }
}

/// Classifies one answer against the claim it is checked against.
///
/// Leading yes/no tokens on both sides are compared directly. Otherwise an
/// answer expressing uncertainty abstains, and the rest affirm iff their
/// cosine with the claim reaches `threshold`. The score, when computed, is
/// returned too.
pub fn vote(claim: &str, answer: &str, embedder: &dyn Embedder, threshold: f64) -> (Vote, Option<f64>) {
    if let (Some(c), Some(a)) = (leading_polarity(claim), leading_polarity(answer)) {
        return (if c == a { Vote::Affirm } else { Vote::Deny }, None);
    }
    if is_uncertain(answer) {
        return (Vote::Abstain, None);
    }
    let s = similarity(embedder, claim, answer);
    (if s >= threshold { Vote::Affirm } else { Vote::Deny }, Some(s))
}

fn tally(votes: &[Vote]) -> Votes {
    let mut t = Votes::default();
    for v in votes {
        match v {
            Vote::Affirm => t.affirm += 1,
            Vote::Deny => t.deny += 1,
            Vote::Abstain => t.abstain += 1,
        }
    }
    t
}

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^\s*(?:(?:follow[- ]up )?(?:question )?\d+\s*[.):-]|[-*\u{2022}]|q\d*\s*[:.)])\s*")
        .expect("list marker regex")
});

/// Non-empty lines with list markers removed.
pub fn parse_lines(reply: &str) -> Vec<String> {
    reply
        .lines()
        .map(|l| LIST_MARKER.replace(l, "").trim().to_string())
        .filter(|l| !l.is_empty())
        .collect()
}

/// Reason a validation stage did not run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip(pub String);

/// Generates follow-up questions, clamped to at most [`MAX_FOLLOWUPS`].
pub fn cove_generate_followups(question: &str, initial: &str, session: &Session<'_>) -> Result<Vec<String>, Skip> {
    let reply = session
        .call(Stage::CoveFollowups, COVE_FOLLOWUPS.id, COVE_FOLLOWUPS.render(&[("question", question), ("response", initial)]))
        .map_err(|e| Skip(format!("CoVe skipped: follow-up generation failed: {e}")))?;
    let mut lines = parse_lines(&reply);
    if lines.len() < MIN_FOLLOWUPS {
        return Err(Skip("CoVe skipped: no follow-up questions generated".into()));
    }
    lines.truncate(MAX_FOLLOWUPS);
    Ok(lines)
}

/// Votes of the follow-up answers against the initial response.
pub fn cove_votes(initial: &str, answers: &[String], embedder: &dyn Embedder, threshold: f64) -> Adjudication {
    let mut votes = Vec::new();
    let mut scores = Vec::new();
    for a in answers {
        let (v, s) = vote(initial, a, embedder, threshold);
        votes.push(v);
        scores.extend(s);
    }
    let t = tally(&votes);
    Adjudication {
        verdict: if t.affirm > t.deny { Verdict::Consistent } else { Verdict::Contradiction },
        polarity_votes: t,
        similarity_scores: scores,
    }
}

/// Keeps the initial response on a majority of affirming answers; otherwise
/// (majority deny or a tie) regenerates it with one synthesis call.
pub fn cove_adjudicate(
    question: &str,
    initial: &str,
    followups: &[QaPair],
    embedder: &dyn Embedder,
    threshold: f64,
    session: &Session<'_>,
    notes: &mut Vec<String>,
) -> (String, Adjudication) {
    let answers: Vec<String> = followups.iter().map(|p| p.answer.clone()).collect();
    let adj = cove_votes(initial, &answers, embedder, threshold);
    if adj.verdict == Verdict::Consistent {
        return (initial.to_string(), adj);
    }
    let verification =
        followups.iter().map(|p| format!("Q: {}\nA: {}", p.question, p.answer)).collect::<Vec<_>>().join("\n");
    let prompt = COVE_SYNTHESIS.render(&[("question", question), ("response", initial), ("verification", &verification)]);
    match session.call(Stage::CoveSynthesis, COVE_SYNTHESIS.id, prompt) {
        Ok(text) if !text.trim().is_empty() => (text, adj),
        Ok(_) => {
            notes.push("CoVe synthesis returned nothing; initial response kept".into());
            (initial.to_string(), adj)
        }
        Err(e) => {
            notes.push(format!("CoVe synthesis failed; initial response kept: {e}"));
            (initial.to_string(), adj)
        }
    }
}

fn same_question(a: &str, b: &str) -> bool {
    let norm = |s: &str| normalize_whitespace(s).trim_end_matches(['?', '.', '!']).to_lowercase();
    norm(a) == norm(b)
}

/// Up to three lines that differ from the original and from each other.
fn distinct_mutations(original: &str, lines: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for l in lines {
        if !same_question(l, original) && !out.iter().any(|o| same_question(o, l)) {
            out.push(l.clone());
        }
        if out.len() == MUTATIONS {
            break;
        }
    }
    out
}

/// Exactly three rephrasings of `question`.
///
/// A reply without three distinct rephrasings is re-requested once. If the
/// second reply still repeats itself but has three lines, they are accepted
/// with a note; fewer lines, or a backend failure, skip the stage.
pub fn mt_mutate(question: &str, session: &Session<'_>, notes: &mut Vec<String>) -> Result<Vec<String>, Skip> {
    let fail = |e: crate::llm::LlmError| Skip(format!("MT skipped: mutation generation failed: {e}"));
    let reply = session.call(Stage::MtMutate, MT_MUTATE.id, MT_MUTATE.render(&[("question", question)])).map_err(fail)?;
    let lines = parse_lines(&reply);
    let distinct = distinct_mutations(question, &lines);
    if distinct.len() == MUTATIONS {
        return Ok(distinct);
    }
    let previous = lines.join("\n");
    let retry = MT_MUTATE_RETRY.render(&[("question", question), ("previous", &previous)]);
    let reply = session.call(Stage::MtMutate, MT_MUTATE_RETRY.id, retry).map_err(fail)?;
    let lines = parse_lines(&reply);
    let distinct = distinct_mutations(question, &lines);
    if distinct.len() == MUTATIONS {
        return Ok(distinct);
    }
    if lines.len() >= MUTATIONS {
        notes.push("MT mutations still repeat after one re-request; accepted as generated".into());
        return Ok(lines.into_iter().take(MUTATIONS).collect());
    }
    Err(Skip(format!("MT skipped: only {} mutations generated", lines.len())))
}

/// What MT adjudication decided about the intermediate response.
#[derive(Debug, Clone, PartialEq)]
pub enum MtDecision {
    Keep,
    /// Replace with a mutated answer; YN answers are rephrased first.
    Adopt { index: usize, rephrase: bool },
}

/// Strength of an answer's stated polarity: 2 for a leading yes/no token, 1
/// for a polarity found by the grading phrase rules, 0 for none.
fn polarity_clarity(answer: &str, p: Polarity) -> u8 {
    if leading_polarity(answer) == Some(p) {
        2
    } else if crate::eval::phrase_polarity(answer) == Some(p) {
        1
    } else {
        0
    }
}

/// Decides the final response from the three mutated answers.
///
/// YN: the 2-of-3 majority polarity of the mutated answers wins; if it
/// differs from the intermediate's polarity, the winning answer with the
/// clearest polarity (first on ties) is adopted. Fact and Summary: the
/// answer with the highest mean cosine to the other two is adopted if that
/// mean reaches `threshold`, otherwise the intermediate stands.
pub fn mt_adjudicate(
    intermediate: &str,
    answers: &[String],
    qtype: QueryType,
    embedder: &dyn Embedder,
    threshold: f64,
    notes: &mut Vec<String>,
) -> (MtDecision, Adjudication) {
    debug_assert_eq!(answers.len(), MUTATIONS);
    match qtype {
        QueryType::YN => {
            let polarities: Vec<Option<Polarity>> =
                answers.iter().map(|a| leading_polarity(a).or_else(|| crate::eval::phrase_polarity(a))).collect();
            let yes = polarities.iter().filter(|p| **p == Some(Polarity::Yes)).count();
            let no = polarities.iter().filter(|p| **p == Some(Polarity::No)).count();
            let base = leading_polarity(intermediate).or_else(|| crate::eval::phrase_polarity(intermediate));
            let votes: Vec<Vote> = polarities
                .iter()
                .map(|p| match (p, base) {
                    (None, _) => Vote::Abstain,
                    (Some(p), Some(b)) if *p == b => Vote::Affirm,
                    (Some(_), _) => Vote::Deny,
                })
                .collect();
            let majority = if yes >= 2 {
                Some(Polarity::Yes)
            } else if no >= 2 {
                Some(Polarity::No)
            } else {
                None
            };
            let polarity_votes = tally(&votes);
            let Some(winner) = majority else {
                notes.push("MT: no 2-of-3 polarity majority; intermediate response stands".into());
                return (MtDecision::Keep, Adjudication { verdict: Verdict::Consistent, polarity_votes, similarity_scores: vec![] });
            };
            if base == Some(winner) {
                return (MtDecision::Keep, Adjudication { verdict: Verdict::Consistent, polarity_votes, similarity_scores: vec![] });
            }
            let index = (0..answers.len())
                .filter(|&i| polarities[i] == Some(winner))
                .max_by_key(|&i| (polarity_clarity(&answers[i], winner), std::cmp::Reverse(i)))
                .expect("majority side is non-empty");
            if answers.iter().any(|a| leading_polarity(a).is_none() && crate::eval::phrase_polarity(a).is_some()) {
                notes.push("MT: some mutated answers had no leading yes/no; polarity read from phrasing".into());
            }
            (
                MtDecision::Adopt { index, rephrase: true },
                Adjudication { verdict: Verdict::Contradiction, polarity_votes, similarity_scores: vec![] },
            )
        }
        QueryType::Fact | QueryType::Summary => {
            let n = answers.len();
            let mut sims = vec![vec![0.0; n]; n];
            let mut scores = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    let s = similarity(embedder, &answers[i], &answers[j]);
                    sims[i][j] = s;
                    sims[j][i] = s;
                    scores.push(s);
                }
            }
            let means: Vec<f64> =
                (0..n).map(|i| (0..n).filter(|&j| j != i).map(|j| sims[i][j]).sum::<f64>() / (n - 1) as f64).collect();
            let mut best = 0;
            for i in 1..n {
                if means[i] > means[best] {
                    best = i;
                }
            }
            let votes: Vec<Vote> = (0..n)
                .map(|i| {
                    let (v, _) = vote(intermediate, &answers[i], embedder, threshold);
                    v
                })
                .collect();
            let polarity_votes = tally(&votes);
            if means[best] < threshold {
                notes.push(format!(
                    "MT: mutated answers disagree (best mean similarity {:.3} < {threshold}); intermediate response stands, low confidence",
                    means[best]
                ));
                return (MtDecision::Keep, Adjudication { verdict: Verdict::Contradiction, polarity_votes, similarity_scores: scores });
            }
            let verdict = if answers[best] == intermediate { Verdict::Consistent } else { Verdict::Contradiction };
            (MtDecision::Adopt { index: best, rephrase: false }, Adjudication { verdict, polarity_votes, similarity_scores: scores })
        }
    }
}

/// Validation settings for one run.
#[derive(Debug, Clone, Copy)]
pub struct ValidatorSettings {
    pub threshold: f64,
    pub cove_enabled: bool,
    pub mt_enabled: bool,
}

pub struct Validator<'a> {
    pub session: &'a Session<'a>,
    pub embedder: &'a dyn Embedder,
    /// Retrieval context used to answer follow-up and mutated questions.
    pub context: &'a str,
    pub settings: ValidatorSettings,
}

impl Validator<'_> {
    fn answer_all(&self, stage: Stage, questions: &[String]) -> Vec<Result<String, crate::llm::LlmError>> {
        let batch = questions.iter().map(|q| answer_prompt(q, self.context)).collect();
        self.session.call_batch(stage, RAG_ANSWER.id, batch)
    }

    /// Runs CoVe then MT over `initial`. Never fails: a stage that cannot
    /// run is skipped with a note and its input passes through.
    pub fn validate(&self, question: &str, qtype: QueryType, initial: &str) -> ValidationTranscript {
        let mut notes = Vec::new();
        let threshold = self.settings.threshold;

        let mut cove_status = StageStatus::Disabled;
        let mut cove_followups = Vec::new();
        let mut cove_adjudication = None;
        let mut intermediate = initial.to_string();
        if self.settings.cove_enabled {
            cove_status = StageStatus::Skipped;
            match cove_generate_followups(question, initial, self.session) {
                Err(Skip(note)) => notes.push(note),
                Ok(questions) => {
                    let answers = self.answer_all(Stage::CoveAnswers, &questions);
                    for (q, a) in questions.iter().zip(answers) {
                        match a {
                            Ok(answer) => cove_followups.push(QaPair { question: q.clone(), answer }),
                            Err(e) => notes.push(format!("CoVe follow-up {q:?} unanswered: {e}")),
                        }
                    }
                    if cove_followups.is_empty() {
                        notes.push("CoVe skipped: no follow-up question could be answered".into());
                    } else {
                        let (text, adj) = cove_adjudicate(
                            question,
                            initial,
                            &cove_followups,
                            self.embedder,
                            threshold,
                            self.session,
                            &mut notes,
                        );
                        intermediate = text;
                        cove_adjudication = Some(adj);
                        cove_status = StageStatus::Ran;
                    }
                }
            }
        }

        let mut mt_status = StageStatus::Disabled;
        let mut mt_mutations = Vec::new();
        let mut mt_adjudication = None;
        let mut final_response = intermediate.clone();
        if self.settings.mt_enabled {
            mt_status = StageStatus::Skipped;
            match mt_mutate(question, self.session, &mut notes) {
                Err(Skip(note)) => notes.push(note),
                Ok(questions) => {
                    let answers = self.answer_all(Stage::MtAnswers, &questions);
                    let failed: Vec<String> = answers.iter().filter_map(|a| a.as_ref().err().map(ToString::to_string)).collect();
                    if !failed.is_empty() {
                        notes.push(format!("MT skipped: {} mutated question(s) unanswered: {}", failed.len(), failed.join("; ")));
                    } else {
                        let answers: Vec<String> = answers.into_iter().map(|a| a.expect("checked ok")).collect();
                        mt_mutations = questions
                            .iter()
                            .zip(&answers)
                            .map(|(q, a)| QaPair { question: q.clone(), answer: a.clone() })
                            .collect();
                        let (decision, adj) =
                            mt_adjudicate(&intermediate, &answers, qtype, self.embedder, threshold, &mut notes);
                        if let MtDecision::Adopt { index, rephrase } = decision {
                            final_response = if rephrase {
                                self.rephrase(question, &answers[index], &mut notes)
                            } else {
                                answers[index].clone()
                            };
                        }
                        mt_adjudication = Some(adj);
                        mt_status = StageStatus::Ran;
                    }
                }
            }
        }

        if final_response.trim().is_empty() {
            notes.push("validation produced an empty response; initial response kept".into());
            final_response = initial.to_string();
        }

        ValidationTranscript {
            initial_question: question.to_string(),
            initial_response: initial.to_string(),
            cove_status,
            cove_followups,
            cove_adjudication,
            cove_intermediate: intermediate,
            mt_status,
            mt_mutations,
            mt_adjudication,
            final_response,
            adjudication_notes: notes,
        }
    }

    /// Restates the adopted answer as a direct answer to the question. The
    /// answer is used verbatim if the rephrasing fails or flips polarity.
    fn rephrase(&self, question: &str, answer: &str, notes: &mut Vec<String>) -> String {
        let prompt = MT_REPHRASE.render(&[("question", question), ("answer", answer)]);
        match self.session.call(Stage::MtRephrase, MT_REPHRASE.id, prompt) {
            Ok(text) if !text.trim().is_empty() => {
                let want = leading_polarity(answer).or_else(|| crate::eval::phrase_polarity(answer));
                let got = leading_polarity(&text).or_else(|| crate::eval::phrase_polarity(&text));
                if want.is_some() && got != want {
                    notes.push("MT rephrasing changed polarity; mutated answer used verbatim".into());
                    answer.to_string()
                } else {
                    text
                }
            }
            Ok(_) => {
                notes.push("MT rephrasing returned nothing; mutated answer used verbatim".into());
                answer.to_string()
            }
            Err(e) => {
                notes.push(format!("MT rephrasing failed; mutated answer used verbatim: {e}"));
                answer.to_string()
            }
        }
    }
}
