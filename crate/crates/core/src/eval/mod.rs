//! Dataset types, answer extraction and normalization, accuracy scoring,
//! and call accounting.
//!
//! Math answers are normalized to plain decimals (no thousands separators,
//! currency symbols, or percent signs; percents divide by 100). Translation
//! answers are the last non-empty line of the solution, compared after
//! whitespace normalization.

mod behavior;
mod datasets;
mod scorer;
mod stats;

pub use behavior::{
    classify_feedback_set, classify_reflection_behavior, FeedbackCategory, FeedbackLabel,
    ReflectionBehavior,
};
pub use datasets::{load_tasks, DatasetFormat, RecordIssue, TaskLoadReport};
pub use scorer::{scored_correct, ExternalScorer, ScorerConfig, SubprocessScorer};
pub use stats::{one_tailed_paired_t, student_t_sf, SignificanceReport};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::trace::RunRecord;

/// Errors from the evaluation kit.
#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no answer found in solution text")]
    NoAnswerFound,
    #[error("cannot compare answers of different kinds")]
    KindMismatch,
    #[error("empty run set")]
    EmptyRunSet,
    #[error("paired samples differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least two trials, got {0}")]
    TooFewTrials(usize),
    #[error("expected exactly 10 feedback labels, got {0}")]
    WrongLabelCount(usize),
    #[error("cannot read dataset file {path}: {message}")]
    UnreadableFile { path: String, message: String },
    #[error("unknown dataset format: {0}")]
    UnknownFormat(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
}

/// Task family. Determines prompt templates, answer extraction, and which
/// strategies apply (majority voting is rejected for translation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Math,
    Translation,
}

/// Gold label: a number for math, one or more references for translation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldAnswer {
    Number(f64),
    References(Vec<String>),
}

/// One benchmark item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskInstance {
    pub task_id: String,
    pub kind: TaskKind,
    pub prompt_payload: String,
    pub gold: GoldAnswer,
}

impl TaskInstance {
    pub fn math(
        task_id: impl Into<String>,
        payload: impl Into<String>,
        gold: f64,
    ) -> Result<Self, EvalError> {
        if !gold.is_finite() {
            return Err(EvalError::InvalidTask("math gold must be finite".into()));
        }
        Ok(Self {
            task_id: task_id.into(),
            kind: TaskKind::Math,
            prompt_payload: payload.into(),
            gold: GoldAnswer::Number(gold),
        })
    }

    pub fn translation(
        task_id: impl Into<String>,
        payload: impl Into<String>,
        references: Vec<String>,
    ) -> Result<Self, EvalError> {
        if references.is_empty() {
            return Err(EvalError::InvalidTask(
                "translation gold needs at least one reference".into(),
            ));
        }
        Ok(Self {
            task_id: task_id.into(),
            kind: TaskKind::Translation,
            prompt_payload: payload.into(),
            gold: GoldAnswer::References(references),
        })
    }

    /// Does a candidate answer match this task's gold label?
    pub fn is_correct(&self, answer: &CanonicalAnswer) -> bool {
        match (&self.gold, &answer.value) {
            (GoldAnswer::Number(g), AnswerValue::Number(v)) => numbers_equal(*g, *v),
            (GoldAnswer::References(refs), AnswerValue::Text(t)) => {
                let norm = normalize_whitespace(t);
                refs.iter().any(|r| normalize_whitespace(r) == norm)
            }
            _ => false,
        }
    }
}

/// Normalized answer value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerValue {
    Number(f64),
    Text(String),
}

/// An extracted final answer plus the span it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalAnswer {
    pub value: AnswerValue,
    pub raw_span: String,
}

impl CanonicalAnswer {
    pub fn number(v: f64) -> Self {
        let v = if v == 0.0 { 0.0 } else { v }; // collapse -0
        Self {
            raw_span: format_number(v),
            value: AnswerValue::Number(v),
        }
    }

    pub fn text(t: impl Into<String>) -> Self {
        let t = t.into();
        Self {
            raw_span: t.clone(),
            value: AnswerValue::Text(t),
        }
    }

    /// Canonical display form: shortest round-trip decimal for numbers,
    /// the text itself otherwise.
    pub fn display(&self) -> String {
        match &self.value {
            AnswerValue::Number(v) => format_number(*v),
            AnswerValue::Text(t) => t.clone(),
        }
    }
}

fn format_number(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v}")
}

fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn numbers_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * f64::max(1.0, f64::max(a.abs(), b.abs()))
}

/// Equality under normalization: relative tolerance 1e-6 for math, exact
/// text match after whitespace normalization for translation.
pub fn answers_equal(a: &CanonicalAnswer, b: &CanonicalAnswer) -> Result<bool, EvalError> {
    match (&a.value, &b.value) {
        (AnswerValue::Number(x), AnswerValue::Number(y)) => Ok(numbers_equal(*x, *y)),
        (AnswerValue::Text(x), AnswerValue::Text(y)) => {
            Ok(normalize_whitespace(x) == normalize_whitespace(y))
        }
        _ => Err(EvalError::KindMismatch),
    }
}

static NUMBER_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"-?\$?\d[\d,]*(?:\.\d+)?%?").expect("static regex"));
static ANSWER_IS_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?i)answer\s*(?:is|:)").expect("static regex"));
static BOXED_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\\boxed\{([^}]*)\}").expect("static regex"));

/// Extract the final answer from a solution text.
///
/// Math precedence: the last "####" marker, then the last "answer is"/
/// "answer:" marker, then the last `\boxed{..}`, then the last number in the
/// whole text. Within a marker the span runs to the end of that line and the
/// last number in the span wins; a marker whose span holds no number falls
/// through to the next precedence level.
pub fn extract_answer(solution_text: &str, kind: TaskKind) -> Result<CanonicalAnswer, EvalError> {
    if solution_text.trim().is_empty() {
        return Err(EvalError::NoAnswerFound);
    }
    match kind {
        TaskKind::Math => extract_math(solution_text),
        TaskKind::Translation => {
            let line = solution_text
                .lines()
                .rev()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .ok_or(EvalError::NoAnswerFound)?;
            Ok(CanonicalAnswer::text(line))
        }
    }
}

fn extract_math(text: &str) -> Result<CanonicalAnswer, EvalError> {
    if let Some(pos) = text.rfind("####") {
        let span = line_span(text, pos + 4);
        if let Some(ans) = last_number_in(span) {
            return Ok(ans);
        }
    }
    if let Some(m) = ANSWER_IS_RE.find_iter(text).last() {
        let span = line_span(text, m.end());
        if let Some(ans) = last_number_in(span) {
            return Ok(ans);
        }
    }
    if let Some(caps) = BOXED_RE.captures_iter(text).last() {
        if let Some(ans) = last_number_in(&caps[1]) {
            return Ok(ans);
        }
    }
    last_number_in(text).ok_or(EvalError::NoAnswerFound)
}

/// Remainder of the line starting at byte offset `start`.
fn line_span(text: &str, start: usize) -> &str {
    let rest = &text[start..];
    match rest.find('\n') {
        Some(end) => &rest[..end],
        None => rest,
    }
}

fn last_number_in(span: &str) -> Option<CanonicalAnswer> {
    let m = NUMBER_RE.find_iter(span).last()?;
    let raw = m.as_str();
    let mut cleaned = raw.replace([',', '$'], "");
    let percent = cleaned.ends_with('%');
    if percent {
        cleaned.pop();
    }
    let mut value: f64 = cleaned.parse().ok()?;
    if percent {
        value /= 100.0;
    }
    Some(CanonicalAnswer {
        value: AnswerValue::Number(if value == 0.0 { 0.0 } else { value }),
        raw_span: raw.to_string(),
    })
}

/// Fraction of records whose final answer is correct. Failed records count
/// as incorrect.
pub fn score_accuracy(records: &[RunRecord]) -> Result<f64, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRunSet);
    }
    let correct = records
        .iter()
        .filter(|r| !r.failed && r.post_correct)
        .count();
    Ok(correct as f64 / records.len() as f64)
}

/// Billed completions in one trace: the sum of per-stage billed flags.
pub fn count_calls(record: &RunRecord) -> u32 {
    record.stages.iter().filter(|s| s.billed).count() as u32
}

#[cfg(test)]
mod tests {
    use super::*;

    fn num(text: &str) -> f64 {
        match extract_answer(text, TaskKind::Math).unwrap().value {
            AnswerValue::Number(v) => v,
            AnswerValue::Text(_) => panic!("expected number"),
        }
    }

    // Hand-labeled extraction fixture: markers, separators, currency,
    // percents, distractors, negatives. Labels written before the extractor.
    const FIXTURE: &[(&str, f64)] = &[
        ("So the answer is 42.", 42.0),
        ("#### 18", 18.0),
        ("The total is 12. #### 7", 7.0),
        ("Scratch: 5, 10, 15\n#### 100", 100.0),
        ("answer: 7", 7.0),
        ("Answer is -3.5", -3.5),
        ("The ANSWER IS 250", 250.0),
        ("We get \\boxed{12} at the end", 12.0),
        ("...earns $1,200.00 weekly", 1200.0),
        ("price rises to $3,600. The answer is $3,600.", 3600.0),
        ("that is 50% of the total", 0.5),
        ("the rate is 12.5%", 0.125),
        ("The answer is 15%.", 0.15),
        ("3 apples and 4 pears makes 7 fruits", 7.0),
        ("count 1,234,567 grains", 1234567.0),
        ("a drop of -7 degrees", -7.0),
        ("final tally 1,234.50 exactly", 1234.5),
        ("The answer is 8 dollars, 2 less than before.", 2.0),
        ("answer is 10\nbut wait, 11", 10.0),
        ("#### 3\nlater note mentions 99", 3.0),
        ("Answer: 0", 0.0),
        ("it costs $0.25 per unit", 0.25),
        ("roughly 2.5 times as much", 2.5),
        ("The answer is 1,000,000.", 1000000.0),
        ("#### -45", -45.0),
        ("x = 9; answer is x, i.e. 9", 9.0),
        ("\\boxed{0.75}", 0.75),
        ("we conclude the answer is 23 (not 25)", 25.0),
        ("18 items #### 18", 18.0),
        ("Step 3: 6 * 7 = 42. The answer is 42.", 42.0),
    ];

    #[test]
    fn extraction_fixture_all_match() {
        for (text, expected) in FIXTURE {
            let got = num(text);
            assert_eq!(
                got, *expected,
                "extraction mismatch for {text:?}: got {got}, want {expected}"
            );
        }
        assert_eq!(FIXTURE.len(), 30);
    }

    #[test]
    fn math_without_numbers_is_an_error() {
        assert!(matches!(
            extract_answer("no digits here", TaskKind::Math),
            Err(EvalError::NoAnswerFound)
        ));
    }

    #[test]
    fn translation_takes_last_nonempty_line() {
        let text = "Step 1: parse.\nStep 2: choose words.\n\nThe plan was axed.\n\n";
        let ans = extract_answer(text, TaskKind::Translation).unwrap();
        assert_eq!(ans.value, AnswerValue::Text("The plan was axed.".into()));
    }

    #[test]
    fn equality_tolerance() {
        let a = CanonicalAnswer::number(1.0);
        let b = CanonicalAnswer::number(1.0000001);
        assert!(answers_equal(&a, &b).unwrap());
        let c = CanonicalAnswer::number(100.0);
        let d = CanonicalAnswer::number(101.0);
        assert!(!answers_equal(&c, &d).unwrap());
        let e = CanonicalAnswer::number(1e12);
        let f = CanonicalAnswer::number(1e12 + 1.0);
        assert!(answers_equal(&e, &f).unwrap());
    }

    #[test]
    fn equality_is_reflexive_and_symmetric_on_fixture() {
        let values: Vec<CanonicalAnswer> = FIXTURE
            .iter()
            .map(|(_, v)| CanonicalAnswer::number(*v))
            .collect();
        for a in &values {
            assert!(answers_equal(a, a).unwrap());
            for b in &values {
                assert_eq!(answers_equal(a, b).unwrap(), answers_equal(b, a).unwrap());
            }
        }
    }

    #[test]
    fn kind_mismatch_rejected() {
        let a = CanonicalAnswer::number(1.0);
        let b = CanonicalAnswer::text("one");
        assert!(matches!(
            answers_equal(&a, &b),
            Err(EvalError::KindMismatch)
        ));
    }

    #[test]
    fn text_equality_normalizes_whitespace() {
        let a = CanonicalAnswer::text("the  plan was\taxed");
        let b = CanonicalAnswer::text("the plan was axed");
        assert!(answers_equal(&a, &b).unwrap());
    }

    #[test]
    fn number_display_is_normalized() {
        assert_eq!(CanonicalAnswer::number(32.0).display(), "32");
        assert_eq!(CanonicalAnswer::number(1234.5).display(), "1234.5");
        assert_eq!(CanonicalAnswer::number(-0.0).display(), "0");
    }

    fn record(post_correct: bool, failed: bool) -> crate::trace::RunRecord {
        crate::trace::RunRecord {
            task_id: "t".into(),
            strategy: "cot".into(),
            stages: vec![],
            pre_answer: None,
            post_answer: None,
            pre_correct: false,
            post_correct,
            behavior: None,
            billed_calls: 0,
            failed,
            failure: None,
            rounds_used: 0,
            consistent: None,
            fallback_used: false,
            notes: vec![],
            pre_source: None,
            post_source: None,
        }
    }

    #[test]
    fn accuracy_counts_correct_over_total() {
        let records = vec![
            record(true, false),
            record(true, false),
            record(false, false),
            record(true, false),
        ];
        assert_eq!(score_accuracy(&records).unwrap(), 0.75);
    }

    #[test]
    fn failed_records_score_as_incorrect() {
        let records = vec![record(true, true), record(true, true)];
        assert_eq!(score_accuracy(&records).unwrap(), 0.0);
        assert!(matches!(score_accuracy(&[]), Err(EvalError::EmptyRunSet)));
    }
}
