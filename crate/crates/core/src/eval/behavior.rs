//! Reflection-behavior and feedback-set taxonomies.

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Outcome transition across one reflection step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ReflectionBehavior {
    /// wrong before, wrong after
    Invalid,
    /// wrong before, right after
    Valid,
    /// right before, wrong after
    Toxic,
    /// right before, right after
    Other,
}

pub fn classify_reflection_behavior(pre_correct: bool, post_correct: bool) -> ReflectionBehavior {
    match (pre_correct, post_correct) {
        (false, false) => ReflectionBehavior::Invalid,
        (false, true) => ReflectionBehavior::Valid,
        (true, false) => ReflectionBehavior::Toxic,
        (true, true) => ReflectionBehavior::Other,
    }
}

/// One judgment over a single generated feedback.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackLabel {
    /// The feedback correctly identifies the error in the response.
    IdentifiesErrorCorrectly,
    /// The feedback claims the response has no error.
    ClaimsNoError,
    /// Any other opinion, keyed by an arbitrary id so that distinct
    /// opinions can be counted.
    OtherOpinion(String),
}

/// Self-evaluation quality category over a set of ten feedbacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackCategory {
    /// I: accurately identifies errors (more than seven of ten).
    Accurate,
    /// II: stubbornly offers erroneous feedback.
    Stubborn,
    /// III: cannot output consistent feedback (more than three opinions).
    Inconsistent,
    /// IV: overconfident, claims no revision required (more than seven).
    Overconfident,
}

/// Classify a set of exactly ten feedback judgments.
///
/// More than seven "identifies" labels give category I; more than seven
/// "no error" labels give IV; otherwise more than three distinct opinion
/// values give III, and everything else is II.
pub fn classify_feedback_set(labels: &[FeedbackLabel]) -> Result<FeedbackCategory, EvalError> {
    if labels.len() != 10 {
        return Err(EvalError::WrongLabelCount(labels.len()));
    }
    let identifies = labels
        .iter()
        .filter(|l| matches!(l, FeedbackLabel::IdentifiesErrorCorrectly))
        .count();
    let no_error = labels
        .iter()
        .filter(|l| matches!(l, FeedbackLabel::ClaimsNoError))
        .count();
    if identifies > 7 {
        return Ok(FeedbackCategory::Accurate);
    }
    if no_error > 7 {
        return Ok(FeedbackCategory::Overconfident);
    }
    let mut distinct: Vec<&FeedbackLabel> = Vec::new();
    for l in labels {
        if !distinct.contains(&l) {
            distinct.push(l);
        }
    }
    if distinct.len() > 3 {
        return Ok(FeedbackCategory::Inconsistent);
    }
    Ok(FeedbackCategory::Stubborn)
}
