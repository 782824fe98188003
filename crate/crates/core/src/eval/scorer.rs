//! Pluggable external scorer for translation quality.
//!
//! Learned metrics stay outside this crate; the harness talks to them
//! through this interface. The subprocess implementation writes one JSON
//! request to the child's stdin (`{"candidate": ..., "references": [...]}`)
//! and reads a single float from its stdout. Correctness for behavior
//! classification is then `score >= threshold`.

use std::io::Write;
use std::process::{Command, Stdio};

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Scores a candidate against reference translations; returns a value in
/// the declared range.
pub trait ExternalScorer: Send + Sync {
    fn score(&self, candidate: &str, references: &[String]) -> Result<f64, EvalError>;
    /// Inclusive (min, max) of the metric.
    fn range(&self) -> (f64, f64);
}

/// Scorer configuration: the command to invoke plus the decision threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScorerConfig {
    /// Program and arguments, e.g. `["python3", "bleurt_server.py"]`.
    pub command: Vec<String>,
    /// Scores at or above this count as correct.
    pub threshold: f64,
    #[serde(default)]
    pub min: f64,
    #[serde(default = "default_scorer_max")]
    pub max: f64,
}

fn default_scorer_max() -> f64 {
    1.0
}

/// One scorer invocation per call, via subprocess.
pub struct SubprocessScorer {
    config: ScorerConfig,
}

impl SubprocessScorer {
    pub fn new(config: ScorerConfig) -> Result<Self, EvalError> {
        if config.command.is_empty() {
            return Err(EvalError::InvalidTask("scorer command is empty".into()));
        }
        Ok(Self { config })
    }
}

impl ExternalScorer for SubprocessScorer {
    fn score(&self, candidate: &str, references: &[String]) -> Result<f64, EvalError> {
        let request = serde_json::json!({
            "candidate": candidate,
            "references": references,
        });
        let mut child = Command::new(&self.config.command[0])
            .args(&self.config.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| EvalError::InvalidTask(format!("scorer spawn failed: {e}")))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(request.to_string().as_bytes())
            .map_err(|e| EvalError::InvalidTask(format!("scorer stdin failed: {e}")))?;
        let output = child
            .wait_with_output()
            .map_err(|e| EvalError::InvalidTask(format!("scorer wait failed: {e}")))?;
        let text = String::from_utf8_lossy(&output.stdout);
        let score: f64 = text
            .trim()
            .parse()
            .map_err(|_| EvalError::InvalidTask(format!("scorer emitted non-numeric: {text:?}")))?;
        if !score.is_finite() || score < self.config.min || score > self.config.max {
            return Err(EvalError::InvalidTask(format!(
                "scorer value {score} outside [{}, {}]",
                self.config.min, self.config.max
            )));
        }
        Ok(score)
    }

    fn range(&self) -> (f64, f64) {
        (self.config.min, self.config.max)
    }
}

/// Is the candidate correct under the scorer and threshold?
pub fn scored_correct(
    scorer: &dyn ExternalScorer,
    threshold: f64,
    candidate: &str,
    references: &[String],
) -> Result<bool, EvalError> {
    Ok(scorer.score(candidate, references)? >= threshold)
}
