//! Per-task run traces shared by pipelines, baselines, and the harness.

use serde::{Deserialize, Serialize};

use crate::digest::sha256_hex;
use crate::eval::ReflectionBehavior;
use crate::gateway::{BackendKind, Completion};

/// What a completion was for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StageRole {
    Curate,
    Sample,
    Initial,
    Evaluate,
    Contrast,
    Revise,
    Select,
}

/// One completion call inside a trace. The sequence number is a logical
/// timestamp; wall-clock times are deliberately absent so that transcripts
/// are byte-identical across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageEvent {
    pub seq: u32,
    pub role: StageRole,
    pub prompt_digest: String,
    pub completion_digest: String,
    pub completion_text: String,
    pub backend: BackendKind,
    pub billed: bool,
}

impl StageEvent {
    pub fn new(seq: u32, role: StageRole, prompt: &str, completion: &Completion) -> Self {
        Self {
            seq,
            role,
            prompt_digest: sha256_hex(prompt.as_bytes()),
            completion_digest: sha256_hex(completion.text.as_bytes()),
            completion_text: completion.text.clone(),
            backend: completion.backend,
            billed: completion.billed_call,
        }
    }
}

/// Points at the completion a recorded answer was extracted from, so replay
/// can re-derive it. `candidate` selects a solution inside a multi-candidate
/// revision completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRef {
    pub seq: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub candidate: Option<u32>,
}

/// Full outcome trace of one task under one strategy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub task_id: String,
    pub strategy: String,
    pub stages: Vec<StageEvent>,
    pub pre_answer: Option<String>,
    pub post_answer: Option<String>,
    pub pre_correct: bool,
    pub post_correct: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub behavior: Option<ReflectionBehavior>,
    pub billed_calls: u32,
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub failure: Option<String>,
    pub rounds_used: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub consistent: Option<bool>,
    pub fallback_used: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pre_source: Option<AnswerRef>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub post_source: Option<AnswerRef>,
}

impl RunRecord {
    /// A record for a task whose pipeline failed at some stage. The batch
    /// keeps going; the failure is itemized here.
    pub fn failed(
        task_id: impl Into<String>,
        strategy: impl Into<String>,
        message: String,
        stages: Vec<StageEvent>,
    ) -> Self {
        let billed_calls = stages.iter().filter(|s| s.billed).count() as u32;
        Self {
            task_id: task_id.into(),
            strategy: strategy.into(),
            stages,
            pre_answer: None,
            post_answer: None,
            pre_correct: false,
            post_correct: false,
            behavior: None,
            billed_calls,
            failed: true,
            failure: Some(message),
            rounds_used: 0,
            consistent: None,
            fallback_used: false,
            notes: Vec::new(),
            pre_source: None,
            post_source: None,
        }
    }
}
