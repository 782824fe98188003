//! Experiment harness: declarative configs, transcript persistence with
//! digest chaining, concurrent execution, replay, and report rendering.

mod config;
mod experiment;
mod mechanism;
mod replay;
mod report;
mod transcript;

pub use config::{
    BackendConfig, BackendKindConfig, DatasetConfig, ExperimentConfig, StrategyConfig,
};
pub use experiment::{build_gateway, load_dataset, run_experiment, synthetic_tasks};
pub use mechanism::{default_mechanism_profile, run_mechanism_comparison, MechanismReport};
pub use replay::replay_transcript;
pub use report::{emit_report, ReportFormat};
pub use transcript::{
    BehaviorCounts, ExperimentSummary, TranscriptMeta, TranscriptReader, TranscriptRecord,
    TranscriptWriter, TrialSummary,
};

/// Errors from the harness layer.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("dataset unreadable: {0}")]
    DatasetUnreadable(String),
    #[error("corrupt transcript: {0}")]
    CorruptTranscript(String),
    #[error("no baseline row matches id {0}")]
    NoBaselineRow(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Eval(#[from] crate::eval::EvalError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
    #[error(transparent)]
    Contrast(#[from] crate::contrast::ContrastError),
    #[error(transparent)]
    Baseline(#[from] crate::baselines::BaselineError),
}
