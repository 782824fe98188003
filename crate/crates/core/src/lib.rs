//! Contrastive reflection pipelines for language models.
//!
//! The crate wires a provider-agnostic completion gateway (remote HTTP,
//! content-addressed replay cache, deterministic simulated solver) into a
//! reflection engine: self-curated solving perspectives, dissimilarity
//! selection via k-medoids, pairwise contrast with checklist synthesis, and
//! a bounded consensus-revision loop. Reference strategies (chain-of-thought,
//! three-stage self-reflection, self-consistency variants) and a measurement
//! kit (answer extraction, paired t-test, call accounting, behavior
//! taxonomies) sit alongside, plus an experiment harness with replayable
//! JSONL transcripts.

pub mod baselines;
pub mod contrast;
pub mod digest;
pub mod diversity;
pub mod eval;
pub mod gateway;
pub mod harness;
pub mod prompts;
pub mod trace;

pub use contrast::{CandidateResponse, Checklist, ConsensusResult, Discrepancy};
pub use eval::{
    answers_equal, extract_answer, AnswerValue, CanonicalAnswer, GoldAnswer, TaskInstance, TaskKind,
};
pub use gateway::{Completion, CompletionRequest, Gateway, SimulatorProfile};
pub use trace::{RunRecord, StageEvent, StageRole};
