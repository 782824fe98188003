//! End-to-end contrastive reflection pipeline.
//!
//! Modes:
//! - `full`: self-curated perspectives, k-medoids selection, contrast,
//!   checklist, consensus revision.
//! - `contrast-top-n`: n plain samples contrasted directly (no curation,
//!   no clustering).
//! - `sample-top-n`: n plain samples, then clustering/selection as in full.
//! - `no-checklist`: full flow, but the revision envelope carries
//!   discrepancies only.
//!
//! Any stage failure produces a failed run record rather than an error, so
//! batch runs keep going.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::majority_vote;
use crate::digest::derive_seed;
use crate::diversity::{
    select_representatives, DiversityError, SelectionContext, SelectionStrategy,
};
use crate::eval::{classify_reflection_behavior, CanonicalAnswer, TaskInstance, TaskKind};
use crate::gateway::{CompletionRequest, Gateway};
use crate::prompts::{
    curate_perspectives, render_template, solve_template_id, CurationOptions, PerspectivePrompt,
};
use crate::trace::{AnswerRef, RunRecord, StageEvent, StageRole};

use super::{
    build_checklist, contrast_candidates, revise_until_consensus, CandidateOrigin,
    CandidateResponse, Checklist, ConsensusOptions, ConsensusResult, ContrastCallOptions,
    ContrastError,
};

/// Pipeline variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineMode {
    #[default]
    Full,
    ContrastTopN,
    SampleTopN,
    NoChecklist,
}

impl FromStr for PipelineMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Self::Full),
            "contrast-top-n" => Ok(Self::ContrastTopN),
            "sample-top-n" => Ok(Self::SampleTopN),
            "no-checklist" => Ok(Self::NoChecklist),
            other => Err(format!("unknown pipeline mode: {other}")),
        }
    }
}

/// Pipeline settings.
#[derive(Debug, Clone)]
pub struct SelfContrastConfig {
    pub mode: PipelineMode,
    pub model_id: String,
    pub temperature: f64,
    /// Representatives kept after selection.
    pub k: usize,
    /// Sample count for the top-n modes.
    pub sample_n: u32,
    pub max_rounds: u32,
    pub selection: SelectionStrategy,
    /// Sample a careless-persona exemplar (translation only).
    pub negative_perspective: bool,
    pub run_seed: u64,
    /// Prompt-variant rotation index (trial number).
    pub run_index: u32,
}

impl Default for SelfContrastConfig {
    fn default() -> Self {
        Self {
            mode: PipelineMode::Full,
            model_id: "simulated".into(),
            temperature: 0.2,
            k: 3,
            sample_n: 2,
            max_rounds: 2,
            selection: SelectionStrategy::Medoid,
            negative_perspective: false,
            run_seed: 0,
            run_index: 0,
        }
    }
}

struct StageLog {
    events: Vec<StageEvent>,
}

impl StageLog {
    fn new() -> Self {
        Self { events: Vec::new() }
    }

    fn push(
        &mut self,
        role: StageRole,
        prompt: &str,
        completion: &crate::gateway::Completion,
    ) -> u32 {
        let seq = self.events.len() as u32;
        self.events
            .push(StageEvent::new(seq, role, prompt, completion));
        seq
    }
}

/// Run the pipeline on one task. Never fails; stage errors yield a failed
/// record with whatever trace accumulated.
pub fn run_self_contrast(
    task: &TaskInstance,
    config: &SelfContrastConfig,
    gateway: &Gateway,
) -> RunRecord {
    let mut log = StageLog::new();
    match run_inner(task, config, gateway, &mut log) {
        Ok(record) => record,
        Err(e) => RunRecord::failed(
            task.task_id.clone(),
            strategy_label(config.mode),
            e.to_string(),
            log.events,
        ),
    }
}

fn strategy_label(mode: PipelineMode) -> String {
    match mode {
        PipelineMode::Full => "self-contrast".to_string(),
        PipelineMode::ContrastTopN => "self-contrast-top-n".to_string(),
        PipelineMode::SampleTopN => "self-contrast-sample-top-n".to_string(),
        PipelineMode::NoChecklist => "self-contrast-no-checklist".to_string(),
    }
}

fn run_inner(
    task: &TaskInstance,
    config: &SelfContrastConfig,
    gateway: &Gateway,
    log: &mut StageLog,
) -> Result<RunRecord, ContrastError> {
    let task_seed = |label: &str| derive_seed(config.run_seed, &[&task.task_id, label]);

    // Stage 1: obtain candidates.
    let mut negative_candidate: Option<CandidateResponse> = None;
    let mut first_sample_ref: Option<AnswerRef> = None;
    let candidates: Vec<CandidateResponse> = match config.mode {
        PipelineMode::Full | PipelineMode::NoChecklist => {
            let (set, curate_calls) = curate_perspectives(
                task,
                gateway,
                &CurationOptions {
                    model_id: config.model_id.clone(),
                    temperature: config.temperature,
                    seed: task_seed("curate"),
                    include_negative: config.negative_perspective
                        && task.kind == TaskKind::Translation,
                },
            )?;
            for (prompt, completion) in &curate_calls {
                log.push(StageRole::Curate, prompt, completion);
            }
            let mut out = Vec::new();
            for (idx, perspective) in set.perspectives.iter().enumerate() {
                let candidate = sample_perspective(task, config, gateway, perspective, idx, log)?;
                if perspective.negative {
                    negative_candidate = Some(candidate);
                } else {
                    out.push(candidate);
                }
            }
            out
        }
        PipelineMode::ContrastTopN | PipelineMode::SampleTopN => {
            let prompt = render_template(
                crate::prompts::standard_prompt_id(task.kind, config.run_index).as_str(),
                &[("input", task.prompt_payload.as_str())],
            )?;
            let req = CompletionRequest::new(config.model_id.clone(), prompt.clone())
                .with_temperature(config.temperature)
                .with_seed(task_seed("top-n"));
            let batch = gateway.sample_n(&req, config.sample_n.max(2))?;
            batch
                .into_iter()
                .enumerate()
                .map(|(i, completion)| {
                    let seq = log.push(StageRole::Sample, &prompt, &completion);
                    if i == 0 {
                        first_sample_ref = Some(AnswerRef {
                            seq,
                            candidate: None,
                        });
                    }
                    CandidateResponse::new(
                        format!("s{i}"),
                        completion.text,
                        task.kind,
                        CandidateOrigin::TopNSample,
                    )
                })
                .collect()
        }
    };

    // Stage 2: pick dissimilar representatives.
    let selected = match config.mode {
        PipelineMode::ContrastTopN => {
            // Top-n contrast uses the samples directly.
            candidates.clone()
        }
        _ => {
            let mut picker_log: Vec<(String, crate::gateway::Completion)> = Vec::new();
            let selected = {
                let mut picker = llm_cluster_picker(
                    task,
                    config,
                    gateway,
                    task_seed("cluster-pick"),
                    &mut picker_log,
                );
                let ctx = SelectionContext {
                    negative: negative_candidate.as_ref(),
                    picker: if config.selection == SelectionStrategy::ClusterLlm {
                        Some(&mut picker)
                    } else {
                        None
                    },
                };
                select_representatives(
                    &candidates,
                    config.k,
                    config.selection,
                    task_seed("select"),
                    ctx,
                )?
            };
            for (prompt, completion) in &picker_log {
                log.push(StageRole::Select, prompt, completion);
            }
            selected
        }
    };

    // Stage 3: contrast (one call), checklist, consensus revision.
    let consensus = if selected.len() < 2 {
        // Dedup can collapse everything to one candidate; nothing to
        // contrast or revise.
        ConsensusResult {
            final_answer: selected.first().and_then(|c| c.answer.clone()),
            revised: selected.clone(),
            consistent: true,
            rounds_used: 0,
            fallback_used: false,
            notes: vec!["single-distinct-candidate".into()],
        }
    } else {
        let outcome = contrast_candidates(
            task,
            &selected,
            gateway,
            &ContrastCallOptions {
                model_id: config.model_id.clone(),
                temperature: config.temperature,
                seed: task_seed("contrast-0"),
            },
        )?;
        log.push(StageRole::Contrast, &outcome.prompt, &outcome.completion);
        let checklist = if config.mode == PipelineMode::NoChecklist {
            Checklist::default()
        } else {
            build_checklist(&outcome.discrepancies, &outcome.raw_checklist)?
        };
        let mut call_log = Vec::new();
        let consensus = revise_until_consensus(
            task,
            selected.clone(),
            gateway,
            &ConsensusOptions {
                model_id: config.model_id.clone(),
                temperature: config.temperature,
                run_seed: config.run_seed,
                seed_context: vec![task.task_id.clone(), "consensus".into()],
                max_rounds: config.max_rounds,
                include_checklist: config.mode != PipelineMode::NoChecklist,
            },
            Some((outcome.discrepancies, checklist)),
            &mut call_log,
        )?;
        for (role, prompt, completion) in &call_log {
            log.push(*role, prompt, completion);
        }
        consensus
    };

    // Pre-reflection answer: first sample for top-n modes, majority over
    // the selected candidates otherwise.
    let pre_answer: Option<CanonicalAnswer> = match config.mode {
        PipelineMode::ContrastTopN | PipelineMode::SampleTopN => {
            candidates.first().and_then(|c| c.answer.clone())
        }
        _ => {
            let answers: Vec<CanonicalAnswer> =
                selected.iter().filter_map(|c| c.answer.clone()).collect();
            if answers.is_empty() {
                None
            } else {
                Some(majority_vote(&answers).expect("nonempty"))
            }
        }
    };
    let post_answer = consensus.final_answer.clone();

    let pre_correct = pre_answer
        .as_ref()
        .map(|a| task.is_correct(a))
        .unwrap_or(false);
    let post_correct = post_answer
        .as_ref()
        .map(|a| task.is_correct(a))
        .unwrap_or(false);

    let mut notes = consensus.notes.clone();
    if negative_candidate.is_some() {
        notes.push("negative-exemplar-used".into());
    }
    let events = std::mem::take(&mut log.events);
    let billed_calls = events.iter().filter(|s| s.billed).count() as u32;
    Ok(RunRecord {
        task_id: task.task_id.clone(),
        strategy: strategy_label(config.mode),
        stages: events,
        pre_answer: pre_answer.map(|a| a.display()),
        post_answer: post_answer.map(|a| a.display()),
        pre_correct,
        post_correct,
        behavior: Some(classify_reflection_behavior(pre_correct, post_correct)),
        billed_calls,
        failed: false,
        failure: None,
        rounds_used: consensus.rounds_used,
        consistent: Some(consensus.consistent),
        fallback_used: consensus.fallback_used,
        notes,
        pre_source: first_sample_ref,
        post_source: None,
    })
}

fn sample_perspective(
    task: &TaskInstance,
    config: &SelfContrastConfig,
    gateway: &Gateway,
    perspective: &PerspectivePrompt,
    idx: usize,
    log: &mut StageLog,
) -> Result<CandidateResponse, ContrastError> {
    let body = render_template(
        solve_template_id(task.kind),
        &[("input", task.prompt_payload.as_str())],
    )?;
    let id_label = if perspective.negative {
        "negative".to_string()
    } else {
        format!("p{idx}")
    };
    let seed = derive_seed(config.run_seed, &[&task.task_id, "sample", &id_label]);
    let req = CompletionRequest::new(config.model_id.clone(), body.clone())
        .with_system(perspective.instruction.clone())
        .with_temperature(config.temperature)
        .with_seed(seed);
    let completion = gateway.complete(&req)?;
    log.push(StageRole::Sample, &body, &completion);
    Ok(CandidateResponse::new(
        id_label,
        completion.text,
        task.kind,
        CandidateOrigin::PerspectiveSample,
    ))
}

/// Completion-backed chooser for cluster-llm selection.
fn llm_cluster_picker<'a>(
    task: &'a TaskInstance,
    config: &'a SelfContrastConfig,
    gateway: &'a Gateway,
    seed: u64,
    picker_log: &'a mut Vec<(String, crate::gateway::Completion)>,
) -> impl FnMut(&[&CandidateResponse]) -> Result<usize, DiversityError> + 'a {
    let template_id = match task.kind {
        TaskKind::Math => "pick-member-math",
        TaskKind::Translation => "pick-member-translation",
    };
    let mut cluster_index = 0u64;
    move |members: &[&CandidateResponse]| {
        let mut listing = String::new();
        for (i, m) in members.iter().enumerate() {
            listing.push_str(&format!("Member {}: {}\n", i + 1, m.solution_text));
        }
        let prompt = render_template(
            template_id,
            &[
                ("input", task.prompt_payload.as_str()),
                ("members", listing.as_str()),
            ],
        )
        .map_err(|_| DiversityError::PickerUnavailable)?;
        cluster_index += 1;
        let req = CompletionRequest::new(config.model_id.clone(), prompt.clone())
            .with_temperature(config.temperature)
            .with_seed(seed.wrapping_add(cluster_index));
        let completion = gateway.complete(&req)?;
        picker_log.push((prompt, completion.clone()));
        let chosen = completion
            .text
            .split(|c: char| !c.is_ascii_digit())
            .find(|s| !s.is_empty())
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&n| n >= 1 && n <= members.len())
            .map(|n| n - 1)
            .unwrap_or(0);
        Ok(chosen)
    }
}
