//! Reference strategies: chain-of-thought, three-stage self-reflection,
//! and the three self-consistency variants (vote, select, reflect).

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::derive_seed;
use crate::eval::{
    answers_equal, classify_reflection_behavior, extract_answer, CanonicalAnswer, TaskInstance,
    TaskKind,
};
use crate::gateway::{Completion, CompletionRequest, Gateway};
use crate::prompts::{reflection_pair_ids, render_template, standard_prompt_id};
use crate::trace::{AnswerRef, RunRecord, StageEvent, StageRole};

/// Errors from baseline strategies.
#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("majority voting is undefined for translation tasks")]
    UnsupportedTaskKind,
    #[error("sample count K must be >= 2 for self-consistency, got {0}")]
    SampleCountTooSmall(u32),
    #[error("no candidate produced a parseable answer")]
    NoParseableAnswer,
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

/// Which baseline to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineStrategy {
    Cot,
    SelfReflection,
    ScVote,
    ScSelect,
    ScReflect,
}

impl BaselineStrategy {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Cot => "cot",
            Self::SelfReflection => "self-reflection",
            Self::ScVote => "sc-vote",
            Self::ScSelect => "sc-select",
            Self::ScReflect => "sc-reflect",
        }
    }

    /// Exact billed calls per task.
    pub fn analytic_calls(&self, sample_k: u32) -> u32 {
        match self {
            Self::Cot => 1,
            Self::SelfReflection => 3,
            Self::ScVote => sample_k,
            Self::ScSelect | Self::ScReflect => sample_k + 1,
        }
    }
}

impl FromStr for BaselineStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cot" => Ok(Self::Cot),
            "self-reflection" => Ok(Self::SelfReflection),
            "sc-vote" => Ok(Self::ScVote),
            "sc-select" => Ok(Self::ScSelect),
            "sc-reflect" => Ok(Self::ScReflect),
            other => Err(format!("unknown baseline strategy: {other}")),
        }
    }
}

/// Baseline settings.
#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub strategy: BaselineStrategy,
    /// Sample count for the self-consistency family.
    pub sample_k: u32,
    /// Prompt-variant rotation index (0..9).
    pub run_index: u32,
    pub model_id: String,
    pub temperature: f64,
    pub run_seed: u64,
}

impl BaselineConfig {
    pub fn new(strategy: BaselineStrategy) -> Self {
        Self {
            strategy,
            sample_k: 8,
            run_index: 0,
            model_id: "simulated".into(),
            temperature: 0.2,
            run_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.sample_k < 1 {
            return Err(BaselineError::SampleCountTooSmall(self.sample_k));
        }
        if matches!(
            self.strategy,
            BaselineStrategy::ScVote | BaselineStrategy::ScSelect | BaselineStrategy::ScReflect
        ) && self.sample_k < 2
        {
            return Err(BaselineError::SampleCountTooSmall(self.sample_k));
        }
        Ok(())
    }
}

/// Dispatch a baseline strategy.
pub fn run_baseline(
    task: &TaskInstance,
    config: &BaselineConfig,
    gateway: &Gateway,
) -> Result<RunRecord, BaselineError> {
    config.validate()?;
    match config.strategy {
        BaselineStrategy::Cot => run_cot(task, config, gateway),
        BaselineStrategy::SelfReflection => run_self_reflection(task, config, gateway),
        BaselineStrategy::ScVote | BaselineStrategy::ScSelect | BaselineStrategy::ScReflect => {
            run_self_consistency(task, config, gateway)
        }
    }
}

/// One completion with the standard prompt for the run index.
pub fn run_cot(
    task: &TaskInstance,
    config: &BaselineConfig,
    gateway: &Gateway,
) -> Result<RunRecord, BaselineError> {
    let prompt = render_template(
        &standard_prompt_id(task.kind, config.run_index),
        &[("input", task.prompt_payload.as_str())],
    )?;
    let req = CompletionRequest::new(config.model_id.clone(), prompt.clone())
        .with_temperature(config.temperature)
        .with_seed(derive_seed(config.run_seed, &[&task.task_id, "cot"]));
    let completion = gateway.complete(&req)?;
    let answer = extract_answer(&completion.text, task.kind).ok();
    let stages = vec![StageEvent::new(0, StageRole::Initial, &prompt, &completion)];
    Ok(assemble(
        task,
        config.strategy.label(),
        stages,
        answer.clone(),
        answer,
        Some(AnswerRef {
            seq: 0,
            candidate: None,
        }),
        Some(AnswerRef {
            seq: 0,
            candidate: None,
        }),
        Vec::new(),
    ))
}

/// Initial response, evaluation, revision: three chained completions using
/// the reflection prompt pair for the run index.
pub fn run_self_reflection(
    task: &TaskInstance,
    config: &BaselineConfig,
    gateway: &Gateway,
) -> Result<RunRecord, BaselineError> {
    let (eval_id, revise_id) = reflection_pair_ids(config.run_index);
    let frame_eval = match task.kind {
        TaskKind::Math => "frame-eval-math",
        TaskKind::Translation => "frame-eval-translation",
    };
    let frame_revise = match task.kind {
        TaskKind::Math => "frame-revise-math",
        TaskKind::Translation => "frame-revise-translation",
    };

    let initial_prompt = render_template(
        &standard_prompt_id(task.kind, config.run_index),
        &[("input", task.prompt_payload.as_str())],
    )?;
    let initial = gateway.complete(
        &CompletionRequest::new(config.model_id.clone(), initial_prompt.clone())
            .with_temperature(config.temperature)
            .with_seed(derive_seed(config.run_seed, &[&task.task_id, "initial"])),
    )?;
    let pre_answer = extract_answer(&initial.text, task.kind).ok();

    let eval_instruction = render_template(&eval_id, &[])?;
    let eval_prompt = render_template(
        frame_eval,
        &[
            ("input", task.prompt_payload.as_str()),
            ("previous", initial.text.as_str()),
            ("instruction", eval_instruction.as_str()),
        ],
    )?;
    let evaluation = gateway.complete(
        &CompletionRequest::new(config.model_id.clone(), eval_prompt.clone())
            .with_temperature(config.temperature)
            .with_seed(derive_seed(config.run_seed, &[&task.task_id, "evaluate"])),
    )?;

    let revise_instruction = render_template(&revise_id, &[])?;
    let revise_prompt = render_template(
        frame_revise,
        &[
            ("input", task.prompt_payload.as_str()),
            ("previous", initial.text.as_str()),
            ("feedback", evaluation.text.as_str()),
            ("instruction", revise_instruction.as_str()),
        ],
    )?;
    let revision = gateway.complete(
        &CompletionRequest::new(config.model_id.clone(), revise_prompt.clone())
            .with_temperature(config.temperature)
            .with_seed(derive_seed(config.run_seed, &[&task.task_id, "revise"])),
    )?;
    let post_answer = extract_answer(&revision.text, task.kind).ok();

    let stages = vec![
        StageEvent::new(0, StageRole::Initial, &initial_prompt, &initial),
        StageEvent::new(1, StageRole::Evaluate, &eval_prompt, &evaluation),
        StageEvent::new(2, StageRole::Revise, &revise_prompt, &revision),
    ];
    Ok(assemble(
        task,
        config.strategy.label(),
        stages,
        pre_answer,
        post_answer,
        Some(AnswerRef {
            seq: 0,
            candidate: None,
        }),
        Some(AnswerRef {
            seq: 2,
            candidate: None,
        }),
        Vec::new(),
    ))
}

/// Sample K responses, then vote, select, or regenerate.
pub fn run_self_consistency(
    task: &TaskInstance,
    config: &BaselineConfig,
    gateway: &Gateway,
) -> Result<RunRecord, BaselineError> {
    if config.strategy == BaselineStrategy::ScVote && task.kind == TaskKind::Translation {
        return Err(BaselineError::UnsupportedTaskKind);
    }
    let prompt = render_template(
        &standard_prompt_id(task.kind, config.run_index),
        &[("input", task.prompt_payload.as_str())],
    )?;
    let req = CompletionRequest::new(config.model_id.clone(), prompt.clone())
        .with_temperature(config.temperature)
        .with_seed(derive_seed(config.run_seed, &[&task.task_id, "sc"]));
    let batch = gateway.sample_n(&req, config.sample_k)?;

    let mut stages: Vec<StageEvent> = batch
        .iter()
        .enumerate()
        .map(|(i, c)| StageEvent::new(i as u32, StageRole::Sample, &prompt, c))
        .collect();
    let answers: Vec<Option<CanonicalAnswer>> = batch
        .iter()
        .map(|c| extract_answer(&c.text, task.kind).ok())
        .collect();
    let parseable: Vec<CanonicalAnswer> = answers.iter().flatten().cloned().collect();
    if parseable.is_empty() {
        return Err(BaselineError::NoParseableAnswer);
    }
    let first_answer = answers[0].clone();
    let mut notes = Vec::new();

    let (pre_answer, post_answer, pre_source, post_source) = match config.strategy {
        BaselineStrategy::ScVote => {
            let vote = majority_vote(&parseable)?;
            (Some(vote.clone()), Some(vote), None, None)
        }
        BaselineStrategy::ScSelect => {
            let (completion, select_prompt) =
                extra_call(task, config, gateway, &batch, "select", "Candidate")?;
            let seq = stages.len() as u32;
            stages.push(StageEvent::new(
                seq,
                StageRole::Select,
                &select_prompt,
                &completion,
            ));
            let chosen = parse_choice(&completion.text, batch.len());
            let (answer, source) = match chosen {
                Some(i) => (
                    answers[i].clone(),
                    Some(AnswerRef {
                        seq: i as u32,
                        candidate: None,
                    }),
                ),
                None => {
                    notes.push("sc-select-parse-fallback".into());
                    (Some(majority_vote(&parseable)?), None)
                }
            };
            (
                first_answer,
                answer,
                Some(AnswerRef {
                    seq: 0,
                    candidate: None,
                }),
                source,
            )
        }
        BaselineStrategy::ScReflect => {
            let (completion, regen_prompt) =
                extra_call(task, config, gateway, &batch, "regen", "Candidate")?;
            let seq = stages.len() as u32;
            stages.push(StageEvent::new(
                seq,
                StageRole::Revise,
                &regen_prompt,
                &completion,
            ));
            let answer = extract_answer(&completion.text, task.kind).ok();
            (
                first_answer,
                answer,
                Some(AnswerRef {
                    seq: 0,
                    candidate: None,
                }),
                Some(AnswerRef {
                    seq,
                    candidate: None,
                }),
            )
        }
        _ => unreachable!("dispatched above"),
    };

    Ok(assemble(
        task,
        config.strategy.label(),
        stages,
        pre_answer,
        post_answer,
        pre_source,
        post_source,
        notes,
    ))
}

fn extra_call(
    task: &TaskInstance,
    config: &BaselineConfig,
    gateway: &Gateway,
    batch: &[Completion],
    stage: &str,
    label: &str,
) -> Result<(Completion, String), BaselineError> {
    let template_id = match (stage, task.kind) {
        ("select", TaskKind::Math) => "select-math",
        ("select", TaskKind::Translation) => "select-translation",
        ("regen", TaskKind::Math) => "regen-math",
        (_, TaskKind::Translation) => "regen-translation",
        _ => "regen-math",
    };
    let mut listing = String::new();
    for (i, c) in batch.iter().enumerate() {
        listing.push_str(&format!("{label} {}: {}\n", i + 1, c.text));
    }
    let prompt = render_template(
        template_id,
        &[
            ("input", task.prompt_payload.as_str()),
            ("candidates", listing.as_str()),
        ],
    )?;
    let completion = gateway.complete(
        &CompletionRequest::new(config.model_id.clone(), prompt.clone())
            .with_temperature(config.temperature)
            .with_seed(derive_seed(config.run_seed, &[&task.task_id, stage])),
    )?;
    Ok((completion, prompt))
}

/// Parse "Candidate N" (or a bare number) into a zero-based index.
fn parse_choice(text: &str, count: usize) -> Option<usize> {
    text.split(|c: char| !c.is_ascii_digit())
        .find(|s| !s.is_empty())
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1 && n <= count)
        .map(|n| n - 1)
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    task: &TaskInstance,
    strategy: &str,
    stages: Vec<StageEvent>,
    pre_answer: Option<CanonicalAnswer>,
    post_answer: Option<CanonicalAnswer>,
    pre_source: Option<AnswerRef>,
    post_source: Option<AnswerRef>,
    notes: Vec<String>,
) -> RunRecord {
    let pre_correct = pre_answer
        .as_ref()
        .map(|a| task.is_correct(a))
        .unwrap_or(false);
    let post_correct = post_answer
        .as_ref()
        .map(|a| task.is_correct(a))
        .unwrap_or(false);
    let billed_calls = stages.iter().filter(|s| s.billed).count() as u32;
    RunRecord {
        task_id: task.task_id.clone(),
        strategy: strategy.to_string(),
        stages,
        pre_answer: pre_answer.map(|a| a.display()),
        post_answer: post_answer.map(|a| a.display()),
        pre_correct,
        post_correct,
        behavior: Some(classify_reflection_behavior(pre_correct, post_correct)),
        billed_calls,
        failed: false,
        failure: None,
        rounds_used: 0,
        consistent: None,
        fallback_used: false,
        notes,
        pre_source,
        post_source,
    }
}

/// Most frequent answer under normalized equality; ties go to the answer
/// whose first occurrence is earliest.
pub fn majority_vote(answers: &[CanonicalAnswer]) -> Result<CanonicalAnswer, BaselineError> {
    if answers.is_empty() {
        return Err(BaselineError::NoParseableAnswer);
    }
    // (first occurrence index, count) per equivalence group.
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for (idx, answer) in answers.iter().enumerate() {
        match groups
            .iter_mut()
            .find(|(first, _)| answers_equal(&answers[*first], answer).unwrap_or(false))
        {
            Some((_, count)) => *count += 1,
            None => groups.push((idx, 1)),
        }
    }
    let (first, _) = groups
        .iter()
        .max_by_key(|(first, count)| (*count, std::cmp::Reverse(*first)))
        .expect("nonempty groups");
    Ok(answers[*first].clone())
}
