//! Contrasting-incorrect-solutions experiment: measure how reflection
//! performs when handed a single wrong solution versus pairs of wrong
//! solutions whose errors are alike or unlike.
//!
//! Four scenarios per task, all starting from fabricated candidates:
//! 1. self-evaluate: one wrong solution through evaluate-then-revise;
//! 2. correct-incorrect: contrast a correct and a wrong solution;
//! 3. same-error: contrast two wrong solutions from the same systematic
//!    error class (their answers coincide);
//! 4. different-error: contrast two wrong solutions from different classes.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::contrast::{
    revise_until_consensus, CandidateOrigin, CandidateResponse, ConsensusOptions,
};
use crate::digest::derive_seed;
use crate::eval::{extract_answer, TaskInstance, TaskKind};
use crate::gateway::{
    simulate_solution_forced, CompletionRequest, CorruptionMode, ForcedOutcome, Gateway,
    SimulatedSolver, SimulatorProfile,
};
use crate::prompts::{reflection_pair_ids, render_template};

use super::experiment::synthetic_tasks;
use super::HarnessError;

/// Per-scenario accuracy over the simulated task set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MechanismReport {
    pub tasks: usize,
    pub self_evaluate_accuracy: f64,
    pub correct_incorrect_accuracy: f64,
    pub same_error_accuracy: f64,
    pub different_error_accuracy: f64,
}

impl MechanismReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// A profile tuned for the comparison: near-zero ungrounded repair rate,
/// a real boost when a revision is grounded in a true discrepancy, and two
/// systematic error classes to realize the same/different split.
pub fn default_mechanism_profile() -> SimulatorProfile {
    SimulatorProfile {
        ground_truth: None,
        p_correct: 0.01,
        error_classes: vec![
            crate::gateway::ErrorClass {
                id: "route-misread".into(),
                weight: 0.54,
                mode: CorruptionMode::Systematic,
            },
            crate::gateway::ErrorClass {
                id: "route-swap".into(),
                weight: 0.35,
                mode: CorruptionMode::Systematic,
            },
            crate::gateway::ErrorClass {
                id: "route-noise".into(),
                weight: 0.10,
                mode: CorruptionMode::Random,
            },
        ],
        feedback_mode: crate::gateway::FeedbackMode::Inconsistent,
        checklist_gain: 0.35,
    }
}

/// Run the four scenarios over `tasks` synthetic math tasks. The profile
/// needs at least two systematic error classes to realize the same/different
/// split.
pub fn run_mechanism_comparison(
    profile: &SimulatorProfile,
    tasks: usize,
    seed: u64,
) -> Result<MechanismReport, HarnessError> {
    profile.validate()?;
    let systematic: Vec<String> = profile
        .error_classes
        .iter()
        .filter(|c| c.mode == CorruptionMode::Systematic)
        .map(|c| c.id.clone())
        .collect();
    if systematic.len() < 2 {
        return Err(HarnessError::ConfigInvalid(
            "mechanism comparison needs two systematic error classes".into(),
        ));
    }
    let (class_a, class_b) = (systematic[0].clone(), systematic[1].clone());

    let gateway = Gateway::new(Arc::new(SimulatedSolver::new(profile.clone())?));
    let task_set = synthetic_tasks(TaskKind::Math, tasks, seed);

    let mut hits = [0usize; 4];
    for (i, task) in task_set.iter().enumerate() {
        let base_seed = derive_seed(seed, &[&task.task_id, "mechanism"]);
        let wrong_a = forced(task, profile, base_seed, 1, &class_a);
        let wrong_a2 = forced(task, profile, base_seed, 2, &class_a);
        let wrong_b = forced(task, profile, base_seed, 3, &class_b);
        let correct = CandidateResponse::new(
            "c0",
            simulate_solution_forced(task, profile, base_seed, 4, &ForcedOutcome::Correct),
            TaskKind::Math,
            CandidateOrigin::PerspectiveSample,
        );

        if self_evaluate_once(task, &gateway, &wrong_a, base_seed, i as u32)? {
            hits[0] += 1;
        }
        // Alternate the pair order so the majority-tie fallback (lowest
        // index wins) biases neither scenario.
        let (first, second) = if i % 2 == 0 {
            (correct.clone(), wrong_a.clone())
        } else {
            (wrong_a.clone(), correct)
        };
        if contrast_pair(task, &gateway, first, second, base_seed)? {
            hits[1] += 1;
        }
        if contrast_pair(task, &gateway, wrong_a.clone(), wrong_a2, base_seed)? {
            hits[2] += 1;
        }
        if contrast_pair(task, &gateway, wrong_a, wrong_b, base_seed)? {
            hits[3] += 1;
        }
    }

    let n = tasks as f64;
    Ok(MechanismReport {
        tasks,
        self_evaluate_accuracy: hits[0] as f64 / n,
        correct_incorrect_accuracy: hits[1] as f64 / n,
        same_error_accuracy: hits[2] as f64 / n,
        different_error_accuracy: hits[3] as f64 / n,
    })
}

fn forced(
    task: &TaskInstance,
    profile: &SimulatorProfile,
    seed: u64,
    index: u32,
    class: &str,
) -> CandidateResponse {
    CandidateResponse::new(
        format!("w{index}"),
        simulate_solution_forced(
            task,
            profile,
            seed,
            index,
            &ForcedOutcome::Error(class.to_string()),
        ),
        TaskKind::Math,
        CandidateOrigin::PerspectiveSample,
    )
}

/// Evaluate-then-revise on one fabricated wrong solution; true when the
/// revised answer is correct.
fn self_evaluate_once(
    task: &TaskInstance,
    gateway: &Gateway,
    candidate: &CandidateResponse,
    seed: u64,
    run_index: u32,
) -> Result<bool, HarnessError> {
    let (eval_id, revise_id) = reflection_pair_ids(run_index);
    let eval_instruction = render_template(&eval_id, &[])?;
    let eval_prompt = render_template(
        "frame-eval-math",
        &[
            ("input", task.prompt_payload.as_str()),
            ("previous", candidate.solution_text.as_str()),
            ("instruction", eval_instruction.as_str()),
        ],
    )?;
    let evaluation = gateway.complete(
        &CompletionRequest::new("simulated-solver", eval_prompt)
            .with_seed(derive_seed(seed, &["self-evaluate", "eval"])),
    )?;

    let revise_instruction = render_template(&revise_id, &[])?;
    let revise_prompt = render_template(
        "frame-revise-math",
        &[
            ("input", task.prompt_payload.as_str()),
            ("previous", candidate.solution_text.as_str()),
            ("feedback", evaluation.text.as_str()),
            ("instruction", revise_instruction.as_str()),
        ],
    )?;
    let revision = gateway.complete(
        &CompletionRequest::new("simulated-solver", revise_prompt)
            .with_seed(derive_seed(seed, &["self-evaluate", "revise"])),
    )?;
    Ok(extract_answer(&revision.text, TaskKind::Math)
        .map(|a| task.is_correct(&a))
        .unwrap_or(false))
}

/// Contrast a pair and drive consensus; true when the final answer is
/// correct.
fn contrast_pair(
    task: &TaskInstance,
    gateway: &Gateway,
    first: CandidateResponse,
    second: CandidateResponse,
    seed: u64,
) -> Result<bool, HarnessError> {
    let pair_label = format!("{}-{}", first.perspective_id, second.perspective_id);
    let result = revise_until_consensus(
        task,
        vec![first, second],
        gateway,
        &ConsensusOptions {
            model_id: "simulated-solver".into(),
            temperature: 0.2,
            run_seed: seed,
            seed_context: vec![task.task_id.clone(), pair_label],
            max_rounds: 2,
            include_checklist: true,
        },
        None,
        &mut Vec::new(),
    )?;
    Ok(result
        .final_answer
        .map(|a| task.is_correct(&a))
        .unwrap_or(false))
}
