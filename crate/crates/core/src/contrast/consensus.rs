//! The consensus-revision loop: revise inconsistent candidates until all
//! answers agree or the round cap is hit, then fall back to a majority.

use serde::{Deserialize, Serialize};

use crate::baselines::majority_vote;
use crate::digest::derive_seed;
use crate::eval::{answers_equal, CanonicalAnswer, TaskInstance};
use crate::gateway::{Completion, CompletionRequest, Gateway};
use crate::prompts::{render_template, revise_template_id};
use crate::trace::StageRole;

use super::{
    build_checklist, build_revision_envelope, contrast_candidates, CandidateResponse, Checklist,
    ContrastCallOptions, ContrastError, ContrastOutcome, Discrepancy,
};

/// Outcome of the consensus loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConsensusResult {
    pub revised: Vec<CandidateResponse>,
    pub consistent: bool,
    pub rounds_used: u32,
    pub final_answer: Option<CanonicalAnswer>,
    pub fallback_used: bool,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

/// Settings for the loop.
#[derive(Debug, Clone)]
pub struct ConsensusOptions {
    pub model_id: String,
    pub temperature: f64,
    pub run_seed: u64,
    /// Context labels mixed into per-round seeds (task id, strategy).
    pub seed_context: Vec<String>,
    pub max_rounds: u32,
    /// When false the envelope carries discrepancies only.
    pub include_checklist: bool,
}

/// Calls issued during the loop, for trace recording.
pub type CallLog = Vec<(StageRole, String, Completion)>;

/// Do all candidates share one answer?
pub fn all_agree(candidates: &[CandidateResponse]) -> bool {
    let mut answers = candidates.iter().map(|c| c.answer.as_ref());
    let first = match answers.next() {
        Some(Some(a)) => a,
        _ => return false,
    };
    answers.all(|a| matches!(a, Some(a) if answers_equal(a, first).unwrap_or(false)))
}

fn majority_answer(candidates: &[CandidateResponse]) -> Option<CanonicalAnswer> {
    let answers: Vec<CanonicalAnswer> =
        candidates.iter().filter_map(|c| c.answer.clone()).collect();
    if answers.is_empty() {
        return None;
    }
    Some(majority_vote(&answers).expect("nonempty answers"))
}

/// Revise until all answers agree, re-contrasting between rounds. If the
/// candidates already agree the loop performs zero rounds and issues no
/// calls. On a parse failure the previous round's candidates stand and the
/// fallback answer is used. Consistency is checked by re-extracting answers
/// rather than by trusting the model's own report.
#[allow(clippy::too_many_arguments)]
pub fn revise_until_consensus(
    task: &TaskInstance,
    candidates: Vec<CandidateResponse>,
    gateway: &Gateway,
    opts: &ConsensusOptions,
    initial: Option<(Vec<Discrepancy>, Checklist)>,
    log: &mut CallLog,
) -> Result<ConsensusResult, ContrastError> {
    debug_assert!(opts.max_rounds >= 1);
    let mut current = candidates;
    if all_agree(&current) {
        let final_answer = current[0].answer.clone();
        return Ok(ConsensusResult {
            revised: current,
            consistent: true,
            rounds_used: 0,
            final_answer,
            fallback_used: false,
            notes: Vec::new(),
        });
    }

    let seed_parts = |stage: &str, round: u32| -> u64 {
        let mut parts: Vec<&str> = opts.seed_context.iter().map(String::as_str).collect();
        let round_label = format!("{stage}-{round}");
        parts.push(&round_label);
        derive_seed(opts.run_seed, &parts)
    };

    let (mut discrepancies, mut checklist) = match initial {
        Some(pair) => pair,
        None => {
            let outcome = run_contrast(
                task,
                &current,
                gateway,
                opts,
                seed_parts("contrast", 0),
                log,
            )?;
            let checklist = build_checklist(&outcome.discrepancies, &outcome.raw_checklist)?;
            (outcome.discrepancies, checklist)
        }
    };

    let mut rounds_used = 0;
    let mut consistent = false;
    let mut notes: Vec<String> = Vec::new();

    for round in 1..=opts.max_rounds {
        let effective_checklist = if opts.include_checklist {
            checklist.clone()
        } else {
            Checklist::default()
        };
        let envelope = build_revision_envelope(&current, &discrepancies, &effective_checklist);
        let prompt = render_template(
            revise_template_id(task.kind),
            &[
                ("input", task.prompt_payload.as_str()),
                ("envelope", envelope.as_str()),
            ],
        )?;
        let req = CompletionRequest::new(opts.model_id.clone(), prompt.clone())
            .with_temperature(opts.temperature)
            .with_seed(seed_parts("revise", round));
        let completion = gateway.complete(&req)?;
        log.push((StageRole::Revise, prompt, completion.clone()));

        match parse_revision(&completion.text, current.len()) {
            Ok(solutions) => {
                rounds_used = round;
                current = current
                    .into_iter()
                    .zip(solutions)
                    .map(|(c, text)| {
                        let mut revised = c.with_text(text, task.kind);
                        revised.origin = super::CandidateOrigin::Revised;
                        revised
                    })
                    .collect();
            }
            Err(_) => {
                // Keep the previous round's candidates.
                notes.push(format!("revision-parse-failure-round-{round}"));
                break;
            }
        }

        if all_agree(&current) {
            consistent = true;
            break;
        }
        if round < opts.max_rounds {
            let outcome = run_contrast(
                task,
                &current,
                gateway,
                opts,
                seed_parts("contrast", round),
                log,
            )?;
            checklist = build_checklist(&outcome.discrepancies, &outcome.raw_checklist)?;
            discrepancies = outcome.discrepancies;
        }
    }

    let (final_answer, fallback_used) = if consistent {
        (current[0].answer.clone(), false)
    } else {
        (majority_answer(&current), true)
    };
    Ok(ConsensusResult {
        revised: current,
        consistent,
        rounds_used,
        final_answer,
        fallback_used,
        notes,
    })
}

fn run_contrast(
    task: &TaskInstance,
    candidates: &[CandidateResponse],
    gateway: &Gateway,
    opts: &ConsensusOptions,
    seed: u64,
    log: &mut CallLog,
) -> Result<ContrastOutcome, ContrastError> {
    let outcome = contrast_candidates(
        task,
        candidates,
        gateway,
        &ContrastCallOptions {
            model_id: opts.model_id.clone(),
            temperature: opts.temperature,
            seed,
        },
    )?;
    log.push((
        StageRole::Contrast,
        outcome.prompt.clone(),
        outcome.completion.clone(),
    ));
    Ok(outcome)
}

/// Recover k revised solution texts from a revision completion: the first
/// JSON object's `Candidate.result_i.solution` fields, in order.
fn parse_revision(text: &str, expected: usize) -> Result<Vec<String>, ContrastError> {
    let json = first_json_object(text).ok_or(ContrastError::RevisionParseFailure)?;
    let value: serde_json::Value =
        serde_json::from_str(&json).map_err(|_| ContrastError::RevisionParseFailure)?;
    let candidates = value
        .get("Candidate")
        .and_then(|c| c.as_object())
        .ok_or(ContrastError::RevisionParseFailure)?;
    let mut out = Vec::with_capacity(expected);
    for i in 1..=expected {
        let solution = candidates
            .get(&format!("result_{i}"))
            .and_then(|r| r.get("solution"))
            .and_then(|s| s.as_str())
            .ok_or(ContrastError::RevisionParseFailure)?;
        out.push(solution.to_string());
    }
    Ok(out)
}

fn first_json_object(text: &str) -> Option<String> {
    let start = text.find('{')?;
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            if escaped {
                escaped = false;
            } else if b == b'\\' {
                escaped = true;
            } else if b == b'"' {
                in_string = false;
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(text[start..start + offset + 1].to_string());
                }
            }
            _ => {}
        }
    }
    None
}
