//! Deterministic simulated solver.
//!
//! Models a language model whose error and feedback behavior is controlled
//! by a profile: a base correctness rate, weighted error classes (systematic
//! classes corrupt the answer identically across seeds, random classes
//! seed-dependently), a self-evaluation feedback mode, and a checklist gain
//! that boosts re-derivation when a revision is grounded in real
//! discrepancies.
//!
//! The solver is stage-aware: it recognizes the pipeline's prompt shapes
//! (curation, solving, contrast, envelope revision, reflection evaluation
//! and revision, candidate selection) by the marker phrases the prompt
//! corpus embeds, and answers each in the format the corresponding parser
//! expects. Output is a pure function of (profile, request), so runs are
//! reproducible under any scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::digest::fnv1a64;
use crate::eval::{extract_answer, AnswerValue, CanonicalAnswer, TaskInstance, TaskKind};

use super::{BackendKind, CompletionBackend, CompletionRequest, GatewayError};

/// Marker phrases shared between the prompt corpus and the stage detector.
pub mod markers {
    pub const CURATE: &str = "Please generate the most suitable prompts";
    pub const REVISE_ENVELOPE: &str = "Please revise each inconsistent solution";
    pub const ALL_SOLUTIONS: &str = "All solutions:";
    pub const ALL_RESULTS: &str = "All Results:";
    pub const SC_SELECT: &str = "Reply with only the number of the best candidate";
    pub const SC_REFLECT: &str = "write one final improved solution";
    pub const CLUSTER_PICK: &str =
        "Reply with only the number of the member most likely to be correct";
    pub const PREVIOUS_RESPONSE: &str = "Previous response:";
    pub const FEEDBACK: &str = "Feedback:";
    pub const NO_REVISION: &str = "No revision required";
    pub const CARELESS: &str = "careless";

    pub const PAYLOAD_CURATE_MATH: &str = "The input math question is ";
    pub const PAYLOAD_CURATE_TRANSLATION: &str = "The input Chinese sentence is ";
    pub const PAYLOAD_CONTRAST_MATH: &str = "The math question is ";
    pub const PAYLOAD_TRANSLATION: &str = "The Chinese sentence is ";
    pub const PAYLOAD_MATH: &str = "The question is ";
}

/// Self-evaluation behavior of the simulated model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedbackMode {
    /// Feedback correctly states whether the response is wrong; grounded
    /// revision gets the checklist gain.
    Accurate,
    /// Always claims no revision is required.
    Overconfident,
    /// Feedback is a fresh random opinion on every call.
    Inconsistent,
    /// Insists on the same erroneous feedback and never actually changes
    /// its answer.
    Stubborn,
}

/// Whether an error class corrupts identically across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionMode {
    Systematic,
    Random,
}

/// One way of being wrong.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ErrorClass {
    pub id: String,
    pub weight: f64,
    #[serde(default = "default_corruption_mode")]
    pub mode: CorruptionMode,
}

fn default_corruption_mode() -> CorruptionMode {
    CorruptionMode::Systematic
}

/// Behavior profile of the simulated solver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulatorProfile {
    /// Fixed canonical answer; when absent the ground truth is derived from
    /// the task payload, and synthetic task generators use the same
    /// derivation for their gold labels.
    #[serde(default)]
    pub ground_truth: Option<String>,
    pub p_correct: f64,
    #[serde(default)]
    pub error_classes: Vec<ErrorClass>,
    pub feedback_mode: FeedbackMode,
    /// Probability boost for re-derivation grounded in real discrepancies.
    pub checklist_gain: f64,
}

impl SimulatorProfile {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=1.0).contains(&self.p_correct) {
            return Err(GatewayError::InvalidProfile(format!(
                "p_correct {} outside [0, 1]",
                self.p_correct
            )));
        }
        if !(0.0..=1.0).contains(&self.checklist_gain) {
            return Err(GatewayError::InvalidProfile(format!(
                "checklist_gain {} outside [0, 1]",
                self.checklist_gain
            )));
        }
        let weight_sum: f64 = self.error_classes.iter().map(|c| c.weight).sum();
        if self.error_classes.iter().any(|c| c.weight < 0.0) {
            return Err(GatewayError::InvalidProfile(
                "error class weights must be nonnegative".into(),
            ));
        }
        if (self.p_correct + weight_sum - 1.0).abs() > 1e-12 {
            return Err(GatewayError::InvalidProfile(format!(
                "p_correct + error weights must sum to 1, got {}",
                self.p_correct + weight_sum
            )));
        }
        let mut ids: Vec<&str> = self.error_classes.iter().map(|c| c.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.error_classes.len() {
            return Err(GatewayError::InvalidProfile(
                "error class ids must be distinct".into(),
            ));
        }
        Ok(())
    }

    /// Ground truth for a task payload under this profile.
    pub fn ground_truth_for(&self, kind: TaskKind, payload: &str) -> CanonicalAnswer {
        match &self.ground_truth {
            Some(text) => match kind {
                TaskKind::Math => text
                    .parse::<f64>()
                    .map(CanonicalAnswer::number)
                    .unwrap_or_else(|_| derived_ground_truth(kind, payload)),
                TaskKind::Translation => CanonicalAnswer::text(text.clone()),
            },
            None => derived_ground_truth(kind, payload),
        }
    }
}

/// Deterministic per-payload ground truth; synthetic datasets use the same
/// function for gold labels so the simulated solver and the scorer agree.
pub fn derived_ground_truth(kind: TaskKind, payload: &str) -> CanonicalAnswer {
    let h = fnv1a64(payload.as_bytes());
    match kind {
        TaskKind::Math => CanonicalAnswer::number(((h % 9000) + 101) as f64),
        TaskKind::Translation => {
            CanonicalAnswer::text(format!("faithful rendering {:08x} of the source", h as u32))
        }
    }
}

/// Force a particular outcome when fabricating candidate solutions.
#[derive(Debug, Clone)]
pub enum ForcedOutcome {
    Correct,
    Error(String),
}

/// Produce one templated step-by-step solution by drawing from the profile.
pub fn simulate_solution(
    task: &TaskInstance,
    profile: &SimulatorProfile,
    seed: u64,
    sample_index: u32,
) -> String {
    let mut rng = call_rng(seed, sample_index, 0x50_4c41);
    let gt = profile.ground_truth_for(task.kind, &task.prompt_payload);
    let (answer, route) = draw_answer(profile, task.kind, &gt, &mut rng);
    render_solution(task.kind, &task.prompt_payload, &answer, &route, &mut rng)
}

/// Like [`simulate_solution`] but with the correctness outcome pinned.
pub fn simulate_solution_forced(
    task: &TaskInstance,
    profile: &SimulatorProfile,
    seed: u64,
    sample_index: u32,
    forced: &ForcedOutcome,
) -> String {
    let mut rng = call_rng(seed, sample_index, 0x50_4c42);
    let gt = profile.ground_truth_for(task.kind, &task.prompt_payload);
    let (answer, route) = match forced {
        ForcedOutcome::Correct => (gt, "direct".to_string()),
        ForcedOutcome::Error(class_id) => {
            let class = profile
                .error_classes
                .iter()
                .find(|c| c.id == *class_id)
                .cloned()
                .unwrap_or_else(|| ErrorClass {
                    id: class_id.clone(),
                    weight: 0.0,
                    mode: CorruptionMode::Systematic,
                });
            (
                corrupt_answer(&gt, task.kind, &class, &mut rng),
                class_id.clone(),
            )
        }
    };
    render_solution(task.kind, &task.prompt_payload, &answer, &route, &mut rng)
}

fn call_rng(seed: u64, sample_index: u32, salt: u64) -> ChaCha8Rng {
    let mixed = seed
        ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (sample_index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    ChaCha8Rng::seed_from_u64(mixed)
}

fn draw_answer(
    profile: &SimulatorProfile,
    kind: TaskKind,
    gt: &CanonicalAnswer,
    rng: &mut ChaCha8Rng,
) -> (CanonicalAnswer, String) {
    let u: f64 = rng.random();
    if u < profile.p_correct || profile.error_classes.is_empty() {
        return (gt.clone(), "direct".into());
    }
    let mut rest = u - profile.p_correct;
    let mut chosen = profile.error_classes.last().expect("nonempty");
    for class in &profile.error_classes {
        if rest < class.weight {
            chosen = class;
            break;
        }
        rest -= class.weight;
    }
    (corrupt_answer(gt, kind, chosen, rng), chosen.id.clone())
}

fn systematic_delta(class_id: &str) -> f64 {
    ((fnv1a64(class_id.as_bytes()) % 89) + 7) as f64
}

fn corrupt_answer(
    gt: &CanonicalAnswer,
    kind: TaskKind,
    class: &ErrorClass,
    rng: &mut ChaCha8Rng,
) -> CanonicalAnswer {
    match kind {
        TaskKind::Math => {
            let base = match gt.value {
                AnswerValue::Number(v) => v,
                AnswerValue::Text(_) => 0.0,
            };
            let delta = match class.mode {
                CorruptionMode::Systematic => systematic_delta(&class.id),
                CorruptionMode::Random => {
                    let d = rng.random_range(1..=997) as f64;
                    if rng.random::<bool>() {
                        d
                    } else {
                        -d
                    }
                }
            };
            CanonicalAnswer::number(base + delta)
        }
        TaskKind::Translation => {
            let base = match &gt.value {
                AnswerValue::Text(t) => t.clone(),
                AnswerValue::Number(v) => v.to_string(),
            };
            match class.mode {
                CorruptionMode::Systematic => {
                    CanonicalAnswer::text(format!("{base}, rendered along route {}", class.id))
                }
                CorruptionMode::Random => CanonicalAnswer::text(format!(
                    "loose rendering {:08x} via route {}",
                    rng.random::<u32>(),
                    class.id
                )),
            }
        }
    }
}

fn render_solution(
    kind: TaskKind,
    payload: &str,
    answer: &CanonicalAnswer,
    route: &str,
    rng: &mut ChaCha8Rng,
) -> String {
    let flavor: u32 = rng.random::<u32>() & 0xFF_FFFF;
    match kind {
        TaskKind::Math => format!(
            "Step 1: Restate the task and collect the quantities given in \"{payload}\".\n\
             Step 2: Combine the quantities along route {route}, variant {flavor:06x}, into one expression.\n\
             Step 3: Evaluate the expression and double-check the arithmetic.\n\
             The answer is {}.",
            answer.display()
        ),
        TaskKind::Translation => format!(
            "Step 1: Read the source sentence \"{payload}\" and note idioms or metaphors.\n\
             Step 2: Choose phrasing along route {route}, variant {flavor:06x}.\n\
             {}",
            answer.display()
        ),
    }
}

// ---------------------------------------------------------------------------
// Stage-aware backend
// ---------------------------------------------------------------------------

/// Curated perspective pool for the simulated solver, math tasks.
const MATH_PERSPECTIVES: &[(&str, &str)] = &[
    ("Bottom-Up Perspective", "As a mathematician, solve the given problem from a bottom-up perspective. Start with the simplest known quantities and combine them step by step until the final result emerges."),
    ("Top-Down Perspective", "As a methodical solver, begin from the quantity the question asks for and decompose it into sub-quantities, resolving each before assembling the final answer."),
    ("Step-by-Step Checker", "As a careful examiner, solve the question in small numbered steps, verifying the arithmetic of each step before moving on."),
    ("Units Perspective", "As a precision-focused analyst, pay particular attention to units, percentages and entity words while solving the question step by step."),
    ("Logical Perspective", "As a logician, translate the question into explicit relations between quantities and derive the answer by applying the relations one at a time."),
    ("Analogical Perspective", "As a tutor fond of analogies, map the question onto a simpler familiar problem, solve that, and transfer the solution back."),
    ("Estimation-First Perspective", "As a pragmatic estimator, first bound the plausible range of the answer, then compute it exactly and check the result against the bound."),
    ("Equation Perspective", "As an algebraist, introduce variables for the unknowns, write the equations the question implies, and solve them systematically."),
    ("Backward-Verification Perspective", "As a skeptical reviewer, derive the answer and then substitute it back into the conditions of the question to confirm it holds."),
];

/// Curated perspective pool, translation tasks. The first two entries follow
/// the canonical literal/liberal split.
const TRANSLATION_PERSPECTIVES: &[(&str, &str)] = &[
    ("Literal Perspective", "You are a meticulous translator, proficient in direct translation, and highly focused on specifics. Your translation approach prioritizes precise replication of the original text's expression."),
    ("Liberal Perspective", "You are an inventive translator, characterized by a dynamic and liberal translation approach, often reimagining the original text's meaning in your own linguistic style."),
    ("Native Speaker Perspective", "You are a native English speaker attuned to local culture; translate so the sentence reads naturally, rendering idioms by their customary English equivalents in a warm conversational tone."),
    ("Domain Expert Perspective", "You are a subject-matter expert; identify the domain of the sentence, use the field's established terminology, and keep a precise neutral tone."),
    ("Metaphor-Aware Perspective", "You are a literary translator; scan the source for metaphors and figurative usage and translate their intent rather than their surface words, in an expressive tone."),
    ("Formal Register Perspective", "You are a professional interpreter for official settings; translate with formal vocabulary and a measured, respectful tone, with emphasis on unambiguous phrasing."),
    ("Colloquial Perspective", "You are a casual bilingual speaker; translate into everyday spoken English with a relaxed tone, with emphasis on how people actually phrase the idea."),
    ("Context-First Perspective", "You are a contextual analyst; infer the situation behind the sentence, then translate with wording that fits the situation, in an even tone."),
    ("Conciseness Perspective", "You are an editor who prizes economy; translate with the fewest words that preserve the full meaning, in a brisk neutral tone."),
];

/// Stage-aware simulated backend.
pub struct SimulatedSolver {
    profile: SimulatorProfile,
    /// Pool of perspective counts the curation stage draws from.
    curation_sizes: Vec<u32>,
}

impl SimulatedSolver {
    pub fn new(profile: SimulatorProfile) -> Result<Self, GatewayError> {
        profile.validate()?;
        Ok(Self {
            profile,
            curation_sizes: vec![3, 4, 4, 5],
        })
    }

    pub fn with_curation_sizes(mut self, sizes: Vec<u32>) -> Self {
        if !sizes.is_empty() {
            self.curation_sizes = sizes;
        }
        self
    }

    pub fn profile(&self) -> &SimulatorProfile {
        &self.profile
    }

    fn effective_gain(&self, has_checklist: bool) -> f64 {
        if has_checklist {
            self.profile.checklist_gain
        } else {
            // Discrepancies alone still ground the revision, but less.
            0.5 * self.profile.checklist_gain
        }
    }

    fn respond_curation(&self, req: &CompletionRequest, kind: TaskKind) -> String {
        let mut rng = call_rng(req.seed, req.sample_index, 0xC0_4A7E);
        let m = self.curation_sizes[rng.random_range(0..self.curation_sizes.len())] as usize;
        let pool = match kind {
            TaskKind::Math => MATH_PERSPECTIVES,
            TaskKind::Translation => TRANSLATION_PERSPECTIVES,
        };
        let start = rng.random_range(0..pool.len());
        let mut out = String::new();
        for i in 0..m.min(pool.len()) {
            let (name, instruction) = pool[(start + i) % pool.len()];
            match kind {
                TaskKind::Math => {
                    out.push_str(&format!("{name}: ###{instruction}@@@\n\n"));
                }
                TaskKind::Translation => {
                    out.push_str(&format!("{name}: ###{instruction}\n\n"));
                }
            }
        }
        out
    }

    fn respond_solve(&self, req: &CompletionRequest, kind: TaskKind, payload: &str) -> String {
        let gt = self.profile.ground_truth_for(kind, payload);
        let mut rng = call_rng(req.seed, req.sample_index, 0x50_4c41);
        if req.system_prompt.to_lowercase().contains(markers::CARELESS) {
            // The deliberate negative persona always gets it wrong, in its
            // own way.
            let class = ErrorClass {
                id: "careless".into(),
                weight: 0.0,
                mode: CorruptionMode::Systematic,
            };
            let answer = corrupt_answer(&gt, kind, &class, &mut rng);
            return render_solution(kind, payload, &answer, "careless", &mut rng);
        }
        let (answer, route) = draw_answer(&self.profile, kind, &gt, &mut rng);
        render_solution(kind, payload, &answer, &route, &mut rng)
    }

    fn respond_contrast(&self, req: &CompletionRequest, kind: TaskKind, payload: &str) -> String {
        let label = match kind {
            TaskKind::Math => "Solution",
            TaskKind::Translation => "Result",
        };
        let solutions = extract_numbered_blocks(&req.user_prompt, label);
        let answers: Vec<Option<CanonicalAnswer>> = solutions
            .iter()
            .map(|s| extract_answer(s, kind).ok())
            .collect();
        let _ = payload;
        let mut out = String::new();
        let mut differing: Vec<(usize, usize)> = Vec::new();
        for i in 0..solutions.len() {
            for j in (i + 1)..solutions.len() {
                let equal = match (&answers[i], &answers[j]) {
                    (Some(a), Some(b)) => crate::eval::answers_equal(a, b).unwrap_or(false),
                    _ => false,
                };
                let (ai, aj) = (
                    answers[i].as_ref().map(|a| a.display()).unwrap_or_default(),
                    answers[j].as_ref().map(|a| a.display()).unwrap_or_default(),
                );
                if equal {
                    out.push_str(&format!(
                        "For {label}{} and {label}{}: No difference in the final answers; both conclude {}.\n",
                        i + 1,
                        j + 1,
                        ai
                    ));
                } else {
                    differing.push((i, j));
                    out.push_str(&format!(
                        "For {label}{} and {label}{}: The final answers disagree. Where: the conclusions state {} versus {}. Why: the derivations follow different routes and at least one step misreads a quantity.\n",
                        i + 1,
                        j + 1,
                        ai,
                        aj
                    ));
                }
            }
        }
        if !differing.is_empty() {
            out.push_str("Checklist:\n");
            out.push_str("- Re-read the request and restate exactly what quantity is asked for.\n");
            for (i, j) in differing.iter().take(4) {
                out.push_str(&format!(
                    "- Re-derive the step where {label}{} and {label}{} part ways and check each operation.\n",
                    i + 1,
                    j + 1
                ));
            }
            out.push_str("- Confirm the final line states the re-verified result.\n");
        }
        out
    }

    fn respond_envelope_revision(
        &self,
        req: &CompletionRequest,
        kind: TaskKind,
        payload: &str,
    ) -> Result<String, GatewayError> {
        let envelope = extract_json_object(&req.user_prompt).ok_or_else(|| {
            GatewayError::MalformedRequest("revision prompt carries no JSON envelope".into())
        })?;
        let value: serde_json::Value = serde_json::from_str(&envelope).map_err(|e| {
            GatewayError::MalformedRequest(format!("revision envelope is not valid JSON: {e}"))
        })?;
        let candidates = value
            .get("Candidate")
            .and_then(|c| c.as_object())
            .ok_or_else(|| {
                GatewayError::MalformedRequest("revision envelope lacks Candidate map".into())
            })?;
        let has_checklist = value
            .get("Checklist")
            .and_then(|c| c.as_array())
            .map(|a| !a.is_empty())
            .unwrap_or(false);

        let mut solutions: Vec<String> = Vec::new();
        for i in 1..=candidates.len() {
            let sol = candidates
                .get(&format!("result_{i}"))
                .and_then(|r| r.get("solution"))
                .and_then(|s| s.as_str())
                .unwrap_or_default()
                .to_string();
            solutions.push(sol);
        }
        let answers: Vec<Option<CanonicalAnswer>> = solutions
            .iter()
            .map(|s| extract_answer(s, kind).ok())
            .collect();
        let flagged: Vec<bool> = (0..solutions.len())
            .map(|i| {
                (0..solutions.len()).any(|j| {
                    i != j
                        && match (&answers[i], &answers[j]) {
                            (Some(a), Some(b)) => {
                                !crate::eval::answers_equal(a, b).unwrap_or(false)
                            }
                            _ => true,
                        }
                })
            })
            .collect();

        let gt = self.profile.ground_truth_for(kind, payload);
        let gain = self.effective_gain(has_checklist);
        let success_p = if matches!(self.profile.feedback_mode, FeedbackMode::Stubborn) {
            0.0
        } else {
            (self.profile.p_correct + gain).min(1.0)
        };

        let mut out = serde_json::Map::new();
        let mut candidate_map = serde_json::Map::new();
        for (i, solution) in solutions.iter().enumerate() {
            let mut rng = call_rng(req.seed, req.sample_index, 0xEE_0000 + i as u64);
            let revised = if flagged[i] && rng.random::<f64>() < success_p {
                // Re-examination succeeds: re-derive the correct result.
                render_solution(kind, payload, &gt, "direct", &mut rng)
            } else {
                // Keep the candidate's own derivation.
                solution.clone()
            };
            let answer = extract_answer(&revised, kind)
                .map(|a| a.display())
                .unwrap_or_default();
            let mut entry = serde_json::Map::new();
            entry.insert("answer".into(), serde_json::Value::String(answer));
            entry.insert("solution".into(), serde_json::Value::String(revised));
            candidate_map.insert(
                format!("result_{}", i + 1),
                serde_json::Value::Object(entry),
            );
        }
        out.insert("Candidate".into(), serde_json::Value::Object(candidate_map));
        Ok(
            serde_json::to_string_pretty(&serde_json::Value::Object(out))
                .expect("revision payload serializes"),
        )
    }

    fn respond_reflection_eval(
        &self,
        req: &CompletionRequest,
        kind: TaskKind,
        payload: &str,
    ) -> String {
        let previous =
            extract_framed_block(&req.user_prompt, markers::PREVIOUS_RESPONSE).unwrap_or_default();
        let prior_answer = extract_answer(&previous, kind).ok();
        let gt = self.profile.ground_truth_for(kind, payload);
        let prior_correct = prior_answer
            .as_ref()
            .map(|a| crate::eval::answers_equal(a, &gt).unwrap_or(false))
            .unwrap_or(false);
        let mut rng = call_rng(req.seed, req.sample_index, 0xFE_EDBA);
        match self.profile.feedback_mode {
            FeedbackMode::Accurate => {
                if prior_correct {
                    "Exactly correct. No revision required.".to_string()
                } else {
                    format!(
                        "There is an error in the previous response: the derivation drifted off route and the final answer {} does not withstand re-derivation.",
                        prior_answer.map(|a| a.display()).unwrap_or_default()
                    )
                }
            }
            FeedbackMode::Overconfident => {
                "No error found. No revision required. The previous response is correct as given."
                    .to_string()
            }
            FeedbackMode::Inconsistent => {
                if rng.random::<f64>() < 0.5 {
                    "No error found. No revision required.".to_string()
                } else {
                    let opinions = [
                        "The error lies in the combination step (opinion-1): the quantities were merged in the wrong order.",
                        "The error lies in the final evaluation (opinion-2): the arithmetic slipped.",
                        "The reading of the request is off (opinion-3): a quantity was misattributed.",
                    ];
                    opinions[rng.random_range(0..opinions.len())].to_string()
                }
            }
            FeedbackMode::Stubborn => {
                "The previous response is wrong: the combination step misapplies the rule (opinion-stubborn). The result cannot be trusted."
                    .to_string()
            }
        }
    }

    fn respond_reflection_revision(
        &self,
        req: &CompletionRequest,
        kind: TaskKind,
        payload: &str,
    ) -> String {
        let previous =
            extract_framed_block(&req.user_prompt, markers::PREVIOUS_RESPONSE).unwrap_or_default();
        let feedback =
            extract_framed_block(&req.user_prompt, markers::FEEDBACK).unwrap_or_default();
        if feedback.contains(markers::NO_REVISION) || feedback.contains("Exactly correct") {
            return previous;
        }
        let gt = self.profile.ground_truth_for(kind, payload);
        let mut rng = call_rng(req.seed, req.sample_index, 0x4E_5657);
        match self.profile.feedback_mode {
            FeedbackMode::Stubborn => previous,
            FeedbackMode::Accurate => {
                let q = (self.profile.p_correct + self.profile.checklist_gain).min(1.0);
                if rng.random::<f64>() < q {
                    render_solution(kind, payload, &gt, "direct", &mut rng)
                } else {
                    previous
                }
            }
            // Ungrounded re-derivation: a fresh draw at the base rate, so a
            // correct prior can be corrupted.
            FeedbackMode::Inconsistent | FeedbackMode::Overconfident => {
                let (answer, route) = draw_answer(&self.profile, kind, &gt, &mut rng);
                render_solution(kind, payload, &answer, &route, &mut rng)
            }
        }
    }

    fn respond_pick(&self, req: &CompletionRequest, label: &str, noun: &str) -> String {
        let count = extract_numbered_blocks(&req.user_prompt, label)
            .len()
            .max(1);
        let mut rng = call_rng(req.seed, req.sample_index, 0x91_C4E0);
        format!("{noun} {}", rng.random_range(0..count) + 1)
    }
}

impl CompletionBackend for SimulatedSolver {
    fn invoke(&self, req: &CompletionRequest) -> Result<String, GatewayError> {
        let user = req.user_prompt.as_str();
        let (kind, payload) = detect_task(user).ok_or_else(|| {
            GatewayError::MalformedRequest(
                "simulated solver cannot find a task payload in the prompt".into(),
            )
        })?;
        if user.contains(markers::REVISE_ENVELOPE) {
            return self.respond_envelope_revision(req, kind, &payload);
        }
        if user.contains(markers::ALL_SOLUTIONS) || user.contains(markers::ALL_RESULTS) {
            return Ok(self.respond_contrast(req, kind, &payload));
        }
        if user.contains(markers::CURATE) {
            return Ok(self.respond_curation(req, kind));
        }
        if user.contains(markers::SC_SELECT) {
            return Ok(self.respond_pick(req, "Candidate", "Candidate"));
        }
        if user.contains(markers::CLUSTER_PICK) {
            return Ok(self.respond_pick(req, "Member", "Member"));
        }
        if user.contains(markers::SC_REFLECT) {
            let mut rng = call_rng(req.seed, req.sample_index, 0x5C_4EF1);
            let gt = self.profile.ground_truth_for(kind, &payload);
            let (answer, route) = draw_answer(&self.profile, kind, &gt, &mut rng);
            return Ok(render_solution(kind, &payload, &answer, &route, &mut rng));
        }
        if user.contains(markers::FEEDBACK) && user.contains(markers::PREVIOUS_RESPONSE) {
            return Ok(self.respond_reflection_revision(req, kind, &payload));
        }
        if user.contains(markers::PREVIOUS_RESPONSE) {
            return Ok(self.respond_reflection_eval(req, kind, &payload));
        }
        Ok(self.respond_solve(req, kind, &payload))
    }

    fn kind(&self) -> BackendKind {
        BackendKind::Simulated
    }
}

// ---------------------------------------------------------------------------
// Prompt parsing helpers
// ---------------------------------------------------------------------------

/// Locate the task payload and kind from the prompt's payload marker.
fn detect_task(user_prompt: &str) -> Option<(TaskKind, String)> {
    let candidates = [
        (markers::PAYLOAD_CURATE_MATH, TaskKind::Math),
        (markers::PAYLOAD_CURATE_TRANSLATION, TaskKind::Translation),
        (markers::PAYLOAD_CONTRAST_MATH, TaskKind::Math),
        (markers::PAYLOAD_TRANSLATION, TaskKind::Translation),
        (markers::PAYLOAD_MATH, TaskKind::Math),
    ];
    for (marker, kind) in candidates {
        if let Some(pos) = user_prompt.rfind(marker) {
            let rest = &user_prompt[pos + marker.len()..];
            let line = rest.lines().next().unwrap_or("");
            let payload = line.trim().trim_end_matches('.').trim();
            if !payload.is_empty() {
                return Some((kind, payload.to_string()));
            }
        }
    }
    None
}

/// Collect blocks introduced by lines starting `LabelN:`, e.g. `Solution2:`.
fn extract_numbered_blocks(text: &str, label: &str) -> Vec<String> {
    let mut blocks: Vec<(usize, String)> = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for line in text.lines() {
        let trimmed = line.trim_start();
        let header = trimmed.strip_prefix(label).and_then(|rest| {
            let rest = rest.trim_start_matches(' ');
            let digits: String = rest.chars().take_while(char::is_ascii_digit).collect();
            let after = &rest[digits.len()..];
            if !digits.is_empty() && after.starts_with(':') {
                Some((
                    digits.parse::<usize>().ok()?,
                    after[1..].trim_start().to_string(),
                ))
            } else {
                None
            }
        });
        match header {
            Some((n, first)) => {
                if let Some(done) = current.take() {
                    blocks.push(done);
                }
                current = Some((n, first));
            }
            None => {
                if let Some((_, buf)) = current.as_mut() {
                    if !buf.is_empty() {
                        buf.push('\n');
                    }
                    buf.push_str(line);
                }
            }
        }
    }
    if let Some(done) = current.take() {
        blocks.push(done);
    }
    blocks.sort_by_key(|(n, _)| *n);
    blocks
        .into_iter()
        .map(|(_, b)| b.trim().to_string())
        .collect()
}

/// Extract the text between `---` fences following a section marker.
fn extract_framed_block(text: &str, marker: &str) -> Option<String> {
    let start = text.find(marker)? + marker.len();
    let rest = &text[start..];
    let open = rest.find("---")? + 3;
    let body = &rest[open..];
    let close = body.find("---")?;
    Some(body[..close].trim().to_string())
}

/// First balanced JSON object in the text, string-aware.
fn extract_json_object(text: &str) -> Option<String> {
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
