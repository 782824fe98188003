//! Acceptance suite: every release criterion as one test, each printing a
//! single PASS line (a failed assertion fails the test and marks the
//! criterion red). Tolerances and budgets are pinned in the assertions.
//!
//! Run with `cargo test -p selfcontrast --test acceptance -- --nocapture`
//! to see the lines.

use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use selfcontrast::baselines::{run_baseline, BaselineConfig, BaselineStrategy};
use selfcontrast::contrast::{
    build_revision_envelope, CandidateOrigin, CandidateResponse, Checklist, Discrepancy,
};
use selfcontrast::diversity::{k_medoids, DistanceMatrix};
use selfcontrast::eval::{
    classify_feedback_set, classify_reflection_behavior, extract_answer, one_tailed_paired_t,
    FeedbackCategory, FeedbackLabel, ReflectionBehavior, TaskKind,
};
use selfcontrast::gateway::{
    derived_ground_truth, CompletionBackend, CorruptionMode, ErrorClass, FeedbackMode,
    SimulatedSolver, SimulatorProfile,
};
use selfcontrast::harness::{
    default_mechanism_profile, replay_transcript, run_experiment, run_mechanism_comparison,
    BackendConfig, BackendKindConfig, DatasetConfig, ExperimentConfig, StrategyConfig,
};
use selfcontrast::prompts::{format_perspective_set, parse_perspective_block, PerspectiveSet};
use selfcontrast::trace::StageRole;

fn pass(line: &str) {
    println!("ACCEPTANCE {line}: PASS");
}

// ---------------------------------------------------------------------------
// 1. K-medoids oracle equivalence
// ---------------------------------------------------------------------------

/// Independent oracle: enumerate every k-subset and take the cheapest cost.
fn brute_force_best_cost(d: &DistanceMatrix, k: usize) -> f64 {
    let n = d.len();
    let mut subset: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    loop {
        let cost: f64 = (0..n)
            .map(|i| {
                subset
                    .iter()
                    .map(|&m| d.get(i, m))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum();
        if cost < best {
            best = cost;
        }
        // Advance the combination.
        let mut pos = k;
        let mut advanced = false;
        while pos > 0 {
            pos -= 1;
            if subset[pos] < n - k + pos {
                subset[pos] += 1;
                for j in (pos + 1)..k {
                    subset[j] = subset[j - 1] + 1;
                }
                advanced = true;
                break;
            }
        }
        if !advanced {
            return best;
        }
    }
}

#[test]
fn criterion_1_kmedoids_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_261);
    for case in 0..100 {
        let n = rng.random_range(2..=8usize);
        let k = rng.random_range(1..=n);
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.random_range(0.0..2.0);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        let d = DistanceMatrix::from_raw(n, data).unwrap();
        let selection = k_medoids(&d, k, case as u64).unwrap();
        let oracle = brute_force_best_cost(&d, k);
        assert!(
            (selection.total_cost - oracle).abs() == 0.0,
            "case {case} (n={n}, k={k}): cost {} vs oracle {}",
            selection.total_cost,
            oracle
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5s");
    pass("1 k-medoids-oracle-equivalence");
}

// ---------------------------------------------------------------------------
// 2. t-test oracle
// ---------------------------------------------------------------------------

/// Independent numeric oracle for P(T_dof > t): substitute x = sqrt(dof)
/// tan(theta), reducing the t-density integral to cosine powers on a finite
/// interval, then integrate with Simpson's rule. No gamma functions shared
/// with the implementation under test.
fn t_sf_oracle(t: f64, dof: u32) -> f64 {
    let nu = dof as f64;
    let f = |theta: f64| theta.cos().powi(dof as i32 - 1);
    let simpson = |a: f64, b: f64, steps: usize| -> f64 {
        let h = (b - a) / steps as f64;
        let mut acc = f(a) + f(b);
        for i in 1..steps {
            let weight = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += weight * f(a + i as f64 * h);
        }
        acc * h / 3.0
    };
    let steps = 1 << 16;
    let lower = (t / nu.sqrt()).atan();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let numerator = simpson(lower, half_pi, steps);
    let denominator = simpson(-half_pi, half_pi, steps);
    numerator / denominator
}

#[test]
fn criterion_2_t_test_oracle() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(777);
    let sizes = [5usize, 10, 20];
    for case in 0..50 {
        let n = sizes[case % sizes.len()];
        let pre: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let post: Vec<f64> = pre
            .iter()
            .map(|v| v + rng.random_range(-0.2..0.25))
            .collect();
        let report = one_tailed_paired_t(&pre, &post).unwrap();
        // Recompute t independently for the oracle.
        let diffs: Vec<f64> = pre.iter().zip(&post).map(|(a, b)| b - a).collect();
        let mean = diffs.iter().sum::<f64>() / n as f64;
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let t = mean / (var / n as f64).sqrt();
        let oracle = t_sf_oracle(t, (n - 1) as u32);
        assert!(
            (report.p_value - oracle).abs() < 1e-9,
            "case {case} (n={n}): p {} vs oracle {}",
            report.p_value,
            oracle
        );
    }
    // Degenerate zero-variance cases return {0, 0.5, 1} by sign.
    let flat = vec![0.25; 10];
    assert_eq!(one_tailed_paired_t(&flat, &flat).unwrap().p_value, 0.5);
    let up: Vec<f64> = flat.iter().map(|v| v + 0.5).collect();
    assert_eq!(one_tailed_paired_t(&flat, &up).unwrap().p_value, 0.0);
    let down: Vec<f64> = flat.iter().map(|v| v - 0.125).collect();
    assert_eq!(one_tailed_paired_t(&flat, &down).unwrap().p_value, 1.0);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1s");
    pass("2 t-test-oracle");
}

// ---------------------------------------------------------------------------
// 3. Answer extraction, behavior truth table, feedback thresholds
// ---------------------------------------------------------------------------

/// Hand-labeled before the extractor was written: markers, separators,
/// currency, percents, distractors, negatives.
const EXTRACTION_FIXTURE: &[(&str, f64)] = &[
    ("So the answer is 42.", 42.0),
    ("#### 18", 18.0),
    ("The total is 12. #### 7", 7.0),
    ("Scratch: 5, 10, 15\n#### 100", 100.0),
    ("answer: 7", 7.0),
    ("Answer is -3.5", -3.5),
    ("The ANSWER IS 250", 250.0),
    ("We get \\boxed{12} at the end", 12.0),
    ("...earns $1,200.00 weekly", 1200.0),
    ("price rises to $3,600. The answer is $3,600.", 3600.0),
    ("that is 50% of the total", 0.5),
    ("the rate is 12.5%", 0.125),
    ("The answer is 15%.", 0.15),
    ("3 apples and 4 pears makes 7 fruits", 7.0),
    ("count 1,234,567 grains", 1234567.0),
    ("a drop of -7 degrees", -7.0),
    ("final tally 1,234.50 exactly", 1234.5),
    ("The answer is 8 dollars, 2 less than before.", 2.0),
    ("answer is 10\nbut wait, 11", 10.0),
    ("#### 3\nlater note mentions 99", 3.0),
    ("Answer: 0", 0.0),
    ("it costs $0.25 per unit", 0.25),
    ("roughly 2.5 times as much", 2.5),
    ("The answer is 1,000,000.", 1000000.0),
    ("#### -45", -45.0),
    ("x = 9; answer is x, i.e. 9", 9.0),
    ("\\boxed{0.75}", 0.75),
    ("we conclude the answer is 23 (not 25)", 25.0),
    ("18 items #### 18", 18.0),
    ("Step 3: 6 * 7 = 42. The answer is 42.", 42.0),
];

#[test]
fn criterion_3_extraction_behavior_feedback() {
    assert_eq!(EXTRACTION_FIXTURE.len(), 30);
    let mut hits = 0;
    for (text, expected) in EXTRACTION_FIXTURE {
        let answer = extract_answer(text, TaskKind::Math)
            .unwrap_or_else(|e| panic!("no answer for {text:?}: {e}"));
        match answer.value {
            selfcontrast::AnswerValue::Number(v) if v == *expected => hits += 1,
            other => panic!("{text:?}: got {other:?}, want {expected}"),
        }
    }
    assert_eq!(hits, 30, "extraction fixture must be 30/30");

    // Behavior truth table, all four cells.
    assert_eq!(
        classify_reflection_behavior(false, false),
        ReflectionBehavior::Invalid
    );
    assert_eq!(
        classify_reflection_behavior(false, true),
        ReflectionBehavior::Valid
    );
    assert_eq!(
        classify_reflection_behavior(true, false),
        ReflectionBehavior::Toxic
    );
    assert_eq!(
        classify_reflection_behavior(true, true),
        ReflectionBehavior::Other
    );

    // Feedback thresholds: strictly more than 7 of 10, strictly more than
    // 3 distinct opinions.
    let identifies = |n: usize| vec![FeedbackLabel::IdentifiesErrorCorrectly; n];
    let no_error = |n: usize| vec![FeedbackLabel::ClaimsNoError; n];
    let opinion = |id: &str, n: usize| vec![FeedbackLabel::OtherOpinion(id.to_string()); n];

    let mut eight = identifies(8);
    eight.extend(no_error(2));
    assert_eq!(
        classify_feedback_set(&eight).unwrap(),
        FeedbackCategory::Accurate
    );
    let mut seven = identifies(7);
    seven.extend(no_error(3));
    assert_eq!(
        classify_feedback_set(&seven).unwrap(),
        FeedbackCategory::Stubborn,
        "exactly 7/10 must not reach category I"
    );
    let mut eight_no = no_error(8);
    eight_no.extend(identifies(2));
    assert_eq!(
        classify_feedback_set(&eight_no).unwrap(),
        FeedbackCategory::Overconfident
    );
    let mut four_opinions = no_error(4);
    four_opinions.extend(opinion("e1", 3));
    four_opinions.extend(opinion("e2", 2));
    four_opinions.extend(identifies(1));
    assert_eq!(
        classify_feedback_set(&four_opinions).unwrap(),
        FeedbackCategory::Inconsistent,
        "four distinct opinions must be category III"
    );
    let mut three_opinions = no_error(5);
    three_opinions.extend(opinion("e1", 4));
    three_opinions.extend(opinion("e2", 1));
    assert_eq!(
        classify_feedback_set(&three_opinions).unwrap(),
        FeedbackCategory::Stubborn,
        "exactly three distinct opinions stays category II"
    );
    pass("3 extraction-behavior-feedback");
}

// ---------------------------------------------------------------------------
// 4. Mechanism reproduction: contrasting incorrect solutions
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_mechanism_reproduction() {
    let started = Instant::now();
    let profile = default_mechanism_profile();
    assert!(profile.checklist_gain > 0.0);
    let report = run_mechanism_comparison(&profile, 10_000, 20_26).unwrap();
    assert!(
        report.different_error_accuracy >= report.self_evaluate_accuracy + 0.03,
        "different-error contrast must beat self-evaluation by >= 3 points: {report:?}"
    );
    assert!(
        (report.same_error_accuracy - report.self_evaluate_accuracy).abs() <= 0.01,
        "same-error contrast must sit within 1 point of self-evaluation: {report:?}"
    );
    // The full qualitative ordering.
    assert!(report.correct_incorrect_accuracy > report.different_error_accuracy);
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, budget 60s");
    pass(&format!(
        "4 mechanism-reproduction (self-eval {:.3}, same {:.3}, different {:.3}, correct+incorrect {:.3}, {:.1}s)",
        report.self_evaluate_accuracy,
        report.same_error_accuracy,
        report.different_error_accuracy,
        report.correct_incorrect_accuracy,
        elapsed.as_secs_f64()
    ));
}

// ---------------------------------------------------------------------------
// 5. Direction check: fewer toxic reflections than self-reflection
// ---------------------------------------------------------------------------

fn inconsistent_profile() -> SimulatorProfile {
    SimulatorProfile {
        ground_truth: None,
        p_correct: 0.7,
        error_classes: vec![
            ErrorClass {
                id: "misread".into(),
                weight: 0.2,
                mode: CorruptionMode::Systematic,
            },
            ErrorClass {
                id: "slip".into(),
                weight: 0.1,
                mode: CorruptionMode::Random,
            },
        ],
        feedback_mode: FeedbackMode::Inconsistent,
        checklist_gain: 0.3,
    }
}

fn experiment_config(id: &str, strategy: &str, trials: u32, size: usize) -> ExperimentConfig {
    ExperimentConfig {
        experiment_id: id.to_string(),
        run_seed: 4242,
        trials,
        concurrency_limit: Some(8),
        dataset: DatasetConfig {
            source: "synthetic-math".into(),
            path: None,
            format: None,
            size,
        },
        strategy: StrategyConfig {
            name: strategy.into(),
            mode: "full".into(),
            k: 3,
            sample_n: 8,
            max_rounds: 2,
            selection: "medoid".into(),
            negative_perspective: false,
        },
        backend: BackendConfig {
            kind: BackendKindConfig::Simulated,
            model_id: None,
            temperature: 0.2,
            cache_dir: None,
            remote: None,
            profile: Some(inconsistent_profile()),
        },
        scorer: None,
    }
}

#[test]
fn criterion_5_fewer_toxic_reflections() {
    let size = 10_000;
    let (reflection, _) = run_experiment(
        &experiment_config("acc5-reflect", "self-reflection", 1, size),
        None,
    )
    .unwrap();
    let (contrast, _) = run_experiment(
        &experiment_config("acc5-contrast", "self-contrast", 1, size),
        None,
    )
    .unwrap();
    assert!(
        contrast.behavior.toxic < reflection.behavior.toxic,
        "self-contrast toxic {} must be strictly below self-reflection toxic {}",
        contrast.behavior.toxic,
        reflection.behavior.toxic
    );
    pass(&format!(
        "5 fewer-toxic-reflections (self-contrast {} vs self-reflection {})",
        contrast.behavior.toxic, reflection.behavior.toxic
    ));
}

// ---------------------------------------------------------------------------
// 6. Call accounting
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_call_accounting() {
    let gateway = selfcontrast::Gateway::new(Arc::new(
        SimulatedSolver::new(inconsistent_profile()).unwrap(),
    ));
    let task_payload = "simulated problem 000314 series acceptance";
    let gold = match derived_ground_truth(TaskKind::Math, task_payload).value {
        selfcontrast::AnswerValue::Number(v) => v,
        _ => unreachable!(),
    };
    let task = selfcontrast::TaskInstance::math("acc6", task_payload, gold).unwrap();

    for (strategy, expected) in [
        (BaselineStrategy::Cot, 1u32),
        (BaselineStrategy::SelfReflection, 3),
        (BaselineStrategy::ScVote, 8),
        (BaselineStrategy::ScSelect, 9),
        (BaselineStrategy::ScReflect, 9),
    ] {
        for seed in 0..10u64 {
            let config = BaselineConfig {
                strategy,
                sample_k: 8,
                run_index: seed as u32,
                model_id: "simulated-solver".into(),
                temperature: 0.2,
                run_seed: seed,
            };
            let record = run_baseline(&task, &config, &gateway).unwrap();
            assert_eq!(
                record.billed_calls, expected,
                "{strategy:?} must bill exactly {expected}"
            );
            assert_eq!(record.billed_calls, strategy.analytic_calls(8));
        }
    }

    // Self-contrast: 1 + m + 2r, with the zero-round consensus case
    // costing 1 + m + 1 (curation, samples, one contrast, no revision).
    for seed in 0..25u64 {
        let config = selfcontrast::contrast::SelfContrastConfig {
            run_seed: seed,
            ..Default::default()
        };
        let record = selfcontrast::contrast::run_self_contrast(&task, &config, &gateway);
        assert!(!record.failed);
        let m = record
            .stages
            .iter()
            .filter(|s| matches!(s.role, StageRole::Sample))
            .count() as u32;
        let r = record.rounds_used;
        let expected = if r == 0 { 1 + m + 1 } else { 1 + m + 2 * r };
        assert_eq!(record.billed_calls, expected, "seed {seed}: m={m} r={r}");
    }

    // Default-config simulated run: mean #Call per task in [6, 9].
    let (summary, _) = run_experiment(
        &experiment_config("acc6-mean", "self-contrast", 1, 500),
        None,
    )
    .unwrap();
    assert!(
        summary.mean_billed_calls >= 6.0 && summary.mean_billed_calls <= 9.0,
        "mean #Call {} outside [6, 9]",
        summary.mean_billed_calls
    );
    pass(&format!(
        "6 call-accounting (self-contrast mean #Call {:.2})",
        summary.mean_billed_calls
    ));
}

// ---------------------------------------------------------------------------
// 7. Determinism, replay, resume
// ---------------------------------------------------------------------------

/// Counts successful invocations and fails everything past a budget.
struct FlakyBackend {
    inner: SimulatedSolver,
    budget: usize,
    successes: AtomicUsize,
}

impl CompletionBackend for FlakyBackend {
    fn invoke(
        &self,
        req: &selfcontrast::CompletionRequest,
    ) -> Result<String, selfcontrast::gateway::GatewayError> {
        if self.successes.load(Ordering::SeqCst) >= self.budget {
            return Err(selfcontrast::gateway::GatewayError::BackendUnavailable {
                attempts: 1,
                last_error: "injected outage".into(),
            });
        }
        let out = self.inner.invoke(req)?;
        self.successes.fetch_add(1, Ordering::SeqCst);
        Ok(out)
    }

    fn kind(&self) -> selfcontrast::gateway::BackendKind {
        selfcontrast::gateway::BackendKind::Simulated
    }
}

#[test]
fn criterion_7_determinism_replay_resume() {
    // Identical config+seed twice: byte-identical transcripts.
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let config = experiment_config("acc7", "self-contrast", 2, 8);
    let (summary_a, path_a) = run_experiment(&config, Some(dir_a.path())).unwrap();
    let (summary_b, path_b) = run_experiment(&config, Some(dir_b.path())).unwrap();
    assert_eq!(summary_a.final_digest, summary_b.final_digest);
    let bytes_a = std::fs::read(path_a.as_ref().unwrap()).unwrap();
    let bytes_b = std::fs::read(path_b.as_ref().unwrap()).unwrap();
    assert_eq!(bytes_a, bytes_b, "transcripts must be byte-identical");

    // Replay recomputes the summary exactly, with zero backend calls.
    let replayed = replay_transcript(path_a.as_ref().unwrap()).unwrap();
    assert_eq!(replayed, summary_a);

    // Kill-and-resume: an injected outage partway through run 1, then a
    // healthy rerun against the same cache. Unique successful backend
    // invocations across both runs must equal one uninterrupted run.
    let cache_dir = tempfile::tempdir().unwrap();
    let mut config = experiment_config("acc7-resume", "self-reflection", 1, 12);
    config.backend.cache_dir = Some(cache_dir.path().display().to_string());
    config.concurrency_limit = Some(1);

    let reference = {
        let solver = SimulatedSolver::new(inconsistent_profile()).unwrap();
        let backend = Arc::new(FlakyBackend {
            inner: solver,
            budget: usize::MAX,
            successes: AtomicUsize::new(0),
        });
        let gateway = selfcontrast::Gateway::new(backend.clone() as Arc<dyn CompletionBackend>)
            .with_retry(selfcontrast::gateway::RetryPolicy::immediate(1));
        run_manual(&config, &gateway);
        backend.successes.load(Ordering::SeqCst)
    };

    let cache_path = config.cache_path().unwrap();
    let first = {
        let solver = SimulatedSolver::new(inconsistent_profile()).unwrap();
        let backend = Arc::new(FlakyBackend {
            inner: solver,
            budget: 17,
            successes: AtomicUsize::new(0),
        });
        let cache = Arc::new(selfcontrast::gateway::ReplayCache::open(&cache_path).unwrap());
        let gateway = selfcontrast::Gateway::new(backend.clone() as Arc<dyn CompletionBackend>)
            .with_retry(selfcontrast::gateway::RetryPolicy::immediate(1))
            .with_cache(cache);
        run_manual(&config, &gateway);
        backend.successes.load(Ordering::SeqCst)
    };
    assert_eq!(first, 17, "run 1 must stop billing at the outage");

    let second = {
        let solver = SimulatedSolver::new(inconsistent_profile()).unwrap();
        let backend = Arc::new(FlakyBackend {
            inner: solver,
            budget: usize::MAX,
            successes: AtomicUsize::new(0),
        });
        let cache = Arc::new(selfcontrast::gateway::ReplayCache::open(&cache_path).unwrap());
        let gateway = selfcontrast::Gateway::new(backend.clone() as Arc<dyn CompletionBackend>)
            .with_retry(selfcontrast::gateway::RetryPolicy::immediate(1))
            .with_cache(cache);
        run_manual(&config, &gateway);
        backend.successes.load(Ordering::SeqCst)
    };
    assert_eq!(
        first + second,
        reference,
        "resume must not re-bill completed work"
    );
    pass("7 determinism-replay-resume");
}

/// Run every (trial, task) with an explicit gateway, sequentially; mirrors
/// the experiment loop for backends the config cannot describe.
fn run_manual(config: &ExperimentConfig, gateway: &selfcontrast::Gateway) {
    let tasks = selfcontrast::harness::load_dataset(config).unwrap();
    for trial in 0..config.trials {
        let trial_seed =
            selfcontrast::digest::derive_seed(config.run_seed, &["trial", &trial.to_string()]);
        for task in &tasks {
            let baseline_config = BaselineConfig {
                strategy: BaselineStrategy::SelfReflection,
                sample_k: config.strategy.sample_n,
                run_index: trial,
                model_id: config.model_id(),
                temperature: config.backend.temperature,
                run_seed: trial_seed,
            };
            // Outage-induced failures are expected; billing is the point.
            let _ = run_baseline(task, &baseline_config, gateway);
        }
    }
}

// ---------------------------------------------------------------------------
// 8. Envelope conformance
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_envelope_conformance() {
    for n in 2..=5usize {
        let candidates: Vec<CandidateResponse> = (0..n)
            .map(|i| {
                CandidateResponse::new(
                    format!("p{i}"),
                    format!("Step 1: derive.\nThe answer is {}.", 10 + i),
                    TaskKind::Math,
                    CandidateOrigin::PerspectiveSample,
                )
            })
            .collect();
        let mut discrepancies = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                discrepancies.push(Discrepancy {
                    source_id: format!("p{i}"),
                    target_id: format!("p{j}"),
                    differs: true,
                    site: format!("answers {} vs {}", 10 + i, 10 + j),
                    why: "different routes".into(),
                });
            }
        }
        let checklist = Checklist {
            instructions: vec!["Re-derive the combination step.".into()],
            derived_from: vec![],
        };
        let envelope = build_revision_envelope(&candidates, &discrepancies, &checklist);
        let value: serde_json::Value =
            serde_json::from_str(&envelope).expect("envelope must be valid JSON");

        // Schema check: exactly the three top-level keys.
        let top: Vec<&String> = value.as_object().unwrap().keys().collect();
        assert_eq!(top, vec!["Candidate", "Discrepancy", "Checklist"]);

        let candidate_map = value["Candidate"].as_object().unwrap();
        assert_eq!(candidate_map.len(), n);
        for i in 1..=n {
            let entry = candidate_map
                .get(&format!("result_{i}"))
                .unwrap_or_else(|| panic!("missing result_{i}"))
                .as_object()
                .unwrap();
            let keys: Vec<&String> = entry.keys().collect();
            assert_eq!(keys, vec!["answer", "solution"]);
        }

        let discrepancy_map = value["Discrepancy"].as_object().unwrap();
        assert_eq!(discrepancy_map.len(), n * (n - 1) / 2);
        for i in 1..=n {
            for j in (i + 1)..=n {
                let entry = discrepancy_map
                    .get(&format!("difference_{i}_{j}"))
                    .unwrap_or_else(|| panic!("missing difference_{i}_{j}"))
                    .as_object()
                    .unwrap();
                let keys: Vec<&String> = entry.keys().collect();
                assert_eq!(keys, vec!["source", "target", "relation"]);
                assert_eq!(entry["source"], format!("result_{i}"));
                assert_eq!(entry["target"], format!("result_{j}"));
            }
        }
        assert!(value["Checklist"].is_array());
    }
    pass("8 envelope-conformance");
}

// ---------------------------------------------------------------------------
// 9. Perspective parsing properties
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_perspective_parsing_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(11_311);
    let words = [
        "literal", "liberal", "careful", "bottom", "upward", "units", "logic", "story", "estimate",
        "verify", "concise", "formal",
    ];
    let random_instruction = |rng: &mut ChaCha8Rng| -> String {
        let len = rng.random_range(3..9usize);
        (0..len)
            .map(|_| words[rng.random_range(0..words.len())])
            .collect::<Vec<_>>()
            .join(" ")
    };

    for case in 0..200 {
        let kind = if case % 2 == 0 {
            TaskKind::Math
        } else {
            TaskKind::Translation
        };
        let count = rng.random_range(1..13usize);
        let mut instructions: Vec<String> = Vec::new();
        while instructions.len() < count {
            let inst = random_instruction(&mut rng);
            if !instructions.contains(&inst) {
                instructions.push(inst);
            }
        }
        // Write blocks with names for half the cases.
        let named = rng.random::<bool>();
        let mut text = String::new();
        for (i, inst) in instructions.iter().enumerate() {
            if named {
                text.push_str(&format!("View {i}: "));
            }
            match kind {
                TaskKind::Math => text.push_str(&format!("###{inst}@@@\n\n")),
                TaskKind::Translation => text.push_str(&format!("###{inst}\n\n")),
            }
        }
        // Duplicate collapse: append a repeat of the first block.
        let dup = rng.random::<bool>();
        if dup {
            match kind {
                TaskKind::Math => text.push_str(&format!("###{}@@@\n", instructions[0])),
                TaskKind::Translation => text.push_str(&format!("###{}\n", instructions[0])),
            }
        }

        let parsed = parse_perspective_block(&text, kind).unwrap();
        assert_eq!(
            parsed.len(),
            instructions.len(),
            "case {case}: duplicates must collapse, distinct blocks must survive"
        );
        for (p, inst) in parsed.iter().zip(&instructions) {
            assert_eq!(&p.instruction, inst);
        }

        // Bound enforcement at the type boundary.
        let set = PerspectiveSet::new("acc9", parsed.clone());
        if (2..=9).contains(&instructions.len()) {
            let set = set.expect("in-bounds set must construct");
            // Round trip: format then re-parse yields the same set.
            let formatted = format_perspective_set(&set, kind);
            let reparsed = parse_perspective_block(&formatted, kind).unwrap();
            let rebuilt = PerspectiveSet::new("acc9", reparsed).unwrap();
            assert_eq!(set.perspectives, rebuilt.perspectives, "case {case}");
        } else {
            assert!(set.is_err(), "case {case}: out-of-bounds set must fail");
        }
    }

    // Zero-delimiter inputs are parse failures.
    assert!(parse_perspective_block("no delimiters at all", TaskKind::Math).is_err());
    pass("9 perspective-parsing-properties");
}

// ---------------------------------------------------------------------------
// Cache key uniqueness scan (supports criterion 7's determinism story)
// ---------------------------------------------------------------------------

#[test]
fn cache_keys_unique_over_hundred_thousand_requests() {
    let mut keys = HashSet::with_capacity(100_000);
    for i in 0..100_000u64 {
        let req = selfcontrast::CompletionRequest::new(
            format!("model-{}", i % 7),
            format!("prompt body {i}"),
        )
        .with_seed(i)
        .with_sample_index((i % 13) as u32);
        assert!(
            keys.insert(selfcontrast::gateway::cache_key(&req)),
            "digest collision at request {i}"
        );
    }
}
