//! Experiment execution: trials x tasks under a concurrency limit, with
//! incremental transcript writes in deterministic (trial, task) order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};

use crate::baselines::{run_baseline, BaselineConfig, BaselineStrategy};
use crate::contrast::{run_self_contrast, PipelineMode, SelfContrastConfig};
use crate::digest::derive_seed;
use crate::diversity::SelectionStrategy;
use crate::eval::{classify_reflection_behavior, ExternalScorer, GoldAnswer, SubprocessScorer};
use crate::eval::{load_tasks, DatasetFormat, TaskInstance, TaskKind};
use crate::gateway::{derived_ground_truth, Gateway, RemoteBackend, ReplayCache, SimulatedSolver};
use crate::trace::RunRecord;

use super::config::{BackendKindConfig, ExperimentConfig};
use super::transcript::{summarize, ExperimentSummary, TranscriptMeta, TranscriptWriter};
use super::HarnessError;

/// Deterministic synthetic task set; gold labels use the same derivation as
/// the simulated solver, so the two always agree.
pub fn synthetic_tasks(kind: TaskKind, size: usize, run_seed: u64) -> Vec<TaskInstance> {
    (0..size)
        .map(|i| {
            let payload = format!("simulated problem {i:06} series {run_seed:016x}");
            let task_id = format!("sim-{i:06}");
            match derived_ground_truth(kind, &payload).value {
                crate::eval::AnswerValue::Number(v) => {
                    TaskInstance::math(task_id, payload, v).expect("finite gold")
                }
                crate::eval::AnswerValue::Text(t) => {
                    TaskInstance::translation(task_id, payload, vec![t]).expect("nonempty refs")
                }
            }
        })
        .collect()
}

/// Resolve the dataset named by a config.
pub fn load_dataset(config: &ExperimentConfig) -> Result<Vec<TaskInstance>, HarnessError> {
    match config.dataset.source.as_str() {
        "synthetic-math" => Ok(synthetic_tasks(
            TaskKind::Math,
            config.dataset.size,
            config.run_seed,
        )),
        "synthetic-translation" => Ok(synthetic_tasks(
            TaskKind::Translation,
            config.dataset.size,
            config.run_seed,
        )),
        "file" => {
            let path = config
                .dataset
                .path
                .as_ref()
                .ok_or_else(|| HarnessError::DatasetUnreadable("missing path".into()))?;
            let format = config
                .dataset
                .format
                .as_ref()
                .ok_or_else(|| HarnessError::DatasetUnreadable("missing format".into()))?
                .parse::<DatasetFormat>()
                .map_err(|e| HarnessError::DatasetUnreadable(e.to_string()))?;
            let report = load_tasks(Path::new(path), format)
                .map_err(|e| HarnessError::DatasetUnreadable(e.to_string()))?;
            if report.tasks.is_empty() {
                return Err(HarnessError::DatasetUnreadable(format!(
                    "{path} yielded no valid tasks ({} malformed)",
                    report.issues.len()
                )));
            }
            for issue in &report.issues {
                eprintln!("dataset record {} skipped: {}", issue.index, issue.message);
            }
            Ok(report.tasks)
        }
        other => Err(HarnessError::DatasetUnreadable(format!(
            "unknown source {other}"
        ))),
    }
}

/// Construct the gateway a config describes, honoring the cache setting.
pub fn build_gateway(config: &ExperimentConfig) -> Result<Gateway, HarnessError> {
    let mut gateway = match config.backend.kind {
        BackendKindConfig::Simulated => {
            let profile = config
                .backend
                .profile
                .clone()
                .ok_or_else(|| HarnessError::ConfigInvalid("missing profile".into()))?;
            Gateway::new(Arc::new(SimulatedSolver::new(profile)?))
        }
        BackendKindConfig::Remote => {
            let remote =
                config.backend.remote.clone().ok_or_else(|| {
                    HarnessError::ConfigInvalid("missing [backend.remote]".into())
                })?;
            Gateway::new(Arc::new(RemoteBackend::new(remote)))
        }
    };
    if let Some(path) = config.cache_path() {
        gateway = gateway.with_cache(Arc::new(ReplayCache::open(path)?));
    }
    Ok(gateway)
}

fn run_one(
    task: &TaskInstance,
    trial: u32,
    config: &ExperimentConfig,
    gateway: &Gateway,
    scorer: Option<&dyn ExternalScorer>,
) -> RunRecord {
    // Per-trial seed so the ten-trial protocol draws fresh samples while
    // staying cache-stable across reruns.
    let trial_seed = derive_seed(config.run_seed, &["trial", &trial.to_string()]);
    let model_id = config.model_id();
    let temperature = config.backend.temperature;
    match config.strategy.name.as_str() {
        "self-contrast" => {
            let mode = PipelineMode::from_str(&config.strategy.mode).unwrap_or_default();
            let selection =
                SelectionStrategy::from_str(&config.strategy.selection).unwrap_or_default();
            let pipeline_config = SelfContrastConfig {
                mode,
                model_id,
                temperature,
                k: config.strategy.k,
                sample_n: config.strategy.sample_n,
                max_rounds: config.strategy.max_rounds,
                selection,
                negative_perspective: config.strategy.negative_perspective,
                run_seed: trial_seed,
                run_index: trial,
            };
            let record = run_self_contrast(task, &pipeline_config, gateway);
            rescore_translation(record, task, config, scorer)
        }
        name => {
            let strategy = BaselineStrategy::from_str(name)
                .expect("strategy validated by ExperimentConfig::validate");
            let baseline_config = BaselineConfig {
                strategy,
                sample_k: config.strategy.sample_n,
                run_index: trial,
                model_id,
                temperature,
                run_seed: trial_seed,
            };
            match run_baseline(task, &baseline_config, gateway) {
                Ok(record) => rescore_translation(record, task, config, scorer),
                Err(e) => RunRecord::failed(
                    task.task_id.clone(),
                    strategy.label(),
                    e.to_string(),
                    Vec::new(),
                ),
            }
        }
    }
}

/// With an external scorer configured, translation correctness is
/// score >= threshold instead of exact reference match; behavior is
/// reclassified accordingly.
fn rescore_translation(
    mut record: RunRecord,
    task: &TaskInstance,
    config: &ExperimentConfig,
    scorer: Option<&dyn ExternalScorer>,
) -> RunRecord {
    let (Some(scorer), GoldAnswer::References(refs)) = (scorer, &task.gold) else {
        return record;
    };
    let threshold = config
        .scorer
        .as_ref()
        .map(|s| s.threshold)
        .unwrap_or_default();
    let judge = |answer: &Option<String>, previous: bool| -> bool {
        match answer {
            Some(text) => scorer
                .score(text, refs)
                .map(|s| s >= threshold)
                .unwrap_or(previous),
            None => false,
        }
    };
    record.pre_correct = judge(&record.pre_answer, record.pre_correct);
    record.post_correct = judge(&record.post_answer, record.post_correct);
    if !record.failed {
        record.behavior = Some(classify_reflection_behavior(
            record.pre_correct,
            record.post_correct,
        ));
    }
    record
}

/// Execute trials x tasks. Writes a JSONL transcript when `out_dir` is
/// given, plus a summary JSON next to it. Completed work replays from the
/// completion cache, so resuming a partial experiment issues no new billed
/// calls for it.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: Option<&Path>,
) -> Result<(ExperimentSummary, Option<PathBuf>), HarnessError> {
    config.validate()?;
    let tasks = Arc::new(load_dataset(config)?);
    let gateway = build_gateway(config)?;
    let scorer: Option<Arc<dyn ExternalScorer>> = match &config.scorer {
        Some(sc) => Some(Arc::new(SubprocessScorer::new(sc.clone())?)),
        None => None,
    };

    let jobs: Vec<(u32, usize)> = (0..config.trials)
        .flat_map(|trial| (0..tasks.len()).map(move |t| (trial, t)))
        .collect();
    let next_job = AtomicUsize::new(0);
    let (sender, receiver) = mpsc::channel::<(usize, RunRecord)>();

    let workers = config.effective_concurrency().min(jobs.len()).max(1);
    let records: Vec<(u32, RunRecord)> = std::thread::scope(|scope| {
        for _ in 0..workers {
            let sender = sender.clone();
            let tasks = Arc::clone(&tasks);
            let gateway = gateway.clone();
            let scorer = scorer.clone();
            let jobs = &jobs;
            let next_job = &next_job;
            scope.spawn(move || loop {
                let idx = next_job.fetch_add(1, Ordering::SeqCst);
                if idx >= jobs.len() {
                    break;
                }
                let (trial, task_idx) = jobs[idx];
                let record = run_one(&tasks[task_idx], trial, config, &gateway, scorer.as_deref());
                if sender.send((idx, record)).is_err() {
                    break;
                }
            });
        }
        drop(sender);

        // Collect out-of-order results, then restore job order.
        let mut buffer: BTreeMap<usize, RunRecord> = BTreeMap::new();
        for (idx, record) in receiver {
            buffer.insert(idx, record);
        }
        buffer
            .into_iter()
            .map(|(idx, record)| (jobs[idx].0, record))
            .collect()
    });

    let meta = TranscriptMeta::new(
        config.experiment_id.clone(),
        config.strategy.name.clone(),
        config.run_seed,
        config.trials,
        tasks.len(),
    );

    let mut transcript_path = None;
    let mut writer = match out_dir {
        Some(dir) => {
            let path = dir.join(format!("{}.transcript.jsonl", config.experiment_id));
            let writer = TranscriptWriter::create(&path, meta.clone())?;
            transcript_path = Some(path);
            Some(writer)
        }
        None => None,
    };

    // Build the canonical record sequence (with digests) in job order.
    let mut chained: Vec<super::transcript::TranscriptRecord> = Vec::with_capacity(records.len());
    let mut prev = meta.digest.clone();
    for (trial, record) in records {
        let task = tasks
            .iter()
            .find(|t| t.task_id == record.task_id)
            .expect("record task exists");
        let rec = super::transcript::TranscriptRecord::new(
            config.experiment_id.clone(),
            trial,
            task.gold.clone(),
            record,
            prev.clone(),
        );
        prev = rec.digest.clone();
        if let Some(w) = writer.as_mut() {
            w.append(
                &rec.experiment_id,
                rec.trial,
                rec.gold.clone(),
                rec.record.clone(),
            )?;
        }
        chained.push(rec);
    }
    if let Some(w) = writer {
        w.finish()?;
    }

    let summary = summarize(&meta, &chained, prev)?;
    if let Some(dir) = out_dir {
        let summary_path = dir.join(format!("{}.summary.json", config.experiment_id));
        std::fs::write(summary_path, summary.to_json())?;
    }
    Ok((summary, transcript_path))
}
