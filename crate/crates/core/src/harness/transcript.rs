//! JSONL transcripts with per-record content digests chained through the
//! file, enabling tamper detection and exact replay.
//!
//! The digest covers the deterministic content (prompts, completions,
//! outcomes). Backend provenance and billed flags are telemetry that
//! depends on cache state, so they stay outside the digest; a rerun served
//! from cache chains to the same digests as the original run.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::digest::sha256_hex;
use crate::eval::{GoldAnswer, ReflectionBehavior, SignificanceReport};
use crate::trace::RunRecord;

use super::HarnessError;

pub const GENESIS_DIGEST: &str = "genesis";

/// First line of every transcript.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub experiment_id: String,
    pub strategy: String,
    pub run_seed: u64,
    pub trials: u32,
    pub task_count: usize,
    pub prev_digest: String,
    pub digest: String,
}

impl TranscriptMeta {
    pub fn new(
        experiment_id: String,
        strategy: String,
        run_seed: u64,
        trials: u32,
        task_count: usize,
    ) -> Self {
        let mut meta = Self {
            experiment_id,
            strategy,
            run_seed,
            trials,
            task_count,
            prev_digest: GENESIS_DIGEST.to_string(),
            digest: String::new(),
        };
        meta.digest = meta.compute_digest();
        meta
    }

    fn compute_digest(&self) -> String {
        let payload = json!({
            "experiment_id": self.experiment_id,
            "strategy": self.strategy,
            "run_seed": self.run_seed,
            "trials": self.trials,
            "task_count": self.task_count,
            "prev": self.prev_digest,
        });
        sha256_hex(payload.to_string().as_bytes())
    }
}

/// One task execution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub experiment_id: String,
    pub trial: u32,
    pub task_id: String,
    pub gold: GoldAnswer,
    pub record: RunRecord,
    pub prev_digest: String,
    pub digest: String,
}

impl TranscriptRecord {
    pub fn new(
        experiment_id: String,
        trial: u32,
        gold: GoldAnswer,
        record: RunRecord,
        prev_digest: String,
    ) -> Self {
        let mut out = Self {
            experiment_id,
            trial,
            task_id: record.task_id.clone(),
            gold,
            record,
            prev_digest,
            digest: String::new(),
        };
        out.digest = out.compute_digest();
        out
    }

    /// Digest over the deterministic content. Stage backend/billed flags
    /// are excluded (they differ between fresh and cache-served runs).
    fn compute_digest(&self) -> String {
        let stages: Vec<serde_json::Value> = self
            .record
            .stages
            .iter()
            .map(|s| {
                json!({
                    "seq": s.seq,
                    "role": s.role,
                    "prompt": s.prompt_digest,
                    "completion": s.completion_digest,
                    "text": s.completion_text,
                })
            })
            .collect();
        let payload = json!({
            "experiment_id": self.experiment_id,
            "trial": self.trial,
            "task_id": self.task_id,
            "gold": self.gold,
            "strategy": self.record.strategy,
            "stages": stages,
            "outcome": {
                "pre_answer": self.record.pre_answer,
                "post_answer": self.record.post_answer,
                "pre_correct": self.record.pre_correct,
                "post_correct": self.record.post_correct,
                "behavior": self.record.behavior,
                "rounds_used": self.record.rounds_used,
                "consistent": self.record.consistent,
                "fallback_used": self.record.fallback_used,
                "failed": self.record.failed,
                "failure": self.record.failure,
                "notes": self.record.notes,
            },
            "prev": self.prev_digest,
        });
        sha256_hex(payload.to_string().as_bytes())
    }

    /// Re-derive the digest and compare; detects edits to any covered
    /// field, including completion text.
    pub fn verify(&self) -> Result<(), HarnessError> {
        for stage in &self.record.stages {
            if sha256_hex(stage.completion_text.as_bytes()) != stage.completion_digest {
                return Err(HarnessError::CorruptTranscript(format!(
                    "stage {} completion text does not match its digest (task {})",
                    stage.seq, self.task_id
                )));
            }
        }
        let expected = self.compute_digest();
        if expected != self.digest {
            return Err(HarnessError::CorruptTranscript(format!(
                "record digest mismatch for task {} trial {}",
                self.task_id, self.trial
            )));
        }
        Ok(())
    }
}

/// Append-only transcript writer with digest chaining.
pub struct TranscriptWriter {
    writer: BufWriter<File>,
    last_digest: String,
}

impl TranscriptWriter {
    pub fn create(path: &Path, meta: TranscriptMeta) -> Result<Self, HarnessError> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let mut writer = BufWriter::new(File::create(path)?);
        let line = serde_json::to_string(&meta).expect("meta serializes");
        writeln!(writer, "{line}")?;
        Ok(Self {
            writer,
            last_digest: meta.digest,
        })
    }

    pub fn append(
        &mut self,
        experiment_id: &str,
        trial: u32,
        gold: GoldAnswer,
        record: RunRecord,
    ) -> Result<String, HarnessError> {
        let rec = TranscriptRecord::new(
            experiment_id.to_string(),
            trial,
            gold,
            record,
            self.last_digest.clone(),
        );
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(self.writer, "{line}")?;
        self.last_digest = rec.digest.clone();
        Ok(rec.digest)
    }

    pub fn finish(mut self) -> Result<String, HarnessError> {
        self.writer.flush()?;
        Ok(self.last_digest)
    }
}

/// Reads a transcript and verifies the digest chain.
pub struct TranscriptReader {
    pub meta: TranscriptMeta,
    pub records: Vec<TranscriptRecord>,
}

impl TranscriptReader {
    pub fn open(path: &Path) -> Result<Self, HarnessError> {
        let reader = BufReader::new(File::open(path)?);
        let mut lines = reader.lines();
        let meta_line = lines
            .next()
            .ok_or_else(|| HarnessError::CorruptTranscript("empty transcript".into()))??;
        let meta: TranscriptMeta = serde_json::from_str(&meta_line)
            .map_err(|e| HarnessError::CorruptTranscript(format!("bad meta line: {e}")))?;
        if meta.compute_digest() != meta.digest {
            return Err(HarnessError::CorruptTranscript(
                "meta digest mismatch".into(),
            ));
        }
        let mut records = Vec::new();
        let mut prev = meta.digest.clone();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptRecord = serde_json::from_str(&line).map_err(|e| {
                HarnessError::CorruptTranscript(format!("bad record at line {}: {e}", lineno + 2))
            })?;
            if record.prev_digest != prev {
                return Err(HarnessError::CorruptTranscript(format!(
                    "chain break at line {}",
                    lineno + 2
                )));
            }
            record.verify()?;
            prev = record.digest.clone();
            records.push(record);
        }
        Ok(Self { meta, records })
    }

    pub fn final_digest(&self) -> String {
        self.records
            .last()
            .map(|r| r.digest.clone())
            .unwrap_or_else(|| self.meta.digest.clone())
    }
}

/// Reflection-behavior tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorCounts {
    pub invalid: usize,
    pub valid: usize,
    pub toxic: usize,
    pub other: usize,
}

impl BehaviorCounts {
    pub fn add(&mut self, behavior: Option<ReflectionBehavior>) {
        match behavior {
            Some(ReflectionBehavior::Invalid) => self.invalid += 1,
            Some(ReflectionBehavior::Valid) => self.valid += 1,
            Some(ReflectionBehavior::Toxic) => self.toxic += 1,
            Some(ReflectionBehavior::Other) => self.other += 1,
            None => {}
        }
    }

    pub fn total(&self) -> usize {
        self.invalid + self.valid + self.toxic + self.other
    }
}

/// Per-trial aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial: u32,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub mean_billed_calls: f64,
}

/// Whole-experiment aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub experiment_id: String,
    pub strategy: String,
    pub trials: u32,
    pub task_count: usize,
    pub pre_accuracy: f64,
    pub post_accuracy: f64,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub significance: Option<SignificanceReport>,
    pub mean_billed_calls: f64,
    pub total_billed_calls: u64,
    pub behavior: BehaviorCounts,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failed_tasks: Vec<String>,
    pub per_trial: Vec<TrialSummary>,
    pub final_digest: String,
}

impl ExperimentSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text)
            .map_err(|e| HarnessError::CorruptTranscript(format!("bad summary json: {e}")))
    }
}

/// Aggregate records (grouped by trial, in trial order) into a summary.
/// Reflective strategies get a significance report across trials.
pub fn summarize(
    meta: &TranscriptMeta,
    records: &[TranscriptRecord],
    final_digest: String,
) -> Result<ExperimentSummary, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::CorruptTranscript(
            "transcript has no records".into(),
        ));
    }
    let mut per_trial: Vec<TrialSummary> = Vec::new();
    let mut behavior = BehaviorCounts::default();
    let mut failed_tasks = Vec::new();
    let mut total_billed: u64 = 0;

    let mut trials: Vec<u32> = records.iter().map(|r| r.trial).collect();
    trials.dedup();
    for &trial in &trials {
        let slice: Vec<&TranscriptRecord> = records.iter().filter(|r| r.trial == trial).collect();
        let n = slice.len() as f64;
        let pre = slice
            .iter()
            .filter(|r| !r.record.failed && r.record.pre_correct)
            .count() as f64
            / n;
        let post = slice
            .iter()
            .filter(|r| !r.record.failed && r.record.post_correct)
            .count() as f64
            / n;
        let billed: u64 = slice.iter().map(|r| r.record.billed_calls as u64).sum();
        total_billed += billed;
        for r in &slice {
            behavior.add(r.record.behavior);
            if r.record.failed {
                failed_tasks.push(format!("{} (trial {})", r.task_id, r.trial));
            }
        }
        per_trial.push(TrialSummary {
            trial,
            pre_accuracy: pre,
            post_accuracy: post,
            mean_billed_calls: billed as f64 / n,
        });
    }

    let pre_accuracy =
        per_trial.iter().map(|t| t.pre_accuracy).sum::<f64>() / per_trial.len() as f64;
    let post_accuracy =
        per_trial.iter().map(|t| t.post_accuracy).sum::<f64>() / per_trial.len() as f64;
    let reflective = matches!(
        meta.strategy.as_str(),
        "self-reflection" | "sc-select" | "sc-reflect"
    ) || meta.strategy.starts_with("self-contrast");
    let significance = if reflective && per_trial.len() >= 2 {
        let pre: Vec<f64> = per_trial.iter().map(|t| t.pre_accuracy).collect();
        let post: Vec<f64> = per_trial.iter().map(|t| t.post_accuracy).collect();
        Some(crate::eval::one_tailed_paired_t(&pre, &post)?)
    } else {
        None
    };

    Ok(ExperimentSummary {
        experiment_id: meta.experiment_id.clone(),
        strategy: meta.strategy.clone(),
        trials: meta.trials,
        task_count: meta.task_count,
        pre_accuracy,
        post_accuracy,
        delta: post_accuracy - pre_accuracy,
        significance,
        mean_billed_calls: total_billed as f64 / records.len() as f64,
        total_billed_calls: total_billed,
        behavior,
        failed_tasks,
        per_trial,
        final_digest,
    })
}
