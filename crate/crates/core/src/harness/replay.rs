//! Transcript replay: verify the digest chain, re-derive answers from the
//! stored completions where the record points at them, and recompute every
//! summary statistic without touching any backend.

use std::path::Path;

use crate::eval::extract_answer;
use crate::trace::AnswerRef;

use super::transcript::{summarize, ExperimentSummary, TranscriptReader, TranscriptRecord};
use super::HarnessError;

pub fn replay_transcript(path: &Path) -> Result<ExperimentSummary, HarnessError> {
    let reader = TranscriptReader::open(path)?;
    let kind = guess_kind(&reader.records);
    for record in &reader.records {
        recheck_answer(
            record,
            record.record.pre_source,
            &record.record.pre_answer,
            kind,
        )?;
        recheck_answer(
            record,
            record.record.post_source,
            &record.record.post_answer,
            kind,
        )?;
        let billed: u32 = record.record.stages.iter().filter(|s| s.billed).count() as u32;
        if billed != record.record.billed_calls {
            return Err(HarnessError::CorruptTranscript(format!(
                "task {}: billed_calls {} does not match stage flags {}",
                record.task_id, record.record.billed_calls, billed
            )));
        }
    }
    let final_digest = reader.final_digest();
    summarize(&reader.meta, &reader.records, final_digest)
}

fn guess_kind(records: &[TranscriptRecord]) -> crate::eval::TaskKind {
    records
        .first()
        .map(|r| match r.gold {
            crate::eval::GoldAnswer::Number(_) => crate::eval::TaskKind::Math,
            crate::eval::GoldAnswer::References(_) => crate::eval::TaskKind::Translation,
        })
        .unwrap_or(crate::eval::TaskKind::Math)
}

/// Where a record points at the completion an answer came from, re-extract
/// and compare with the stored answer.
fn recheck_answer(
    record: &TranscriptRecord,
    source: Option<AnswerRef>,
    stored: &Option<String>,
    kind: crate::eval::TaskKind,
) -> Result<(), HarnessError> {
    let Some(source) = source else {
        return Ok(());
    };
    let Some(stage) = record.record.stages.iter().find(|s| s.seq == source.seq) else {
        return Err(HarnessError::CorruptTranscript(format!(
            "task {}: answer source stage {} missing",
            record.task_id, source.seq
        )));
    };
    let derived = extract_answer(&stage.completion_text, kind)
        .ok()
        .map(|a| a.display());
    if &derived != stored {
        return Err(HarnessError::CorruptTranscript(format!(
            "task {}: stored answer {:?} does not re-derive from stage {} ({:?})",
            record.task_id, stored, source.seq, derived
        )));
    }
    Ok(())
}
