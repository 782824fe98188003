//! Revision envelope: the JSON document carrying candidates, pairwise
//! discrepancies, and the checklist into the revision prompt.
//!
//! Key structure is fixed: top-level `Candidate` mapping `result_i` to
//! `{answer, solution}`, `Discrepancy` mapping `difference_i_j` to
//! `{source, target, relation}` for every unordered pair, then `Checklist`
//! as an array of instruction strings.

use serde_json::{Map, Value};

use super::{CandidateResponse, Checklist, Discrepancy};

/// Serialize the envelope. Every unordered candidate pair appears exactly
/// once; non-differing pairs carry the relation "No difference.".
pub fn build_revision_envelope(
    candidates: &[CandidateResponse],
    discrepancies: &[Discrepancy],
    checklist: &Checklist,
) -> String {
    let mut candidate_map = Map::new();
    for (i, c) in candidates.iter().enumerate() {
        let mut entry = Map::new();
        entry.insert(
            "answer".into(),
            Value::String(c.answer.as_ref().map(|a| a.display()).unwrap_or_default()),
        );
        entry.insert("solution".into(), Value::String(c.solution_text.clone()));
        candidate_map.insert(format!("result_{}", i + 1), Value::Object(entry));
    }

    let mut discrepancy_map = Map::new();
    for i in 0..candidates.len() {
        for j in (i + 1)..candidates.len() {
            let record = discrepancies.iter().find(|d| {
                d.source_id == candidates[i].perspective_id
                    && d.target_id == candidates[j].perspective_id
            });
            let relation = match record {
                Some(d) if d.differs => {
                    if d.why.is_empty() {
                        d.site.clone()
                    } else {
                        format!("{} {}", d.site, d.why)
                    }
                }
                _ => "No difference.".to_string(),
            };
            let mut entry = Map::new();
            entry.insert("source".into(), Value::String(format!("result_{}", i + 1)));
            entry.insert("target".into(), Value::String(format!("result_{}", j + 1)));
            entry.insert("relation".into(), Value::String(relation));
            discrepancy_map.insert(
                format!("difference_{}_{}", i + 1, j + 1),
                Value::Object(entry),
            );
        }
    }

    let mut envelope = Map::new();
    envelope.insert("Candidate".into(), Value::Object(candidate_map));
    envelope.insert("Discrepancy".into(), Value::Object(discrepancy_map));
    envelope.insert(
        "Checklist".into(),
        Value::Array(
            checklist
                .instructions
                .iter()
                .map(|i| Value::String(i.clone()))
                .collect(),
        ),
    );
    serde_json::to_string_pretty(&Value::Object(envelope)).expect("envelope serializes")
}
