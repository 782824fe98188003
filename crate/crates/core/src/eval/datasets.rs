//! Dataset ingestion for the three supported on-disk formats.
//!
//! Malformed records are collected into the load report rather than
//! silently dropped; a record index and message identify each one.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Deserialize;

use super::{extract_answer, AnswerValue, EvalError, TaskInstance, TaskKind};

/// Supported input formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    /// JSONL with `question` and `answer` fields, the answer ending in
    /// `#### <number>`.
    Gsm8kJsonl,
    /// A JSON array of records with `Body`, `Question` and `Answer` fields.
    SvampJson,
    /// Tab-separated `source<TAB>reference[<TAB>reference...]` lines.
    PairsTsv,
}

impl FromStr for DatasetFormat {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gsm8k-jsonl" => Ok(Self::Gsm8kJsonl),
            "svamp-json" => Ok(Self::SvampJson),
            "pairs-tsv" => Ok(Self::PairsTsv),
            other => Err(EvalError::UnknownFormat(other.to_string())),
        }
    }
}

/// One malformed record.
#[derive(Debug, Clone)]
pub struct RecordIssue {
    pub index: usize,
    pub message: String,
}

/// Load result: valid tasks plus itemized failures.
#[derive(Debug, Clone)]
pub struct TaskLoadReport {
    pub tasks: Vec<TaskInstance>,
    pub issues: Vec<RecordIssue>,
}

pub fn load_tasks(path: &Path, format: DatasetFormat) -> Result<TaskLoadReport, EvalError> {
    let content = fs::read_to_string(path).map_err(|e| EvalError::UnreadableFile {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    match format {
        DatasetFormat::Gsm8kJsonl => load_gsm8k(&content),
        DatasetFormat::SvampJson => load_svamp(&content),
        DatasetFormat::PairsTsv => load_pairs(&content),
    }
}

#[derive(Deserialize)]
struct Gsm8kRecord {
    question: String,
    answer: String,
}

fn load_gsm8k(content: &str) -> Result<TaskLoadReport, EvalError> {
    let mut report = TaskLoadReport {
        tasks: Vec::new(),
        issues: Vec::new(),
    };
    for (index, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Gsm8kRecord>(line) {
            Ok(rec) => match gsm8k_gold(&rec.answer) {
                Some(gold) => {
                    report.tasks.push(
                        TaskInstance::math(format!("gsm8k-{index}"), rec.question, gold)
                            .expect("finite gold"),
                    );
                }
                None => report.issues.push(RecordIssue {
                    index,
                    message: "answer has no trailing #### number".into(),
                }),
            },
            Err(e) => report.issues.push(RecordIssue {
                index,
                message: format!("invalid json: {e}"),
            }),
        }
    }
    Ok(report)
}

fn gsm8k_gold(answer: &str) -> Option<f64> {
    let tail = answer.rsplit("####").next()?;
    if !answer.contains("####") {
        return None;
    }
    match extract_answer(tail, TaskKind::Math).ok()?.value {
        AnswerValue::Number(v) if v.is_finite() => Some(v),
        _ => None,
    }
}

#[derive(Deserialize)]
struct SvampRecord {
    #[serde(rename = "Body")]
    body: String,
    #[serde(rename = "Question")]
    question: String,
    #[serde(rename = "Answer")]
    answer: f64,
    #[serde(rename = "ID", default)]
    id: Option<String>,
}

fn load_svamp(content: &str) -> Result<TaskLoadReport, EvalError> {
    let mut report = TaskLoadReport {
        tasks: Vec::new(),
        issues: Vec::new(),
    };
    let records: Vec<serde_json::Value> =
        serde_json::from_str(content).map_err(|e| EvalError::UnreadableFile {
            path: "<svamp-json>".into(),
            message: format!("not a json array: {e}"),
        })?;
    for (index, value) in records.into_iter().enumerate() {
        match serde_json::from_value::<SvampRecord>(value) {
            Ok(rec) if rec.answer.is_finite() => {
                let id = rec.id.unwrap_or_else(|| format!("svamp-{index}"));
                let payload = format!("{} {}", rec.body.trim(), rec.question.trim());
                report
                    .tasks
                    .push(TaskInstance::math(id, payload, rec.answer).expect("finite gold"));
            }
            Ok(_) => report.issues.push(RecordIssue {
                index,
                message: "non-finite answer".into(),
            }),
            Err(e) => report.issues.push(RecordIssue {
                index,
                message: format!("invalid record: {e}"),
            }),
        }
    }
    Ok(report)
}

fn load_pairs(content: &str) -> Result<TaskLoadReport, EvalError> {
    let mut report = TaskLoadReport {
        tasks: Vec::new(),
        issues: Vec::new(),
    };
    for (index, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let source = parts.next().unwrap_or("").trim();
        let refs: Vec<String> = parts
            .map(|r| r.trim().to_string())
            .filter(|r| !r.is_empty())
            .collect();
        if source.is_empty() || refs.is_empty() {
            report.issues.push(RecordIssue {
                index,
                message: "need source and at least one reference".into(),
            });
            continue;
        }
        report.tasks.push(
            TaskInstance::translation(format!("pair-{index}"), source, refs)
                .expect("non-empty refs"),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn gsm8k_round_trip() {
        let f = write_temp(
            r#"{"question": "Q1?", "answer": "reasoning\n#### 18"}
{"question": "Q2?", "answer": "more\n#### 7.5"}
"#,
        );
        let report = load_tasks(f.path(), DatasetFormat::Gsm8kJsonl).unwrap();
        assert_eq!(report.tasks.len(), 2);
        assert!(report.issues.is_empty());
        assert_eq!(report.tasks[0].gold, super::super::GoldAnswer::Number(18.0));
    }

    #[test]
    fn svamp_normalizes_answer() {
        let f = write_temp(
            r#"[{"Body": "There are 30 kids.", "Question": "How many?", "Answer": 32.0}]"#,
        );
        let report = load_tasks(f.path(), DatasetFormat::SvampJson).unwrap();
        assert_eq!(report.tasks.len(), 1);
        assert_eq!(report.tasks[0].gold, super::super::GoldAnswer::Number(32.0));
    }

    #[test]
    fn malformed_lines_reported_not_dropped() {
        let mut lines: Vec<String> = (0..99)
            .map(|i| format!("{{\"question\": \"Q{i}?\", \"answer\": \"#### {i}\"}}"))
            .collect();
        lines.insert(42, "{broken".to_string());
        let f = write_temp(&lines.join("\n"));
        let report = load_tasks(f.path(), DatasetFormat::Gsm8kJsonl).unwrap();
        assert_eq!(report.tasks.len(), 99);
        assert_eq!(report.issues.len(), 1);
        assert_eq!(report.issues[0].index, 42);
    }

    #[test]
    fn pairs_tsv_multiple_references() {
        let f = write_temp("这个计划被枪毙\tThis plan was axed\tThe plan was shot down\n");
        let report = load_tasks(f.path(), DatasetFormat::PairsTsv).unwrap();
        assert_eq!(report.tasks.len(), 1);
        match &report.tasks[0].gold {
            super::super::GoldAnswer::References(refs) => assert_eq!(refs.len(), 2),
            _ => panic!("expected references"),
        }
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err =
            load_tasks(Path::new("/nonexistent/x.jsonl"), DatasetFormat::Gsm8kJsonl).unwrap_err();
        assert!(matches!(err, EvalError::UnreadableFile { .. }));
    }

    #[test]
    fn format_parse() {
        assert_eq!(
            "gsm8k-jsonl".parse::<DatasetFormat>().unwrap(),
            DatasetFormat::Gsm8kJsonl
        );
        assert!(matches!(
            "csv".parse::<DatasetFormat>(),
            Err(EvalError::UnknownFormat(_))
        ));
    }
}
