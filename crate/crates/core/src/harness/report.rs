//! Report rendering: markdown or CSV rows per strategy, with deltas
//! against a designated baseline row.

use std::str::FromStr;

use super::transcript::ExperimentSummary;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "md" | "markdown" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown report format: {other} (use md or csv)")),
        }
    }
}

/// Render summaries as a table. When `baseline` names an experiment id,
/// every other row shows its post-accuracy delta against that row.
pub fn emit_report(
    summaries: &[ExperimentSummary],
    baseline: Option<&str>,
    format: ReportFormat,
) -> Result<String, HarnessError> {
    if summaries.is_empty() {
        return Err(HarnessError::ConfigInvalid("no summaries given".into()));
    }
    let baseline_row = match baseline {
        Some(id) => Some(
            summaries
                .iter()
                .find(|s| s.experiment_id == id)
                .ok_or_else(|| HarnessError::NoBaselineRow(id.to_string()))?,
        ),
        None => None,
    };
    match format {
        ReportFormat::Markdown => Ok(render_markdown(summaries, baseline_row)),
        ReportFormat::Csv => Ok(render_csv(summaries, baseline_row)),
    }
}

fn fmt_pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        Some(p) => format!("{p:.4}"),
        None => "-".to_string(),
    }
}

fn baseline_delta(row: &ExperimentSummary, baseline: Option<&ExperimentSummary>) -> Option<f64> {
    baseline.map(|b| row.post_accuracy - b.post_accuracy)
}

fn render_markdown(
    summaries: &[ExperimentSummary],
    baseline: Option<&ExperimentSummary>,
) -> String {
    let mut out = String::new();
    out.push_str(
        "| experiment | strategy | pre => post | delta | p-value | #Call avg | Invalid | Valid | Toxic | Other |",
    );
    let with_baseline = baseline.is_some();
    if with_baseline {
        out.push_str(" vs baseline |\n");
    } else {
        out.push('\n');
    }
    out.push_str("|---|---|---|---|---|---|---|---|---|---|");
    if with_baseline {
        out.push_str("---|\n");
    } else {
        out.push('\n');
    }
    for s in summaries {
        out.push_str(&format!(
            "| {} | {} | {} => {} | {:+.1} | {} | {:.2} | {} | {} | {} | {} |",
            s.experiment_id,
            s.strategy,
            fmt_pct(s.pre_accuracy),
            fmt_pct(s.post_accuracy),
            s.delta * 100.0,
            fmt_p(s.significance.as_ref().map(|r| r.p_value)),
            s.mean_billed_calls,
            s.behavior.invalid,
            s.behavior.valid,
            s.behavior.toxic,
            s.behavior.other,
        ));
        if with_baseline {
            match baseline_delta(s, baseline) {
                Some(d)
                    if baseline
                        .map(|b| b.experiment_id != s.experiment_id)
                        .unwrap_or(false) =>
                {
                    let arrow = if d >= 0.0 { "↑" } else { "↓" };
                    out.push_str(&format!(" {arrow}{:.1} |", d.abs() * 100.0));
                }
                _ => out.push_str(" (baseline) |"),
            }
        }
        out.push('\n');
    }
    out
}

fn render_csv(summaries: &[ExperimentSummary], baseline: Option<&ExperimentSummary>) -> String {
    let mut out = String::from(
        "experiment,strategy,pre_accuracy,post_accuracy,delta,p_value,call_avg,invalid,valid,toxic,other,delta_vs_baseline\n",
    );
    for s in summaries {
        let vs = match baseline_delta(s, baseline) {
            Some(d)
                if baseline
                    .map(|b| b.experiment_id != s.experiment_id)
                    .unwrap_or(false) =>
            {
                format!("{:.6}", d)
            }
            _ => String::new(),
        };
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6},{},{:.4},{},{},{},{},{}\n",
            s.experiment_id,
            s.strategy,
            s.pre_accuracy,
            s.post_accuracy,
            s.delta,
            s.significance
                .as_ref()
                .map(|r| format!("{:.6}", r.p_value))
                .unwrap_or_default(),
            s.mean_billed_calls,
            s.behavior.invalid,
            s.behavior.valid,
            s.behavior.toxic,
            s.behavior.other,
            vs,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::transcript::{BehaviorCounts, TrialSummary};

    fn summary(id: &str, strategy: &str, post: f64) -> ExperimentSummary {
        ExperimentSummary {
            experiment_id: id.into(),
            strategy: strategy.into(),
            trials: 2,
            task_count: 10,
            pre_accuracy: 0.5,
            post_accuracy: post,
            delta: post - 0.5,
            significance: None,
            mean_billed_calls: 3.0,
            total_billed_calls: 60,
            behavior: BehaviorCounts {
                invalid: 1,
                valid: 2,
                toxic: 3,
                other: 4,
            },
            failed_tasks: vec![],
            per_trial: vec![TrialSummary {
                trial: 0,
                pre_accuracy: 0.5,
                post_accuracy: post,
                mean_billed_calls: 3.0,
            }],
            final_digest: "d".into(),
        }
    }

    #[test]
    fn markdown_with_baseline_shows_arrows() {
        let rows = vec![
            summary("cot", "cot", 0.70),
            summary("sc", "self-contrast", 0.78),
        ];
        let report = emit_report(&rows, Some("cot"), ReportFormat::Markdown).unwrap();
        assert!(report.contains("(baseline)"));
        assert!(report.contains("↑8.0"));
    }

    #[test]
    fn missing_baseline_errors() {
        let rows = vec![summary("a", "cot", 0.7)];
        assert!(matches!(
            emit_report(&rows, Some("nope"), ReportFormat::Markdown),
            Err(HarnessError::NoBaselineRow(_))
        ));
    }

    #[test]
    fn single_summary_without_baseline_plain_table() {
        let rows = vec![summary("a", "cot", 0.7)];
        let report = emit_report(&rows, None, ReportFormat::Markdown).unwrap();
        assert!(!report.contains("vs baseline"));
        assert!(report.contains("| a | cot |"));
    }

    #[test]
    fn csv_numbers_match_markdown_within_precision() {
        let rows = vec![
            summary("cot", "cot", 0.70),
            summary("sc", "self-contrast", 0.78),
        ];
        let csv = emit_report(&rows, Some("cot"), ReportFormat::Csv).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        let sc_row: Vec<&str> = lines[2].split(',').collect();
        assert_eq!(sc_row[0], "sc");
        let post: f64 = sc_row[3].parse().unwrap();
        assert!((post - 0.78).abs() < 1e-9);
        let vs: f64 = sc_row[11].parse().unwrap();
        assert!((vs - 0.08).abs() < 1e-9);
    }
}
