//! Pairwise contrast of candidate responses and checklist synthesis.
//!
//! One completion covers both: the contrast prompt asks for a
//! "For SolutionX and SolutionY:" section per pair plus a trailing
//! "Checklist:" section, and the parser recovers C(n,2) discrepancy records
//! (absent pairs become differs=false and are flagged) and the raw checklist
//! instructions.

mod consensus;
mod envelope;
mod pipeline;

pub use consensus::{revise_until_consensus, ConsensusOptions, ConsensusResult};
pub use envelope::build_revision_envelope;
pub use pipeline::{run_self_contrast, PipelineMode, SelfContrastConfig};

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::eval::{extract_answer, CanonicalAnswer, TaskInstance, TaskKind};
use crate::gateway::{Completion, CompletionRequest, Gateway};
use crate::prompts::{contrast_label, contrast_template_id, render_template};

/// Errors from contrast, checklist, and consensus.
#[derive(Debug, thiserror::Error)]
pub enum ContrastError {
    #[error("candidate count {0} outside 2..=9")]
    CandidateCountOutOfRange(usize),
    #[error("no per-pair contrast section recognized")]
    ContrastParseFailure,
    #[error("pairs differ but no checklist section was parsed")]
    MissingChecklistSection,
    #[error("cannot recover revised solutions from the completion")]
    RevisionParseFailure,
    #[error(transparent)]
    Prompt(#[from] crate::prompts::PromptError),
    #[error(transparent)]
    Diversity(#[from] crate::diversity::DiversityError),
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

/// Where a candidate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateOrigin {
    PerspectiveSample,
    TopNSample,
    Revised,
}

/// One candidate solution with its extracted answer. The answer is always
/// re-extracted from the solution text, never carried over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub perspective_id: String,
    pub solution_text: String,
    pub answer: Option<CanonicalAnswer>,
    pub origin: CandidateOrigin,
}

impl CandidateResponse {
    pub fn new(
        perspective_id: impl Into<String>,
        solution_text: impl Into<String>,
        kind: TaskKind,
        origin: CandidateOrigin,
    ) -> Self {
        let solution_text = solution_text.into();
        let answer = extract_answer(&solution_text, kind).ok();
        Self {
            perspective_id: perspective_id.into(),
            solution_text,
            answer,
            origin,
        }
    }

    /// Replace the solution text, re-extracting the answer.
    pub fn with_text(mut self, solution_text: impl Into<String>, kind: TaskKind) -> Self {
        self.solution_text = solution_text.into();
        self.answer = extract_answer(&self.solution_text, kind).ok();
        self
    }
}

/// One pairwise difference record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub source_id: String,
    pub target_id: String,
    pub differs: bool,
    /// Where the difference lies; empty iff differs is false.
    #[serde(rename = "where")]
    pub site: String,
    /// Which factors caused it; empty iff differs is false.
    pub why: String,
}

/// Re-examination instructions synthesized from the discrepancies.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Checklist {
    pub instructions: Vec<String>,
    /// (source_id, target_id) of the differing pairs it derives from.
    pub derived_from: Vec<(String, String)>,
}

impl Checklist {
    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }
}

/// Default cap on checklist instructions.
pub const CHECKLIST_CAP: usize = 8;

/// Parsed pieces of one contrast completion.
type ParsedContrast = (Vec<Discrepancy>, Vec<String>, Vec<(usize, usize)>);

/// Raw parse of one contrast completion.
#[derive(Debug, Clone)]
pub struct ContrastOutcome {
    pub discrepancies: Vec<Discrepancy>,
    pub raw_checklist: Vec<String>,
    /// Pairs (by candidate index) absent from the completion.
    pub missing_pairs: Vec<(usize, usize)>,
    pub prompt: String,
    pub completion: Completion,
}

/// Settings shared by the contrast and revision calls.
#[derive(Debug, Clone)]
pub struct ContrastCallOptions {
    pub model_id: String,
    pub temperature: f64,
    pub seed: u64,
}

/// Render the contrast prompt over all candidates, issue one completion,
/// and parse per-pair discrepancy sections. In simulated runs the backend
/// answers with differs = (extracted answers unequal) and templated
/// where/why text.
pub fn contrast_candidates(
    task: &TaskInstance,
    selected: &[CandidateResponse],
    gateway: &Gateway,
    opts: &ContrastCallOptions,
) -> Result<ContrastOutcome, ContrastError> {
    if !(2..=9).contains(&selected.len()) {
        return Err(ContrastError::CandidateCountOutOfRange(selected.len()));
    }
    let label = contrast_label(task.kind);
    let listing = format_candidate_listing(selected, label);
    let prompt = render_template(
        contrast_template_id(task.kind),
        &[
            ("input", task.prompt_payload.as_str()),
            ("solutions", listing.as_str()),
        ],
    )?;
    let req = CompletionRequest::new(opts.model_id.clone(), prompt.clone())
        .with_temperature(opts.temperature)
        .with_seed(opts.seed);
    let completion = gateway.complete(&req)?;
    let (discrepancies, raw_checklist, missing_pairs) =
        parse_contrast_completion(&completion.text, selected)?;
    Ok(ContrastOutcome {
        discrepancies,
        raw_checklist,
        missing_pairs,
        prompt,
        completion,
    })
}

/// Number candidates for the contrast prompt: `Solution1: ...` etc.
pub fn format_candidate_listing(candidates: &[CandidateResponse], label: &str) -> String {
    let mut out = String::new();
    for (i, c) in candidates.iter().enumerate() {
        out.push_str(&format!("{label}{}: {}\n", i + 1, c.solution_text));
    }
    out
}

static SECTION_RE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?m)^\s*For (?:Solution|Result)\s*(\d+) and (?:Solution|Result)\s*(\d+)\s*:")
        .expect("static regex")
});
static CHECKLIST_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"(?m)^\s*Checklist\s*:").expect("static regex"));

fn parse_contrast_completion(
    text: &str,
    selected: &[CandidateResponse],
) -> Result<ParsedContrast, ContrastError> {
    let n = selected.len();
    let checklist_start = CHECKLIST_RE.find(text).map(|m| m.start());
    let section_region = &text[..checklist_start.unwrap_or(text.len())];

    let matches: Vec<(usize, usize, usize, usize)> = SECTION_RE
        .captures_iter(section_region)
        .filter_map(|caps| {
            let i: usize = caps[1].parse().ok()?;
            let j: usize = caps[2].parse().ok()?;
            let whole = caps.get(0)?;
            Some((i, j, whole.start(), whole.end()))
        })
        .collect();
    if matches.is_empty() {
        return Err(ContrastError::ContrastParseFailure);
    }

    let mut found: Vec<Option<(bool, String, String)>> = vec![None; n * n];
    for (idx, &(i, j, _, body_start)) in matches.iter().enumerate() {
        if i == 0 || j == 0 || i > n || j > n || i == j {
            continue;
        }
        let body_end = matches
            .get(idx + 1)
            .map(|&(_, _, next_start, _)| next_start)
            .unwrap_or(section_region.len());
        let body = section_region[body_start..body_end].trim();
        let (lo, hi) = (i.min(j) - 1, i.max(j) - 1);
        let differs = !body.to_lowercase().contains("no difference");
        let (site, why) = if differs {
            parse_where_why(body)
        } else {
            (String::new(), String::new())
        };
        found[lo * n + hi] = Some((differs, site, why));
    }

    let mut discrepancies = Vec::with_capacity(n * (n - 1) / 2);
    let mut missing = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (differs, site, why) = match found[i * n + j].take() {
                Some(parts) => parts,
                None => {
                    missing.push((i, j));
                    (false, String::new(), String::new())
                }
            };
            discrepancies.push(Discrepancy {
                source_id: selected[i].perspective_id.clone(),
                target_id: selected[j].perspective_id.clone(),
                differs,
                site,
                why,
            });
        }
    }

    let raw_checklist = match checklist_start {
        Some(start) => {
            let after = &text[start..];
            let body = after.split_once(':').map(|(_, b)| b).unwrap_or("");
            parse_checklist_items(body)
        }
        None => Vec::new(),
    };
    Ok((discrepancies, raw_checklist, missing))
}

fn parse_where_why(body: &str) -> (String, String) {
    if let Some(where_pos) = body.find("Where:") {
        let rest = &body[where_pos + 6..];
        match rest.find("Why:") {
            Some(why_pos) => (
                rest[..why_pos].trim().to_string(),
                rest[why_pos + 4..].trim().to_string(),
            ),
            None => (rest.trim().to_string(), String::new()),
        }
    } else {
        (body.trim().to_string(), String::new())
    }
}

fn parse_checklist_items(body: &str) -> Vec<String> {
    let body = body.trim();
    // Inline brace form: {Directive1, Directive2, ...}
    if body.starts_with('{') && body.contains('}') {
        let inner = body.trim_start_matches('{').split('}').next().unwrap_or("");
        return inner
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
    }
    body.lines()
        .map(|l| {
            l.trim()
                .trim_start_matches(['-', '*'])
                .trim_start_matches(|c: char| c.is_ascii_digit() || c == '.' || c == ')')
                .trim()
        })
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

/// Validate, deduplicate, and cap the parsed checklist. Empty when no pair
/// differs; an error when pairs differ but nothing was parsed.
pub fn build_checklist(
    discrepancies: &[Discrepancy],
    raw_instructions: &[String],
) -> Result<Checklist, ContrastError> {
    let differing: Vec<(String, String)> = discrepancies
        .iter()
        .filter(|d| d.differs)
        .map(|d| (d.source_id.clone(), d.target_id.clone()))
        .collect();
    if differing.is_empty() {
        return Ok(Checklist::default());
    }
    if raw_instructions.is_empty() {
        return Err(ContrastError::MissingChecklistSection);
    }
    let mut instructions: Vec<String> = Vec::new();
    for raw in raw_instructions {
        let item = raw.trim();
        if item.is_empty() || instructions.iter().any(|i| i == item) {
            continue;
        }
        instructions.push(item.to_string());
        if instructions.len() == CHECKLIST_CAP {
            break;
        }
    }
    Ok(Checklist {
        instructions,
        derived_from: differing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScriptedBackend;
    use std::sync::Arc;

    fn math_candidate(id: &str, answer: u32) -> CandidateResponse {
        CandidateResponse::new(
            id,
            format!("Step 1: think.\nStep 2: derive via route {id}.\nThe answer is {answer}."),
            TaskKind::Math,
            CandidateOrigin::PerspectiveSample,
        )
    }

    fn math_task() -> TaskInstance {
        TaskInstance::math("t1", "simulated problem 9", 23.0).unwrap()
    }

    fn opts() -> ContrastCallOptions {
        ContrastCallOptions {
            model_id: "m".into(),
            temperature: 0.2,
            seed: 5,
        }
    }

    #[test]
    fn identical_candidates_no_differs_and_empty_checklist() {
        let text = math_candidate("a", 23).solution_text.clone();
        let a = CandidateResponse::new(
            "a",
            text.clone(),
            TaskKind::Math,
            CandidateOrigin::PerspectiveSample,
        );
        let b = CandidateResponse::new(
            "b",
            text,
            TaskKind::Math,
            CandidateOrigin::PerspectiveSample,
        );
        let backend = ScriptedBackend::always(
            "For Solution1 and Solution2: No difference in the final answers; both conclude 23.",
        );
        let gw = Gateway::new(Arc::new(backend));
        let outcome = contrast_candidates(&math_task(), &[a, b], &gw, &opts()).unwrap();
        assert_eq!(outcome.discrepancies.len(), 1);
        assert!(!outcome.discrepancies[0].differs);
        assert!(outcome.discrepancies[0].site.is_empty());
        let checklist = build_checklist(&outcome.discrepancies, &outcome.raw_checklist).unwrap();
        assert!(checklist.is_empty());
    }

    #[test]
    fn differing_answers_yield_discrepancy_with_where_why() {
        let a = math_candidate("a", 23);
        let b = math_candidate("b", 25);
        let backend = ScriptedBackend::always(
            "For Solution1 and Solution2: The final answers disagree. Where: the conclusions state 23 versus 25. Why: route drift.\nChecklist:\n- Re-check the combination step.\n- Confirm the final line.",
        );
        let gw = Gateway::new(Arc::new(backend));
        let outcome = contrast_candidates(&math_task(), &[a, b], &gw, &opts()).unwrap();
        assert_eq!(outcome.discrepancies.len(), 1);
        let d = &outcome.discrepancies[0];
        assert!(d.differs);
        assert_eq!(d.site, "the conclusions state 23 versus 25.");
        assert_eq!(d.why, "route drift.");
        let checklist = build_checklist(&outcome.discrepancies, &outcome.raw_checklist).unwrap();
        assert_eq!(checklist.instructions.len(), 2);
        assert_eq!(checklist.derived_from.len(), 1);
    }

    #[test]
    fn three_candidates_produce_all_pairs() {
        let candidates = vec![
            math_candidate("a", 1),
            math_candidate("b", 2),
            math_candidate("c", 3),
        ];
        let backend = ScriptedBackend::always(
            "For Solution1 and Solution2: differs. Where: x. Why: y.\nFor Solution1 and Solution3: differs. Where: x. Why: y.\nFor Solution2 and Solution3: differs. Where: x. Why: y.\nChecklist:\n- check",
        );
        let gw = Gateway::new(Arc::new(backend));
        let outcome = contrast_candidates(&math_task(), &candidates, &gw, &opts()).unwrap();
        assert_eq!(outcome.discrepancies.len(), 3);
        assert!(outcome.missing_pairs.is_empty());
        assert!(outcome.discrepancies.iter().all(|d| d.differs));
    }

    #[test]
    fn absent_pairs_flagged_and_defaulted() {
        let candidates = vec![
            math_candidate("a", 1),
            math_candidate("b", 2),
            math_candidate("c", 3),
        ];
        let backend = ScriptedBackend::always(
            "For Solution1 and Solution2: differ. Where: x. Why: y.\nChecklist:\n- check",
        );
        let gw = Gateway::new(Arc::new(backend));
        let outcome = contrast_candidates(&math_task(), &candidates, &gw, &opts()).unwrap();
        assert_eq!(outcome.discrepancies.len(), 3);
        assert_eq!(outcome.missing_pairs, vec![(0, 2), (1, 2)]);
        let absent: Vec<&Discrepancy> = outcome
            .discrepancies
            .iter()
            .filter(|d| !d.differs)
            .collect();
        assert_eq!(absent.len(), 2);
    }

    #[test]
    fn unparseable_completion_is_contrast_parse_failure() {
        let candidates = vec![math_candidate("a", 1), math_candidate("b", 2)];
        let backend = ScriptedBackend::always("nothing structured at all");
        let gw = Gateway::new(Arc::new(backend));
        assert!(matches!(
            contrast_candidates(&math_task(), &candidates, &gw, &opts()),
            Err(ContrastError::ContrastParseFailure)
        ));
    }

    #[test]
    fn candidate_count_bounds() {
        let gw = Gateway::new(Arc::new(ScriptedBackend::always("x")));
        let one = vec![math_candidate("a", 1)];
        assert!(matches!(
            contrast_candidates(&math_task(), &one, &gw, &opts()),
            Err(ContrastError::CandidateCountOutOfRange(1))
        ));
    }

    #[test]
    fn checklist_capped_at_eight_order_preserving() {
        let discrepancies = vec![Discrepancy {
            source_id: "a".into(),
            target_id: "b".into(),
            differs: true,
            site: "x".into(),
            why: "y".into(),
        }];
        let raw: Vec<String> = (0..12).map(|i| format!("instruction {i}")).collect();
        let checklist = build_checklist(&discrepancies, &raw).unwrap();
        assert_eq!(checklist.instructions.len(), 8);
        assert_eq!(checklist.instructions[0], "instruction 0");
        assert_eq!(checklist.instructions[7], "instruction 7");
    }

    #[test]
    fn missing_checklist_with_differs_is_error() {
        let discrepancies = vec![Discrepancy {
            source_id: "a".into(),
            target_id: "b".into(),
            differs: true,
            site: "x".into(),
            why: String::new(),
        }];
        assert!(matches!(
            build_checklist(&discrepancies, &[]),
            Err(ContrastError::MissingChecklistSection)
        ));
    }

    #[test]
    fn inline_brace_checklist_parses() {
        let items = parse_checklist_items("{Check the intent, Check the arithmetic}");
        assert_eq!(items, vec!["Check the intent", "Check the arithmetic"]);
    }

    #[test]
    fn translation_fixture_verb_discrepancy() {
        let task =
            TaskInstance::translation("zh-1", "这个计划被枪毙", vec!["This plan was axed".into()])
                .unwrap();
        let a = CandidateResponse::new(
            "literal",
            "Step 1: read.\nThe plan was shot to death.",
            TaskKind::Translation,
            CandidateOrigin::PerspectiveSample,
        );
        let b = CandidateResponse::new(
            "liberal",
            "Step 1: read.\nThis plan was axed.",
            TaskKind::Translation,
            CandidateOrigin::PerspectiveSample,
        );
        let backend = ScriptedBackend::always(
            "For Result1 and Result2: The final answers disagree. Where: the rendering of the source verb differs, shot to death versus axed. Why: one translation is literal where the source is metaphorical.\nChecklist:\n- Scrutinize the source sentence for metaphors.\n- Ensure the translation aligns with the conventions of English expression.",
        );
        let gw = Gateway::new(Arc::new(backend));
        let outcome = contrast_candidates(&task, &[a, b], &gw, &opts()).unwrap();
        assert!(outcome.discrepancies[0].differs);
        assert!(outcome.discrepancies[0].site.contains("verb"));
        let checklist = build_checklist(&outcome.discrepancies, &outcome.raw_checklist).unwrap();
        assert!(checklist.instructions[0].contains("metaphors"));
    }
}
