//! Prompt template corpus and rendering.
//!
//! Templates live as plain-text files under `templates/`, each with a small
//! header (id, task kind, placeholder list) separated from the body by the
//! first `---` line. Rendering is exact substitution of declared
//! placeholders; undeclared brace tokens (JSON, fences) pass through
//! untouched.

mod perspective;

pub use perspective::{
    curate_perspectives, format_perspective_set, make_negative_perspective,
    parse_perspective_block, CurationOptions, PerspectivePrompt, PerspectiveSet,
};

use std::collections::HashMap;

use once_cell::sync::Lazy;
use regex::Regex;

use crate::eval::TaskKind;

/// Errors from template rendering and perspective parsing.
#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("missing binding for placeholder {{{0}}}")]
    MissingBinding(String),
    #[error("no perspective blocks found")]
    ParseFailure,
    #[error("perspective count {found} outside 2..=9 after retry")]
    CurationBoundsViolation { found: usize },
    #[error("negative perspective is only defined for translation tasks")]
    UnsupportedTaskKind,
    #[error(transparent)]
    Gateway(#[from] crate::gateway::GatewayError),
}

/// A parsed template: body text with named placeholders.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    pub template_id: String,
    /// None when the template applies to either task kind.
    pub task_kind: Option<TaskKind>,
    pub placeholders: Vec<String>,
    pub body: String,
}

macro_rules! corpus {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../templates/", $name, ".tmpl")))),*]
    };
}

/// Every shipped template, embedded at compile time.
static RAW_CORPUS: &[(&str, &str)] = corpus![
    "standard-math-0",
    "standard-math-1",
    "standard-math-2",
    "standard-math-3",
    "standard-math-4",
    "standard-math-5",
    "standard-math-6",
    "standard-math-7",
    "standard-math-8",
    "standard-math-9",
    "standard-translation-0",
    "standard-translation-1",
    "standard-translation-2",
    "standard-translation-3",
    "standard-translation-4",
    "standard-translation-5",
    "standard-translation-6",
    "standard-translation-7",
    "standard-translation-8",
    "standard-translation-9",
    "reflect-eval-0",
    "reflect-eval-1",
    "reflect-eval-2",
    "reflect-eval-3",
    "reflect-eval-4",
    "reflect-eval-5",
    "reflect-eval-6",
    "reflect-eval-7",
    "reflect-eval-8",
    "reflect-eval-9",
    "reflect-revise-0",
    "reflect-revise-1",
    "reflect-revise-2",
    "reflect-revise-3",
    "reflect-revise-4",
    "reflect-revise-5",
    "reflect-revise-6",
    "reflect-revise-7",
    "reflect-revise-8",
    "reflect-revise-9",
    "curate-math",
    "curate-translation",
    "contrast-math",
    "contrast-translation",
    "revise-math",
    "revise-translation",
    "negative-translation",
    "frame-eval-math",
    "frame-eval-translation",
    "frame-revise-math",
    "frame-revise-translation",
    "select-math",
    "select-translation",
    "regen-math",
    "regen-translation",
    "pick-member-math",
    "pick-member-translation",
    "solve-math",
    "solve-translation",
];

static REGISTRY: Lazy<HashMap<String, PromptTemplate>> = Lazy::new(|| {
    RAW_CORPUS
        .iter()
        .map(|(name, raw)| {
            let template = parse_template_file(raw)
                .unwrap_or_else(|e| panic!("template {name} is malformed: {e}"));
            assert_eq!(template.template_id, *name, "template id/filename mismatch");
            (template.template_id.clone(), template)
        })
        .collect()
});

fn parse_template_file(raw: &str) -> Result<PromptTemplate, String> {
    let mut template_id = None;
    let mut task_kind = None;
    let mut placeholders = Vec::new();
    let mut body_start = None;
    for (offset, line) in raw.lines().enumerate() {
        if line.trim() == "---" {
            body_start = Some(offset + 1);
            break;
        }
        let (key, value) = line.split_once(':').ok_or("header line without colon")?;
        let value = value.trim();
        match key.trim() {
            "id" => template_id = Some(value.to_string()),
            "kind" => {
                task_kind = match value {
                    "math" => Some(Some(TaskKind::Math)),
                    "translation" => Some(Some(TaskKind::Translation)),
                    "any" => Some(None),
                    other => return Err(format!("unknown kind {other}")),
                }
            }
            "placeholders" => {
                placeholders = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect();
            }
            other => return Err(format!("unknown header key {other}")),
        }
    }
    let body_start = body_start.ok_or("missing --- separator")?;
    let body: String = raw.lines().skip(body_start).collect::<Vec<_>>().join("\n");
    Ok(PromptTemplate {
        template_id: template_id.ok_or("missing id")?,
        task_kind: task_kind.ok_or("missing kind")?,
        placeholders,
        body,
    })
}

/// Look up a template by id.
pub fn template(template_id: &str) -> Result<&'static PromptTemplate, PromptError> {
    REGISTRY
        .get(template_id)
        .ok_or_else(|| PromptError::UnknownTemplate(template_id.to_string()))
}

static PLACEHOLDER_RE: Lazy<Regex> =
    Lazy::new(|| Regex::new(r"\{([a-z][a-z0-9_]*)\}").expect("static regex"));

/// Render a template: exact substitution of declared placeholders, no other
/// mutation. Brace tokens that are not declared placeholders stay verbatim.
pub fn render_template(
    template_id: &str,
    bindings: &[(&str, &str)],
) -> Result<String, PromptError> {
    let tpl = template(template_id)?;
    let mut missing = None;
    let rendered = PLACEHOLDER_RE.replace_all(&tpl.body, |caps: &regex::Captures| {
        let name = &caps[1];
        if !tpl.placeholders.iter().any(|p| p == name) {
            return caps[0].to_string();
        }
        match bindings.iter().find(|(k, _)| *k == name) {
            Some((_, v)) => (*v).to_string(),
            None => {
                if missing.is_none() {
                    missing = Some(name.to_string());
                }
                caps[0].to_string()
            }
        }
    });
    if let Some(name) = missing {
        return Err(PromptError::MissingBinding(name));
    }
    Ok(rendered.into_owned())
}

/// Standard prompt id for a task kind and run index; ten variants rotate.
pub fn standard_prompt_id(kind: TaskKind, run_index: u32) -> String {
    let family = match kind {
        TaskKind::Math => "standard-math",
        TaskKind::Translation => "standard-translation",
    };
    format!("{family}-{}", run_index % 10)
}

/// Evaluation/revision instruction pair for a run index.
pub fn reflection_pair_ids(run_index: u32) -> (String, String) {
    let i = run_index % 10;
    (format!("reflect-eval-{i}"), format!("reflect-revise-{i}"))
}

pub fn curate_template_id(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Math => "curate-math",
        TaskKind::Translation => "curate-translation",
    }
}

/// Persona-free solve body used under a perspective system prompt.
pub fn solve_template_id(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Math => "solve-math",
        TaskKind::Translation => "solve-translation",
    }
}

pub fn contrast_template_id(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Math => "contrast-math",
        TaskKind::Translation => "contrast-translation",
    }
}

pub fn revise_template_id(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Math => "revise-math",
        TaskKind::Translation => "revise-translation",
    }
}

/// Label used when listing candidates for contrast prompts.
pub fn contrast_label(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Math => "Solution",
        TaskKind::Translation => "Result",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::markers;

    #[test]
    fn registry_loads_every_template() {
        assert_eq!(REGISTRY.len(), RAW_CORPUS.len());
    }

    #[test]
    fn standard_math_contains_question_verbatim() {
        let q = "If a pen costs 3 and a pad costs 4, what do 2 of each cost?";
        let out = render_template("standard-math-0", &[("input", q)]).unwrap();
        assert!(out.contains(q));
        assert!(out.contains("step by step"));
    }

    #[test]
    fn evaluation_prompt_six_has_double_check_wording() {
        let out = render_template("reflect-eval-5", &[]).unwrap();
        assert!(out.contains("please double-check and find out the mistake"));
    }

    #[test]
    fn missing_binding_names_the_placeholder() {
        match render_template("standard-math-0", &[]) {
            Err(PromptError::MissingBinding(name)) => assert_eq!(name, "input"),
            other => panic!("expected MissingBinding, got {other:?}"),
        }
    }

    #[test]
    fn unknown_template_rejected() {
        assert!(matches!(
            render_template("nope", &[]),
            Err(PromptError::UnknownTemplate(_))
        ));
    }

    #[test]
    fn undeclared_braces_pass_through() {
        let out = render_template(
            "revise-math",
            &[("input", "q"), ("envelope", r#"{"Candidate": {}}"#)],
        )
        .unwrap();
        assert!(out.contains(r#"{"Candidate": {}}"#));
        assert!(!out.contains("{input}"));
        assert!(!out.contains("{envelope}"));
    }

    #[test]
    fn rendering_is_injective_in_question() {
        let a = render_template("standard-math-3", &[("input", "q-one")]).unwrap();
        let b = render_template("standard-math-3", &[("input", "q-two")]).unwrap();
        assert_ne!(a, b);
    }

    // The simulated solver routes on these phrases; a template edit that
    // drops one would silently break stage detection.
    #[test]
    fn templates_carry_their_stage_markers() {
        for kind in ["math", "translation"] {
            let curate = template(&format!("curate-{kind}")).unwrap();
            assert!(curate.body.contains(markers::CURATE));
            let revise = template(&format!("revise-{kind}")).unwrap();
            assert!(revise.body.contains(markers::REVISE_ENVELOPE));
            let select = template(&format!("select-{kind}")).unwrap();
            assert!(select.body.contains(markers::SC_SELECT));
            let regen = template(&format!("regen-{kind}")).unwrap();
            assert!(regen.body.contains(markers::SC_REFLECT));
            let pick = template(&format!("pick-member-{kind}")).unwrap();
            assert!(pick.body.contains(markers::CLUSTER_PICK));
            let frame_eval = template(&format!("frame-eval-{kind}")).unwrap();
            assert!(frame_eval.body.contains(markers::PREVIOUS_RESPONSE));
            let frame_revise = template(&format!("frame-revise-{kind}")).unwrap();
            assert!(frame_revise.body.contains(markers::FEEDBACK));
        }
        assert!(template("contrast-math")
            .unwrap()
            .body
            .contains(markers::ALL_SOLUTIONS));
        assert!(template("contrast-translation")
            .unwrap()
            .body
            .contains(markers::ALL_RESULTS));
        assert!(template("negative-translation")
            .unwrap()
            .body
            .to_lowercase()
            .contains(markers::CARELESS));
        assert!(template("curate-math")
            .unwrap()
            .body
            .contains(markers::PAYLOAD_CURATE_MATH));
        assert!(template("standard-math-7")
            .unwrap()
            .body
            .contains(markers::PAYLOAD_MATH));
        assert!(template("standard-translation-4")
            .unwrap()
            .body
            .contains(markers::PAYLOAD_TRANSLATION));
    }
}
