//! Versioned prompt templates and their rendering.
//!
//! Templates live in `prompts/` and are compiled in. Placeholders have the
//! form `{{name}}`; every placeholder a template uses must be supplied.

use serde_json::{json, Value};

use super::{ExplanationRequest, OracleRequestContext};

pub const PROMPT_VERSION: u32 = 1;

pub const SYSTEM: &str = include_str!("../../prompts/system.v1.txt");
pub const ANALYSIS: &str = include_str!("../../prompts/analysis.v1.txt");
pub const EXTRACTION: &str = include_str!("../../prompts/extraction.v1.txt");
pub const EXPLANATION: &str = include_str!("../../prompts/explanation.v1.txt");
pub const EXPLANATION_DIRECT: &str = include_str!("../../prompts/explanation_direct.v1.txt");

/// Substitutes `{{key}}` placeholders.
///
/// Substituted values are not scanned again. Panics on a placeholder with no
/// value; templates are compiled in, so that is a programming error.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .unwrap_or_else(|| panic!("unterminated placeholder in prompt template"));
        let key = &after[..end];
        let value = vars
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .unwrap_or_else(|| panic!("unfilled placeholder in prompt template: {key}"));
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    out
}

pub fn analysis_schema() -> Value {
    json!({
        "type": "object",
        "required": ["understanding", "importance", "key_concepts"],
        "properties": {
            "understanding": {"type": "string"},
            "importance": {"type": "string"},
            "key_concepts": {
                "type": "array",
                "minItems": 1,
                "maxItems": 6,
                "items": {"type": "string"}
            }
        }
    })
}

pub fn extraction_schema() -> Value {
    json!({
        "type": "object",
        "required": ["prerequisites", "fundamental"],
        "properties": {
            "prerequisites": {
                "type": "array",
                "maxItems": 4,
                "items": {
                    "type": "object",
                    "required": ["label"],
                    "properties": {
                        "label": {"type": "string"},
                        "rationale": {"type": "string"}
                    }
                }
            },
            "fundamental": {"type": "boolean"}
        }
    })
}

fn pretty(schema: &Value) -> String {
    serde_json::to_string_pretty(schema).expect("schema serializes")
}

pub fn render_analysis(question: &str, level: super::EducationLevel) -> String {
    render(
        ANALYSIS,
        &[
            ("question", question),
            ("education_level", &level.to_string()),
            ("schema", &pretty(&analysis_schema())),
        ],
    )
}

pub fn render_extraction(concept_label: &str, ctx: &OracleRequestContext) -> String {
    let chain = ctx
        .ancestor_chain
        .iter()
        .enumerate()
        .map(|(i, label)| format!("  L{i}: {label}"))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        EXTRACTION,
        &[
            ("question", &ctx.question),
            ("education_level", &ctx.education_level.to_string()),
            ("ancestor_chain", &chain),
            ("concept", concept_label),
            ("schema", &pretty(&extraction_schema())),
        ],
    )
}

fn bullet_list(items: &[String]) -> String {
    if items.is_empty() {
        return "  (none)".to_string();
    }
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("  {}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Renders the explanation prompt. With no unknown concepts the learner gets
/// a direct explanation that acknowledges their mastery.
pub fn render_explanation(request: &ExplanationRequest) -> String {
    let level = request.education_level.to_string();
    let known = bullet_list(&request.known);
    if request.unknown_ordered.is_empty() {
        return render(
            EXPLANATION_DIRECT,
            &[
                ("question", &request.question),
                ("education_level", &level),
                ("known", &known),
            ],
        );
    }
    render(
        EXPLANATION,
        &[
            ("question", &request.question),
            ("education_level", &level),
            ("known", &known),
            ("unknown", &bullet_list(&request.unknown_ordered)),
        ],
    )
}
