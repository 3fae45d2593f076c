use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PlannerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Step1,
    Step2,
    DynamicAlpha,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ExampleDoc {
    text: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TemplateDoc {
    id: TemplateId,
    text: String,
    #[serde(default)]
    examples: Vec<ExampleDoc>,
}

/// Prompt text with `{{name}}` placeholders. `{{examples}}` is bound
/// automatically from the in-context examples.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub text: String,
    pub in_context_examples: Vec<String>,
}

const STEP1_ASSET: &str = include_str!("../../assets/templates/step1.toml");
const STEP2_ASSET: &str = include_str!("../../assets/templates/step2.toml");
const ALPHA_ASSET: &str = include_str!("../../assets/templates/dynamic_alpha.toml");

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([A-Za-z_][A-Za-z0-9_]*)\}\}").unwrap())
}

impl PromptTemplate {
    /// Parses a TOML template asset (`id`, `text`, `[[examples]] text`).
    pub fn from_toml(source: &str) -> Result<Self, PlannerError> {
        let doc: TemplateDoc =
            toml::from_str(source).map_err(|e| PlannerError::Template(format!("bad template asset: {e}")))?;
        Ok(Self {
            id: doc.id,
            text: doc.text.trim_start_matches('\n').to_string(),
            in_context_examples: doc
                .examples
                .into_iter()
                .map(|e| e.text.trim().to_string())
                .collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, PlannerError> {
        let source = std::fs::read_to_string(path)
            .map_err(|e| PlannerError::Template(format!("{}: {e}", path.display())))?;
        Self::from_toml(&source)
    }

    pub fn default_step1() -> Self {
        Self::from_toml(STEP1_ASSET).expect("bundled step1 template")
    }

    pub fn default_step2() -> Self {
        Self::from_toml(STEP2_ASSET).expect("bundled step2 template")
    }

    pub fn default_dynamic_alpha() -> Self {
        Self::from_toml(ALPHA_ASSET).expect("bundled alpha template")
    }

    /// Names of all placeholders in the template text, in order of first use.
    pub fn placeholders(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for cap in placeholder_re().captures_iter(&self.text) {
            let name = cap[1].to_string();
            if !seen.contains(&name) {
                seen.push(name);
            }
        }
        seen
    }

    /// Substitutes every placeholder; an unbound name is a template error.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PlannerError> {
        let examples = self.in_context_examples.join("\n\n");
        let mut missing = None;
        let out = placeholder_re().replace_all(&self.text, |cap: &regex::Captures<'_>| {
            let name = &cap[1];
            match bindings.get(name) {
                Some(v) => v.clone(),
                None if name == "examples" => examples.clone(),
                None => {
                    missing.get_or_insert_with(|| name.to_string());
                    String::new()
                }
            }
        });
        match missing {
            Some(name) => Err(PlannerError::Template(format!(
                "unbound placeholder {{{{{name}}}}} in {:?} template",
                self.id
            ))),
            None => Ok(out.into_owned()),
        }
    }

    fn expect_id(&self, id: TemplateId) -> Result<(), PlannerError> {
        if self.id == id {
            Ok(())
        } else {
            Err(PlannerError::Template(format!(
                "expected a {id:?} template, got {:?}",
                self.id
            )))
        }
    }
}

pub fn render_step1_prompt(source_prompt: &str, template: &PromptTemplate) -> Result<String, PlannerError> {
    template.expect_id(TemplateId::Step1)?;
    let mut b = BTreeMap::new();
    b.insert("prompt", source_prompt.to_string());
    template.render(&b)
}

/// `name (description); name (description)`
pub fn entity_listing(scene: &crate::plan::SceneSpec) -> String {
    scene
        .entities
        .iter()
        .map(|e| {
            if e.description.is_empty() {
                e.name.clone()
            } else {
                format!("{} ({})", e.name, e.description)
            }
        })
        .collect::<Vec<_>>()
        .join("; ")
}

pub fn render_step2_prompt(
    scene: &crate::plan::SceneSpec,
    template: &PromptTemplate,
) -> Result<String, PlannerError> {
    template.expect_id(TemplateId::Step2)?;
    let slots = (1..=scene.num_keyframes)
        .map(|f| format!("Frame {f}"))
        .collect::<Vec<_>>()
        .join("\n");
    let mut b = BTreeMap::new();
    b.insert("description", scene.description.clone());
    b.insert("background", scene.background.clone());
    b.insert("entities", entity_listing(scene));
    b.insert("num_keyframes", scene.num_keyframes.to_string());
    b.insert("frame_slots", slots);
    template.render(&b)
}

pub fn render_alpha_prompt(source_prompt: &str, template: &PromptTemplate) -> Result<String, PlannerError> {
    template.expect_id(TemplateId::DynamicAlpha)?;
    let mut b = BTreeMap::new();
    b.insert("prompt", source_prompt.to_string());
    template.render(&b)
}
