//! Prompt templates shipped as data files, one per agent id.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::schema::{fault_guide, OutputSchema};
use crate::model::FaultKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Message {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateMessage {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    #[serde(default)]
    pub purpose: String,
    /// Slot name → the binding whose value selects the slot's text.
    #[serde(default)]
    pub dynamic: BTreeMap<String, String>,
    pub schema: OutputSchema,
    pub messages: Vec<TemplateMessage>,
}

/// Filled from the template's own schema when not bound explicitly.
pub const OUTPUT_FORMAT: &str = "output_format";

const SOURCES: &[(&str, &str)] = &[
    ("0-0", include_str!("../../prompts/0-0.yaml")),
    ("0-1", include_str!("../../prompts/0-1.yaml")),
    ("0-2", include_str!("../../prompts/0-2.yaml")),
    ("0-3", include_str!("../../prompts/0-3.yaml")),
    ("1-0", include_str!("../../prompts/1-0.yaml")),
    ("1-1", include_str!("../../prompts/1-1.yaml")),
    ("1-2", include_str!("../../prompts/1-2.yaml")),
    ("1-3-a", include_str!("../../prompts/1-3-a.yaml")),
    ("1-3-b", include_str!("../../prompts/1-3-b.yaml")),
    ("1-4", include_str!("../../prompts/1-4.yaml")),
    ("1-5", include_str!("../../prompts/1-5.yaml")),
    ("1-6", include_str!("../../prompts/1-6.yaml")),
    ("2-0", include_str!("../../prompts/2-0.yaml")),
    ("2-1", include_str!("../../prompts/2-1.yaml")),
    ("2-2", include_str!("../../prompts/2-2.yaml")),
    ("2-3", include_str!("../../prompts/2-3.yaml")),
    ("2-4", include_str!("../../prompts/2-4.yaml")),
    ("3-0", include_str!("../../prompts/3-0.yaml")),
    ("4-0", include_str!("../../prompts/4-0.yaml")),
    ("EX", include_str!("../../prompts/EX.yaml")),
];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{\{([a-z0-9_]+)\}\}").expect("valid regex"))
}

fn registry() -> &'static BTreeMap<&'static str, PromptTemplate> {
    static REG: OnceLock<BTreeMap<&'static str, PromptTemplate>> = OnceLock::new();
    REG.get_or_init(|| {
        SOURCES
            .iter()
            .map(|(id, text)| {
                let t: PromptTemplate =
                    serde_yaml::from_str(text).unwrap_or_else(|e| panic!("prompt {id} does not parse: {e}"));
                assert_eq!(t.id, *id, "prompt file id mismatch");
                (*id, t)
            })
            .collect()
    })
}

pub fn template(id: &str) -> Option<&'static PromptTemplate> {
    registry().get(id)
}

pub fn templates() -> impl Iterator<Item = &'static PromptTemplate> {
    registry().values()
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("prompt {template}: placeholder {name} is unbound")]
    Unbound { template: String, name: String },
    #[error("prompt {template}: no {slot} text for {condition} = {value:?}")]
    UnknownCondition {
        template: String,
        slot: String,
        condition: String,
        value: String,
    },
}

impl PromptTemplate {
    /// Every `{{name}}` used in the messages, dynamic slots included.
    pub fn placeholders(&self) -> BTreeSet<String> {
        self.messages
            .iter()
            .flat_map(|m| placeholder_re().captures_iter(&m.text))
            .map(|c| c[1].to_string())
            .collect()
    }
}

fn dynamic_text(slot: &str, value: &str) -> Option<String> {
    match slot {
        "fault_guide" => FaultKind::parse(value).map(fault_guide),
        _ => None,
    }
}

/// Substitutes bindings verbatim. Dynamic slots are chosen by their condition binding.
pub fn render_prompt(
    template: &PromptTemplate,
    bindings: &BTreeMap<String, String>,
) -> Result<Vec<Message>, PromptError> {
    let mut values = bindings.clone();
    values
        .entry(OUTPUT_FORMAT.into())
        .or_insert_with(|| template.schema.describe());
    for (slot, condition) in &template.dynamic {
        let value = values.get(condition).cloned().ok_or_else(|| PromptError::Unbound {
            template: template.id.clone(),
            name: condition.clone(),
        })?;
        let text = dynamic_text(slot, &value).ok_or_else(|| PromptError::UnknownCondition {
            template: template.id.clone(),
            slot: slot.clone(),
            condition: condition.clone(),
            value,
        })?;
        values.insert(slot.clone(), text);
    }
    if let Some(missing) = template.placeholders().into_iter().find(|p| !values.contains_key(p)) {
        return Err(PromptError::Unbound {
            template: template.id.clone(),
            name: missing,
        });
    }
    Ok(template
        .messages
        .iter()
        .map(|m| {
            // Single pass so bound text containing braces is never re-expanded.
            let content = placeholder_re().replace_all(&m.text, |c: &regex::Captures| values[&c[1]].clone());
            Message::new(m.role, content.into_owned())
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn all_agents_present() {
        let ids: Vec<&str> = templates().map(|t| t.id.as_str()).collect();
        assert_eq!(ids.len(), 20);
        for id in ["0-0", "1-6", "2-1", "4-0", "EX"] {
            assert!(ids.contains(&id));
        }
        for t in templates() {
            assert!(t.schema.first_field().is_some(), "{}", t.id);
        }
    }

    #[test]
    fn shared_placeholders_mean_the_same_thing() {
        let mut seen = BTreeMap::new();
        for t in templates() {
            for p in t.placeholders() {
                seen.entry(p).or_insert_with(Vec::new).push(t.id.clone());
            }
        }
        assert!(seen["ce_instructions"].len() > 5);
    }

    #[test]
    fn fault_slot_follows_kind() {
        let t = template("1-6").unwrap();
        let mut b = bind(&[
            ("user_input", "u"),
            ("ce_instructions", "c"),
            ("steady_states", "s"),
            ("fault_scenario", "f"),
            ("refined_fault_type", "PodChaos"),
        ]);
        let msgs = render_prompt(t, &b).unwrap();
        assert!(msgs[0].content.contains("Parameters for PodChaos"));
        assert!(msgs[0].content.contains("pod-kill"));
        b.insert("refined_fault_type".into(), "KernelChaos".into());
        assert!(matches!(
            render_prompt(t, &b),
            Err(PromptError::UnknownCondition { .. })
        ));
    }

    #[test]
    fn missing_binding_is_named() {
        let t = template("0-3").unwrap();
        let err = render_prompt(t, &BTreeMap::new()).unwrap_err();
        assert_eq!(
            err,
            PromptError::Unbound {
                template: "0-3".into(),
                name: "ce_instructions".into()
            }
        );
    }

    #[test]
    fn bindings_are_not_reexpanded() {
        let t = template("0-3").unwrap();
        let msgs = render_prompt(t, &bind(&[("ce_instructions", "{{k8s_yaml}}")])).unwrap();
        assert!(msgs[1].content.contains("{{k8s_yaml}}"));
    }
}
