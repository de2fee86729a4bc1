use std::collections::{BTreeMap, BTreeSet};

use serde_json::{Map, Value};
use serde_yaml::{Mapping, Value as Yaml};

use super::tree::{NodeBody, NodeType, WorkflowNode};
use super::Stage;
use crate::duration::Duration;
use crate::faults::render_fault_body;
use crate::model::{FaultKind, SelectorSpec};
use crate::vac::{runner_command, script_location, WORKSPACE_MOUNT};

pub const API_VERSION: &str = "chaos-mesh.org/v1alpha1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkflowMeta {
    pub name: String,
    /// Cycle directory relative to the shared volume, e.g. `sandbox/cycle_20241124_132128`.
    pub workspace: String,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatchError {
    #[error("duplicate node name {0}")]
    DuplicateNode(String),
    #[error("node {0} cannot be rendered: {1}")]
    Unrenderable(String, String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} is not a {1} node")]
    WrongType(String, &'static str),
    #[error("manifest does not parse: {0}")]
    Parse(String),
}

fn s(v: &str) -> Yaml {
    Yaml::String(v.to_string())
}

fn map(pairs: Vec<(&str, Yaml)>) -> Yaml {
    let mut m = Mapping::new();
    for (k, v) in pairs {
        m.insert(s(k), v);
    }
    Yaml::Mapping(m)
}

fn seq(items: impl IntoIterator<Item = String>) -> Yaml {
    Yaml::Sequence(items.into_iter().map(Yaml::String).collect())
}

fn to_yaml(v: &Value) -> Yaml {
    serde_yaml::to_value(v).expect("json value converts to yaml")
}

fn template(node: &WorkflowNode, meta: &WorkflowMeta) -> Result<Yaml, PatchError> {
    if let NodeBody::Template(raw) = &node.body {
        return Ok(to_yaml(raw));
    }
    let mut pairs = vec![
        ("name", s(&node.name)),
        ("templateType", s(&node.template_type())),
        ("deadline", s(&node.deadline.to_string())),
    ];
    if !node.is_leaf() {
        pairs.push(("children", seq(node.children.iter().map(|c| c.name.clone()))));
    }
    match &node.body {
        NodeBody::Task(task) => {
            let mut vac = task.vac.clone();
            vac.script_path = format!("{}/{}", meta.workspace.trim_end_matches('/'), vac.script_path);
            let cmd = runner_command(&vac, node.duration)
                .map_err(|e| PatchError::Unrenderable(node.name.clone(), e.to_string()))?;
            let mut container = vec![
                ("name", s(&format!("{}-container", node.name))),
                ("image", s(cmd.image)),
            ];
            if let Some(policy) = cmd.image_pull_policy {
                container.push(("imagePullPolicy", s(policy)));
            }
            container.push(("command", seq(cmd.command)));
            if let Some(args) = cmd.args {
                container.push(("args", seq(args)));
            }
            container.push((
                "volumeMounts",
                Yaml::Sequence(vec![map(vec![
                    ("name", s("pvc-volume")),
                    ("mountPath", s(WORKSPACE_MOUNT)),
                ])]),
            ));
            pairs.push((
                "task",
                map(vec![
                    ("container", map(container)),
                    (
                        "volumes",
                        Yaml::Sequence(vec![map(vec![
                            ("name", s("pvc-volume")),
                            ("persistentVolumeClaim", map(vec![("claimName", s("pvc"))])),
                        ])]),
                    ),
                ]),
            ));
        }
        NodeBody::Failure(fault) => {
            let (key, body) = render_fault_body(fault).map_err(|vs| {
                PatchError::Unrenderable(
                    node.name.clone(),
                    vs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
                )
            })?;
            pairs.push((key, to_yaml(&body)));
        }
        NodeBody::None | NodeBody::Template(_) => {}
    }
    Ok(map(pairs))
}

/// Entry first, then per stage: the wrapper, its groups in pre-order, then its leaves.
fn ordered(tree: &WorkflowNode) -> Vec<&WorkflowNode> {
    let mut out = vec![tree];
    for phase in &tree.children {
        let all = phase.walk();
        out.extend(all.iter().filter(|n| !n.is_leaf()).copied());
        out.extend(all.iter().filter(|n| n.is_leaf()).copied());
    }
    out
}

pub fn emit_workflow(tree: &WorkflowNode, meta: &WorkflowMeta) -> Result<String, PatchError> {
    let mut seen = BTreeSet::new();
    let mut templates = Vec::new();
    for node in ordered(tree) {
        if !seen.insert(node.name.as_str()) {
            return Err(PatchError::DuplicateNode(node.name.clone()));
        }
        templates.push(template(node, meta)?);
    }
    let doc = map(vec![
        ("apiVersion", s(API_VERSION)),
        ("kind", s("Workflow")),
        ("metadata", map(vec![("name", s(&meta.name))])),
        (
            "spec",
            map(vec![("entry", s(&tree.name)), ("templates", Yaml::Sequence(templates))]),
        ),
    ]);
    Ok(serde_yaml::to_string(&doc).expect("manifest serializes"))
}

fn parse_json(text: &str) -> Result<Value, PatchError> {
    serde_yaml::from_str(text).map_err(|e| PatchError::Parse(e.to_string()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedWorkflow {
    pub name: String,
    pub entry: String,
    pub templates: Vec<Value>,
}

pub fn parse_workflow(text: &str) -> Result<ParsedWorkflow, PatchError> {
    let doc = parse_json(text)?;
    let field = |ptr: &str| {
        doc.pointer(ptr)
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| PatchError::Parse(format!("missing {ptr}")))
    };
    let templates = doc
        .pointer("/spec/templates")
        .and_then(Value::as_array)
        .cloned()
        .ok_or_else(|| PatchError::Parse("missing /spec/templates".into()))?;
    Ok(ParsedWorkflow {
        name: field("/metadata/name")?,
        entry: field("/spec/entry")?,
        templates,
    })
}

fn command_duration(template: &Value) -> Option<Duration> {
    let container = template.pointer("/task/container")?;
    let mut tokens: Vec<String> = Vec::new();
    for key in ["command", "args"] {
        for item in container.get(key).and_then(Value::as_array).into_iter().flatten() {
            if let Some(s) = item.as_str() {
                tokens.extend(s.split_whitespace().map(str::to_string));
            }
        }
    }
    let i = tokens.iter().position(|t| t == "--duration")?;
    let raw = tokens.get(i + 1)?;
    match raw.parse::<u64>() {
        Ok(n) => Some(Duration::from_secs(n)),
        Err(_) => Duration::parse(raw).ok(),
    }
}

/// Rebuilds the node tree of an emitted manifest; leaves keep their raw templates.
pub fn tree_from_manifest(text: &str) -> Result<WorkflowNode, PatchError> {
    let parsed = parse_workflow(text)?;
    let mut by_name = BTreeMap::new();
    for t in &parsed.templates {
        let name = t
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| PatchError::Parse("template without name".into()))?;
        if by_name.insert(name.to_string(), t).is_some() {
            return Err(PatchError::DuplicateNode(name.to_string()));
        }
    }
    fn build(name: &str, by_name: &BTreeMap<String, &Value>, depth: usize) -> Result<WorkflowNode, PatchError> {
        if depth > 64 {
            return Err(PatchError::Parse("template nesting too deep".into()));
        }
        let t = by_name
            .get(name)
            .ok_or_else(|| PatchError::UnknownNode(name.to_string()))?;
        let ty = t.get("templateType").and_then(Value::as_str).unwrap_or_default();
        let deadline = t
            .get("deadline")
            .and_then(Value::as_str)
            .map(Duration::parse)
            .transpose()
            .map_err(|e| PatchError::Parse(e.to_string()))?
            .unwrap_or_default();
        let node_type = match ty {
            "Task" => NodeType::Task,
            "Suspend" => NodeType::Suspend,
            "Serial" => NodeType::Serial,
            "Parallel" => NodeType::Parallel,
            other if FaultKind::parse(other).is_some() => NodeType::Failure,
            other => return Err(PatchError::Parse(format!("unknown templateType {other}"))),
        };
        let children = t
            .get("children")
            .and_then(Value::as_array)
            .into_iter()
            .flatten()
            .filter_map(Value::as_str)
            .map(|c| build(c, by_name, depth + 1))
            .collect::<Result<Vec<_>, _>>()?;
        let duration = match node_type {
            NodeType::Task => command_duration(t).unwrap_or_default(),
            NodeType::Failure | NodeType::Suspend => deadline,
            _ => Duration::ZERO,
        };
        let body = match node_type {
            NodeType::Task | NodeType::Failure => NodeBody::Template((*t).clone()),
            _ => NodeBody::None,
        };
        let stage = Stage::ALL.into_iter().find(|s| s.phase_node() == name);
        Ok(WorkflowNode {
            name: name.to_string(),
            node_type,
            deadline,
            duration,
            children,
            body,
            stage,
            stage_time: None,
        })
    }
    build(&parsed.entry, &by_name, 0)
}

/// Manifest as a JSON tree with templates keyed by name, so ordering is irrelevant.
pub fn normalize_manifest(text: &str) -> Result<Value, PatchError> {
    let mut doc = parse_json(text)?;
    let templates = doc
        .pointer("/spec/templates")
        .and_then(Value::as_array)
        .cloned()
        .unwrap_or_default();
    let mut keyed = Map::new();
    for t in templates {
        let name = t.get("name").and_then(Value::as_str).unwrap_or_default().to_string();
        if keyed.insert(name.clone(), t).is_some() {
            return Err(PatchError::DuplicateNode(name));
        }
    }
    if let Some(spec) = doc.get_mut("spec").and_then(Value::as_object_mut) {
        spec.insert("templates".into(), Value::Object(keyed));
    }
    Ok(doc)
}

/// Paths at which two JSON trees differ.
pub fn structural_diff(a: &Value, b: &Value) -> Vec<String> {
    fn go(path: String, a: &Value, b: &Value, out: &mut Vec<String>) {
        match (a, b) {
            (Value::Object(x), Value::Object(y)) => {
                let keys: BTreeSet<&String> = x.keys().chain(y.keys()).collect();
                for k in keys {
                    let p = format!("{path}/{k}");
                    match (x.get(k), y.get(k)) {
                        (Some(u), Some(v)) => go(p, u, v, out),
                        (Some(_), None) => out.push(format!("{p}: only in left")),
                        (None, Some(_)) => out.push(format!("{p}: only in right")),
                        (None, None) => {}
                    }
                }
            }
            (Value::Array(x), Value::Array(y)) if x.len() == y.len() => {
                for (i, (u, v)) in x.iter().zip(y).enumerate() {
                    go(format!("{path}/{i}"), u, v, out);
                }
            }
            _ if a == b => {}
            _ => out.push(format!("{path}: {a} != {b}")),
        }
    }
    let mut out = Vec::new();
    go(String::new(), a, b, &mut out);
    out
}

fn yaml_str(v: &Yaml, key: &str) -> Option<String> {
    v.get(key).and_then(Yaml::as_str).map(str::to_string)
}

fn replace_script(token: &str, path: &str) -> String {
    if token.starts_with(&format!("{WORKSPACE_MOUNT}/")) {
        script_location(path)
    } else {
        token.to_string()
    }
}

/// Updates only failure-node selectors and task script paths; every other field is kept.
///
/// `script_updates` maps task nodes to the new script path relative to the shared volume.
pub fn patch_workflow(
    manifest: &str,
    selector_updates: &BTreeMap<String, SelectorSpec>,
    script_updates: &BTreeMap<String, String>,
) -> Result<String, PatchError> {
    let mut doc: Yaml = serde_yaml::from_str(manifest).map_err(|e| PatchError::Parse(e.to_string()))?;
    let templates = doc
        .get_mut("spec")
        .and_then(|s| s.get_mut("templates"))
        .and_then(Yaml::as_sequence_mut)
        .ok_or_else(|| PatchError::Parse("missing spec.templates".into()))?;
    let names: BTreeSet<String> = templates.iter().filter_map(|t| yaml_str(t, "name")).collect();
    for name in selector_updates.keys().chain(script_updates.keys()) {
        if !names.contains(name) {
            return Err(PatchError::UnknownNode(name.clone()));
        }
    }
    for t in templates.iter_mut() {
        let Some(name) = yaml_str(t, "name") else { continue };
        let ty = yaml_str(t, "templateType").unwrap_or_default();
        if let Some(selector) = selector_updates.get(&name) {
            let kind = FaultKind::parse(&ty).ok_or(PatchError::WrongType(name.clone(), "failure"))?;
            let body = t
                .get_mut(kind.template_key())
                .and_then(Yaml::as_mapping_mut)
                .ok_or(PatchError::WrongType(name.clone(), "failure"))?;
            body.insert(s("selector"), to_yaml(&selector.to_value()));
        }
        if let Some(path) = script_updates.get(&name) {
            if ty != "Task" {
                return Err(PatchError::WrongType(name, "task"));
            }
            let container = t
                .get_mut("task")
                .and_then(|t| t.get_mut("container"))
                .and_then(Yaml::as_mapping_mut)
                .ok_or(PatchError::WrongType(name.clone(), "task"))?;
            for key in ["command", "args"] {
                if let Some(items) = container.get_mut(key).and_then(Yaml::as_sequence_mut) {
                    for item in items.iter_mut() {
                        if let Some(text) = item.as_str() {
                            let replaced = text
                                .split(' ')
                                .map(|tok| replace_script(tok, path))
                                .collect::<Vec<_>>()
                                .join(" ");
                            *item = Yaml::String(replaced);
                        }
                    }
                }
            }
        }
    }
    Ok(serde_yaml::to_string(&doc).expect("manifest serializes"))
}
