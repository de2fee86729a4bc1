//! The seven supported Chaos Mesh fault kinds: parameter schemas, validation and rendering.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::model::{Fault, FaultKind};

pub const MODES: &[&str] = &["one", "all", "fixed", "fixed-percent", "random-max-percent"];
const POD_ACTIONS: &[&str] = &["pod-kill", "container-kill"];
const NETWORK_ACTIONS: &[&str] = &[
    "netem",
    "delay",
    "loss",
    "duplicate",
    "corrupt",
    "partition",
    "bandwidth",
];
const DIRECTIONS: &[&str] = &["from", "to", "both"];
const DNS_ACTIONS: &[&str] = &["random", "error"];
const HTTP_TARGETS: &[&str] = &["Request", "Response"];
const IO_ACTIONS: &[&str] = &["latency", "fault", "attrOverride", "mistake"];
const FILLINGS: &[&str] = &["zero", "random"];
const EXPRESSION_OPERATORS: &[&str] = &["In", "NotIn", "Exists", "DoesNotExist"];
const POD_PHASES: &[&str] = &["Pending", "Running", "Succeeded", "Failed", "Unknown"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldType {
    Str,
    /// String in the manifest; numbers are accepted and rendered quoted.
    NumStr,
    Int,
    Bool,
    StrList,
    StrMap,
    /// List of string pairs / tuples, e.g. HTTP header patches.
    StrTable,
    Enum(&'static [&'static str]),
    Selector,
    Object(&'static [FieldSpec]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FieldSpec {
    pub name: &'static str,
    pub ty: FieldType,
    pub required: bool,
}

const fn req(name: &'static str, ty: FieldType) -> FieldSpec {
    FieldSpec {
        name,
        ty,
        required: true,
    }
}

const fn opt(name: &'static str, ty: FieldType) -> FieldSpec {
    FieldSpec {
        name,
        ty,
        required: false,
    }
}

use FieldType::*;

const TARGET: &[FieldSpec] = &[
    req("mode", Enum(MODES)),
    opt("value", NumStr),
    req("selector", Selector),
];
const DELAY: &[FieldSpec] = &[
    opt("latency", Str),
    opt("correlation", NumStr),
    opt("jitter", Str),
    opt("reorder", Object(REORDER)),
];
const REORDER: &[FieldSpec] = &[opt("reorder", NumStr), opt("correlation", NumStr), opt("gap", Int)];
const LOSS: &[FieldSpec] = &[opt("loss", NumStr), opt("correlation", NumStr)];
const DUPLICATE: &[FieldSpec] = &[opt("duplicate", NumStr), opt("correlation", NumStr)];
const CORRUPT: &[FieldSpec] = &[opt("corrupt", NumStr), opt("correlation", NumStr)];
const RATE: &[FieldSpec] = &[req("rate", Str)];
const BANDWIDTH: &[FieldSpec] = &[
    req("rate", Str),
    req("limit", Int),
    req("buffer", Int),
    opt("peakrate", Int),
    opt("minburst", Int),
];
const HTTP_REPLACE: &[FieldSpec] = &[
    opt("headers", StrMap),
    opt("body", Str),
    opt("path", Str),
    opt("method", Str),
    opt("queries", StrMap),
    opt("code", Int),
];
const HTTP_PATCH_BODY: &[FieldSpec] = &[req("type", Str), req("value", Str)];
const HTTP_PATCH: &[FieldSpec] = &[
    opt("headers", StrTable),
    opt("body", Object(HTTP_PATCH_BODY)),
    opt("queries", StrTable),
];
const CPU: &[FieldSpec] = &[req("workers", Int), opt("load", Int)];
const MEMORY: &[FieldSpec] = &[req("workers", Int), opt("size", Str), opt("oomScoreAdj", Int)];
const STRESSORS: &[FieldSpec] = &[opt("cpu", Object(CPU)), opt("memory", Object(MEMORY))];
const TIMESPEC: &[FieldSpec] = &[req("sec", Int), req("nsec", Int)];
const ATTR: &[FieldSpec] = &[
    opt("ino", Int),
    opt("size", Int),
    opt("blocks", Int),
    opt("atime", Object(TIMESPEC)),
    opt("mtime", Object(TIMESPEC)),
    opt("ctime", Object(TIMESPEC)),
    opt("kind", Str),
    opt("perm", Int),
    opt("nlink", Int),
    opt("uid", Int),
    opt("gid", Int),
    opt("rdev", Int),
];
const MISTAKE: &[FieldSpec] = &[
    req("filling", Enum(FILLINGS)),
    req("maxOccurrences", Int),
    req("maxLength", Int),
];

const POD_CHAOS: &[FieldSpec] = &[
    req("action", Enum(POD_ACTIONS)),
    req("mode", Enum(MODES)),
    opt("value", NumStr),
    req("selector", Selector),
    opt("containerNames", StrList),
];
const NETWORK_CHAOS: &[FieldSpec] = &[
    req("action", Enum(NETWORK_ACTIONS)),
    opt("direction", Enum(DIRECTIONS)),
    opt("target", Object(TARGET)),
    req("mode", Enum(MODES)),
    opt("value", NumStr),
    req("selector", Selector),
    opt("externalTargets", StrList),
    opt("device", Str),
    opt("delay", Object(DELAY)),
    opt("loss", Object(LOSS)),
    opt("duplicate", Object(DUPLICATE)),
    opt("corrupt", Object(CORRUPT)),
    opt("rate", Object(RATE)),
    opt("bandwidth", Object(BANDWIDTH)),
];
const DNS_CHAOS: &[FieldSpec] = &[
    opt("action", Enum(DNS_ACTIONS)),
    opt("mode", Enum(MODES)),
    opt("value", NumStr),
    opt("patterns", StrList),
    req("selector", Selector),
];
const HTTP_CHAOS: &[FieldSpec] = &[
    req("mode", Enum(MODES)),
    opt("value", NumStr),
    opt("selector", Selector),
    req("target", Enum(HTTP_TARGETS)),
    req("port", Int),
    opt("path", Str),
    opt("method", Str),
    opt("code", Int),
    opt("request_headers", StrMap),
    opt("abort", Bool),
    opt("delay", Str),
    opt("replace", Object(HTTP_REPLACE)),
    opt("patch", Object(HTTP_PATCH)),
];
const STRESS_CHAOS: &[FieldSpec] = &[
    req("mode", Enum(MODES)),
    opt("value", NumStr),
    opt("stressors", Object(STRESSORS)),
    opt("stressngStressors", Str),
    opt("containerNames", StrList),
    req("selector", Selector),
];
const IO_CHAOS: &[FieldSpec] = &[
    req("action", Enum(IO_ACTIONS)),
    req("mode", Enum(MODES)),
    opt("selector", Selector),
    opt("value", NumStr),
    req("volumePath", Str),
    opt("path", Str),
    opt("methods", StrList),
    opt("percent", Int),
    opt("containerNames", StrList),
    opt("delay", Str),
    opt("errno", Int),
    opt("attr", Object(ATTR)),
    opt("mistake", Object(MISTAKE)),
];
const TIME_CHAOS: &[FieldSpec] = &[
    req("timeOffset", Str),
    opt("clockIds", StrList),
    req("mode", Enum(MODES)),
    opt("value", NumStr),
    opt("containerNames", StrList),
    req("selector", Selector),
];

#[derive(Debug, Clone, Copy)]
pub struct FaultParamSchema {
    pub kind: FaultKind,
    pub fields: &'static [FieldSpec],
}

impl FaultParamSchema {
    pub fn required_fields(&self) -> Vec<&'static str> {
        self.fields.iter().filter(|f| f.required).map(|f| f.name).collect()
    }

    pub fn field(&self, name: &str) -> Option<&'static FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }
}

pub fn schema(kind: FaultKind) -> FaultParamSchema {
    let fields = match kind {
        FaultKind::PodChaos => POD_CHAOS,
        FaultKind::NetworkChaos => NETWORK_CHAOS,
        FaultKind::DnsChaos => DNS_CHAOS,
        FaultKind::HttpChaos => HTTP_CHAOS,
        FaultKind::StressChaos => STRESS_CHAOS,
        FaultKind::IoChaos => IO_CHAOS,
        FaultKind::TimeChaos => TIME_CHAOS,
    };
    FaultParamSchema { kind, fields }
}

pub fn schemas() -> Vec<FaultParamSchema> {
    FaultKind::ALL.into_iter().map(schema).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected {}, found {}", self.field, self.expected, self.found)
    }
}

fn violation(field: &str, expected: impl Into<String>, found: impl Into<String>) -> Violation {
    Violation {
        field: field.to_string(),
        expected: expected.into(),
        found: found.into(),
    }
}

struct Checker {
    violations: Vec<Violation>,
    warnings: Vec<String>,
}

fn path(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Checker {
    fn object(&mut self, prefix: &str, map: &Map<String, Value>, fields: &[FieldSpec]) {
        for spec in fields {
            let p = path(prefix, spec.name);
            match map.get(spec.name) {
                None | Some(Value::Null) if spec.required => {
                    self.violations.push(violation(&p, "a value (required)", "nothing"));
                }
                None | Some(Value::Null) => {}
                Some(v) => self.value(&p, v, spec.ty),
            }
        }
        for key in map.keys() {
            if !fields.iter().any(|f| f.name == key) {
                self.warnings
                    .push(format!("unknown field {} ignored", path(prefix, key)));
            }
        }
    }

    fn value(&mut self, p: &str, v: &Value, ty: FieldType) {
        match ty {
            Str => {
                if !v.is_string() {
                    self.violations.push(violation(p, "a string", v.to_string()));
                }
            }
            NumStr => {
                if !(v.is_string() || v.is_number()) {
                    self.violations.push(violation(p, "a numeric string", v.to_string()));
                }
            }
            Int => {
                if !(v.is_i64() || v.is_u64()) {
                    self.violations.push(violation(p, "an integer", v.to_string()));
                }
            }
            Bool => {
                if !v.is_boolean() {
                    self.violations.push(violation(p, "a boolean", v.to_string()));
                }
            }
            StrList => match v.as_array() {
                Some(items) if items.iter().all(Value::is_string) => {}
                _ => self.violations.push(violation(p, "a list of strings", v.to_string())),
            },
            StrMap => match v.as_object() {
                Some(m) if m.values().all(Value::is_string) => {}
                _ => self
                    .violations
                    .push(violation(p, "a string-to-string map", v.to_string())),
            },
            StrTable => {
                let ok = v.as_array().is_some_and(|rows| {
                    rows.iter()
                        .all(|r| r.as_array().is_some_and(|cells| cells.iter().all(Value::is_string)))
                });
                if !ok {
                    self.violations
                        .push(violation(p, "a list of string lists", v.to_string()));
                }
            }
            Enum(options) => match v.as_str() {
                Some(s) if options.contains(&s) => {}
                _ => self
                    .violations
                    .push(violation(p, format!("one of {}", options.join(", ")), v.to_string())),
            },
            Selector => self.selector(p, v),
            Object(fields) => match v.as_object() {
                Some(m) => self.object(p, m, fields),
                None => self.violations.push(violation(p, "an object", v.to_string())),
            },
        }
    }

    fn selector(&mut self, p: &str, v: &Value) {
        const SELECTOR: &[FieldSpec] = &[
            opt("namespaces", StrList),
            opt("labelSelectors", StrMap),
            opt("expressionSelectors", Str),
            opt("annotationSelectors", StrMap),
            opt("fieldSelectors", StrMap),
            opt("podPhaseSelectors", StrList),
            opt("nodeSelectors", StrMap),
            opt("nodes", StrList),
            opt("pods", Str),
        ];
        let Some(map) = v.as_object() else {
            self.violations.push(violation(p, "a selector object", v.to_string()));
            return;
        };
        let dimensions = map
            .iter()
            .filter(|(k, val)| {
                SELECTOR.iter().any(|f| f.name == k.as_str())
                    && !matches!(val, Value::Null)
                    && val.as_array().is_none_or(|a| !a.is_empty())
                    && val.as_object().is_none_or(|o| !o.is_empty())
            })
            .count();
        if dimensions == 0 {
            self.violations
                .push(violation(p, "at least one selection dimension", v.to_string()));
        }
        for (key, val) in map {
            let fp = path(p, key);
            match key.as_str() {
                "expressionSelectors" => self.expressions(&fp, val),
                "pods" => {
                    let ok = val.as_object().is_some_and(|m| {
                        m.values()
                            .all(|names| names.as_array().is_some_and(|a| a.iter().all(Value::is_string)))
                    });
                    if !ok {
                        self.violations
                            .push(violation(&fp, "a map of namespace to pod names", val.to_string()));
                    }
                }
                "podPhaseSelectors" => {
                    self.value(&fp, val, StrList);
                    for phase in val.as_array().into_iter().flatten() {
                        if let Some(s) = phase.as_str() {
                            if !POD_PHASES.contains(&s) {
                                self.violations.push(violation(
                                    &fp,
                                    format!("phases from {}", POD_PHASES.join(", ")),
                                    phase.to_string(),
                                ));
                            }
                        }
                    }
                }
                k => match SELECTOR.iter().find(|f| f.name == k) {
                    Some(spec) => self.value(&fp, val, spec.ty),
                    None => self.warnings.push(format!("unknown field {fp} ignored")),
                },
            }
        }
    }

    fn expressions(&mut self, p: &str, v: &Value) {
        let Some(items) = v.as_array() else {
            self.violations
                .push(violation(p, "a list of expressions", v.to_string()));
            return;
        };
        const EXPR: &[FieldSpec] = &[
            req("key", Str),
            req("operator", Enum(EXPRESSION_OPERATORS)),
            opt("values", StrList),
        ];
        for (i, item) in items.iter().enumerate() {
            let ip = format!("{p}[{i}]");
            match item.as_object() {
                Some(m) => self.object(&ip, m, EXPR),
                None => self
                    .violations
                    .push(violation(&ip, "an expression object", item.to_string())),
            }
        }
    }
}

fn as_int(v: Option<&Value>) -> Option<i64> {
    match v? {
        Value::Number(n) => n.as_i64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn conditional(kind: FaultKind, p: &Map<String, Value>, out: &mut Vec<Violation>) {
    let action = p.get("action").and_then(Value::as_str);
    let has = |k: &str| p.get(k).is_some_and(|v| !v.is_null());
    let need = |out: &mut Vec<Violation>, cond: bool, field: &str, why: &str| {
        if cond && !has(field) {
            out.push(violation(field, format!("a value ({why})"), "nothing"));
        }
    };
    match kind {
        FaultKind::PodChaos => {
            if action == Some("pod-failure") {
                out.push(violation(
                    "action",
                    "pod-kill or container-kill (pod-failure is not supported)",
                    "\"pod-failure\"",
                ));
            }
            need(
                out,
                action == Some("container-kill"),
                "containerNames",
                "required for container-kill",
            );
        }
        FaultKind::NetworkChaos => {
            need(out, action == Some("delay"), "delay", "required for delay");
            need(out, action == Some("bandwidth"), "bandwidth", "required for bandwidth");
        }
        FaultKind::StressChaos => {
            if !has("stressors") && !has("stressngStressors") {
                out.push(violation("stressors", "stressors or stressngStressors", "nothing"));
            }
            if let Some(load) = p
                .get("stressors")
                .and_then(|s| s.pointer("/cpu/load"))
                .and_then(Value::as_i64)
            {
                if !(0..=100).contains(&load) {
                    out.push(violation("stressors.cpu.load", "0..=100", load.to_string()));
                }
            }
        }
        FaultKind::IoChaos => {
            need(out, action == Some("latency"), "delay", "required for latency");
            need(out, action == Some("fault"), "errno", "required for fault");
            need(out, action == Some("attrOverride"), "attr", "required for attrOverride");
            need(out, action == Some("mistake"), "mistake", "required for mistake");
            if let Some(pct) = p.get("percent").and_then(Value::as_i64) {
                if !(0..=100).contains(&pct) {
                    out.push(violation("percent", "0..=100", pct.to_string()));
                }
            }
        }
        _ => {}
    }
    if kind == FaultKind::NetworkChaos {
        if let Some(target) = p.get("target").and_then(Value::as_object) {
            mode_value("target.", target, out);
        }
    }
    mode_value("", p, out);
}

fn mode_value(prefix: &str, p: &Map<String, Value>, out: &mut Vec<Violation>) {
    let field = format!("{prefix}value");
    match p.get("mode").and_then(Value::as_str) {
        Some("fixed") => match p.get("value") {
            None => out.push(violation(&field, "a pod count (required for mode fixed)", "nothing")),
            Some(v) if as_int(Some(v)).is_none_or(|n| n < 1) => {
                out.push(violation(&field, "a positive integer string", v.to_string()))
            }
            _ => {}
        },
        Some(m @ ("fixed-percent" | "random-max-percent")) => match p.get("value") {
            None => out.push(violation(
                &field,
                format!("a percentage (required for mode {m})"),
                "nothing",
            )),
            Some(v) if as_int(Some(v)).is_none_or(|n| !(0..=100).contains(&n)) => {
                out.push(violation(&field, "an integer string in 0..=100", v.to_string()))
            }
            _ => {}
        },
        _ => {}
    }
}

/// Validates a fault against its kind's schema. Ok carries warnings about unknown fields.
pub fn validate_fault(fault: &Fault) -> Result<Vec<String>, Vec<Violation>> {
    let params = strip_duration(&fault.params);
    let mut checker = Checker {
        violations: Vec::new(),
        warnings: Vec::new(),
    };
    checker.object("", &params, schema(fault.kind).fields);
    conditional(fault.kind, &params, &mut checker.violations);
    if checker.violations.is_empty() {
        Ok(checker.warnings)
    } else {
        let mut seen = BTreeSet::new();
        checker
            .violations
            .retain(|v| seen.insert((v.field.clone(), v.expected.clone())));
        Err(checker.violations)
    }
}

/// Removes a top-level `duration`; the workflow deadline bounds the injection instead.
pub fn strip_duration(params: &Map<String, Value>) -> Map<String, Value> {
    let mut out = params.clone();
    out.remove("duration");
    out
}

fn normalize(map: &Map<String, Value>, fields: &[FieldSpec]) -> Map<String, Value> {
    let mut out = Map::new();
    for (k, v) in map {
        let v = match fields.iter().find(|f| f.name == k).map(|f| f.ty) {
            Some(NumStr) => match v {
                Value::Number(n) => Value::String(n.to_string()),
                other => other.clone(),
            },
            Some(Object(inner)) => match v {
                Value::Object(m) => Value::Object(normalize(m, inner)),
                other => other.clone(),
            },
            Some(Selector) => match v {
                Value::Object(m) => Value::Object(
                    m.iter()
                        .filter(|(_, val)| {
                            !val.is_null()
                                && val.as_array().is_none_or(|a| !a.is_empty())
                                && val.as_object().is_none_or(|o| !o.is_empty())
                        })
                        .map(|(k, v)| (k.clone(), v.clone()))
                        .collect(),
                ),
                other => other.clone(),
            },
            _ => v.clone(),
        };
        if !v.is_null() {
            out.insert(k.clone(), v);
        }
    }
    out
}

/// Renders the failure-node body: `(template key, body)` with sorted keys and Chaos Mesh quoting.
pub fn render_fault_body(fault: &Fault) -> Result<(&'static str, Value), Vec<Violation>> {
    validate_fault(fault)?;
    let params = strip_duration(&fault.params);
    let body = normalize(&params, schema(fault.kind).fields);
    Ok((fault.kind.template_key(), Value::Object(body)))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseFaultError {
    #[error("unknown fault templateType {0:?}")]
    UnknownKind(String),
    #[error("failure template {0:?} has no {1} body")]
    MissingBody(String, &'static str),
}

/// Reads a failure template (`templateType` + lower-camel body) back into a fault.
pub fn parse_fault_template(template: &Value, name_id: u32) -> Result<Fault, ParseFaultError> {
    let ty = template.get("templateType").and_then(Value::as_str).unwrap_or_default();
    let kind = FaultKind::parse(ty).ok_or_else(|| ParseFaultError::UnknownKind(ty.into()))?;
    let name = template.get("name").and_then(Value::as_str).unwrap_or_default();
    let body = template
        .get(kind.template_key())
        .cloned()
        .ok_or_else(|| ParseFaultError::MissingBody(name.into(), kind.template_key()))?;
    Ok(Fault::new(kind, name_id, body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn fault(kind: FaultKind, params: Value) -> Fault {
        Fault::new(kind, 0, params)
    }

    fn nginx_selector() -> Value {
        json!({"namespaces": ["default"], "labelSelectors": {"app": "example"}})
    }

    #[test]
    fn seven_schemas_without_duration() {
        let all = schemas();
        assert_eq!(all.len(), 7);
        for s in &all {
            assert!(s.field("duration").is_none(), "{:?}", s.kind);
        }
        assert_eq!(
            schema(FaultKind::PodChaos).required_fields(),
            vec!["action", "mode", "selector"]
        );
        assert_eq!(schema(FaultKind::DnsChaos).required_fields(), vec!["selector"]);
        assert_eq!(
            schema(FaultKind::HttpChaos).required_fields(),
            vec!["mode", "target", "port"]
        );
        assert_eq!(
            schema(FaultKind::TimeChaos).required_fields(),
            vec!["timeOffset", "mode", "selector"]
        );
        assert_eq!(
            schema(FaultKind::IoChaos).required_fields(),
            vec!["action", "mode", "volumePath"]
        );
    }

    #[test]
    fn pod_kill_validates() {
        let f = fault(
            FaultKind::PodChaos,
            json!({"action": "pod-kill", "mode": "one", "selector": nginx_selector()}),
        );
        assert_eq!(validate_fault(&f), Ok(vec![]));
    }

    #[test]
    fn pod_failure_rejected() {
        let f = fault(
            FaultKind::PodChaos,
            json!({"action": "pod-failure", "mode": "one", "selector": nginx_selector()}),
        );
        let v = validate_fault(&f).unwrap_err();
        assert!(v.iter().any(|v| v.field == "action" && v.found.contains("pod-failure")));
    }

    #[test]
    fn container_kill_needs_container_names() {
        let f = fault(
            FaultKind::PodChaos,
            json!({"action": "container-kill", "mode": "one", "selector": nginx_selector()}),
        );
        let v = validate_fault(&f).unwrap_err();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "containerNames");
    }

    #[test]
    fn percent_modes_need_value() {
        for mode in ["fixed", "fixed-percent", "random-max-percent"] {
            let f = fault(
                FaultKind::PodChaos,
                json!({"action": "pod-kill", "mode": mode, "selector": nginx_selector()}),
            );
            let v = validate_fault(&f).unwrap_err();
            assert_eq!(v[0].field, "value", "{mode}");
        }
        let f = fault(
            FaultKind::PodChaos,
            json!({"action": "pod-kill", "mode": "fixed-percent", "value": "50", "selector": nginx_selector()}),
        );
        assert!(validate_fault(&f).is_ok());
    }

    #[test]
    fn enum_violation_names_field() {
        let f = fault(
            FaultKind::PodChaos,
            json!({"action": "pod-kill", "mode": "sometimes", "selector": nginx_selector()}),
        );
        let v = validate_fault(&f).unwrap_err();
        assert_eq!(v[0].field, "mode");
        assert!(v[0].expected.contains("fixed-percent"));
        assert_eq!(v[0].found, "\"sometimes\"");
    }

    #[test]
    fn sockshop_stress_validates() {
        let f = fault(
            FaultKind::StressChaos,
            json!({
                "mode": "all",
                "selector": {"namespaces": ["sock-shop"], "labelSelectors": {"name": "carts-db"}},
                "stressors": {"cpu": {"workers": 2, "load": 80}},
                "containerNames": ["carts-db"]
            }),
        );
        assert_eq!(validate_fault(&f), Ok(vec![]));
    }

    #[test]
    fn empty_selector_rejected() {
        let f = fault(
            FaultKind::PodChaos,
            json!({"action": "pod-kill", "mode": "one", "selector": {"namespaces": []}}),
        );
        assert!(validate_fault(&f).is_err());
    }

    #[test]
    fn unknown_fields_warn() {
        let f = fault(
            FaultKind::PodChaos,
            json!({"action": "pod-kill", "mode": "one", "selector": nginx_selector(), "gracePeriod": 0}),
        );
        let w = validate_fault(&f).unwrap();
        assert_eq!(w, vec!["unknown field gracePeriod ignored".to_string()]);
    }

    #[test]
    fn io_chaos_conditional_fields() {
        let base = json!({"action": "latency", "mode": "one", "volumePath": "/data",
            "selector": nginx_selector(), "delay": "100ms"});
        assert!(validate_fault(&fault(FaultKind::IoChaos, base)).is_ok());
        let attr = json!({"action": "attrOverride", "mode": "one", "volumePath": "/data",
            "selector": nginx_selector()});
        let v = validate_fault(&fault(FaultKind::IoChaos, attr)).unwrap_err();
        assert_eq!(v[0].field, "attr");
        let mistake = json!({"action": "mistake", "mode": "one", "volumePath": "/data",
            "mistake": {"filling": "zero", "maxOccurrences": 1, "maxLength": 10}});
        assert!(validate_fault(&fault(FaultKind::IoChaos, mistake)).is_ok());
    }

    #[test]
    fn strip_duration_removes_only_duration() {
        let p = json!({"action": "pod-kill", "duration": "10s"});
        let stripped = strip_duration(p.as_object().unwrap());
        assert_eq!(Value::Object(stripped.clone()), json!({"action": "pod-kill"}));
        assert_eq!(strip_duration(&stripped), stripped);
        assert!(strip_duration(&Map::new()).is_empty());
    }

    #[test]
    fn render_quotes_numeric_strings() {
        let f = fault(
            FaultKind::NetworkChaos,
            json!({
                "action": "delay", "mode": "all", "selector": nginx_selector(),
                "direction": "to", "device": "eth0",
                "delay": {"latency": "100ms", "jitter": "10ms", "correlation": 50},
                "target": {"mode": "all", "selector": nginx_selector()},
                "duration": "20s"
            }),
        );
        let (key, body) = render_fault_body(&f).unwrap();
        assert_eq!(key, "networkChaos");
        assert_eq!(body["delay"]["correlation"], json!("50"));
        assert!(body.get("duration").is_none());
    }
}
