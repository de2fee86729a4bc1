//! Structured-output schemas, the prefill convention and the output parser.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::faults::{schema as fault_schema, FieldSpec, FieldType, MODES};
use crate::model::FaultKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    String,
    Integer,
    Number,
    Boolean,
    Object,
    Array,
    Enum,
    /// A string or a number.
    Scalar,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaField {
    #[serde(default)]
    pub name: String,
    pub kind: FieldKind,
    #[serde(default = "yes")]
    pub required: bool,
    /// Allowed values for `enum`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    /// Known members of an `object`; unknown members are accepted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<SchemaField>,
    /// Element shape of an `array`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Box<SchemaField>>,
}

impl SchemaField {
    pub fn new(name: &str, kind: FieldKind) -> Self {
        SchemaField {
            name: name.into(),
            kind,
            required: true,
            values: Vec::new(),
            fields: Vec::new(),
            items: None,
        }
    }

    fn describe(&self) -> Value {
        let mut m = Map::new();
        let kind: Value = match self.kind {
            FieldKind::String | FieldKind::Enum => "string".into(),
            FieldKind::Integer => "integer".into(),
            FieldKind::Number => "number".into(),
            FieldKind::Boolean => "boolean".into(),
            FieldKind::Object => "object".into(),
            FieldKind::Array => "array".into(),
            FieldKind::Scalar => vec!["string", "number"].into(),
        };
        m.insert("type".into(), kind);
        if !self.values.is_empty() {
            m.insert("enum".into(), self.values.clone().into());
        }
        if !self.fields.is_empty() {
            m.insert(
                "properties".into(),
                Value::Object(self.fields.iter().map(|f| (f.name.clone(), f.describe())).collect()),
            );
            let req: Vec<Value> = self
                .fields
                .iter()
                .filter(|f| f.required)
                .map(|f| f.name.clone().into())
                .collect();
            m.insert("required".into(), req.into());
        }
        if let Some(items) = &self.items {
            m.insert("items".into(), items.describe());
        }
        Value::Object(m)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutputSchema {
    pub fields: Vec<SchemaField>,
}

impl OutputSchema {
    pub fn new(fields: Vec<SchemaField>) -> Self {
        OutputSchema { fields }
    }

    pub fn first_field(&self) -> Option<&str> {
        self.fields.first().map(|f| f.name.as_str())
    }

    /// JSON-schema text shown to the model.
    pub fn describe(&self) -> String {
        let root = SchemaField {
            fields: self.fields.clone(),
            ..SchemaField::new("", FieldKind::Object)
        };
        serde_json::to_string(&root.describe()).expect("schema serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OutputError {
    #[error("schema has no fields")]
    EmptySchema,
    #[error("output is not valid JSON: {0}")]
    Decode(String),
    #[error("missing field {0}")]
    MissingField(String),
    #[error("field {field}: {value} is not one of {allowed}")]
    EnumViolation {
        field: String,
        value: String,
        allowed: String,
    },
    #[error("field {field}: expected {expected}, found {found}")]
    WrongKind {
        field: String,
        expected: &'static str,
        found: String,
    },
}

/// The assistant-turn opener `{"<first_field>":`.
pub fn prefill_for(schema: &OutputSchema) -> Result<String, OutputError> {
    schema
        .first_field()
        .map(|f| format!("{{\"{f}\":"))
        .ok_or(OutputError::EmptySchema)
}

fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

fn kind_name(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Bool(_) => "a boolean".into(),
        Value::Number(_) => "a number".into(),
        Value::String(s) => format!("the string {s:?}"),
        Value::Array(_) => "an array".into(),
        Value::Object(_) => "an object".into(),
    }
}

fn path(prefix: &str, name: &str) -> String {
    match (prefix.is_empty(), name.is_empty()) {
        (true, _) => name.to_string(),
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}.{name}"),
    }
}

fn check(at: &str, v: &Value, f: &SchemaField, errors: &mut Vec<OutputError>) {
    let wrong = |expected: &'static str| OutputError::WrongKind {
        field: at.to_string(),
        expected,
        found: kind_name(v),
    };
    match f.kind {
        FieldKind::String if !v.is_string() => errors.push(wrong("a string")),
        FieldKind::Integer if !(v.is_i64() || v.is_u64()) => errors.push(wrong("an integer")),
        FieldKind::Number if !v.is_number() => errors.push(wrong("a number")),
        FieldKind::Boolean if !v.is_boolean() => errors.push(wrong("a boolean")),
        FieldKind::Scalar if !(v.is_string() || v.is_number()) => errors.push(wrong("a string or number")),
        FieldKind::Enum => match v.as_str() {
            Some(s) if f.values.iter().any(|a| a == s) => {}
            _ => errors.push(OutputError::EnumViolation {
                field: at.to_string(),
                value: v.to_string(),
                allowed: f.values.join(", "),
            }),
        },
        FieldKind::Object => match v.as_object() {
            Some(m) => check_object(at, m, &f.fields, errors),
            None => errors.push(wrong("an object")),
        },
        FieldKind::Array => match v.as_array() {
            Some(items) => {
                if let Some(shape) = &f.items {
                    for (i, item) in items.iter().enumerate() {
                        check(&format!("{at}[{i}]"), item, shape, errors);
                    }
                }
            }
            None => errors.push(wrong("an array")),
        },
        _ => {}
    }
}

fn check_object(prefix: &str, m: &Map<String, Value>, fields: &[SchemaField], errors: &mut Vec<OutputError>) {
    for f in fields {
        let at = path(prefix, &f.name);
        match m.get(&f.name) {
            None | Some(Value::Null) if f.required => errors.push(OutputError::MissingField(at)),
            None | Some(Value::Null) => {}
            Some(v) => check(&at, v, f, errors),
        }
    }
}

/// All schema violations in a decoded value.
pub fn schema_errors(value: &Value, schema: &OutputSchema) -> Vec<OutputError> {
    let mut errors = Vec::new();
    match value.as_object() {
        Some(m) => check_object("", m, &schema.fields, &mut errors),
        None => errors.push(OutputError::Decode(format!(
            "expected an object, found {}",
            kind_name(value)
        ))),
    }
    errors
}

/// Decodes a reply, reattaching the prefill when the reply starts inside the object.
pub fn parse_structured_output(text: &str, schema: &OutputSchema) -> Result<Value, OutputError> {
    let body = strip_fences(text);
    let prefill = prefill_for(schema)?;
    let full = if body.starts_with('{') {
        body.to_string()
    } else {
        format!("{prefill}{body}")
    };
    let mut stream = serde_json::Deserializer::from_str(&full).into_iter::<Value>();
    let value = match stream.next() {
        Some(Ok(v)) => v,
        Some(Err(e)) => return Err(OutputError::Decode(e.to_string())),
        None => return Err(OutputError::Decode("empty reply".into())),
    };
    match schema_errors(&value, schema).into_iter().next() {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

fn from_fault_field(spec: &FieldSpec) -> SchemaField {
    let mut f = SchemaField::new(spec.name, FieldKind::String);
    f.required = spec.required;
    match spec.ty {
        FieldType::Str => {}
        FieldType::NumStr => f.kind = FieldKind::Scalar,
        FieldType::Int => f.kind = FieldKind::Integer,
        FieldType::Bool => f.kind = FieldKind::Boolean,
        FieldType::StrList => {
            f.kind = FieldKind::Array;
            f.items = Some(Box::new(SchemaField::new("", FieldKind::String)));
        }
        FieldType::StrTable => f.kind = FieldKind::Array,
        FieldType::StrMap | FieldType::Selector => f.kind = FieldKind::Object,
        FieldType::Enum(values) => {
            f.kind = FieldKind::Enum;
            f.values = values.iter().map(|s| s.to_string()).collect();
        }
        FieldType::Object(inner) => {
            f.kind = FieldKind::Object;
            f.fields = inner.iter().map(from_fault_field).collect();
        }
    }
    f
}

/// Output schema of the fault-detailing agent for one kind: `thought` then typed `params`.
pub fn fault_output_schema(kind: FaultKind) -> OutputSchema {
    let params = SchemaField {
        fields: fault_schema(kind).fields.iter().map(from_fault_field).collect(),
        ..SchemaField::new("params", FieldKind::Object)
    };
    OutputSchema::new(vec![SchemaField::new("thought", FieldKind::String), params])
}

/// Parameter guide for one fault kind, generated from the catalog.
pub fn fault_guide(kind: FaultKind) -> String {
    let s = fault_schema(kind);
    let mut out = format!("Parameters for {kind}:\n");
    fn line(out: &mut String, indent: usize, f: &FieldSpec) {
        let ty = match f.ty {
            FieldType::Str => "string".to_string(),
            FieldType::NumStr => "number written as a string".to_string(),
            FieldType::Int => "integer".to_string(),
            FieldType::Bool => "boolean".to_string(),
            FieldType::StrList => "list of strings".to_string(),
            FieldType::StrMap => "map of strings".to_string(),
            FieldType::StrTable => "list of string pairs".to_string(),
            FieldType::Enum(v) => format!("one of {}", v.join(", ")),
            FieldType::Selector => "pod selector (namespaces, labelSelectors, ...)".to_string(),
            FieldType::Object(_) => "object".to_string(),
        };
        let req = if f.required { "required" } else { "optional" };
        out.push_str(&format!("{}- {} ({req}): {ty}\n", "  ".repeat(indent), f.name));
        if let FieldType::Object(inner) = f.ty {
            for g in inner {
                line(out, indent + 1, g);
            }
        }
    }
    for f in s.fields {
        line(&mut out, 0, f);
    }
    if s.field("mode").is_some() {
        out.push_str(&format!(
            "Modes {} need a value: a pod count for fixed, a percentage otherwise.\n",
            MODES[2..].join(", ")
        ));
    }
    out
}

impl fmt::Display for OutputSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.describe())
    }
}
