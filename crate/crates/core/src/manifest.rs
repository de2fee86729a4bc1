//! Skaffold project loading, manifest indexing, reconfiguration and versioned workspaces.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const SKAFFOLD_FILE: &str = "skaffold.yaml";

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("skaffold config not found in {0}")]
    SkaffoldNotFound(String),
    #[error("skaffold config {file}: {reason}")]
    Skaffold { file: String, reason: String },
    #[error("manifest {0} listed in skaffold config cannot be read")]
    Unresolvable(String),
    #[error("manifest {file} does not parse: {reason}")]
    Unparseable { file: String, reason: String },
    #[error("manifest {file} lacks {field}")]
    MissingField { file: String, field: &'static str },
    #[error("cannot {mode} {fname}: {reason}")]
    Action {
        mode: ReconfigMode,
        fname: String,
        reason: String,
    },
    #[error("several actions target {0}")]
    DuplicateTarget(String),
    #[error("workspace version {0} already exists")]
    VersionExists(u32),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("archive {path}: {reason}")]
    Archive { path: String, reason: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ManifestError + '_ {
    move |source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One Kubernetes object from a manifest file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDoc {
    pub api_version: String,
    pub kind: String,
    pub name: String,
    pub namespace: String,
    pub labels: BTreeMap<String, String>,
    pub body: Value,
}

fn string_map(v: Option<&Value>) -> BTreeMap<String, String> {
    v.and_then(Value::as_object)
        .map(|m| {
            m.iter()
                .map(|(k, v)| {
                    let s = match v {
                        Value::String(s) => s.clone(),
                        other => other.to_string(),
                    };
                    (k.clone(), s)
                })
                .collect()
        })
        .unwrap_or_default()
}

impl ManifestDoc {
    pub fn from_value(body: Value, file: &str) -> Result<Self, ManifestError> {
        let field = |ptr: &str, name: &'static str| {
            body.pointer(ptr)
                .and_then(Value::as_str)
                .map(str::to_string)
                .ok_or(ManifestError::MissingField {
                    file: file.to_string(),
                    field: name,
                })
        };
        let api_version = field("/apiVersion", "apiVersion")?;
        let kind = field("/kind", "kind")?;
        let name = field("/metadata/name", "metadata.name")?;
        let namespace = body
            .pointer("/metadata/namespace")
            .and_then(Value::as_str)
            .unwrap_or("default")
            .to_string();
        let labels = string_map(body.pointer("/metadata/labels"));
        Ok(ManifestDoc {
            api_version,
            kind,
            name,
            namespace,
            labels,
            body,
        })
    }

    pub fn replicas(&self) -> Option<u64> {
        match self.kind.as_str() {
            "Deployment" | "StatefulSet" | "ReplicaSet" => {
                Some(self.body.pointer("/spec/replicas").and_then(Value::as_u64).unwrap_or(1))
            }
            _ => None,
        }
    }

    /// Labels stamped on pods: the pod's own labels, or a workload's template labels.
    pub fn pod_labels(&self) -> BTreeMap<String, String> {
        match self.kind.as_str() {
            "Pod" => self.labels.clone(),
            _ => string_map(self.body.pointer("/spec/template/metadata/labels")),
        }
    }

    /// A Service's selector or a workload's matchLabels.
    pub fn selector(&self) -> BTreeMap<String, String> {
        match self.kind.as_str() {
            "Service" => string_map(self.body.pointer("/spec/selector")),
            _ => string_map(self.body.pointer("/spec/selector/matchLabels")),
        }
    }

    pub fn pod_spec(&self) -> Option<&Value> {
        match self.kind.as_str() {
            "Pod" => self.body.get("spec"),
            _ => self.body.pointer("/spec/template/spec"),
        }
    }

    pub fn containers(&self) -> Vec<&Value> {
        self.pod_spec()
            .and_then(|s| s.get("containers"))
            .and_then(Value::as_array)
            .map(|a| a.iter().collect())
            .unwrap_or_default()
    }
}

pub fn parse_documents(text: &str, file: &str) -> Result<Vec<ManifestDoc>, ManifestError> {
    let mut docs = Vec::new();
    for de in serde_yaml::Deserializer::from_str(text) {
        let value = Value::deserialize(de).map_err(|e| ManifestError::Unparseable {
            file: file.to_string(),
            reason: e.to_string(),
        })?;
        if value.is_null() {
            continue;
        }
        if !value.is_object() {
            return Err(ManifestError::Unparseable {
                file: file.to_string(),
                reason: "document is not a mapping".into(),
            });
        }
        docs.push(ManifestDoc::from_value(value, file)?);
    }
    if docs.is_empty() {
        return Err(ManifestError::Unparseable {
            file: file.to_string(),
            reason: "no documents".into(),
        });
    }
    Ok(docs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub text: String,
    pub docs: Vec<ManifestDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkaffoldConfig {
    pub text: String,
    pub manifests: Vec<String>,
    pub warnings: Vec<String>,
}

impl SkaffoldConfig {
    pub fn parse(text: &str) -> Result<Self, ManifestError> {
        let bad = |reason: String| ManifestError::Skaffold {
            file: SKAFFOLD_FILE.into(),
            reason,
        };
        let value: Value = serde_yaml::from_str(text).map_err(|e| bad(e.to_string()))?;
        let raw = value
            .pointer("/manifests/rawYaml")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("manifests.rawYaml is missing".into()))?;
        let manifests = raw
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| bad(format!("rawYaml entry {v} is not a path")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut warnings = Vec::new();
        if let Some(top) = value.as_object() {
            for key in top.keys() {
                if !["apiVersion", "kind", "metadata", "manifests"].contains(&key.as_str()) {
                    warnings.push(format!("skaffold field {key} ignored"));
                }
            }
        }
        if let Some(m) = value.get("manifests").and_then(Value::as_object) {
            for key in m.keys().filter(|k| *k != "rawYaml") {
                warnings.push(format!("skaffold field manifests.{key} ignored"));
            }
        }
        Ok(SkaffoldConfig {
            text: text.to_string(),
            manifests,
            warnings,
        })
    }

    /// Same config with a new manifest list; other fields are kept.
    fn with_manifests(&self, manifests: Vec<String>) -> Result<Self, ManifestError> {
        let mut value: serde_yaml::Value = serde_yaml::from_str(&self.text).map_err(|e| ManifestError::Skaffold {
            file: SKAFFOLD_FILE.into(),
            reason: e.to_string(),
        })?;
        let list =
            serde_yaml::Value::Sequence(manifests.iter().map(|m| serde_yaml::Value::String(m.clone())).collect());
        if let Some(m) = value.get_mut("manifests") {
            m["rawYaml"] = list;
        }
        let text = serde_yaml::to_string(&value).expect("yaml value serializes");
        Ok(SkaffoldConfig {
            text,
            manifests,
            warnings: self.warnings.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSnapshot {
    pub root: PathBuf,
    /// Project folder name, used as an optional prefix in file references.
    pub name: String,
    pub skaffold: SkaffoldConfig,
    pub files: Vec<ManifestFile>,
    pub version: u32,
}

impl SystemSnapshot {
    /// Builds a version-0 snapshot from in-memory file contents.
    pub fn from_sources(
        root: impl Into<PathBuf>,
        name: &str,
        skaffold_text: &str,
        read: impl Fn(&str) -> Option<String>,
    ) -> Result<Self, ManifestError> {
        let skaffold = SkaffoldConfig::parse(skaffold_text)?;
        let mut files = Vec::new();
        for path in &skaffold.manifests {
            let text = read(path).ok_or_else(|| ManifestError::Unresolvable(path.clone()))?;
            let docs = parse_documents(&text, path)?;
            files.push(ManifestFile {
                path: path.clone(),
                text,
                docs,
            });
        }
        Ok(SystemSnapshot {
            root: root.into(),
            name: name.to_string(),
            skaffold,
            files,
            version: 0,
        })
    }

    /// All documents keyed by path, or `path#index` inside multi-document files.
    pub fn manifests(&self) -> Vec<(String, &ManifestDoc)> {
        let mut out = Vec::new();
        for f in &self.files {
            if f.docs.len() == 1 {
                out.push((f.path.clone(), &f.docs[0]));
            } else {
                for (i, d) in f.docs.iter().enumerate() {
                    out.push((format!("{}#{i}", f.path), d));
                }
            }
        }
        out
    }

    pub fn docs(&self) -> impl Iterator<Item = &ManifestDoc> {
        self.files.iter().flat_map(|f| f.docs.iter())
    }

    pub fn file(&self, path: &str) -> Option<&ManifestFile> {
        let path = self.resolve_fname(path);
        self.files.iter().find(|f| f.path == path)
    }

    /// Accepts `pod.yaml` as well as `nginx/pod.yaml` for a project named `nginx`.
    pub fn resolve_fname(&self, fname: &str) -> String {
        let fname = fname.trim_start_matches("./");
        let prefix = format!("{}/", self.name);
        if !self.name.is_empty() && fname.starts_with(&prefix) && !self.files.iter().any(|f| f.path == fname) {
            fname[prefix.len()..].to_string()
        } else {
            fname.to_string()
        }
    }

    pub fn display_path(&self, path: &str) -> String {
        if self.name.is_empty() {
            path.to_string()
        } else {
            format!("{}/{path}", self.name)
        }
    }

    pub fn find(&self, kind: &str, namespace: &str, name: &str) -> Option<(&ManifestFile, &ManifestDoc)> {
        self.files.iter().find_map(|f| {
            f.docs
                .iter()
                .find(|d| d.kind == kind && d.namespace == namespace && d.name == name)
                .map(|d| (f, d))
        })
    }

    pub fn file_of(&self, doc: &ManifestDoc) -> Option<&ManifestFile> {
        self.files.iter().find(|f| f.docs.iter().any(|d| d == doc))
    }
}

fn project_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Loads a project folder (or zip archive) whose root holds `skaffold.yaml`.
pub fn load_project(path: impl AsRef<Path>) -> Result<SystemSnapshot, ManifestError> {
    let path = path.as_ref();
    if path.is_file() {
        return load_archive(path);
    }
    let skaffold_path = path.join(SKAFFOLD_FILE);
    if !skaffold_path.is_file() {
        return Err(ManifestError::SkaffoldNotFound(path.display().to_string()));
    }
    let text = fs::read_to_string(&skaffold_path).map_err(io_err(&skaffold_path))?;
    let name = fs::canonicalize(path)
        .ok()
        .map(|p| project_name(&p))
        .unwrap_or_else(|| project_name(path));
    SystemSnapshot::from_sources(path, &name, &text, |rel| fs::read_to_string(path.join(rel)).ok())
}

#[cfg(feature = "archive")]
fn load_archive(path: &Path) -> Result<SystemSnapshot, ManifestError> {
    use std::io::Read;
    let bad = |reason: String| ManifestError::Archive {
        path: path.display().to_string(),
        reason,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut archive = zip::ZipArchive::new(file).map_err(|e| bad(e.to_string()))?;
    let mut entries = BTreeMap::new();
    for i in 0..archive.len() {
        let mut entry = archive.by_index(i).map_err(|e| bad(e.to_string()))?;
        if entry.is_dir() {
            continue;
        }
        let mut text = String::new();
        if entry.read_to_string(&mut text).is_ok() {
            entries.insert(entry.name().to_string(), text);
        }
    }
    // skaffold.yaml at the archive root, or inside a single top-level folder
    let (prefix, name) = if entries.contains_key(SKAFFOLD_FILE) {
        (String::new(), project_name(path))
    } else {
        let tops: BTreeSet<&str> = entries
            .keys()
            .filter_map(|k| k.split_once('/').map(|(top, _)| top))
            .collect();
        match tops.into_iter().collect::<Vec<_>>().as_slice() {
            [top] if entries.contains_key(&format!("{top}/{SKAFFOLD_FILE}")) => (format!("{top}/"), top.to_string()),
            _ => return Err(ManifestError::SkaffoldNotFound(path.display().to_string())),
        }
    };
    let skaffold = entries[&format!("{prefix}{SKAFFOLD_FILE}")].clone();
    SystemSnapshot::from_sources(path, &name, &skaffold, |rel| {
        entries.get(&format!("{prefix}{rel}")).cloned()
    })
}

#[cfg(not(feature = "archive"))]
fn load_archive(path: &Path) -> Result<SystemSnapshot, ManifestError> {
    Err(ManifestError::Archive {
        path: path.display().to_string(),
        reason: "built without archive support".into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReconfigMode {
    Create,
    Delete,
    Replace,
}

impl std::fmt::Display for ReconfigMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ReconfigMode::Create => "create",
            ReconfigMode::Delete => "delete",
            ReconfigMode::Replace => "replace",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ReconfigAction {
    #[serde(rename = "mod_type", alias = "mode")]
    pub mode: ReconfigMode,
    pub fname: String,
    #[serde(default)]
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub code: Option<String>,
}

/// Applies a batch of create/delete/replace actions, returning the next snapshot version.
pub fn apply_reconfig(snapshot: &SystemSnapshot, actions: &[ReconfigAction]) -> Result<SystemSnapshot, ManifestError> {
    let mut targets = BTreeSet::new();
    for a in actions {
        if !targets.insert(snapshot.resolve_fname(&a.fname)) {
            return Err(ManifestError::DuplicateTarget(a.fname.clone()));
        }
    }
    let mut next = snapshot.clone();
    next.version += 1;
    let mut listing = snapshot.skaffold.manifests.clone();
    let mut listing_changed = false;
    for a in actions {
        let fname = snapshot.resolve_fname(&a.fname);
        let err = |reason: &str| ManifestError::Action {
            mode: a.mode,
            fname: a.fname.clone(),
            reason: reason.to_string(),
        };
        let exists = next.files.iter().position(|f| f.path == fname);
        match (a.mode, exists) {
            (ReconfigMode::Delete, Some(i)) => {
                next.files.remove(i);
                listing.retain(|p| *p != fname);
                listing_changed = true;
            }
            (ReconfigMode::Delete | ReconfigMode::Replace, None) => return Err(err("file does not exist")),
            (ReconfigMode::Create, Some(_)) => return Err(err("file already exists")),
            (ReconfigMode::Replace, Some(i)) => {
                let code = a.code.as_deref().ok_or_else(|| err("no manifest code"))?;
                next.files[i] = ManifestFile {
                    path: fname.clone(),
                    text: code.to_string(),
                    docs: parse_documents(code, &fname)?,
                };
            }
            (ReconfigMode::Create, None) => {
                let code = a.code.as_deref().ok_or_else(|| err("no manifest code"))?;
                next.files.push(ManifestFile {
                    path: fname.clone(),
                    text: code.to_string(),
                    docs: parse_documents(code, &fname)?,
                });
                listing.push(fname.clone());
                listing_changed = true;
            }
        }
    }
    if listing_changed {
        next.skaffold = snapshot.skaffold.with_manifests(listing)?;
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChangeKind {
    Created,
    Deleted,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestDelta {
    pub key: String,
    pub field: String,
    pub old: String,
    pub new: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileChange {
    pub path: String,
    pub change: ChangeKind,
    pub deltas: Vec<ManifestDelta>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeSummary {
    pub files: Vec<FileChange>,
}

impl ChangeSummary {
    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn get(&self, path: &str) -> Option<&FileChange> {
        self.files.iter().find(|f| f.path == path)
    }

    pub fn touches(&self, path: &str) -> bool {
        self.get(path).is_some()
    }
}

fn fmt_labels(labels: &BTreeMap<String, String>) -> String {
    let parts: Vec<String> = labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(","))
}

fn fmt_opt(v: Option<u64>) -> String {
    v.map_or_else(|| "none".to_string(), |n| n.to_string())
}

fn doc_deltas(key: &str, old: &ManifestDoc, new: &ManifestDoc) -> Vec<ManifestDelta> {
    let mut out = Vec::new();
    let mut push = |field: &str, a: String, b: String| {
        if a != b {
            out.push(ManifestDelta {
                key: key.to_string(),
                field: field.to_string(),
                old: a,
                new: b,
            });
        }
    };
    push("kind", old.kind.clone(), new.kind.clone());
    push("name", old.name.clone(), new.name.clone());
    push("namespace", old.namespace.clone(), new.namespace.clone());
    push("labels", fmt_labels(&old.labels), fmt_labels(&new.labels));
    push("replicas", fmt_opt(old.replicas()), fmt_opt(new.replicas()));
    out
}

/// Per-file created/deleted/replaced entries with kind, name, label and replica deltas.
pub fn diff_snapshots(old: &SystemSnapshot, new: &SystemSnapshot) -> ChangeSummary {
    let mut files = Vec::new();
    for f in &old.files {
        match new.files.iter().find(|n| n.path == f.path) {
            None => files.push(FileChange {
                path: f.path.clone(),
                change: ChangeKind::Deleted,
                deltas: Vec::new(),
            }),
            Some(n) if n.text != f.text => {
                let multi = f.docs.len() > 1 || n.docs.len() > 1;
                let mut deltas = Vec::new();
                for i in 0..f.docs.len().max(n.docs.len()) {
                    let key = if multi {
                        format!("{}#{i}", f.path)
                    } else {
                        f.path.clone()
                    };
                    match (f.docs.get(i), n.docs.get(i)) {
                        (Some(a), Some(b)) => deltas.extend(doc_deltas(&key, a, b)),
                        (Some(a), None) => deltas.push(ManifestDelta {
                            key,
                            field: "document".into(),
                            old: format!("{} {}", a.kind, a.name),
                            new: "none".into(),
                        }),
                        (None, Some(b)) => deltas.push(ManifestDelta {
                            key,
                            field: "document".into(),
                            old: "none".into(),
                            new: format!("{} {}", b.kind, b.name),
                        }),
                        (None, None) => {}
                    }
                }
                files.push(FileChange {
                    path: f.path.clone(),
                    change: ChangeKind::Replaced,
                    deltas,
                });
            }
            Some(_) => {}
        }
    }
    for n in &new.files {
        if !old.files.iter().any(|f| f.path == n.path) {
            files.push(FileChange {
                path: n.path.clone(),
                change: ChangeKind::Created,
                deltas: Vec::new(),
            });
        }
    }
    ChangeSummary { files }
}

/// Writes the skaffold config and every listed manifest under `dir`.
pub fn write_snapshot(snapshot: &SystemSnapshot, dir: &Path) -> Result<(), ManifestError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let sk = dir.join(SKAFFOLD_FILE);
    fs::write(&sk, &snapshot.skaffold.text).map_err(io_err(&sk))?;
    for f in &snapshot.files {
        let p = dir.join(&f.path);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&p, &f.text).map_err(io_err(&p))?;
    }
    Ok(())
}

/// A cycle directory holding frozen `inputs_v<N>` copies of each snapshot version.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, ManifestError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Workspace { root })
    }

    pub fn version_dir(&self, version: u32) -> PathBuf {
        self.root.join(format!("inputs_v{version}"))
    }

    /// Freezes a snapshot version on disk; an existing version is never overwritten.
    pub fn persist(&self, snapshot: &SystemSnapshot) -> Result<PathBuf, ManifestError> {
        let dir = self.version_dir(snapshot.version);
        if dir.exists() {
            return Err(ManifestError::VersionExists(snapshot.version));
        }
        write_snapshot(snapshot, &dir)?;
        Ok(dir)
    }

    pub fn write_file(&self, rel: &str, contents: &str) -> Result<PathBuf, ManifestError> {
        let p = self.root.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        fs::write(&p, contents).map_err(io_err(&p))?;
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SKAFFOLD: &str =
        "apiVersion: skaffold/v3\nkind: Config\nmetadata:\n  name: demo\nmanifests:\n  rawYaml:\n    - a.yaml\n";
    const POD: &str =
        "apiVersion: v1\nkind: Pod\nmetadata:\n  name: p\n  labels:\n    app: x\nspec:\n  containers: []\n";

    fn snap() -> SystemSnapshot {
        SystemSnapshot::from_sources("mem", "demo", SKAFFOLD, |p| (p == "a.yaml").then(|| POD.to_string())).unwrap()
    }

    #[test]
    fn namespace_defaults_once() {
        let s = snap();
        let (key, doc) = &s.manifests()[0];
        assert_eq!(key, "a.yaml");
        assert_eq!(doc.namespace, "default");
        assert_eq!(doc.labels["app"], "x");
    }

    #[test]
    fn multi_document_keys() {
        let text = format!("{POD}---\napiVersion: v1\nkind: Service\nmetadata:\n  name: s\n");
        let s = SystemSnapshot::from_sources("mem", "demo", SKAFFOLD, |_| Some(text.clone())).unwrap();
        let keys: Vec<_> = s.manifests().into_iter().map(|(k, _)| k).collect();
        assert_eq!(keys, vec!["a.yaml#0", "a.yaml#1"]);
    }

    #[test]
    fn missing_field_names_file() {
        let err = parse_documents("apiVersion: v1\nkind: Pod\n", "bad.yaml").unwrap_err();
        assert!(err.to_string().contains("bad.yaml"));
        assert!(err.to_string().contains("metadata.name"));
    }

    #[test]
    fn create_and_delete_rewrite_listing() {
        let s = snap();
        let created = apply_reconfig(
            &s,
            &[ReconfigAction {
                mode: ReconfigMode::Create,
                fname: "b.yaml".into(),
                explanation: String::new(),
                code: Some(POD.replace("name: p", "name: q")),
            }],
        )
        .unwrap();
        assert_eq!(created.version, 1);
        assert_eq!(created.skaffold.manifests, vec!["a.yaml", "b.yaml"]);
        assert_eq!(
            SkaffoldConfig::parse(&created.skaffold.text).unwrap().manifests.len(),
            2
        );
        let deleted = apply_reconfig(
            &created,
            &[ReconfigAction {
                mode: ReconfigMode::Delete,
                fname: "demo/a.yaml".into(),
                explanation: String::new(),
                code: None,
            }],
        )
        .unwrap();
        assert_eq!(deleted.skaffold.manifests, vec!["b.yaml"]);
        let d = diff_snapshots(&s, &deleted);
        assert_eq!(d.files.len(), 2);
    }

    #[test]
    fn precondition_violations() {
        let s = snap();
        let del = ReconfigAction {
            mode: ReconfigMode::Delete,
            fname: "missing.yaml".into(),
            explanation: String::new(),
            code: None,
        };
        assert!(apply_reconfig(&s, &[del]).is_err());
        let create = ReconfigAction {
            mode: ReconfigMode::Create,
            fname: "a.yaml".into(),
            explanation: String::new(),
            code: Some(POD.into()),
        };
        assert!(apply_reconfig(&s, &[create]).is_err());
        let bad = ReconfigAction {
            mode: ReconfigMode::Replace,
            fname: "a.yaml".into(),
            explanation: String::new(),
            code: Some("kind: Pod\n".into()),
        };
        assert!(apply_reconfig(&s, &[bad]).is_err());
    }

    #[test]
    fn empty_batch_is_identity() {
        let s = snap();
        let n = apply_reconfig(&s, &[]).unwrap();
        assert_eq!(n.version, 1);
        assert_eq!(n.files, s.files);
        assert_eq!(n.skaffold, s.skaffold);
        assert!(diff_snapshots(&s, &n).is_empty());
    }

    #[test]
    fn action_json_uses_mod_type() {
        let a: ReconfigAction =
            serde_json::from_str(r#"{"mod_type": "replace", "fname": "a.yaml", "explanation": "x", "code": "y"}"#)
                .unwrap();
        assert_eq!(a.mode, ReconfigMode::Replace);
    }
}
