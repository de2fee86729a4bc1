//! Deterministic rule-based planner.
//!
//! Flags three weakness categories from the manifests, turns them into steady states and a
//! matching fault sequence, and proposes the smallest manifest change that removes the
//! single point of failure behind a failed test. Token usage is approximated by rendering the
//! prompt the LLM planner would have sent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use regex::Regex;
use serde_json::{json, Value};

use super::ledger::{count_tokens, CostLedger, Usage};
use super::planner::{
    history_text, phase_of, plan_text, result_text, steady_states_text, AnalysisInput, Context, Planner, PlannerError,
    SteadyStateDraft, Weakness,
};
use super::prompt::{render_prompt, template};
use super::retry::Attempt;
use crate::compiler::{sanitize_name, ExperimentPlan, FaultItem, StagePlan, UnitTestItem};
use crate::duration::Duration;
use crate::manifest::{ManifestDoc, ReconfigAction, ReconfigMode, SystemSnapshot};
use crate::model::{
    parse_service_url, AnalysisReport, Comparator, FailureScenario, Fault, FaultKind, Hypothesis, ImprovementRecord,
    Metric, ProbeTarget, ResourceKind, SelectorSpec, SteadyState, ThresholdSpec,
};
use crate::vac::{evaluate_threshold, SampleTrace};

/// Deliberate misbehaviour for exercising the cycle's failure paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Sabotage {
    #[default]
    None,
    /// Every drafted scenario uses a fault action the catalog rejects.
    InvalidFault,
    /// Reconfigurations only touch an annotation, so the system never improves.
    IneffectiveReconfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Category {
    ResourcePressure,
    SinglePointOfFailure,
    Availability,
}

/// A steady state the rulebook can propose, with the category that motivated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub category: Category,
    pub draft: SteadyStateDraft,
    pub threshold: ThresholdSpec,
}

#[derive(Debug, Clone, Default)]
pub struct StubPlanner {
    pub sabotage: Sabotage,
    ledger: CostLedger,
    calls: BTreeMap<String, u32>,
}

impl StubPlanner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sabotaged(sabotage: Sabotage) -> Self {
        StubPlanner {
            sabotage,
            ..Self::default()
        }
    }

    /// Calls made so far per planner method.
    pub fn calls(&self) -> &BTreeMap<String, u32> {
        &self.calls
    }

    fn charge(&mut self, id: &str, bindings: &[(&str, String)], output: &Value) {
        *self.calls.entry(id.to_string()).or_default() += 1;
        let Some(t) = template(id) else { return };
        let mut b: BTreeMap<String, String> = t.placeholders().into_iter().map(|p| (p, String::new())).collect();
        for (k, v) in bindings {
            b.insert(k.to_string(), v.clone());
        }
        for condition in t.dynamic.values() {
            b.entry(condition.clone()).or_insert_with(|| "PodChaos".into());
        }
        let input = render_prompt(t, &b)
            .map(|msgs| msgs.iter().map(|m| count_tokens(&m.content)).sum())
            .unwrap_or(0);
        self.ledger.approximate = true;
        self.ledger.record(
            phase_of(id),
            Usage {
                input_tokens: input,
                output_tokens: count_tokens(&output.to_string()),
            },
        );
    }
}

fn is_workload(doc: &ManifestDoc) -> bool {
    doc.kind == "Pod" || doc.replicas().is_some()
}

fn has_resource_requests(doc: &ManifestDoc) -> bool {
    let c = doc.containers();
    !c.is_empty() && c.iter().all(|c| c.pointer("/resources/requests").is_some())
}

fn is_spof(doc: &ManifestDoc) -> bool {
    doc.kind == "Pod" || doc.replicas() == Some(1)
}

fn labels_match(selector: &BTreeMap<String, String>, labels: &BTreeMap<String, String>) -> bool {
    !selector.is_empty() && selector.iter().all(|(k, v)| labels.get(k) == Some(v))
}

/// Workloads whose pods a service routes to.
fn backends<'a>(snapshot: &'a SystemSnapshot, service: &ManifestDoc) -> Vec<&'a ManifestDoc> {
    let selector = service.selector();
    snapshot
        .docs()
        .filter(|d| is_workload(d) && d.namespace == service.namespace)
        .filter(|d| labels_match(&selector, &d.pod_labels()))
        .collect()
}

fn service_url(svc: &ManifestDoc) -> String {
    let port = svc
        .body
        .pointer("/spec/ports/0/port")
        .and_then(Value::as_u64)
        .unwrap_or(80);
    format!("http://{}.{}.svc.cluster.local:{port}", svc.name, svc.namespace)
}

fn resource(doc: &ManifestDoc, kind: ResourceKind) -> ProbeTarget {
    ProbeTarget::Resource {
        namespace: doc.namespace.clone(),
        kind,
        name: doc.name.clone(),
    }
}

fn candidate(
    category: Category,
    name: String,
    description: String,
    target: ProbeTarget,
    threshold: ThresholdSpec,
) -> Candidate {
    Candidate {
        category,
        draft: SteadyStateDraft {
            name,
            description,
            tool: threshold.metric.tool(),
            target,
        },
        threshold,
    }
}

/// Every rulebook steady state, interleaved across categories in priority order.
pub fn candidates(snapshot: &SystemSnapshot) -> Vec<Candidate> {
    let replicas = || ThresholdSpec::new(Metric::ReadyReplicasMin, Comparator::Ge, 1.0);
    let mut pressure = Vec::new();
    let mut spof = Vec::new();
    let mut availability = Vec::new();
    for doc in snapshot.docs() {
        match (doc.kind.as_str(), doc.replicas()) {
            ("Deployment", Some(n)) if n >= 2 && !has_resource_requests(doc) => pressure.push(candidate(
                Category::ResourcePressure,
                format!("{}-replicas", doc.name),
                format!(
                    "At least one {} replica stays ready while its pods compete for CPU.",
                    doc.name
                ),
                resource(doc, ResourceKind::Deployment),
                replicas(),
            )),
            ("Deployment", Some(1)) => spof.push(candidate(
                Category::SinglePointOfFailure,
                format!("{}-replica", doc.name),
                format!("The single {} replica stays ready.", doc.name),
                resource(doc, ResourceKind::Deployment),
                replicas(),
            )),
            ("Pod", _) => spof.push(candidate(
                Category::SinglePointOfFailure,
                format!("{}-running", doc.name),
                format!("Pod {} is running at least 90% of the time.", doc.name),
                resource(doc, ResourceKind::Pod),
                ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9),
            )),
            ("Service", _) if backends(snapshot, doc).iter().any(|d| is_spof(d)) => availability.push(candidate(
                Category::Availability,
                format!("{}-availability", doc.name),
                format!("Requests to {} fail at most 0.1% of the time.", doc.name),
                ProbeTarget::Url { url: service_url(doc) },
                ThresholdSpec::new(Metric::RequestFailureRate, Comparator::Le, 0.001),
            )),
            _ => {}
        }
    }
    let mut lists = [pressure.into_iter(), spof.into_iter(), availability.into_iter()];
    let mut out = Vec::new();
    loop {
        let before = out.len();
        for l in lists.iter_mut() {
            out.extend(l.next());
        }
        if out.len() == before {
            return out;
        }
    }
}

/// A single availability check used when the rulebook flags nothing.
fn fallback(snapshot: &SystemSnapshot) -> Option<Candidate> {
    if let Some(svc) = snapshot.docs().find(|d| d.kind == "Service") {
        return Some(candidate(
            Category::Availability,
            format!("{}-availability", svc.name),
            format!("Requests to {} fail at most 0.1% of the time.", svc.name),
            ProbeTarget::Url { url: service_url(svc) },
            ThresholdSpec::new(Metric::RequestFailureRate, Comparator::Le, 0.001),
        ));
    }
    let w = snapshot.docs().find(|d| is_workload(d))?;
    Some(candidate(
        Category::Availability,
        format!("{}-ready", w.name),
        format!("All {} pods are ready.", w.name),
        resource(
            w,
            if w.kind == "Pod" {
                ResourceKind::Pod
            } else {
                ResourceKind::Deployment
            },
        ),
        ThresholdSpec::new(Metric::ReadyRatio, Comparator::Ge, 0.9),
    ))
}

fn rule_threshold(draft: &SteadyStateDraft) -> ThresholdSpec {
    match &draft.target {
        ProbeTarget::Url { .. } => ThresholdSpec::new(Metric::RequestFailureRate, Comparator::Le, 0.001),
        ProbeTarget::Resource {
            kind: ResourceKind::Deployment,
            ..
        } => ThresholdSpec::new(Metric::ReadyReplicasMin, Comparator::Ge, 1.0),
        _ => ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9),
    }
}

fn weaknesses(snapshot: &SystemSnapshot) -> Vec<Weakness> {
    let mut out = Vec::new();
    for c in candidates(snapshot) {
        let (issue, details) = match c.category {
            Category::ResourcePressure => (
                "Missing resource requests",
                "replicas run without CPU or memory requests",
            ),
            Category::SinglePointOfFailure => (
                "Single point of failure",
                "one pod serves the workload and nothing replaces it quickly",
            ),
            Category::Availability => ("Unavailable service", "the service depends on a single pod"),
        };
        out.push(Weakness {
            issue_name: issue.into(),
            issue_details: format!("{}: {details}", c.draft.name),
            manifests: Vec::new(),
            problematic_config: String::new(),
        });
    }
    out
}

fn summarize_doc(doc: &ManifestDoc) -> String {
    let mut s = format!("{} {}/{}", doc.kind, doc.namespace, doc.name);
    if let Some(n) = doc.replicas() {
        let _ = write!(s, " with {n} replica(s)");
    }
    let names: Vec<&str> = doc
        .containers()
        .iter()
        .filter_map(|c| c.get("name").and_then(Value::as_str))
        .collect();
    if !names.is_empty() {
        let _ = write!(s, ", containers {}", names.join(", "));
    }
    if doc.kind == "Service" {
        let sel: Vec<String> = doc.selector().iter().map(|(k, v)| format!("{k}={v}")).collect();
        let _ = write!(s, ", selecting {}", sel.join(","));
    }
    s
}

/// Total experiment time from phrases like "within 1 minute" or "within 90 seconds".
pub fn total_time_from(instructions: &str) -> Duration {
    let re = Regex::new(r"(?i)within\s+(\d+)\s*(minutes?|mins?|m\b|seconds?|secs?|s\b)").expect("static regex");
    match re.captures(instructions) {
        Some(c) => {
            let n: u64 = c[1].parse().unwrap_or(1);
            if c[2].to_ascii_lowercase().starts_with('m') {
                Duration::from_mins(n)
            } else {
                Duration::from_secs(n)
            }
        }
        None => Duration::from_mins(1),
    }
}

fn pod_selector(doc: &ManifestDoc) -> SelectorSpec {
    SelectorSpec::labels(&doc.namespace, &doc.pod_labels())
}

fn scope(sel: &SelectorSpec) -> BTreeMap<String, String> {
    let mut s = BTreeMap::new();
    if let Some(ns) = sel.namespaces.first() {
        s.insert("namespace".into(), ns.clone());
    }
    let l: Vec<String> = sel.label_selectors.iter().map(|(k, v)| format!("{k}={v}")).collect();
    s.insert("label".into(), l.join(","));
    s
}

/// Workload documents a probe target observes.
fn target_workloads<'a>(snapshot: &'a SystemSnapshot, target: &ProbeTarget) -> Vec<&'a ManifestDoc> {
    match target {
        ProbeTarget::Resource {
            namespace,
            kind: ResourceKind::Service,
            name,
        } => snapshot
            .find("Service", namespace, name)
            .map(|(_, svc)| backends(snapshot, svc))
            .unwrap_or_default(),
        ProbeTarget::Resource { namespace, kind, name } => snapshot
            .find(&format!("{kind:?}"), namespace, name)
            .map(|(_, d)| vec![d])
            .unwrap_or_default(),
        ProbeTarget::Selector { namespace, labels, .. } => snapshot
            .docs()
            .filter(|d| is_workload(d) && &d.namespace == namespace && labels_match(labels, &d.pod_labels()))
            .collect(),
        ProbeTarget::Url { url } => parse_service_url(url)
            .and_then(|u| snapshot.find("Service", &u.namespace, &u.service))
            .map(|(_, svc)| backends(snapshot, svc))
            .unwrap_or_default(),
    }
}

/// Workloads a fault selector reaches.
fn selector_workloads<'a>(snapshot: &'a SystemSnapshot, sel: &SelectorSpec) -> Vec<&'a ManifestDoc> {
    snapshot
        .docs()
        .filter(|d| is_workload(d))
        .filter(|d| sel.namespaces.is_empty() || sel.namespaces.contains(&d.namespace))
        .filter(|d| labels_match(&sel.label_selectors, &d.pod_labels()))
        .collect()
}

fn to_yaml(body: &Value) -> String {
    serde_yaml::to_string(body).expect("manifest serializes")
}

/// Same document set with one document swapped.
fn file_with(snapshot: &SystemSnapshot, path: &str, old: &ManifestDoc, new: &Value) -> String {
    let file = snapshot.file(path).expect("document belongs to a file");
    if file.docs.len() == 1 {
        return to_yaml(new);
    }
    file.docs
        .iter()
        .map(|d| if d == old { to_yaml(new) } else { to_yaml(&d.body) })
        .collect::<Vec<_>>()
        .join("---\n")
}

fn deployment_for_pod(pod: &ManifestDoc) -> (String, Value) {
    let base = pod.name.strip_suffix("-pod").unwrap_or(&pod.name);
    let name = format!("{base}-deployment");
    let mut labels = pod.labels.clone();
    if labels.is_empty() {
        labels.insert("app".into(), base.to_string());
    }
    let mut spec = pod.body.get("spec").cloned().unwrap_or_else(|| json!({}));
    if let Some(m) = spec.as_object_mut() {
        m.remove("restartPolicy");
    }
    let mut metadata = json!({"name": name, "labels": labels});
    if pod.body.pointer("/metadata/namespace").is_some() {
        metadata["namespace"] = json!(pod.namespace);
    }
    let body = json!({
        "apiVersion": "apps/v1",
        "kind": "Deployment",
        "metadata": metadata,
        "spec": {
            "replicas": 3,
            "selector": {"matchLabels": labels},
            "template": {"metadata": {"labels": labels}, "spec": spec},
        },
    });
    (name, body)
}

fn sibling(path: &str, file_name: &str) -> String {
    match path.rsplit_once('/') {
        Some((dir, _)) => format!("{dir}/{file_name}"),
        None => file_name.to_string(),
    }
}

/// Smallest change making each workload survive the loss of one pod.
fn harden(snapshot: &SystemSnapshot, doc: &ManifestDoc) -> Vec<ReconfigAction> {
    let Some(file) = snapshot.file_of(doc) else {
        return Vec::new();
    };
    if doc.kind == "Pod" {
        let (name, body) = deployment_for_pod(doc);
        let explanation = format!(
            "Replace the bare Pod {} with Deployment {name} running 3 replicas so killed pods are recreated.",
            doc.name
        );
        if file.docs.len() == 1 {
            return vec![
                ReconfigAction {
                    mode: ReconfigMode::Delete,
                    fname: file.path.clone(),
                    explanation: format!("Remove the bare Pod {}.", doc.name),
                    code: None,
                },
                ReconfigAction {
                    mode: ReconfigMode::Create,
                    fname: sibling(&file.path, &format!("{name}.yaml")),
                    explanation,
                    code: Some(to_yaml(&body)),
                },
            ];
        }
        return vec![ReconfigAction {
            mode: ReconfigMode::Replace,
            fname: file.path.clone(),
            explanation,
            code: Some(file_with(snapshot, &file.path, doc, &body)),
        }];
    }
    let Some(n) = doc.replicas() else {
        return Vec::new();
    };
    let mut body = doc.body.clone();
    body["spec"]["replicas"] = json!(n + 1);
    vec![ReconfigAction {
        mode: ReconfigMode::Replace,
        fname: file.path.clone(),
        explanation: format!(
            "Raise {} replicas from {n} to {} so one pod loss leaves a ready replica.",
            doc.name,
            n + 1
        ),
        code: Some(file_with(snapshot, &file.path, doc, &body)),
    }]
}

fn annotate(snapshot: &SystemSnapshot, doc: &ManifestDoc, round: usize) -> Vec<ReconfigAction> {
    let Some(file) = snapshot.file_of(doc) else {
        return Vec::new();
    };
    let mut body = doc.body.clone();
    body["metadata"]["annotations"]["chaoscycle/round"] = json!(round.to_string());
    vec![ReconfigAction {
        mode: ReconfigMode::Replace,
        fname: file.path.clone(),
        explanation: format!("Annotate {} (round {round}).", doc.name),
        code: Some(file_with(snapshot, &file.path, doc, &body)),
    }]
}

impl Planner for StubPlanner {
    fn preprocess(&mut self, snapshot: &SystemSnapshot, instructions: &str) -> Result<Context, PlannerError> {
        let mut summaries = Vec::new();
        for (path, doc) in snapshot.manifests() {
            let summary = summarize_doc(doc);
            self.charge(
                "0-0",
                &[("k8s_yaml", doc.body.to_string())],
                &json!({"k8s_summary": summary}),
            );
            summaries.push((snapshot.display_path(&path), summary));
        }
        let weaknesses = weaknesses(snapshot);
        self.charge("0-1", &[], &serde_json::to_value(&weaknesses).unwrap_or_default());
        let application = String::new();
        self.charge("0-2", &[], &json!({"thought": "", "k8s_application": application}));
        let ce_instructions = instructions.trim().to_string();
        self.charge(
            "0-3",
            &[("ce_instructions", ce_instructions.clone())],
            &json!({"ce_instructions": ce_instructions}),
        );
        Ok(Context {
            summaries,
            weaknesses,
            application,
            ce_instructions,
        })
    }

    fn propose_steady_state(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        defined: &[SteadyState],
        _feedback: &[Attempt],
    ) -> Result<Option<SteadyStateDraft>, PlannerError> {
        let taken: BTreeSet<&str> = defined.iter().map(|s| s.name.as_str()).collect();
        let mut pool = candidates(snapshot);
        if pool.is_empty() {
            pool.extend(fallback(snapshot));
        }
        let next = pool
            .into_iter()
            .find(|c| !taken.contains(c.draft.name.as_str()))
            .map(|c| c.draft);
        let bindings = [
            ("user_input", ctx.user_input(snapshot)),
            ("ce_instructions", ctx.ce_instructions.clone()),
            ("predefined_steady_states", steady_states_text(defined)),
        ];
        let id = if defined.is_empty() { "1-0" } else { "1-4" };
        self.charge(id, &bindings, &serde_json::to_value(&next).unwrap_or_default());
        if next.is_some() {
            self.charge("1-1", &bindings, &serde_json::to_value(&next).unwrap_or_default());
        }
        Ok(next)
    }

    fn define_threshold(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        draft: &SteadyStateDraft,
        baselines: &BTreeMap<Metric, SampleTrace>,
        _feedback: &[Attempt],
    ) -> Result<ThresholdSpec, PlannerError> {
        let mut threshold = candidates(snapshot)
            .into_iter()
            .chain(fallback(snapshot))
            .find(|c| c.draft == *draft)
            .map(|c| c.threshold)
            .unwrap_or_else(|| rule_threshold(draft));
        if let Some(trace) = baselines.get(&threshold.metric) {
            let outcome = evaluate_threshold(&threshold, trace).map_err(|e| PlannerError::new(e.to_string()))?;
            if !outcome.passed {
                threshold.value = outcome.measured;
            }
        }
        let summary: String = baselines.values().map(|t| format!("{:?}\n", t.samples)).collect();
        self.charge(
            "1-2",
            &[
                ("user_input", ctx.user_input(snapshot)),
                ("ce_instructions", ctx.ce_instructions.clone()),
                ("steady_state_name", draft.name.clone()),
                ("steady_state_thought", draft.description.clone()),
                ("inspection_summary", summary),
            ],
            &serde_json::to_value(&threshold).unwrap_or_default(),
        );
        Ok(threshold)
    }

    fn draft_scenario(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        steady_states: &[SteadyState],
        _feedback: &[Attempt],
    ) -> Result<FailureScenario, PlannerError> {
        let mut stress = Vec::new();
        let mut kill = Vec::new();
        let mut delay = Vec::new();
        for ss in steady_states {
            let workloads = target_workloads(snapshot, &ss.vac.target);
            match &ss.vac.target {
                ProbeTarget::Url { .. } => delay.extend(workloads.into_iter().map(pod_selector).take(1)),
                _ => {
                    for w in workloads {
                        if w.replicas().unwrap_or(1) >= 2 && !has_resource_requests(w) {
                            stress.push((pod_selector(w), w));
                        } else {
                            kill.push(pod_selector(w));
                        }
                    }
                }
            }
        }
        let mut sequence = Vec::new();
        let group = |kind: FaultKind, params: Vec<(SelectorSpec, Value)>| -> Vec<Fault> {
            params
                .into_iter()
                .enumerate()
                .map(|(i, (sel, p))| {
                    let mut f = Fault::new(kind, i as u32, p);
                    f.scope = scope(&sel);
                    f
                })
                .collect()
        };
        if !stress.is_empty() {
            sequence.push(group(
                FaultKind::StressChaos,
                stress
                    .into_iter()
                    .map(|(sel, w)| {
                        let container = w
                            .containers()
                            .first()
                            .and_then(|c| c.get("name"))
                            .and_then(Value::as_str)
                            .unwrap_or(&w.name)
                            .to_string();
                        let p = json!({
                            "mode": "all",
                            "selector": sel.to_value(),
                            "stressors": {"cpu": {"workers": 2, "load": 80}},
                            "containerNames": [container],
                        });
                        (sel, p)
                    })
                    .collect(),
            ));
        }
        dedup(&mut kill);
        if !kill.is_empty() {
            let action = if self.sabotage == Sabotage::InvalidFault {
                "pod-failure"
            } else {
                "pod-kill"
            };
            sequence.push(group(
                FaultKind::PodChaos,
                kill.into_iter()
                    .map(|sel| {
                        let p = json!({"action": action, "mode": "one", "selector": sel.to_value()});
                        (sel, p)
                    })
                    .collect(),
            ));
        }
        dedup(&mut delay);
        if !delay.is_empty() {
            sequence.push(group(
                FaultKind::NetworkChaos,
                delay
                    .into_iter()
                    .map(|sel| {
                        let p = json!({
                            "action": "delay",
                            "mode": "all",
                            "selector": sel.to_value(),
                            "direction": "to",
                            "device": "eth0",
                            "delay": {"latency": "100ms", "jitter": "10ms", "correlation": "50"},
                            "target": {"mode": "all", "selector": sel.to_value()},
                        });
                        (sel, p)
                    })
                    .collect(),
            ));
        }
        if sequence.is_empty() {
            return Err(PlannerError::new(
                "no workload behind the steady states to inject faults into",
            ));
        }
        let scenario = FailureScenario {
            event: "Sudden loss of capacity".into(),
            description: "Faults hit the workloads behind each steady state in turn.".into(),
            sequence,
        };
        let bindings = [
            ("user_input", ctx.user_input(snapshot)),
            ("ce_instructions", ctx.ce_instructions.clone()),
            ("steady_states", steady_states_text(steady_states)),
        ];
        self.charge("1-5", &bindings, &serde_json::to_value(&scenario).unwrap_or_default());
        for f in scenario.faults() {
            self.charge(
                "1-6",
                &[
                    ("refined_fault_type", f.kind.as_str().to_string()),
                    ("user_input", ctx.user_input(snapshot)),
                ],
                &Value::Object(f.params.clone()),
            );
        }
        Ok(scenario)
    }

    fn plan_experiment(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        hypothesis: &Hypothesis,
        _feedback: &[Attempt],
    ) -> Result<ExperimentPlan, PlannerError> {
        let total = total_time_from(&ctx.ce_instructions).secs();
        if total < 3 {
            return Err(PlannerError::new(format!(
                "total time {total}s cannot hold three stages"
            )));
        }
        let side = total / 3;
        let middle = total - 2 * side;
        let tests = |secs: u64| -> Vec<UnitTestItem> {
            hypothesis
                .steady_states
                .iter()
                .map(|s| UnitTestItem {
                    name: s.name.clone(),
                    grace_period: Duration::ZERO,
                    duration: Duration::from_secs(secs),
                })
                .collect()
        };
        let groups = hypothesis.scenario.sequence.len() as u64;
        let slot = middle / groups.max(1);
        let mut faults = Vec::new();
        for (g, group) in hypothesis.scenario.sequence.iter().enumerate() {
            let g = g as u64;
            let grace = g * slot;
            let duration = if g + 1 == groups { middle - grace } else { slot };
            for f in group {
                faults.push(FaultItem {
                    name: f.kind,
                    name_id: f.name_id,
                    grace_period: Duration::from_secs(grace),
                    duration: Duration::from_secs(duration.max(1)),
                });
            }
        }
        let plan = ExperimentPlan {
            total_time: Duration::from_secs(total),
            pre_validation_time: Duration::from_secs(side),
            fault_injection_time: Duration::from_secs(middle),
            post_validation_time: Duration::from_secs(side),
            pre_validation: StagePlan {
                thought: "Confirm every steady state holds before injecting faults.".into(),
                unit_tests: tests(side),
                fault_injection: Vec::new(),
            },
            fault_injection: StagePlan {
                thought: "Run the fault groups back to back while checking every steady state.".into(),
                unit_tests: tests(middle),
                fault_injection: faults,
            },
            post_validation: StagePlan {
                thought: "Check that every steady state has recovered.".into(),
                unit_tests: tests(side),
                fault_injection: Vec::new(),
            },
            summary: String::new(),
        };
        let mut plan = plan;
        plan.summary = plan_text(&plan);
        let bindings = [
            ("user_input", ctx.user_input(snapshot)),
            ("ce_instructions", ctx.ce_instructions.clone()),
            ("steady_states", steady_states_text(&hypothesis.steady_states)),
        ];
        for id in ["2-0", "2-1", "2-2"] {
            self.charge(id, &bindings, &serde_json::to_value(&plan).unwrap_or_default());
        }
        Ok(plan)
    }

    fn analyze(&mut self, ctx: &Context, input: &AnalysisInput) -> Result<AnalysisReport, PlannerError> {
        let failed: Vec<String> = input.failed.iter().map(|o| o.name.clone()).collect();
        let mut report = String::new();
        let _ = writeln!(
            report,
            "{} of {} unit tests failed.",
            failed.len(),
            input.result.outcomes.len()
        );
        for ss in &input.hypothesis.steady_states {
            let key = sanitize_name(&ss.name);
            let hits: Vec<&str> = failed
                .iter()
                .filter(|n| n.ends_with(&key))
                .map(String::as_str)
                .collect();
            if hits.is_empty() {
                continue;
            }
            let workloads: Vec<String> = target_workloads(&input.snapshot, &ss.vac.target)
                .iter()
                .map(|w| match w.replicas() {
                    Some(n) => format!("{} {} ({n} replica(s))", w.kind, w.name),
                    None => format!("bare {} {}", w.kind, w.name),
                })
                .collect();
            let _ = writeln!(
                report,
                "- {} failed in [{}]. It depends on {}, which cannot absorb the loss of a pod.",
                ss.name,
                hits.join(", "),
                if workloads.is_empty() {
                    "no workload".into()
                } else {
                    workloads.join(", ")
                }
            );
        }
        let pre_only = failed.iter().all(|n| n.starts_with("pre-"));
        if pre_only && !failed.is_empty() {
            report
                .push_str("Only pre-validation failed, so the system was not in its steady state before the faults.\n");
        }
        self.charge(
            "3-0",
            &[
                ("user_input", ctx.user_input(&input.snapshot)),
                ("ce_instructions", ctx.ce_instructions.clone()),
                ("experiment_result", result_text(&input.result)),
            ],
            &json!({"report": report}),
        );
        Ok(AnalysisReport { report, failed })
    }

    fn reconfigure(
        &mut self,
        ctx: &Context,
        input: &AnalysisInput,
        report: &AnalysisReport,
        _feedback: &[Attempt],
    ) -> Result<Vec<ReconfigAction>, PlannerError> {
        let snapshot = &input.snapshot;
        let mut docs: Vec<&ManifestDoc> = Vec::new();
        for ss in &input.hypothesis.steady_states {
            let key = sanitize_name(&ss.name);
            if !report.failed.iter().any(|n| n.ends_with(&key)) {
                continue;
            }
            for w in target_workloads(snapshot, &ss.vac.target) {
                if !docs.contains(&w) {
                    docs.push(w);
                }
            }
        }
        let mut actions: Vec<ReconfigAction> = Vec::new();
        for doc in docs {
            let batch = match self.sabotage {
                Sabotage::IneffectiveReconfig => annotate(snapshot, doc, input.history.len() + 1),
                _ if is_spof(doc) => harden(snapshot, doc),
                _ => Vec::new(),
            };
            for a in batch {
                if !actions
                    .iter()
                    .any(|b| snapshot.resolve_fname(&b.fname) == snapshot.resolve_fname(&a.fname))
                {
                    actions.push(a);
                }
            }
        }
        self.charge(
            "4-0",
            &[
                ("user_input", ctx.user_input(snapshot)),
                ("ce_instructions", ctx.ce_instructions.clone()),
                ("analysis_report", report.report.clone()),
                ("improvement_history", history_text(&input.history)),
            ],
            &serde_json::to_value(&actions).unwrap_or_default(),
        );
        if actions.is_empty() {
            return Err(PlannerError::new("no single point of failure behind the failed tests"));
        }
        Ok(actions)
    }

    fn replan_fault(
        &mut self,
        old: &SystemSnapshot,
        new: &SystemSnapshot,
        _plan: &ExperimentPlan,
        fault: &Fault,
        _feedback: &[Attempt],
    ) -> Result<Option<SelectorSpec>, PlannerError> {
        let Some(sel) = fault.selector() else {
            return Ok(None);
        };
        let out = if !selector_workloads(new, &sel).is_empty() {
            None
        } else {
            let lost: Vec<BTreeMap<String, String>> =
                selector_workloads(old, &sel).iter().map(|d| d.pod_labels()).collect();
            new.docs()
                .filter(|d| is_workload(d))
                .find(|d| {
                    let labels = d.pod_labels();
                    lost.iter().any(|l| l.iter().any(|(k, v)| labels.get(k) == Some(v)))
                })
                .map(pod_selector)
        };
        self.charge(
            "2-3",
            &[("curr_fault_injection", Value::Object(fault.params.clone()).to_string())],
            &json!({"selector": out}),
        );
        Ok(out)
    }

    fn replan_vac(
        &mut self,
        old: &SystemSnapshot,
        new: &SystemSnapshot,
        steady_state: &SteadyState,
        _feedback: &[Attempt],
    ) -> Result<Option<ProbeTarget>, PlannerError> {
        let out = match &steady_state.vac.target {
            ProbeTarget::Resource { namespace, kind, name } if kind != &ResourceKind::Service => {
                let kind_name = format!("{kind:?}");
                if new.find(&kind_name, namespace, name).is_some() {
                    None
                } else {
                    old.find(&kind_name, namespace, name)
                        .map(|(_, d)| ProbeTarget::Selector {
                            namespace: namespace.clone(),
                            kind: ResourceKind::Pod,
                            labels: d.pod_labels(),
                        })
                }
            }
            _ => None,
        };
        self.charge(
            "2-4",
            &[("steady_state_name", steady_state.name.clone())],
            &json!({"requires_change": out.is_some(), "target": out}),
        );
        Ok(out)
    }

    fn summarize(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        hypothesis: &Hypothesis,
        plan: &ExperimentPlan,
        history: &[ImprovementRecord],
    ) -> Result<String, PlannerError> {
        let mut s = String::new();
        let _ = writeln!(s, "Steady states:\n{}", steady_states_text(&hypothesis.steady_states));
        let kinds: Vec<&str> = hypothesis.scenario.faults().map(|f| f.kind.as_str()).collect();
        let _ = writeln!(s, "Fault sequence: {}", kinds.join(" -> "));
        let _ = writeln!(s, "\nExperiment plan:\n{}", plan_text(plan));
        let _ = writeln!(s, "Improvements:\n{}", history_text(history));
        let _ = writeln!(s, "Final manifests: {}", snapshot.skaffold.manifests.join(", "));
        self.charge(
            "EX",
            &[("user_input", ctx.user_input(snapshot))],
            &json!({"summary": s}),
        );
        Ok(s)
    }

    fn ledger(&self) -> &CostLedger {
        &self.ledger
    }
}

fn dedup(v: &mut Vec<SelectorSpec>) {
    let mut seen = Vec::new();
    v.retain(|s| {
        if seen.contains(s) {
            false
        } else {
            seen.push(s.clone());
            true
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_total_time() {
        assert_eq!(
            total_time_from("must be completed within 1 minute."),
            Duration::from_secs(60)
        );
        assert_eq!(total_time_from("within 90 seconds"), Duration::from_secs(90));
        assert_eq!(total_time_from("no limit"), Duration::from_secs(60));
    }

    #[test]
    fn pod_becomes_deployment() {
        let pod = ManifestDoc::from_value(
            json!({
                "apiVersion": "v1", "kind": "Pod",
                "metadata": {"name": "example-pod", "labels": {"app": "example"}},
                "spec": {"restartPolicy": "Never", "containers": [{"name": "c", "image": "nginx"}]}
            }),
            "pod.yaml",
        )
        .unwrap();
        let (name, body) = deployment_for_pod(&pod);
        assert_eq!(name, "example-deployment");
        assert_eq!(body["spec"]["replicas"], 3);
        assert_eq!(body["spec"]["selector"]["matchLabels"]["app"], "example");
        assert!(body["spec"]["template"]["spec"].get("restartPolicy").is_none());
    }
}
