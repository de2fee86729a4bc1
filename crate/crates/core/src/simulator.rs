//! Tick-based execution of a compiled workflow against a modelled cluster.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::compiler::{ExperimentPlan, NodeBody, NodeType, Stage, WorkflowNode};
use crate::duration::Duration;
use crate::manifest::SystemSnapshot;
use crate::model::{
    parse_service_url, ExpressionSelector, Fault, FaultKind, Metric, ProbeTarget, ResourceKind, SelectorSpec,
    SteadyState, VaCOutcome, VaCSpec,
};
use crate::vac::{evaluate_threshold, Sample, SampleTrace, VacError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("node {0} has no task or fault body to execute")]
    Unresolvable(String),
    #[error("node {node}: {source}")]
    Vac { node: String, source: VacError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Seconds between a Deployment pod being killed and its replacement being created.
    pub restart_delay: u64,
    /// When set, CPU-stressed pods report not-ready.
    pub stress_degrades: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            restart_delay: 3,
            stress_degrades: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ResourceKey {
    pub namespace: String,
    pub kind: String,
    pub name: String,
}

impl ResourceKey {
    pub fn new(namespace: &str, kind: &str, name: &str) -> Self {
        ResourceKey {
            namespace: namespace.into(),
            kind: kind.into(),
            name: name.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PodPhase {
    Running,
    Absent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ResourceState {
    Pod {
        labels: BTreeMap<String, String>,
        phase: PodPhase,
        /// Tick from which the pod reports ready.
        ready_at: u64,
        owner: Option<String>,
        stressed: bool,
    },
    Deployment {
        labels: BTreeMap<String, String>,
        desired_replicas: u64,
        ready_replicas: u64,
        /// Ticks at which replacement pods will be created.
        pending_respawns: Vec<u64>,
        readiness_delay: u64,
    },
    Service {
        selector: BTreeMap<String, String>,
        ports: Vec<u64>,
        latency: bool,
    },
    Inert {
        kind: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub resources: BTreeMap<ResourceKey, ResourceState>,
    pub clock: u64,
    pub warnings: Vec<String>,
    next_pod: u64,
}

fn readiness_delay(doc: &crate::manifest::ManifestDoc) -> u64 {
    doc.containers()
        .iter()
        .filter_map(|c| c.pointer("/readinessProbe/initialDelaySeconds"))
        .filter_map(Value::as_u64)
        .max()
        .unwrap_or(0)
}

/// Models every manifest in the snapshot; workloads start fully ready.
pub fn build_cluster(snapshot: &SystemSnapshot) -> ClusterModel {
    let mut cluster = ClusterModel {
        resources: BTreeMap::new(),
        clock: 0,
        warnings: Vec::new(),
        next_pod: 0,
    };
    for doc in snapshot.docs() {
        let key = ResourceKey::new(&doc.namespace, &doc.kind, &doc.name);
        let state = match doc.kind.as_str() {
            "Pod" => ResourceState::Pod {
                labels: doc.labels.clone(),
                phase: PodPhase::Running,
                ready_at: 0,
                owner: None,
                stressed: false,
            },
            "Deployment" => {
                let replicas = doc.replicas().unwrap_or(1);
                let labels = doc.pod_labels();
                for i in 0..replicas {
                    cluster.resources.insert(
                        ResourceKey::new(&doc.namespace, "Pod", &format!("{}-{i}", doc.name)),
                        ResourceState::Pod {
                            labels: labels.clone(),
                            phase: PodPhase::Running,
                            ready_at: 0,
                            owner: Some(doc.name.clone()),
                            stressed: false,
                        },
                    );
                }
                ResourceState::Deployment {
                    labels,
                    desired_replicas: replicas,
                    ready_replicas: replicas,
                    pending_respawns: Vec::new(),
                    readiness_delay: readiness_delay(doc),
                }
            }
            "Service" => ResourceState::Service {
                selector: doc.selector(),
                ports: doc
                    .body
                    .pointer("/spec/ports")
                    .and_then(Value::as_array)
                    .into_iter()
                    .flatten()
                    .filter_map(|p| p.get("port").and_then(Value::as_u64))
                    .collect(),
                latency: false,
            },
            other => {
                if other != "Namespace" {
                    cluster
                        .warnings
                        .push(format!("{other} {}/{} is not modelled", doc.namespace, doc.name));
                }
                ResourceState::Inert { kind: other.into() }
            }
        };
        cluster.resources.insert(key, state);
    }
    cluster
}

fn labels_match(labels: &BTreeMap<String, String>, want: &BTreeMap<String, String>) -> bool {
    want.iter().all(|(k, v)| labels.get(k) == Some(v))
}

fn expression_match(labels: &BTreeMap<String, String>, e: &ExpressionSelector) -> bool {
    let value = labels.get(&e.key);
    match e.operator.as_str() {
        "In" => value.is_some_and(|v| e.values.contains(v)),
        "NotIn" => value.is_none_or(|v| !e.values.contains(v)),
        "Exists" => value.is_some(),
        "DoesNotExist" => value.is_none(),
        _ => false,
    }
}

impl ClusterModel {
    fn pods(&self) -> impl Iterator<Item = (&ResourceKey, &ResourceState)> {
        self.resources.iter().filter(|(_, s)| {
            matches!(
                s,
                ResourceState::Pod {
                    phase: PodPhase::Running,
                    ..
                }
            )
        })
    }

    fn pod_ready(&self, state: &ResourceState, stress_degrades: bool) -> bool {
        match state {
            ResourceState::Pod {
                phase: PodPhase::Running,
                ready_at,
                stressed,
                ..
            } => self.clock >= *ready_at && !(stress_degrades && *stressed),
            _ => false,
        }
    }

    /// Live pods chosen by a fault selector, in name order.
    pub fn select_pods(&self, selector: &SelectorSpec) -> Vec<ResourceKey> {
        self.pods()
            .filter(|(key, state)| {
                let ResourceState::Pod { labels, .. } = state else {
                    return false;
                };
                (selector.namespaces.is_empty() || selector.namespaces.contains(&key.namespace))
                    && labels_match(labels, &selector.label_selectors)
                    && selector
                        .expression_selectors
                        .iter()
                        .all(|e| expression_match(labels, e))
                    && (selector.pods.is_empty()
                        || selector
                            .pods
                            .get(&key.namespace)
                            .is_some_and(|names| names.contains(&key.name)))
            })
            .map(|(k, _)| k.clone())
            .collect()
    }

    fn pods_with(&self, namespace: &str, labels: &BTreeMap<String, String>) -> Vec<&ResourceState> {
        self.pods()
            .filter(|(k, s)| {
                k.namespace == namespace && matches!(s, ResourceState::Pod { labels: l, .. } if labels_match(l, labels))
            })
            .map(|(_, s)| s)
            .collect()
    }

    fn owned_pods(&self, namespace: &str, deployment: &str) -> Vec<&ResourceState> {
        self.pods()
            .filter(|(k, s)| {
                k.namespace == namespace && matches!(s, ResourceState::Pod { owner: Some(o), .. } if o == deployment)
            })
            .map(|(_, s)| s)
            .collect()
    }

    fn service(&self, namespace: &str, name: &str) -> Option<&ResourceState> {
        self.resources.get(&ResourceKey::new(namespace, "Service", name))
    }

    fn kill(&mut self, key: &ResourceKey, restart_delay: u64) {
        let now = self.clock;
        let owner = match self.resources.get_mut(key) {
            Some(ResourceState::Pod { phase, owner, .. }) => {
                *phase = PodPhase::Absent;
                owner.clone()
            }
            _ => None,
        };
        if let Some(owner) = owner {
            if let Some(ResourceState::Deployment { pending_respawns, .. }) =
                self.resources
                    .get_mut(&ResourceKey::new(&key.namespace, "Deployment", &owner))
            {
                pending_respawns.push(now + restart_delay);
            }
        }
    }

    fn respawn(&mut self) {
        let now = self.clock;
        let mut created = Vec::new();
        for (key, state) in self.resources.iter_mut() {
            if let ResourceState::Deployment {
                labels,
                pending_respawns,
                readiness_delay,
                ..
            } = state
            {
                let due = pending_respawns.iter().filter(|t| **t <= now).count();
                pending_respawns.retain(|t| *t > now);
                for _ in 0..due {
                    created.push((key.clone(), labels.clone(), now + *readiness_delay));
                }
            }
        }
        for (dep, labels, ready_at) in created {
            self.next_pod += 1;
            let name = format!("{}-r{}", dep.name, self.next_pod);
            self.resources.insert(
                ResourceKey::new(&dep.namespace, "Pod", &name),
                ResourceState::Pod {
                    labels,
                    phase: PodPhase::Running,
                    ready_at,
                    owner: Some(dep.name.clone()),
                    stressed: false,
                },
            );
        }
    }

    fn refresh_counts(&mut self, opts: &SimOptions) {
        let counts: Vec<(ResourceKey, u64)> = self
            .resources
            .iter()
            .filter(|(_, s)| matches!(s, ResourceState::Deployment { .. }))
            .map(|(k, _)| {
                let ready = self
                    .owned_pods(&k.namespace, &k.name)
                    .into_iter()
                    .filter(|p| self.pod_ready(p, opts.stress_degrades))
                    .count() as u64;
                (k.clone(), ready)
            })
            .collect();
        for (k, ready) in counts {
            if let Some(ResourceState::Deployment {
                ready_replicas,
                desired_replicas,
                ..
            }) = self.resources.get_mut(&k)
            {
                *ready_replicas = ready.min(*desired_replicas);
            }
        }
    }

    /// Ready backends behind a service; 0 when the service does not exist.
    fn service_ready(&self, namespace: &str, name: &str, opts: &SimOptions) -> usize {
        match self.service(namespace, name) {
            Some(ResourceState::Service { selector, .. }) if !selector.is_empty() => self
                .pods_with(namespace, selector)
                .into_iter()
                .filter(|p| self.pod_ready(p, opts.stress_degrades))
                .count(),
            _ => 0,
        }
    }

    /// One sample of a steady state's metric at the current tick.
    pub fn sample(&self, vac: &VaCSpec, metric: Metric, opts: &SimOptions) -> f64 {
        let ready =
            |ps: &[&ResourceState]| ps.iter().filter(|p| self.pod_ready(p, opts.stress_degrades)).count() as f64;
        let (running, ready_n, desired) = match &vac.target {
            ProbeTarget::Url { url } => {
                let up = parse_service_url(url)
                    .map(|u| self.service_ready(&u.namespace, &u.service, opts))
                    .unwrap_or(0);
                return match metric {
                    Metric::RequestFailureRate => f64::from(u8::from(up == 0)),
                    _ => up as f64,
                };
            }
            ProbeTarget::Resource { namespace, kind, name } => match kind {
                ResourceKind::Pod => {
                    let state = self.resources.get(&ResourceKey::new(namespace, "Pod", name));
                    let running = matches!(
                        state,
                        Some(ResourceState::Pod {
                            phase: PodPhase::Running,
                            ..
                        })
                    );
                    let r = state.map(|s| self.pod_ready(s, opts.stress_degrades)).unwrap_or(false);
                    (f64::from(u8::from(running)), f64::from(u8::from(r)), 1.0)
                }
                ResourceKind::Deployment => {
                    let pods = self.owned_pods(namespace, name);
                    let desired = match self.resources.get(&ResourceKey::new(namespace, "Deployment", name)) {
                        Some(ResourceState::Deployment { desired_replicas, .. }) => *desired_replicas as f64,
                        _ => 1.0,
                    };
                    (pods.len() as f64, ready(&pods), desired)
                }
                ResourceKind::Service => {
                    let pods = match self.service(namespace, name) {
                        Some(ResourceState::Service { selector, .. }) if !selector.is_empty() => {
                            self.pods_with(namespace, selector)
                        }
                        _ => Vec::new(),
                    };
                    (pods.len() as f64, ready(&pods), pods.len().max(1) as f64)
                }
            },
            ProbeTarget::Selector { namespace, labels, .. } => {
                let pods = self.pods_with(namespace, labels);
                (pods.len() as f64, ready(&pods), pods.len().max(1) as f64)
            }
        };
        match metric {
            Metric::RunningRatio => running,
            Metric::ReadyRatio => (ready_n / desired).min(1.0),
            Metric::ReadyReplicasMin => ready_n,
            Metric::RequestFailureRate => f64::from(u8::from(ready_n == 0.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Start,
    End,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub t: u64,
    pub node: String,
    pub event: EventKind,
}

/// Execution window of one Task or Failure leaf.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub node: String,
    pub stage: Option<Stage>,
    /// Steady-state name for tasks, `Kind#name_id` for faults.
    pub label: String,
    pub is_fault: bool,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub t: u64,
    pub node: String,
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub events: Vec<TimelineEvent>,
    pub spans: Vec<Span>,
    pub injections: Vec<Injection>,
    pub traces: BTreeMap<String, SampleTrace>,
    pub end: u64,
}

impl Timeline {
    pub fn span(&self, node: &str) -> Option<&Span> {
        self.spans.iter().find(|s| s.node == node)
    }

    /// Human-readable account of what ran when, used as analysis input.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in &self.spans {
            out.push_str(&format!(
                "{:>4}s-{:>4}s {} {}\n",
                s.start,
                s.end,
                if s.is_fault { "inject" } else { "validate" },
                s.node
            ));
        }
        for i in &self.injections {
            let what = if i.targets.is_empty() {
                "no pods".to_string()
            } else {
                i.targets.join(", ")
            };
            out.push_str(&format!("{:>4}s {} hit {what}\n", i.t, i.node));
        }
        out
    }
}

struct Leaf<'a> {
    node: &'a WorkflowNode,
    span: Span,
}

fn label(node: &WorkflowNode) -> String {
    match &node.body {
        NodeBody::Task(t) => t.steady_state.clone(),
        NodeBody::Failure(f) => format!("{}#{}", f.kind, f.name_id),
        _ => node.name.clone(),
    }
}

/// Lays out leaf windows; returns the end tick of `node` started at `t`.
fn layout<'a>(node: &'a WorkflowNode, t: u64, stage: Option<Stage>, out: &mut Vec<Leaf<'a>>) -> u64 {
    let stage = node.stage.or(stage);
    match node.node_type {
        NodeType::Task | NodeType::Failure => {
            let end = t + node.duration.secs();
            out.push(Leaf {
                node,
                span: Span {
                    node: node.name.clone(),
                    stage,
                    label: label(node),
                    is_fault: node.node_type == NodeType::Failure,
                    start: t,
                    end,
                },
            });
            end
        }
        NodeType::Suspend => t + node.duration.secs(),
        NodeType::Serial => {
            let mut now = t;
            for c in &node.children {
                now = layout(c, now, stage, out);
            }
            match node.stage_time {
                Some(st) => now.max(t + st.secs()),
                None => now,
            }
        }
        NodeType::Parallel => node
            .children
            .iter()
            .map(|c| layout(c, t, stage, out))
            .max()
            .unwrap_or(t),
    }
}

fn percent_count(fault: &Fault, n: usize, rng: &mut ChaCha8Rng) -> usize {
    let value = fault
        .params
        .get("value")
        .and_then(|v| match v {
            Value::String(s) => s.trim().parse::<usize>().ok(),
            Value::Number(n) => n.as_u64().map(|n| n as usize),
            _ => None,
        })
        .unwrap_or(100);
    let k = match fault.mode().unwrap_or("one") {
        "all" => n,
        "fixed" => value,
        "fixed-percent" => n * value.min(100) / 100,
        "random-max-percent" => n * rng.gen_range(0..=value.min(100)) / 100,
        _ => 1,
    };
    k.clamp(1, n)
}

fn fault_selector(fault: &Fault) -> Option<SelectorSpec> {
    fault.selector()
}

fn inject(cluster: &mut ClusterModel, node: &str, fault: &Fault, opts: &SimOptions, rng: &mut ChaCha8Rng) -> Injection {
    let t = cluster.clock;
    let Some(selector) = fault_selector(fault) else {
        return Injection {
            t,
            node: node.into(),
            targets: Vec::new(),
            warning: Some("fault has no pod selector; not modelled".into()),
        };
    };
    let matched = cluster.select_pods(&selector);
    if matched.is_empty() {
        return Injection {
            t,
            node: node.into(),
            targets: Vec::new(),
            warning: Some("selector matched no pods".into()),
        };
    }
    let k = percent_count(fault, matched.len(), rng);
    let mut chosen: Vec<usize> = sample(rng, matched.len(), k).into_vec();
    chosen.sort_unstable();
    let chosen: Vec<ResourceKey> = chosen.into_iter().map(|i| matched[i].clone()).collect();
    let action = fault.params.get("action").and_then(Value::as_str);
    match (fault.kind, action) {
        (FaultKind::PodChaos, Some("pod-kill")) => {
            for key in &chosen {
                cluster.kill(key, opts.restart_delay);
            }
        }
        (FaultKind::PodChaos, _) => {
            let ready_at = cluster.clock + opts.restart_delay;
            for key in &chosen {
                if let Some(ResourceState::Pod { ready_at: r, .. }) = cluster.resources.get_mut(key) {
                    *r = (*r).max(ready_at);
                }
            }
        }
        (FaultKind::StressChaos, _) => {
            for key in &chosen {
                if let Some(ResourceState::Pod { stressed, .. }) = cluster.resources.get_mut(key) {
                    *stressed = true;
                }
            }
        }
        (FaultKind::NetworkChaos, _) => {
            let labels: Vec<(String, BTreeMap<String, String>)> = chosen
                .iter()
                .filter_map(|k| match cluster.resources.get(k) {
                    Some(ResourceState::Pod { labels, .. }) => Some((k.namespace.clone(), labels.clone())),
                    _ => None,
                })
                .collect();
            for (key, state) in cluster.resources.iter_mut() {
                if let ResourceState::Service { selector, latency, .. } = state {
                    if !selector.is_empty()
                        && labels
                            .iter()
                            .any(|(ns, l)| *ns == key.namespace && labels_match(l, selector))
                    {
                        *latency = true;
                    }
                }
            }
        }
        _ => {}
    }
    Injection {
        t,
        node: node.into(),
        targets: chosen.iter().map(|k| format!("{}/{}", k.namespace, k.name)).collect(),
        warning: None,
    }
}

fn clear_effects(cluster: &mut ClusterModel, fault: &Fault) {
    match fault.kind {
        FaultKind::StressChaos => {
            for state in cluster.resources.values_mut() {
                if let ResourceState::Pod { stressed, .. } = state {
                    *stressed = false;
                }
            }
        }
        FaultKind::NetworkChaos => {
            for state in cluster.resources.values_mut() {
                if let ResourceState::Service { latency, .. } = state {
                    *latency = false;
                }
            }
        }
        _ => {}
    }
}

/// Runs the workflow tick by tick. Faults and respawns apply before sampling in each tick.
pub fn simulate(
    tree: &WorkflowNode,
    cluster: &ClusterModel,
    seed: u64,
    opts: &SimOptions,
) -> Result<(Timeline, Vec<VaCOutcome>), SimError> {
    let mut leaves = Vec::new();
    let end = layout(tree, 0, None, &mut leaves);
    for leaf in &leaves {
        if !matches!(leaf.node.body, NodeBody::Task(_) | NodeBody::Failure(_)) {
            return Err(SimError::Unresolvable(leaf.node.name.clone()));
        }
    }
    let mut cluster = cluster.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut injections = Vec::new();
    let mut samples: BTreeMap<&str, Vec<Sample>> = BTreeMap::new();
    for t in 0..end {
        cluster.clock = t;
        for leaf in &leaves {
            if let NodeBody::Failure(f) = &leaf.node.body {
                if leaf.span.end == t {
                    clear_effects(&mut cluster, f);
                }
            }
        }
        cluster.respawn();
        for leaf in &leaves {
            if let NodeBody::Failure(f) = &leaf.node.body {
                if leaf.span.start == t && leaf.span.end > t {
                    injections.push(inject(&mut cluster, &leaf.node.name, f, opts, &mut rng));
                }
            }
        }
        cluster.refresh_counts(opts);
        for leaf in &leaves {
            if let NodeBody::Task(task) = &leaf.node.body {
                if leaf.span.start <= t && t < leaf.span.end {
                    let value = cluster.sample(&task.vac, task.threshold.metric, opts);
                    samples.entry(leaf.node.name.as_str()).or_default().push(Sample {
                        t: t - leaf.span.start,
                        value,
                    });
                }
            }
        }
    }
    let mut traces = BTreeMap::new();
    let mut outcomes = Vec::new();
    for leaf in &leaves {
        if let NodeBody::Task(task) = &leaf.node.body {
            let trace = SampleTrace {
                steady_state_name: leaf.node.name.clone(),
                samples: samples.remove(leaf.node.name.as_str()).unwrap_or_default(),
                duration: leaf.node.duration,
            };
            let outcome = evaluate_threshold(&task.threshold, &trace).map_err(|source| SimError::Vac {
                node: leaf.node.name.clone(),
                source,
            })?;
            outcomes.push(outcome);
            traces.insert(leaf.node.name.clone(), trace);
        }
    }
    let mut events: Vec<TimelineEvent> = leaves
        .iter()
        .flat_map(|l| {
            [
                TimelineEvent {
                    t: l.span.start,
                    node: l.span.node.clone(),
                    event: EventKind::Start,
                },
                TimelineEvent {
                    t: l.span.end,
                    node: l.span.node.clone(),
                    event: EventKind::End,
                },
            ]
        })
        .collect();
    events.sort_by_key(|a| (a.t, a.event == EventKind::Start));
    Ok((
        Timeline {
            events,
            spans: leaves.into_iter().map(|l| l.span).collect(),
            injections,
            traces,
            end,
        },
        outcomes,
    ))
}

/// Samples a steady state on the unperturbed cluster.
pub fn inspect_baseline(
    cluster: &ClusterModel,
    steady_state: &SteadyState,
    duration: Duration,
    opts: &SimOptions,
) -> SampleTrace {
    let mut cluster = cluster.clone();
    let samples = (0..duration.secs())
        .map(|t| {
            cluster.clock = t;
            cluster.refresh_counts(opts);
            Sample {
                t,
                value: cluster.sample(&steady_state.vac, steady_state.threshold.metric, opts),
            }
        })
        .collect();
    SampleTrace {
        steady_state_name: steady_state.name.clone(),
        samples,
        duration,
    }
}

/// Checks every leaf window against stage offset + grace and the planned duration.
pub fn timeline_check(timeline: &Timeline, plan: &ExperimentPlan) -> Result<(), Vec<String>> {
    let mut violations = Vec::new();
    for stage in Stage::ALL {
        let offset = plan.stage_offset(stage).secs();
        let sp = plan.stage(stage);
        let mut expected: Vec<(bool, String, u64, u64)> = sp
            .unit_tests
            .iter()
            .map(|t| (false, t.name.clone(), t.grace_period.secs(), t.duration.secs()))
            .chain(sp.fault_injection.iter().map(|f| {
                (
                    true,
                    format!("{}#{}", f.name, f.name_id),
                    f.grace_period.secs(),
                    f.duration.secs(),
                )
            }))
            .map(|(f, l, g, d)| (f, l, offset + g, offset + g + d))
            .collect();
        let mut actual: Vec<(bool, String, u64, u64)> = timeline
            .spans
            .iter()
            .filter(|s| s.stage == Some(stage))
            .map(|s| (s.is_fault, s.label.clone(), s.start, s.end))
            .collect();
        expected.sort();
        actual.sort();
        if expected != actual {
            let e: BTreeSet<_> = expected.iter().collect();
            let a: BTreeSet<_> = actual.iter().collect();
            for missing in e.difference(&a) {
                violations.push(format!(
                    "{stage}: expected {} in [{}, {})",
                    missing.1, missing.2, missing.3
                ));
            }
            for extra in a.difference(&e) {
                violations.push(format!("{stage}: unexpected {} in [{}, {})", extra.1, extra.2, extra.3));
            }
            if violations.is_empty() {
                violations.push(format!("{stage}: duplicate leaf windows differ"));
            }
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn selector(labels: &[(&str, &str)]) -> SelectorSpec {
        SelectorSpec {
            namespaces: vec!["default".into()],
            label_selectors: labels.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            ..Default::default()
        }
    }

    fn cluster_with_pods(n: u64) -> ClusterModel {
        let mut c = ClusterModel {
            resources: BTreeMap::new(),
            clock: 0,
            warnings: Vec::new(),
            next_pod: 0,
        };
        let labels: BTreeMap<String, String> = [("app".to_string(), "web".to_string())].into();
        c.resources.insert(
            ResourceKey::new("default", "Deployment", "web"),
            ResourceState::Deployment {
                labels: labels.clone(),
                desired_replicas: n,
                ready_replicas: n,
                pending_respawns: Vec::new(),
                readiness_delay: 0,
            },
        );
        for i in 0..n {
            c.resources.insert(
                ResourceKey::new("default", "Pod", &format!("web-{i}")),
                ResourceState::Pod {
                    labels: labels.clone(),
                    phase: PodPhase::Running,
                    ready_at: 0,
                    owner: Some("web".into()),
                    stressed: false,
                },
            );
        }
        c
    }

    #[test]
    fn selector_filters_by_labels_and_expressions() {
        let c = cluster_with_pods(2);
        assert_eq!(c.select_pods(&selector(&[("app", "web")])).len(), 2);
        assert!(c.select_pods(&selector(&[("app", "db")])).is_empty());
        let mut s = selector(&[]);
        s.expression_selectors.push(ExpressionSelector {
            key: "app".into(),
            operator: "In".into(),
            values: vec!["web".into()],
        });
        assert_eq!(c.select_pods(&s).len(), 2);
    }

    #[test]
    fn killed_deployment_pod_respawns_after_delay() {
        let mut c = cluster_with_pods(1);
        let opts = SimOptions::default();
        c.kill(&ResourceKey::new("default", "Pod", "web-0"), opts.restart_delay);
        for t in 0..=3 {
            c.clock = t;
            c.respawn();
            c.refresh_counts(&opts);
        }
        let ready = match c.resources.get(&ResourceKey::new("default", "Deployment", "web")) {
            Some(ResourceState::Deployment { ready_replicas, .. }) => *ready_replicas,
            _ => 0,
        };
        assert_eq!(ready, 1);
    }

    #[test]
    fn mode_counts_round_down_with_floor_of_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let f = |mode: &str, value: &str| {
            Fault::new(
                FaultKind::PodChaos,
                0,
                serde_json::json!({"action": "pod-kill", "mode": mode, "value": value}),
            )
        };
        assert_eq!(percent_count(&f("one", ""), 5, &mut rng), 1);
        assert_eq!(percent_count(&f("all", ""), 5, &mut rng), 5);
        assert_eq!(percent_count(&f("fixed", "2"), 5, &mut rng), 2);
        assert_eq!(percent_count(&f("fixed-percent", "50"), 5, &mut rng), 2);
        assert_eq!(percent_count(&f("fixed-percent", "10"), 5, &mut rng), 1);
    }
}
