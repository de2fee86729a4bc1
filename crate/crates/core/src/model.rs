//! Shared domain types of a chaos-engineering cycle and the hypothesis contract.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::duration::Duration;
use crate::manifest::ReconfigAction;
use crate::vac::SampleTrace;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("invalid steady-state name {0:?} (lowercase alphanumerics and hyphens)")]
    BadName(String),
    #[error("duplicate steady state {0:?}")]
    DuplicateSteadyState(String),
    #[error("hypothesis needs between 1 and {max} steady states, got {got}")]
    SteadyStateCount { got: usize, max: usize },
    #[error("threshold value {value} out of range for {metric}")]
    ThresholdRange { metric: Metric, value: f64 },
    #[error("steady state {name}: {reason}")]
    Baseline { name: String, reason: String },
    #[error("duplicate fault ({kind}, {name_id}) in scenario")]
    DuplicateFault { kind: FaultKind, name_id: u32 },
    #[error("fault {kind} #{name_id} is invalid: {reason}")]
    InvalidFault {
        kind: FaultKind,
        name_id: u32,
        reason: String,
    },
    #[error("scenario has no faults")]
    EmptyScenario,
    #[error("invalid probe target: {0}")]
    Target(String),
    #[error("result has no outcome for scheduled run {0:?}")]
    MissingOutcome(String),
}

pub fn is_identifier(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    ReadyRatio,
    RunningRatio,
    RequestFailureRate,
    ReadyReplicasMin,
}

impl Metric {
    pub fn is_ratio(self) -> bool {
        !matches!(self, Metric::ReadyReplicasMin)
    }

    pub fn tool(self) -> VacTool {
        match self {
            Metric::RequestFailureRate => VacTool::LoadTest,
            _ => VacTool::ClusterApi,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::ReadyRatio => "ready-ratio",
            Metric::RunningRatio => "running-ratio",
            Metric::RequestFailureRate => "request-failure-rate",
            Metric::ReadyReplicasMin => "ready-replicas-min",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = ">=", alias = "≥")]
    Ge,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = "==", alias = "=")]
    Eq,
}

impl Comparator {
    pub fn holds(self, measured: f64, value: f64) -> bool {
        match self {
            Comparator::Ge => measured >= value,
            Comparator::Le => measured <= value,
            Comparator::Eq => measured == value,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Ge => ">=",
            Comparator::Le => "<=",
            Comparator::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub metric: Metric,
    pub comparator: Comparator,
    pub value: f64,
    #[serde(default)]
    pub description: String,
}

impl ThresholdSpec {
    pub fn new(metric: Metric, comparator: Comparator, value: f64) -> Self {
        ThresholdSpec {
            metric,
            comparator,
            value,
            description: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = if self.metric.is_ratio() {
            (0.0..=1.0).contains(&self.value)
        } else {
            self.value >= 0.0 && self.value.fract() == 0.0
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::ThresholdRange {
                metric: self.metric,
                value: self.value,
            })
        }
    }

    pub fn holds(&self, measured: f64) -> bool {
        self.comparator.holds(measured, self.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VacTool {
    #[serde(rename = "cluster-api", alias = "k8s")]
    ClusterApi,
    #[serde(rename = "load-test", alias = "k6")]
    LoadTest,
}

impl VacTool {
    pub fn extension(self) -> &'static str {
        match self {
            VacTool::ClusterApi => "py",
            VacTool::LoadTest => "js",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ResourceKind {
    Pod,
    Deployment,
    Service,
}

impl ResourceKind {
    pub fn parse(kind: &str) -> Option<Self> {
        match kind {
            "Pod" => Some(ResourceKind::Pod),
            "Deployment" => Some(ResourceKind::Deployment),
            "Service" => Some(ResourceKind::Service),
            _ => None,
        }
    }
}

/// What a VaC probe observes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "kebab-case")]
pub enum ProbeTarget {
    Resource {
        namespace: String,
        kind: ResourceKind,
        name: String,
    },
    Selector {
        namespace: String,
        kind: ResourceKind,
        labels: BTreeMap<String, String>,
    },
    Url {
        url: String,
    },
}

/// Parsed `http://<service>.<namespace>.svc.cluster.local[:port][/path]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceUrl {
    pub service: String,
    pub namespace: String,
    pub port: Option<u16>,
    pub path: String,
}

pub fn parse_service_url(url: &str) -> Option<ServiceUrl> {
    let re = regex::Regex::new(
        r"^https?://([a-z0-9]([-a-z0-9]*[a-z0-9])?)\.([a-z0-9]([-a-z0-9]*[a-z0-9])?)\.svc\.cluster\.local(:(\d+))?(/.*)?$",
    )
    .expect("static regex");
    let caps = re.captures(url)?;
    Some(ServiceUrl {
        service: caps[1].to_string(),
        namespace: caps[3].to_string(),
        port: match caps.get(6) {
            Some(p) => Some(p.as_str().parse().ok()?),
            None => None,
        },
        path: caps.get(7).map_or("/", |m| m.as_str()).to_string(),
    })
}

impl ProbeTarget {
    pub fn namespace(&self) -> Option<&str> {
        match self {
            ProbeTarget::Resource { namespace, .. } | ProbeTarget::Selector { namespace, .. } => Some(namespace),
            ProbeTarget::Url { .. } => None,
        }
    }

    pub fn validate(&self, tool: VacTool) -> Result<(), ModelError> {
        match (tool, self) {
            (VacTool::LoadTest, ProbeTarget::Url { url }) => parse_service_url(url).map(|_| ()).ok_or_else(|| {
                ModelError::Target(format!(
                    "{url:?} is not of the form http://<service>.<namespace>.svc.cluster.local[:port]"
                ))
            }),
            (VacTool::LoadTest, _) => Err(ModelError::Target("load-test probes need a request URL".into())),
            (VacTool::ClusterApi, ProbeTarget::Url { .. }) => Err(ModelError::Target(
                "cluster-api probes need a resource, not a URL".into(),
            )),
            (VacTool::ClusterApi, ProbeTarget::Selector { labels, .. }) if labels.is_empty() => {
                Err(ModelError::Target("empty label selector".into()))
            }
            (VacTool::ClusterApi, _) => Ok(()),
        }
    }
}

fn default_interval() -> Duration {
    Duration::from_secs(1)
}

fn default_vus() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaCSpec {
    pub tool: VacTool,
    pub target: ProbeTarget,
    #[serde(default = "default_interval")]
    pub sample_interval: Duration,
    pub script_path: String,
    #[serde(default)]
    pub version: u32,
    #[serde(default = "default_vus")]
    pub vus: u32,
}

impl VaCSpec {
    pub fn new(tool: VacTool, target: ProbeTarget, script_path: impl Into<String>) -> Self {
        VaCSpec {
            tool,
            target,
            sample_interval: default_interval(),
            script_path: script_path.into(),
            version: 0,
            vus: 1,
        }
    }
}

/// Script file name for a steady state's VaC at a given revision.
pub fn script_file_name(steady_state: &str, version: u32, tool: VacTool) -> String {
    format!("unittest_{steady_state}_mod{version}.{}", tool.extension())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub threshold: ThresholdSpec,
    pub vac: VaCSpec,
    /// Trace observed on the unperturbed system when the state was defined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<SampleTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    PodChaos,
    NetworkChaos,
    #[serde(rename = "DNSChaos")]
    DnsChaos,
    #[serde(rename = "HTTPChaos")]
    HttpChaos,
    StressChaos,
    #[serde(rename = "IOChaos")]
    IoChaos,
    TimeChaos,
}

impl FaultKind {
    pub const ALL: [FaultKind; 7] = [
        FaultKind::PodChaos,
        FaultKind::NetworkChaos,
        FaultKind::DnsChaos,
        FaultKind::HttpChaos,
        FaultKind::StressChaos,
        FaultKind::IoChaos,
        FaultKind::TimeChaos,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::PodChaos => "PodChaos",
            FaultKind::NetworkChaos => "NetworkChaos",
            FaultKind::DnsChaos => "DNSChaos",
            FaultKind::HttpChaos => "HTTPChaos",
            FaultKind::StressChaos => "StressChaos",
            FaultKind::IoChaos => "IOChaos",
            FaultKind::TimeChaos => "TimeChaos",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Body key of a failure node: the kind with a lowercase first letter.
    pub fn template_key(self) -> &'static str {
        match self {
            FaultKind::PodChaos => "podChaos",
            FaultKind::NetworkChaos => "networkChaos",
            FaultKind::DnsChaos => "dnsChaos",
            FaultKind::HttpChaos => "httpChaos",
            FaultKind::StressChaos => "stressChaos",
            FaultKind::IoChaos => "ioChaos",
            FaultKind::TimeChaos => "timeChaos",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpressionSelector {
    pub key: String,
    pub operator: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
}

/// Chaos Mesh pod selector.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SelectorSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub namespaces: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub label_selectors: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub expression_selectors: Vec<ExpressionSelector>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub annotation_selectors: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub field_selectors: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pod_phase_selectors: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub node_selectors: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub pods: BTreeMap<String, Vec<String>>,
}

impl SelectorSpec {
    pub fn labels(namespace: &str, labels: &BTreeMap<String, String>) -> Self {
        SelectorSpec {
            namespaces: vec![namespace.to_string()],
            label_selectors: labels.clone(),
            ..Default::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self == &SelectorSpec::default()
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self).expect("selector serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    #[serde(rename = "name")]
    pub kind: FaultKind,
    #[serde(default)]
    pub name_id: u32,
    #[serde(default)]
    pub params: Map<String, Value>,
    /// Coarse scope drafted with the scenario, e.g. {"namespace": "default", "label": "app=example"}.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scope: BTreeMap<String, String>,
}

impl Fault {
    pub fn new(kind: FaultKind, name_id: u32, params: Value) -> Self {
        let params = match params {
            Value::Object(map) => map,
            _ => Map::new(),
        };
        Fault {
            kind,
            name_id,
            params,
            scope: BTreeMap::new(),
        }
    }

    /// The Chaos Mesh selector carried in the parameters, if any.
    pub fn selector(&self) -> Option<SelectorSpec> {
        self.params
            .get("selector")
            .and_then(|v| serde_json::from_value(v.clone()).ok())
    }

    pub fn mode(&self) -> Option<&str> {
        self.params.get("mode").and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureScenario {
    #[serde(default)]
    pub event: String,
    #[serde(default)]
    pub description: String,
    /// Outer list is injection order; inner lists are injected together.
    pub sequence: Vec<Vec<Fault>>,
}

impl FailureScenario {
    pub fn faults(&self) -> impl Iterator<Item = &Fault> {
        self.sequence.iter().flatten()
    }

    pub fn find(&self, kind: FaultKind, name_id: u32) -> Option<&Fault> {
        self.faults().find(|f| f.kind == kind && f.name_id == name_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub steady_states: Vec<SteadyState>,
    pub scenario: FailureScenario,
}

impl Hypothesis {
    /// Builds a hypothesis, enforcing name, cap, baseline and fault invariants.
    pub fn new(
        steady_states: Vec<SteadyState>,
        scenario: FailureScenario,
        max_steady_states: usize,
    ) -> Result<Self, ModelError> {
        let h = Hypothesis {
            steady_states,
            scenario,
        };
        h.validate(max_steady_states)?;
        Ok(h)
    }

    pub fn validate(&self, max_steady_states: usize) -> Result<(), ModelError> {
        let n = self.steady_states.len();
        if n == 0 || n > max_steady_states {
            return Err(ModelError::SteadyStateCount {
                got: n,
                max: max_steady_states,
            });
        }
        let mut names = BTreeSet::new();
        for ss in &self.steady_states {
            validate_steady_state(ss)?;
            if !names.insert(ss.name.as_str()) {
                return Err(ModelError::DuplicateSteadyState(ss.name.clone()));
            }
        }
        validate_scenario(&self.scenario)
    }

    pub fn steady_state(&self, name: &str) -> Option<&SteadyState> {
        self.steady_states.iter().find(|s| s.name == name)
    }
}

pub fn validate_steady_state(ss: &SteadyState) -> Result<(), ModelError> {
    if !is_identifier(&ss.name) {
        return Err(ModelError::BadName(ss.name.clone()));
    }
    ss.threshold.validate()?;
    ss.vac.target.validate(ss.vac.tool)?;
    if ss.threshold.metric.tool() != ss.vac.tool {
        return Err(ModelError::Baseline {
            name: ss.name.clone(),
            reason: format!(
                "metric {} cannot be measured with {:?}",
                ss.threshold.metric, ss.vac.tool
            ),
        });
    }
    if let Some(trace) = &ss.baseline {
        let outcome = crate::vac::evaluate_threshold(&ss.threshold, trace).map_err(|e| ModelError::Baseline {
            name: ss.name.clone(),
            reason: e.to_string(),
        })?;
        if !outcome.passed {
            return Err(ModelError::Baseline {
                name: ss.name.clone(),
                reason: format!(
                    "baseline does not satisfy its own threshold (measured {})",
                    outcome.measured
                ),
            });
        }
    }
    Ok(())
}

pub fn validate_scenario(scenario: &FailureScenario) -> Result<(), ModelError> {
    if scenario.faults().next().is_none() {
        return Err(ModelError::EmptyScenario);
    }
    let mut seen = BTreeSet::new();
    for f in scenario.faults() {
        if !seen.insert((f.kind, f.name_id)) {
            return Err(ModelError::DuplicateFault {
                kind: f.kind,
                name_id: f.name_id,
            });
        }
        if let Err(violations) = crate::faults::validate_fault(f) {
            return Err(ModelError::InvalidFault {
                kind: f.kind,
                name_id: f.name_id,
                reason: violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaCOutcome {
    pub name: String,
    pub passed: bool,
    pub log: String,
    pub measured: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    /// Names of every VaC run the workflow scheduled.
    pub scheduled: Vec<String>,
    pub outcomes: Vec<VaCOutcome>,
}

impl ExperimentResult {
    pub fn failed(&self) -> impl Iterator<Item = &VaCOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    pub fn outcome(&self, name: &str) -> Option<&VaCOutcome> {
        self.outcomes.iter().find(|o| o.name == name)
    }
}

/// True iff every scheduled VaC run passed.
pub fn hypothesis_satisfied(result: &ExperimentResult) -> Result<bool, ModelError> {
    let mut all = true;
    for name in &result.scheduled {
        match result.outcome(name) {
            Some(o) => all &= o.passed,
            None => return Err(ModelError::MissingOutcome(name.clone())),
        }
    }
    Ok(all && result.outcomes.iter().all(|o| o.passed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    Preprocess,
    Hypothesis,
    Experiment,
    Analysis,
    Improvement,
    Postprocess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub report: String,
    #[serde(default)]
    pub failed: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImprovementRecord {
    pub result: ExperimentResult,
    pub analysis: AnalysisReport,
    pub actions: Vec<ReconfigAction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleState {
    pub workspace_version: u32,
    pub improvement_history: Vec<ImprovementRecord>,
    pub phase: Phase,
    pub retries_used: u32,
}

impl Default for CycleState {
    fn default() -> Self {
        CycleState {
            workspace_version: 0,
            improvement_history: Vec::new(),
            phase: Phase::Preprocess,
            retries_used: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(name: &str, passed: bool) -> VaCOutcome {
        VaCOutcome {
            name: name.into(),
            passed,
            log: String::new(),
            measured: 0.0,
        }
    }

    fn result(runs: &[(&str, bool)]) -> ExperimentResult {
        ExperimentResult {
            scheduled: runs.iter().map(|(n, _)| n.to_string()).collect(),
            outcomes: runs.iter().map(|(n, p)| outcome(n, *p)).collect(),
        }
    }

    #[test]
    fn satisfied_requires_every_pass() {
        let names = [
            "pre-unittest-example-pod-running",
            "pre-unittest-example-service-availability",
            "fault-unittest-example-pod-running",
            "fault-unittest-example-service-availability",
            "post-unittest-example-pod-running",
            "post-unittest-example-service-availability",
        ];
        let all: Vec<_> = names.iter().map(|n| (*n, true)).collect();
        assert_eq!(hypothesis_satisfied(&result(&all)), Ok(true));
        let mut one_fail = all.clone();
        one_fail[2].1 = false;
        assert_eq!(hypothesis_satisfied(&result(&one_fail)), Ok(false));
        assert_eq!(hypothesis_satisfied(&ExperimentResult::default()), Ok(true));
    }

    #[test]
    fn missing_outcome_is_a_contract_error() {
        let mut r = result(&[("a", true)]);
        r.scheduled.push("b".into());
        assert_eq!(hypothesis_satisfied(&r), Err(ModelError::MissingOutcome("b".into())));
    }

    #[test]
    fn threshold_ranges() {
        assert!(ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9)
            .validate()
            .is_ok());
        assert!(ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 1.5)
            .validate()
            .is_err());
        assert!(ThresholdSpec::new(Metric::ReadyReplicasMin, Comparator::Ge, 1.5)
            .validate()
            .is_err());
        assert!(ThresholdSpec::new(Metric::ReadyReplicasMin, Comparator::Ge, 2.0)
            .validate()
            .is_ok());
    }

    #[test]
    fn service_urls() {
        let u = parse_service_url("http://example-service.default.svc.cluster.local:80").unwrap();
        assert_eq!(u.service, "example-service");
        assert_eq!(u.namespace, "default");
        assert_eq!(u.port, Some(80));
        let u = parse_service_url("http://front-end.sock-shop.svc.cluster.local/catalogue?size=10").unwrap();
        assert_eq!(u.port, None);
        assert_eq!(u.path, "/catalogue?size=10");
        assert!(parse_service_url("http://example.com").is_none());
    }

    #[test]
    fn fault_kind_keys() {
        assert_eq!(FaultKind::PodChaos.template_key(), "podChaos");
        assert_eq!(FaultKind::IoChaos.template_key(), "ioChaos");
        let k: FaultKind = serde_json::from_str("\"DNSChaos\"").unwrap();
        assert_eq!(k, FaultKind::DnsChaos);
        for k in FaultKind::ALL {
            assert_eq!(FaultKind::parse(k.as_str()), Some(k));
        }
    }

    #[test]
    fn comparator_symbols_round_trip() {
        for c in [Comparator::Ge, Comparator::Le, Comparator::Eq] {
            let s = serde_json::to_string(&c).unwrap();
            assert_eq!(serde_json::from_str::<Comparator>(&s).unwrap(), c);
        }
        assert_eq!(serde_json::from_str::<Comparator>("\"≥\"").unwrap(), Comparator::Ge);
    }
}
