//! Reference hypotheses and experiment plans for the Nginx and SockShop example systems.
//!
//! These reproduce hand-written plans whose compiled workflows are checked against the golden
//! manifests; they also seed the browser demo.

use std::collections::BTreeMap;

use serde_json::json;

use crate::compiler::{ExperimentPlan, FaultItem, StagePlan, UnitTestItem, WorkflowMeta};
use crate::duration::Duration;
use crate::model::{
    script_file_name, Comparator, FailureScenario, Fault, FaultKind, Hypothesis, Metric, ProbeTarget, ResourceKind,
    SteadyState, ThresholdSpec, VaCSpec, VacTool,
};

fn secs(n: u64) -> Duration {
    Duration::from_secs(n)
}

fn test(name: &str, grace: u64, duration: u64) -> UnitTestItem {
    UnitTestItem {
        name: name.into(),
        grace_period: secs(grace),
        duration: secs(duration),
    }
}

fn fault(kind: FaultKind, grace: u64, duration: u64) -> FaultItem {
    FaultItem {
        name: kind,
        name_id: 0,
        grace_period: secs(grace),
        duration: secs(duration),
    }
}

fn steady_state(name: &str, threshold: ThresholdSpec, tool: VacTool, target: ProbeTarget) -> SteadyState {
    SteadyState {
        name: name.into(),
        description: String::new(),
        threshold,
        vac: VaCSpec::new(tool, target, script_file_name(name, 0, tool)),
        baseline: None,
    }
}

fn resource(namespace: &str, kind: ResourceKind, name: &str) -> ProbeTarget {
    ProbeTarget::Resource {
        namespace: namespace.into(),
        kind,
        name: name.into(),
    }
}

pub fn nginx_meta() -> WorkflowMeta {
    WorkflowMeta {
        name: "chaos-experiment-20241124-132854".into(),
        workspace: "sandbox/cycle_20241124_132128".into(),
    }
}

pub fn nginx_hypothesis() -> Hypothesis {
    let selector = json!({"labelSelectors": {"app": "example"}, "namespaces": ["default"]});
    Hypothesis {
        steady_states: vec![
            steady_state(
                "example-pod-running",
                ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9),
                VacTool::ClusterApi,
                resource("default", ResourceKind::Pod, "example-pod"),
            ),
            steady_state(
                "example-service-availability",
                ThresholdSpec::new(Metric::RequestFailureRate, Comparator::Le, 0.001),
                VacTool::LoadTest,
                ProbeTarget::Url {
                    url: "http://example-service.default.svc.cluster.local:80".into(),
                },
            ),
        ],
        scenario: FailureScenario {
            event: "Cyber attack".into(),
            description: "The single pod is killed, then the service sees added latency.".into(),
            sequence: vec![
                vec![Fault::new(
                    FaultKind::PodChaos,
                    0,
                    json!({"action": "pod-kill", "mode": "one", "selector": selector}),
                )],
                vec![Fault::new(
                    FaultKind::NetworkChaos,
                    0,
                    json!({
                        "action": "delay",
                        "mode": "all",
                        "selector": selector,
                        "direction": "to",
                        "device": "eth0",
                        "delay": {"latency": "100ms", "jitter": "10ms", "correlation": "50"},
                        "target": {"mode": "all", "selector": selector},
                    }),
                )],
            ],
        },
    }
}

/// Stages 15/30/15. `post_availability_grace` is 6s in the reference manifest.
pub fn nginx_plan_with(post_availability_grace: u64) -> ExperimentPlan {
    ExperimentPlan {
        total_time: secs(60),
        pre_validation_time: secs(15),
        fault_injection_time: secs(30),
        post_validation_time: secs(15),
        pre_validation: StagePlan {
            thought: String::new(),
            unit_tests: vec![
                test("example-pod-running", 0, 5),
                test("example-service-availability", 5, 5),
            ],
            fault_injection: Vec::new(),
        },
        fault_injection: StagePlan {
            thought: String::new(),
            unit_tests: vec![
                test("example-pod-running", 0, 10),
                test("example-service-availability", 10, 20),
            ],
            fault_injection: vec![
                fault(FaultKind::PodChaos, 0, 10),
                fault(FaultKind::NetworkChaos, 10, 20),
            ],
        },
        post_validation: StagePlan {
            thought: String::new(),
            unit_tests: vec![
                test("example-pod-running", 2, 6),
                test("example-service-availability", post_availability_grace, 5),
            ],
            fault_injection: Vec::new(),
        },
        summary: String::new(),
    }
}

pub fn nginx_plan() -> ExperimentPlan {
    nginx_plan_with(6)
}

pub fn sockshop_meta() -> WorkflowMeta {
    WorkflowMeta {
        name: "chaos-experiment-20241127-045539".into(),
        workspace: "sandbox/cycle_20241127_043136".into(),
    }
}

pub fn sockshop_hypothesis() -> Hypothesis {
    let labels = |name: &str| json!({"labelSelectors": {"name": name}, "namespaces": ["sock-shop"]});
    let replicas = || ThresholdSpec::new(Metric::ReadyReplicasMin, Comparator::Ge, 1.0);
    Hypothesis {
        steady_states: vec![
            steady_state(
                "carts-db-replicas",
                replicas(),
                VacTool::ClusterApi,
                resource("sock-shop", ResourceKind::Deployment, "carts-db"),
            ),
            steady_state(
                "front-end-replica",
                replicas(),
                VacTool::ClusterApi,
                resource("sock-shop", ResourceKind::Deployment, "front-end"),
            ),
        ],
        scenario: FailureScenario {
            event: "Black Friday sale".into(),
            description: "CPU pressure on the cart database, then the lone front-end pod is killed.".into(),
            sequence: vec![
                vec![Fault::new(
                    FaultKind::StressChaos,
                    0,
                    json!({
                        "mode": "all",
                        "selector": labels("carts-db"),
                        "stressors": {"cpu": {"workers": 2, "load": 80}},
                        "containerNames": ["carts-db"],
                    }),
                )],
                vec![Fault::new(
                    FaultKind::PodChaos,
                    0,
                    json!({
                        "action": "pod-kill",
                        "mode": "one",
                        "selector": labels("front-end"),
                        "value": "1",
                    }),
                )],
            ],
        },
    }
}

/// Stages 20/20/20.
pub fn sockshop_plan() -> ExperimentPlan {
    ExperimentPlan {
        total_time: secs(60),
        pre_validation_time: secs(20),
        fault_injection_time: secs(20),
        post_validation_time: secs(20),
        pre_validation: StagePlan {
            thought: String::new(),
            unit_tests: vec![test("carts-db-replicas", 0, 20), test("front-end-replica", 0, 20)],
            fault_injection: Vec::new(),
        },
        fault_injection: StagePlan {
            thought: String::new(),
            unit_tests: vec![test("carts-db-replicas", 0, 10), test("front-end-replica", 10, 5)],
            fault_injection: vec![fault(FaultKind::StressChaos, 0, 10), fault(FaultKind::PodChaos, 10, 5)],
        },
        post_validation: StagePlan {
            thought: String::new(),
            unit_tests: vec![test("carts-db-replicas", 0, 10), test("front-end-replica", 0, 10)],
            fault_injection: Vec::new(),
        },
        summary: String::new(),
    }
}

/// Every fault parameter record used by the reference hypotheses, keyed by node name.
pub fn reference_faults() -> BTreeMap<String, Fault> {
    let mut out = BTreeMap::new();
    for (system, hyp) in [("nginx", nginx_hypothesis()), ("sockshop", sockshop_hypothesis())] {
        for f in hyp.scenario.faults() {
            out.insert(format!("{system}/{}", f.kind.as_str()), f.clone());
        }
    }
    out
}
