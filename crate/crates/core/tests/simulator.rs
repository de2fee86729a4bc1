use std::path::PathBuf;

use chaoscycle::compiler::{compile, CompileOptions, ExperimentPlan, WorkflowNode};
use chaoscycle::manifest::{load_project, SystemSnapshot};
use chaoscycle::model::{Hypothesis, VaCOutcome};
use chaoscycle::reference::{nginx_hypothesis, nginx_plan, sockshop_hypothesis, sockshop_plan};
use chaoscycle::simulator::{build_cluster, simulate, timeline_check, SimOptions, Timeline};

fn fixture(name: &str) -> SystemSnapshot {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name);
    load_project(dir).unwrap()
}

fn run(snapshot: &SystemSnapshot, plan: &ExperimentPlan, hyp: &Hypothesis) -> (Timeline, Vec<VaCOutcome>) {
    let tree: WorkflowNode = compile(plan, hyp, &CompileOptions::default()).unwrap();
    simulate(&tree, &build_cluster(snapshot), 7, &SimOptions::default()).unwrap()
}

fn failed(outcomes: &[VaCOutcome]) -> Vec<&str> {
    outcomes.iter().filter(|o| !o.passed).map(|o| o.name.as_str()).collect()
}

#[test]
fn nginx_pod_kill_is_permanent() {
    let (timeline, outcomes) = run(&fixture("nginx"), &nginx_plan(), &nginx_hypothesis());
    assert_eq!(
        failed(&outcomes),
        [
            "fault-unittest-example-pod-running",
            "fault-unittest-example-service-availability",
            "post-unittest-example-pod-running",
            "post-unittest-example-service-availability",
        ]
    );
    assert_eq!(
        timeline
            .span("pre-unittest-example-service-availability")
            .unwrap()
            .start,
        5
    );
    assert_eq!(timeline.span("fault-networkchaos").unwrap().start, 25);
    assert_eq!(timeline.injections[0].targets, ["default/example-pod"]);
    let fault_log = &outcomes[2].log;
    assert!(fault_log.contains("out of 10 seconds"), "{fault_log}");
    timeline_check(&timeline, &nginx_plan()).unwrap();
}

#[test]
fn resilient_nginx_passes_with_selector_probe() {
    let mut hyp = nginx_hypothesis();
    hyp.steady_states[0].vac.target = chaoscycle::model::ProbeTarget::Selector {
        namespace: "default".into(),
        kind: chaoscycle::model::ResourceKind::Pod,
        labels: [("app".to_string(), "example".to_string())].into(),
    };
    let (_, outcomes) = run(&fixture("nginx-resilient"), &nginx_plan(), &hyp);
    assert!(failed(&outcomes).is_empty(), "{outcomes:#?}");
}

#[test]
fn sockshop_single_front_end_fails_after_kill() {
    let snapshot = fixture("sockshop");
    let (timeline, outcomes) = run(&snapshot, &sockshop_plan(), &sockshop_hypothesis());
    assert_eq!(
        failed(&outcomes),
        ["fault-unittest-front-end-replica", "post-unittest-front-end-replica"]
    );
    timeline_check(&timeline, &sockshop_plan()).unwrap();
}

#[test]
fn sockshop_two_front_ends_survive() {
    let snapshot = fixture("sockshop");
    let file = snapshot
        .files
        .iter()
        .find(|f| f.path.ends_with("09-front-end-dep.yaml"))
        .unwrap();
    let action = chaoscycle::manifest::ReconfigAction {
        mode: chaoscycle::manifest::ReconfigMode::Replace,
        fname: file.path.clone(),
        explanation: String::new(),
        code: Some(file.text.replace("replicas: 1", "replicas: 2")),
    };
    let next = chaoscycle::manifest::apply_reconfig(&snapshot, &[action]).unwrap();
    let (_, outcomes) = run(&next, &sockshop_plan(), &sockshop_hypothesis());
    assert!(failed(&outcomes).is_empty(), "{outcomes:#?}");
}

#[test]
fn same_seed_same_timeline() {
    let snapshot = fixture("nginx-resilient");
    let tree = compile(&nginx_plan(), &nginx_hypothesis(), &CompileOptions::default()).unwrap();
    let cluster = build_cluster(&snapshot);
    let a = simulate(&tree, &cluster, 11, &SimOptions::default()).unwrap();
    let b = simulate(&tree, &cluster, 11, &SimOptions::default()).unwrap();
    assert_eq!(a, b);
}
