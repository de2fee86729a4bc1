//! Generators and structural oracles shared by the property and acceptance suites.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use chaoscycle::compiler::{
    ExperimentPlan, FaultItem, NodeBody, NodeType, Stage, StagePlan, UnitTestItem, WorkflowNode,
};
use chaoscycle::duration::Duration;
use chaoscycle::faults::{schema, FieldSpec, FieldType};
use chaoscycle::manifest::{load_project, SystemSnapshot};
use chaoscycle::model::{Fault, FaultKind, Hypothesis};
use chaoscycle::reference;
use proptest::prelude::*;
use proptest::sample::select;
use serde_json::{json, Map, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn sockshop() -> &'static SystemSnapshot {
    static SNAP: OnceLock<SystemSnapshot> = OnceLock::new();
    SNAP.get_or_init(|| load_project(fixture("sockshop")).unwrap())
}

/// Two steady states and three faults (StressChaos, PodChaos, NetworkChaos) to draw plan items from.
pub fn plan_hypothesis() -> Hypothesis {
    let mut h = reference::sockshop_hypothesis();
    let network = reference::nginx_hypothesis()
        .scenario
        .faults()
        .find(|f| f.kind == FaultKind::NetworkChaos)
        .cloned()
        .unwrap();
    h.scenario.sequence.push(vec![network]);
    h
}

fn secs(n: u64) -> Duration {
    Duration::from_secs(n)
}

fn window(stage_time: u64) -> impl Strategy<Value = (u64, u64)> {
    prop_oneof![Just(0u64), 1..stage_time].prop_flat_map(move |g| (Just(g), 1..=stage_time - g))
}

fn tests(
    names: Vec<String>,
    stage_time: u64,
    range: std::ops::RangeInclusive<usize>,
) -> impl Strategy<Value = Vec<UnitTestItem>> {
    prop::collection::vec((select(names), window(stage_time)), range).prop_map(|v| {
        v.into_iter()
            .map(|(name, (g, d))| UnitTestItem {
                name,
                grace_period: secs(g),
                duration: secs(d),
            })
            .collect()
    })
}

fn validation_stage(names: Vec<String>) -> impl Strategy<Value = (u64, StagePlan)> {
    (2u64..=60).prop_flat_map(move |t| {
        (Just(t), tests(names.clone(), t, 1..=4)).prop_map(|(t, unit_tests)| {
            (
                t,
                StagePlan {
                    unit_tests,
                    ..StagePlan::default()
                },
            )
        })
    })
}

fn fault_stage(names: Vec<String>, faults: Vec<(FaultKind, u32)>) -> impl Strategy<Value = (u64, StagePlan)> {
    (2u64..=60).prop_flat_map(move |t| {
        let faults = prop::collection::vec((select(faults.clone()), window(t)), 1..=3).prop_map(|v| {
            v.into_iter()
                .map(|((name, name_id), (g, d))| FaultItem {
                    name,
                    name_id,
                    grace_period: secs(g),
                    duration: secs(d),
                })
                .collect::<Vec<_>>()
        });
        (Just(t), tests(names.clone(), t, 0..=3), faults).prop_map(|(t, unit_tests, fault_injection)| {
            (
                t,
                StagePlan {
                    thought: String::new(),
                    unit_tests,
                    fault_injection,
                },
            )
        })
    })
}

/// Valid plans over `plan_hypothesis`, with grace periods biased towards zero.
pub fn arb_plan() -> impl Strategy<Value = ExperimentPlan> {
    let h = plan_hypothesis();
    let names: Vec<String> = h.steady_states.iter().map(|s| s.name.clone()).collect();
    let faults: Vec<(FaultKind, u32)> = h.scenario.faults().map(|f| (f.kind, f.name_id)).collect();
    (
        validation_stage(names.clone()),
        fault_stage(names.clone(), faults),
        validation_stage(names),
    )
        .prop_map(|((a, pre), (b, fault), (c, post))| ExperimentPlan {
            total_time: secs(a + b + c),
            pre_validation_time: secs(a),
            fault_injection_time: secs(b),
            post_validation_time: secs(c),
            pre_validation: pre,
            fault_injection: fault,
            post_validation: post,
            summary: String::new(),
        })
}

/// (label, grace, duration) per item, sorted; labels are steady-state names or `Kind#id`.
pub fn planned_items(plan: &ExperimentPlan, stage: Stage) -> Vec<(String, u64, u64)> {
    let mut out: Vec<(String, u64, u64)> = plan
        .timings()
        .into_iter()
        .filter(|(s, ..)| *s == stage)
        .map(|(_, l, g, d)| (l, g.secs(), d.secs()))
        .collect();
    out.sort();
    out
}

fn leaf_label(n: &WorkflowNode) -> String {
    match &n.body {
        NodeBody::Task(t) => t.steady_state.clone(),
        NodeBody::Failure(f) => format!("{}#{}", f.kind, f.name_id),
        _ => n.name.clone(),
    }
}

fn is_work(n: &WorkflowNode) -> bool {
    matches!(n.node_type, NodeType::Task | NodeType::Failure)
}

fn leaves_of(n: &WorkflowNode, per_item: bool) -> Result<Vec<&WorkflowNode>, String> {
    if is_work(n) {
        return Ok(vec![n]);
    }
    if n.node_type == NodeType::Parallel && !per_item && n.children.iter().all(is_work) {
        return Ok(n.children.iter().collect());
    }
    Err(format!("{} is neither a leaf nor a group of leaves", n.name))
}

/// Reads (label, delay, duration) off a stage's subtree, checking the wrapping rules on the way.
///
/// `per_item` demands the literal form: grace-0 leaves sit directly in the stage Parallel and every
/// delayed leaf has its own Serial(Suspend, leaf). Otherwise a delayed body may be a Parallel of
/// leaves sharing the delay, and grace-0 leaves may share one Parallel.
pub fn scheduled_items(inner: &WorkflowNode, per_item: bool) -> Result<Vec<(String, u64, u64)>, String> {
    let mut out = Vec::new();
    let leaf = |n: &WorkflowNode, delay: u64, out: &mut Vec<(String, u64, u64)>| {
        out.push((leaf_label(n), delay, n.duration.secs()));
    };
    if inner.node_type != NodeType::Parallel {
        return Err(format!("stage body {} is not Parallel", inner.name));
    }
    for child in &inner.children {
        match child.node_type {
            NodeType::Task | NodeType::Failure => leaf(child, 0, &mut out),
            NodeType::Serial => {
                let [suspend, body] = child.children.as_slice() else {
                    return Err(format!("{} does not have exactly two children", child.name));
                };
                if suspend.node_type != NodeType::Suspend || suspend.duration.is_zero() {
                    return Err(format!("{} does not start with a non-zero Suspend", child.name));
                }
                for l in leaves_of(body, per_item)? {
                    leaf(l, suspend.duration.secs(), &mut out);
                }
            }
            NodeType::Parallel if !per_item => {
                for l in leaves_of(child, per_item)? {
                    leaf(l, 0, &mut out);
                }
            }
            _ => return Err(format!("unexpected {:?} node {}", child.node_type, child.name)),
        }
    }
    out.sort();
    Ok(out)
}

/// The entry must be a Serial of the three stage wrappers in order.
pub fn stage_bodies(tree: &WorkflowNode) -> Result<Vec<&WorkflowNode>, String> {
    if tree.node_type != NodeType::Serial || tree.children.len() != 3 {
        return Err("entry is not a Serial of three stages".into());
    }
    tree.children
        .iter()
        .zip(Stage::ALL)
        .map(|(w, stage)| {
            if w.node_type != NodeType::Serial || w.stage != Some(stage) || w.children.len() != 1 {
                Err(format!("{} is not the {stage} wrapper", w.name))
            } else {
                Ok(&w.children[0])
            }
        })
        .collect()
}

/// Deadline rules: Task = pad + duration, Suspend/Failure = own time, Serial = sum,
/// Parallel = max, stage wrapper = sum + pad.
pub fn check_deadlines(n: &WorkflowNode, pad: Duration) -> Result<(), String> {
    let sum: Duration = n.children.iter().map(|c| c.deadline).sum();
    let max = n.children.iter().map(|c| c.deadline).max().unwrap_or(Duration::ZERO);
    let expected = match n.node_type {
        NodeType::Task => pad + n.duration,
        NodeType::Suspend | NodeType::Failure => n.duration,
        NodeType::Serial if n.stage.is_some() => sum + pad,
        NodeType::Serial => sum,
        NodeType::Parallel => max,
    };
    if n.deadline != expected {
        return Err(format!(
            "{}: deadline {} but rule gives {}",
            n.name, n.deadline, expected
        ));
    }
    n.children.iter().try_for_each(|c| check_deadlines(c, pad))
}

fn word() -> BoxedStrategy<String> {
    prop_oneof![
        "[a-z][a-z0-9-]{0,8}",
        "[0-9]{1,3}",
        Just("true".to_string()),
        Just("null".to_string()),
        "[a-z]{1,4}: [a-z]{1,4}",
        "#[a-z]{1,3}",
    ]
    .boxed()
}

fn selector() -> BoxedStrategy<Value> {
    (
        "[a-z][a-z-]{0,6}",
        prop::collection::btree_map("[a-z]{1,5}", "[a-z0-9]{1,5}", 0..3),
        prop::option::of(prop::sample::subsequence(vec!["Pending", "Running", "Failed"], 1..=2)),
    )
        .prop_map(|(ns, labels, phases)| {
            let mut m = Map::new();
            m.insert("namespaces".into(), json!([ns]));
            if !labels.is_empty() {
                m.insert("labelSelectors".into(), json!(labels));
            }
            if let Some(p) = phases {
                m.insert("podPhaseSelectors".into(), json!(p));
            }
            Value::Object(m)
        })
        .boxed()
}

fn field_value(ty: FieldType) -> BoxedStrategy<Value> {
    match ty {
        FieldType::Str => word().prop_map(Value::String).boxed(),
        FieldType::NumStr => prop_oneof![
            (1u32..=100).prop_map(|n| json!(n.to_string())),
            (1u32..=100).prop_map(|n| json!(n)),
        ]
        .boxed(),
        FieldType::Int => (0i64..=100).prop_map(|n| json!(n)).boxed(),
        FieldType::Bool => any::<bool>().prop_map(|b| json!(b)).boxed(),
        FieldType::StrList => prop::collection::vec(word(), 1..3).prop_map(|v| json!(v)).boxed(),
        FieldType::StrMap => prop::collection::btree_map("[a-z]{1,6}", word(), 1..3)
            .prop_map(|m| json!(m))
            .boxed(),
        FieldType::StrTable => prop::collection::vec(prop::collection::vec(word(), 2), 1..3)
            .prop_map(|v| json!(v))
            .boxed(),
        FieldType::Enum(options) => select(options.to_vec()).prop_map(|s| json!(s)).boxed(),
        FieldType::Selector => selector(),
        FieldType::Object(fields) => object(fields),
    }
}

fn object(fields: &'static [FieldSpec]) -> BoxedStrategy<Value> {
    let parts: Vec<BoxedStrategy<Option<(String, Value)>>> = fields
        .iter()
        .map(|f| {
            let name = f.name.to_string();
            let v = field_value(f.ty);
            if f.required {
                v.prop_map(move |v| Some((name.clone(), v))).boxed()
            } else {
                prop::option::of(v)
                    .prop_map(move |v| v.map(|v| (name.clone(), v)))
                    .boxed()
            }
        })
        .collect();
    parts
        .prop_map(|kv| Value::Object(kv.into_iter().flatten().collect()))
        .boxed()
}

fn ensure(m: &mut Map<String, Value>, key: &str, v: Value) {
    if !m.contains_key(key) {
        m.insert(key.into(), v);
    }
}

fn fill_mode_value(m: &mut Map<String, Value>) {
    if matches!(
        m.get("mode").and_then(Value::as_str),
        Some("fixed" | "fixed-percent" | "random-max-percent")
    ) {
        ensure(m, "value", json!("1"));
    }
}

/// Supplies the fields that an action or mode makes mandatory.
fn repair(kind: FaultKind, m: &mut Map<String, Value>) {
    let action = m.get("action").and_then(Value::as_str).map(str::to_string);
    match (kind, action.as_deref()) {
        (FaultKind::PodChaos, Some("container-kill")) => ensure(m, "containerNames", json!(["app"])),
        (FaultKind::NetworkChaos, Some("delay")) => ensure(m, "delay", json!({"latency": "10ms"})),
        (FaultKind::NetworkChaos, Some("bandwidth")) => {
            ensure(m, "bandwidth", json!({"rate": "1mbps", "limit": 100, "buffer": 10000}))
        }
        (FaultKind::IoChaos, Some("latency")) => ensure(m, "delay", json!("100ms")),
        (FaultKind::IoChaos, Some("fault")) => ensure(m, "errno", json!(5)),
        (FaultKind::IoChaos, Some("attrOverride")) => ensure(m, "attr", json!({"perm": 72})),
        (FaultKind::IoChaos, Some("mistake")) => ensure(
            m,
            "mistake",
            json!({"filling": "zero", "maxOccurrences": 1, "maxLength": 10}),
        ),
        _ => {}
    }
    if kind == FaultKind::StressChaos && !m.contains_key("stressors") && !m.contains_key("stressngStressors") {
        m.insert("stressors".into(), json!({"cpu": {"workers": 1}}));
    }
    if let Some(Value::Object(target)) = m.get_mut("target") {
        fill_mode_value(target);
    }
    fill_mode_value(m);
}

/// Schema-valid faults of one kind.
pub fn arb_fault(kind: FaultKind) -> impl Strategy<Value = Fault> {
    (object(schema(kind).fields), 0u32..4).prop_map(move |(v, id)| {
        let mut m = match v {
            Value::Object(m) => m,
            _ => unreachable!(),
        };
        repair(kind, &mut m);
        Fault::new(kind, id, Value::Object(m))
    })
}
