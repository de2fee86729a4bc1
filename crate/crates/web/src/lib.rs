//! Browser bindings: compile a plan to a Chaos Mesh workflow, simulate it, price a ledger.
//!
//! Each export has a plain Rust twin returning `Result<String, String>` so it can be tested natively.

use chaoscycle::agent::{Pricing, StubPlanner};
use chaoscycle::compiler::{compile, emit_workflow, CompileOptions, ExperimentPlan, WorkflowMeta};
use chaoscycle::cycle::{ledger_json, run_cycle, CycleConfig, SimulatorBackend};
use chaoscycle::manifest::SystemSnapshot;
use chaoscycle::model::Hypothesis;
use chaoscycle::reference;
use chaoscycle::simulator::{build_cluster, simulate, timeline_check, SimOptions};
use serde_json::json;
use wasm_bindgen::prelude::*;

macro_rules! fixture {
    ($dir:literal, $($file:literal),+ $(,)?) => {
        &[$(($file, include_str!(concat!("../../core/tests/fixtures/", $dir, "/", $file)))),+]
    };
}

struct Preset {
    name: &'static str,
    skaffold: &'static str,
    files: &'static [(&'static str, &'static str)],
    instructions: &'static str,
    meta: fn() -> WorkflowMeta,
    hypothesis: fn() -> Hypothesis,
    plan: fn() -> ExperimentPlan,
}

const PRESETS: &[Preset] = &[
    Preset {
        name: "nginx",
        skaffold: include_str!("../../core/tests/fixtures/nginx/skaffold.yaml"),
        files: fixture!("nginx", "pod.yaml", "service.yaml"),
        instructions: include_str!("../../core/tests/fixtures/nginx/instructions.txt"),
        meta: reference::nginx_meta,
        hypothesis: reference::nginx_hypothesis,
        plan: reference::nginx_plan,
    },
    Preset {
        name: "sockshop",
        skaffold: include_str!("../../core/tests/fixtures/sockshop/skaffold.yaml"),
        files: fixture!(
            "sockshop",
            "manifests/00-sock-shop-ns.yaml",
            "manifests/01-carts-dep.yaml",
            "manifests/02-carts-svc.yaml",
            "manifests/03-carts-db-dep.yaml",
            "manifests/04-carts-db-svc.yaml",
            "manifests/05-catalogue-dep.yaml",
            "manifests/06-catalogue-svc.yaml",
            "manifests/07-catalogue-db-dep.yaml",
            "manifests/08-catalogue-db-svc.yaml",
            "manifests/09-front-end-dep.yaml",
            "manifests/10-front-end-svc.yaml",
            "manifests/11-orders-dep.yaml",
            "manifests/12-orders-svc.yaml",
            "manifests/13-orders-db-dep.yaml",
            "manifests/14-orders-db-svc.yaml",
            "manifests/15-payment-dep.yaml",
            "manifests/16-payment-svc.yaml",
            "manifests/17-queue-master-dep.yaml",
            "manifests/18-queue-master-svc.yaml",
            "manifests/19-rabbitmq-dep.yaml",
            "manifests/20-rabbitmq-svc.yaml",
            "manifests/21-session-db-dep.yaml",
            "manifests/22-session-db-svc.yaml",
            "manifests/23-shipping-dep.yaml",
            "manifests/24-shipping-svc.yaml",
            "manifests/25-user-dep.yaml",
            "manifests/26-user-svc.yaml",
            "manifests/27-user-db-dep.yaml",
            "manifests/28-user-db-svc.yaml",
        ),
        instructions: include_str!("../../core/tests/fixtures/sockshop/instructions.txt"),
        meta: reference::sockshop_meta,
        hypothesis: reference::sockshop_hypothesis,
        plan: reference::sockshop_plan,
    },
];

fn preset(name: &str) -> Result<&'static Preset, String> {
    PRESETS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| format!("unknown preset {name:?}"))
}

fn snapshot(p: &Preset) -> Result<SystemSnapshot, String> {
    SystemSnapshot::from_sources(p.name, p.name, p.skaffold, |path| {
        p.files.iter().find(|(f, _)| *f == path).map(|(_, t)| t.to_string())
    })
    .map_err(|e| e.to_string())
}

fn parse_plan(plan_json: &str) -> Result<ExperimentPlan, String> {
    serde_json::from_str(plan_json).map_err(|e| format!("plan JSON: {e}"))
}

fn violations<T: std::fmt::Display>(vs: Vec<T>) -> String {
    vs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n")
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

/// The preset's reference hypothesis and plan as JSON.
pub fn preset_json(name: &str) -> Result<String, String> {
    let p = preset(name)?;
    let v = json!({"hypothesis": (p.hypothesis)(), "plan": (p.plan)()});
    Ok(serde_json::to_string_pretty(&v).expect("preset serializes"))
}

/// Compiles an edited plan against the preset hypothesis and emits the workflow YAML.
pub fn compile_plan_yaml(name: &str, plan_json: &str) -> Result<String, String> {
    let p = preset(name)?;
    let tree = compile(&parse_plan(plan_json)?, &(p.hypothesis)(), &CompileOptions::default()).map_err(violations)?;
    emit_workflow(&tree, &(p.meta)()).map_err(|e| e.to_string())
}

/// Runs the compiled plan on the preset cluster; returns spans, injections, outcomes and the oracle verdict.
pub fn simulate_json(name: &str, plan_json: &str, seed: u64) -> Result<String, String> {
    let p = preset(name)?;
    let plan = parse_plan(plan_json)?;
    let tree = compile(&plan, &(p.hypothesis)(), &CompileOptions::default()).map_err(violations)?;
    let cluster = build_cluster(&snapshot(p)?);
    let (timeline, outcomes) = simulate(&tree, &cluster, seed, &SimOptions::default()).map_err(|e| e.to_string())?;
    let oracle = match timeline_check(&timeline, &plan) {
        Ok(()) => Vec::new(),
        Err(v) => v,
    };
    let v = json!({
        "end": timeline.end,
        "spans": timeline.spans,
        "injections": timeline.injections,
        "outcomes": outcomes,
        "summary": timeline.summary(),
        "oracle_violations": oracle,
    });
    Ok(serde_json::to_string(&v).expect("timeline serializes"))
}

/// Price of a token count at the default rates, e.g. `$0.21`.
pub fn ledger_cost_text(input_tokens: u64, output_tokens: u64) -> String {
    Pricing::default().cost(input_tokens, output_tokens).to_string()
}

/// A full cycle on the preset with the rule-based planner and the simulator.
pub fn stub_cycle_json(name: &str, seed: u64) -> Result<String, String> {
    let p = preset(name)?;
    let config = CycleConfig {
        seed,
        instructions: p.instructions.to_string(),
        ..CycleConfig::default()
    };
    let mut planner = StubPlanner::new();
    let mut backend = SimulatorBackend::new(seed, config.sim);
    let out = run_cycle(snapshot(p)?, &config, &mut planner, &mut backend).map_err(|e| e.to_string())?;
    let ledger: serde_json::Value = serde_json::from_str(&ledger_json(&out.ledger)).expect("ledger is JSON");
    let v = json!({
        "status": out.status,
        "experiments": out.experiments.len(),
        "summary": out.summary,
        "ledger": ledger,
    });
    Ok(serde_json::to_string(&v).expect("cycle serializes"))
}

#[wasm_bindgen]
pub fn presets() -> String {
    serde_json::to_string(&preset_names()).expect("names serialize")
}

#[wasm_bindgen]
pub fn preset_plan(name: &str) -> Result<String, JsError> {
    preset_json(name).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn compile_plan(name: &str, plan_json: &str) -> Result<String, JsError> {
    compile_plan_yaml(name, plan_json).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulate_plan(name: &str, plan_json: &str, seed: u32) -> Result<String, JsError> {
    simulate_json(name, plan_json, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn ledger_cost(input_tokens: u32, output_tokens: u32) -> String {
    ledger_cost_text(u64::from(input_tokens), u64::from(output_tokens))
}

#[wasm_bindgen]
pub fn stub_cycle(name: &str, seed: u32) -> Result<String, JsError> {
    stub_cycle_json(name, u64::from(seed)).map_err(|e| JsError::new(&e))
}
