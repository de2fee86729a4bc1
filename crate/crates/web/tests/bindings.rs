use chaoscycle_web::*;
use serde_json::Value;

fn plan(name: &str) -> String {
    let v: Value = serde_json::from_str(&preset_json(name).unwrap()).unwrap();
    v["plan"].to_string()
}

#[test]
fn presets_compile_to_workflows() {
    for name in preset_names() {
        let yaml = compile_plan_yaml(name, &plan(name)).unwrap();
        assert!(yaml.contains("kind: Workflow"), "{yaml}");
    }
}

#[test]
fn nginx_simulation_matches_the_oracle() {
    let v: Value = serde_json::from_str(&simulate_json("nginx", &plan("nginx"), 42).unwrap()).unwrap();
    assert_eq!(v["oracle_violations"].as_array().unwrap().len(), 0);
    let failed: Vec<&str> = v["outcomes"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|o| o["passed"] == false)
        .map(|o| o["name"].as_str().unwrap())
        .collect();
    assert!(failed.iter().any(|n| n.contains("pod-running")), "{failed:?}");
}

#[test]
fn bad_plans_report_errors() {
    assert!(compile_plan_yaml("nginx", "{").unwrap_err().starts_with("plan JSON"));
    assert!(preset_json("nope").is_err());
}

#[test]
fn ledger_prices_match_the_reference_runs() {
    assert_eq!(ledger_cost_text(59_000, 5_900), "$0.21");
    assert_eq!(ledger_cost_text(284_000, 13_000), "$0.84");
}

#[test]
fn stub_cycle_runs_in_process() {
    let v: Value = serde_json::from_str(&stub_cycle_json("nginx", 42).unwrap()).unwrap();
    assert_eq!(v["status"], "satisfied");
    assert_eq!(v["experiments"], 2);
}
