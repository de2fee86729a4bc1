use std::path::PathBuf;
use std::process::Command;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn chaoscycle(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_chaoscycle"))
        .args(args)
        .output()
        .unwrap()
}

#[test]
fn nginx_run_succeeds_and_writes_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let instructions = fixture("nginx").join("instructions.txt");
    let o = chaoscycle(&[
        "run",
        fixture("nginx").to_str().unwrap(),
        "--instructions",
        instructions.to_str().unwrap(),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout.contains("Status: satisfied"), "{stdout}");
    assert!(out.path().join("summary.md").is_file());
    assert!(out.path().join("inputs_v1/example-deployment.yaml").is_file());
}

#[test]
fn invalid_config_exits_with_usage_error() {
    let out = tempfile::tempdir().unwrap();
    let o = chaoscycle(&[
        "run",
        fixture("nginx").to_str().unwrap(),
        "--max-steady-states",
        "0",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("max_steady_states"));
}

#[test]
fn llm_planner_requires_a_key() {
    let out = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_chaoscycle"))
        .args([
            "run",
            fixture("nginx").to_str().unwrap(),
            "--planner",
            "llm",
            "--out",
            out.path().to_str().unwrap(),
        ])
        .env_remove("CHAOSCYCLE_LLM_API_KEY")
        .env_remove("OPENAI_API_KEY")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("API key"));
}
