//! Validation-as-code: runner commands, probe scripts and threshold evaluation over traces.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::duration::Duration;
pub use crate::model::VaCOutcome;
use crate::model::{parse_service_url, Metric, ProbeTarget, ResourceKind, ThresholdSpec, VaCSpec, VacTool};

pub const WORKSPACE_MOUNT: &str = "/chaos-eater";
pub const CLUSTER_API_IMAGE: &str = "chaos-eater/k8sapi:1.0";
pub const LOAD_TEST_IMAGE: &str = "grafana/k6:latest";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: u64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTrace {
    pub steady_state_name: String,
    pub samples: Vec<Sample>,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum VacError {
    #[error("VaC duration must be at least 1s")]
    ZeroDuration,
    #[error("VaC has no script path")]
    NoScript,
    #[error("metric {metric} cannot be measured with the {tool:?} tool")]
    ToolMismatch { metric: Metric, tool: VacTool },
    #[error("empty trace for {0}")]
    EmptyTrace(String),
    #[error("invalid probe target: {0}")]
    Target(String),
}

/// Container invocation of a VaC script inside a workflow task node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunnerCommand {
    pub image: &'static str,
    pub image_pull_policy: Option<&'static str>,
    pub command: Vec<String>,
    pub args: Option<Vec<String>>,
}

pub fn script_location(script_path: &str) -> String {
    format!("{WORKSPACE_MOUNT}/{}", script_path.trim_start_matches('/'))
}

pub fn runner_command(vac: &VaCSpec, duration: Duration) -> Result<RunnerCommand, VacError> {
    if duration.is_zero() {
        return Err(VacError::ZeroDuration);
    }
    if vac.script_path.is_empty() {
        return Err(VacError::NoScript);
    }
    let script = script_location(&vac.script_path);
    Ok(match vac.tool {
        VacTool::ClusterApi => RunnerCommand {
            image: CLUSTER_API_IMAGE,
            image_pull_policy: Some("IfNotPresent"),
            command: vec!["/bin/bash".into(), "-c".into()],
            args: Some(vec![format!("python {script} --duration {}", duration.secs())]),
        },
        VacTool::LoadTest => RunnerCommand {
            image: LOAD_TEST_IMAGE,
            image_pull_policy: None,
            command: vec![
                "k6".into(),
                "run".into(),
                "--duration".into(),
                format!("{}s", duration.secs()),
                "--quiet".into(),
                script,
            ],
            args: None,
        },
    })
}

fn check_tool(vac: &VaCSpec, threshold: &ThresholdSpec) -> Result<(), VacError> {
    if threshold.metric.tool() != vac.tool {
        return Err(VacError::ToolMismatch {
            metric: threshold.metric,
            tool: vac.tool,
        });
    }
    Ok(())
}

fn percent(value: f64) -> String {
    let p = (value * 100_000.0).round() / 1000.0;
    let mut s = format!("{p:.3}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.pop();
    }
    s
}

fn py_dict(labels: &std::collections::BTreeMap<String, String>) -> String {
    labels
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Renders the probe script for the live backend. Identical inputs give identical bytes.
pub fn render_probe_script(vac: &VaCSpec, threshold: &ThresholdSpec) -> Result<String, VacError> {
    check_tool(vac, threshold)?;
    vac.target
        .validate(vac.tool)
        .map_err(|e| VacError::Target(e.to_string()))?;
    match vac.tool {
        VacTool::ClusterApi => Ok(render_python(vac, threshold)),
        VacTool::LoadTest => Ok(render_k6(vac, threshold)),
    }
}

fn render_python(vac: &VaCSpec, threshold: &ThresholdSpec) -> String {
    let (namespace, lookup) = match &vac.target {
        ProbeTarget::Resource { namespace, kind, name } => (namespace.as_str(), lookup_named(*kind, name)),
        ProbeTarget::Selector {
            namespace,
            kind,
            labels,
        } => (namespace.as_str(), lookup_selected(*kind, &py_dict(labels))),
        ProbeTarget::Url { .. } => unreachable!("validated above"),
    };
    let op = threshold.comparator.symbol();
    let (per_sample, metric_name, assertion) = match threshold.metric {
        Metric::RunningRatio => (
            "ok = running_count(objs) > 0",
            "running_percentage",
            format!("running_percentage {op} {}", percent(threshold.value)),
        ),
        Metric::ReadyRatio => (
            "ok = ready_fraction(objs) >= 1.0",
            "ready_percentage",
            format!("ready_percentage {op} {}", percent(threshold.value)),
        ),
        Metric::ReadyReplicasMin => (
            "ok = ready_replicas(objs) >= THRESHOLD",
            "readiness_percentage",
            "readiness_percentage == 100".to_string(),
        ),
        Metric::RequestFailureRate => unreachable!("checked by check_tool"),
    };
    let mut s = String::new();
    let _ = writeln!(s, "import argparse");
    let _ = writeln!(s, "import time");
    let _ = writeln!(s, "from kubernetes import client, config");
    let _ = writeln!(s);
    let _ = writeln!(s, "NAMESPACE = {namespace:?}");
    let _ = writeln!(s, "THRESHOLD = {}", threshold.value);
    let _ = writeln!(s, "INTERVAL = {}", vac.sample_interval.secs().max(1));
    let _ = writeln!(s);
    let _ = writeln!(s, "def fetch(core, apps):");
    let _ = writeln!(s, "    {lookup}");
    let _ = writeln!(s);
    let _ = writeln!(s, "def running_count(objs):");
    let _ = writeln!(s, "    return sum(1 for p in objs if p.status.phase == 'Running')");
    let _ = writeln!(s);
    let _ = writeln!(s, "def ready_fraction(objs):");
    let _ = writeln!(s, "    desired = sum(d.spec.replicas or 0 for d in objs)");
    let _ = writeln!(s, "    ready = sum(d.status.ready_replicas or 0 for d in objs)");
    let _ = writeln!(s, "    return ready / desired if desired else 0.0");
    let _ = writeln!(s);
    let _ = writeln!(s, "def ready_replicas(objs):");
    let _ = writeln!(s, "    return sum(d.status.ready_replicas or 0 for d in objs)");
    let _ = writeln!(s);
    let _ = writeln!(s, "def main():");
    let _ = writeln!(s, "    parser = argparse.ArgumentParser()");
    let _ = writeln!(s, "    parser.add_argument('--duration', type=int, default=5)");
    let _ = writeln!(s, "    args = parser.parse_args()");
    let _ = writeln!(s, "    config.load_incluster_config()");
    let _ = writeln!(s, "    core, apps = client.CoreV1Api(), client.AppsV1Api()");
    let _ = writeln!(s, "    hits = 0");
    let _ = writeln!(s, "    for second in range(args.duration):");
    let _ = writeln!(s, "        try:");
    let _ = writeln!(s, "            objs = fetch(core, apps)");
    let _ = writeln!(s, "        except client.exceptions.ApiException as e:");
    let _ = writeln!(
        s,
        "            print(f'second {{second}}: lookup failed: {{e.reason}}')"
    );
    let _ = writeln!(s, "            objs = []");
    let _ = writeln!(s, "        {per_sample}");
    let _ = writeln!(s, "        hits += int(ok)");
    let _ = writeln!(s, "        print(f'second {{second}}: ok={{ok}}')");
    let _ = writeln!(s, "        time.sleep(INTERVAL)");
    let _ = writeln!(s, "    {metric_name} = hits / args.duration * 100");
    let _ = writeln!(
        s,
        "    print(f'{{hits}} out of {{args.duration}} seconds, {metric_name} {{{metric_name}:.2f}}')"
    );
    let _ = writeln!(s, "    assert {assertion}, '{metric_name} below threshold'");
    let _ = writeln!(s);
    let _ = writeln!(s, "if __name__ == '__main__':");
    let _ = writeln!(s, "    main()");
    s
}

fn lookup_named(kind: ResourceKind, name: &str) -> String {
    match kind {
        ResourceKind::Pod => {
            format!("return [core.read_namespaced_pod(name={name:?}, namespace=NAMESPACE)]")
        }
        ResourceKind::Deployment => {
            format!("return [apps.read_namespaced_deployment(name={name:?}, namespace=NAMESPACE)]")
        }
        ResourceKind::Service => format!("return [core.read_namespaced_endpoints(name={name:?}, namespace=NAMESPACE)]"),
    }
}

fn lookup_selected(kind: ResourceKind, selector: &str) -> String {
    let call = match kind {
        ResourceKind::Pod => "core.list_namespaced_pod",
        ResourceKind::Deployment => "apps.list_namespaced_deployment",
        ResourceKind::Service => "core.list_namespaced_service",
    };
    format!("return {call}(namespace=NAMESPACE, label_selector={selector:?}).items")
}

fn render_k6(vac: &VaCSpec, threshold: &ThresholdSpec) -> String {
    let url = match &vac.target {
        ProbeTarget::Url { url } => url.as_str(),
        _ => unreachable!("validated above"),
    };
    let mut s = String::new();
    let _ = writeln!(s, "import http from 'k6/http';");
    let _ = writeln!(s, "import {{ check, sleep }} from 'k6';");
    let _ = writeln!(s);
    let _ = writeln!(s, "export const options = {{");
    let _ = writeln!(s, "  vus: {},", vac.vus.max(1));
    let _ = writeln!(s, "  thresholds: {{");
    let _ = writeln!(
        s,
        "    'http_req_failed': ['rate{}{}'],",
        threshold.comparator.symbol(),
        threshold.value
    );
    let _ = writeln!(s, "  }},");
    let _ = writeln!(s, "}};");
    let _ = writeln!(s);
    let _ = writeln!(s, "export default function () {{");
    let _ = writeln!(s, "  const res = http.get({url:?});");
    let _ = writeln!(s, "  check(res, {{ 'status is 200': (r) => r.status === 200 }});");
    let _ = writeln!(s, "  sleep({});", vac.sample_interval.secs().max(1));
    let _ = writeln!(s, "}}");
    s
}

/// Applies a threshold to a sampled trace.
///
/// Ratio metrics count satisfying samples over all samples; `ready-replicas-min` takes the minimum.
pub fn evaluate_threshold(threshold: &ThresholdSpec, trace: &SampleTrace) -> Result<VaCOutcome, VacError> {
    let n = trace.samples.len();
    if n == 0 {
        return Err(VacError::EmptyTrace(trace.steady_state_name.clone()));
    }
    let mut log = String::new();
    let (measured, summary) = match threshold.metric {
        Metric::ReadyReplicasMin => {
            let mut min = f64::INFINITY;
            for s in &trace.samples {
                let _ = writeln!(log, "t={}s ready_replicas={}", s.t, s.value);
                min = min.min(s.value);
            }
            let ok = trace.samples.iter().filter(|s| threshold.holds(s.value)).count();
            (
                min,
                format!(
                    "ready replicas met the threshold in {ok} out of {n} seconds, which is {:.2}; minimum {min}",
                    ok as f64 / n as f64
                ),
            )
        }
        metric => {
            let (label, hit): (&str, fn(f64) -> bool) = match metric {
                Metric::RunningRatio => ("running pods", |v| v > 0.0),
                Metric::ReadyRatio => ("ready fraction", |v| v >= 1.0),
                _ => ("failed requests", |v| v > 0.0),
            };
            let mut hits = 0usize;
            for s in &trace.samples {
                let _ = writeln!(log, "t={}s {label}={}", s.t, s.value);
                hits += usize::from(hit(s.value));
            }
            let ratio = hits as f64 / n as f64;
            let what = match metric {
                Metric::RunningRatio => "running",
                Metric::ReadyRatio => "fully ready",
                _ => "failing",
            };
            (
                ratio,
                format!("{what} in {hits} out of {n} seconds, which is {ratio:.2}"),
            )
        }
    };
    let passed = threshold.holds(measured);
    let _ = writeln!(log, "{summary}");
    let _ = writeln!(
        log,
        "threshold {} {} {} -> {}",
        threshold.metric,
        threshold.comparator.symbol(),
        threshold.value,
        if passed { "pass" } else { "fail" }
    );
    Ok(VaCOutcome {
        name: trace.steady_state_name.clone(),
        passed,
        log,
        measured,
    })
}

/// Service reachable through a load-test URL, as (namespace, service).
pub fn url_service(url: &str) -> Option<(String, String)> {
    parse_service_url(url).map(|u| (u.namespace, u.service))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Comparator, ProbeTarget};
    use std::collections::BTreeMap;

    fn pod_vac() -> VaCSpec {
        VaCSpec::new(
            VacTool::ClusterApi,
            ProbeTarget::Resource {
                namespace: "default".into(),
                kind: ResourceKind::Pod,
                name: "example-pod".into(),
            },
            "sandbox/cycle_20241124_132128/unittest_example-pod-running_mod0.py",
        )
    }

    fn svc_vac() -> VaCSpec {
        VaCSpec::new(
            VacTool::LoadTest,
            ProbeTarget::Url {
                url: "http://example-service.default.svc.cluster.local:80".into(),
            },
            "sandbox/cycle_20241124_132128/unittest_example-service-availability_mod0.js",
        )
    }

    fn trace(values: &[f64]) -> SampleTrace {
        SampleTrace {
            steady_state_name: "s".into(),
            samples: values
                .iter()
                .enumerate()
                .map(|(i, v)| Sample { t: i as u64, value: *v })
                .collect(),
            duration: Duration::from_secs(values.len() as u64),
        }
    }

    #[test]
    fn cluster_api_command() {
        let c = runner_command(&pod_vac(), Duration::from_secs(5)).unwrap();
        assert_eq!(c.image, "chaos-eater/k8sapi:1.0");
        assert_eq!(c.image_pull_policy, Some("IfNotPresent"));
        assert_eq!(c.command, vec!["/bin/bash", "-c"]);
        assert_eq!(
            c.args.unwrap(),
            vec!["python /chaos-eater/sandbox/cycle_20241124_132128/unittest_example-pod-running_mod0.py --duration 5"]
        );
    }

    #[test]
    fn load_test_command() {
        let c = runner_command(&svc_vac(), Duration::from_secs(20)).unwrap();
        assert_eq!(c.image, "grafana/k6:latest");
        assert_eq!(c.image_pull_policy, None);
        assert_eq!(
            c.command,
            vec![
                "k6",
                "run",
                "--duration",
                "20s",
                "--quiet",
                "/chaos-eater/sandbox/cycle_20241124_132128/unittest_example-service-availability_mod0.js"
            ]
        );
        assert!(c.args.is_none());
    }

    #[test]
    fn zero_duration_rejected() {
        assert_eq!(runner_command(&pod_vac(), Duration::ZERO), Err(VacError::ZeroDuration));
    }

    #[test]
    fn scripts_carry_thresholds() {
        let t = ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9);
        let py = render_probe_script(&pod_vac(), &t).unwrap();
        assert!(py.contains("running_percentage >= 90"), "{py}");
        assert_eq!(py, render_probe_script(&pod_vac(), &t).unwrap());

        let t = ThresholdSpec::new(Metric::RequestFailureRate, Comparator::Le, 0.001);
        let js = render_probe_script(&svc_vac(), &t).unwrap();
        assert!(js.contains("'http_req_failed': ['rate<=0.001']"), "{js}");

        let dep = VaCSpec::new(
            VacTool::ClusterApi,
            ProbeTarget::Resource {
                namespace: "sock-shop".into(),
                kind: ResourceKind::Deployment,
                name: "front-end".into(),
            },
            "x.py",
        );
        let t = ThresholdSpec::new(Metric::ReadyReplicasMin, Comparator::Ge, 1.0);
        let py = render_probe_script(&dep, &t).unwrap();
        assert!(py.contains("readiness_percentage == 100"));
    }

    #[test]
    fn metric_tool_mismatch() {
        let t = ThresholdSpec::new(Metric::RequestFailureRate, Comparator::Le, 0.001);
        assert!(matches!(
            render_probe_script(&pod_vac(), &t),
            Err(VacError::ToolMismatch { .. })
        ));
    }

    #[test]
    fn selector_targets_render() {
        let vac = VaCSpec::new(
            VacTool::ClusterApi,
            ProbeTarget::Selector {
                namespace: "default".into(),
                kind: ResourceKind::Pod,
                labels: BTreeMap::from([("app".to_string(), "example".to_string())]),
            },
            "x.py",
        );
        let t = ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9);
        let py = render_probe_script(&vac, &t).unwrap();
        assert!(py.contains("label_selector=\"app=example\""));
    }

    #[test]
    fn ratio_evaluation() {
        let t = ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9);
        let o = evaluate_threshold(&t, &trace(&[1.0; 5])).unwrap();
        assert!(o.passed);
        assert_eq!(o.measured, 1.0);
        let o = evaluate_threshold(&t, &trace(&[0.0; 20])).unwrap();
        assert!(!o.passed);
        assert_eq!(o.measured, 0.0);
        assert!(o.log.contains("0 out of 20 seconds, which is 0.00"));
        let mut nine = vec![1.0; 9];
        nine.push(0.0);
        let o = evaluate_threshold(&t, &trace(&nine)).unwrap();
        assert!(o.passed, "boundary is inclusive");
    }

    #[test]
    fn failure_rate_and_min() {
        let t = ThresholdSpec::new(Metric::RequestFailureRate, Comparator::Le, 0.001);
        assert!(evaluate_threshold(&t, &trace(&[0.0; 5])).unwrap().passed);
        assert!(!evaluate_threshold(&t, &trace(&[0.0, 1.0])).unwrap().passed);
        let t = ThresholdSpec::new(Metric::ReadyReplicasMin, Comparator::Ge, 1.0);
        let o = evaluate_threshold(&t, &trace(&[2.0, 1.0, 2.0])).unwrap();
        assert!(o.passed);
        assert_eq!(o.measured, 1.0);
        assert!(!evaluate_threshold(&t, &trace(&[1.0, 0.0])).unwrap().passed);
    }

    #[test]
    fn empty_trace_is_an_error() {
        let t = ThresholdSpec::new(Metric::RunningRatio, Comparator::Ge, 0.9);
        assert!(matches!(
            evaluate_threshold(&t, &trace(&[])),
            Err(VacError::EmptyTrace(_))
        ));
    }
}
