//! Planner backed by a chat-completion model, one prompt template per agent.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::{json, Value};

use super::ledger::CostLedger;
use super::llm::{chat_complete, ChatParams, LlmClient, Transport};
use super::planner::{
    history_text, manifests_text, phase_of, plan_text, result_text, scenario_text, steady_states_text, target_text,
    AnalysisInput, Context, Planner, PlannerError, SteadyStateDraft, Weakness,
};
use super::prompt::{render_prompt, template, Message, Role};
use super::retry::Attempt;
use super::schema::{fault_output_schema, parse_structured_output, OutputSchema};
use crate::compiler::{ExperimentPlan, FaultItem, Stage, StagePlan, UnitTestItem};
use crate::duration::Duration;
use crate::manifest::{ReconfigAction, SystemSnapshot};
use crate::model::{
    AnalysisReport, FailureScenario, Fault, FaultKind, Hypothesis, ImprovementRecord, Metric, ProbeTarget,
    ResourceKind, SelectorSpec, SteadyState, ThresholdSpec, VacTool,
};
use crate::vac::SampleTrace;

pub struct LlmPlanner<T: Transport> {
    pub client: LlmClient<T>,
    pub params: ChatParams,
    ledger: CostLedger,
}

type Bindings = Vec<(&'static str, String)>;

fn bad(agent: &str, msg: impl std::fmt::Display) -> PlannerError {
    PlannerError::new(format!("agent {agent}: {msg}"))
}

fn str_field(v: &Value, key: &str) -> String {
    v.get(key).and_then(Value::as_str).unwrap_or_default().to_string()
}

fn string_map(v: Option<&Value>) -> BTreeMap<String, String> {
    v.and_then(Value::as_object)
        .map(|m| {
            m.iter()
                .map(|(k, v)| (k.clone(), v.as_str().map_or_else(|| v.to_string(), str::to_string)))
                .collect()
        })
        .unwrap_or_default()
}

fn duration_field(agent: &str, v: &Value, key: &str) -> Result<Duration, PlannerError> {
    let text = str_field(v, key);
    Duration::parse(&text).map_err(|e| bad(agent, format!("{key}: {e}")))
}

/// Probe target from the `resource_kind`/`namespace`/`name`/`labels`/`url` fields.
fn target_from(agent: &str, v: &Value, tool: VacTool) -> Result<ProbeTarget, PlannerError> {
    if tool == VacTool::LoadTest {
        let url = str_field(v, "url");
        if url.is_empty() {
            return Err(bad(agent, "k6 steady states need a url"));
        }
        return Ok(ProbeTarget::Url { url });
    }
    let kind = v
        .get("resource_kind")
        .and_then(Value::as_str)
        .and_then(ResourceKind::parse)
        .ok_or_else(|| bad(agent, "resource_kind must be Pod, Deployment or Service"))?;
    let namespace = match str_field(v, "namespace") {
        ns if ns.is_empty() => "default".to_string(),
        ns => ns,
    };
    let labels = string_map(v.get("labels"));
    let name = str_field(v, "name");
    if !labels.is_empty() {
        Ok(ProbeTarget::Selector {
            namespace,
            kind,
            labels,
        })
    } else if !name.is_empty() {
        Ok(ProbeTarget::Resource { namespace, kind, name })
    } else {
        Err(bad(agent, "give either a resource name or labels"))
    }
}

impl<T: Transport> LlmPlanner<T> {
    pub fn new(client: LlmClient<T>, params: ChatParams) -> Self {
        LlmPlanner {
            client,
            params,
            ledger: CostLedger::default(),
        }
    }

    /// One agent call: render, append earlier rejected answers, complete and parse.
    fn ask_with(
        &mut self,
        agent: &str,
        bindings: Bindings,
        schema: &OutputSchema,
        feedback: &[Attempt],
    ) -> Result<Value, PlannerError> {
        let t = template(agent).ok_or_else(|| bad(agent, "no such prompt template"))?;
        let b: BTreeMap<String, String> = bindings.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
        let mut messages = render_prompt(t, &b)?;
        for a in feedback {
            messages.push(Message::new(Role::Assistant, a.output.clone()));
            messages.push(Message::new(
                Role::User,
                format!(
                    "That answer was rejected: {}\nCorrect it and answer again in the same format.",
                    a.error
                ),
            ));
        }
        let completion = chat_complete(
            &self.client,
            &messages,
            schema,
            self.params,
            &mut self.ledger,
            phase_of(agent),
        )?;
        let prefill = super::schema::prefill_for(schema)?;
        parse_structured_output(&completion.text, schema)
            .map_err(|e| bad(agent, format!("{e}; raw output: {prefill}{}", completion.text)))
    }

    fn ask(&mut self, agent: &str, bindings: Bindings, feedback: &[Attempt]) -> Result<Value, PlannerError> {
        let schema = template(agent)
            .ok_or_else(|| bad(agent, "no such prompt template"))?
            .schema
            .clone();
        self.ask_with(agent, bindings, &schema, feedback)
    }

    fn base(snapshot: &SystemSnapshot, ctx: &Context) -> Bindings {
        vec![
            ("user_input", ctx.user_input(snapshot)),
            ("ce_instructions", ctx.ce_instructions.clone()),
        ]
    }

    fn stage_plan(
        &mut self,
        mut bindings: Bindings,
        stage: Stage,
        time: Duration,
        feedback: &[Attempt],
    ) -> Result<StagePlan, PlannerError> {
        let agent = "2-1";
        bindings.push(("phase_name", stage.prefix().to_string()));
        bindings.push(("phase_total_time", time.to_string()));
        let v = self.ask(agent, bindings, feedback)?;
        let mut plan = StagePlan {
            thought: str_field(&v, "thought"),
            ..StagePlan::default()
        };
        for t in v["unit_tests"].as_array().into_iter().flatten() {
            plan.unit_tests.push(UnitTestItem {
                name: str_field(t, "name"),
                grace_period: duration_field(agent, t, "grace_period")?,
                duration: duration_field(agent, t, "duration")?,
            });
        }
        for f in v.get("fault_injection").and_then(Value::as_array).into_iter().flatten() {
            plan.fault_injection.push(FaultItem {
                name: FaultKind::parse(&str_field(f, "name")).ok_or_else(|| bad(agent, "unknown fault name"))?,
                name_id: f.get("name_id").and_then(Value::as_u64).unwrap_or(0) as u32,
                grace_period: duration_field(agent, f, "grace_period")?,
                duration: duration_field(agent, f, "duration")?,
            });
        }
        Ok(plan)
    }
}

impl<T: Transport> Planner for LlmPlanner<T> {
    fn preprocess(&mut self, snapshot: &SystemSnapshot, instructions: &str) -> Result<Context, PlannerError> {
        let mut summaries = Vec::new();
        for f in &snapshot.files {
            let v = self.ask("0-0", vec![("k8s_yaml", f.text.clone())], &[])?;
            summaries.push((snapshot.display_path(&f.path), str_field(&v, "k8s_summary")));
        }
        let v = self.ask("0-1", vec![("k8s_yamls", manifests_text(snapshot))], &[])?;
        let weaknesses: Vec<Weakness> = serde_json::from_value(v["issues"].clone()).map_err(|e| bad("0-1", e))?;
        let mut ctx = Context {
            summaries,
            weaknesses,
            ..Context::default()
        };
        let v = self.ask("0-2", vec![("user_input", ctx.user_input(snapshot))], &[])?;
        ctx.application = str_field(&v, "k8s_application");
        let v = self.ask("0-3", vec![("ce_instructions", instructions.to_string())], &[])?;
        ctx.ce_instructions = str_field(&v, "ce_instructions");
        Ok(ctx)
    }

    fn propose_steady_state(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        defined: &[SteadyState],
        feedback: &[Attempt],
    ) -> Result<Option<SteadyStateDraft>, PlannerError> {
        let mut b = Self::base(snapshot, ctx);
        b.push(("predefined_steady_states", steady_states_text(defined)));
        let mut check = String::new();
        if !defined.is_empty() {
            let v = self.ask("1-4", b.clone(), &[])?;
            if v["requires_addition"] != Value::Bool(true) {
                return Ok(None);
            }
            check = str_field(&v, "thought");
        }
        b.push(("prev_check_thought", check));
        let v = self.ask("1-0", b, feedback)?;
        let name = str_field(&v, "name");
        let thought = str_field(&v, "thought");
        let mut b = Self::base(snapshot, ctx);
        b.push(("steady_state_name", name.clone()));
        b.push(("steady_state_thought", thought.clone()));
        let t = self.ask("1-1", b, feedback)?;
        let tool = match t["tool_type"].as_str() {
            Some("k6") => VacTool::LoadTest,
            _ => VacTool::ClusterApi,
        };
        Ok(Some(SteadyStateDraft {
            name,
            description: thought,
            tool,
            target: target_from("1-1", &t, tool)?,
        }))
    }

    fn define_threshold(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        draft: &SteadyStateDraft,
        baselines: &BTreeMap<Metric, SampleTrace>,
        feedback: &[Attempt],
    ) -> Result<ThresholdSpec, PlannerError> {
        let mut summary = format!("Probe target: {}\n", target_text(&draft.target));
        for (metric, trace) in baselines {
            let values: Vec<String> = trace.samples.iter().map(|s| s.value.to_string()).collect();
            let _ = writeln!(summary, "{metric} per second: [{}]", values.join(", "));
        }
        let mut b = Self::base(snapshot, ctx);
        b.push(("steady_state_name", draft.name.clone()));
        b.push(("steady_state_thought", draft.description.clone()));
        b.push(("inspection_summary", summary));
        let v = self.ask("1-2", b, feedback)?;
        serde_json::from_value(v["threshold"].clone()).map_err(|e| bad("1-2", e))
    }

    fn draft_scenario(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        steady_states: &[SteadyState],
        feedback: &[Attempt],
    ) -> Result<FailureScenario, PlannerError> {
        let mut b = Self::base(snapshot, ctx);
        b.push(("steady_states", steady_states_text(steady_states)));
        let v = self.ask("1-5", b.clone(), feedback)?;
        let overview = serde_json::to_string_pretty(&v).unwrap_or_default();
        let mut sequence = Vec::new();
        for group in v["faults"].as_array().into_iter().flatten() {
            let mut faults = Vec::new();
            for f in group.as_array().into_iter().flatten() {
                let kind = FaultKind::parse(&str_field(f, "name")).ok_or_else(|| bad("1-5", "unknown fault name"))?;
                let mut fb = b.clone();
                fb.push(("fault_scenario", overview.clone()));
                fb.push(("refined_fault_type", kind.as_str().to_string()));
                let detail = self.ask_with("1-6", fb, &fault_output_schema(kind), feedback)?;
                let mut fault = Fault::new(
                    kind,
                    f.get("name_id").and_then(Value::as_u64).unwrap_or(0) as u32,
                    detail["params"].clone(),
                );
                fault.scope = string_map(f.get("scope"));
                faults.push(fault);
            }
            if !faults.is_empty() {
                sequence.push(faults);
            }
        }
        Ok(FailureScenario {
            event: str_field(&v, "event"),
            description: str_field(&v, "thought"),
            sequence,
        })
    }

    fn plan_experiment(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        hypothesis: &Hypothesis,
        feedback: &[Attempt],
    ) -> Result<ExperimentPlan, PlannerError> {
        let mut b = Self::base(snapshot, ctx);
        b.push(("steady_states", steady_states_text(&hypothesis.steady_states)));
        b.push(("detailed_fault_scenario", scenario_text(&hypothesis.scenario)));
        let v = self.ask("2-0", b.clone(), feedback)?;
        let time = |k: &str| duration_field("2-0", &v, k);
        let (total, pre, fault, post) = (
            time("total_time")?,
            time("pre_validation_time")?,
            time("fault_injection_time")?,
            time("post_validation_time")?,
        );
        let mut plan = ExperimentPlan {
            total_time: total,
            pre_validation_time: pre,
            fault_injection_time: fault,
            post_validation_time: post,
            pre_validation: self.stage_plan(b.clone(), Stage::PreValidation, pre, feedback)?,
            fault_injection: self.stage_plan(b.clone(), Stage::FaultInjection, fault, feedback)?,
            post_validation: self.stage_plan(b, Stage::PostValidation, post, feedback)?,
            summary: String::new(),
        };
        let overview = |s: &StagePlan| serde_json::to_string_pretty(s).unwrap_or_default();
        let v = self.ask(
            "2-2",
            vec![
                (
                    "time_schedule_overview",
                    format!("total {total}: {pre} / {fault} / {post}"),
                ),
                ("pre_validation_overview", overview(&plan.pre_validation)),
                ("fault_injection_overview", overview(&plan.fault_injection)),
                ("post_validation_overview", overview(&plan.post_validation)),
            ],
            &[],
        )?;
        plan.summary = str_field(&v, "summary");
        Ok(plan)
    }

    fn analyze(&mut self, ctx: &Context, input: &AnalysisInput) -> Result<AnalysisReport, PlannerError> {
        let mut b = Self::base(&input.snapshot, ctx);
        b.push(("steady_states", steady_states_text(&input.hypothesis.steady_states)));
        b.push(("detailed_fault_scenario", scenario_text(&input.hypothesis.scenario)));
        b.push((
            "experiment_plan_summary",
            format!("{}\n{}", plan_text(&input.plan), input.timeline),
        ));
        b.push(("experiment_result", result_text(&input.result)));
        b.push(("reconfig_history", history_text(&input.history)));
        let v = self.ask("3-0", b, &[])?;
        Ok(AnalysisReport {
            report: str_field(&v, "report"),
            failed: input.failed.iter().map(|o| o.name.clone()).collect(),
        })
    }

    fn reconfigure(
        &mut self,
        ctx: &Context,
        input: &AnalysisInput,
        report: &AnalysisReport,
        feedback: &[Attempt],
    ) -> Result<Vec<ReconfigAction>, PlannerError> {
        let mut b = Self::base(&input.snapshot, ctx);
        b.push(("steady_states", steady_states_text(&input.hypothesis.steady_states)));
        b.push(("detailed_fault_scenario", scenario_text(&input.hypothesis.scenario)));
        b.push(("experiment_plan_summary", plan_text(&input.plan)));
        b.push(("experiment_result", result_text(&input.result)));
        b.push(("analysis_report", report.report.clone()));
        let v = self.ask("4-0", b, feedback)?;
        serde_json::from_value(v["modified_k8s_yamls"].clone()).map_err(|e| bad("4-0", e))
    }

    fn replan_fault(
        &mut self,
        old: &SystemSnapshot,
        new: &SystemSnapshot,
        plan: &ExperimentPlan,
        fault: &Fault,
        feedback: &[Attempt],
    ) -> Result<Option<SelectorSpec>, PlannerError> {
        let v = self.ask(
            "2-3",
            vec![
                ("prev_k8s_yamls", manifests_text(old)),
                ("curr_k8s_yamls", manifests_text(new)),
                ("experiment_plan_summary", plan_text(plan)),
                (
                    "curr_fault_injection",
                    json!({"name": fault.kind, "params": fault.params}).to_string(),
                ),
            ],
            feedback,
        )?;
        let selector: SelectorSpec = serde_json::from_value(v["selector"].clone()).map_err(|e| bad("2-3", e))?;
        Ok((Some(&selector) != fault.selector().as_ref() && !selector.is_empty()).then_some(selector))
    }

    fn replan_vac(
        &mut self,
        old: &SystemSnapshot,
        new: &SystemSnapshot,
        steady_state: &SteadyState,
        feedback: &[Attempt],
    ) -> Result<Option<ProbeTarget>, PlannerError> {
        let current = json!({
            "name": steady_state.name,
            "tool": steady_state.vac.tool,
            "target": target_text(&steady_state.vac.target),
            "threshold": steady_state.threshold,
        });
        let v = self.ask(
            "2-4",
            vec![
                ("prev_k8s_yamls", manifests_text(old)),
                ("curr_k8s_yamls", manifests_text(new)),
                ("prev_unittest", current.to_string()),
            ],
            feedback,
        )?;
        if v["requires_change"] != Value::Bool(true) {
            return Ok(None);
        }
        target_from("2-4", &v, steady_state.vac.tool).map(Some)
    }

    fn summarize(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        hypothesis: &Hypothesis,
        plan: &ExperimentPlan,
        history: &[ImprovementRecord],
    ) -> Result<String, PlannerError> {
        let mut b = Self::base(snapshot, ctx);
        b.push(("steady_states", steady_states_text(&hypothesis.steady_states)));
        b.push(("detailed_fault_scenario", scenario_text(&hypothesis.scenario)));
        b.push(("experiment_plan_summary", plan_text(plan)));
        b.push(("improvement_history", history_text(history)));
        let v = self.ask("EX", b, &[])?;
        Ok(str_field(&v, "summary"))
    }

    fn ledger(&self) -> &CostLedger {
        &self.ledger
    }
}

#[cfg(test)]
mod tests {
    use std::cell::RefCell;

    use super::*;
    use crate::agent::llm::{HttpResponse, LlmConfig, ENV_API_KEY};

    /// Replies in order and keeps every request body.
    struct Canned {
        replies: RefCell<Vec<&'static str>>,
        seen: RefCell<Vec<Value>>,
    }

    impl Transport for Canned {
        fn post_json(&self, _: &str, _: &[(&str, String)], body: &Value) -> Result<HttpResponse, String> {
            self.seen.borrow_mut().push(body.clone());
            let content = self.replies.borrow_mut().remove(0);
            Ok(HttpResponse {
                status: 200,
                body: json!({
                    "choices": [{"message": {"content": content}}],
                    "usage": {"prompt_tokens": 100, "completion_tokens": 10}
                })
                .to_string(),
            })
        }
    }

    fn planner(replies: Vec<&'static str>) -> LlmPlanner<Canned> {
        let config = LlmConfig::from_lookup(|k| (k == ENV_API_KEY).then(|| "k".to_string())).unwrap();
        let transport = Canned {
            replies: RefCell::new(replies),
            seen: RefCell::new(Vec::new()),
        };
        LlmPlanner::new(LlmClient::new(config, transport), ChatParams::default())
    }

    fn snapshot() -> SystemSnapshot {
        SystemSnapshot::from_sources("p", "nginx", "manifests:\n  rawYaml:\n    - pod.yaml\n", |_| {
            Some("apiVersion: v1\nkind: Pod\nmetadata:\n  name: example-pod\n  labels:\n    app: example\nspec:\n  containers:\n  - name: c\n    image: nginx\n".into())
        })
        .unwrap()
    }

    #[test]
    fn preprocess_fills_context() {
        let mut p = planner(vec![
            r#" "A single nginx pod."}"#,
            r#" [{"issue_name": "Single pod", "issue_details": "no controller", "manifests": ["pod.yaml"], "problematic_config": "kind: Pod"}]}"#,
            r#" "", "k8s_application": "web server"}"#,
            r#" "within 1 minute"}"#,
        ]);
        let ctx = p.preprocess(&snapshot(), "within 1 minute").unwrap();
        assert_eq!(
            ctx.summaries,
            [("nginx/pod.yaml".to_string(), "A single nginx pod.".to_string())]
        );
        assert_eq!(ctx.weaknesses[0].issue_name, "Single pod");
        assert_eq!(ctx.application, "web server");
        assert_eq!(p.ledger().totals().calls, 4);
        assert_eq!(p.ledger().phases["preprocess"].input_tokens, 400);
    }

    #[test]
    fn feedback_is_replayed() {
        let mut p = planner(vec![
            r#" "pod running", "threshold": {"metric": "running-ratio", "comparator": ">=", "value": 0.9}}"#,
        ]);
        let draft = SteadyStateDraft {
            name: "example-pod-running".into(),
            description: String::new(),
            tool: VacTool::ClusterApi,
            target: ProbeTarget::Resource {
                namespace: "default".into(),
                kind: ResourceKind::Pod,
                name: "example-pod".into(),
            },
        };
        let feedback = [Attempt {
            output: "{\"thought\": \"x\"}".into(),
            error: "baseline fails".into(),
        }];
        let t = p
            .define_threshold(&snapshot(), &Context::default(), &draft, &BTreeMap::new(), &feedback)
            .unwrap();
        assert_eq!(t.metric, Metric::RunningRatio);
        let seen = p.client.transport.seen.borrow();
        let msgs = seen[0]["messages"].as_array().unwrap();
        let n = msgs.len();
        assert_eq!(msgs[n - 3]["role"], "assistant");
        assert!(msgs[n - 2]["content"].as_str().unwrap().contains("baseline fails"));
        assert_eq!(msgs[n - 1]["content"], "{\"thought\":");
    }

    #[test]
    fn schema_violation_names_agent() {
        let mut p = planner(vec![
            r#" "x", "threshold": {"metric": "latency", "comparator": ">=", "value": 1}}"#,
        ]);
        let draft = SteadyStateDraft {
            name: "s".into(),
            description: String::new(),
            tool: VacTool::ClusterApi,
            target: ProbeTarget::Url { url: String::new() },
        };
        let err = p
            .define_threshold(&snapshot(), &Context::default(), &draft, &BTreeMap::new(), &[])
            .unwrap_err();
        assert!(err.0.contains("1-2") && err.0.contains("latency"), "{err}");
    }
}
