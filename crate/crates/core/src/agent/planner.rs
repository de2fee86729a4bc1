//! The planner interface the cycle drives, and text renderings shared by implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::ledger::CostLedger;
use super::retry::Attempt;
use crate::compiler::{ExperimentPlan, Stage};
use crate::manifest::{ReconfigAction, SystemSnapshot};
use crate::model::{
    AnalysisReport, ExperimentResult, FailureScenario, Fault, Hypothesis, ImprovementRecord, Metric, ProbeTarget,
    SelectorSpec, SteadyState, ThresholdSpec, VaCOutcome, VacTool,
};
use crate::vac::SampleTrace;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct PlannerError(pub String);

impl PlannerError {
    pub fn new(msg: impl Into<String>) -> Self {
        PlannerError(msg.into())
    }
}

impl From<super::llm::LlmError> for PlannerError {
    fn from(e: super::llm::LlmError) -> Self {
        PlannerError(e.to_string())
    }
}

impl From<super::prompt::PromptError> for PlannerError {
    fn from(e: super::prompt::PromptError) -> Self {
        PlannerError(e.to_string())
    }
}

impl From<super::schema::OutputError> for PlannerError {
    fn from(e: super::schema::OutputError) -> Self {
        PlannerError(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Weakness {
    pub issue_name: String,
    pub issue_details: String,
    pub manifests: Vec<String>,
    pub problematic_config: String,
}

/// What the preprocessing phase learned about the system.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    /// (manifest path, summary) pairs.
    pub summaries: Vec<(String, String)>,
    pub weaknesses: Vec<Weakness>,
    pub application: String,
    pub ce_instructions: String,
}

impl Context {
    /// The system description handed to every later agent.
    pub fn user_input(&self, snapshot: &SystemSnapshot) -> String {
        let mut out = String::from("K8s manifests:\n");
        out.push_str(&manifests_text(snapshot));
        out.push_str("\nSummaries:\n");
        for (path, s) in &self.summaries {
            let _ = writeln!(out, "- {path}: {s}");
        }
        if !self.weaknesses.is_empty() {
            out.push_str("\nResiliency issues:\n");
            for w in &self.weaknesses {
                let _ = writeln!(out, "- {}: {}", w.issue_name, w.issue_details);
            }
        }
        if !self.application.is_empty() {
            let _ = write!(out, "\nApplication: {}\n", self.application);
        }
        out
    }
}

/// A steady state before its threshold is fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SteadyStateDraft {
    pub name: String,
    pub description: String,
    pub tool: VacTool,
    pub target: ProbeTarget,
}

/// Everything the analysis and reconfiguration agents see about a failed run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisInput {
    pub snapshot: SystemSnapshot,
    pub hypothesis: Hypothesis,
    pub plan: ExperimentPlan,
    pub result: ExperimentResult,
    pub timeline: String,
    pub failed: Vec<VaCOutcome>,
    pub history: Vec<ImprovementRecord>,
}

pub trait Planner {
    fn preprocess(&mut self, snapshot: &SystemSnapshot, instructions: &str) -> Result<Context, PlannerError>;

    /// `None` when the defined steady states are sufficient.
    fn propose_steady_state(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        defined: &[SteadyState],
        feedback: &[Attempt],
    ) -> Result<Option<SteadyStateDraft>, PlannerError>;

    /// `baselines` holds one trace per metric the draft's tool can measure.
    fn define_threshold(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        draft: &SteadyStateDraft,
        baselines: &BTreeMap<Metric, SampleTrace>,
        feedback: &[Attempt],
    ) -> Result<ThresholdSpec, PlannerError>;

    fn draft_scenario(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        steady_states: &[SteadyState],
        feedback: &[Attempt],
    ) -> Result<FailureScenario, PlannerError>;

    fn plan_experiment(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        hypothesis: &Hypothesis,
        feedback: &[Attempt],
    ) -> Result<ExperimentPlan, PlannerError>;

    fn analyze(&mut self, ctx: &Context, input: &AnalysisInput) -> Result<AnalysisReport, PlannerError>;

    fn reconfigure(
        &mut self,
        ctx: &Context,
        input: &AnalysisInput,
        report: &AnalysisReport,
        feedback: &[Attempt],
    ) -> Result<Vec<ReconfigAction>, PlannerError>;

    /// New selector for a fault after reconfiguration; `None` keeps the current one.
    fn replan_fault(
        &mut self,
        old: &SystemSnapshot,
        new: &SystemSnapshot,
        plan: &ExperimentPlan,
        fault: &Fault,
        feedback: &[Attempt],
    ) -> Result<Option<SelectorSpec>, PlannerError>;

    /// New probe target for a steady state after reconfiguration; `None` keeps the current one.
    fn replan_vac(
        &mut self,
        old: &SystemSnapshot,
        new: &SystemSnapshot,
        steady_state: &SteadyState,
        feedback: &[Attempt],
    ) -> Result<Option<ProbeTarget>, PlannerError>;

    fn summarize(
        &mut self,
        snapshot: &SystemSnapshot,
        ctx: &Context,
        hypothesis: &Hypothesis,
        plan: &ExperimentPlan,
        history: &[ImprovementRecord],
    ) -> Result<String, PlannerError>;

    fn ledger(&self) -> &CostLedger;
}

/// Ledger phase an agent id belongs to.
pub fn phase_of(agent: &str) -> &'static str {
    match agent.split('-').next() {
        Some("0") => "preprocess",
        Some("1") => "hypothesis",
        Some("2") => "experiment",
        Some("3") => "analysis",
        Some("4") => "improvement",
        _ => "postprocess",
    }
}

pub fn manifests_text(snapshot: &SystemSnapshot) -> String {
    let mut out = String::new();
    for f in &snapshot.files {
        let _ = write!(
            out,
            "```{}\n{}\n```\n",
            snapshot.display_path(&f.path),
            f.text.trim_end()
        );
    }
    out
}

pub fn target_text(target: &ProbeTarget) -> String {
    match target {
        ProbeTarget::Resource { namespace, kind, name } => format!("{kind:?} {namespace}/{name}"),
        ProbeTarget::Selector {
            namespace,
            kind,
            labels,
        } => {
            let l: Vec<String> = labels.iter().map(|(k, v)| format!("{k}={v}")).collect();
            format!("{kind:?} in {namespace} with labels {}", l.join(","))
        }
        ProbeTarget::Url { url } => url.clone(),
    }
}

pub fn steady_states_text(states: &[SteadyState]) -> String {
    if states.is_empty() {
        return "(none yet)".into();
    }
    let mut out = String::new();
    for (i, s) in states.iter().enumerate() {
        let t = &s.threshold;
        let _ = writeln!(
            out,
            "{}. {}: {} [{} {} {} via {:?} on {}]",
            i + 1,
            s.name,
            s.description,
            t.metric,
            t.comparator.symbol(),
            t.value,
            s.vac.tool,
            target_text(&s.vac.target)
        );
    }
    out
}

pub fn scenario_text(scenario: &FailureScenario) -> String {
    serde_json::to_string_pretty(scenario).expect("scenario serializes")
}

pub fn plan_text(plan: &ExperimentPlan) -> String {
    let mut out = format!(
        "total {}: pre-validation {}, fault-injection {}, post-validation {}\n",
        plan.total_time, plan.pre_validation_time, plan.fault_injection_time, plan.post_validation_time
    );
    for stage in Stage::ALL {
        let offset = plan.stage_offset(stage);
        for (s, name, grace, duration) in plan.timings() {
            if s == stage {
                let start = offset + grace;
                let _ = writeln!(out, "- {stage}: {name} from {start} for {duration}");
            }
        }
    }
    out
}

pub fn result_text(result: &ExperimentResult) -> String {
    let mut out = String::new();
    for o in &result.outcomes {
        let _ = writeln!(out, "{} {}", if o.passed { "PASS" } else { "FAIL" }, o.name);
    }
    let failed: Vec<&VaCOutcome> = result.failed().collect();
    if !failed.is_empty() {
        out.push_str("\nFailed unit test logs:\n");
        for o in failed {
            let tail: Vec<&str> = o.log.lines().rev().take(2).collect();
            let _ = writeln!(
                out,
                "{}:\n{}",
                o.name,
                tail.into_iter().rev().collect::<Vec<_>>().join("\n")
            );
        }
    }
    out
}

pub fn history_text(history: &[ImprovementRecord]) -> String {
    if history.is_empty() {
        return "(none)".into();
    }
    let mut out = String::new();
    for (i, r) in history.iter().enumerate() {
        let failed: Vec<&str> = r.result.failed().map(|o| o.name.as_str()).collect();
        let _ = writeln!(out, "Try {}: failed [{}]", i + 1, failed.join(", "));
        for a in &r.actions {
            let _ = writeln!(out, "  {} {}: {}", a.mode, a.fname, a.explanation);
        }
    }
    out
}
