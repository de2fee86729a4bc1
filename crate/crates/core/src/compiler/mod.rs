//! Three-stage experiment plans and their compilation into Chaos Mesh Workflow manifests.

mod emit;
mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::duration::Duration;
use crate::faults::validate_fault;
use crate::model::{Fault, FaultKind, Hypothesis, SteadyState};
use crate::vac::runner_command;

pub use emit::{
    emit_workflow, normalize_manifest, parse_workflow, patch_workflow, structural_diff, tree_from_manifest, PatchError,
    WorkflowMeta,
};
pub use tree::{compute_deadlines, group_nodes, NodeBody, NodeShape, NodeType, TaskSpec, WorkflowNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    PreValidation,
    FaultInjection,
    PostValidation,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::PreValidation, Stage::FaultInjection, Stage::PostValidation];

    /// Prefix of the stage's group node names.
    pub fn prefix(self) -> &'static str {
        match self {
            Stage::PreValidation => "pre-validation",
            Stage::FaultInjection => "fault-injection",
            Stage::PostValidation => "post-validation",
        }
    }

    /// Prefix of the stage's unit-test leaf names.
    pub fn leaf_prefix(self) -> &'static str {
        match self {
            Stage::PreValidation => "pre",
            Stage::FaultInjection => "fault",
            Stage::PostValidation => "post",
        }
    }

    pub fn phase_node(self) -> String {
        format!("{}-phase", self.prefix())
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitTestItem {
    pub name: String,
    pub grace_period: Duration,
    pub duration: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultItem {
    pub name: FaultKind,
    #[serde(default)]
    pub name_id: u32,
    pub grace_period: Duration,
    pub duration: Duration,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StagePlan {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub thought: String,
    #[serde(default)]
    pub unit_tests: Vec<UnitTestItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fault_injection: Vec<FaultItem>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub total_time: Duration,
    pub pre_validation_time: Duration,
    pub fault_injection_time: Duration,
    pub post_validation_time: Duration,
    pub pre_validation: StagePlan,
    pub fault_injection: StagePlan,
    pub post_validation: StagePlan,
    #[serde(default)]
    pub summary: String,
}

impl ExperimentPlan {
    pub fn stage(&self, stage: Stage) -> &StagePlan {
        match stage {
            Stage::PreValidation => &self.pre_validation,
            Stage::FaultInjection => &self.fault_injection,
            Stage::PostValidation => &self.post_validation,
        }
    }

    pub fn stage_time(&self, stage: Stage) -> Duration {
        match stage {
            Stage::PreValidation => self.pre_validation_time,
            Stage::FaultInjection => self.fault_injection_time,
            Stage::PostValidation => self.post_validation_time,
        }
    }

    /// Start of a stage relative to the experiment start.
    pub fn stage_offset(&self, stage: Stage) -> Duration {
        Stage::ALL
            .into_iter()
            .take_while(|s| *s != stage)
            .map(|s| self.stage_time(s))
            .sum()
    }

    /// Every (grace, duration) pair in plan order; used to check intent preservation.
    pub fn timings(&self) -> Vec<(Stage, String, Duration, Duration)> {
        let mut out = Vec::new();
        for stage in Stage::ALL {
            let s = self.stage(stage);
            for t in &s.unit_tests {
                out.push((stage, t.name.clone(), t.grace_period, t.duration));
            }
            for f in &s.fault_injection {
                out.push((stage, format!("{}#{}", f.name, f.name_id), f.grace_period, f.duration));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Test(SteadyState),
    Fault(Fault),
}

/// A plan item resolved against the hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleItem {
    pub name: String,
    pub is_fault: bool,
    pub grace_period: Duration,
    pub duration: Duration,
    pub payload: Payload,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanViolation {
    pub stage: Option<Stage>,
    pub item: Option<String>,
    pub message: String,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.stage, &self.item) {
            (Some(s), Some(i)) => write!(f, "{s} / {i}: {}", self.message),
            (Some(s), None) => write!(f, "{s}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

fn pv(stage: Option<Stage>, item: Option<&str>, message: String) -> PlanViolation {
    PlanViolation {
        stage,
        item: item.map(str::to_string),
        message,
    }
}

/// Checks the stage-sum identity, per-item bounds, stage contents and name resolution.
pub fn validate_plan(plan: &ExperimentPlan, hypothesis: &Hypothesis) -> Result<(), Vec<PlanViolation>> {
    let mut out = Vec::new();
    let sum = plan.pre_validation_time + plan.fault_injection_time + plan.post_validation_time;
    if sum != plan.total_time {
        out.push(pv(
            None,
            None,
            format!("stage times sum to {sum} but total_time is {}", plan.total_time),
        ));
    }
    for stage in Stage::ALL {
        let s = plan.stage(stage);
        let bound = plan.stage_time(stage);
        if s.unit_tests.is_empty() && s.fault_injection.is_empty() {
            out.push(pv(Some(stage), None, "stage has no items".into()));
        }
        if stage != Stage::FaultInjection && !s.fault_injection.is_empty() {
            out.push(pv(
                Some(stage),
                None,
                "faults may only be injected in the fault-injection stage".into(),
            ));
        }
        let mut check = |name: &str, grace: Duration, duration: Duration| {
            if grace + duration > bound {
                out.push(pv(
                    Some(stage),
                    Some(name),
                    format!("grace_period {grace} + duration {duration} exceeds the stage time {bound}"),
                ));
            }
            if duration.is_zero() {
                out.push(pv(Some(stage), Some(name), "duration must be at least 1s".into()));
            }
        };
        for t in &s.unit_tests {
            check(&t.name, t.grace_period, t.duration);
        }
        for f in &s.fault_injection {
            check(&format!("{}#{}", f.name, f.name_id), f.grace_period, f.duration);
        }
        for t in &s.unit_tests {
            match hypothesis.steady_state(&t.name) {
                None => out.push(pv(
                    Some(stage),
                    Some(&t.name),
                    "unit test does not name a steady state".into(),
                )),
                Some(ss) => {
                    if let Err(e) = runner_command(&ss.vac, t.duration.max(Duration::from_secs(1))) {
                        out.push(pv(Some(stage), Some(&t.name), e.to_string()));
                    }
                }
            }
        }
        for f in &s.fault_injection {
            let label = format!("{}#{}", f.name, f.name_id);
            match hypothesis.scenario.find(f.name, f.name_id) {
                None => out.push(pv(
                    Some(stage),
                    Some(&label),
                    "fault is not part of the failure scenario".into(),
                )),
                Some(fault) => {
                    if let Err(vs) = validate_fault(fault) {
                        for v in vs {
                            out.push(pv(Some(stage), Some(&label), v.to_string()));
                        }
                    }
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Lowercases and replaces anything outside `[a-z0-9-]` with a hyphen.
pub fn sanitize_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        let c = c.to_ascii_lowercase();
        if c.is_ascii_lowercase() || c.is_ascii_digit() {
            out.push(c);
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

/// Resolves a stage's items (unit tests first, then faults) with their leaf names.
pub fn stage_items(
    plan: &ExperimentPlan,
    hypothesis: &Hypothesis,
    stage: Stage,
) -> Result<Vec<ScheduleItem>, Vec<PlanViolation>> {
    let s = plan.stage(stage);
    let mut items = Vec::new();
    let mut errors = Vec::new();
    for t in &s.unit_tests {
        match hypothesis.steady_state(&t.name) {
            Some(ss) => items.push(ScheduleItem {
                name: format!("{}-unittest-{}", stage.leaf_prefix(), sanitize_name(&t.name)),
                is_fault: false,
                grace_period: t.grace_period,
                duration: t.duration,
                payload: Payload::Test(ss.clone()),
            }),
            None => errors.push(pv(Some(stage), Some(&t.name), "unknown steady state".into())),
        }
    }
    let mut per_kind: BTreeMap<FaultKind, usize> = BTreeMap::new();
    for f in &s.fault_injection {
        *per_kind.entry(f.name).or_default() += 1;
    }
    for f in &s.fault_injection {
        match hypothesis.scenario.find(f.name, f.name_id) {
            Some(fault) => {
                let base = format!("fault-{}", f.name.as_str().to_ascii_lowercase());
                let name = if per_kind[&f.name] > 1 {
                    format!("{base}-{}", f.name_id + 1)
                } else {
                    base
                };
                items.push(ScheduleItem {
                    name,
                    is_fault: true,
                    grace_period: f.grace_period,
                    duration: f.duration,
                    payload: Payload::Fault(fault.clone()),
                });
            }
            None => errors.push(pv(Some(stage), Some(f.name.as_str()), "unknown fault".into())),
        }
    }
    if errors.is_empty() {
        Ok(items)
    } else {
        Err(errors)
    }
}

/// How items with a grace period are wrapped into Suspend subtrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// Items sharing a grace period share one Suspend; reproduces the reference manifests.
    #[default]
    Coalesced,
    /// Every item with a grace period gets its own Serial(Suspend, leaf).
    PerItem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileOptions {
    pub grouping: Grouping,
    /// Slack added to task nodes and stage wrappers.
    pub pad: Duration,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            grouping: Grouping::Coalesced,
            pad: Duration::from_mins(5),
        }
    }
}

/// validate → group → deadlines.
pub fn compile(
    plan: &ExperimentPlan,
    hypothesis: &Hypothesis,
    options: &CompileOptions,
) -> Result<WorkflowNode, Vec<PlanViolation>> {
    validate_plan(plan, hypothesis)?;
    let tree = group_nodes(plan, hypothesis, options.grouping)?;
    Ok(compute_deadlines(tree, options.pad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sanitizes_names() {
        assert_eq!(sanitize_name("Example Pod_Running"), "example-pod-running");
        assert_eq!(sanitize_name("--a--b--"), "a-b");
        assert_eq!(sanitize_name("carts-db-replicas"), "carts-db-replicas");
    }
}
