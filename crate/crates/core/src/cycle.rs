//! The chaos-engineering cycle: preprocess, hypothesis, experiment, analysis and improvement,
//! looping the last three until the hypothesis holds or retries run out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::agent::{
    ledger_cost, verification_loop, AnalysisInput, Attempt, Context, CostLedger, LoopOutcome, Planner, SteadyStateDraft,
};
use crate::compiler::{
    compile, emit_workflow, normalize_manifest, patch_workflow, structural_diff, validate_plan, CompileOptions,
    ExperimentPlan, Grouping, NodeBody, WorkflowMeta, WorkflowNode,
};
use crate::duration::Duration;
use crate::faults::validate_fault;
use crate::manifest::{apply_reconfig, ManifestError, SystemSnapshot, Workspace};
use crate::model::{
    hypothesis_satisfied, is_identifier, script_file_name, validate_scenario, validate_steady_state, AnalysisReport,
    Comparator, CycleState, ExperimentResult, Fault, Hypothesis, ImprovementRecord, Metric, Phase, ProbeTarget,
    SelectorSpec, SteadyState, ThresholdSpec, VaCOutcome, VaCSpec,
};
use crate::simulator::{build_cluster, inspect_baseline, simulate, ClusterModel, SimOptions, Timeline};
use crate::vac::{evaluate_threshold, render_probe_script, SampleTrace};

/// Length of the unperturbed inspection behind every threshold.
pub const INSPECTION_WINDOW: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Simulator,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleConfig {
    pub max_steady_states: usize,
    pub max_retries: u32,
    pub seed: u64,
    pub temperature: f64,
    /// Live backend only.
    pub clean_before: bool,
    /// Live backend only.
    pub clean_after: bool,
    pub backend: BackendKind,
    pub instructions: String,
    pub grouping: Grouping,
    pub sim: SimOptions,
}

impl Default for CycleConfig {
    fn default() -> Self {
        CycleConfig {
            max_steady_states: 2,
            max_retries: 3,
            seed: 42,
            temperature: 0.0,
            clean_before: true,
            clean_after: true,
            backend: BackendKind::Simulator,
            instructions: String::new(),
            grouping: Grouping::Coalesced,
            sim: SimOptions::default(),
        }
    }
}

impl CycleConfig {
    pub fn validate(&self) -> Result<(), CycleError> {
        if self.max_retries < 1 {
            return Err(CycleError::Config("max_retries must be at least 1".into()));
        }
        if self.max_steady_states < 1 {
            return Err(CycleError::Config("max_steady_states must be at least 1".into()));
        }
        Ok(())
    }

    fn meta(&self) -> WorkflowMeta {
        WorkflowMeta {
            name: "chaos-experiment".into(),
            workspace: "cycle".into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CycleError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("backend failed: {0}")]
    Backend(String),
    #[error("internal invariant broken: {0}")]
    Internal(String),
}

/// Where experiments run: the simulator, or a cluster driver supplied by the caller.
pub trait ExecutionBackend {
    /// Brings the system to the given snapshot version.
    fn deploy(&mut self, snapshot: &SystemSnapshot) -> Result<(), CycleError>;
    fn inspect(&mut self, steady_state: &SteadyState, duration: Duration) -> Result<SampleTrace, CycleError>;
    /// Pod identifiers a fault selector reaches on the deployed system.
    fn resolve(&mut self, selector: &SelectorSpec) -> Result<Vec<String>, CycleError>;
    fn execute(&mut self, workflow: &WorkflowNode, manifest: &str) -> Result<(Timeline, Vec<VaCOutcome>), CycleError>;
}

pub struct SimulatorBackend {
    pub seed: u64,
    pub options: SimOptions,
    cluster: Option<ClusterModel>,
}

impl SimulatorBackend {
    pub fn new(seed: u64, options: SimOptions) -> Self {
        SimulatorBackend {
            seed,
            options,
            cluster: None,
        }
    }

    fn cluster(&self) -> Result<&ClusterModel, CycleError> {
        self.cluster
            .as_ref()
            .ok_or_else(|| CycleError::Backend("nothing deployed".into()))
    }
}

impl ExecutionBackend for SimulatorBackend {
    fn deploy(&mut self, snapshot: &SystemSnapshot) -> Result<(), CycleError> {
        self.cluster = Some(build_cluster(snapshot));
        Ok(())
    }

    fn inspect(&mut self, steady_state: &SteadyState, duration: Duration) -> Result<SampleTrace, CycleError> {
        Ok(inspect_baseline(self.cluster()?, steady_state, duration, &self.options))
    }

    fn resolve(&mut self, selector: &SelectorSpec) -> Result<Vec<String>, CycleError> {
        Ok(self
            .cluster()?
            .select_pods(selector)
            .into_iter()
            .map(|k| format!("{}/{}", k.namespace, k.name))
            .collect())
    }

    fn execute(&mut self, workflow: &WorkflowNode, _manifest: &str) -> Result<(Timeline, Vec<VaCOutcome>), CycleError> {
        simulate(workflow, self.cluster()?, self.seed, &self.options).map_err(|e| CycleError::Backend(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleStatus {
    Satisfied,
    SatisfiedWithoutChange,
    RetriesExhausted,
}

impl CycleStatus {
    pub fn is_success(self) -> bool {
        !matches!(self, CycleStatus::RetriesExhausted)
    }
}

/// A verification loop that ran out of attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exhaustion {
    pub step: String,
    pub transcript: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub snapshot_version: u32,
    pub hypothesis: Hypothesis,
    pub manifest: String,
    pub timeline: Timeline,
    pub result: ExperimentResult,
    pub analysis: Option<AnalysisReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleOutput {
    pub summary: String,
    pub final_snapshot: SystemSnapshot,
    /// Every snapshot version in order; the first is the input.
    pub snapshots: Vec<SystemSnapshot>,
    pub history: CycleState,
    pub ledger: CostLedger,
    pub status: CycleStatus,
    pub context: Option<Context>,
    pub plan: Option<ExperimentPlan>,
    pub experiments: Vec<ExperimentRecord>,
    pub exhausted: Option<Exhaustion>,
}

impl CycleOutput {
    pub fn hypothesis(&self) -> Option<&Hypothesis> {
        self.experiments.last().map(|e| &e.hypothesis)
    }
}

/// Outcome of the mechanical pass/fail check after an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Finish,
    Proceed(Box<AnalysisInput>),
}

/// Finishes iff every scheduled test passed; otherwise packs what the analysis agent sees.
pub fn analysis_gate(
    result: &ExperimentResult,
    snapshot: &SystemSnapshot,
    hypothesis: &Hypothesis,
    plan: &ExperimentPlan,
    timeline: &Timeline,
    history: &[ImprovementRecord],
) -> Gate {
    if hypothesis_satisfied(result).unwrap_or(false) {
        return Gate::Finish;
    }
    Gate::Proceed(Box::new(AnalysisInput {
        snapshot: snapshot.clone(),
        hypothesis: hypothesis.clone(),
        plan: plan.clone(),
        result: result.clone(),
        timeline: timeline.summary(),
        failed: result.failed().cloned().collect(),
        history: history.to_vec(),
    }))
}

/// Selector and script changes that carry a workflow over to a reconfigured system.
#[derive(Debug, Clone, PartialEq)]
pub struct Replan {
    pub hypothesis: Hypothesis,
    /// Failure node → new selector.
    pub selectors: BTreeMap<String, SelectorSpec>,
    /// Task node → new script path under the workflow workspace.
    pub scripts: BTreeMap<String, String>,
}

struct Driver<'a> {
    config: &'a CycleConfig,
    planner: &'a mut dyn Planner,
    backend: &'a mut dyn ExecutionBackend,
    times: BTreeMap<&'static str, u64>,
}

enum Step<T> {
    Done(T),
    Exhausted(Exhaustion),
}

fn check<T>(ok: bool, msg: impl FnOnce() -> T) -> Result<(), T> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

#[cfg(not(target_arch = "wasm32"))]
fn stopwatch<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_millis() as u64)
}

/// Browsers without a monotonic clock binding record zero wall time.
#[cfg(target_arch = "wasm32")]
fn stopwatch<T>(f: impl FnOnce() -> T) -> (T, u64) {
    (f(), 0)
}

impl Driver<'_> {
    fn timed<T>(&mut self, phase: &'static str, f: impl FnOnce(&mut Self) -> T) -> T {
        let (out, ms) = stopwatch(|| f(self));
        *self.times.entry(phase).or_default() += ms;
        out
    }

    /// Runs one planner step through a verification loop bounded by `max_retries`.
    fn verified<T: std::fmt::Debug>(
        &mut self,
        step_name: &str,
        mut step: impl FnMut(&mut dyn Planner, &[Attempt]) -> Result<T, String>,
        mut verify: impl FnMut(&mut dyn ExecutionBackend, &T) -> Result<(), String>,
    ) -> Step<T> {
        let planner = &mut *self.planner;
        let backend = &mut *self.backend;
        match verification_loop(|fb| step(planner, fb), |v| verify(backend, v), self.config.max_retries) {
            LoopOutcome::Verified { value, .. } => Step::Done(value),
            LoopOutcome::Exhausted { transcript } => Step::Exhausted(Exhaustion {
                step: step_name.to_string(),
                transcript,
            }),
        }
    }

    fn baselines(&mut self, draft: &SteadyStateDraft) -> Result<BTreeMap<Metric, SampleTrace>, CycleError> {
        let mut out = BTreeMap::new();
        for metric in [
            Metric::ReadyRatio,
            Metric::RunningRatio,
            Metric::RequestFailureRate,
            Metric::ReadyReplicasMin,
        ] {
            if metric.tool() != draft.tool {
                continue;
            }
            let probe = SteadyState {
                name: draft.name.clone(),
                description: String::new(),
                threshold: ThresholdSpec::new(metric, Comparator::Ge, 0.0),
                vac: VaCSpec::new(draft.tool, draft.target.clone(), String::new()),
                baseline: None,
            };
            out.insert(metric, self.backend.inspect(&probe, INSPECTION_WINDOW)?);
        }
        Ok(out)
    }

    fn hypothesis_phase(&mut self, snapshot: &SystemSnapshot, ctx: &Context) -> Result<Step<Hypothesis>, CycleError> {
        let max = self.config.max_steady_states;
        let mut states: Vec<SteadyState> = Vec::new();
        while states.len() < max {
            let taken: Vec<String> = states.iter().map(|s| s.name.clone()).collect();
            let defined = states.clone();
            let draft = match self.verified(
                "steady-state",
                |p, fb| {
                    p.propose_steady_state(snapshot, ctx, &defined, fb)
                        .map_err(|e| e.to_string())
                },
                |_, d: &Option<SteadyStateDraft>| match d {
                    None => Ok(()),
                    Some(d) => {
                        check(is_identifier(&d.name), || format!("{:?} is not a valid name", d.name))?;
                        check(!taken.contains(&d.name), || format!("{} is already defined", d.name))?;
                        d.target.validate(d.tool).map_err(|e| e.to_string())
                    }
                },
            ) {
                Step::Done(Some(d)) => d,
                Step::Done(None) => break,
                Step::Exhausted(x) => return Ok(Step::Exhausted(x)),
            };
            let baselines = self.baselines(&draft)?;
            let threshold = match self.verified(
                "threshold",
                |p, fb| {
                    p.define_threshold(snapshot, ctx, &draft, &baselines, fb)
                        .map_err(|e| e.to_string())
                },
                |_, t: &ThresholdSpec| {
                    t.validate().map_err(|e| e.to_string())?;
                    check(t.metric.tool() == draft.tool, || {
                        format!("{} cannot be measured with {:?}", t.metric, draft.tool)
                    })?;
                    let trace = &baselines[&t.metric];
                    let o = evaluate_threshold(t, trace).map_err(|e| e.to_string())?;
                    check(o.passed, || {
                        format!(
                            "the unperturbed system does not meet this threshold (measured {})",
                            o.measured
                        )
                    })
                },
            ) {
                Step::Done(t) => t,
                Step::Exhausted(x) => return Ok(Step::Exhausted(x)),
            };
            let mut trace = baselines[&threshold.metric].clone();
            trace.steady_state_name = draft.name.clone();
            let ss = SteadyState {
                vac: VaCSpec::new(
                    draft.tool,
                    draft.target.clone(),
                    script_file_name(&draft.name, 0, draft.tool),
                ),
                name: draft.name,
                description: draft.description,
                threshold,
                baseline: Some(trace),
            };
            validate_steady_state(&ss).map_err(|e| CycleError::Internal(e.to_string()))?;
            states.push(ss);
        }
        if states.is_empty() {
            return Ok(Step::Exhausted(Exhaustion {
                step: "steady-state".into(),
                transcript: vec![Attempt {
                    output: "None".into(),
                    error: "no steady state was proposed".into(),
                }],
            }));
        }
        let scenario = match self.verified(
            "scenario",
            |p, fb| p.draft_scenario(snapshot, ctx, &states, fb).map_err(|e| e.to_string()),
            |backend, s| {
                validate_scenario(s).map_err(|e| e.to_string())?;
                for f in s.faults() {
                    dry_run(backend, f)?;
                }
                Ok(())
            },
        ) {
            Step::Done(s) => s,
            Step::Exhausted(x) => return Ok(Step::Exhausted(x)),
        };
        Hypothesis::new(states, scenario, max)
            .map(Step::Done)
            .map_err(|e| CycleError::Internal(e.to_string()))
    }

    fn replan(
        &mut self,
        old: &SystemSnapshot,
        new: &SystemSnapshot,
        hypothesis: &Hypothesis,
        plan: &ExperimentPlan,
        tree: &WorkflowNode,
    ) -> Result<Step<Replan>, CycleError> {
        let mut next = hypothesis.clone();
        let mut selectors = BTreeMap::new();
        let mut scripts = BTreeMap::new();
        for group in next.scenario.sequence.iter_mut() {
            for fault in group.iter_mut() {
                let current = fault.clone();
                let sel = match self.verified(
                    "replan-fault",
                    |p, fb| p.replan_fault(old, new, plan, &current, fb).map_err(|e| e.to_string()),
                    |backend, s: &Option<SelectorSpec>| {
                        let mut f = current.clone();
                        if let Some(sel) = s {
                            f.params.insert("selector".into(), sel.to_value());
                        }
                        dry_run(backend, &f)
                    },
                ) {
                    Step::Done(s) => s,
                    Step::Exhausted(x) => return Ok(Step::Exhausted(x)),
                };
                if let Some(sel) = sel {
                    fault.params.insert("selector".into(), sel.to_value());
                    for leaf in tree.work_leaves() {
                        if let NodeBody::Failure(f) = &leaf.body {
                            if f.kind == fault.kind && f.name_id == fault.name_id {
                                selectors.insert(leaf.name.clone(), sel.clone());
                            }
                        }
                    }
                }
            }
        }
        for ss in next.steady_states.iter_mut() {
            let current = ss.clone();
            let outcome = self.verified(
                "replan-vac",
                |p, fb| p.replan_vac(old, new, &current, fb).map_err(|e| e.to_string()),
                |backend, t: &Option<ProbeTarget>| {
                    let mut probe = current.clone();
                    if let Some(t) = t {
                        t.validate(probe.vac.tool).map_err(|e| e.to_string())?;
                        probe.vac.target = t.clone();
                    }
                    let trace = backend.inspect(&probe, INSPECTION_WINDOW).map_err(|e| e.to_string())?;
                    let o = evaluate_threshold(&probe.threshold, &trace).map_err(|e| e.to_string())?;
                    check(o.passed, || {
                        format!(
                            "{} does not hold on the reconfigured system before any fault",
                            probe.name
                        )
                    })
                },
            );
            let target = match outcome {
                Step::Done(t) => t,
                Step::Exhausted(x) => return Ok(Step::Exhausted(x)),
            };
            if let Some(t) = target {
                ss.vac.target = t;
                ss.vac.version += 1;
                ss.vac.script_path = script_file_name(&ss.name, ss.vac.version, ss.vac.tool);
                ss.baseline = Some(self.backend.inspect(ss, INSPECTION_WINDOW)?);
                let path = format!("{}/{}", self.config.meta().workspace, ss.vac.script_path);
                for leaf in tree.work_leaves() {
                    if let NodeBody::Task(t) = &leaf.body {
                        if t.steady_state == ss.name {
                            scripts.insert(leaf.name.clone(), path.clone());
                        }
                    }
                }
            }
        }
        Ok(Step::Done(Replan {
            hypothesis: next,
            selectors,
            scripts,
        }))
    }
}

/// Fault-catalog validation plus selector resolution on the deployed system.
fn dry_run(backend: &mut dyn ExecutionBackend, fault: &Fault) -> Result<(), String> {
    validate_fault(fault).map_err(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))?;
    if let Some(sel) = fault.selector() {
        let pods = backend.resolve(&sel).map_err(|e| e.to_string())?;
        check(!pods.is_empty(), || {
            format!("{}#{} selector matches no pods", fault.kind, fault.name_id)
        })?;
    }
    Ok(())
}

fn scheduled(tree: &WorkflowNode) -> Vec<String> {
    tree.work_leaves()
        .into_iter()
        .filter(|n| matches!(n.body, NodeBody::Task(_)))
        .map(|n| n.name.clone())
        .collect()
}

/// Runs a whole cycle on an already loaded system.
pub fn run_cycle(
    snapshot: SystemSnapshot,
    config: &CycleConfig,
    planner: &mut dyn Planner,
    backend: &mut dyn ExecutionBackend,
) -> Result<CycleOutput, CycleError> {
    config.validate()?;
    let mut d = Driver {
        config,
        planner,
        backend,
        times: BTreeMap::new(),
    };
    let mut out = CycleOutput {
        summary: String::new(),
        final_snapshot: snapshot.clone(),
        snapshots: vec![snapshot.clone()],
        history: CycleState::default(),
        ledger: CostLedger::default(),
        status: CycleStatus::RetriesExhausted,
        context: None,
        plan: None,
        experiments: Vec::new(),
        exhausted: None,
    };

    let ctx = d.timed("preprocess", |d| -> Result<Context, CycleError> {
        d.backend.deploy(&snapshot)?;
        d.planner
            .preprocess(&snapshot, &config.instructions)
            .map_err(|e| CycleError::Backend(format!("preprocessing failed: {e}")))
    })?;
    out.context = Some(ctx.clone());

    out.history.phase = Phase::Hypothesis;
    let hypothesis = match d.timed("hypothesis", |d| d.hypothesis_phase(&snapshot, &ctx))? {
        Step::Done(h) => h,
        Step::Exhausted(x) => return Ok(finish(d, out, &ctx, None, Some(x))),
    };

    out.history.phase = Phase::Experiment;
    let plan = match d.timed("experiment", |d| {
        d.verified(
            "plan",
            |p, fb| {
                p.plan_experiment(&snapshot, &ctx, &hypothesis, fb)
                    .map_err(|e| e.to_string())
            },
            |_, plan| {
                validate_plan(plan, &hypothesis)
                    .map_err(|v| v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))
            },
        )
    }) {
        Step::Done(p) => p,
        Step::Exhausted(x) => return Ok(finish(d, out, &ctx, Some(&hypothesis), Some(x))),
    };
    out.plan = Some(plan.clone());

    let options = CompileOptions {
        grouping: config.grouping,
        ..CompileOptions::default()
    };
    let compile_with = |h: &Hypothesis| {
        compile(&plan, h, &options)
            .map_err(|v| CycleError::Internal(v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")))
    };
    let meta = config.meta();
    let mut current = snapshot;
    let mut hyp = hypothesis;
    let mut tree = compile_with(&hyp)?;
    let mut manifest = emit_workflow(&tree, &meta).map_err(|e| CycleError::Internal(e.to_string()))?;

    loop {
        out.history.phase = Phase::Experiment;
        let (timeline, outcomes) = d.timed("experiment", |d| d.backend.execute(&tree, &manifest))?;
        let result = ExperimentResult {
            scheduled: scheduled(&tree),
            outcomes,
        };
        out.experiments.push(ExperimentRecord {
            snapshot_version: current.version,
            hypothesis: hyp.clone(),
            manifest: manifest.clone(),
            timeline: timeline.clone(),
            result: result.clone(),
            analysis: None,
        });

        out.history.phase = Phase::Analysis;
        let input = match analysis_gate(
            &result,
            &current,
            &hyp,
            &plan,
            &timeline,
            &out.history.improvement_history,
        ) {
            Gate::Finish => {
                out.status = if out.history.improvement_history.is_empty() {
                    CycleStatus::SatisfiedWithoutChange
                } else {
                    CycleStatus::Satisfied
                };
                break;
            }
            Gate::Proceed(input) => input,
        };
        let report = d.timed("analysis", |d| d.planner.analyze(&ctx, &input));
        let report = match report {
            Ok(r) => r,
            Err(e) => {
                out.exhausted = Some(Exhaustion {
                    step: "analysis".into(),
                    transcript: vec![Attempt {
                        output: String::new(),
                        error: e.to_string(),
                    }],
                });
                break;
            }
        };
        if let Some(last) = out.experiments.last_mut() {
            last.analysis = Some(report.clone());
        }
        if out.experiments.len() as u32 > config.max_retries {
            out.status = CycleStatus::RetriesExhausted;
            break;
        }

        out.history.phase = Phase::Improvement;
        let previous: Vec<_> = out
            .history
            .improvement_history
            .iter()
            .map(|r| r.actions.clone())
            .collect();
        let actions = d.timed("improvement", |d| {
            d.verified(
                "reconfigure",
                |p, fb| p.reconfigure(&ctx, &input, &report, fb).map_err(|e| e.to_string()),
                |_, actions| {
                    check(!actions.is_empty(), || "no reconfiguration proposed".to_string())?;
                    check(!previous.contains(actions), || {
                        "this exact reconfiguration was already tried".to_string()
                    })?;
                    apply_reconfig(&current, actions).map(|_| ()).map_err(|e| e.to_string())
                },
            )
        });
        let actions = match actions {
            Step::Done(a) => a,
            Step::Exhausted(x) => {
                out.exhausted = Some(x);
                break;
            }
        };
        let next = apply_reconfig(&current, &actions)?;
        out.history.improvement_history.push(ImprovementRecord {
            result,
            analysis: report,
            actions,
        });
        out.history.retries_used += 1;
        out.history.workspace_version = next.version;
        out.snapshots.push(next.clone());

        let replan = d.timed("improvement", |d| -> Result<Step<Replan>, CycleError> {
            d.backend.deploy(&next)?;
            d.replan(&current, &next, &hyp, &plan, &tree)
        })?;
        let replan = match replan {
            Step::Done(r) => r,
            Step::Exhausted(x) => {
                out.exhausted = Some(x);
                current = next;
                break;
            }
        };
        let fresh_tree = compile_with(&replan.hypothesis)?;
        let fresh = emit_workflow(&fresh_tree, &meta).map_err(|e| CycleError::Internal(e.to_string()))?;
        let patched = patch_workflow(&manifest, &replan.selectors, &replan.scripts)
            .map_err(|e| CycleError::Internal(e.to_string()))?;
        let norm = |m: &str| normalize_manifest(m).map_err(|e| CycleError::Internal(e.to_string()));
        let diff = structural_diff(&norm(&patched)?, &norm(&fresh)?);
        if !diff.is_empty() {
            return Err(CycleError::Internal(format!(
                "patched workflow differs from the recompiled one at {}",
                diff.join(", ")
            )));
        }
        current = next;
        hyp = replan.hypothesis;
        tree = fresh_tree;
        manifest = patched;
    }
    out.final_snapshot = current;
    let h = hyp.clone();
    Ok(finish(d, out, &ctx, Some(&h), None))
}

fn finish(
    mut d: Driver<'_>,
    mut out: CycleOutput,
    ctx: &Context,
    hypothesis: Option<&Hypothesis>,
    exhausted: Option<Exhaustion>,
) -> CycleOutput {
    out.history.phase = Phase::Postprocess;
    if exhausted.is_some() {
        out.exhausted = exhausted;
    }
    if out.exhausted.is_some() {
        out.status = CycleStatus::RetriesExhausted;
    }
    let summary = match (hypothesis, &out.plan) {
        (Some(h), Some(plan)) => {
            let history = out.history.improvement_history.clone();
            let snap = out.final_snapshot.clone();
            d.timed("postprocess", |d| d.planner.summarize(&snap, ctx, h, plan, &history))
                .ok()
        }
        _ => None,
    };
    out.summary = render_summary(&out, summary.as_deref());
    out.ledger = d.planner.ledger().clone();
    for (phase, ms) in &d.times {
        out.ledger.record_time(phase, *ms);
    }
    out
}

fn render_summary(out: &CycleOutput, body: Option<&str>) -> String {
    let mut s = String::from("# Chaos engineering cycle\n\n");
    let status = serde_json::to_value(out.status).ok();
    let _ = writeln!(s, "Status: {}", status.as_ref().and_then(|v| v.as_str()).unwrap_or("?"));
    let _ = writeln!(s, "Experiments run: {}", out.experiments.len());
    let _ = writeln!(s, "Improvements: {}", out.history.improvement_history.len());
    let _ = writeln!(s, "Final manifest version: {}", out.final_snapshot.version);
    for (i, e) in out.experiments.iter().enumerate() {
        let failed: Vec<&str> = e.result.failed().map(|o| o.name.as_str()).collect();
        let _ = writeln!(
            s,
            "- experiment {} on v{}: {} of {} tests passed{}",
            i + 1,
            e.snapshot_version,
            e.result.outcomes.len() - failed.len(),
            e.result.outcomes.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed {}", failed.join(", "))
            }
        );
    }
    if let Some(x) = &out.exhausted {
        let _ = writeln!(
            s,
            "\nGave up at step `{}` after {} attempt(s):",
            x.step,
            x.transcript.len()
        );
        for a in &x.transcript {
            let _ = writeln!(s, "- {}", a.error);
        }
    }
    if let Some(b) = body {
        let _ = write!(s, "\n{}\n", b.trim_end());
    }
    s
}

/// Writes every artifact of a cycle under `dir`.
pub fn write_artifacts(out: &CycleOutput, dir: &Path) -> Result<(), ManifestError> {
    let ws = Workspace::create(dir)?;
    for snap in &out.snapshots {
        crate::manifest::write_snapshot(snap, &ws.version_dir(snap.version))?;
    }
    if let Some(ctx) = &out.context {
        ws.write_file("hypothesis/context.json", &pretty(ctx))?;
    }
    let mut scripts_done = std::collections::BTreeSet::new();
    for e in &out.experiments {
        for ss in &e.hypothesis.steady_states {
            if scripts_done.insert(ss.vac.script_path.clone()) {
                if let Ok(script) = render_probe_script(&ss.vac, &ss.threshold) {
                    ws.write_file(&format!("hypothesis/{}", ss.vac.script_path), &script)?;
                }
                if let Some(trace) = &ss.baseline {
                    let log: String = trace
                        .samples
                        .iter()
                        .map(|s| format!("t={}s {}\n", s.t, s.value))
                        .collect();
                    ws.write_file(
                        &format!("hypothesis/baseline_{}_mod{}.log", ss.name, ss.vac.version),
                        &log,
                    )?;
                }
            }
        }
    }
    if let Some(h) = out.hypothesis() {
        ws.write_file("hypothesis/hypothesis.json", &pretty(h))?;
    }
    if let Some(plan) = &out.plan {
        ws.write_file("experiment/plan.json", &pretty(plan))?;
    }
    for (i, e) in out.experiments.iter().enumerate() {
        let n = i + 1;
        ws.write_file(&format!("experiment/workflow_{n}.yaml"), &e.manifest)?;
        ws.write_file(&format!("results/result_{n}.json"), &pretty(&e.result))?;
        ws.write_file(&format!("results/timeline_{n}.txt"), &e.timeline.summary())?;
        for o in &e.result.outcomes {
            ws.write_file(&format!("results/logs_{n}/{}.log", o.name), &o.log)?;
        }
        if let Some(a) = &e.analysis {
            ws.write_file(&format!("analysis/report_{n}.md"), &a.report)?;
        }
    }
    for (i, r) in out.history.improvement_history.iter().enumerate() {
        ws.write_file(&format!("analysis/reconfig_{}.json", i + 1), &pretty(&r.actions))?;
    }
    if let Some(x) = &out.exhausted {
        ws.write_file("analysis/exhausted.json", &pretty(x))?;
    }
    ws.write_file("summary.md", &out.summary)?;
    ws.write_file("ledger.json", &ledger_json(&out.ledger))?;
    Ok(())
}

fn pretty<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifact serializes")
}

/// Per-phase rows plus totals, as exported to `ledger.json`.
pub fn ledger_json(ledger: &CostLedger) -> String {
    let v = serde_json::json!({
        "approximate": ledger.approximate,
        "pricing": ledger.pricing,
        "rows": ledger.rows(),
        "total_cost": ledger_cost(ledger).to_string(),
    });
    serde_json::to_string_pretty(&v).expect("ledger serializes")
}
