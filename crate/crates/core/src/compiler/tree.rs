use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{stage_items, ExperimentPlan, Grouping, Payload, PlanViolation, ScheduleItem, Stage};
use crate::duration::Duration;
use crate::model::{Fault, Hypothesis, ThresholdSpec, VaCSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeType {
    Task,
    Failure,
    Suspend,
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub steady_state: String,
    pub vac: VaCSpec,
    pub threshold: ThresholdSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeBody {
    None,
    Task(TaskSpec),
    Failure(Fault),
    /// Template read back from an emitted manifest.
    Template(Value),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkflowNode {
    pub name: String,
    pub node_type: NodeType,
    pub deadline: Duration,
    /// Run time of a Task/Failure, wait time of a Suspend; zero for groups.
    pub duration: Duration,
    pub children: Vec<WorkflowNode>,
    pub body: NodeBody,
    /// Set on the per-stage Serial wrappers.
    pub stage: Option<Stage>,
    /// Planned stage length; the simulator holds the stage open at least this long.
    pub stage_time: Option<Duration>,
}

/// Name, template type, deadline and child names of one node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeShape {
    pub template_type: String,
    pub deadline: Duration,
    pub children: Vec<String>,
}

impl WorkflowNode {
    fn group(name: String, node_type: NodeType, children: Vec<WorkflowNode>) -> Self {
        WorkflowNode {
            name,
            node_type,
            deadline: Duration::ZERO,
            duration: Duration::ZERO,
            children,
            body: NodeBody::None,
            stage: None,
            stage_time: None,
        }
    }

    fn suspend(name: String, wait: Duration) -> Self {
        WorkflowNode {
            duration: wait,
            ..WorkflowNode::group(name, NodeType::Suspend, Vec::new())
        }
    }

    fn leaf(name: String, item: &ScheduleItem) -> Self {
        let (node_type, body) = match &item.payload {
            Payload::Test(ss) => (
                NodeType::Task,
                NodeBody::Task(TaskSpec {
                    steady_state: ss.name.clone(),
                    vac: ss.vac.clone(),
                    threshold: ss.threshold.clone(),
                }),
            ),
            Payload::Fault(f) => (NodeType::Failure, NodeBody::Failure(f.clone())),
        };
        WorkflowNode {
            duration: item.duration,
            body,
            ..WorkflowNode::group(name, node_type, Vec::new())
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.node_type, NodeType::Task | NodeType::Failure | NodeType::Suspend)
    }

    /// `Task`, `Suspend`, `Serial`, `Parallel`, or the fault kind for failure nodes.
    pub fn template_type(&self) -> String {
        match (&self.node_type, &self.body) {
            (NodeType::Failure, NodeBody::Failure(f)) => f.kind.as_str().to_string(),
            (NodeType::Failure, NodeBody::Template(t)) => t
                .get("templateType")
                .and_then(Value::as_str)
                .unwrap_or("Failure")
                .to_string(),
            (t, _) => format!("{t:?}"),
        }
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&WorkflowNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }

    pub fn find(&self, name: &str) -> Option<&WorkflowNode> {
        self.walk().into_iter().find(|n| n.name == name)
    }

    /// Task and Failure leaves in pre-order (Suspends excluded).
    pub fn work_leaves(&self) -> Vec<&WorkflowNode> {
        self.walk()
            .into_iter()
            .filter(|n| matches!(n.node_type, NodeType::Task | NodeType::Failure))
            .collect()
    }

    pub fn shapes(&self) -> BTreeMap<String, NodeShape> {
        self.walk()
            .into_iter()
            .map(|n| {
                (
                    n.name.clone(),
                    NodeShape {
                        template_type: n.template_type(),
                        deadline: n.deadline,
                        children: n.children.iter().map(|c| c.name.clone()).collect(),
                    },
                )
            })
            .collect()
    }
}

struct Names(BTreeSet<String>);

impl Names {
    /// Returns `base`, or `base-2`, `base-3`… when taken.
    fn claim(&mut self, base: &str) -> String {
        let mut name = base.to_string();
        let mut n = 2;
        while self.0.contains(&name) {
            name = format!("{base}-{n}");
            n += 1;
        }
        self.0.insert(name.clone());
        name
    }
}

fn suffix(k: usize) -> String {
    if k <= 1 {
        String::new()
    } else {
        k.to_string()
    }
}

fn stage_node(stage: Stage, items: &[ScheduleItem], grouping: Grouping, names: &mut Names) -> WorkflowNode {
    let p = stage.prefix();
    let leaves: Vec<(Duration, WorkflowNode)> = items
        .iter()
        .map(|it| (it.grace_period, WorkflowNode::leaf(names.claim(&it.name), it)))
        .collect();
    match grouping {
        Grouping::PerItem => {
            let any_grace = leaves.iter().any(|(g, _)| !g.is_zero());
            let mut k = 0;
            let mut children = Vec::new();
            for (grace, leaf) in leaves {
                if grace.is_zero() {
                    children.push(leaf);
                } else {
                    k += 1;
                    let s = suffix(k);
                    let suspend = WorkflowNode::suspend(names.claim(&format!("{p}-suspend{s}")), grace);
                    children.push(WorkflowNode::group(
                        names.claim(&format!("{p}-suspend-workflow{s}")),
                        NodeType::Serial,
                        vec![suspend, leaf],
                    ));
                }
            }
            let name = if any_grace {
                format!("{p}-overlapped-workflows")
            } else {
                format!("{p}-parallel-workflows")
            };
            WorkflowNode::group(names.claim(&name), NodeType::Parallel, children)
        }
        Grouping::Coalesced => {
            let mut groups: BTreeMap<Duration, Vec<WorkflowNode>> = BTreeMap::new();
            for (grace, leaf) in leaves {
                groups.entry(grace).or_default().push(leaf);
            }
            if groups.len() == 1 && groups.contains_key(&Duration::ZERO) {
                let leaves = groups.remove(&Duration::ZERO).unwrap_or_default();
                return WorkflowNode::group(
                    names.claim(&format!("{p}-parallel-workflows")),
                    NodeType::Parallel,
                    leaves,
                );
            }
            let mut children = Vec::new();
            let mut k = 0;
            for (grace, mut group) in groups {
                if grace.is_zero() {
                    if group.len() == 1 {
                        children.push(group.remove(0));
                    } else {
                        children.push(WorkflowNode::group(
                            names.claim(&format!("{p}-parallel-workflow")),
                            NodeType::Parallel,
                            group,
                        ));
                    }
                    continue;
                }
                k += 1;
                let s = suffix(k);
                let body = if group.len() == 1 {
                    group.remove(0)
                } else {
                    WorkflowNode::group(
                        names.claim(&format!("{p}-parallel-workflows{s}")),
                        NodeType::Parallel,
                        group,
                    )
                };
                let suspend = WorkflowNode::suspend(names.claim(&format!("{p}-suspend{s}")), grace);
                children.push(WorkflowNode::group(
                    names.claim(&format!("{p}-suspend-workflow{s}")),
                    NodeType::Serial,
                    vec![suspend, body],
                ));
            }
            WorkflowNode::group(
                names.claim(&format!("{p}-overlapped-workflows")),
                NodeType::Parallel,
                children,
            )
        }
    }
}

/// Builds the entry tree: one Serial per stage around the stage's Parallel, under a Serial entry.
pub fn group_nodes(
    plan: &ExperimentPlan,
    hypothesis: &Hypothesis,
    grouping: Grouping,
) -> Result<WorkflowNode, Vec<PlanViolation>> {
    let mut names = Names(BTreeSet::from(["the-entry".to_string()]));
    for stage in Stage::ALL {
        names.0.insert(stage.phase_node());
    }
    let mut phases = Vec::new();
    for stage in Stage::ALL {
        let items = stage_items(plan, hypothesis, stage)?;
        let inner = stage_node(stage, &items, grouping, &mut names);
        let mut wrapper = WorkflowNode::group(stage.phase_node(), NodeType::Serial, vec![inner]);
        wrapper.stage = Some(stage);
        wrapper.stage_time = Some(plan.stage_time(stage));
        phases.push(wrapper);
    }
    Ok(WorkflowNode::group("the-entry".into(), NodeType::Serial, phases))
}

/// Task = pad + duration; Suspend/Failure = own time; Serial = sum; Parallel = max; stage wrapper = sum + pad.
pub fn compute_deadlines(mut node: WorkflowNode, pad: Duration) -> WorkflowNode {
    node.children = node.children.into_iter().map(|c| compute_deadlines(c, pad)).collect();
    node.deadline = match node.node_type {
        NodeType::Task => pad + node.duration,
        NodeType::Failure | NodeType::Suspend => node.duration,
        NodeType::Serial => {
            let sum: Duration = node.children.iter().map(|c| c.deadline).sum();
            if node.stage.is_some() {
                sum + pad
            } else {
                sum
            }
        }
        NodeType::Parallel => node
            .children
            .iter()
            .map(|c| c.deadline)
            .fold(Duration::ZERO, Duration::max),
    };
    node
}
