//! Planner agents: prompt templates, structured output, verification loops and cost accounting.

pub mod ledger;
pub mod llm;
pub mod llm_planner;
pub mod planner;
pub mod prompt;
pub mod retry;
pub mod schema;
pub mod stub;

pub use ledger::{ledger_cost, Cost, CostLedger, Pricing};
pub use llm_planner::LlmPlanner;
pub use planner::{AnalysisInput, Context, Planner, PlannerError, SteadyStateDraft};
pub use retry::{verification_loop, Attempt, LoopOutcome};
pub use stub::{Sabotage, StubPlanner};
