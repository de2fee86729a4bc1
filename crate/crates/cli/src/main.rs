use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chaoscycle::agent::llm::{ChatParams, LlmClient, LlmConfig, UreqTransport};
use chaoscycle::agent::{ledger_cost, LlmPlanner, Planner, StubPlanner};
use chaoscycle::cycle::{run_cycle, write_artifacts, BackendKind, CycleConfig, SimulatorBackend};
use chaoscycle::manifest::load_project;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "chaoscycle",
    version,
    about = "Run automated chaos-engineering cycles on Kubernetes manifests"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Simulator,
    Live,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerKind {
    Stub,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Run one cycle on a project folder or zip holding skaffold.yaml.
    Run {
        project: PathBuf,
        /// Instruction text, or a path to a file containing it.
        #[arg(long)]
        instructions: Option<String>,
        #[arg(long, value_enum, default_value = "simulator")]
        backend: Backend,
        #[arg(long, default_value_t = 2)]
        max_steady_states: usize,
        #[arg(long, default_value_t = 3)]
        max_retries: u32,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        temperature: f64,
        #[arg(long, value_enum, default_value = "stub")]
        planner: PlannerKind,
        /// Artifact directory.
        #[arg(long, default_value = "chaoscycle-out")]
        out: PathBuf,
    },
}

fn read_instructions(arg: Option<String>) -> Result<String, String> {
    match arg {
        None => Ok(String::new()),
        Some(a) if Path::new(&a).is_file() => std::fs::read_to_string(&a).map_err(|e| format!("cannot read {a}: {e}")),
        Some(a) => Ok(a),
    }
}

fn run(cli: Cli) -> Result<bool, String> {
    let Command::Run {
        project,
        instructions,
        backend,
        max_steady_states,
        max_retries,
        seed,
        temperature,
        planner,
        out,
    } = cli.command;
    let config = CycleConfig {
        max_steady_states,
        max_retries,
        seed,
        temperature,
        backend: match backend {
            Backend::Simulator => BackendKind::Simulator,
            Backend::Live => BackendKind::Live,
        },
        instructions: read_instructions(instructions)?,
        ..CycleConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    if config.backend == BackendKind::Live {
        return Err(
            "the live backend needs a cluster driver, which this build does not include; use --backend simulator"
                .into(),
        );
    }
    let snapshot = load_project(&project).map_err(|e| e.to_string())?;
    let mut planner: Box<dyn Planner> = match planner {
        PlannerKind::Stub => Box::new(StubPlanner::new()),
        PlannerKind::Llm => {
            let cfg = LlmConfig::from_env().map_err(|e| e.to_string())?;
            Box::new(LlmPlanner::new(
                LlmClient::new(cfg, UreqTransport::default()),
                ChatParams { temperature, seed },
            ))
        }
    };
    let mut sim = SimulatorBackend::new(seed, config.sim);
    let output = run_cycle(snapshot, &config, planner.as_mut(), &mut sim).map_err(|e| e.to_string())?;
    write_artifacts(&output, &out).map_err(|e| e.to_string())?;
    println!("{}", output.summary);
    let totals = output.ledger.totals();
    println!(
        "tokens: {} in / {} out{}, cost {}",
        totals.input_tokens,
        totals.output_tokens,
        if output.ledger.approximate {
            " (approximate)"
        } else {
            ""
        },
        ledger_cost(&output.ledger)
    );
    println!("artifacts: {}", out.display());
    Ok(output.status.is_success())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
