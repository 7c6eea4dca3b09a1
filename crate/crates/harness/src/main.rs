use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dagcrew_core::planner::HttpConfig;
use dagcrew_core::taskgraph::ExportFormat;
use dagcrew_harness::config::{PlannerConfig, RunConfig};
use dagcrew_harness::{generate, graph, report, run, HarnessError};

#[derive(Parser)]
#[command(name = "dagcrew", version, about = "Run and score multi-agent DAG planning episodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerKind {
    Scripted,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its artifacts to a run directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        planner: Option<PlannerKind>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated escape-room spec.
    Generate {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, required_unless_present = "batch")]
        difficulty: Option<u32>,
        #[arg(long, default_value_t = 2)]
        agents: usize,
        /// Output file, or directory with --batch.
        #[arg(long)]
        out: PathBuf,
        /// Five seeds starting at --seed times difficulties 1..=5.
        #[arg(long)]
        batch: bool,
    },
    /// Tabulate metrics from run directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
    },
    /// Print the task graph saved after a round.
    Graph {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        round: u32,
        #[arg(long, default_value = "dot")]
        format: String,
    },
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Run {
            config,
            agents,
            seed,
            planner,
            out,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(n) = agents {
                cfg.set_agent_count(n);
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            match (planner, &cfg.planner) {
                (Some(PlannerKind::Scripted), _) => cfg.planner = PlannerConfig::Scripted,
                (Some(PlannerKind::Http), PlannerConfig::Scripted) => {
                    cfg.planner = PlannerConfig::Http(HttpConfig::default())
                }
                _ => {}
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            cfg.validate()?;
            let s = run::run(&cfg)?;
            println!(
                "{}: {} after {} rounds, C = {:.3}, {} ticks",
                s.dir.display(),
                s.termination.name(),
                s.report.rounds,
                s.report.completion,
                s.report.ticks
            );
        }
        Command::Generate {
            seed,
            difficulty,
            agents,
            out,
            batch,
        } => {
            if batch {
                let files = generate::generate_batch(seed, agents, &out)?;
                println!("wrote {} specs to {}", files.len(), out.display());
            } else {
                generate::generate(seed, difficulty.expect("clap requires it"), agents, &out)?;
                println!("wrote {}", out.display());
            }
        }
        Command::Report { dirs } => {
            let out = report::report(&dirs)?;
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", out.table);
        }
        Command::Graph { run, round, format } => {
            let format = format
                .parse::<ExportFormat>()
                .map_err(|e| HarnessError::Usage(e.to_string()))?;
            print!("{}", graph::graph(&run, round, format)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
