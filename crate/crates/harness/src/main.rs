use std::path::PathBuf;
use std::process::ExitCode;

use bpre_harness::gates::{exit_code, Gate};
use bpre_harness::output::RunDir;
use bpre_harness::pipeline::{self, Context};
use bpre_harness::{Experiment, ExperimentConfig, GateStatus, HarnessError};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bpre", version, about = "Survival asymptotics of branching processes in random environment")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the renewal tables U and V.
    Tables(Common),
    /// Ratio-stabilization checks of the survival asymptotics.
    Verify(Common),
    /// Property checks of the samplers, tables and pgf machinery.
    Selfcheck(Common),
    /// Estimate the limit constant Θ.
    Theta(Common),
    /// Dump raw environment and population trajectories.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed (the BPRE_SEED variable is read first).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; the results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// Parent directory of the run directories.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(experiment: Experiment, c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    cfg.experiment = experiment;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(out) = &c.out {
        cfg.out = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report(gates: &[Gate]) {
    for g in gates {
        let status = match g.status {
            GateStatus::Pass => "PASS",
            GateStatus::Fail => "FAIL",
            GateStatus::Inconclusive => "INCONCLUSIVE",
        };
        println!("{status:<12} {}: {}", g.name, g.detail);
    }
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    let (experiment, common) = match &cli.command {
        Command::Tables(c) => (Experiment::Tables, c),
        Command::Verify(c) => (Experiment::Verify, c),
        Command::Selfcheck(c) => (Experiment::Selfcheck, c),
        Command::Theta(c) => (Experiment::Theta, c),
        Command::Simulate(c) => (Experiment::Simulate, c),
    };
    let cfg = load(experiment, common)?;
    let ctx = Context::new(&cfg)?;
    let run = RunDir::create(&cfg)?;
    let mut written = Vec::new();
    let gates = match experiment {
        Experiment::Tables => {
            let t = pipeline::build_tables(&ctx)?;
            written.extend(pipeline::write_tables(&run, &t)?);
            Vec::new()
        }
        Experiment::Verify => {
            let t = pipeline::build_tables(&ctx)?;
            written.extend(pipeline::write_tables(&run, &t)?);
            let o = pipeline::run_verify(&ctx, &t)?;
            written.extend(pipeline::write_verify(&run, &o)?);
            o.gates
        }
        Experiment::Selfcheck => {
            let t = pipeline::build_tables(&ctx)?;
            written.extend(pipeline::write_tables(&run, &t)?);
            let o = pipeline::run_selfcheck(&ctx, &t)?;
            written.extend(pipeline::write_selfcheck(&run, &o)?);
            o.gates
        }
        Experiment::Theta => {
            let u = pipeline::build_u_table(&ctx)?;
            let o = pipeline::run_theta(&ctx, &u)?;
            written.extend(pipeline::write_theta(&run, &o)?);
            o.gates
        }
        Experiment::Simulate => {
            let rows = pipeline::simulate_rows(&ctx)?;
            written.extend(pipeline::write_simulate(&run, &rows)?);
            Vec::new()
        }
    };
    for p in &written {
        eprintln!("wrote {}", p.display());
    }
    report(&gates);
    Ok(exit_code(&gates))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
