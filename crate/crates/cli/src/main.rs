//! Command-line driver: single runs, solver comparisons and the constant
//! checks.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use surfflow::harness::{self, RunConfig, SolverKind};
use surfflow::phase_field::{LaplacianMode, Mobility};

#[derive(Parser)]
#[command(name = "surfflow", version, about = "Area-preserving geodesic curvature flow on graph surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one benchmark problem.
    Run(RunArgs),
    /// Compare phase-field runs against the sharp-interface benchmark.
    Compare(CompareArgs),
    /// Check the profile constants, coefficient conversion and curvature oracles.
    Constants,
    /// List the benchmark problems.
    Problems,
}

/// Settings shared by `run` and `compare`; flags override the config file.
#[derive(Args)]
struct Common {
    /// TOML file with run settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    problem: Option<u32>,
    /// Node count of the sharp-interface curve.
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    laplacian: Option<LaplacianMode>,
    /// Mobility function: `de_gennes` or `unit`.
    #[arg(long)]
    mobility: Option<Mobility>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    solver: Option<SolverKind>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated interface widths.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
    epsilons: Vec<f64>,
    /// Directory holding (or receiving) the individual runs and the table
    /// `p<problem>_table.csv`.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> surfflow::Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(p) = self.problem {
            c.problem = p;
        }
        if let Some(n) = self.nodes {
            c.nodes = n;
        }
        if let Some(l) = self.laplacian {
            c.laplacian = l;
        }
        if let Some(m) = self.mobility {
            c.mobility = m;
        }
        Ok(c)
    }
}

enum Failure {
    Solver(surfflow::Error),
    Verification(String),
}

impl From<surfflow::Error> for Failure {
    fn from(e: surfflow::Error) -> Self {
        Failure::Solver(e)
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Run(args) => {
            let mut c = args.common.config()?;
            if let Some(s) = args.solver {
                c.solver = s;
            }
            if let Some(e) = args.epsilon {
                c.epsilon = e;
            }
            if let Some(o) = args.out {
                c.out = o;
            }
            let summary = harness::run(&c)?;
            print!("{}", summary.render());
        }
        Command::Compare(args) => {
            let template = args.common.config()?;
            let rows = harness::compare(
                template.problem,
                &args.epsilons,
                template.nodes,
                &args.out,
                &template,
            )?;
            let table = args.out.join(format!("p{}_table.csv", template.problem));
            harness::write_table(&rows, &table)?;
            println!("problem  epsilon  l2_norm     equil");
            for r in &rows {
                println!(
                    "{:<8} {:<8} {:<11.6} {:.6}",
                    r.problem, r.epsilon, r.l2_norm, r.equil
                );
            }
        }
        Command::Constants => {
            let report = harness::verify_constants()?;
            print!("{}", report.render());
            if !report.all_passed() {
                return Err(Failure::Verification("constant checks failed".into()));
            }
        }
        Command::Problems => print!("{}", harness::problems_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Solver(e)) => {
            error!("{e}");
            ExitCode::from(1)
        }
        Err(Failure::Verification(m)) => {
            error!("{m}");
            ExitCode::from(2)
        }
    }
}
