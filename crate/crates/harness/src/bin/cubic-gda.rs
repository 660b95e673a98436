use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cubic_gda_harness::acceptance;
use cubic_gda_harness::config::{Algorithm, ExperimentConfig, ProblemSpec};
use cubic_gda_harness::experiment::{run_experiment, run_scaling_study};
use cubic_gda_harness::HarnessError;

#[derive(Parser)]
#[command(name = "cubic-gda", version, about = "Cubic-GDA experiments and acceptance checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv, summary.json and convergence.svg.
    Run(Common),
    /// Run an eps grid and write scaling.csv next to per-eps artifacts.
    Scale {
        #[command(flatten)]
        common: Common,
        /// Comma-separated accuracy grid, overriding the config.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
    },
    /// Run the acceptance suite; exits 1 if any criterion fails.
    Verify {
        /// Run only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Option<Vec<u8>>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    eps: Option<f64>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::new(ProblemSpec::StrictSaddle, Algorithm::CubicGda, 0.05),
        };
        if let Some(p) = &self.problem {
            c.problem = ProblemSpec::preset(p)?;
        }
        if let Some(a) = &self.algo {
            c.algorithm = Algorithm::parse(a)?;
        }
        if let Some(e) = self.eps {
            c.eps = e;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.out {
            c.out_dir = Some(o.clone());
        }
        if c.out_dir.is_none() {
            c.out_dir = Some(PathBuf::from("out"));
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run(common) => {
            let c = common.resolve()?;
            let o = run_experiment(&c)?;
            println!(
                "{}: {} after {} iterations (T' = {}), output in {}",
                c.algorithm.name(),
                o.result.termination.as_str(),
                o.result.records.len() - 1,
                o.result.t_prime.map_or("none".into(), |t| t.to_string()),
                c.out_dir.as_ref().unwrap().display()
            );
            if let Some(m) = &o.result.message {
                eprintln!("{m}");
            }
            Ok(o.exit_code())
        }
        Command::Scale { common, grid } => {
            let mut c = common.resolve()?;
            if grid.is_some() {
                c.eps_grid = grid;
            }
            if c.eps_grid.is_none() {
                c.eps_grid = Some(vec![0.2, 0.1, 0.05]);
            }
            let s = run_scaling_study(&c)?;
            for r in &s.rows {
                println!(
                    "eps {:<8} T' {:<8} budget {:<10} {}",
                    r.eps,
                    r.t_prime.map_or("-".into(), |t| t.to_string()),
                    r.budget.map_or("-".into(), |b| b.to_string()),
                    r.termination
                );
            }
            Ok(s.exit_code())
        }
        Command::Verify { only } => {
            let ids: Vec<u8> = only.unwrap_or_else(|| (1..=acceptance::CRITERIA).collect());
            let mut failed = 0;
            for id in ids {
                let report = acceptance::run_criterion(id)
                    .ok_or_else(|| HarnessError::Usage(format!("no criterion {id}")))?;
                println!("{}", report.line());
                failed += usize::from(!report.passed);
            }
            Ok(i32::from(failed > 0))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("cubic-gda: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
