use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sols::eluder::{eluder_dim, full_domain, SearchBudget};
use sols::harness::config::RunConfig;
use sols::harness::sweep::{parse_seeds, run_sweep};
use sols::harness::run_once;
use sols::FunctionClass;

#[derive(Parser)]
#[command(name = "sols", version, about = "Optimistic least squares contextual bandit simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one replication and write steps.csv and summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every (policy, seed) pair and aggregate regret at T/4, T/2 and T.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// `a..b` (exclusive), `a..=b` (inclusive) or `s1,s2,...`.
        #[arg(long)]
        seeds: String,
        /// Comma-separated policy names.
        #[arg(long)]
        policies: String,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exhaustive eluder dimension of a class file, with a certificate.
    Eluder {
        #[arg(long)]
        class: PathBuf,
        #[arg(long)]
        epsilon: f64,
        /// Maximum number of search states per epsilon.
        #[arg(long)]
        budget: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Returns whether the command finished with zero degeneracy events and zero failed assertions.
fn execute(command: Command) -> sols::Result<bool> {
    match command {
        Command::Run { config, out } => {
            let cfg = RunConfig::read_from(&config)?;
            let result = run_once(&cfg)?;
            result.write_to(&out)?;
            let s = &result.summary;
            println!(
                "{} seed={} T={} cum_regret={} width_sum={} optimism_violation_rounds={} degeneracy_events={} invariant_violations={}",
                s.policy,
                s.seed,
                s.horizon,
                s.cum_regret,
                s.width_sum,
                s.optimism_violation_rounds,
                s.degeneracy_events,
                s.invariant_violations
            );
            eprintln!("wall time: {:.3}s", s.wall_time.as_secs_f64());
            Ok(result.is_clean())
        }
        Command::Sweep {
            config,
            seeds,
            policies,
            parallel,
            out,
        } => {
            let cfg = RunConfig::read_from(&config)?;
            let seeds = parse_seeds(&seeds)?;
            let policies: Vec<String> = policies
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            let summary = run_sweep(&cfg, &seeds, &policies, parallel)?;
            summary.write_to(&out)?;
            print!("{}", summary.summary_csv());
            Ok(summary.is_clean())
        }
        Command::Eluder {
            class,
            epsilon,
            budget,
        } => {
            let class = FunctionClass::read_from(&class)?;
            let mut limits = SearchBudget::default();
            if let Some(n) = budget {
                limits.max_states = n;
            }
            let result = eluder_dim(
                &class,
                &class.full_mask(),
                &full_domain(&class),
                epsilon,
                &limits,
            )?;
            println!("eluder_dimension {}", result.dimension);
            println!("epsilon_prime {}", result.eps_prime);
            print!("{}", result.certificate);
            Ok(result.certificate.verify(&class, &class.full_mask()))
        }
    }
}
