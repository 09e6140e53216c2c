//! `stochoed` command-line harness.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stochoed::{BaselineMode, Criterion, PenaltyKind, StepSchedule};

use crate::config::{EstimatorMode, ExperimentConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "stochoed", version, about = "Stochastic binary sensor-placement design")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimize the Bernoulli policy and sample a design.
    Run {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Constant step size.
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        ens_size: Option<usize>,
        #[arg(long, value_enum)]
        baseline: Option<BaselineArg>,
        /// Record the enumerated expected objective in the trace.
        #[arg(long)]
        exact_objective: bool,
    },
    /// Evaluate every design.
    BruteForce {
        #[command(flatten)]
        common: Common,
    },
    /// Relaxed and expected objective over a lattice (two sensors only).
    Surface {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid_n: Option<usize>,
    },
    /// Compare gradient estimators with the exact gradient on a lattice.
    GradientCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        grid_n: Option<usize>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long, value_enum)]
        estimator: Option<EstimatorArg>,
    },
    /// Build the configured problem and export it.
    Assemble {
        #[command(flatten)]
        common: Common,
    },
    /// Gradient-estimator variance for each baseline at one policy.
    BaselineStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        replicates: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Threads used for objective evaluations.
    #[arg(long)]
    workers: Option<usize>,
    /// Largest sensor count allowed for enumeration.
    #[arg(long)]
    guard: Option<usize>,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long, value_enum)]
    penalty: Option<PenaltyArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    budget: Option<u32>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineArg {
    None,
    Empirical,
    Optimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Exact,
    Plain,
    Empirical,
    Optimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    AOptimal,
    DOptimal,
    PaperToyClosedForm,
}

#[derive(Clone, Copy, ValueEnum)]
enum PenaltyArg {
    None,
    L0,
    Budget,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.outputs.dir = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.optimizer.seed = seed;
        }
        if let Some(guard) = self.guard {
            cfg.oracle.guard = guard;
        }
        if let Some(c) = self.criterion {
            cfg.objective.criterion = match c {
                CriterionArg::AOptimal => Criterion::AOptimal,
                CriterionArg::DOptimal => Criterion::DOptimal,
                CriterionArg::PaperToyClosedForm => Criterion::PaperToyClosedForm,
            };
        }
        if let Some(p) = self.penalty {
            cfg.objective.penalty = match p {
                PenaltyArg::None => PenaltyKind::None,
                PenaltyArg::L0 => PenaltyKind::L0,
                PenaltyArg::Budget => PenaltyKind::Budget,
            };
        }
        if let Some(alpha) = self.alpha {
            cfg.objective.alpha = alpha;
        }
        if let Some(budget) = self.budget {
            cfg.objective.budget = Some(budget);
        }
        Ok(cfg)
    }

    fn install_pool(&self) -> Result<(), CliError> {
        if let Some(n) = self.workers {
            if n == 0 {
                return Err(CliError::Config("--workers must be at least 1".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
        }
        Ok(())
    }
}

fn execute(command: Command) -> Result<serde_json::Value, CliError> {
    let (common, apply): (&Common, Box<dyn Fn(&mut ExperimentConfig)>) = match &command {
        Command::Run {
            common,
            max_iters,
            eta,
            ens_size,
            baseline,
            exact_objective,
        } => {
            let (max_iters, eta, ens_size, baseline, exact) = (*max_iters, *eta, *ens_size, *baseline, *exact_objective);
            (
                common,
                Box::new(move |cfg| {
                    if let Some(m) = max_iters {
                        cfg.optimizer.max_iters = m;
                    }
                    if let Some(eta) = eta {
                        cfg.optimizer.step = StepSchedule::Constant { eta };
                    }
                    if let Some(n) = ens_size {
                        cfg.optimizer.ens_size = n;
                    }
                    if let Some(b) = baseline {
                        cfg.optimizer.baseline_mode = match b {
                            BaselineArg::None => BaselineMode::None,
                            BaselineArg::Empirical => BaselineMode::Empirical,
                            BaselineArg::Optimal => BaselineMode::Optimal,
                        };
                    }
                    cfg.oracle.exact_objective |= exact;
                }),
            )
        }
        Command::Surface { common, grid_n } => {
            let grid_n = *grid_n;
            (
                common,
                Box::new(move |cfg| {
                    if let Some(n) = grid_n {
                        cfg.surface.grid_n = n;
                    }
                }),
            )
        }
        Command::GradientCheck {
            common,
            grid_n,
            replicates,
            estimator,
        } => {
            let (grid_n, replicates, estimator) = (*grid_n, *replicates, *estimator);
            (
                common,
                Box::new(move |cfg| {
                    if let Some(n) = grid_n {
                        cfg.gradient_check.grid_n = n;
                    }
                    if let Some(r) = replicates {
                        cfg.gradient_check.replicates = r;
                    }
                    if let Some(e) = estimator {
                        cfg.gradient_check.estimator = match e {
                            EstimatorArg::Exact => EstimatorMode::Exact,
                            EstimatorArg::Plain => EstimatorMode::Plain,
                            EstimatorArg::Empirical => EstimatorMode::Empirical,
                            EstimatorArg::Optimal => EstimatorMode::Optimal,
                        };
                    }
                }),
            )
        }
        Command::BaselineStudy { common, replicates } => {
            let replicates = *replicates;
            (
                common,
                Box::new(move |cfg| {
                    if let Some(r) = replicates {
                        cfg.baseline_study.replicates = r;
                    }
                }),
            )
        }
        Command::BruteForce { common } | Command::Assemble { common } => (common, Box::new(|_| {})),
    };

    let mut cfg = common.load()?;
    apply(&mut cfg);
    cfg.validate()?;
    common.install_pool()?;

    match command {
        Command::Run { .. } => commands::run(&cfg),
        Command::BruteForce { .. } => commands::brute(&cfg),
        Command::Surface { .. } => commands::surface(&cfg),
        Command::GradientCheck { .. } => commands::gradient_check(&cfg),
        Command::Assemble { .. } => commands::assemble(&cfg),
        Command::BaselineStudy { .. } => commands::baseline_study(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let record = err.record();
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            ExitCode::from(record.exit_code as u8)
        }
    }
}
