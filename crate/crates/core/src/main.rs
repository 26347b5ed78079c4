use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use shapval::harness::{pareto_sweep, run_experiment, ExperimentConfig, ExperimentReport, MethodSpec};
use shapval::pruned::GreedyWeights;
use shapval::scenario::{Scenario, ScenarioConfig};
use shapval::stratified::Scheme;
use shapval::Error;

#[derive(Parser)]
#[command(name = "shapval", version, about = "Shapley-value data valuation for simulated federations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact Shapley values (MC, CC, or permutation form).
    Exact {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "mc")]
        form: ExactForm,
    },
    /// Stratified sampling with the default plan for --gamma.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: u64,
        #[arg(long, value_enum, default_value = "mc")]
        scheme: SchemeArg,
    },
    /// Marginal contributions over coalitions of at most --K clients.
    Kgreedy {
        #[command(flatten)]
        common: Common,
        #[arg(long = "K", short = 'K')]
        k: usize,
        /// Use the C(n, |S|) stratum weights of the printed listing.
        #[arg(long)]
        printed_weights: bool,
    },
    /// Importance-pruned stratified sampling.
    Ipss {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: u64,
    },
    /// Extended truncated Monte Carlo over client orderings.
    Tmc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rounds: u64,
        /// Defaults to 1e-3 * |U(N)|.
        #[arg(long)]
        trunc_tol: Option<f64>,
    },
    /// Complementary-contribution stratified sampling.
    Ccshapley {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: u64,
    },
    /// Run a method matrix from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sweep the budget of every method in a config.
    Pareto {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated budgets.
        #[arg(long, value_delimiter = ',', required = true)]
        gammas: Vec<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExactForm {
    Mc,
    Cc,
    Perm,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Mc,
    Cc,
}

#[derive(Args)]
struct Common {
    /// Utility table (JSON).
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    table: Option<PathBuf>,
    /// Synthetic federation scenario, e.g. same_size_same_dist.
    #[arg(long, requires_all = ["n", "t", "d", "sigma"])]
    scenario: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    /// Corruption level for the noisy scenarios.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for report.json and aggregates.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also compute exact values and relative errors.
    #[arg(long)]
    exact_ref: bool,
}

impl Common {
    fn into_config(self, method: MethodSpec) -> Result<ExperimentConfig, Error> {
        let scenario = match self.scenario {
            Some(name) => Some(ScenarioConfig {
                scenario: name.parse::<Scenario>()?,
                n: self.n.unwrap_or_default(),
                t: self.t.unwrap_or_default(),
                d: self.d.unwrap_or_default(),
                sigma: self.sigma.unwrap_or_default(),
                noise_level: self.noise,
                seed: self.seed,
            }),
            None => None,
        };
        Ok(ExperimentConfig {
            scenario,
            table: self.table,
            methods: vec![method],
            repeats: self.repeats,
            seed: self.seed,
            output_dir: self.out,
            exact_reference: self.exact_ref,
            null_clients: Vec::new(),
            duplicate_pairs: Vec::new(),
        })
    }
}

fn scheme(arg: SchemeArg) -> Scheme {
    match arg {
        SchemeArg::Mc => Scheme::Mc,
        SchemeArg::Cc => Scheme::Cc,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    let (common, method) = match cli.command {
        Command::Experiment { config } => {
            let mut config = ExperimentConfig::load(config)?;
            config.apply_env_seed()?;
            return print_json::<ExperimentReport>(&run_experiment(&config)?);
        }
        Command::Pareto { config, gammas } => {
            let mut config = ExperimentConfig::load(config)?;
            config.apply_env_seed()?;
            return print_json(&pareto_sweep(&config, &gammas)?);
        }
        Command::Exact { common, form } => {
            let method = match form {
                ExactForm::Mc => MethodSpec::ExactMc,
                ExactForm::Cc => MethodSpec::ExactCc,
                ExactForm::Perm => MethodSpec::ExactPerm,
            };
            (common, method)
        }
        Command::Sample {
            common,
            gamma,
            scheme: s,
        } => (
            common,
            MethodSpec::Sample {
                scheme: scheme(s),
                gamma: Some(gamma),
                m: None,
            },
        ),
        Command::Kgreedy {
            common,
            k,
            printed_weights,
        } => {
            let weights = if printed_weights {
                GreedyWeights::PrintedListing
            } else {
                GreedyWeights::Shapley
            };
            (common, MethodSpec::KGreedy { k, weights })
        }
        Command::Ipss { common, gamma } => (common, MethodSpec::Ipss { gamma }),
        Command::Tmc {
            common,
            rounds,
            trunc_tol,
        } => (common, MethodSpec::Tmc { rounds, trunc_tol }),
        Command::Ccshapley { common, gamma } => (common, MethodSpec::CcShapley { gamma }),
    };
    let mut config = common.into_config(method)?;
    config.apply_env_seed()?;
    if let Some(scenario) = config.scenario.as_mut() {
        scenario.seed = config.seed;
    }
    print_json::<ExperimentReport>(&run_experiment(&config)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shapval: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
