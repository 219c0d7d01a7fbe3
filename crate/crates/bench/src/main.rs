use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use ialspp::pipeline::SplitConfig;
use ialspp::synthetic::SyntheticConfig;
use ialspp::{SolverConfig, SolverKind};
use ialspp_bench::{run_experiment, summarize_sweep, write_summary, BlockSize, DataSource, ExperimentConfig, RecordWriter};

#[derive(Parser)]
#[command(name = "ialspp-bench", version, about = "Train and evaluate implicit-feedback factorization models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Train (and sweep) configurations, logging one JSON line per epoch.
    Run(RunArgs),
    /// Tabulate median epoch time and final metrics per configuration.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Training interactions (CSV/TSV with a user_id,item_id[,label,weight] header).
    #[arg(long = "train_data")]
    train_data: Option<PathBuf>,
    #[arg(long = "holdout_input", requires = "holdout_target")]
    holdout_input: Option<PathBuf>,
    #[arg(long = "holdout_target", requires = "holdout_input")]
    holdout_target: Option<PathBuf>,
    /// Generated workload "users,items,per_user,rank,noise[,seed]" instead of files.
    #[arg(long, conflicts_with = "train_data")]
    synthetic: Option<String>,

    #[arg(long, default_value = "ialspp")]
    solver: SolverKind,
    /// Embedding dimensions to sweep.
    #[arg(long, value_delimiter = ',', default_value = "128")]
    dim: Vec<usize>,
    /// Block sizes to sweep; "d" means the full dimension.
    #[arg(long = "block_size", value_delimiter = ',', default_value = "64")]
    block_size: Vec<BlockSize>,
    #[arg(long, default_value_t = 0.1)]
    alpha0: f64,
    #[arg(long, default_value_t = 0.003)]
    reg: f64,
    #[arg(long = "reg_exp", default_value_t = 1.0)]
    reg_exp: f64,
    #[arg(long, default_value_t = 0.1)]
    stddev: f64,
    #[arg(long, default_value_t = 16)]
    epochs: usize,
    #[arg(long = "eval_every", default_value_t = 1)]
    eval_every: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    /// Also log the training loss after every epoch.
    #[arg(long)]
    loss: bool,

    /// Fraction of users held out when the split is done here.
    #[arg(long = "holdout_users", default_value_t = 0.1)]
    holdout_users: f64,
    #[arg(long = "target_fraction", default_value_t = 0.2)]
    target_fraction: f64,
    #[arg(long = "min_interactions", default_value_t = 5)]
    min_interactions: usize,

    /// Log file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SummarizeArgs {
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// TSV file; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn experiment_config(args: &RunArgs) -> anyhow::Result<ExperimentConfig> {
    let data = match (&args.synthetic, &args.train_data) {
        (Some(spec), _) => {
            let mut gen: SyntheticConfig = spec.parse().context("--synthetic")?;
            if spec.split(',').count() == 5 {
                gen.seed = args.seed;
            }
            DataSource::Synthetic(gen)
        }
        (None, Some(train)) => DataSource::Files {
            train: train.clone(),
            holdout: args.holdout_input.clone().zip(args.holdout_target.clone()),
        },
        (None, None) => bail!("either --train_data or --synthetic is required"),
    };
    let solver = SolverConfig {
        dim: args.dim[0],
        block_size: 1,
        unobserved_weight: args.alpha0,
        reg: args.reg,
        reg_exponent: args.reg_exp,
        init_stddev: args.stddev,
        epochs: args.epochs,
        solver: args.solver,
        threads: args.threads,
        seed: args.seed,
    };
    Ok(ExperimentConfig {
        data,
        solver,
        dims: args.dim.clone(),
        block_sizes: args.block_size.clone(),
        eval_every: args.eval_every,
        repeats: args.repeats,
        track_loss: args.loss,
        split: SplitConfig {
            holdout_users: args.holdout_users,
            target_fraction: args.target_fraction,
            min_interactions: args.min_interactions,
            seed: args.seed,
        },
    })
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let config = experiment_config(&args)?;
    match &args.output {
        Some(path) => {
            let mut w = RecordWriter::create(path)?;
            run_experiment(&config, &mut |r| w.write(r))?;
        }
        None => {
            let mut w = RecordWriter::new(io::stdout().lock(), "<stdout>");
            run_experiment(&config, &mut |r| w.write(r))?;
        }
    }
    Ok(())
}

fn summarize(args: SummarizeArgs) -> anyhow::Result<()> {
    let rows = summarize_sweep(&args.logs)?;
    match &args.output {
        Some(path) => {
            let file = std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
            let mut out = BufWriter::new(file);
            write_summary(&rows, &mut out)?;
            out.flush()?;
        }
        None => write_summary(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Summarize(args) => summarize(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
