//! `privnet`: prepare datasets, train privacy-aware cross-domain
//! recommenders, sweep configurations, and evaluate ranking quality
//! against attribute-inference attacks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use privnet_core::{Error, Result};

use config::{parse_strategy, ExperimentConfig};

#[derive(Parser)]
#[command(name = "privnet", version, about = "Privacy-aware cross-domain recommender harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flag overrides beat both the config file and PRIVNET_SEED.
#[derive(Args, Default)]
struct Overrides {
    /// Dataset container path
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for every stage (data split, init, batching, attack)
    #[arg(long)]
    seed: Option<u64>,
    /// Adversary weight λ
    #[arg(long)]
    lambda: Option<f64>,
    /// Privacy strategy: adversarial, ldp_noise, blurme or none
    #[arg(long)]
    strategy: Option<String>,
    /// Drop probability for ldp_noise
    #[arg(long)]
    noise: Option<f64>,
    /// Dummy items per user for blurme
    #[arg(long)]
    dummies: Option<usize>,
    /// Item embedding size d
    #[arg(long)]
    embed_dim: Option<usize>,
    /// MLP hidden width
    #[arg(long)]
    hidden: Option<usize>,
    /// History window w
    #[arg(long)]
    window: Option<usize>,
    /// Transfer depth (1 or 2)
    #[arg(long)]
    transfer_layers: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    /// Negatives sampled per positive during training
    #[arg(long)]
    negative_ratio: Option<usize>,
    #[arg(long)]
    clip_norm: Option<f64>,
    /// Fraction of users whose attributes the attacker may train on
    #[arg(long)]
    public_fraction: Option<f64>,
}

impl Overrides {
    fn apply(&self, config: &mut ExperimentConfig) -> Result<()> {
        if let Some(ref data) = self.data {
            config.data = data.clone();
        }
        if let Some(ref out) = self.out {
            config.out = out.clone();
        }
        if let Some(seed) = self.seed {
            config.set_seed(seed);
        }
        if let Some(lambda) = self.lambda {
            config.train.lambda = lambda;
        }
        if let Some(ref strategy) = self.strategy {
            config.defense.strategy = parse_strategy(strategy)?;
        }
        if let Some(noise) = self.noise {
            config.defense.noise = noise;
        }
        if let Some(dummies) = self.dummies {
            config.defense.dummies = dummies;
        }
        if let Some(embed_dim) = self.embed_dim {
            config.model.embed_dim = embed_dim;
        }
        if let Some(hidden) = self.hidden {
            config.model.hidden = hidden;
        }
        if let Some(window) = self.window {
            config.model.window = window;
        }
        if let Some(transfer_layers) = self.transfer_layers {
            config.model.transfer_layers = transfer_layers;
        }
        if let Some(batch_size) = self.batch_size {
            config.train.batch_size = batch_size;
        }
        if let Some(learning_rate) = self.learning_rate {
            config.train.learning_rate = learning_rate;
        }
        if let Some(max_epochs) = self.max_epochs {
            config.train.max_epochs = max_epochs;
        }
        if let Some(patience) = self.patience {
            config.train.patience = patience;
        }
        if let Some(negative_ratio) = self.negative_ratio {
            config.train.negative_ratio = negative_ratio;
        }
        if let Some(clip_norm) = self.clip_norm {
            config.train.clip_norm = clip_norm;
        }
        if let Some(public_fraction) = self.public_fraction {
            config.split.public_fraction = public_fraction;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the dataset container and print summary statistics
    Prepare {
        /// Experiment config JSON; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train one model and write a self-describing run directory
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Rank held-out test items, attack the representations, cluster them
    Eval {
        /// Run directory written by `train`
        #[arg(long)]
        run: PathBuf,
        /// Dataset container override
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Train a fresh attacker against a finished run
    Attack {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Attacker seed; defaults to the run's training seed
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write each user's transferred representation as TSV
    ExportEmbeddings {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output file; defaults to embeddings.tsv in the run directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid of runs over λ (default) or the public-user fraction
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Adversary weights to sweep
        #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.25,0.5,0.75,1.0")]
        lambdas: Vec<f64>,
        /// Public-user fractions to sweep instead of λ
        #[arg(long, value_delimiter = ',')]
        public_fractions: Vec<f64>,
        /// Run grid points concurrently
        #[arg(long)]
        parallel: bool,
    },
}

fn resolve(path: Option<&PathBuf>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    config.apply_env_seed()?;
    overrides.apply(&mut config)?;
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { config, overrides } => {
            commands::cmd_prepare(&resolve(config.as_ref(), &overrides)?)
        }
        Command::Train { config, overrides } => {
            commands::cmd_train(resolve(config.as_ref(), &overrides)?).map(|_| ())
        }
        Command::Eval { run, data } => commands::cmd_eval(&run, data.as_deref()),
        Command::Attack { run, data, seed } => commands::cmd_attack(&run, data.as_deref(), seed),
        Command::ExportEmbeddings { run, data, out } => {
            commands::cmd_export(&run, data.as_deref(), out)
        }
        Command::Sweep { config, overrides, lambdas, public_fractions, parallel } => {
            let base = resolve(config.as_ref(), &overrides)?;
            commands::cmd_sweep(&base, &lambdas, &public_fractions, parallel)
        }
    }
}

/// 2 for configuration mistakes, 3 for data problems, 4 for internal
/// contract violations.
fn error_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) => 2,
        Error::Data(_) | Error::Parse { .. } | Error::Format(_) | Error::Io(_) => 3,
        Error::Dimension { .. } | Error::Contract(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(error_code(&e))
        }
    }
}
