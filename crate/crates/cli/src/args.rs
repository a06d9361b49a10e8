use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "feml", version, about = "Meta-learned early time series forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print a summary of a .tsf archive.
    Inspect {
        file: PathBuf,
        /// Print the summary as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the finite-difference gradient suite; exits 2 on failure.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 60)]
        instances: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Train one strategy on a manifest target; writes checkpoint and log.
    Train {
        #[arg(long)]
        strategy: String,
        /// Target dataset id; every other manifest dataset is auxiliary.
        #[arg(long)]
        target: String,
        #[arg(long, env = "FEML_MANIFEST")]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Run the leave-one-out benchmark and write reports.
    Bench {
        #[arg(long, env = "FEML_MANIFEST")]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Concurrent cells.
        #[arg(long)]
        jobs: Option<usize>,
        /// Comma-separated method list, replacing the manifest's.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
    /// Write a synthetic .tsf fixture.
    Synth {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "synthetic")]
        id: String,
        #[arg(long, default_value_t = 20)]
        series: usize,
        #[arg(long, default_value_t = 60)]
        length: usize,
        #[arg(long, default_value_t = 12)]
        delta: usize,
        #[arg(long, default_value_t = 6)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sinusoid period.
        #[arg(long, default_value_t = 8.0)]
        period: f64,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        /// Spread of per-series sinusoid levels.
        #[arg(long, default_value_t = 0.0)]
        level: f64,
        /// Trend slope bound.
        #[arg(long, default_value_t = 0.1)]
        slope: f64,
        /// AR(1) coefficient.
        #[arg(long, default_value_t = 0.5)]
        coefficient: f64,
        /// Gaussian noise scale; defaults to 0 (sin, trend) or 1 (ar1).
        #[arg(long)]
        noise: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Sin,
    Trend,
    Ar1,
}

/// Flags that take precedence over the manifest's training settings.
#[derive(Debug, Clone, Default, Args)]
pub struct TrainOverrides {
    /// Training seed (train) or master seed (bench).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_outer_iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub mu_in: Option<f64>,
    #[arg(long)]
    pub mu_out: Option<f64>,
    #[arg(long)]
    pub mu_ad: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub weight: Option<f64>,
    #[arg(long)]
    pub persist_target_head: Option<bool>,
}

impl TrainOverrides {
    pub fn apply(&self, c: &mut feml::trainer::TrainConfig) {
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v; })*
            };
        }
        set!(
            max_outer_iters => c.max_outer_iters,
            patience => c.patience,
            batch_size => c.batch_size,
            mu_in => c.mu_in,
            mu_out => c.mu_out,
            mu_ad => c.mu_ad,
            epsilon => c.adversarial.epsilon,
            weight => c.adversarial.weight,
            persist_target_head => c.persist_target_head,
        );
    }
}
