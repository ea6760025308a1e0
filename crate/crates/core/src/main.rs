use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fedgan::config::ExperimentConfig;
use fedgan::datasets::parse_idx;
use fedgan::denoiser::{mismatch_probe, train_autoencoder, Autoencoder, AutoencoderTraining};
use fedgan::federated::ExperimentData;
use fedgan::metrics::format_g;
use fedgan::optim::AdamConfig;
use fedgan::output::run_to_dir;
use fedgan::privacy::{default_orders, epsilon, rdp_subsampled_gaussian};
use fedgan::{Error, Tensor};

#[derive(Parser)]
#[command(name = "fedgan", version, about = "Differentially-private federated GAN simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a federated training experiment.
    Run(RunArgs),
    /// Print the (epsilon, delta)-DP guarantee of the sampled Gaussian mechanism.
    Accountant(AccountantArgs),
    /// Report MSE before and after denoising at several noise levels.
    ProbeDenoiser(ProbeArgs),
    /// Train a denoising autoencoder on an IDX image file.
    TrainAutoencoder(TrainArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines.
    config: Option<PathBuf>,
    /// Preset applied before the config file; repeatable (nodp, dp, dp_denoise, full).
    #[arg(long = "preset")]
    presets: Vec<String>,
    /// `key=value` override applied last; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; falls back to $FEDGAN_OUT, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Parallel client workers.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct AccountantArgs {
    /// Sampling rate m/N.
    #[arg(long)]
    q: f64,
    /// Noise multiplier.
    #[arg(long)]
    z: f64,
    #[arg(long)]
    rounds: u64,
    #[arg(long, default_value_t = 1e-5)]
    delta: f64,
    /// Comma-separated RDP orders; defaults to 2..64 plus 128, 256, 512.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<f64>>,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    model: PathBuf,
    /// IDX image file of clean images.
    #[arg(long)]
    images: PathBuf,
    /// Noise levels to probe.
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    levels: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    /// IDX image file of clean images.
    #[arg(long)]
    images: PathBuf,
    /// Where to write the model.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    level: f64,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 2e-3)]
    lr: f64,
    #[arg(long, default_value_t = 4321)]
    seed: u64,
}

/// Exit code 2 for bad input, 1 for failures while running.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidArgument(_) => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Accountant(a) => accountant(a),
        Command::ProbeDenoiser(a) => probe(a),
        Command::TrainAutoencoder(a) => train(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn resolve_config(a: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = ExperimentConfig::default();
    for p in &a.presets {
        cfg.apply_preset(p)?;
    }
    if let Some(path) = &a.config {
        cfg.apply_file(path)?;
    }
    for kv in &a.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(w) = a.workers {
        cfg.fed.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let cfg = resolve_config(&a)?;
    let dir = a
        .out
        .clone()
        .or_else(|| std::env::var_os("FEDGAN_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    // Config errors surface before any work; everything after is a runtime failure.
    ExperimentData::load(&cfg)?;
    run_to_dir(&cfg, &dir, true).map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(())
}

fn accountant(a: AccountantArgs) -> Result<(), Failure> {
    let orders = a.orders.unwrap_or_else(default_orders);
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(Failure::Usage(format!("delta must be in (0, 1), got {}", a.delta)));
    }
    if !(a.q > 0.0 && a.q <= 1.0) {
        return Err(Failure::Usage(format!("q must be in (0, 1], got {}", a.q)));
    }
    let curve = rdp_subsampled_gaussian(a.q, a.z, &orders)?;
    let (eps, order) = epsilon(&curve, a.rounds, a.delta)?;
    println!("epsilon={eps} order={order}");
    Ok(())
}

fn read_images(path: &Path) -> Result<Tensor, Failure> {
    let bytes = std::fs::read(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let t = parse_idx(&bytes).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let s = t.shape().to_vec();
    if s.len() != 3 {
        return Err(Failure::Usage(format!("{}: expected [n, 28, 28] images, got {s:?}", path.display())));
    }
    Ok(t.reshape(&[s[0], 1, s[1], s[2]])?)
}

fn probe(a: ProbeArgs) -> Result<(), Failure> {
    let model = Autoencoder::load(&a.model).map_err(|e| Failure::Usage(format!("{}: {e}", a.model.display())))?;
    let clean = read_images(&a.images)?;
    println!("level,mse_noisy,mse_denoised");
    for row in mismatch_probe(&model, &clean, &a.levels, a.seed)? {
        println!("{},{},{}", format_g(row.level, 6), format_g(row.mse_noisy, 6), format_g(row.mse_denoised, 6));
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let clean = read_images(&a.images)?;
    let training = AutoencoderTraining {
        epochs: a.epochs,
        batch: a.batch,
        adam: AdamConfig { lr: a.lr, ..AutoencoderTraining::default().adam },
    };
    let model = train_autoencoder(&clean, a.level, &training, a.seed)?;
    model.save(&a.out).map_err(|e| Failure::Runtime(format!("{}: {e}", a.out.display())))?;
    Ok(())
}
