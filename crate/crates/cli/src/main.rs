use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};

use llnet::baselines::ClaheParams;
use llnet::ssda::ModelRole;
use llnet_cli::*;

#[derive(Parser)]
#[command(name = "llnet", version, about = "Low-light image enhancement with stacked sparse denoising autoencoders")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Llnet,
    Sllnet,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    He,
    Clahe,
    Ga,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Contrast,
    Denoise,
}

#[derive(Subcommand)]
enum Command {
    /// Cut and corrupt training patches into a dataset file.
    Dataset {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        patches_per_image: Option<usize>,
        /// dark_and_noise, dark_only, noise_only or none.
        #[arg(long)]
        corruption: Option<String>,
        /// Source images; replaces the configured list when given.
        images: Vec<PathBuf>,
    },
    /// Pretrain and finetune a model.
    Train {
        #[arg(long, value_enum, default_value = "llnet")]
        mode: ModeArg,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        dark_dataset: Option<PathBuf>,
        #[arg(long)]
        noisy_dataset: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Per-epoch CSV log; defaults to `<out>.log.csv`.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Enhance one image with a trained model.
    Enhance {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        /// `N` or `ROWS,COLS`; defaults to the configured stride.
        #[arg(long)]
        stride: Option<Stride>,
    },
    /// PSNR and SSIM of candidates against a reference.
    Evaluate {
        #[arg(long, short)]
        reference: PathBuf,
        #[arg(required = true)]
        candidates: Vec<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Classical enhancement: he, clahe or ga.
    Baseline {
        #[arg(value_enum)]
        method: MethodArg,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 0.3)]
        gamma: f64,
        /// CLAHE tile grid as `COLS,ROWS`.
        #[arg(long, default_value = "8,8")]
        tiles: Stride,
        #[arg(long, default_value_t = 0.01)]
        clip: f64,
        #[arg(long, default_value_t = 256)]
        bins: usize,
    },
    /// PSNR and SSIM over strides and image scales.
    Sweep {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        reference: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "3")]
        strides: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        scales: Vec<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Tile a layer's incoming weights into an image.
    VisualizeWeights {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long, value_enum)]
        stage: Option<StageArg>,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut config = Config::load_or_default(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = &mut std::io::stdout();
    match cli.command {
        Command::Dataset { out: path, patches_per_image, corruption, images } => {
            if !images.is_empty() {
                config.images = images;
            }
            if let Some(n) = patches_per_image {
                config.patches_per_image = n;
            }
            if let Some(mode) = corruption {
                config.corruption = mode;
            }
            cmd_dataset(&DatasetArgs { config, out: path }, out)?;
        }
        Command::Train { mode, dataset, dark_dataset, noisy_dataset, out: path, log } => {
            let mode = match mode {
                ModeArg::Llnet => TrainMode::Llnet,
                ModeArg::Sllnet => TrainMode::Sllnet,
            };
            cmd_train(&TrainArgs { config, mode, dataset, dark_dataset, noisy_dataset, out: path, log }, out)?;
        }
        Command::Enhance { model, input, output, stride } => {
            let stride = stride.unwrap_or(Stride(config.stride, config.stride));
            cmd_enhance(&EnhanceArgs { model, input, output, stride }, out)?;
        }
        Command::Evaluate { reference, candidates, csv } => {
            cmd_evaluate(&EvaluateArgs { reference, candidates, csv }, out)?;
        }
        Command::Baseline { method, input, output, gamma, tiles, clip, bins } => {
            let method = match method {
                MethodArg::He => BaselineMethod::He,
                MethodArg::Clahe => BaselineMethod::Clahe,
                MethodArg::Ga => BaselineMethod::Ga,
            };
            let clahe = ClaheParams { tiles: (tiles.0, tiles.1), clip_limit: clip, bins };
            cmd_baseline(&BaselineArgs { method, input, output, gamma, clahe }, out)?;
        }
        Command::Sweep { model, input, reference, strides, scales, csv } => {
            cmd_sweep(&SweepArgs { model, input, reference, strides, scales, csv }, out)?;
        }
        Command::VisualizeWeights { model, layer, stage, output } => {
            let stage = stage.map(|s| match s {
                StageArg::Contrast => ModelRole::ContrastStage,
                StageArg::Denoise => ModelRole::DenoiseStage,
            });
            cmd_visualize_weights(&VisualizeArgs { model, layer, stage, output }, out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
