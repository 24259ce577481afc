//! Command-line driver: synthetic model and sequence generation, per-frame
//! fitting, temporal tracking, image frontalization, region correlation
//! scoring and the robustness benchmark.
//!
//! Exit codes: 0 on success, 1 on runtime or data failures, 2 on usage
//! errors (bad flags or config values). Every run is deterministic given
//! its flags and input files; `--threads` changes wall time only.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "morphfit", version, about = "Rigid/non-rigid landmark fitting toolkit")]
struct Cli {
    /// Worker threads (default: one per core). Affects wall time only.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic deformable shape model.
    GenModel {
        /// Number of mesh vertices (must factor into a near-square grid).
        #[arg(long)]
        n: usize,
        /// Number of deformation components.
        #[arg(long)]
        k: usize,
        /// Number of landmark vertices.
        #[arg(long)]
        j: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output model JSON path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic landmark sequence from a model.
    GenSequence {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 60)]
        frames: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-axis observation noise standard deviation.
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        /// Output landmark CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Optional ground-truth frontal landmark CSV.
        #[arg(long)]
        truth_frontal: Option<PathBuf>,
        /// Optional ground-truth pose CSV.
        #[arg(long)]
        truth_poses: Option<PathBuf>,
    },
    /// Fit every frame of a landmark sequence independently.
    Fit {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (state.csv, frontalized.csv, effective_config.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Track a landmark sequence with the temporal filter.
    Track {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        landmarks: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (state.csv, vertices.csv, effective_config.json).
        #[arg(long)]
        out: PathBuf,
        /// Ground-truth frontal landmarks; prints an RMSE comparison of the
        /// filtered output against independent per-frame fits.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Frontalize one image frame through the fitted pose.
    Frontalize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        landmarks: PathBuf,
        /// Input image (binary PGM/PPM, maxval 255).
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Frame index within the landmark file.
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long)]
        out_image: PathBuf,
        #[arg(long)]
        out_depth: PathBuf,
        /// Optional validity-mask image (255 = valid).
        #[arg(long)]
        out_mask: Option<PathBuf>,
    },
    /// Region correlation score between two images (or paired directories).
    Zncc {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Region center as `h,v` pixel coordinates.
        #[arg(long)]
        center: String,
        /// Region size as `WxH` (default from config).
        #[arg(long)]
        region: Option<String>,
        /// Maximum search shift in pixels (default from config).
        #[arg(long)]
        shift: Option<i64>,
        /// Scale factor applied to the second image's sampling grid.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulated outlier-robustness benchmark.
    Bench {
        #[arg(long, default_value_t = 500)]
        trials: usize,
        /// Comma-separated outlier fractions.
        #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6")]
        fractions: String,
        /// Comma-separated estimators: horn, gen_horn, gum_em, gstudent.
        #[arg(long, default_value = "horn,gen_horn,gum_em,gstudent")]
        estimators: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 68)]
        landmarks: usize,
        /// Output CSV path (metadata goes to `<out>.meta.json`).
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(2);
        }
        // Ignore failure: the global pool may already exist.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    let outcome = match cli.command {
        Command::GenModel { n, k, j, seed, out } => commands::gen_model(n, k, j, seed, &out),
        Command::GenSequence {
            model,
            frames,
            seed,
            noise,
            out,
            truth_frontal,
            truth_poses,
        } => commands::gen_sequence(
            &model,
            frames,
            seed,
            noise,
            &out,
            truth_frontal.as_deref(),
            truth_poses.as_deref(),
        ),
        Command::Fit {
            model,
            landmarks,
            config,
            out,
        } => commands::fit(&model, &landmarks, config.as_deref(), &out),
        Command::Track {
            model,
            landmarks,
            config,
            out,
            truth,
        } => commands::track(&model, &landmarks, config.as_deref(), &out, truth.as_deref()),
        Command::Frontalize {
            model,
            landmarks,
            image,
            config,
            frame,
            out_image,
            out_depth,
            out_mask,
        } => commands::frontalize(
            &model,
            &landmarks,
            &image,
            config.as_deref(),
            frame,
            &out_image,
            &out_depth,
            out_mask.as_deref(),
        ),
        Command::Zncc {
            a,
            b,
            center,
            region,
            shift,
            scale,
            config,
            out,
        } => commands::zncc(
            &a,
            &b,
            &center,
            region.as_deref(),
            shift,
            scale,
            config.as_deref(),
            out.as_deref(),
        ),
        Command::Bench {
            trials,
            fractions,
            estimators,
            seed,
            landmarks,
            out,
        } => commands::bench(trials, &fractions, &estimators, seed, landmarks, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(commands::CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
