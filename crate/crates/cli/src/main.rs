//! `icecontour`: runs one pipeline stage per invocation.
//!
//! Exit status is 0 on success, 2 for invalid input or usage, 1 for
//! internal or I/O failures. The log level comes from `RUST_LOG`
//! (default `info`); logs go to stderr.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use icecontour::io::RunConfig;
use icecontour::pipeline::{self, EvalInputs};
use icecontour::volume::Interp;
use icecontour::Error;

#[derive(Parser, Debug)]
#[command(name = "icecontour", version, about = "Sparse-volume ICE contouring pipeline")]
struct Cli {
    /// JSON run config; flags given on the command line take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the phantom and simulate an ICE sweep.
    PhantomGen {
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of frames in the sweep.
        #[arg(long)]
        slices: Option<usize>,
        /// Disable speckle.
        #[arg(long)]
        no_noise: bool,
    },
    /// Splat a sweep manifest into a sparse volume (and seed labels).
    BuildVolume {
        manifest: PathBuf,
        /// Output directory; defaults to the manifest's directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
        #[arg(long)]
        interp: Option<Interp>,
        /// Voxel size when the manifest has no grid.
        #[arg(long)]
        spacing: Option<f64>,
        #[arg(long)]
        margin: Option<f64>,
    },
    /// Project a label volume onto every frame of a manifest.
    ProjectMask {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Find the library mesh closest in shape to a query mesh.
    PairMesh {
        #[arg(long)]
        query: PathBuf,
        #[arg(required = true)]
        library: Vec<PathBuf>,
    },
    /// Densify a sparse volume by normalized convolution.
    Complete {
        sparse: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_name = "MM")]
        sigma: Option<f64>,
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Nearest-seed segmentation of a sparse volume.
    Segment {
        sparse: PathBuf,
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_name = "MM")]
        max_dist: Option<f64>,
    },
    /// Score predicted labels against ground truth, in 3D and/or per frame.
    Evaluate {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// Directory of projected masks (`mask_000.pgm`, ...).
        #[arg(long, value_name = "DIR")]
        masks: Option<PathBuf>,
        /// Manifest whose frame labels are the 2D ground truth.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Model name shown in the report header.
        #[arg(long)]
        name: Option<String>,
        /// Text report file (the table is always printed).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Evaluate the losses on a seeded random batch and check gradients.
    LossCheck {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 64)]
        batch: usize,
    },
    /// Spatial extents through a layer preset (unet8 or disc).
    Shapes {
        #[arg(long, value_delimiter = ',', required = true)]
        dims: Vec<usize>,
        #[arg(long, default_value = "unet8")]
        preset: String,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Error> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(cfg)
}

fn run(cli: Cli) -> Result<String, Error> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::PhantomGen {
            seed, slices, no_noise, ..
        } => {
            if let Some(s) = seed {
                cfg.seed = *s;
            }
            if let Some(n) = slices {
                cfg.sweep.n_slices = *n;
            }
            if *no_noise {
                cfg.phantom.noise.enabled = false;
            }
        }
        Command::BuildVolume {
            interp, spacing, margin, ..
        } => {
            if let Some(i) = interp {
                cfg.splat = *i;
            }
            if let Some(s) = spacing {
                cfg.grid.spacing = *s;
            }
            if let Some(m) = margin {
                cfg.grid.margin = *m;
            }
        }
        Command::Complete { sigma, iterations, .. } => {
            if let Some(s) = sigma {
                cfg.completion.sigma_mm = *s;
            }
            if let Some(n) = iterations {
                cfg.completion.iterations = *n;
            }
        }
        Command::Segment { max_dist, .. } => {
            if let Some(d) = max_dist {
                cfg.segmentation.max_dist_mm = *d;
            }
        }
        Command::LossCheck { seed: Some(s), .. } => cfg.seed = *s,
        _ => {}
    }
    cfg.validate()?;
    log::info!("resolved run config:\n{}", cfg.echo());

    match cli.command {
        Command::PhantomGen { out, .. } => pipeline::phantom_gen(&cfg, &out),
        Command::BuildVolume { manifest, out, .. } => {
            let out = out.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new("")).to_path_buf());
            pipeline::build_volume(&cfg, &manifest, &out)
        }
        Command::ProjectMask { labels, manifest, out } => pipeline::project_mask(&labels, &manifest, &out),
        Command::PairMesh { query, library } => pipeline::pair_mesh_files(&query, &library),
        Command::Complete { sparse, out, .. } => pipeline::complete(&cfg, &sparse, &out),
        Command::Segment { sparse, seeds, out, .. } => pipeline::segment(&cfg, &sparse, &seeds, &out),
        Command::Evaluate {
            pred,
            gt,
            masks,
            manifest,
            name,
            out,
            csv,
            json,
        } => {
            let report = pipeline::evaluate(&EvalInputs {
                name,
                pred,
                gt,
                masks,
                manifest,
            })?;
            pipeline::write_report(&report, out.as_deref(), csv.as_deref(), json.as_deref())?;
            Ok(report.text)
        }
        Command::LossCheck { batch, .. } => pipeline::loss_check(&cfg, batch),
        Command::Shapes { dims, preset } => pipeline::shapes(&dims, &preset),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 1 })
        }
    }
}
