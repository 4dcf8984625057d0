use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use flowfields::edges::{detect_edges, EdgeMap};
use flowfields::eval::run_eval;
use flowfields::flowio::{read_flow, visualize, write_flow};
use flowfields::pipeline::{prepare_frames, run_pipeline, PipelineConfig, Preset};
use flowfields::raster::{ColorSpace, Image};
use flowfields::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_PIPELINE: u8 = 3;

#[derive(Parser)]
#[command(name = "flowfields", version, about = "Dense optical flow estimation and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Kitti,
    Sintel,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate flow from FRAME1 to FRAME2.
    Compute {
        frame1: PathBuf,
        frame2: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        /// key = value configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Boundary map (EDG1 file) instead of detected edges
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Directory for intermediate artifacts
        #[arg(long)]
        dump_stages: Option<PathBuf>,
        /// Output flow: `.flo`, or `.png` for KITTI format
        #[arg(long, default_value = "flow.flo")]
        out: PathBuf,
    },
    /// Compare every ground-truth flow in GT_DIR with the same-named estimate.
    Eval {
        estimates: PathBuf,
        ground_truth: PathBuf,
        /// Masks of pixels visible in both frames (`<stem>.png`)
        #[arg(long)]
        matched_masks: Option<PathBuf>,
        /// Foreground object masks (`<stem>.png`)
        #[arg(long)]
        fg_masks: Option<PathBuf>,
        /// Write the report as key=value lines
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a flow file with the color wheel.
    Viz {
        flow: PathBuf,
        /// Magnitude of full saturation (default: 99th percentile)
        #[arg(long)]
        max: Option<f64>,
        #[arg(long, default_value = "flow.png")]
        out: PathBuf,
    },
    /// Detect and save the boundary map of an image.
    Edges {
        image: PathBuf,
        /// EDG1 file, or `.png` for an 8-bit rendering
        #[arg(long, default_value = "edges.edg")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        e if e.is_io() => EXIT_IO,
        _ => EXIT_PIPELINE,
    }
}

fn load_config(preset: Option<PresetArg>, file: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig, Error> {
    let mut text = match file {
        Some(p) => std::fs::read_to_string(p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(p.to_path_buf()),
            _ => Error::Io(e),
        })?,
        None => String::new(),
    };
    if let Some(p) = preset {
        let p = match p {
            PresetArg::Kitti => Preset::Kitti,
            PresetArg::Sintel => Preset::Sintel,
        };
        // the flag wins over a preset named in the file
        text.push_str(&format!("\npreset = {p}\n"));
    }
    let mut config = PipelineConfig::from_text(&text)?;
    if let Some(s) = seed {
        config.set_seed(s);
    }
    Ok(config)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("flow");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn run(command: Command) -> Result<ExitCode, Error> {
    match command {
        Command::Compute {
            frame1,
            frame2,
            preset,
            config,
            seed,
            edges,
            dump_stages,
            out,
        } => {
            let config = load_config(preset, config.as_deref(), seed)?;
            let img1 = Image::read(&frame1)?;
            let img2 = Image::read(&frame2)?;
            let edges = match edges {
                Some(p) => Some(EdgeMap::load(&p, Some(img1.dims()))?),
                None => None,
            };
            let output = run_pipeline(&config, &img1, &img2, edges)?;
            write_flow(&out, &output.flow)?;
            visualize(&output.flow, None).save_png8(sibling(&out, "_viz.png"))?;
            if let Some(dir) = dump_stages {
                output.dump(dir)?;
            }
            for (stage, t) in &output.timings {
                eprintln!("{stage:>12}: {:.2}s", t.as_secs_f64());
            }
            eprintln!(
                "{} matches, {} superpixels",
                output.matches.len(),
                output.segmentation.count()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            estimates,
            ground_truth,
            matched_masks,
            fg_masks,
            out,
        } => {
            let result = run_eval(&estimates, &ground_truth, matched_masks.as_deref(), fg_masks.as_deref())?;
            print!("{}", result.to_table());
            for stem in &result.missing {
                eprintln!("warning: no estimate for `{stem}`, skipped");
            }
            for (stem, why) in &result.failed {
                eprintln!("warning: `{stem}` could not be evaluated: {why}");
            }
            if let Some(p) = out {
                std::fs::write(p, result.to_key_values())?;
            }
            Ok(if result.is_complete() && !result.frames.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(EXIT_IO)
            })
        }
        Command::Viz { flow, max, out } => {
            let flow = read_flow(&flow)?;
            visualize(&flow, max).save_png8(&out)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Edges { image, out } => {
            let img = Image::read(&image)?;
            let (lab, _) = prepare_frames(&img, &img)?;
            let edges = detect_edges(&lab);
            if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
                let (w, h) = edges.dims();
                let data = edges.values().iter().map(|&v| v as f64).collect();
                Image::new(w, h, ColorSpace::Gray, data)?.save_png8(&out)?;
            } else {
                edges.save(&out)?;
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
