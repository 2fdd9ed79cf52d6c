//! The `pdyn` command line. Each subcommand is a plain function so tests can
//! drive it without spawning a process.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use super::config::RunConfig;
use super::dataset::{generate_to_file, read_dataset, write_dataset};
use super::lock::DirLock;
use super::plot::{grid_image, line_chart, render_scalar, render_velocity, Image};
use crate::adjoint::gradcheck;
use crate::autodiff::{DType, Fault, Real};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_forecasts, forecast_frames, EvalConfig, ForecastReport};
use crate::fields::StateField;
use crate::simulators::{Dataset, DatasetMeta, Split};
use crate::training::{checkpoint_dtype, Checkpoint, GradMode, LogRecord, Precision, Trainer};

#[derive(Debug, Parser)]
#[command(name = "pdyn", version, about = "Learn the evolution term of partially observed 2D systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration, or `preset:<name>`.
    #[arg(long, default_value = "preset:desk_sw32")]
    pub config: String,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate and write a dataset file (plus JSON sidecar).
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
        /// Store frames as f64 instead of f32.
        #[arg(long)]
        double: bool,
    },
    /// Train on a dataset; writes checkpoint.ckpt and train_log.jsonl.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        grad_mode: Option<GradModeArg>,
        #[arg(long, value_enum)]
        precision: Option<PrecisionArg>,
        #[arg(long)]
        workers: Option<usize>,
        /// Continue from `<out>/checkpoint.ckpt`.
        #[arg(long)]
        resume: bool,
    },
    /// Forecast MSE, persistence MSE and velocity cosine on the test frames.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma separated, e.g. `1,5,10`.
        #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 5, 10])]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        substeps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out from one test frame; saves the frames and an image grid.
    Forecast {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Offset of the start frame inside the test part.
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![10usize])]
        horizons: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        substeps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite differences vs backprop vs continuous adjoint on a tiny model.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Render dataset frames or a forecast report.
    Plot {
        #[arg(long, conflicts_with = "report")]
        data: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum GradModeArg {
    Backprop,
    Adjoint,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum PrecisionArg {
    Single,
    Double,
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&c.config)?;
    if let Some(s) = c.seed {
        cfg.sim.seed = s;
        cfg.train.seed = s;
        cfg.gradcheck.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, S>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> Result<()> {
    match cmd {
        Command::Generate { common, out: path, double } => {
            let cfg = load_config(&common)?;
            let dtype = if double { DType::F64 } else { DType::F32 };
            let t = Instant::now();
            let side = generate_to_file(&cfg.sim, cfg.split, &path, dtype)?;
            writeln!(out, "wrote {} frames to {} in {:.1?} (sha256 {})", side.frames, path.display(), t.elapsed(), side.sha256)?;
            Ok(())
        }
        Command::Train { common, data, out: dir, grad_mode, precision, workers, resume } => {
            let mut cfg = load_config(&common)?;
            if let Some(g) = grad_mode {
                cfg.train.grad_mode = match g {
                    GradModeArg::Backprop => GradMode::Backprop,
                    GradModeArg::Adjoint => GradMode::Adjoint,
                };
            }
            if let Some(p) = precision {
                cfg.train.precision = match p {
                    PrecisionArg::Single => Precision::Single,
                    PrecisionArg::Double => Precision::Double,
                };
            }
            if let Some(w) = workers {
                cfg.train.workers = w;
            }
            cfg.validate()?;
            let _lock = DirLock::acquire(&dir)?;
            let (data, _) = read_dataset(&data)?;
            match cfg.train.precision {
                Precision::Single => train_cmd::<f32>(&cfg, &data, &dir, resume, out),
                Precision::Double => train_cmd::<f64>(&cfg, &data, &dir, resume, out),
            }
        }
        Command::Evaluate { checkpoint, data, horizons, substeps, out: dir } => {
            let (data, _) = read_dataset(&data)?;
            let cfg = EvalConfig { horizons, substeps, window_stride: 1 };
            let report = match load_dtype(&checkpoint)? {
                DType::F32 => evaluate_cmd::<f32>(&checkpoint, &data, &cfg)?,
                DType::F64 => evaluate_cmd::<f64>(&checkpoint, &data, &cfg)?,
            };
            let _lock = DirLock::acquire(&dir)?;
            std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
            std::fs::write(dir.join("report.csv"), report.to_csv())?;
            writeln!(out, "{:>4} {:>14} {:>14} {:>8}", "K", "mse", "persistence", "cosine")?;
            for (i, k) in report.horizons.iter().enumerate() {
                let cos = report.cosine[i].map_or("-".to_string(), |c| format!("{c:.4}"));
                writeln!(out, "{k:>4} {:>14.6e} {:>14.6e} {cos:>8}", report.mse[i], report.baseline_mse[i])?;
            }
            Ok(())
        }
        Command::Forecast { checkpoint, data, index, horizons, substeps, out: dir } => {
            let (data, _) = read_dataset(&data)?;
            let k = horizons.iter().copied().max().unwrap_or(0);
            let current = data.test_range().start + index;
            let frames = match load_dtype(&checkpoint)? {
                DType::F32 => forecast_cmd::<f32>(&checkpoint, &data, current, k, substeps)?,
                DType::F64 => forecast_cmd::<f64>(&checkpoint, &data, current, k, substeps)?,
            };
            let _lock = DirLock::acquire(&dir)?;
            let meta = DatasetMeta { split: Split { train: 0, test: frames.len() }, ..data.meta.clone() };
            let pred = Dataset::new(meta, frames.iter().map(StateField::to_flat).collect())?;
            write_dataset(&dir.join("forecast.pdyn"), &pred, DType::F64)?;
            let truth: Vec<StateField> = (1..=k).map(|o| data.frame(current + o)).collect();
            comparison_grid(&data.frame(current), &truth, &frames).save_png(&dir.join("forecast.png"))?;
            writeln!(out, "forecast of {k} frames from frame {current} written to {}", dir.display())?;
            Ok(())
        }
        Command::Gradcheck { common, inject_fault } => {
            let cfg = load_config(&common)?;
            let fault = inject_fault.then_some(Fault::ScaledKernelGrad);
            let r = gradcheck(&cfg.gradcheck, fault)?;
            let verdict = |ok: bool| if ok { "PASS" } else { "FAIL" };
            writeln!(out, "parameters {}", r.n_params)?;
            writeln!(out, "{} fd vs backprop: rel. error {:.3e} over {} coordinates", verdict(r.fd_pass), r.fd_rel_error, r.coords.len())?;
            writeln!(out, "{} adjoint vs backprop at dt: gap {:.4e}", verdict(r.gap_pass), r.gap)?;
            writeln!(out, "{} gap at dt/2 {:.4e}, ratio {:.3}", verdict(r.ratio_pass), r.gap_half, r.ratio)?;
            if r.passed() {
                Ok(())
            } else {
                Err(Error::Verification("gradient check failed".into()))
            }
        }
        Command::Plot { data, report, index, count, out: path } => {
            let img = match (data, report) {
                (Some(d), None) => {
                    let (data, _) = read_dataset(&d)?;
                    let end = (index + count).min(data.len());
                    if index >= end {
                        return Err(Error::Config(format!("frame {index} outside a {}-frame dataset", data.len())));
                    }
                    let frames: Vec<StateField> = (index..end).map(|k| data.frame(k)).collect();
                    frames_grid(&frames)
                }
                (None, Some(r)) => {
                    let rep: ForecastReport = serde_json::from_slice(&std::fs::read(&r)?)?;
                    line_chart(&[(&rep.frame_mse, [200, 30, 30]), (&rep.frame_baseline, [60, 60, 60])], 480, 320, true)
                }
                _ => return Err(Error::Config("plot needs exactly one of --data or --report".into())),
            };
            img.save_png(&path)?;
            writeln!(out, "wrote {}", path.display())?;
            Ok(())
        }
    }
}

fn load_dtype(path: &Path) -> Result<DType> {
    let bytes = std::fs::read(path)?;
    checkpoint_dtype(&bytes, path)
}

fn train_cmd<T: Real>(cfg: &RunConfig, data: &Dataset, dir: &Path, resume: bool, out: &mut dyn Write) -> Result<()> {
    let ckpt_path = dir.join("checkpoint.ckpt");
    let mut trainer = if resume {
        let ck = Checkpoint::<T>::load(&ckpt_path)?;
        let mut t = ck.into_trainer(Some(&cfg.model))?;
        t.config.epochs = cfg.train.epochs;
        t
    } else {
        Trainer::<T>::new(data, &cfg.model, cfg.train.clone())?
    };
    trainer.model.check_dataset(data)?;
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .append(resume)
        .write(true)
        .truncate(!resume)
        .open(dir.join("train_log.jsonl"))?;
    let started = Instant::now();
    let mut io_err = None;
    while !trainer.finished() {
        trainer.run_epoch(data, started, &mut |r| {
            let line = serde_json::to_string(r).expect("log record serializes");
            if let Err(e) = writeln!(log, "{line}") {
                io_err.get_or_insert(e);
            }
            if let LogRecord::Epoch { epoch, val_loss, best_val, .. } = r {
                let _ = writeln!(out, "epoch {epoch}: validation {val_loss:.6e} (best {best_val:.6e})");
            }
        })?;
        if let Some(e) = io_err.take() {
            return Err(e.into());
        }
        Checkpoint::from_trainer(&trainer).save(&ckpt_path)?;
    }
    writeln!(out, "finished after {} iterations; checkpoint {}", trainer.iteration, ckpt_path.display())?;
    Ok(())
}

fn evaluate_cmd<T: Real>(path: &Path, data: &Dataset, cfg: &EvalConfig) -> Result<ForecastReport> {
    let model = Checkpoint::<T>::load(path)?.model()?;
    evaluate_forecasts(&model, data, data.test_range(), cfg)
}

fn forecast_cmd<T: Real>(path: &Path, data: &Dataset, current: usize, k: usize, substeps: usize) -> Result<Vec<StateField>> {
    let model = Checkpoint::<T>::load(path)?.model()?;
    forecast_frames(&model, data, current, k, substeps)
}

fn range_of(fields: &[&crate::fields::Field2D]) -> (f64, f64) {
    let m = fields.iter().map(|f| f.max_abs()).fold(0.0, f64::max);
    (-m, m)
}

fn tiles(frames: &[&StateField], scale: usize) -> Vec<Vec<Image>> {
    let Some(first) = frames.first() else { return vec![] };
    let mut rows = Vec::new();
    let vel = first.index_of("u").zip(first.index_of("v"));
    if let Some((iu, iv)) = vel {
        let vmax = frames
            .iter()
            .flat_map(|f| f.channel(iu).values().iter().zip(f.channel(iv).values()).map(|(a, b)| a.hypot(*b)))
            .fold(0.0, f64::max);
        rows.push(frames.iter().map(|f| render_velocity(f.channel(iu), f.channel(iv), vmax, scale)).collect());
    }
    for (c, name) in first.names().iter().enumerate() {
        if vel.is_some() && (name == "u" || name == "v") {
            continue;
        }
        let (lo, hi) = range_of(&frames.iter().map(|f| f.channel(c)).collect::<Vec<_>>());
        rows.push(frames.iter().map(|f| render_scalar(f.channel(c), lo, hi, scale)).collect());
    }
    rows
}

fn frames_grid(frames: &[StateField]) -> Image {
    grid_image(&tiles(&frames.iter().collect::<Vec<_>>(), 4), 4)
}

/// Rows: true frames (input first), then predicted frames.
fn comparison_grid(input: &StateField, truth: &[StateField], pred: &[StateField]) -> Image {
    let mut t: Vec<&StateField> = vec![input];
    t.extend(truth);
    let mut p: Vec<&StateField> = vec![input];
    p.extend(pred);
    let all: Vec<&StateField> = t.iter().chain(&p).copied().collect();
    // shared color ranges: render both rows together, then split
    let rows = tiles(&all, 4);
    let n = t.len();
    let mut out = Vec::new();
    for row in &rows {
        out.push(row[..n].to_vec());
    }
    for row in &rows {
        out.push(row[n..].to_vec());
    }
    grid_image(&out, 4)
}
