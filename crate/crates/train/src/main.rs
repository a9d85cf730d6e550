//! PCLNet command-line front end: train, eval, infer, benchmark, selftest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use pcl_autodiff::{Dtype, Scalar};
use pcl_data::{
    flow_to_color, generate_synthetic, load_dataset, write_flo, write_pclf, write_ppm, Clip,
    DatasetLayout, SyntheticSpec,
};
use pcl_net::Variant;
use pcl_train::{
    benchmark, checkpoint,
    config::{Mode, Precision, TrainConfig},
    pipeline::{center_crop_to_32, Pipeline},
    selftest, TrainError, Trainer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "pclnet", version, about = "Unsupervised optical flow with pyramid ConvLSTM")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Sintel,
    Chairs,
    FramesDir,
    /// Generated translation clips; `--data` is the clip count.
    Synthetic,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SupervisedEpe,
    UnsupervisedReconstruction,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Pclnet,
    Pclnetc,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args)]
struct CommonArgs {
    /// Structured text (TOML) training configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    mode: Option<ModeArg>,
    #[arg(long)]
    variant: Option<VariantArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    precision: Option<PrecisionArg>,
    /// Worker threads for data loading (compute kernels are single-threaded;
    /// 1 guarantees bit-deterministic runs end to end).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write checkpoints.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Dataset directory, or the clip count for --layout synthetic.
        #[arg(long)]
        data: String,
        #[arg(long, value_enum, default_value_t = LayoutArg::Synthetic)]
        layout: LayoutArg,
        #[arg(long)]
        out: PathBuf,
        /// Resume from this checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = false)]
        allow_config_mismatch: bool,
    },
    /// Evaluate a checkpoint on a ground-truth dataset.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: String,
        #[arg(long, value_enum, default_value_t = LayoutArg::Synthetic)]
        layout: LayoutArg,
        /// Write the machine-readable report (CSV) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict flows for clips in a frames directory; writes .flo files and
    /// color PPM renderings.
    Infer {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Directory of numbered frames (frames-dir layout).
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also export motion-feature descriptors to this PCLF file.
        #[arg(long)]
        export_motion: Option<PathBuf>,
    },
    /// Time single-clip forward passes for both variants.
    Benchmark {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the gradient-check and oracle suites.
    Selftest,
}

fn main() -> std::process::ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn apply_overrides(mut cfg: TrainConfig, common: &CommonArgs) -> TrainConfig {
    if let Some(mode) = common.mode {
        cfg.mode = match mode {
            ModeArg::SupervisedEpe => Mode::SupervisedEpe,
            ModeArg::UnsupervisedReconstruction => Mode::UnsupervisedReconstruction,
        };
    }
    if let Some(variant) = common.variant {
        cfg.model.variant = match variant {
            VariantArg::Pclnet => Variant::PclNet,
            VariantArg::Pclnetc => Variant::PclNetC,
        };
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(precision) = common.precision {
        cfg.precision = match precision {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    cfg
}

fn load_config(common: &CommonArgs, fallback: TrainConfig) -> Result<TrainConfig, TrainError> {
    let base = match &common.config {
        Some(path) => TrainConfig::from_toml_file(path)?,
        None => fallback,
    };
    let cfg = apply_overrides(base, common);
    cfg.validate()?;
    Ok(cfg)
}

/// Synthetic training clips: per-clip constant translations, |t| <= 3 px.
fn synthetic_clips<T: Scalar>(cfg: &TrainConfig, count: usize) -> Result<Vec<Clip<T>>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x53_59_4e_54);
    (0..count)
        .map(|i| {
            let tx = rng.gen_range(-3.0..=3.0);
            let ty = rng.gen_range(-3.0..=3.0);
            let spec =
                SyntheticSpec::translation(cfg.clip_len, cfg.frame_size, cfg.frame_size, tx, ty);
            generate_synthetic(&spec, cfg.seed.wrapping_add(i as u64)).map_err(TrainError::Data)
        })
        .collect()
}

/// Collect a clip stream, optionally prefetching on a worker thread.
fn collect_clips<T: Scalar>(
    root: &Path,
    layout: DatasetLayout,
    clip_len: usize,
    threads: usize,
) -> Result<Vec<Clip<T>>, TrainError> {
    let stream = load_dataset::<T>(root, layout, clip_len)?;
    if threads <= 1 {
        let mut stream = stream;
        let clips: Vec<_> = stream.by_ref().collect();
        if stream.skipped() > 0 {
            warn!("skipped {} unreadable clip(s)", stream.skipped());
        }
        return Ok(clips);
    }
    // Single producer keeps delivery order deterministic regardless of
    // buffering depth.
    let (tx, rx) = std::sync::mpsc::sync_channel(threads * 2);
    let handle = std::thread::spawn(move || {
        let mut stream = stream;
        for clip in stream.by_ref() {
            if tx.send(clip).is_err() {
                break;
            }
        }
        stream.skipped()
    });
    let clips: Vec<_> = rx.into_iter().collect();
    if let Ok(skipped) = handle.join() {
        if skipped > 0 {
            warn!("skipped {skipped} unreadable clip(s)");
        }
    }
    Ok(clips)
}

fn dataset_for<T: Scalar>(
    cfg: &TrainConfig,
    data: &str,
    layout: LayoutArg,
    threads: usize,
) -> Result<Vec<Clip<T>>, TrainError> {
    match layout {
        LayoutArg::Synthetic => {
            let count: usize = data
                .parse()
                .map_err(|_| TrainError::Config(format!("--data {data:?} must be a clip count for the synthetic layout")))?;
            synthetic_clips(cfg, count)
        }
        LayoutArg::Sintel => collect_clips(Path::new(data), DatasetLayout::Sintel, cfg.clip_len, threads),
        LayoutArg::Chairs => collect_clips(Path::new(data), DatasetLayout::Chairs, cfg.clip_len, threads),
        LayoutArg::FramesDir => {
            collect_clips(Path::new(data), DatasetLayout::FramesDir, cfg.clip_len, threads)
        }
    }
}

fn run(cli: Cli) -> Result<(), TrainError> {
    match cli.cmd {
        Cmd::Train { common, data, layout, out, checkpoint, allow_config_mismatch } => {
            let cfg = load_config(&common, TrainConfig::default())?;
            match cfg.precision {
                Precision::F32 => {
                    run_train::<f32>(cfg, &common, &data, layout, &out, checkpoint.as_deref(), allow_config_mismatch)
                }
                Precision::F64 => {
                    run_train::<f64>(cfg, &common, &data, layout, &out, checkpoint.as_deref(), allow_config_mismatch)
                }
            }
        }
        Cmd::Eval { common, checkpoint: ck, data, layout, out } => {
            let cfg = load_config(&common, TrainConfig::default())?;
            match checkpoint::peek_dtype(&ck)? {
                Dtype::F32 => run_eval::<f32>(cfg, &common, &ck, &data, layout, out.as_deref()),
                Dtype::F64 => run_eval::<f64>(cfg, &common, &ck, &data, layout, out.as_deref()),
            }
        }
        Cmd::Infer { common, checkpoint: ck, data, out, export_motion } => {
            let cfg = load_config(&common, TrainConfig::default())?;
            match checkpoint::peek_dtype(&ck)? {
                Dtype::F32 => run_infer::<f32>(cfg, &common, &ck, &data, &out, export_motion.as_deref()),
                Dtype::F64 => run_infer::<f64>(cfg, &common, &ck, &data, &out, export_motion.as_deref()),
            }
        }
        Cmd::Benchmark { common, runs, out } => {
            let cfg = load_config(&common, TrainConfig::default())?;
            let report = benchmark::run_benchmark(&cfg, runs)?;
            print!("{}", report.text());
            if let Some(path) = out {
                std::fs::write(&path, report.text()).map_err(|e| TrainError::io(&path, e))?;
            }
            if !report.ordering_ok() {
                return Err(TrainError::Config(
                    "expected PCLNet to be lighter and no slower than PCLNetC".into(),
                ));
            }
            Ok(())
        }
        Cmd::Selftest => {
            let mut all_ok = true;
            let t0 = Instant::now();
            for result in selftest::gradient_suite().into_iter().chain(selftest::oracle_suite()) {
                let status = if result.passed { "PASS" } else { "FAIL" };
                println!("[{status}] {:<32} {}", result.name, result.detail);
                all_ok &= result.passed;
            }
            println!("selftest finished in {:.1}s", t0.elapsed().as_secs_f64());
            if all_ok {
                Ok(())
            } else {
                Err(TrainError::Config("selftest failures above".into()))
            }
        }
    }
}

fn run_train<T: Scalar>(
    cfg: TrainConfig,
    common: &CommonArgs,
    data: &str,
    layout: LayoutArg,
    out: &Path,
    resume: Option<&Path>,
    allow_config_mismatch: bool,
) -> Result<(), TrainError> {
    let clips = dataset_for::<T>(&cfg, data, layout, common.threads)?;
    info!("loaded {} clip(s); parameters: {}", clips.len(), pcl_net::param_count(&cfg.model));
    let mut trainer = match resume {
        Some(path) => Trainer::<T>::resume(cfg, path, allow_config_mismatch)?,
        None => Trainer::<T>::new(cfg)?,
    };
    let has_gt = clips.first().map(|c| c.gt_flows.is_some()).unwrap_or(false);
    let val = if has_gt { Some(&clips[..clips.len().min(8)]) } else { None };
    let outcome = trainer.run(&clips, val, Some(out), |_| false)?;
    info!(
        "finished after {} iteration(s), final loss {:.6}",
        outcome.iterations, outcome.final_loss
    );
    if let Some(ck) = &outcome.checkpoint {
        info!("final checkpoint: {}", ck.display());
    }
    Ok(())
}

fn run_eval<T: Scalar>(
    cfg: TrainConfig,
    common: &CommonArgs,
    ck: &Path,
    data: &str,
    layout: LayoutArg,
    out: Option<&Path>,
) -> Result<(), TrainError> {
    let loaded = checkpoint::load::<T>(ck, cfg.hash(), true)?;
    let pipeline = Pipeline::from_params(cfg.clone(), loaded.params)?;
    let clips = dataset_for::<T>(&cfg, data, layout, common.threads)?;
    let report = pipeline.evaluate(&clips)?;
    println!("clips:        {}", report.clips);
    println!("transitions:  {}", report.transitions);
    println!("mean EPE:     {:.4}", report.mean_epe);
    println!("median EPE:   {:.4}", report.median_epe);
    for (stride, epe) in &report.per_scale {
        println!("  stride {stride:>2}:  {epe:.4}");
    }
    println!("sec/clip:     {:.4}", report.sec_per_clip);
    if let Some(path) = out {
        let text = format!("{}\n{}\n", pcl_train::EpeReport::csv_header(), report.csv_row(data));
        std::fs::write(path, text).map_err(|e| TrainError::io(path, e))?;
    }
    Ok(())
}

fn run_infer<T: Scalar>(
    cfg: TrainConfig,
    common: &CommonArgs,
    ck: &Path,
    data: &Path,
    out: &Path,
    export_motion: Option<&Path>,
) -> Result<(), TrainError> {
    let loaded = checkpoint::load::<T>(ck, cfg.hash(), true)?;
    let pipeline = Pipeline::from_params(cfg.clone(), loaded.params)?;
    let clips = collect_clips::<T>(data, DatasetLayout::FramesDir, cfg.clip_len, common.threads)?;
    std::fs::create_dir_all(out).map_err(|e| TrainError::io(out, e))?;

    let mut io_failures = 0usize;
    let mut aligned = Vec::with_capacity(clips.len());
    for (ci, clip) in clips.iter().enumerate() {
        let clip = if clip.height() % 32 != 0 || clip.width() % 32 != 0 {
            warn!(
                "clip {ci}: extents {}x{} not divisible by 32, center-cropping",
                clip.height(),
                clip.width()
            );
            center_crop_to_32(clip)?
        } else {
            clip.clone()
        };
        let flows = pipeline.infer_clip(&clip)?;
        for (t, flow) in flows.iter().enumerate() {
            let flo_path = out.join(format!("clip{ci:04}_{:02}.flo", t + 1));
            if let Err(e) = write_flo(&flo_path, flow) {
                warn!("{e}");
                io_failures += 1;
                continue;
            }
            let color = flow_to_color(flow, None);
            let ppm_path = out.join(format!("clip{ci:04}_{:02}.ppm", t + 1));
            if let Err(e) = write_ppm(&ppm_path, &color) {
                warn!("{e}");
                io_failures += 1;
            }
        }
        aligned.push(clip);
    }
    if let Some(path) = export_motion {
        let file = pipeline.export_motion_descriptors(&aligned)?;
        write_pclf(path, &file)?;
        info!("wrote motion descriptors for {} clip(s) to {}", file.clips.len(), path.display());
    }
    if io_failures > 0 {
        warn!("{io_failures} file(s) failed to write");
    }
    info!("wrote flows for {} clip(s) to {}", aligned.len(), out.display());
    Ok(())
}
