//! Command-line surface: data generation, gradient verification, training,
//! evaluation, ablation, rectification dumps and diagnostics.
//!
//! Exit codes: 0 success, 1 verification/analysis failure, 2 I/O or
//! configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use textspot::config::RunConfig;
use textspot::geometry::{Point2, RectCtrlPoints};
use textspot::nn::ParamStore;
use textspot::rectify::{bilinear_sample, build_tps_basis, gen_grid};
use textspot::spotter::{
    evaluate, feature_shift_diagnostic, infer, iou_bin_analysis, train, EvalItem,
    Metrics, TrainMode,
};
use textspot::synth::{read_dataset, read_ppm, render_sample, write_dataset, write_ppm, Sample};
use textspot::verify::{gradient_report, GRAD_TOL};

/// Seed offset separating held-out evaluation images from training images.
const EVAL_SEED_OFFSET: u64 = 1 << 32;

#[derive(Parser)]
#[command(name = "textspot", about = "End-to-end curved text spotting pipeline")]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the schedule seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker cap; 1 (the default) guarantees bit-exact runs.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a synthetic dataset (PPM images + annotations.jsonl).
    GenData {
        out_dir: PathBuf,
        /// Number of images; defaults to the config's dataset_size.
        #[arg(long)]
        count: Option<usize>,
    },
    /// Verify every analytic gradient against central finite differences.
    GradCheck,
    /// Train one model and write a checkpoint plus a per-step loss CSV.
    Train {
        data_dir: PathBuf,
        out_checkpoint: PathBuf,
        /// Loss CSV path; defaults to loss.csv next to the checkpoint.
        #[arg(long)]
        loss_csv: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a dataset and emit a metrics CSV.
    Eval {
        checkpoint: PathBuf,
        data_dir: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the three recognition-coupling modes and tabulate their scores.
    Ablate {
        data_dir: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run inference on one image and dump rectified crops + polygons.
    Rectify {
        checkpoint: PathBuf,
        image: PathBuf,
        out_dir: PathBuf,
    },
    /// Recognition-accuracy-by-IoU and feature-shift diagnostics.
    Analyze {
        checkpoint: PathBuf,
        data_dir: PathBuf,
        /// Directory receiving iou_bins.csv and feature_shift.csv.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

/// Error carrying the process exit code: 1 = verification failure,
/// 2 = I/O or configuration.
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn io(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn verification(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }
}

macro_rules! io_try {
    ($e:expr, $what:expr) => {
        $e.map_err(|err| CliError::io(format!("{}: {err}", $what)))?
    };
}

/// Format with 6 significant digits, plain notation.
fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0.000000".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let dec = (5 - mag).max(0) as usize;
    format!("{x:.dec$}")
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)
            .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.schedule.seed = seed;
    }
    cfg.spotter
        .validate()
        .map_err(|e| CliError::io(e.to_string()))?;
    Ok(cfg)
}

fn render_set(cfg: &RunConfig, base_seed: u64, count: usize) -> Result<Vec<Sample>, CliError> {
    (0..count as u64)
        .map(|i| {
            render_sample(&cfg.synth, base_seed.wrapping_add(i))
                .map_err(|e| CliError::io(e.to_string()))
        })
        .collect()
}

fn load_samples(dir: &Path) -> Result<Vec<Sample>, CliError> {
    read_dataset(dir).map_err(|e| CliError::io(format!("{}: {e}", dir.display())))
}

fn read_checkpoint(path: &Path) -> Result<ParamStore, CliError> {
    let mut file = io_try!(std::fs::File::open(path), path.display());
    ParamStore::read_checkpoint(&mut file)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    io_try!(std::fs::write(path, text), path.display());
    Ok(())
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_text(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn eval_items(
    store: &ParamStore,
    cfg: &RunConfig,
    samples: &[Sample],
) -> Result<Vec<EvalItem>, CliError> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            Ok(EvalItem {
                image_id: format!("img_{i:05}"),
                predictions: infer(&s.image, store, &cfg.spotter)
                    .map_err(|e| CliError::verification(e.to_string()))?,
                annotations: s.instances.clone(),
            })
        })
        .collect()
}

fn metrics_csv(m: &Metrics) -> String {
    let mut out = String::from("metric,value\n");
    let rows = [
        ("det_precision", m.det_precision),
        ("det_recall", m.det_recall),
        ("det_f", m.det_f),
        ("e2e_precision", m.e2e_precision),
        ("e2e_recall", m.e2e_recall),
        ("e2e_f", m.e2e_f),
        ("n_pred", m.n_pred as f64),
        ("n_gt", m.n_gt as f64),
    ];
    for (name, value) in rows {
        let _ = writeln!(out, "{name},{}", fmt6(value));
    }
    out
}

fn train_once(
    cfg: &RunConfig,
    samples: &[Sample],
    mode: TrainMode,
) -> Result<(ParamStore, String), CliError> {
    let (store, log) = train(samples, &cfg.spotter, &cfg.schedule, mode)
        .map_err(|e| CliError::verification(e.to_string()))?;
    let mut csv = String::from("step,total,cls,ctr,rcp,rec,n_pos\n");
    for (step, rec) in log.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{step},{},{},{},{},{},{}",
            fmt6(rec.total),
            fmt6(rec.cls),
            fmt6(rec.ctr),
            fmt6(rec.rcp),
            fmt6(rec.rec),
            rec.n_pos
        );
    }
    Ok((store, csv))
}

fn cmd_gen_data(cli: &Cli, out_dir: &Path, count: Option<usize>) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let count = count.unwrap_or(cfg.dataset_size);
    let samples = render_set(&cfg, cfg.schedule.seed, count)?;
    write_dataset(&samples, out_dir)
        .map_err(|e| CliError::io(format!("{}: {e}", out_dir.display())))?;
    println!("generated,{count}");
    Ok(())
}

fn cmd_grad_check(cli: &Cli) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let report = gradient_report(cfg.schedule.seed)
        .map_err(|e| CliError::verification(e.to_string()))?;
    println!("op,max_rel_err");
    for op in &report {
        println!("{},{:.3e}", op.name, op.max_rel_err);
    }
    if let Some(bad) = report.iter().find(|op| !op.pass()) {
        return Err(CliError::verification(format!(
            "gradient check failed for {}: {:.3e} > {GRAD_TOL:.0e}",
            bad.name, bad.max_rel_err
        )));
    }
    Ok(())
}

fn cmd_train(
    cli: &Cli,
    data_dir: &Path,
    out_checkpoint: &Path,
    loss_csv: &Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let samples = load_samples(data_dir)?;
    let (store, csv) = train_once(&cfg, &samples, cfg.mode)?;
    let mut buf = Vec::new();
    store
        .write_checkpoint(&mut buf)
        .map_err(|e| CliError::io(e.to_string()))?;
    io_try!(std::fs::write(out_checkpoint, &buf), out_checkpoint.display());
    let csv_path = loss_csv.clone().unwrap_or_else(|| {
        out_checkpoint
            .parent()
            .unwrap_or(Path::new("."))
            .join("loss.csv")
    });
    write_text(&csv_path, &csv)
}

fn cmd_eval(
    cli: &Cli,
    checkpoint: &Path,
    data_dir: &Path,
    out: &Option<PathBuf>,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let store = read_checkpoint(checkpoint)?;
    let samples = load_samples(data_dir)?;
    let items = eval_items(&store, &cfg, &samples)?;
    let metrics = evaluate(&items).map_err(|e| CliError::verification(e.to_string()))?;
    emit(out, &metrics_csv(&metrics))
}

fn cmd_ablate(cli: &Cli, data_dir: &Path, out: &Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let samples = load_samples(data_dir)?;
    let eval_set = render_set(
        &cfg,
        cfg.schedule.seed.wrapping_add(EVAL_SEED_OFFSET),
        cfg.eval_size,
    )?;
    let mut csv = String::from("mode,det_f,e2e_f\n");
    for mode in [TrainMode::GtExtract, TrainMode::RecBpNoRcp, TrainMode::Joint] {
        let (store, _) = train_once(&cfg, &samples, mode)?;
        let items = eval_items(&store, &cfg, &eval_set)?;
        let m = evaluate(&items).map_err(|e| CliError::verification(e.to_string()))?;
        let _ = writeln!(csv, "{},{},{}", mode.as_str(), fmt6(m.det_f), fmt6(m.e2e_f));
    }
    emit(out, &csv)
}

fn cmd_rectify(
    cli: &Cli,
    checkpoint: &Path,
    image_path: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let store = read_checkpoint(checkpoint)?;
    let image = read_ppm(image_path).map_err(|e| CliError::io(format!(
        "{}: {e}",
        image_path.display()
    )))?;
    let preds =
        infer(&image, &store, &cfg.spotter).map_err(|e| CliError::verification(e.to_string()))?;
    io_try!(std::fs::create_dir_all(out_dir), out_dir.display());

    // Rectify image pixels at 4x the feature-crop resolution for inspection.
    let (oh, ow) = cfg.spotter.arm_out;
    let basis = build_tps_basis(cfg.spotter.n_rcp, (4 * oh, 4 * ow))
        .map_err(|e| CliError::verification(e.to_string()))?;
    let mut jsonl = String::new();
    for (i, pred) in preds.iter().enumerate() {
        let n = pred.polygon.len() / 2;
        let points = RectCtrlPoints {
            top: pred.polygon[..n].to_vec(),
            bottom: pred.polygon[n..].iter().rev().copied().collect(),
        };
        // Scale destination sites: control points are in pixel coordinates,
        // sampling happens in pixel-index space (centers at integer + 0.5).
        let src: Vec<Point2> = points
            .flat()
            .iter()
            .map(|p| Point2::new(p.x - 0.5, p.y - 0.5))
            .collect();
        let grid = gen_grid(&basis, &src).map_err(|e| CliError::verification(e.to_string()))?;
        let crop = bilinear_sample(&image, &grid)
            .map_err(|e| CliError::verification(e.to_string()))?;
        let crop_path = out_dir.join(format!("crop_{i:02}.ppm"));
        write_ppm(&crop_path, &crop).map_err(|e| CliError::io(format!(
            "{}: {e}",
            crop_path.display()
        )))?;
        let record = serde_json::json!({
            "crop": format!("crop_{i:02}.ppm"),
            "polygon": pred.polygon.iter().map(|p| [p.x, p.y]).collect::<Vec<_>>(),
            "transcript": pred.transcript,
            "det_score": pred.det_score,
        });
        jsonl.push_str(&record.to_string());
        jsonl.push('\n');
    }
    write_text(&out_dir.join("predictions.jsonl"), &jsonl)
}

fn cmd_analyze(
    cli: &Cli,
    checkpoint: &Path,
    data_dir: &Path,
    out_dir: &Path,
) -> Result<(), CliError> {
    let cfg = load_config(cli)?;
    let store = read_checkpoint(checkpoint)?;
    let samples = load_samples(data_dir)?;
    let items = eval_items(&store, &cfg, &samples)?;
    let edges = [0.5, 0.6, 0.7, 0.8, 0.9, 1.0];
    let bins =
        iou_bin_analysis(&items, &edges).map_err(|e| CliError::verification(e.to_string()))?;
    if bins.iter().all(|b| b.count == 0) {
        return Err(CliError::verification(
            "no predictions matched ground truth; nothing to analyze",
        ));
    }
    io_try!(std::fs::create_dir_all(out_dir), out_dir.display());
    let mut bins_csv = String::from("iou_lo,iou_hi,count,accuracy\n");
    for b in &bins {
        let acc = b.accuracy.map(fmt6).unwrap_or_default();
        let _ = writeln!(bins_csv, "{},{},{},{acc}", fmt6(b.lo), fmt6(b.hi), b.count);
    }
    write_text(&out_dir.join("iou_bins.csv"), &bins_csv)?;
    let shift = feature_shift_diagnostic(&store, &cfg.spotter, &samples)
        .map_err(|e| CliError::verification(e.to_string()))?;
    let shift_csv = format!("metric,value\nfeature_shift,{}\n", fmt6(shift));
    write_text(&out_dir.join("feature_shift.csv"), &shift_csv)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::io("--threads must be at least 1"));
    }
    match &cli.cmd {
        Cmd::GenData { out_dir, count } => cmd_gen_data(cli, out_dir, *count),
        Cmd::GradCheck => cmd_grad_check(cli),
        Cmd::Train { data_dir, out_checkpoint, loss_csv } => {
            cmd_train(cli, data_dir, out_checkpoint, loss_csv)
        }
        Cmd::Eval { checkpoint, data_dir, out } => cmd_eval(cli, checkpoint, data_dir, out),
        Cmd::Ablate { data_dir, out } => cmd_ablate(cli, data_dir, out),
        Cmd::Rectify { checkpoint, image, out_dir } => {
            cmd_rectify(cli, checkpoint, image, out_dir)
        }
        Cmd::Analyze { checkpoint, data_dir, out_dir } => {
            cmd_analyze(cli, checkpoint, data_dir, out_dir)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
