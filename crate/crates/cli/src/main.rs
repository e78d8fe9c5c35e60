use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use eitnet_core::eval::ablation::{split_samples, write_ablation_csv, write_metrics_csv, first_row_leads};
use eitnet_core::eval::gradcheck::{check_trainable_heads, write_gradcheck_csv, DEFAULT_STEP};
use eitnet_core::eval::train::{eval_transform, write_learning_curve_csv};
use eitnet_core::eval::{
    count_params_flops, generate_synthetic_dataset, load_model, make_split, read_dataset, run_ablation, save_model,
    train_and_evaluate, train_toy, write_dataset, ActionLabel, EitNet, MetricsRow, PipelineConfig, SplitAxis,
    StageToggles, SyntheticAction, SyntheticConfig, TrainConfig,
};
use eitnet_core::stream::camera::{parse_camera_config, CameraSpec};
use eitnet_core::stream::feedback::{emit_feedback, FeedbackMessage};
use eitnet_core::stream::sim::{quadrant_classifier, run_simulation, SchedulerMode, SimConfig};
use eitnet_core::{Error, SeedRng};

const GRADCHECK_TOLERANCE: f64 = 1e-4;
const DEFAULT_FRAME_PERIOD_US: u64 = 33_333;

#[derive(Parser)]
#[command(name = "eitnet", version, about = "Basketball action recognition pipeline and camera-network simulator")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Output {
    /// Output directory.
    #[arg(long, env = "EITNET_OUT", default_value = "eitnet-out")]
    out: PathBuf,
}

#[derive(Args)]
struct Data {
    /// Dataset directory written by `gen-data`; generated in memory from the seed when omitted.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct Hyper {
    #[arg(long, allow_negative_numbers = true)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    /// Weight of the box-regression term in the detection loss.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset fixture.
    GenData {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
        /// Clips per (subject, view, action).
        #[arg(long)]
        repetitions: Option<u32>,
    },
    /// Run detection, feature extraction and classification on every clip.
    RunPipeline {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
        #[command(flatten)]
        data: Data,
        /// Model directory written by `train`; untrained heads when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        toggles: Option<String>,
    },
    /// Train on the training side of a split and save the model.
    Train {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value = "subject")]
        axis: String,
        #[arg(long)]
        toggles: Option<String>,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Accuracy, MPJPE and PA-MPJPE on the held-out side of a split.
    Eval {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value = "subject")]
        axis: String,
        /// Evaluate a saved model instead of training one.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        toggles: Option<String>,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Train and evaluate the full pipeline and each single-stage-off variant.
    Ablate {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
        #[command(flatten)]
        data: Data,
        #[arg(long, default_value = "subject")]
        axis: String,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Simulate the camera network and write the stream report.
    Simulate {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
        /// Camera count, or a camera config file with one `id=.. period_us=..` line per camera.
        #[arg(long, default_value = "3")]
        cameras: String,
        /// Simulated time, e.g. `2s`, `500ms`, `40000us`.
        #[arg(long, default_value = "2s")]
        duration: String,
        #[arg(long)]
        window_period_us: Option<u64>,
        /// Minimum confidence for a feedback message.
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        threshold: f64,
        /// One producer thread per camera instead of the deterministic scheduler.
        #[arg(long)]
        threaded: bool,
    },
    /// Finite-difference check of every trainable head.
    Gradcheck {
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        step: f64,
    },
    /// Per-layer parameter and multiply-accumulate counts.
    Complexity {
        #[command(flatten)]
        output: Output,
        #[arg(long)]
        toggles: Option<String>,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_) => Failure::Config(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(format!("io error: {e}"))
    }
}

type Outcome<T> = Result<T, Failure>;

fn config<T, E: std::fmt::Display>(r: Result<T, E>) -> Outcome<T> {
    r.map_err(|e| Failure::Config(e.to_string()))
}

fn parse_toggles(s: Option<&str>) -> Outcome<StageToggles> {
    let t = match s {
        Some(s) => config(s.parse::<StageToggles>())?,
        None => StageToggles::ALL,
    };
    if !t.any() {
        return Err(Failure::Config("at least one stage must be enabled".into()));
    }
    Ok(t)
}

fn pipeline_config(toggles: StageToggles) -> Outcome<PipelineConfig> {
    let p = PipelineConfig { toggles, ..Default::default() };
    config(p.validate())?;
    Ok(p)
}

fn train_config(h: &Hyper, seed: u64) -> Outcome<TrainConfig> {
    let d = TrainConfig::default();
    let c = TrainConfig {
        learning_rate: h.lr.unwrap_or(d.learning_rate),
        epochs: h.epochs.unwrap_or(d.epochs),
        batch_size: h.batch.unwrap_or(d.batch_size),
        lambda: h.lambda.unwrap_or(d.lambda),
        seed,
        ..d
    };
    config(c.validate())?;
    Ok(c)
}

fn train_header(c: &TrainConfig) -> String {
    format!("lr={} epochs={} batch={} lambda={}", c.learning_rate, c.epochs, c.batch_size, c.lambda)
}

fn load_samples(data: &Data, seed: u64) -> Outcome<Vec<SyntheticAction>> {
    match &data.dataset {
        Some(dir) => {
            if !dir.join("manifest.csv").is_file() {
                return Err(Failure::Config(format!("{} has no manifest.csv", dir.display())));
            }
            Ok(read_dataset(dir)?)
        }
        None => Ok(generate_synthetic_dataset(&SyntheticConfig::default(), seed)?),
    }
}

fn out_dir(o: &Output) -> Outcome<&Path> {
    config(fs::create_dir_all(&o.out).map_err(|e| format!("cannot create {}: {e}", o.out.display())))?;
    Ok(&o.out)
}

fn write_file(path: PathBuf, body: impl FnOnce(&mut BufWriter<File>) -> Outcome<()>) -> Outcome<()> {
    let mut w = BufWriter::new(File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    println!("wrote {}", path.display());
    Ok(())
}

fn parse_duration_us(s: &str) -> Outcome<u64> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit() && c != '.').unwrap_or(s.len());
    let (num, unit) = s.split_at(split);
    let scale = match unit {
        "s" => 1e6,
        "ms" => 1e3,
        "us" => 1.0,
        _ => return Err(Failure::Config(format!("duration {s:?} needs a unit of s, ms or us"))),
    };
    match num.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok((v * scale).round() as u64),
        _ => Err(Failure::Config(format!("bad duration {s:?}"))),
    }
}

/// `n` cameras sharing one frame rate, with seeded clock offsets, jitter and loss.
fn default_cameras(n: u16, seed: u64) -> Vec<CameraSpec> {
    let mut rng = SeedRng::new(seed).fork(0xca3e);
    (1..=n)
        .map(|id| CameraSpec {
            clock_offset_us: rng.range(-3_000.0, 3_000.0).round() as i64,
            jitter_std_us: 500.0,
            drop_probability: 0.05,
            ..CameraSpec::new(id, DEFAULT_FRAME_PERIOD_US)
        })
        .collect()
}

fn cameras_from(arg: &str, seed: u64) -> Outcome<Vec<CameraSpec>> {
    if let Ok(n) = arg.parse::<u16>() {
        if n == 0 {
            return Err(Failure::Config("need at least one camera".into()));
        }
        return Ok(default_cameras(n, seed));
    }
    let text = config(fs::read_to_string(arg).map_err(|e| format!("camera config {arg}: {e}")))?;
    config(parse_camera_config(&text))
}

fn run(cmd: Command) -> Outcome<()> {
    match cmd {
        Command::GenData { seed, output, repetitions } => {
            let cfg = SyntheticConfig { repetitions: repetitions.unwrap_or(SyntheticConfig::default().repetitions), ..Default::default() };
            config(cfg.validate())?;
            let dir = out_dir(&output)?;
            let samples = generate_synthetic_dataset(&cfg, seed)?;
            let manifest = write_dataset(dir, &samples, Some(&format!("seed={seed} command=gen-data repetitions={}", cfg.repetitions)))?;
            println!("wrote {} ({} samples)", manifest.display(), samples.len());
        }
        Command::RunPipeline { seed, output, data, model, toggles } => {
            let model = match model {
                Some(dir) => {
                    let m = load_model(&dir)?;
                    if let Some(t) = toggles.as_deref() {
                        if parse_toggles(Some(t))? != m.config.toggles {
                            return Err(Failure::Config(format!("--toggles {t} differs from the saved model's {}", m.config.toggles)));
                        }
                    }
                    m
                }
                None => EitNet::seeded(pipeline_config(parse_toggles(toggles.as_deref())?)?, seed)?,
            };
            let dir = out_dir(&output)?;
            let samples = load_samples(&data, seed)?;
            let header = format!("# seed={seed} command=run-pipeline toggles={}", model.config.toggles);
            let mut predictions = Vec::with_capacity(samples.len());
            for s in &samples {
                let t = eval_transform(&model, s)?;
                predictions.push(model.predict(&t.apply(&s.clip)?)?);
            }
            write_file(dir.join("predictions.csv"), |w| {
                writeln!(w, "{header}")?;
                writeln!(w, "clip_id,label,predicted,confidence,roi_cx,roi_cy,roi_w,roi_h")?;
                for (s, p) in samples.iter().zip(&predictions) {
                    let predicted = ActionLabel::from_index(p.label).map_or("?", ActionLabel::name);
                    let r = &p.roi;
                    writeln!(
                        w,
                        "{},{},{},{:.6},{:.3},{:.3},{:.3},{:.3}",
                        s.sample_id,
                        s.label.name(),
                        predicted,
                        p.probabilities[p.label],
                        r.cx,
                        r.cy,
                        r.w,
                        r.h
                    )?;
                }
                Ok(())
            })?;
            write_file(dir.join("probabilities.csv"), |w| {
                writeln!(w, "{header}")?;
                writeln!(w, "clip_id,class_id,probability")?;
                for (s, p) in samples.iter().zip(&predictions) {
                    for (c, prob) in p.probabilities.iter().enumerate() {
                        writeln!(w, "{},{c},{prob:.9}", s.sample_id)?;
                    }
                }
                Ok(())
            })?;
        }
        Command::Train { seed, output, data, axis, toggles, hyper } => {
            let axis = config(axis.parse::<SplitAxis>())?;
            let pipeline = pipeline_config(parse_toggles(toggles.as_deref())?)?;
            let train = train_config(&hyper, seed)?;
            let dir = out_dir(&output)?;
            let samples = load_samples(&data, seed)?;
            let plan = make_split(axis, seed);
            let train_set = split_samples(&samples, &plan, true);
            let header = format!("seed={seed} command=train axis={axis} toggles={} {}", pipeline.toggles, train_header(&train));
            let outcome = train_toy(EitNet::seeded(pipeline, seed)?, &train_set, &train)?;
            write_file(dir.join("learning_curve.csv"), |w| Ok(write_learning_curve_csv(w, &outcome.curve, Some(&header))?))?;
            if !outcome.detection_curve.is_empty() {
                write_file(dir.join("detection_curve.csv"), |w| {
                    Ok(write_learning_curve_csv(w, &outcome.detection_curve, Some(&header))?)
                })?;
            }
            save_model(dir.join("model"), &outcome.model)?;
            println!("wrote {}", dir.join("model").display());
        }
        Command::Eval { seed, output, data, axis, model, toggles, hyper } => {
            let axis = config(axis.parse::<SplitAxis>())?;
            let plan = make_split(axis, seed);
            let (header, result) = match model {
                Some(model_dir) => {
                    let m = load_model(&model_dir)?;
                    let samples = load_samples(&data, seed)?;
                    let test = split_samples(&samples, &plan, false);
                    let header = format!("seed={seed} command=eval axis={axis} toggles={} model_seed={}", m.config.toggles, m.seed);
                    (header, eitnet_core::eval::evaluate(&m, &test)?)
                }
                None => {
                    let pipeline = pipeline_config(parse_toggles(toggles.as_deref())?)?;
                    let train = train_config(&hyper, seed)?;
                    let samples = load_samples(&data, seed)?;
                    let header =
                        format!("seed={seed} command=eval axis={axis} toggles={} {}", pipeline.toggles, train_header(&train));
                    let (_, r) = train_and_evaluate(&samples, &plan, pipeline, &train)?;
                    (header, r)
                }
            };
            let dir = out_dir(&output)?;
            let row = MetricsRow::new(&plan, &result);
            write_file(dir.join("metrics.csv"), |w| Ok(write_metrics_csv(w, &[row], Some(&header))?))?;
        }
        Command::Ablate { seed, output, data, axis, hyper } => {
            let axis = config(axis.parse::<SplitAxis>())?;
            let train = train_config(&hyper, seed)?;
            let dir = out_dir(&output)?;
            let samples = load_samples(&data, seed)?;
            let rows = run_ablation(&samples, axis, seed, &StageToggles::ablations(), &train)?;
            let header = format!("seed={seed} command=ablate axis={axis} {}", train_header(&train));
            write_file(dir.join("ablation.csv"), |w| Ok(write_ablation_csv(w, &rows, Some(&header))?))?;
            println!("full pipeline leads every ablation: {}", if first_row_leads(&rows) { "yes" } else { "no" });
        }
        Command::Simulate { seed, output, cameras, duration, window_period_us, threshold, threaded } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(Failure::Config(format!("threshold {threshold} outside [0, 1]")));
            }
            let mut cfg = SimConfig::new(cameras_from(&cameras, seed)?, parse_duration_us(&duration)?, seed);
            cfg.window_period_us = window_period_us;
            cfg.mode = if threaded { SchedulerMode::Threaded } else { SchedulerMode::Deterministic };
            config(cfg.validate())?;
            let dir = out_dir(&output)?;
            let report = run_simulation(&cfg, &mut quadrant_classifier)?;
            let header = format!(
                "# seed={seed} command=simulate cameras={} duration_us={} window_period_us={} threshold={threshold}",
                cfg.cameras.len(),
                cfg.duration_us,
                cfg.window_period()
            );
            write_file(dir.join("sim_report.csv"), |w| {
                writeln!(w, "{header}")?;
                w.write_all(report.to_csv().as_bytes())?;
                Ok(())
            })?;
            write_file(dir.join("feedback.csv"), |w| {
                writeln!(w, "{header}")?;
                writeln!(w, "{}", FeedbackMessage::CSV_HEADER)?;
                for win in &report.windows {
                    if let Ok(p) = &win.outcome {
                        if let Some(m) = emit_feedback(win.window_index, p, win.close_latency_us, threshold) {
                            writeln!(w, "{}", m.to_csv_line())?;
                        }
                    }
                }
                Ok(())
            })?;
        }
        Command::Gradcheck { seed, output, step } => {
            let rows = check_trainable_heads(seed, step)?;
            let dir = out_dir(&output)?;
            let header = format!("seed={seed} command=gradcheck step={step:e} tolerance={GRADCHECK_TOLERANCE:e}");
            write_file(dir.join("gradcheck.csv"), |w| Ok(write_gradcheck_csv(w, &rows, step, Some(&header))?))?;
            if let Some(bad) = rows.iter().find(|r| r.result.max_rel_error > GRADCHECK_TOLERANCE) {
                return Err(Failure::Runtime(format!(
                    "gradient check failed for {}: relative error {:.3e}",
                    bad.layer, bad.result.max_rel_error
                )));
            }
        }
        Command::Complexity { output, toggles } => {
            let pipeline = pipeline_config(parse_toggles(toggles.as_deref())?)?;
            let c = count_params_flops(&pipeline)?;
            let dir = out_dir(&output)?;
            let header = format!("command=complexity toggles={}", pipeline.toggles);
            write_file(dir.join("complexity.csv"), |w| Ok(c.write_csv(w, Some(&header))?))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(2),
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Config(m) => (3, "config", m),
                Failure::Runtime(m) => (1, "runtime", m),
            };
            eprintln!("eitnet: error: {kind}: {}", msg.replace(['\n', '\r'], " "));
            ExitCode::from(code)
        }
    }
}
