use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sgc_core::dataset::{load_jsonl, write_jsonl};
use sgc_core::metrics::MetricsReport;
use sgc_core::model::{encode_dataset, Checkpoint, ModelConfig, StreamingPredictor};
use sgc_core::scene_graph::{extract_scene_graph, BevCalibration, SceneGraph};
use sgc_core::training::{self, curves_csv, ClassWeighting, RunManifest};
use sgc_core::{generate_dataset, Dataset};

use crate::config::RunConfig;
use crate::{BenchArgs, Cli, Command, ConfigCommand, CvArgs, EvalArgs, ExtractArgs, GenArgs, ModelArgs, Preset, TrainArgs, UsageError, Weighting};

pub fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Gen(a) => gen(cfg, a),
        Command::Extract(a) => extract(cfg, a),
        Command::Train(a) => train(cfg, a),
        Command::Cv(a) => cv(cfg, a),
        Command::Eval(a) => eval(cfg, a, "eval"),
        Command::Transfer(a) => eval(cfg, a, "transfer"),
        Command::Bench(a) => bench(a),
        Command::Config(ConfigCommand::Dump) => {
            print!("{}", cfg.to_toml()?);
            Ok(())
        }
    }
}

fn out_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    let dir = flag.unwrap_or_else(|| cfg.paths.out_dir.clone());
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn load_dataset(cfg: &RunConfig, path: &Path, calibration: Option<&Path>) -> Result<Dataset> {
    let calib = match calibration.or(cfg.paths.calibration.as_deref()) {
        Some(p) => Some(BevCalibration::from_json(
            &fs::read_to_string(p).with_context(|| format!("cannot read calibration {}", p.display()))?,
        )?),
        None => None,
    };
    load_jsonl(path, calib.as_ref()).with_context(|| format!("loading {}", path.display()))
}

fn gen(mut cfg: RunConfig, a: GenArgs) -> Result<()> {
    if let Some(n) = a.clips {
        cfg.scenario.n_clips = n;
    }
    if let Some(f) = a.balance {
        cfg.scenario.collision_fraction = f;
    }
    if let Some(s) = a.seed {
        cfg.set_seed(s);
    }
    let dir = out_dir(&cfg, a.out)?;
    let (dataset, manifest) = generate_dataset(&cfg.scenario, a.jobs)?;
    write_jsonl(&dataset, &dir.join("dataset.jsonl"))?;
    write_json(&dir.join("manifest.json"), &manifest)?;
    println!(
        "{} clips ({} collision, {} no-collision, ratio {:.2}:1), mean length {:.1} frames -> {}",
        manifest.clips,
        manifest.collision_clips,
        manifest.no_collision_clips,
        manifest.class_ratio,
        manifest.mean_clip_len,
        dir.join("dataset.jsonl").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ClipGraphs<'a> {
    clip_id: &'a str,
    label: u8,
    frames: Vec<SceneGraph>,
}

fn extract(cfg: RunConfig, a: ExtractArgs) -> Result<()> {
    cfg.extraction.validate()?;
    let dataset = load_dataset(&cfg, &a.dataset, a.calibration.as_deref())?;
    let dir = out_dir(&cfg, a.out)?;
    let graphs = dir.join("graphs");
    fs::create_dir_all(&graphs)?;
    let mut frames = 0;
    for clip in &dataset.clips {
        let out = ClipGraphs {
            clip_id: &clip.id,
            label: clip.label,
            frames: clip
                .frames
                .iter()
                .map(|f| extract_scene_graph(f, &cfg.extraction))
                .collect::<sgc_core::Result<_>>()?,
        };
        frames += out.frames.len();
        write_json(&graphs.join(format!("{}.json", clip.id)), &out)?;
    }
    write_json(&dir.join("extraction.json"), &cfg.extraction)?;
    println!("{} clips, {frames} frames -> {}", dataset.clips.len(), graphs.display());
    Ok(())
}

/// Folds command-line overrides into the loaded configuration.
fn apply_model_args(cfg: &mut RunConfig, m: &ModelArgs) {
    if let Some(s) = m.seed {
        cfg.set_seed(s);
    }
    if m.preset == Some(Preset::Dash620) {
        cfg.model = ModelConfig::preset_620dash();
    }
    if let Some(ab) = m.ablation {
        cfg.model.spatial = ab.spatial;
        cfg.model.pooling = ab.pooling;
        cfg.model.temporal = ab.temporal;
    }
    if let Some(h) = m.history {
        cfg.model.history = h;
    }
    if let Some(e) = m.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = m.lr {
        cfg.train.learning_rate = lr;
    }
    match m.weighting {
        Some(Weighting::Auto) => cfg.train.class_weights = ClassWeighting::Auto,
        Some(Weighting::Uniform) => cfg.train.class_weights = ClassWeighting::Uniform,
        None => {}
    }
    if m.no_early_stop {
        cfg.train.early_stop_patience = None;
    }
}

fn train(mut cfg: RunConfig, a: TrainArgs) -> Result<()> {
    apply_model_args(&mut cfg, &a.model);
    let dataset = load_dataset(&cfg, &a.dataset, None)?;
    let clips = encode_dataset(&dataset, &cfg.extraction)?;
    let dir = out_dir(&cfg, a.out)?;
    let outcome = training::train_with_progress(&clips, &cfg.model, &cfg.train, |r| {
        if r.epoch % 10 == 0 {
            eprintln!("epoch {:>4} train {:.5} val {}", r.epoch, r.train_loss, r.val_loss.map_or("-".into(), |v| format!("{v:.5}")));
        }
    })?;
    let ckpt = Checkpoint::new(outcome.params.clone(), cfg.extraction.clone())?;
    let bytes = ckpt.save(&dir.join("model.ckpt"))?;
    let report = training::evaluate_clips(&outcome.params, &clips, 1, false)?;
    write(&dir.join("curve.csv"), curves_csv(std::slice::from_ref(&outcome.curve)))?;
    write_json(
        &dir.join("manifest.json"),
        &RunManifest {
            command: "train".into(),
            seed: cfg.train.seed,
            dataset: a.dataset.display().to_string(),
            clips: clips.len(),
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            extraction: cfg.extraction.clone(),
            folds: Vec::new(),
            curves: vec![outcome.curve.clone()],
            report: Some(report.clone()),
        },
    )?;
    println!("{}", report.to_table());
    println!(
        "epochs run {}, best epoch {}, checkpoint {:.1} KB -> {}",
        outcome.epochs_run(),
        outcome.best_epoch,
        bytes as f64 / 1024.0,
        dir.join("model.ckpt").display()
    );
    Ok(())
}

fn report_csv(r: &MetricsReport) -> String {
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let mut out = String::from("scope,accuracy,auc,mcc,tp,fp,tn,fn,atp_ratio\n");
    let c = &r.confusion;
    let _ = writeln!(
        out,
        "pooled,{},{},{},{},{},{},{},{}",
        r.accuracy,
        opt(r.auc),
        r.mcc,
        c.tp,
        c.fp,
        c.tn,
        c.fn_,
        opt(r.atp_ratio())
    );
    for f in &r.folds {
        let c = &f.confusion;
        let _ = writeln!(
            out,
            "fold{},{},{},{},{},{},{},{},{}",
            f.fold,
            f.accuracy,
            opt(f.auc),
            f.mcc,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            opt(f.atp_ratio)
        );
    }
    out
}

fn cv(mut cfg: RunConfig, a: CvArgs) -> Result<()> {
    apply_model_args(&mut cfg, &a.model);
    if let Some(k) = a.folds {
        cfg.train.folds = k;
    }
    let dataset = load_dataset(&cfg, &a.dataset, None)?;
    let clips = encode_dataset(&dataset, &cfg.extraction)?;
    let dir = out_dir(&cfg, a.out)?;
    let outcome = training::cross_validate(&clips, &cfg.model, &cfg.train, a.model.jobs, a.per_clip)?;
    for f in &outcome.folds {
        Checkpoint::new(f.outcome.params.clone(), cfg.extraction.clone())?
            .save(&dir.join(format!("fold{}.ckpt", f.split.fold)))?;
    }
    let curves: Vec<_> = outcome.folds.iter().map(|f| f.outcome.curve.clone()).collect();
    write(&dir.join("curves.csv"), curves_csv(&curves))?;
    write(&dir.join("report.json"), outcome.report.to_json()? + "\n")?;
    write(&dir.join("report.csv"), report_csv(&outcome.report))?;
    write_json(
        &dir.join("manifest.json"),
        &RunManifest {
            command: "cv".into(),
            seed: cfg.train.seed,
            dataset: a.dataset.display().to_string(),
            clips: clips.len(),
            model: cfg.model.clone(),
            train: cfg.train.clone(),
            extraction: cfg.extraction.clone(),
            folds: outcome.folds.iter().map(|f| f.split.clone()).collect(),
            curves,
            report: Some(outcome.report.clone()),
        },
    )?;
    println!("{}", outcome.report.to_table());
    Ok(())
}

fn eval(cfg: RunConfig, a: EvalArgs, command: &str) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let dataset = load_dataset(&cfg, &a.dataset, None)?;
    let report = training::transfer_eval(&ckpt, &dataset, a.jobs, a.per_clip)?;
    println!("{}", report.to_table());
    if let Some(out) = a.out {
        let dir = out_dir(&cfg, Some(out))?;
        write(&dir.join("report.json"), report.to_json()? + "\n")?;
        write(&dir.join("report.csv"), report_csv(&report))?;
        write_json(
            &dir.join("manifest.json"),
            &RunManifest {
                command: command.into(),
                seed: cfg.train.seed,
                dataset: a.dataset.display().to_string(),
                clips: report.clips,
                model: ckpt.params.config.clone(),
                train: cfg.train.clone(),
                extraction: ckpt.extraction.clone(),
                folds: Vec::new(),
                curves: Vec::new(),
                report: Some(report.clone()),
            },
        )?;
    }
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub warmup_frames: u64,
    pub timed_frames: u64,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p99_ms: f64,
    pub parameters: usize,
    pub checkpoint_kb: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn bench(a: BenchArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint).with_context(|| format!("loading {}", a.checkpoint.display()))?;
    let size = fs::metadata(&a.checkpoint)?.len();
    let dataset = load_jsonl(&a.dataset, None)?;
    let clips = encode_dataset(&dataset, &ckpt.extraction)?;
    if clips.iter().all(|c| c.is_empty()) {
        return Err(UsageError("bench needs a dataset with at least one frame".into()).into());
    }
    let mut predictor = StreamingPredictor::new(&ckpt.params);
    let frames = clips.iter().flat_map(|c| c.frames.iter().enumerate()).cycle();
    let mut times = Vec::with_capacity(a.repetitions as usize);
    for (i, (n, g)) in frames.take((a.warmup + a.repetitions) as usize).enumerate() {
        if n == 0 {
            predictor.reset();
        }
        let start = Instant::now();
        let out = predictor.push(g)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        std::hint::black_box(out);
        if i as u64 >= a.warmup {
            times.push(elapsed);
        }
    }
    times.sort_by(f64::total_cmp);
    let report = BenchReport {
        warmup_frames: a.warmup,
        timed_frames: a.repetitions,
        mean_ms: times.iter().sum::<f64>() / times.len() as f64,
        median_ms: percentile(&times, 0.5),
        p99_ms: percentile(&times, 0.99),
        parameters: ckpt.params.scalar_count(),
        checkpoint_kb: size as f64 / 1024.0,
    };
    println!(
        "frames {} (after {} warm-up)\nmean {:.4} ms\nmedian {:.4} ms\np99 {:.4} ms\nparameters {}\ncheckpoint {:.1} KB",
        report.timed_frames, report.warmup_frames, report.mean_ms, report.median_ms, report.p99_ms, report.parameters, report.checkpoint_kb
    );
    if let Some(dir) = a.out {
        fs::create_dir_all(&dir)?;
        write_json(&dir.join("bench.json"), &report)?;
    }
    Ok(())
}
