//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.
//!
//! `SGC_ACCEPTANCE_ONLY=1,2,11` restricts the run to the listed criteria.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgc_core::math::{grad_check, Tape, Tensor2};
use sgc_core::metrics::{auc, mcc, Confusion};
use sgc_core::model::layers::mrgcn_layer;
use sgc_core::model::{
    build_clip, encode_dataset, predict_clip, Checkpoint, EncodedClip, EncodedGraph, History, Mode, ModelConfig,
    ModelParams, Pooling, Spatial, StreamingPredictor, Temporal,
};
use sgc_core::scene_graph::{extract_scene_graph, ExtractionConfig, FrameObjects, ObjectAnnotation, RelationTensors, RelationType};
use sgc_core::training::{cross_validate, ClassWeighting, CvOutcome, TrainConfig};
use sgc_core::{generate_dataset, ScenarioConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(5)
}

// ---------------------------------------------------------------- fixtures

fn random_tensors(rng: &mut impl Rng, n: usize, classes: usize, edges: usize) -> RelationTensors {
    let mut one_hot = Tensor2::zeros(n, classes);
    for v in 0..n {
        one_hot.set(v, rng.gen_range(0..classes), 1.0);
    }
    let mut adjacency = vec![Vec::new(); RelationType::COUNT];
    let mut seen = BTreeSet::new();
    for _ in 0..edges {
        let e = (rng.gen_range(0..n), rng.gen_range(0..n), rng.gen_range(0..RelationType::COUNT));
        if seen.insert(e) {
            adjacency[e.2].push((e.0, e.1));
        }
    }
    RelationTensors { one_hot, adjacency }
}

fn random_clip(rng: &mut impl Rng, frames: usize, nodes: std::ops::RangeInclusive<usize>, classes: usize) -> EncodedClip {
    EncodedClip {
        id: format!("c{}", rng.gen::<u32>()),
        label: rng.gen_range(0..2),
        frames: (0..frames)
            .map(|_| {
                let n = rng.gen_range(nodes.clone());
                EncodedGraph::new(&random_tensors(rng, n, classes, 2 * n)).unwrap()
            })
            .collect(),
    }
}

fn balanced() -> &'static Vec<EncodedClip> {
    static D: OnceLock<Vec<EncodedClip>> = OnceLock::new();
    D.get_or_init(|| {
        let cfg = ScenarioConfig {
            n_clips: 300,
            collision_fraction: 0.5,
            seed: 7,
            ..ScenarioConfig::default()
        };
        let (d, _) = generate_dataset(&cfg, 1).unwrap();
        encode_dataset(&d, &ExtractionConfig::default()).unwrap()
    })
}

fn imbalanced() -> &'static Vec<EncodedClip> {
    static D: OnceLock<Vec<EncodedClip>> = OnceLock::new();
    D.get_or_init(|| {
        let cfg = ScenarioConfig {
            n_clips: 1000,
            collision_fraction: 1.0 / 8.91,
            seed: 8,
            ..ScenarioConfig::default()
        };
        let (d, _) = generate_dataset(&cfg, 1).unwrap();
        encode_dataset(&d, &ExtractionConfig::default()).unwrap()
    })
}

struct Timed {
    cv: CvOutcome,
    elapsed: Duration,
}

fn run_cv(clips: &[EncodedClip], model: &ModelConfig, weights: ClassWeighting) -> Timed {
    let train = TrainConfig {
        seed: 1,
        class_weights: weights,
        ..TrainConfig::default()
    };
    let start = Instant::now();
    let cv = cross_validate(clips, model, &train, jobs(), false).unwrap();
    Timed {
        cv,
        elapsed: start.elapsed(),
    }
}

fn balanced_cv() -> &'static Timed {
    static R: OnceLock<Timed> = OnceLock::new();
    R.get_or_init(|| run_cv(balanced(), &ModelConfig::default(), ClassWeighting::Auto))
}

fn imbalanced_weighted() -> &'static Timed {
    static R: OnceLock<Timed> = OnceLock::new();
    R.get_or_init(|| run_cv(imbalanced(), &ModelConfig::default(), ClassWeighting::Auto))
}

// ---------------------------------------------------------------- criteria

fn c1_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    // Every parameter kind of the default architecture, at narrower widths
    // so finite differences stay within the time budget.
    let cfg = ModelConfig {
        mrgcn_dim: 6,
        lstm_hidden: 4,
        pooling_ratio: 0.5,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let classes = 10;
    let mut worst = 0.0f64;
    let mut params_checked = 0;
    for i in 0..10 {
        let p = ModelParams::init(&cfg, classes, 500 + i).unwrap();
        let frames = rng.gen_range(2..=5);
        let clip = random_clip(&mut rng, frames, 3..=6, classes);
        let report = grad_check(&p.store, 1e-5, 1e-4, |tape, vars| {
            Ok(build_clip(tape, &p, vars, &clip, [0.8, 1.6], &mut Mode::Eval)?.loss)
        })
        .unwrap();
        worst = worst.max(report.worst());
        params_checked += report.entries.len();
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst < 1e-4 && secs < 60.0,
        format!("worst relative error {worst:.2e} < 1e-4 over {params_checked} tensors, {secs:.1} s < 60 s"),
    )
}

/// Per-node double loop over explicit neighbor lists.
fn naive_layer(x: &Tensor2, t: &RelationTensors, w0: &Tensor2, wr: &[Tensor2]) -> Tensor2 {
    let d = w0.cols();
    let mut out = Tensor2::zeros(x.rows(), d);
    for v in 0..x.rows() {
        for j in 0..d {
            let mut s = 0.0;
            for k in 0..x.cols() {
                s += x.get(v, k) * w0.get(k, j);
            }
            for (r, edges) in t.adjacency.iter().enumerate() {
                let nbrs: BTreeSet<usize> = edges.iter().filter(|e| e.1 == v).map(|e| e.0).collect();
                for &u in &nbrs {
                    let mut m = 0.0;
                    for k in 0..x.cols() {
                        m += x.get(u, k) * wr[r].get(k, j);
                    }
                    s += m / nbrs.len() as f64;
                }
            }
            out.set(v, j, s);
        }
    }
    out
}

fn c2_mrgcn_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = ModelConfig {
        mrgcn_layers: 1,
        mrgcn_dim: 8,
        ..ModelConfig::default()
    };
    let classes = 7;
    let mut worst = 0.0f64;
    for g in 0..100 {
        let p = ModelParams::init(&cfg, classes, g).unwrap();
        let n = rng.gen_range(1..=12);
        let edges = rng.gen_range(0..=4 * n);
        let t = random_tensors(&mut rng, n, classes, edges);
        let x = Tensor2::from_vec(n, classes, (0..n * classes).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
        let graph = EncodedGraph::new(&t).unwrap();
        let ids = &p.layout.spatial[0];
        let mut tape = Tape::inference();
        let vars = p.register(&mut tape);
        let xv = tape.constant(x.clone());
        let y = mrgcn_layer(&mut tape, xv, &graph, ids, &vars).unwrap();
        let got = tape.value(y).clone();
        let wr: Vec<Tensor2> = ids.relations.iter().map(|&r| p.store.get(r).clone()).collect();
        let want = naive_layer(&x, &t, p.store.get(ids.self_loop), &wr);
        for (a, b) in got.data().iter().zip(want.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-12, format!("max abs deviation {worst:.2e} <= 1e-12 on 100 graphs"))
}

/// Relations expected for a single object, written out by hand.
struct Placement {
    x: f64,
    y: f64,
    class: &'static str,
    band: Option<&'static str>,
    sector: Option<&'static str>,
    lanes: &'static [usize],
}

const L: usize = 1;
const M: usize = 2;
const R: usize = 3;

fn placements() -> Vec<Placement> {
    let p = |x, y, band, sector, lanes| Placement {
        x,
        y,
        class: "car",
        band,
        sector,
        lanes,
    };
    vec![
        p(0.0, 3.0, Some("Near_Collision"), Some("Front_Right"), &[M]),
        p(0.0, 4.0, Some("Near_Collision"), Some("Front_Right"), &[M]),
        p(0.0, 4.5, Some("Super_Near"), Some("Front_Right"), &[M]),
        p(0.0, 7.0, Some("Super_Near"), Some("Front_Right"), &[M]),
        p(0.0, 7.5, Some("Very_Near"), Some("Front_Right"), &[M]),
        p(0.0, -10.0, Some("Very_Near"), Some("Rear_Right"), &[M]),
        p(0.0, -10.5, Some("Near"), Some("Rear_Right"), &[M]),
        p(0.0, 16.0, Some("Near"), Some("Front_Right"), &[M]),
        p(0.0, 16.5, Some("Visible"), None, &[M]),
        p(0.0, 25.0, Some("Visible"), None, &[M]),
        p(4.0, 0.0, Some("Near_Collision"), Some("Right_Rear"), &[M, R]),
        p(-4.0, 0.0, Some("Near_Collision"), Some("Left_Rear"), &[L, M]),
        p(12.0, 5.0, Some("Near"), Some("Right_Front"), &[R]),
        p(-12.0, 5.0, Some("Near"), Some("Left_Front"), &[L]),
        p(12.0, -5.0, Some("Near"), Some("Right_Rear"), &[R]),
        p(-12.0, -5.0, Some("Near"), Some("Left_Rear"), &[L]),
        p(3.0, 12.0, Some("Near"), Some("Front_Right"), &[M]),
        p(-3.0, -12.0, Some("Near"), Some("Rear_Left"), &[M]),
        p(5.0, 5.0, Some("Very_Near"), Some("Right_Front"), &[M, R]),
        p(-5.0, 5.0, Some("Very_Near"), Some("Left_Front"), &[L, M]),
        p(-1.0, 1.0, Some("Near_Collision"), Some("Left_Front"), &[M]),
        p(-1.0, 2.0, Some("Near_Collision"), Some("Front_Left"), &[M]),
        p(6.0, 8.0, Some("Very_Near"), Some("Front_Right"), &[M, R]),
        p(-6.0, -8.0, Some("Very_Near"), Some("Rear_Left"), &[L, M]),
        p(-3.0, -4.0, Some("Super_Near"), Some("Rear_Left"), &[M]),
        p(4.0, 3.0, Some("Super_Near"), Some("Right_Front"), &[M, R]),
        p(-4.0, -3.0, Some("Super_Near"), Some("Left_Rear"), &[L, M]),
        p(15.0, 20.0, Some("Visible"), None, &[R]),
        p(24.0, 0.0, Some("Visible"), None, &[R]),
        p(-20.0, 10.0, Some("Visible"), None, &[L]),
        p(-36.0, 0.0, None, None, &[]),
        p(0.0, 25.5, None, None, &[]),
        Placement {
            x: 0.0,
            y: 5.0,
            class: "pedestrian",
            band: Some("Super_Near"),
            sector: None,
            lanes: &[],
        },
    ]
}

fn c3_extraction() -> Outcome {
    let cfg = ExtractionConfig::default();
    let table = placements();
    let mut failures = Vec::new();
    for (i, pl) in table.iter().enumerate() {
        let frame = FrameObjects {
            clip_id: "t".into(),
            frame_index: 0,
            objects: vec![ObjectAnnotation {
                id: "o".into(),
                class: pl.class.into(),
                x: pl.x,
                y: pl.y,
            }],
        };
        let g = extract_scene_graph(&frame, &cfg).unwrap();
        let got: BTreeSet<(usize, usize, String)> = g
            .edges
            .iter()
            .map(|e| (e.src, e.dst, e.relation.name().to_string()))
            .collect();
        let mut want: BTreeSet<(usize, usize, String)> = [(0, M, "isIn".to_string())].into();
        let visible = pl.band.is_some();
        if let Some(b) = pl.band {
            want.insert((0, 4, b.into()));
            want.insert((4, 0, b.into()));
        }
        if let Some(s) = pl.sector {
            want.insert((0, 4, s.into()));
        }
        for &lane in pl.lanes.iter().filter(|_| visible) {
            want.insert((4, lane, "isIn".into()));
        }
        if got != want || g.node_count() != 4 + usize::from(visible) {
            failures.push(format!("row {i} ({}, {}): got {got:?}", pl.x, pl.y));
        }
    }
    let boundaries_covered = [4.0, 7.0, 10.0, 16.0, 25.0]
        .iter()
        .all(|&b| table.iter().any(|p| p.x.hypot(p.y) == b));
    outcome(
        failures.is_empty() && boundaries_covered && table.len() >= 20,
        if failures.is_empty() {
            format!("{} placements match, boundaries 4/7/10/16/25 ft covered", table.len())
        } else {
            failures.join("; ")
        },
    )
}

fn c4_learning() -> Outcome {
    let r = balanced_cv();
    let rep = &r.cv.report;
    let auc = rep.auc.unwrap_or(0.0);
    let secs = r.elapsed.as_secs_f64();
    outcome(
        rep.mcc >= 0.6 && auc >= 0.85 && secs <= 1800.0,
        format!(
            "300 clips, 5-fold: mcc {:.4} >= 0.6, auc {auc:.4} >= 0.85, {secs:.0} s <= 1800 s",
            rep.mcc
        ),
    )
}

fn c5_imbalanced() -> Outcome {
    let weighted = imbalanced_weighted();
    let uniform = run_cv(imbalanced(), &ModelConfig::default(), ClassWeighting::Uniform);
    let (w, u) = (weighted.cv.report.mcc, uniform.cv.report.mcc);
    outcome(
        w >= 0.4 && w > u,
        format!(
            "1000 clips at 7.91:1: weighted mcc {w:.4} >= 0.4 and > unweighted {u:.4} ({:.0} s + {:.0} s)",
            weighted.elapsed.as_secs_f64(),
            uniform.elapsed.as_secs_f64()
        ),
    )
}

fn c6_atp() -> Outcome {
    match balanced_cv().cv.report.atp {
        Some(a) => outcome(
            a.ratio <= 0.5,
            format!(
                "atp {:.2} frames / mean length {:.2} = ratio {:.4} <= 0.5 (detected {:.0}% of collision clips)",
                a.atp,
                a.avg_seq_len,
                a.ratio,
                100.0 * a.detection_fraction
            ),
        ),
        None => outcome(false, "no collision clips in the report"),
    }
}

fn c7_ablation() -> Outcome {
    let full = imbalanced_weighted().cv.report.mcc;
    let no_lstm = run_cv(
        imbalanced(),
        &ModelConfig::ablation(Spatial::Mrgcn, Pooling::Sag, Temporal::None),
        ClassWeighting::Auto,
    )
    .cv
    .report
    .mcc;
    let mlp = run_cv(
        imbalanced(),
        &ModelConfig::ablation(Spatial::Mlp, Pooling::Sag, Temporal::Lstm),
        ClassWeighting::Auto,
    )
    .cv
    .report
    .mcc;
    outcome(
        full - no_lstm >= 0.03 && full - mlp >= 0.03,
        format!("mrgcn+lstm {full:.4}, mrgcn without lstm {no_lstm:.4}, mlp+lstm {mlp:.4} (margins >= 0.03)"),
    )
}

fn c8_window() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let classes = 10;
    let windowed = ModelConfig {
        history: History::Window(5),
        ..ModelConfig::default()
    };
    let p = ModelParams::init(&windowed, classes, 8).unwrap();
    let mut fresh = p.clone();
    fresh.config.history = History::Full;
    let mut mismatches = 0;
    let mut compared = 0;
    for _ in 0..50 {
        let frames = rng.gen_range(1..=12);
        let clip = random_clip(&mut rng, frames, 4..=9, classes);
        let trace = predict_clip(&p, &clip).unwrap();
        for n in 0..clip.len() {
            let sub = EncodedClip {
                id: clip.id.clone(),
                label: clip.label,
                frames: clip.frames[n.saturating_sub(4)..=n].to_vec(),
            };
            let last = *predict_clip(&fresh, &sub).unwrap().log_probs.last().unwrap();
            compared += 1;
            if last.map(f64::to_bits) != trace.log_probs[n].map(f64::to_bits) {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{compared} frames over 50 clips, {mismatches} not bit-identical"))
}

fn c9_latency() -> Outcome {
    let cfg = ScenarioConfig {
        n_clips: 20,
        seed: 9,
        ..ScenarioConfig::default()
    };
    let (d, _) = generate_dataset(&cfg, 1).unwrap();
    let extraction = ExtractionConfig::default();
    let clips = encode_dataset(&d, &extraction).unwrap();
    let params = ModelParams::init(&ModelConfig::default(), extraction.vocabulary.len(), 9).unwrap();
    let size = Checkpoint::new(params.clone(), extraction).unwrap().to_bytes().unwrap().len();
    let mut predictor = StreamingPredictor::new(&params);
    let frames: Vec<(usize, &EncodedGraph)> = clips.iter().flat_map(|c| c.frames.iter().enumerate()).collect();
    let (warmup, timed) = (100, 2000);
    let mut total = Duration::ZERO;
    for (i, (n, g)) in frames.iter().cycle().take(warmup + timed).enumerate() {
        if *n == 0 {
            predictor.reset();
        }
        let t = Instant::now();
        std::hint::black_box(predictor.push(g).unwrap());
        if i >= warmup {
            total += t.elapsed();
        }
    }
    let mean_ms = total.as_secs_f64() * 1e3 / timed as f64;
    outcome(
        mean_ms < 5.0 && size < 1 << 20,
        format!("mean {mean_ms:.4} ms < 5 ms per frame, checkpoint {:.1} KB < 1024 KB", size as f64 / 1024.0),
    )
}

fn sgc(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_sgc")).args(args).output().unwrap();
    assert!(out.status.success(), "sgc {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let data = root.join("data");
    sgc(&["gen", "--clips", "40", "--balance", "0.5", "--seed", "10", "--out", data.to_str().unwrap()]);
    let dataset = data.join("dataset.jsonl");
    let run = |name: &str, jobs: &str| {
        let out = root.join(name);
        sgc(&[
            "cv",
            "--dataset",
            dataset.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "10",
            "--epochs",
            "4",
            "--jobs",
            jobs,
        ]);
        out
    };
    let (a, b) = (run("a", "1"), run("b", "2"));
    let files = |p: &Path| -> BTreeSet<String> {
        std::fs::read_dir(p)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect()
    };
    let names = files(&a);
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    let ckpts = names.iter().filter(|n| n.ends_with(".ckpt")).count();
    outcome(
        differing.is_empty() && names == files(&b) && ckpts == 5 && names.contains("report.json"),
        format!("{} artifacts compared ({ckpts} checkpoints), differing: {differing:?}", names.len()),
    )
}

/// Pearson correlation of two 0/1 vectors; 0 when either is constant.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        0.0
    } else {
        cov / (va * vb).sqrt()
    }
}

fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                wins += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    wins / pairs
}

fn c11_metrics() -> Outcome {
    let mut problems = Vec::new();
    let mut cases = 0;
    // Every labelled prediction vector up to length 6.
    for len in 1..=6u32 {
        for mask in 0..(1u32 << (2 * len)) {
            let labels: Vec<u8> = (0..len).map(|i| ((mask >> i) & 1) as u8).collect();
            let preds: Vec<u8> = (0..len).map(|i| ((mask >> (len + i)) & 1) as u8).collect();
            let c = Confusion::from_predictions(&preds, &labels).unwrap();
            let flipped: Vec<u8> = preds.iter().map(|p| 1 - p).collect();
            let cf = Confusion::from_predictions(&flipped, &labels).unwrap();
            let f = |v: &[u8]| v.iter().map(|&x| f64::from(x)).collect::<Vec<_>>();
            let oracle = pearson(&f(&preds), &f(&labels));
            if (mcc(&c) - oracle).abs() > 1e-12 || (mcc(&cf) + mcc(&c)).abs() > 1e-12 {
                problems.push(format!("mcc {labels:?} {preds:?}"));
            }
            let constant = preds.iter().all(|&p| p == preds[0]) || labels.iter().all(|&l| l == labels[0]);
            if constant && mcc(&c) != 0.0 {
                problems.push(format!("zero denominator {labels:?} {preds:?}"));
            }
            cases += 1;
        }
    }
    // Every labelling and every score vector over three levels, up to length 6.
    for len in 2..=6u32 {
        for lm in 0..(1u32 << len) {
            let labels: Vec<u8> = (0..len).map(|i| ((lm >> i) & 1) as u8).collect();
            if !labels.contains(&0) || !labels.contains(&1) {
                continue;
            }
            for sm in 0..3u32.pow(len) {
                let scores: Vec<f64> = (0..len).map(|i| f64::from((sm / 3u32.pow(i)) % 3)).collect();
                let a = auc(&scores, &labels).unwrap();
                let warped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
                if a != pairwise_auc(&scores, &labels) || a != auc(&warped, &labels).unwrap() {
                    problems.push(format!("auc {labels:?} {scores:?}"));
                }
                if sm == 0 && a != 0.5 {
                    problems.push(format!("all-tied auc {a}"));
                }
                cases += 1;
            }
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{cases} exhaustive cases agree with brute-force oracles")
        } else {
            format!("{} mismatches, first: {}", problems.len(), problems[0])
        },
    )
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "gradient correctness", c1_gradients),
        (2, "mr-gcn oracle equivalence", c2_mrgcn_oracle),
        (3, "extraction conformance", c3_extraction),
        (4, "end-to-end learning", c4_learning),
        (5, "imbalanced robustness", c5_imbalanced),
        (6, "average time of prediction", c6_atp),
        (7, "ablation ordering", c7_ablation),
        (8, "5-frame window", c8_window),
        (9, "latency and model size", c9_latency),
        (10, "determinism", c10_determinism),
        (11, "metric identities", c11_metrics),
    ];
    let only: Option<BTreeSet<u32>> = std::env::var("SGC_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (n, name, check) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let r = check();
        println!(
            "criterion {n:>2} {name}: {} - {} [{:.1} s]",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail,
            start.elapsed().as_secs_f64()
        );
        if !r.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
