//! Kinematic lane-change scenarios at object level.
//!
//! Positions are relative to the ego car (x right, y forward, feet). Every
//! clip holds at most one "key" vehicle whose motion decides the label, plus
//! distractor vehicles in the adjacent lanes and pedestrians on the shoulder.
//! Collision clips end with the key vehicle in contact range; the benign
//! counterpart of each template starts from the same geometry but holds,
//! recedes or passes at a safe gap.

use std::collections::BTreeMap;
use std::f64::consts::{SQRT_2, TAU};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Clip, Dataset};
use crate::error::{Error, Result};
use crate::scene_graph::{FrameObjects, ObjectAnnotation};

const LANE_FT: f64 = 12.0;
const CONTACT_FT: f64 = 2.0;
const SAFE_FT: f64 = 4.0;
const MAX_ATTEMPTS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Ego changes lane into the lane of a nearby vehicle.
    CutIn,
    /// A vehicle closes in from behind in the ego lane.
    RearApproach,
    /// The lead vehicle in the ego lane brakes.
    DeceleratingLead,
    /// Ego changes lane with no vehicle on a conflicting path.
    BenignLaneChange,
}

impl Template {
    pub const ALL: [Template; 4] = [
        Template::CutIn,
        Template::RearApproach,
        Template::DeceleratingLead,
        Template::BenignLaneChange,
    ];

    pub fn can_collide(self) -> bool {
        self != Template::BenignLaneChange
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_clips: usize,
    pub collision_fraction: f64,
    /// Inclusive range of frames per clip.
    pub frames_per_clip: [usize; 2],
    pub frame_rate: f64,
    pub n_other_vehicles: [usize; 2],
    pub n_pedestrians: [usize; 2],
    /// Ego speed; sets how fast roadside pedestrians move past.
    pub ego_speed_fps: [f64; 2],
    /// Upper bound on any vehicle's speed relative to ego.
    pub max_relative_speed_fps: f64,
    /// Initial distance of the key vehicle.
    pub start_gap_ft: [f64; 2],
    /// Range of `p` in the collision approach profile `1 - (1 - t)^p`;
    /// 1 is constant closing speed, larger values close the gap earlier.
    pub approach_exponent: [f64; 2],
    /// Closest a non-colliding vehicle gets while sharing the ego lane.
    pub benign_lane_gap_ft: f64,
    /// Standard deviation of the position jitter, truncated at two sigma.
    pub noise_std_ft: f64,
    /// Classes drawn uniformly for every vehicle.
    pub vehicle_classes: Vec<String>,
    pub seed: u64,
    pub templates: Vec<Template>,
    pub id_prefix: String,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_clips: 306,
            collision_fraction: 0.5,
            frames_per_clip: [20, 60],
            frame_rate: 20.0,
            n_other_vehicles: [0, 3],
            n_pedestrians: [0, 2],
            ego_speed_fps: [30.0, 90.0],
            max_relative_speed_fps: 60.0,
            start_gap_ft: [12.0, 22.0],
            approach_exponent: [1.5, 3.0],
            benign_lane_gap_ft: 10.0,
            noise_std_ft: 0.2,
            vehicle_classes: vec!["car".into()],
            seed: 0,
            templates: Template::ALL.to_vec(),
            id_prefix: "clip".into(),
        }
    }
}

fn check_range<T: PartialOrd + std::fmt::Debug>(name: &str, r: &[T; 2]) -> Result<()> {
    if r[0] > r[1] {
        return Err(Error::Config(format!("{name} range {r:?} is empty")));
    }
    Ok(())
}

impl ScenarioConfig {
    fn end_radius(&self) -> f64 {
        CONTACT_FT - 2.0 * SQRT_2 * self.noise_std_ft - 0.1
    }

    fn safe_gap(&self) -> f64 {
        SAFE_FT + 2.0 * SQRT_2 * self.noise_std_ft + 1.0
    }

    pub fn collision_clips(&self) -> usize {
        (self.n_clips as f64 * self.collision_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.collision_fraction > 0.0 && self.collision_fraction < 1.0) {
            return Err(Error::Config(format!(
                "collision_fraction must lie in (0, 1), got {}",
                self.collision_fraction
            )));
        }
        check_range("frames_per_clip", &self.frames_per_clip)?;
        check_range("n_other_vehicles", &self.n_other_vehicles)?;
        check_range("n_pedestrians", &self.n_pedestrians)?;
        check_range("ego_speed_fps", &self.ego_speed_fps)?;
        check_range("start_gap_ft", &self.start_gap_ft)?;
        check_range("approach_exponent", &self.approach_exponent)?;
        if self.approach_exponent[0] < 1.0 {
            return Err(Error::Config("approach_exponent must be at least 1".into()));
        }
        if self.frames_per_clip[0] < 2 {
            return Err(Error::Config("clips need at least 2 frames".into()));
        }
        if !(self.frame_rate > 0.0) || !(self.max_relative_speed_fps > 0.0) {
            return Err(Error::Config("frame_rate and max_relative_speed_fps must be positive".into()));
        }
        if !(0.0..=0.6).contains(&self.noise_std_ft) {
            return Err(Error::Config(format!(
                "noise_std_ft must lie in [0, 0.6] to keep labels sound, got {}",
                self.noise_std_ft
            )));
        }
        if self.start_gap_ft[0] < 8.0 || self.start_gap_ft[1] > 25.0 {
            return Err(Error::Config(format!(
                "start_gap_ft must lie within [8, 25] feet, got {:?}",
                self.start_gap_ft
            )));
        }
        if self.benign_lane_gap_ft < self.safe_gap() || self.benign_lane_gap_ft + 1.0 > self.start_gap_ft[0] {
            return Err(Error::Config(format!(
                "benign_lane_gap_ft must lie in [{:.2}, start_gap_ft[0] - 1], got {}",
                self.safe_gap(),
                self.benign_lane_gap_ft
            )));
        }
        if self.vehicle_classes.is_empty() {
            return Err(Error::Config("at least one vehicle class is required".into()));
        }
        if self.templates.is_empty() {
            return Err(Error::Config("at least one template is required".into()));
        }
        if !self.templates.iter().any(|t| t.can_collide()) && self.collision_clips() > 0 {
            return Err(Error::Generation(
                "collision clips requested but no configured template can produce one".into(),
            ));
        }
        // The shortest clip must be able to close the smallest start gap;
        // the approach profile starts at `p` times the mean closing speed.
        let shortest = (self.frames_per_clip[0] - 1) as f64 / self.frame_rate;
        let needed = self.approach_exponent[0] * (self.start_gap_ft[0] - self.end_radius()) / shortest;
        if needed > self.max_relative_speed_fps {
            return Err(Error::Generation(format!(
                "a {}-frame clip at {} fps lasts {shortest:.3} s; closing {} ft needs {needed:.1} ft/s, \
                 above max_relative_speed_fps {}",
                self.frames_per_clip[0], self.frame_rate, self.start_gap_ft[0], self.max_relative_speed_fps
            )));
        }
        Ok(())
    }
}

/// Per-clip facts for the manifest and for label checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipStats {
    pub clip_id: String,
    pub label: u8,
    pub template: Template,
    pub frames: usize,
    /// Closest emitted vehicle distance over the clip.
    pub min_vehicle_distance_ft: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub config: ScenarioConfig,
    pub clips: usize,
    pub collision_clips: usize,
    pub no_collision_clips: usize,
    /// Non-collision clips per collision clip.
    pub class_ratio: f64,
    pub mean_clip_len: f64,
    pub template_counts: BTreeMap<String, usize>,
    /// Largest closest-approach distance among collision clips.
    pub max_collision_min_distance_ft: f64,
    /// Smallest vehicle distance among non-collision clips.
    pub min_benign_distance_ft: f64,
    pub clip_stats: Vec<ClipStats>,
}

struct Agent {
    id: String,
    class: String,
    path: Vec<(f64, f64)>,
    vehicle: bool,
}

fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

fn sample(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.gen_range(r[0]..r[1])
    }
}

fn sign(rng: &mut impl Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// Lateral ego offset for a lane change of `dir` lanes over `[t0, t1]`.
fn ego_shift(tau: f64, dir: f64, t0: f64, t1: f64) -> f64 {
    dir * LANE_FT * smoothstep((tau - t0) / (t1 - t0))
}

struct ClipPlan {
    label: u8,
    template: Template,
    frames: usize,
}

impl ScenarioConfig {
    fn taus(&self, frames: usize) -> impl Iterator<Item = f64> {
        (0..frames).map(move |f| f as f64 / (frames - 1) as f64)
    }

    /// Noise-free path of the key vehicle and the ego lateral shift.
    fn key_path(&self, plan: &ClipPlan, rng: &mut ChaCha8Rng) -> (Option<Vec<(f64, f64)>>, Vec<f64>) {
        let n = plan.frames;
        let collide = plan.label == 1;
        let gap = sample(rng, self.start_gap_ft);
        let end_r = self.end_radius() * rng.gen_range(0.4..0.95);
        let side = sign(rng);
        let no_shift = vec![0.0; n];
        let taus: Vec<f64> = self.taus(n).collect();
        let (amp, cycles, phase) = (rng.gen_range(0.0..1.5), rng.gen_range(0.5..1.5), rng.gen_range(0.0..TAU));
        let wobble = |t: f64| amp * (TAU * cycles * t + phase).sin();
        // Collision approaches close most of the gap early, then creep in.
        let p = rng.gen_range(self.approach_exponent[0]..=self.approach_exponent[1]);
        let ease = |t: f64| 1.0 - (1.0 - t).powf(p);
        match plan.template {
            Template::DeceleratingLead => {
                let y0 = gap;
                let x0 = rng.gen_range(-1.0..1.0);
                let path = if collide {
                    let (xe, ye) = (rng.gen_range(-0.3..0.3), end_r);
                    taus.iter().map(|&t| (lerp(x0, xe, ease(t)), lerp(y0, ye, ease(t)))).collect()
                } else if rng.gen_bool(0.5) {
                    // Matches speed: the gap only wobbles.
                    let y_hold = y0.max(self.benign_lane_gap_ft + 1.5);
                    taus.iter().map(|&t| (x0, y_hold + wobble(t))).collect()
                } else {
                    // Pulls away.
                    let y_start = rng.gen_range(self.benign_lane_gap_ft..y0.max(self.benign_lane_gap_ft + 0.5));
                    let y_end = rng.gen_range(y_start + 6.0..y_start + 14.0);
                    taus.iter().map(|&t| (x0, lerp(y_start, y_end, t))).collect()
                };
                (Some(path), no_shift)
            }
            Template::RearApproach => {
                let y0 = -gap;
                let x0 = rng.gen_range(-1.0..1.0);
                let path = if collide {
                    let (xe, ye) = (rng.gen_range(-0.3..0.3), -end_r);
                    taus.iter().map(|&t| (lerp(x0, xe, ease(t)), lerp(y0, ye, ease(t)))).collect()
                } else {
                    match rng.gen_range(0..3) {
                        // Overtakes through the adjacent lane.
                        0 => {
                            let y_end = rng.gen_range(4.0..20.0);
                            let t1 = rng.gen_range(0.2..0.4);
                            taus.iter()
                                .map(|&t| (lerp(x0, side * LANE_FT, smoothstep(t / t1)), lerp(y0, y_end, t)))
                                .collect()
                        }
                        // Follows at a steady distance.
                        1 => {
                            let y_hold = y0.min(-(self.benign_lane_gap_ft + 1.5));
                            taus.iter().map(|&t| (x0, y_hold + wobble(t))).collect()
                        }
                        // Falls back.
                        _ => {
                            let y_start = -rng.gen_range(self.benign_lane_gap_ft..gap.max(self.benign_lane_gap_ft + 0.5));
                            let y_end = y_start - rng.gen_range(6.0..14.0);
                            taus.iter().map(|&t| (x0, lerp(y_start, y_end, t))).collect()
                        }
                    }
                };
                (Some(path), no_shift)
            }
            Template::CutIn => {
                let t0 = rng.gen_range(0.0..0.2);
                let t1 = rng.gen_range(0.5..0.8);
                let ahead = sign(rng);
                let y0 = ahead * (gap * gap - LANE_FT * LANE_FT).max(9.0).sqrt();
                let toward = collide || rng.gen_bool(0.5);
                let dir = if toward { side } else { -side };
                let shift: Vec<f64> = taus.iter().map(|&t| ego_shift(t, dir, t0, t1)).collect();
                let (y_end, x_end) = if collide {
                    (ahead * end_r * rng.gen_range(0.5..0.9), side * LANE_FT + rng.gen_range(-0.3..0.3))
                } else {
                    // The gap to the other vehicle never shrinks.
                    let from = y0.abs().max(self.benign_lane_gap_ft);
                    (ahead * rng.gen_range(from..from + 8.0), side * LANE_FT)
                };
                let path = taus
                    .iter()
                    .zip(&shift)
                    .map(|(&t, &e)| {
                        let s = if collide { ease(t) } else { t };
                        (lerp(side * LANE_FT, x_end, t) - e, lerp(y0, y_end, s))
                    })
                    .collect();
                (Some(path), shift)
            }
            Template::BenignLaneChange => {
                let t0 = rng.gen_range(0.0..0.4);
                let t1 = rng.gen_range(t0 + 0.4..=1.0);
                let dir = sign(rng);
                (None, taus.iter().map(|&t| ego_shift(t, dir, t0, t1)).collect())
            }
        }
    }

    fn distractor(&self, frames: usize, shift: &[f64], rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
        let lane = *[-2.0, -1.0, 1.0, 2.0].choose(rng).expect("non-empty") * LANE_FT;
        let x = lane + rng.gen_range(-1.5..1.5);
        let y0 = rng.gen_range(-30.0..30.0);
        let v = rng.gen_range(-6.0..6.0);
        let dt = 1.0 / self.frame_rate;
        (0..frames).map(|f| (x - shift[f], y0 + v * f as f64 * dt)).collect()
    }

    fn pedestrian(&self, frames: usize, shift: &[f64], rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
        let x = sign(rng) * rng.gen_range(20.0..24.0);
        let y0 = rng.gen_range(-10.0..60.0);
        let v = sample(rng, self.ego_speed_fps);
        let dt = 1.0 / self.frame_rate;
        (0..frames).map(|f| (x - shift[f], y0 - v * f as f64 * dt)).collect()
    }

    fn speed_ok(&self, path: &[(f64, f64)]) -> bool {
        let limit = self.max_relative_speed_fps / self.frame_rate + 1e-9;
        path.windows(2)
            .all(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1) <= limit)
    }

    fn build_agents(&self, plan: &ClipPlan, rng: &mut ChaCha8Rng) -> Result<Vec<Agent>> {
        let safe = self.safe_gap();
        let near_ok = |p: &[(f64, f64)]| p.iter().all(|&(x, y)| x.hypot(y) >= safe);
        for _ in 0..MAX_ATTEMPTS {
            let (key, shift) = self.key_path(plan, rng);
            if let Some(k) = &key {
                let sound = if plan.label == 1 {
                    let (x, y) = *k.last().expect("frames");
                    x.hypot(y) <= self.end_radius() && near_ok(&k[..k.len() / 2])
                } else {
                    near_ok(k)
                };
                if !sound || !self.speed_ok(k) {
                    continue;
                }
            }
            let mut paths: Vec<Vec<(f64, f64)>> = key.into_iter().collect();
            let extra = rng.gen_range(self.n_other_vehicles[0]..=self.n_other_vehicles[1]);
            let extra = if plan.template == Template::BenignLaneChange { extra.max(1) } else { extra };
            let mut placed = 0;
            for _ in 0..MAX_ATTEMPTS {
                if placed == extra {
                    break;
                }
                let d = self.distractor(plan.frames, &shift, rng);
                if near_ok(&d) && self.speed_ok(&d) {
                    paths.push(d);
                    placed += 1;
                }
            }
            if placed < extra {
                continue;
            }
            let mut order: Vec<usize> = (0..paths.len()).collect();
            order.shuffle(rng);
            let mut agents: Vec<Agent> = order
                .iter()
                .enumerate()
                .map(|(k, &i)| Agent {
                    id: format!("v{k}"),
                    class: self.vehicle_classes.choose(rng).expect("validated").clone(),
                    path: paths[i].clone(),
                    vehicle: true,
                })
                .collect();
            let peds = rng.gen_range(self.n_pedestrians[0]..=self.n_pedestrians[1]);
            for k in 0..peds {
                agents.push(Agent {
                    id: format!("p{k}"),
                    class: "pedestrian".into(),
                    path: self.pedestrian(plan.frames, &shift, rng),
                    vehicle: false,
                });
            }
            return Ok(agents);
        }
        Err(Error::Generation(format!(
            "could not place a {:?} scenario with label {} in {} frames after {MAX_ATTEMPTS} attempts",
            plan.template, plan.label, plan.frames
        )))
    }

    fn generate_clip(&self, index: usize, label: u8) -> Result<(Clip, ClipStats)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64 + 1);
        let pool: Vec<Template> = self
            .templates
            .iter()
            .copied()
            .filter(|t| label == 0 || t.can_collide())
            .collect();
        let template = *pool.choose(&mut rng).expect("validated template set");
        let frames = rng.gen_range(self.frames_per_clip[0]..=self.frames_per_clip[1]);
        let plan = ClipPlan { label, template, frames };
        let agents = self.build_agents(&plan, &mut rng)?;
        let noise = Normal::new(0.0, self.noise_std_ft.max(f64::MIN_POSITIVE)).expect("finite std");
        let cap = 2.0 * self.noise_std_ft;
        let id = format!("{}{index:05}", self.id_prefix);
        let mut min_dist = f64::INFINITY;
        let mut out = Vec::with_capacity(frames);
        for f in 0..frames {
            let mut objects = Vec::with_capacity(agents.len());
            for a in &agents {
                let (mut x, mut y) = a.path[f];
                if self.noise_std_ft > 0.0 {
                    x += noise.sample(&mut rng).clamp(-cap, cap);
                    y += noise.sample(&mut rng).clamp(-cap, cap);
                }
                if a.vehicle {
                    min_dist = min_dist.min(x.hypot(y));
                }
                objects.push(ObjectAnnotation {
                    id: a.id.clone(),
                    class: a.class.clone(),
                    x,
                    y,
                });
            }
            out.push(FrameObjects {
                clip_id: id.clone(),
                frame_index: f as u64,
                objects,
            });
        }
        let sound = if label == 1 { min_dist <= CONTACT_FT } else { min_dist >= SAFE_FT };
        if !sound {
            return Err(Error::Generation(format!(
                "clip {id} violates its label: closest vehicle at {min_dist:.3} ft"
            )));
        }
        let stats = ClipStats {
            clip_id: id.clone(),
            label,
            template,
            frames,
            min_vehicle_distance_ft: min_dist,
        };
        Ok((Clip { id, label, frames: out }, stats))
    }
}

/// Labels in clip order: exactly `round(n · fraction)` collisions, placed
/// by a seeded shuffle.
fn plan_labels(cfg: &ScenarioConfig) -> Vec<u8> {
    let pos = cfg.collision_clips();
    let mut labels: Vec<u8> = (0..cfg.n_clips).map(|i| u8::from(i < pos)).collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    labels
}

/// Generates a labeled dataset. Each clip draws from its own stream of the
/// seeded generator, so the result does not depend on `jobs`.
pub fn generate_dataset(cfg: &ScenarioConfig, jobs: usize) -> Result<(Dataset, GenerationManifest)> {
    cfg.validate()?;
    let labels = plan_labels(cfg);
    let make = |(i, &l): (usize, &u8)| cfg.generate_clip(i, l);
    let results: Vec<(Clip, ClipStats)> = if jobs <= 1 {
        labels.iter().enumerate().map(make).collect::<Result<_>>()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?
            .install(|| labels.par_iter().enumerate().map(make).collect::<Result<_>>())?
    };
    let (clips, stats): (Vec<Clip>, Vec<ClipStats>) = results.into_iter().unzip();

    let pos = stats.iter().filter(|s| s.label == 1).count();
    let neg = stats.len() - pos;
    let mut template_counts = BTreeMap::new();
    for s in &stats {
        let name = serde_json::to_value(s.template)?.as_str().unwrap_or_default().to_string();
        *template_counts.entry(name).or_insert(0) += 1;
    }
    let fold = |label: u8, init: f64, f: fn(f64, f64) -> f64| {
        stats
            .iter()
            .filter(|s| s.label == label)
            .map(|s| s.min_vehicle_distance_ft)
            .fold(init, f)
    };
    let manifest = GenerationManifest {
        config: cfg.clone(),
        clips: stats.len(),
        collision_clips: pos,
        no_collision_clips: neg,
        class_ratio: if pos == 0 { f64::INFINITY } else { neg as f64 / pos as f64 },
        mean_clip_len: stats.iter().map(|s| s.frames as f64).sum::<f64>() / stats.len().max(1) as f64,
        template_counts,
        max_collision_min_distance_ft: fold(1, 0.0, f64::max),
        min_benign_distance_ft: fold(0, f64::INFINITY, f64::min),
        clip_stats: stats,
    };
    Ok((Dataset { clips }, manifest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{to_records, validate_dataset, write_jsonl};
    use crate::scene_graph::{extract_scene_graph, ExtractionConfig, Vocabulary};

    fn small(n: usize, fraction: f64, seed: u64) -> ScenarioConfig {
        ScenarioConfig { n_clips: n, collision_fraction: fraction, seed, ..ScenarioConfig::default() }
    }

    #[test]
    fn balanced_split_is_exact() {
        let (d, m) = generate_dataset(&small(306, 0.5, 7), 1).unwrap();
        assert_eq!(d.class_counts(), (153, 153));
        assert_eq!((m.collision_clips, m.no_collision_clips), (153, 153));
    }

    #[test]
    fn imbalanced_ratio_matches_request() {
        let (d, m) = generate_dataset(&small(1043, 1.0 / 8.91, 1), 1).unwrap();
        let (neg, pos) = d.class_counts();
        assert_eq!(pos, 117);
        assert!((neg as f64 / pos as f64 - 7.91).abs() < 0.01);
        assert!((m.class_ratio - 7.91).abs() < 0.01);
    }

    #[test]
    fn same_seed_gives_identical_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(30, 0.3, 5);
        let write = |name: &str, jobs: usize| {
            let (d, _) = generate_dataset(&cfg, jobs).unwrap();
            let p = dir.path().join(name);
            write_jsonl(&d, &p).unwrap();
            std::fs::read(p).unwrap()
        };
        let a = write("a.jsonl", 1);
        assert_eq!(a, write("b.jsonl", 1));
        assert_eq!(a, write("c.jsonl", 3));
        let (other, _) = generate_dataset(&small(30, 0.3, 6), 1).unwrap();
        assert_ne!(to_records(&other), to_records(&generate_dataset(&cfg, 1).unwrap().0));
    }

    #[test]
    fn labels_are_sound_and_frames_labelled_by_clip() {
        let (d, m) = generate_dataset(&small(200, 0.5, 3), 1).unwrap();
        assert!(m.max_collision_min_distance_ft <= 2.0);
        assert!(m.min_benign_distance_ft >= 4.0);
        for clip in &d.clips {
            let min = clip
                .frames
                .iter()
                .flat_map(|f| f.objects.iter())
                .filter(|o| o.class != "pedestrian")
                .map(|o| o.x.hypot(o.y))
                .fold(f64::INFINITY, f64::min);
            if clip.label == 1 {
                assert!(min <= 2.0, "{} min {min}", clip.id);
            } else {
                assert!(min >= 4.0, "{} min {min}", clip.id);
            }
            assert!((20..=60).contains(&clip.len()));
        }
        assert!(to_records(&d).iter().all(|r| r.label == d.clips.iter().find(|c| c.id == r.clip_id).unwrap().label));
    }

    #[test]
    fn every_clip_extracts_without_drops() {
        let (d, _) = generate_dataset(&small(60, 0.5, 4), 1).unwrap();
        let cfg = ExtractionConfig::default();
        for clip in &d.clips {
            for f in &clip.frames {
                let g = extract_scene_graph(f, &cfg).unwrap();
                let visible = f.objects.iter().filter(|o| o.x.hypot(o.y) <= 25.0).count();
                assert_eq!(g.node_count(), 4 + visible);
            }
        }
    }

    #[test]
    fn trajectories_respect_the_speed_bound() {
        let cfg = ScenarioConfig { noise_std_ft: 0.0, ..small(80, 0.5, 9) };
        let (d, _) = generate_dataset(&cfg, 1).unwrap();
        let step = cfg.max_relative_speed_fps / cfg.frame_rate + 1e-9;
        for clip in &d.clips {
            for w in clip.frames.windows(2) {
                for (a, b) in w[0].objects.iter().zip(&w[1].objects) {
                    assert_eq!(a.id, b.id);
                    if a.class != "pedestrian" {
                        assert!((b.x - a.x).hypot(b.y - a.y) <= step, "{} {}", clip.id, a.id);
                    }
                }
            }
        }
    }

    #[test]
    fn written_files_pass_validation() {
        let dir = tempfile::tempdir().unwrap();
        let (d, m) = generate_dataset(&small(40, 0.25, 8), 1).unwrap();
        let p = dir.path().join("gen.jsonl");
        write_jsonl(&d, &p).unwrap();
        let r = validate_dataset(&p, &Vocabulary::default()).unwrap();
        assert_eq!((r.clips, r.collision_clips), (40, 10));
        assert!((r.mean_clip_len - m.mean_clip_len).abs() < 1e-12);
    }

    #[test]
    fn all_templates_appear() {
        let (_, m) = generate_dataset(&small(120, 0.5, 2), 1).unwrap();
        assert_eq!(m.template_counts.len(), 4);
    }

    #[test]
    fn infeasible_speeds_are_diagnosed() {
        let cfg = ScenarioConfig { frames_per_clip: [2, 3], ..small(10, 0.5, 0) };
        let err = generate_dataset(&cfg, 1).unwrap_err();
        assert!(matches!(err, Error::Generation(ref m) if m.contains("ft/s")));
        let only_benign = ScenarioConfig { templates: vec![Template::BenignLaneChange], ..small(10, 0.5, 0) };
        assert!(matches!(generate_dataset(&only_benign, 1), Err(Error::Generation(_))));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(small(10, 1.5, 0).validate().is_err());
        assert!(small(10, 0.0, 0).validate().is_err());
        assert!(ScenarioConfig { frames_per_clip: [30, 20], ..ScenarioConfig::default() }.validate().is_err());
        assert!(ScenarioConfig { noise_std_ft: 2.0, ..ScenarioConfig::default() }.validate().is_err());
    }
}
