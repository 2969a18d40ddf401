//! Synthetic event streams from an animated stick figure.
//!
//! Each bone emits events in proportion to how fast it sweeps across the
//! sensor, so a limb that stops moving goes silent while its joints keep
//! their labels. Angles follow sinusoids driven by a per-joint clock that
//! pauses during static episodes, which keeps every trajectory continuous.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{
    encode_evt1, snap_points, EventStream, Polarity, PointEvent, DEFAULT_INTERVAL_US,
};
use crate::pose::{read_poses, write_poses, Pose};

/// Emission is integrated over `interval / SUBSTEPS_PER_INTERVAL` slices.
pub const SUBSTEPS_PER_INTERVAL: u64 = 32;

/// A joint tree hanging off a hidden root (the torso center).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonSpec {
    pub names: Vec<String>,
    /// Parent joint, or `None` for bones attached to the root.
    pub parent: Vec<Option<usize>>,
    pub bone_length: Vec<f64>,
    /// Absolute bone direction in the rest pose, radians from `+x` toward
    /// `+y` (image coordinates, `y` down).
    pub rest_angle: Vec<f64>,
    /// Half-width of the emission band around each bone, pixels.
    pub thickness: f64,
    /// Joints that may pivot a limb rotation during augmentation.
    pub pivots: Vec<usize>,
    /// Joints whose subtree may freeze during a static episode.
    pub episode_roots: Vec<usize>,
}

fn deg(d: f64) -> f64 {
    d.to_radians()
}

impl SkeletonSpec {
    /// Thirteen joints: head, shoulders, elbows, wrists, hips, knees, ankles.
    pub fn human() -> Self {
        let root_bone = |x: f64, y: f64| (x.hypot(y), y.atan2(x));
        let (ls, lsa) = root_bone(-7.0, -10.0);
        let (rs, rsa) = root_bone(7.0, -10.0);
        let (lh, lha) = root_bone(-5.0, 10.0);
        let (rh, rha) = root_bone(5.0, 10.0);
        #[rustfmt::skip]
        let table: [(&str, Option<usize>, f64, f64); 13] = [
            ("head", None, 16.0, deg(-90.0)),
            ("l_shoulder", None, ls, lsa),
            ("r_shoulder", None, rs, rsa),
            ("l_elbow", Some(1), 10.0, deg(100.0)),
            ("r_elbow", Some(2), 10.0, deg(80.0)),
            ("l_wrist", Some(3), 9.0, deg(95.0)),
            ("r_wrist", Some(4), 9.0, deg(85.0)),
            ("l_hip", None, lh, lha),
            ("r_hip", None, rh, rha),
            ("l_knee", Some(7), 12.0, deg(95.0)),
            ("r_knee", Some(8), 12.0, deg(85.0)),
            ("l_ankle", Some(9), 12.0, deg(90.0)),
            ("r_ankle", Some(10), 12.0, deg(90.0)),
        ];
        SkeletonSpec {
            names: table.iter().map(|r| r.0.to_owned()).collect(),
            parent: table.iter().map(|r| r.1).collect(),
            bone_length: table.iter().map(|r| r.2).collect(),
            rest_angle: table.iter().map(|r| r.3).collect(),
            thickness: 1.5,
            pivots: vec![3, 4, 9, 10],
            episode_roots: vec![0, 3, 4, 9, 10],
        }
    }

    /// Five limbs radiating from the root.
    pub fn star() -> Self {
        let names = ["head", "l_hand", "r_hand", "l_foot", "r_foot"];
        let angles = [-90.0, -160.0, -20.0, 115.0, 65.0];
        let lengths = [14.0, 16.0, 16.0, 18.0, 18.0];
        SkeletonSpec {
            names: names.iter().map(|s| (*s).to_owned()).collect(),
            parent: vec![None; 5],
            bone_length: lengths.to_vec(),
            rest_angle: angles.iter().map(|&a| deg(a)).collect(),
            thickness: 1.5,
            pivots: vec![],
            episode_roots: (0..5).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.len();
        if self.names.len() != k || self.bone_length.len() != k || self.rest_angle.len() != k {
            return Err(Error::arg("skeleton tables differ in length"));
        }
        if self.bone_length.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::arg("bone lengths must be positive"));
        }
        if !(self.thickness >= 0.0) {
            return Err(Error::arg("thickness must be non-negative"));
        }
        // parents must precede children, which also rules out cycles
        for (j, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= j {
                    return Err(Error::arg(format!(
                        "joint {j} has parent {p}; parents must come first"
                    )));
                }
            }
        }
        if self.pivots.iter().chain(&self.episode_roots).any(|&j| j >= k) {
            return Err(Error::arg("pivot or episode joint out of range"));
        }
        Ok(())
    }

    /// `j` and every joint below it.
    pub fn subtree(&self, j: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.is_descendant(c, j)).collect()
    }

    /// Whether `a` is `b` or lies below it.
    pub fn is_descendant(&self, mut a: usize, b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.parent[a] {
                Some(p) => a = p,
                None => return false,
            }
        }
    }

    /// Joints whose bone hangs from `j`.
    pub fn children(&self, j: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c] == Some(j)).collect()
    }
}

/// `offset + amplitude · sin(2π · frequency · τ + phase)`, radians, with `τ`
/// in seconds of the joint's own clock.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointMotion {
    pub offset: f64,
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// A joint subtree frozen over `[t_start, t_end)` microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StaticEpisode {
    pub joint: usize,
    pub t_start: u64,
    pub t_end: u64,
}

/// Root trajectory `origin + amplitude · sin(2π · frequency · t + phase)`
/// per axis.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Translation {
    pub origin: [f64; 2],
    pub amplitude: [f64; 2],
    pub frequency: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MotionScript {
    pub joints: Vec<JointMotion>,
    pub static_episodes: Vec<StaticEpisode>,
    pub translation: Translation,
}

impl MotionScript {
    /// Every joint at rest, root at `origin`.
    pub fn still(k: usize, origin: [f64; 2]) -> Self {
        MotionScript {
            joints: vec![JointMotion::default(); k],
            static_episodes: Vec::new(),
            translation: Translation {
                origin,
                ..Default::default()
            },
        }
    }

    /// Same script with every angular and translational frequency scaled.
    pub fn with_frequency_scale(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for j in &mut out.joints {
            j.frequency *= factor;
        }
        out.translation.frequency *= factor;
        out
    }
}

/// Joint positions and velocities (pixels, pixels per second).
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    pub root: [f64; 2],
    pub root_velocity: [f64; 2],
    pub position: Vec<[f64; 2]>,
    pub velocity: Vec<[f64; 2]>,
}

impl Kinematics {
    /// Start of the bone ending at `j`.
    pub fn bone_start(&self, spec: &SkeletonSpec, j: usize) -> ([f64; 2], [f64; 2]) {
        match spec.parent[j] {
            Some(p) => (self.position[p], self.velocity[p]),
            None => (self.root, self.root_velocity),
        }
    }
}

/// Merged frozen intervals for each joint.
fn frozen_intervals(spec: &SkeletonSpec, script: &MotionScript) -> Vec<Vec<(u64, u64)>> {
    (0..spec.len())
        .map(|j| {
            let mut iv: Vec<(u64, u64)> = script
                .static_episodes
                .iter()
                .filter(|e| e.t_end > e.t_start && spec.is_descendant(j, e.joint))
                .map(|e| (e.t_start, e.t_end))
                .collect();
            iv.sort_unstable();
            let mut merged: Vec<(u64, u64)> = Vec::with_capacity(iv.len());
            for (s, e) in iv {
                match merged.last_mut() {
                    Some(last) if s <= last.1 => last.1 = last.1.max(e),
                    _ => merged.push((s, e)),
                }
            }
            merged
        })
        .collect()
}

/// A joint's own clock in seconds and its rate (0 while frozen, else 1).
fn joint_clock(frozen: &[(u64, u64)], t: f64) -> (f64, f64) {
    let mut paused = 0.0;
    let mut rate = 1.0;
    for &(s, e) in frozen {
        let (s, e) = (s as f64, e as f64);
        if t >= e {
            paused += e - s;
        } else if t >= s {
            paused += t - s;
            rate = 0.0;
        }
    }
    ((t - paused) * 1e-6, rate)
}

struct Animator<'a> {
    spec: &'a SkeletonSpec,
    script: &'a MotionScript,
    frozen: Vec<Vec<(u64, u64)>>,
}

impl<'a> Animator<'a> {
    fn new(spec: &'a SkeletonSpec, script: &'a MotionScript) -> Result<Self> {
        spec.validate()?;
        if script.joints.len() != spec.len() {
            return Err(Error::arg(format!(
                "motion script drives {} joints, skeleton has {}",
                script.joints.len(),
                spec.len()
            )));
        }
        Ok(Animator {
            spec,
            script,
            frozen: frozen_intervals(spec, script),
        })
    }

    /// Positions and velocities at `t` microseconds.
    fn at(&self, t: f64) -> Kinematics {
        let k = self.spec.len();
        let tr = &self.script.translation;
        let w = 2.0 * PI * tr.frequency;
        let arg = w * t * 1e-6 + tr.phase;
        let root = [
            tr.origin[0] + tr.amplitude[0] * arg.sin(),
            tr.origin[1] + tr.amplitude[1] * arg.sin(),
        ];
        let root_velocity = [tr.amplitude[0] * w * arg.cos(), tr.amplitude[1] * w * arg.cos()];
        let mut angle = vec![0.0; k];
        let mut rate = vec![0.0; k];
        let mut position = vec![[0.0; 2]; k];
        let mut velocity = vec![[0.0; 2]; k];
        for j in 0..k {
            let m = &self.script.joints[j];
            let (tau, clock_rate) = joint_clock(&self.frozen[j], t);
            let wj = 2.0 * PI * m.frequency;
            let theta = m.offset + m.amplitude * (wj * tau + m.phase).sin();
            let dtheta = m.amplitude * wj * (wj * tau + m.phase).cos() * clock_rate;
            let (base_angle, base_rate, start, start_v) = match self.spec.parent[j] {
                Some(p) => (angle[p] - self.spec.rest_angle[p], rate[p], position[p], velocity[p]),
                None => (0.0, 0.0, root, root_velocity),
            };
            angle[j] = base_angle + self.spec.rest_angle[j] + theta;
            rate[j] = base_rate + dtheta;
            let l = self.spec.bone_length[j];
            let (s, c) = angle[j].sin_cos();
            position[j] = [start[0] + l * c, start[1] + l * s];
            velocity[j] = [start_v[0] - l * s * rate[j], start_v[1] + l * c * rate[j]];
        }
        Kinematics {
            root,
            root_velocity,
            position,
            velocity,
        }
    }
}

/// Joint positions at `t` microseconds. Bone `j` points along its rest
/// direction rotated by the summed angles of `j` and its ancestors.
pub fn forward_kinematics(spec: &SkeletonSpec, script: &MotionScript, t: f64) -> Result<Pose> {
    let kin = Animator::new(spec, script)?.at(t);
    Ok(Pose::from_joints(kin.position))
}

/// Positions and velocities at `t` microseconds.
pub fn kinematics(spec: &SkeletonSpec, script: &MotionScript, t: f64) -> Result<Kinematics> {
    Ok(Animator::new(spec, script)?.at(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub width: u16,
    pub height: u16,
    pub duration_us: u64,
    pub interval_us: u64,
    /// Expected events per pixel of bone length per pixel swept.
    pub rate_per_px_speed: f64,
    /// Background events per second over the whole sensor.
    pub noise_rate: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            width: 80,
            height: 80,
            duration_us: 2_000_000,
            interval_us: DEFAULT_INTERVAL_US,
            rate_per_px_speed: 4.0,
            noise_rate: 200.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthSample {
    pub stream: EventStream,
    /// Ground truth at the midpoint of each frame interval from `t = 0`.
    pub poses: Vec<Pose>,
    pub action: String,
}

fn poisson(mean: f64, rng: &mut ChaCha8Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

fn norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn lerp(a: [f64; 2], b: [f64; 2], s: f64) -> [f64; 2] {
    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
}

/// `∫₀¹ |v(s)| ds` for the linear velocity profile of a bone, by the
/// midpoint rule with one sample per pixel of length.
fn mean_speed(v0: [f64; 2], v1: [f64; 2], length: f64) -> f64 {
    let n = length.ceil().max(1.0) as usize;
    (0..n)
        .map(|i| norm(lerp(v0, v1, (i as f64 + 0.5) / n as f64)))
        .sum::<f64>()
        / n as f64
}

/// Renders `script` into an event stream plus per-frame labels.
pub fn simulate(
    spec: &SkeletonSpec,
    script: &MotionScript,
    cfg: &SimConfig,
    action: &str,
    seed: u64,
) -> Result<SynthSample> {
    if !(cfg.rate_per_px_speed >= 0.0) || !(cfg.noise_rate >= 0.0) {
        return Err(Error::arg("emission rates must be non-negative"));
    }
    if cfg.interval_us == 0 || cfg.width == 0 || cfg.height == 0 {
        return Err(Error::arg("interval and sensor size must be positive"));
    }
    let anim = Animator::new(spec, script)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dt = cfg.interval_us as f64 / SUBSTEPS_PER_INTERVAL as f64;
    let steps = (cfg.duration_us as f64 / dt).ceil() as u64;
    let mut points: Vec<PointEvent> = Vec::new();

    for step in 0..steps {
        let t0 = step as f64 * dt;
        let t1 = (t0 + dt).min(cfg.duration_us as f64);
        let span = t1 - t0;
        if span <= 0.0 {
            break;
        }
        let mid = anim.at(0.5 * (t0 + t1));
        for j in 0..spec.len() {
            let (_, v0) = mid.bone_start(spec, j);
            let v1 = mid.velocity[j];
            let l = spec.bone_length[j];
            let mean = cfg.rate_per_px_speed * l * mean_speed(v0, v1, l) * span * 1e-6;
            let vmax = norm(v0).max(norm(v1));
            let n = poisson(mean, &mut rng);
            let mut emitted = 0;
            while emitted < n {
                // position along the bone, density ∝ local speed
                let s: f64 = rng.random();
                if rng.random::<f64>() * vmax > norm(lerp(v0, v1, s)) {
                    continue;
                }
                emitted += 1;
                let t = t0 + rng.random::<f64>() * span;
                let kin = anim.at(t);
                let (p0, w0) = kin.bone_start(spec, j);
                let (p1, w1) = (kin.position[j], kin.velocity[j]);
                let v = lerp(w0, w1, s);
                if v == [0.0, 0.0] {
                    continue;
                }
                let dir = [p1[0] - p0[0], p1[1] - p0[1]];
                let len = norm(dir);
                let normal = [-dir[1] / len, dir[0] / len];
                let d = rng.random_range(-1.0..=1.0) * spec.thickness;
                let p = lerp(p0, p1, s);
                let lead = (v[0] * normal[0] + v[1] * normal[1]) * d;
                let polarity = if lead > 0.0 || (lead == 0.0 && rng.random_bool(0.5)) {
                    Polarity::Positive
                } else {
                    Polarity::Negative
                };
                points.push(PointEvent {
                    x: p[0] + d * normal[0],
                    y: p[1] + d * normal[1],
                    t: t as u64,
                    polarity,
                });
            }
        }
        for _ in 0..poisson(cfg.noise_rate * span * 1e-6, &mut rng) {
            let polarity = if rng.random_bool(0.5) {
                Polarity::Positive
            } else {
                Polarity::Negative
            };
            points.push(PointEvent {
                x: rng.random_range(0.0..f64::from(cfg.width)),
                y: rng.random_range(0.0..f64::from(cfg.height)),
                t: (t0 + rng.random::<f64>() * span) as u64,
                polarity,
            });
        }
    }
    points.sort_by_key(|p| p.t);
    let events = snap_points(&points, cfg.width, cfg.height);
    let stream = EventStream::new(cfg.width, cfg.height, events)?;

    let frames = cfg.duration_us / cfg.interval_us;
    let poses = (0..frames)
        .map(|i| {
            let t = (i as f64 + 0.5) * cfg.interval_us as f64;
            Pose::from_joints(anim.at(t).position)
        })
        .collect();
    Ok(SynthSample {
        stream,
        poses,
        action: action.to_owned(),
    })
}

/// Speed classes with their base angular frequencies in Hz.
pub const ACTIONS: [(&str, f64); 3] = [("slow", 0.5), ("medium", 1.0), ("fast", 2.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Figure {
    Human,
    Star,
}

impl Figure {
    pub fn skeleton(self) -> SkeletonSpec {
        match self {
            Figure::Human => SkeletonSpec::human(),
            Figure::Star => SkeletonSpec::star(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub sequences: usize,
    pub seed: u64,
    /// Relative weights of the slow, medium and fast classes.
    pub speed_mix: [f64; 3],
    /// Minimum share of sequences with a long static episode.
    pub static_fraction: f64,
    pub figure: Figure,
    pub sim: SimConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            sequences: 8,
            seed: 0,
            speed_mix: [1.0, 1.0, 1.0],
            static_fraction: 0.5,
            figure: Figure::Human,
            sim: SimConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sequences == 0 {
            return Err(Error::arg("dataset needs at least one sequence"));
        }
        if !(0.0..=1.0).contains(&self.static_fraction) {
            return Err(Error::arg(format!(
                "static fraction {} outside [0, 1]",
                self.static_fraction
            )));
        }
        if self.speed_mix.iter().any(|&w| !(w >= 0.0)) || self.speed_mix.iter().sum::<f64>() <= 0.0 {
            return Err(Error::arg("speed mix weights must be non-negative with a positive sum"));
        }
        if self.sim.duration_us < self.sim.interval_us {
            return Err(Error::arg("duration shorter than one frame interval"));
        }
        Ok(())
    }
}

/// One line of `manifest.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: String,
    pub action: String,
    /// Base angular frequency in Hz.
    pub speed: f64,
    pub seed: u64,
    #[serde(default)]
    pub static_episodes: usize,
    #[serde(default)]
    pub events: usize,
    #[serde(default)]
    pub frames: usize,
    #[serde(default = "default_figure")]
    pub figure: Figure,
}

fn default_figure() -> Figure {
    Figure::Human
}

impl ManifestEntry {
    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join(format!("seq_{}", self.id))
    }
}

fn random_script(
    spec: &SkeletonSpec,
    base_freq: f64,
    with_episode: bool,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> MotionScript {
    let mut joints = Vec::with_capacity(spec.len());
    for j in 0..spec.len() {
        let moving = spec.parent[j].is_some() || spec.episode_roots.contains(&j);
        let amplitude = if !moving {
            0.0
        } else if spec.parent[j].is_none() && spec.len() > 5 {
            deg(rng.random_range(8.0..15.0))
        } else {
            deg(rng.random_range(25.0..50.0))
        };
        joints.push(JointMotion {
            offset: deg(rng.random_range(-10.0..10.0)) * f64::from(u8::from(moving)),
            amplitude,
            frequency: base_freq * rng.random_range(0.8..1.25),
            phase: rng.random_range(0.0..2.0 * PI),
        });
    }
    let mut static_episodes = Vec::new();
    if with_episode && !spec.episode_roots.is_empty() {
        let d = cfg.duration_us as f64;
        let count = rng.random_range(1..=2usize);
        let mut roots = spec.episode_roots.clone();
        roots.shuffle(rng);
        for &joint in roots.iter().take(count) {
            let len = d * rng.random_range(0.3..0.5);
            let start = rng.random_range(0.0..(d - len));
            static_episodes.push(StaticEpisode {
                joint,
                t_start: start as u64,
                t_end: (start + len) as u64,
            });
        }
    }
    let jitter = 4.0;
    let origin = [
        f64::from(cfg.width) / 2.0 + rng.random_range(-jitter..jitter),
        f64::from(cfg.height) / 2.0 + rng.random_range(-jitter..jitter),
    ];
    MotionScript {
        joints,
        static_episodes,
        translation: Translation {
            origin,
            ..Default::default()
        },
    }
}

/// Counts written by [`make_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSummary {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetSummary {
    pub fn total_events(&self) -> usize {
        self.entries.iter().map(|e| e.events).sum()
    }
}

/// Generates a dataset under `root`: `manifest.jsonl` plus one
/// `seq_<id>/{events.evt1, poses.jsonl}` per sequence.
///
/// Refuses to touch an existing non-empty `root` unless `overwrite`.
pub fn make_dataset(root: &Path, cfg: &DatasetConfig, overwrite: bool) -> Result<DatasetSummary> {
    cfg.validate()?;
    if root.exists() {
        let occupied = fs::read_dir(root)
            .map_err(|e| Error::io(root, e))?
            .next()
            .is_some();
        if occupied && !overwrite {
            return Err(Error::io(
                root,
                io::Error::new(io::ErrorKind::AlreadyExists, "output directory is not empty"),
            ));
        }
        if occupied {
            fs::remove_dir_all(root).map_err(|e| Error::io(root, e))?;
        }
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;

    let n = cfg.sequences;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut split = vec![""; n];
    for (pos, &i) in order.iter().enumerate() {
        split[i] = if pos % 2 == 0 { "train" } else { "test" };
    }
    let mut static_order: Vec<usize> = (0..n).collect();
    static_order.shuffle(&mut rng);
    let n_static = (cfg.static_fraction * n as f64).ceil() as usize;
    let mut has_episode = vec![false; n];
    for &i in &static_order[..n_static] {
        has_episode[i] = true;
    }
    let total: f64 = cfg.speed_mix.iter().sum();
    let classes: Vec<usize> = (0..n)
        .map(|_| {
            let mut u = rng.random::<f64>() * total;
            for (c, &w) in cfg.speed_mix.iter().enumerate() {
                if u < w {
                    return c;
                }
                u -= w;
            }
            cfg.speed_mix.iter().rposition(|&w| w > 0.0).unwrap_or(0)
        })
        .collect();
    let width = n.saturating_sub(1).to_string().len().max(4);
    let spec = cfg.figure.skeleton();

    let entries: Vec<ManifestEntry> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<ManifestEntry> {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64 + 1);
            let (action, base) = ACTIONS[classes[i]];
            let script = random_script(&spec, base, has_episode[i], &cfg.sim, &mut rng);
            let seq_seed: u64 = rng.random();
            let sample = simulate(&spec, &script, &cfg.sim, action, seq_seed)?;
            let entry = ManifestEntry {
                id: format!("{i:0width$}"),
                split: split[i].to_owned(),
                action: action.to_owned(),
                speed: base,
                seed: seq_seed,
                static_episodes: script.static_episodes.len(),
                events: sample.stream.len(),
                frames: sample.poses.len(),
                figure: cfg.figure,
            };
            let dir = entry.dir(root);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            let ev = dir.join("events.evt1");
            fs::write(&ev, encode_evt1(&sample.stream)).map_err(|e| Error::io(&ev, e))?;
            write_poses(&sample.poses, dir.join("poses.jsonl"))?;
            Ok(entry)
        })
        .collect::<Result<_>>()?;

    let path = root.join("manifest.jsonl");
    let mut text = String::new();
    for e in &entries {
        text.push_str(&serde_json::to_string(e).expect("manifest entry serialises"));
        text.push('\n');
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(DatasetSummary { entries })
}

pub fn read_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    let path = root.join("manifest.jsonl");
    let file = fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(&line)
            .map_err(|e| Error::format_at_line(i + 1, format!("bad manifest entry: {e}")))?;
        out.push(entry);
    }
    Ok(out)
}

/// Event stream and labels of one manifest entry.
pub fn load_sequence(root: &Path, entry: &ManifestEntry) -> Result<(EventStream, Vec<Pose>)> {
    let dir = entry.dir(root);
    let stream = crate::events::read_events(dir.join("events.evt1"))?;
    let poses = read_poses(dir.join("poses.jsonl"))?;
    Ok((stream, poses))
}
