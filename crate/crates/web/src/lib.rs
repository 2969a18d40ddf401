//! Browser demo. Every export returns a `SIZE × SIZE` (or `HEATMAP × HEATMAP`)
//! RGBA buffer ready for `ImageData`.

use evpose::events::{stream_to_frames, EventFrame};
use evpose::metrics::{decode, DEFAULT_VISIBILITY_THRESHOLD};
use evpose::pose::Pose;
use evpose::synthgen::{simulate, JointMotion, MotionScript, SimConfig, SkeletonSpec, StaticEpisode};
use evpose::trainer::{augment_limb_rotation, labelled_bones, make_target, AugClip};
use evpose::events::{Polarity, PointEvent};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

pub const SIZE: usize = 64;
pub const STRIDE: usize = 4;
pub const HEATMAP: usize = SIZE / STRIDE;
pub const FRAMES: usize = 24;
const INTERVAL_US: u64 = 8333;
const COUNT_CAP: f32 = 4.0;
const L_ELBOW: usize = 3;

#[wasm_bindgen]
pub fn image_size() -> usize {
    SIZE
}

#[wasm_bindgen]
pub fn heatmap_size() -> usize {
    HEATMAP
}

#[wasm_bindgen]
pub fn frame_count() -> usize {
    FRAMES
}

struct Canvas {
    width: usize,
    rgba: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        let mut rgba = vec![0; width * height * 4];
        rgba.chunks_exact_mut(4).for_each(|p| p[3] = 255);
        Canvas { width, rgba }
    }

    fn height(&self) -> usize {
        self.rgba.len() / 4 / self.width
    }

    fn put(&mut self, x: f64, y: f64, c: [u8; 3]) {
        let (x, y) = (x.floor(), y.floor());
        if x >= 0.0 && y >= 0.0 && (x as usize) < self.width && (y as usize) < self.height() {
            let i = 4 * (y as usize * self.width + x as usize);
            self.rgba[i..i + 3].copy_from_slice(&c);
        }
    }

    fn frame(frame: &EventFrame) -> Self {
        let mut c = Canvas::new(frame.width, frame.height);
        for y in 0..frame.height {
            for x in 0..frame.width {
                let neg = (frame.at(0, y, x) / COUNT_CAP).min(1.0);
                let pos = (frame.at(1, y, x) / COUNT_CAP).min(1.0);
                let (m, g) = ((neg * 255.0) as u8, (pos * 255.0) as u8);
                let i = 4 * (y * frame.width + x);
                c.rgba[i..i + 3].copy_from_slice(&[m, g, m]);
            }
        }
        c
    }

    fn skeleton(&mut self, pose: &Pose, bones: &[(usize, usize)], c: [u8; 3]) {
        for &(a, b) in bones {
            if !(pose.visible[a] && pose.visible[b]) {
                continue;
            }
            let (p, q) = (pose.joints[a], pose.joints[b]);
            let n = (q[0] - p[0]).abs().max((q[1] - p[1]).abs()).ceil().max(1.0) as usize;
            for i in 0..=n {
                let s = i as f64 / n as f64;
                self.put(p[0] + s * (q[0] - p[0]), p[1] + s * (q[1] - p[1]), c);
            }
        }
    }
}

fn waving_script(spec: &SkeletonSpec, seed: u32, speed: f64, freeze_arm: bool) -> MotionScript {
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
    let mut script = MotionScript::still(spec.len(), [32.0, 28.0]);
    for (j, m) in script.joints.iter_mut().enumerate() {
        if spec.parent[j].is_some() || j == 0 {
            *m = JointMotion {
                offset: 0.0,
                amplitude: rng.random_range(0.3..0.7),
                frequency: speed * rng.random_range(1.0..2.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            };
        }
    }
    if freeze_arm {
        script.static_episodes.push(StaticEpisode {
            joint: L_ELBOW,
            t_start: 0,
            t_end: FRAMES as u64 * INTERVAL_US,
        });
    }
    script
}

/// Event frame `frame` of a synthetic human with the label skeleton drawn in
/// blue. With `freeze_arm` the left forearm holds still and goes dark.
#[wasm_bindgen]
pub fn event_frame(seed: u32, speed: f64, freeze_arm: bool, frame: usize) -> Result<Vec<u8>, JsError> {
    let spec = SkeletonSpec::human();
    let cfg = SimConfig {
        width: SIZE as u16,
        height: SIZE as u16,
        duration_us: FRAMES as u64 * INTERVAL_US,
        interval_us: INTERVAL_US,
        ..Default::default()
    };
    let script = waving_script(&spec, seed, speed.clamp(0.1, 4.0), freeze_arm);
    let sample = simulate(&spec, &script, &cfg, "demo", u64::from(seed))?;
    let frames = stream_to_frames(&sample.stream, INTERVAL_US, 0, Some(cfg.duration_us))?;
    let i = frame.min(FRAMES - 1);
    let mut c = Canvas::frame(&frames.frames[i]);
    c.skeleton(&sample.poses[i], &labelled_bones(&spec), [60, 140, 255]);
    Ok(c.rgba)
}

/// Training target for one joint at `(x, y)` in input pixels, as a
/// `HEATMAP × HEATMAP` grayscale image.
#[wasm_bindgen]
pub fn target_heatmap(x: f64, y: f64, sigma: f64) -> Vec<u8> {
    let pose = Pose::from_joints(vec![[x, y]]);
    let t = make_target::<f64>(&pose, HEATMAP, STRIDE, sigma.max(0.1));
    let mut c = Canvas::new(HEATMAP, HEATMAP);
    for (i, v) in t.data().iter().enumerate() {
        let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        c.rgba[4 * i..4 * i + 3].copy_from_slice(&[g, g, g]);
    }
    c.rgba
}

/// Joint position recovered from [`target_heatmap`], or an empty array when
/// the peak falls below the visibility threshold.
#[wasm_bindgen]
pub fn decoded_joint(x: f64, y: f64, sigma: f64) -> Result<Vec<f64>, JsError> {
    let pose = Pose::from_joints(vec![[x, y]]);
    let t = make_target::<f64>(&pose, HEATMAP, STRIDE, sigma.max(0.1));
    let back = decode(&t, STRIDE, DEFAULT_VISIBILITY_THRESHOLD)?;
    Ok(if back.visible[0] { back.joints[0].to_vec() } else { Vec::new() })
}

/// A resting figure drawn in events, after rotating the limb below pivot
/// `pivot` (0 left elbow, 1 right elbow, 2 left knee, 3 right knee) by
/// `theta` degrees. Rotated labels are drawn in blue.
#[wasm_bindgen]
pub fn limb_rotation(pivot: usize, theta: f64) -> Result<Vec<u8>, JsError> {
    let spec = SkeletonSpec::human();
    let joint = spec.pivots[pivot.min(spec.pivots.len() - 1)];
    let pose = evpose::synthgen::forward_kinematics(&spec, &MotionScript::still(spec.len(), [32.0, 26.0]), 0.0)?;
    let bones = labelled_bones(&spec);
    let mut events = Vec::new();
    for (n, &(a, b)) in bones.iter().enumerate() {
        let (p, q) = (pose.joints[a], pose.joints[b]);
        let len = (q[0] - p[0]).hypot(q[1] - p[1]);
        let steps = (2.0 * len).ceil() as usize;
        for i in 0..=steps {
            let s = i as f64 / steps as f64;
            events.push(PointEvent {
                x: p[0] + s * (q[0] - p[0]),
                y: p[1] + s * (q[1] - p[1]),
                t: 0,
                polarity: if (n + i) % 2 == 0 { Polarity::Positive } else { Polarity::Negative },
            });
        }
    }
    let clip = AugClip {
        events,
        poses: vec![pose],
        t0: 0,
        interval: INTERVAL_US,
        width: SIZE,
        height: SIZE,
    };
    let turned = augment_limb_rotation(&clip, &spec, joint, theta)?;
    let frames = turned.rasterize(1)?;
    let mut c = Canvas::frame(&frames[0].scaled(COUNT_CAP));
    c.skeleton(&turned.poses[0], &bones, [60, 140, 255]);
    Ok(c.rgba)
}

trait Scaled {
    fn scaled(&self, k: f32) -> EventFrame;
}

impl Scaled for EventFrame {
    fn scaled(&self, k: f32) -> EventFrame {
        EventFrame {
            grid: self.grid.iter().map(|v| v * k).collect(),
            ..self.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(img: &[u8], w: usize, x: usize, y: usize) -> [u8; 3] {
        let i = 4 * (y * w + x);
        [img[i], img[i + 1], img[i + 2]]
    }

    #[test]
    fn buffers_have_the_advertised_size() {
        assert_eq!(event_frame(1, 1.0, false, 3).unwrap().len(), SIZE * SIZE * 4);
        assert_eq!(target_heatmap(10.0, 20.0, 2.0).len(), HEATMAP * HEATMAP * 4);
        assert_eq!(limb_rotation(2, 45.0).unwrap().len(), SIZE * SIZE * 4);
    }

    #[test]
    fn event_frames_are_reproducible() {
        assert_eq!(event_frame(7, 1.5, true, 10).unwrap(), event_frame(7, 1.5, true, 10).unwrap());
        assert_ne!(event_frame(7, 1.5, true, 10).unwrap(), event_frame(8, 1.5, true, 10).unwrap());
    }

    #[test]
    fn heatmap_peak_decodes_near_the_joint() {
        let d = decoded_joint(21.3, 40.9, 2.0).unwrap();
        assert!((d[0] - 21.3).abs() <= 2.0 && (d[1] - 40.9).abs() <= 2.0, "{d:?}");
        let img = target_heatmap(22.0, 42.0, 2.0);
        assert_eq!(pixel(&img, HEATMAP, 5, 10), [255, 255, 255]);
    }

    #[test]
    fn zero_rotation_changes_nothing() {
        let a = limb_rotation(2, 0.0).unwrap();
        assert_eq!(a, limb_rotation(2, 360.0).unwrap());
        assert_ne!(a, limb_rotation(2, 60.0).unwrap());
    }
}
