use crate::events::{EventFrame, PointEvent};
use crate::events::{accumulate_frame, normalize_frame, Event};
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::synthgen::SkeletonSpec;

/// A clip in continuous crop coordinates: events plus one pose per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AugClip {
    pub events: Vec<PointEvent>,
    pub poses: Vec<Pose>,
    pub t0: u64,
    pub interval: u64,
    pub width: usize,
    pub height: usize,
}

impl AugClip {
    /// Frame that `t` falls into, if any.
    pub fn frame_of(&self, t: u64) -> Option<usize> {
        let i = (t.checked_sub(self.t0)? / self.interval) as usize;
        (i < self.poses.len()).then_some(i)
    }

    fn inside(&self, p: &PointEvent) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }

    /// Normalized two-channel frames, one per pose.
    pub fn rasterize(&self, count_cap: u32) -> Result<Vec<EventFrame>> {
        let n = self.poses.len();
        let mut buckets: Vec<Vec<Event>> = vec![Vec::new(); n];
        let (w, h) = (self.width as u16, self.height as u16);
        for p in &self.events {
            if let (Some(i), Some(e)) = (self.frame_of(p.t), p.snap(w, h)) {
                buckets[i].push(e);
            }
        }
        buckets
            .iter()
            .enumerate()
            .map(|(i, ev)| {
                let t = self.t0 + i as u64 * self.interval;
                let f = accumulate_frame(ev, self.width, self.height, t, t + self.interval)?;
                normalize_frame(&f, count_cap)
            })
            .collect()
    }
}

/// Rotates `p` about `center` by `theta` degrees:
/// `(du cos θ - dv sin θ, du sin θ + dv cos θ)`.
/// Quarter turns use exact sines and cosines.
pub fn rotate_point(p: [f64; 2], center: [f64; 2], theta_deg: f64) -> [f64; 2] {
    let (s, c) = match theta_deg.rem_euclid(360.0) {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        270.0 => (-1.0, 0.0),
        _ => theta_deg.to_radians().sin_cos(),
    };
    let (du, dv) = (p[0] - center[0], p[1] - center[1]);
    [center[0] + du * c - dv * s, center[1] + du * s + dv * c]
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - s * d[0]).hypot(p[1] - a[1] - s * d[1])
}

/// Parent-child joint pairs, the bones that events are assigned to.
pub fn labelled_bones(spec: &SkeletonSpec) -> Vec<(usize, usize)> {
    spec.parent
        .iter()
        .enumerate()
        .filter_map(|(j, p)| p.map(|p| (p, j)))
        .collect()
}

/// Rotates the limb below `pivot` by `theta` degrees about the pivot joint,
/// frame by frame. An event moves with the limb when its nearest bone
/// (among bones with both joints visible) hangs below the pivot. Events
/// that leave the frame are dropped. An invisible pivot leaves the clip
/// unchanged.
pub fn augment_limb_rotation(
    clip: &AugClip,
    spec: &SkeletonSpec,
    pivot: usize,
    theta_deg: f64,
) -> Result<AugClip> {
    if pivot >= spec.len() {
        return Err(Error::arg(format!("pivot joint {pivot} out of range")));
    }
    if let Some(p) = clip.poses.iter().find(|p| p.len() != spec.len()) {
        return Err(Error::arg(format!(
            "pose has {} joints, skeleton has {}",
            p.len(),
            spec.len()
        )));
    }
    let distal: Vec<usize> = spec.subtree(pivot).into_iter().filter(|&j| j != pivot).collect();
    let bones = labelled_bones(spec);
    let mut out = clip.clone();
    for (pose, new_pose) in clip.poses.iter().zip(&mut out.poses) {
        if !pose.visible[pivot] {
            continue;
        }
        let c = pose.joints[pivot];
        for &j in &distal {
            new_pose.joints[j] = rotate_point(pose.joints[j], c, theta_deg);
        }
    }
    let mut events = Vec::with_capacity(clip.events.len());
    for e in &clip.events {
        let Some(i) = clip.frame_of(e.t) else {
            events.push(*e);
            continue;
        };
        let pose = &clip.poses[i];
        let p = [e.x, e.y];
        let nearest = bones
            .iter()
            .filter(|&&(a, b)| pose.visible[a] && pose.visible[b])
            .map(|&(a, b)| (segment_distance(p, pose.joints[a], pose.joints[b]), b))
            .min_by(|x, y| x.0.total_cmp(&y.0));
        let moves = pose.visible[pivot] && nearest.is_some_and(|(_, b)| distal.contains(&b));
        if moves {
            let q = rotate_point(p, pose.joints[pivot], theta_deg);
            let r = PointEvent { x: q[0], y: q[1], ..*e };
            if clip.inside(&r) {
                events.push(r);
            }
        } else {
            events.push(*e);
        }
    }
    out.events = events;
    Ok(out)
}

/// Rotates every event and joint about the frame center.
pub fn augment_global_rotation(clip: &AugClip, theta_deg: f64) -> AugClip {
    let c = [clip.width as f64 / 2.0, clip.height as f64 / 2.0];
    let mut out = clip.clone();
    for pose in &mut out.poses {
        for j in &mut pose.joints {
            *j = rotate_point(*j, c, theta_deg);
        }
    }
    out.events = clip
        .events
        .iter()
        .map(|e| {
            let q = rotate_point([e.x, e.y], c, theta_deg);
            PointEvent { x: q[0], y: q[1], ..*e }
        })
        .filter(|e| clip.inside(e))
        .collect();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Polarity;

    #[test]
    fn quarter_turn_follows_row_vector_convention() {
        assert_eq!(rotate_point([1.0, 0.0], [0.0, 0.0], 90.0), [0.0, 1.0]);
        assert_eq!(rotate_point([5.0, 3.0], [4.0, 3.0], 90.0), [4.0, 4.0]);
        assert_eq!(rotate_point([5.0, 3.0], [4.0, 3.0], -270.0), [4.0, 4.0]);
        assert_eq!(rotate_point([5.25, 3.5], [1.0, 2.0], 360.0), [5.25, 3.5]);
    }

    fn ev(x: f64, y: f64) -> PointEvent {
        PointEvent {
            x,
            y,
            t: 0,
            polarity: Polarity::Positive,
        }
    }

    #[test]
    fn global_rotation_drops_outside_events() {
        let clip = AugClip {
            events: vec![ev(1.0, 5.0), ev(5.5, 5.5)],
            poses: vec![Pose::from_joints(vec![[5.0, 5.0]])],
            t0: 0,
            interval: 10,
            width: 10,
            height: 10,
        };
        let r = augment_global_rotation(&clip, 45.0);
        assert_eq!(r.events.len(), 2);
        let clip = AugClip {
            width: 20,
            events: vec![ev(0.5, 5.0)],
            ..clip
        };
        // (0.5, 5) about (10, 5) by 90° → (10, -4.5), outside
        assert!(augment_global_rotation(&clip, 90.0).events.is_empty());
    }
}
