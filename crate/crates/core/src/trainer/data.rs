use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::events::{CropTransform, EventStream};
use crate::pose::Pose;
use crate::synthgen::{load_sequence, read_manifest, SkeletonSpec};

use super::augment::AugClip;

/// One labelled recording.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub id: String,
    pub action: String,
    pub stream: EventStream,
    /// Label of frame `i`, covering `[i·interval, (i+1)·interval)`.
    pub poses: Vec<Pose>,
    pub skeleton: SkeletonSpec,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    /// Sequences of a generated dataset, optionally restricted to one split.
    pub fn load(root: &Path, split: Option<&str>) -> Result<Self> {
        let manifest = read_manifest(root)?;
        let sequences = manifest
            .par_iter()
            .filter(|e| split.is_none_or(|s| e.split == s))
            .map(|e| {
                let (stream, poses) = load_sequence(root, e)?;
                Ok(Sequence {
                    id: e.id.clone(),
                    action: e.action.clone(),
                    stream,
                    poses,
                    skeleton: e.figure.skeleton(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { sequences })
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Consecutive windows of `clip_length` frames; a shorter tail becomes
    /// its own clip.
    pub fn clips(&self, clip_length: usize) -> Vec<ClipRef> {
        let mut out = Vec::new();
        for (s, seq) in self.sequences.iter().enumerate() {
            let mut start = 0;
            while start < seq.poses.len() {
                let len = clip_length.min(seq.poses.len() - start);
                out.push(ClipRef {
                    sequence: s,
                    start,
                    len,
                });
                start += len;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClipRef {
    pub sequence: usize,
    pub start: usize,
    pub len: usize,
}

/// Events and labels of `clip` in the coordinates of a `size × size` crop
/// centered on the bounding box of the clip's labels.
pub fn extract_clip(seq: &Sequence, clip: ClipRef, size: usize, interval: u64) -> Result<(AugClip, CropTransform)> {
    let poses = seq
        .poses
        .get(clip.start..clip.start + clip.len)
        .filter(|p| !p.is_empty())
        .ok_or_else(|| {
            Error::arg(format!(
                "clip {}+{} outside sequence {} of {} frames",
                clip.start,
                clip.len,
                seq.id,
                seq.poses.len()
            ))
        })?;
    let center = Pose::union_bbox_center(poses).ok_or_else(|| {
        Error::input(format!("clip at frame {} of sequence {} has no visible joint", clip.start, seq.id))
    })?;
    let crop = CropTransform::centered((center[0].round() as i64, center[1].round() as i64), size)?;
    let t0 = clip.start as u64 * interval;
    let t1 = t0 + clip.len as u64 * interval;
    let lo = seq.stream.events.partition_point(|e| e.t < t0);
    let hi = seq.stream.events.partition_point(|e| e.t < t1);
    let (ox, oy) = (crop.offset_x as f64, crop.offset_y as f64);
    let events = seq.stream.events[lo..hi]
        .iter()
        .map(|e| {
            let mut p = e.to_point();
            p.x -= ox;
            p.y -= oy;
            p
        })
        .collect();
    Ok((
        AugClip {
            events,
            poses: poses.iter().map(|p| crop.apply_pose(p)).collect(),
            t0,
            interval,
            width: size,
            height: size,
        },
        crop,
    ))
}
