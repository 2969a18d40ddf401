//! 2-D keypoint poses and the line-oriented pose label format.
//!
//! A label file holds one line per frame; each line is a JSON array of `K`
//! entries `[x, y, visible]` with `visible` either `0` or `1`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `K` joints in input-image pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub joints: Vec<[f64; 2]>,
    pub visible: Vec<bool>,
}

impl Pose {
    pub fn new(joints: Vec<[f64; 2]>, visible: Vec<bool>) -> Result<Self> {
        if joints.len() != visible.len() {
            return Err(Error::arg(format!(
                "pose has {} joints but {} visibility flags",
                joints.len(),
                visible.len()
            )));
        }
        if joints.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::input("pose coordinates must be finite"));
        }
        Ok(Pose { joints, visible })
    }

    /// All joints visible.
    pub fn from_joints(joints: Vec<[f64; 2]>) -> Self {
        let visible = vec![true; joints.len()];
        Pose { joints, visible }
    }

    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    /// Tight bounding box `(min_x, min_y, max_x, max_y)` of the visible joints.
    pub fn visible_bbox(&self) -> Option<[f64; 4]> {
        let mut it = self
            .joints
            .iter()
            .zip(&self.visible)
            .filter(|(_, &v)| v)
            .map(|(j, _)| j);
        let first = it.next()?;
        let mut bb = [first[0], first[1], first[0], first[1]];
        for j in it {
            bb[0] = bb[0].min(j[0]);
            bb[1] = bb[1].min(j[1]);
            bb[2] = bb[2].max(j[0]);
            bb[3] = bb[3].max(j[1]);
        }
        Some(bb)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose {
        Pose {
            joints: self.joints.iter().map(|j| [j[0] + dx, j[1] + dy]).collect(),
            visible: self.visible.clone(),
        }
    }

    /// Bounding-box center of the visible joints across several poses.
    pub fn union_bbox_center(poses: &[Pose]) -> Option<[f64; 2]> {
        let mut acc: Option<[f64; 4]> = None;
        for bb in poses.iter().filter_map(Pose::visible_bbox) {
            acc = Some(match acc {
                None => bb,
                Some(a) => [a[0].min(bb[0]), a[1].min(bb[1]), a[2].max(bb[2]), a[3].max(bb[3])],
            });
        }
        acc.map(|a| [(a[0] + a[2]) / 2.0, (a[1] + a[3]) / 2.0])
    }

    fn to_line(&self) -> String {
        let entries: Vec<serde_json::Value> = self
            .joints
            .iter()
            .zip(&self.visible)
            .map(|(j, &v)| serde_json::json!([j[0], j[1], u8::from(v)]))
            .collect();
        serde_json::Value::Array(entries).to_string()
    }

    fn from_line(line: &str, line_no: usize) -> Result<Pose> {
        let entries: Vec<(f64, f64, u8)> = serde_json::from_str(line)
            .map_err(|e| Error::format_at_line(line_no, format!("bad pose entry: {e}")))?;
        let mut joints = Vec::with_capacity(entries.len());
        let mut visible = Vec::with_capacity(entries.len());
        for (x, y, v) in entries {
            if v > 1 {
                return Err(Error::format_at_line(line_no, "visibility must be 0 or 1"));
            }
            if !x.is_finite() || !y.is_finite() {
                return Err(Error::format_at_line(line_no, "non-finite coordinate"));
            }
            joints.push([x, y]);
            visible.push(v == 1);
        }
        Ok(Pose { joints, visible })
    }
}

pub fn write_poses(poses: &[Pose], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in poses {
        writeln!(w, "{}", p.to_line()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut poses = Vec::new();
    let mut k = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let pose = Pose::from_line(&line, i + 1)?;
        match k {
            None => k = Some(pose.len()),
            Some(k) if k != pose.len() => {
                return Err(Error::format_at_line(
                    i + 1,
                    format!("expected {k} joints, found {}", pose.len()),
                ))
            }
            _ => {}
        }
        poses.push(pose);
    }
    Ok(poses)
}
