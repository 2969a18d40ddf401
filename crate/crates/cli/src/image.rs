//! Binary PGM/PPM output and a little line drawing.

use std::fs;
use std::path::Path;

use evpose::events::EventFrame;
use evpose::pose::Pose;
use evpose::Result;

use crate::config::io_err;

#[derive(Debug, Clone, PartialEq)]
pub struct Rgb {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl Rgb {
    /// Positive events in green, negative in magenta, on black.
    pub fn from_frame(frame: &EventFrame) -> Self {
        let mut data = vec![[0u8; 3]; frame.width * frame.height];
        for y in 0..frame.height {
            for x in 0..frame.width {
                let pos = frame.at(1, y, x).clamp(0.0, 1.0);
                let neg = frame.at(0, y, x).clamp(0.0, 1.0);
                let g = (pos * 255.0).round() as u8;
                let m = (neg * 255.0).round() as u8;
                data[y * frame.width + x] = [m, g, m];
            }
        }
        Rgb {
            width: frame.width,
            height: frame.height,
            data,
        }
    }

    pub fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.data[y as usize * self.width + x as usize] = c;
        }
    }

    pub fn line(&mut self, a: [f64; 2], b: [f64; 2], c: [u8; 3]) {
        let n = (b[0] - a[0]).abs().max((b[1] - a[1]).abs()).ceil().max(1.0) as usize;
        for i in 0..=n {
            let s = i as f64 / n as f64;
            let x = a[0] + s * (b[0] - a[0]);
            let y = a[1] + s * (b[1] - a[1]);
            self.put(x.floor() as i64, y.floor() as i64, c);
        }
    }

    /// Bones as lines and joints as small crosses.
    pub fn skeleton(&mut self, pose: &Pose, bones: &[(usize, usize)], c: [u8; 3]) {
        for &(a, b) in bones {
            if pose.visible[a] && pose.visible[b] {
                self.line(pose.joints[a], pose.joints[b], c);
            }
        }
        for (j, &v) in pose.joints.iter().zip(&pose.visible) {
            if v {
                let (x, y) = (j[0].floor() as i64, j[1].floor() as i64);
                for d in -1..=1 {
                    self.put(x + d, y, c);
                    self.put(x, y + d, c);
                }
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().flatten());
        fs::write(path, out).map_err(|e| io_err(path, e))
    }
}

/// Grayscale image of `values` clamped to `[0, 1]` and scaled to `0..=255`.
pub fn save_gray(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    fs::write(path, out).map_err(|e| io_err(path, e))
}
