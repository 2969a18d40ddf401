//! Heatmap decoding and the evaluation metrics: OKS-based AP, PCK, MPJPE.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndgrad::{Float, Tensor};
use crate::pose::Pose;

/// Default peak value a decoded joint must exceed to count as visible.
pub const DEFAULT_VISIBILITY_THRESHOLD: f64 = 0.1;
/// Default PCK radius as a fraction of the larger ground-truth bbox side.
pub const DEFAULT_PCK_ALPHA: f64 = 0.1;
/// Default per-joint OKS falloff constant.
pub const DEFAULT_KAPPA: f64 = 0.1;

/// Argmax decode of a `K×H×W` heatmap stack into input-pixel coordinates.
///
/// Ties go to the lowest row-major index. Cell `(cx, cy)` maps to
/// `((cx + 0.5)·stride, (cy + 0.5)·stride)`.
pub fn decode<F: Float>(maps: &Tensor<F>, stride: usize, threshold: f64) -> Result<Pose> {
    let &[k, h, w] = maps.shape() else {
        return Err(Error::arg(format!(
            "decode expects a K×H×W stack, got {:?}",
            maps.shape()
        )));
    };
    let plane = h * w;
    let mut joints = Vec::with_capacity(k);
    let mut visible = Vec::with_capacity(k);
    for ch in maps.data().chunks_exact(plane) {
        let mut best = 0;
        for (i, v) in ch.iter().enumerate() {
            if *v > ch[best] {
                best = i;
            }
        }
        let (cy, cx) = (best / w, best % w);
        let s = stride as f64;
        joints.push([(cx as f64 + 0.5) * s, (cy as f64 + 0.5) * s]);
        visible.push(ch[best].f64() > threshold);
    }
    Pose::new(joints, visible)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn check_pair(pred: &Pose, gt: &Pose) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::arg(format!(
            "prediction has {} joints, ground truth {}",
            pred.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Mean over frames of the mean Euclidean error over ground-truth-visible
/// joints. Frames without visible joints are skipped.
pub fn mpjpe(pred: &[Pose], gt: &[Pose]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::arg("prediction and ground-truth sequences differ in length"));
    }
    let mut total = 0.0;
    let mut frames = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        check_pair(p, g)?;
        let d: Vec<f64> = (0..g.len())
            .filter(|&k| g.visible[k])
            .map(|k| dist(p.joints[k], g.joints[k]))
            .collect();
        if !d.is_empty() {
            total += d.iter().sum::<f64>() / d.len() as f64;
            frames += 1;
        }
    }
    if frames == 0 {
        return Err(Error::UndefinedResult("no visible ground-truth joints".into()));
    }
    Ok(total / frames as f64)
}

/// Object keypoint similarity with `s²` the area of the tight box around the
/// ground-truth-visible joints, clamped below by 1.
pub fn oks(pred: &Pose, gt: &Pose, kappa: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    if kappa.len() != gt.len() {
        return Err(Error::arg(format!(
            "{} falloff constants for {} joints",
            kappa.len(),
            gt.len()
        )));
    }
    let Some([x0, y0, x1, y1]) = gt.visible_bbox() else {
        return Err(Error::UndefinedResult("OKS needs a visible ground-truth joint".into()));
    };
    let s2 = ((x1 - x0) * (y1 - y0)).max(1.0);
    let mut sum = 0.0;
    let mut n = 0usize;
    for k in (0..gt.len()).filter(|&k| gt.visible[k]) {
        let [dx, dy] = [pred.joints[k][0] - gt.joints[k][0], pred.joints[k][1] - gt.joints[k][1]];
        sum += (-(dx * dx + dy * dy) / (2.0 * s2 * kappa[k] * kappa[k])).exp();
        n += 1;
    }
    Ok(sum / n as f64)
}

/// OKS thresholds `0.50, 0.55, …, 0.95`.
pub fn ap_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Percentage of frames whose OKS reaches `threshold`.
pub fn ap_at(oks: &[f64], threshold: f64) -> Result<f64> {
    if oks.is_empty() {
        return Err(Error::UndefinedResult("AP over zero frames".into()));
    }
    let hits = oks.iter().filter(|&&o| o >= threshold).count();
    Ok(100.0 * hits as f64 / oks.len() as f64)
}

/// `(AP, AP50, AP75)` for one prediction per frame, where AP at a threshold
/// is the share of frames reaching it.
pub fn ap_suite(oks: &[f64]) -> Result<(f64, f64, f64)> {
    let per: Vec<f64> = ap_thresholds()
        .iter()
        .map(|&t| ap_at(oks, t))
        .collect::<Result<_>>()?;
    let ap = per.iter().sum::<f64>() / per.len() as f64;
    Ok((ap, per[0], per[5]))
}

/// Whether joint `k` lies within `alpha` times the larger side of the
/// ground-truth box (sides clamped to at least 1 px).
fn pck_hits(pred: &Pose, gt: &Pose, alpha: f64) -> Result<(usize, usize)> {
    check_pair(pred, gt)?;
    let Some([x0, y0, x1, y1]) = gt.visible_bbox() else {
        return Ok((0, 0));
    };
    let radius = alpha * (x1 - x0).max(y1 - y0).max(1.0);
    let mut hits = 0;
    let mut n = 0;
    for k in (0..gt.len()).filter(|&k| gt.visible[k]) {
        n += 1;
        if dist(pred.joints[k], gt.joints[k]) <= radius {
            hits += 1;
        }
    }
    Ok((hits, n))
}

/// Percentage of ground-truth-visible joints within `alpha·max(w, h)` of
/// their target, pooled over all frames.
pub fn pck(pred: &[Pose], gt: &[Pose], alpha: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::arg("prediction and ground-truth sequences differ in length"));
    }
    let (mut hits, mut n) = (0, 0);
    for (p, g) in pred.iter().zip(gt) {
        let (h, c) = pck_hits(p, g, alpha)?;
        hits += h;
        n += c;
    }
    if n == 0 {
        return Err(Error::UndefinedResult("no visible ground-truth joints".into()));
    }
    Ok(100.0 * hits as f64 / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub alpha: f64,
    /// Per-joint OKS constants; a single entry applies to every joint.
    pub kappa: Vec<f64>,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            alpha: DEFAULT_PCK_ALPHA,
            kappa: vec![DEFAULT_KAPPA],
        }
    }
}

impl MetricConfig {
    fn kappa_for(&self, k: usize) -> Result<Vec<f64>> {
        match self.kappa.len() {
            1 => Ok(vec![self.kappa[0]; k]),
            n if n == k => Ok(self.kappa.clone()),
            n => Err(Error::arg(format!("{n} OKS constants for {k} joints"))),
        }
    }
}

/// AP/PCK/MPJPE over one group of frames. Percentages are in `[0, 100]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub pck: f64,
    pub mpjpe: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: Scores,
    pub per_action: BTreeMap<String, Scores>,
}

/// One evaluated frame.
#[derive(Debug, Clone)]
pub struct Scored<'a> {
    pub action: &'a str,
    pub pred: &'a Pose,
    pub gt: &'a Pose,
}

fn scores(frames: &[&Scored<'_>], cfg: &MetricConfig) -> Result<Scores> {
    // per-frame work in parallel; reductions below run in frame order
    let rows: Vec<Option<(f64, usize, usize)>> = frames
        .par_iter()
        .map(|f| -> Result<_> {
            if f.gt.visible_count() == 0 {
                return Ok(None);
            }
            let kappa = cfg.kappa_for(f.gt.len())?;
            let o = oks(f.pred, f.gt, &kappa)?;
            let (h, n) = pck_hits(f.pred, f.gt, cfg.alpha)?;
            Ok(Some((o, h, n)))
        })
        .collect::<Result<_>>()?;
    let used: Vec<(f64, usize, usize)> = rows.into_iter().flatten().collect();
    let oks_all: Vec<f64> = used.iter().map(|r| r.0).collect();
    let (ap, ap50, ap75) = ap_suite(&oks_all)?;
    let hits: usize = used.iter().map(|r| r.1).sum();
    let n: usize = used.iter().map(|r| r.2).sum();
    let preds: Vec<Pose> = frames.iter().map(|f| f.pred.clone()).collect();
    let gts: Vec<Pose> = frames.iter().map(|f| f.gt.clone()).collect();
    Ok(Scores {
        ap,
        ap50,
        ap75,
        pck: 100.0 * hits as f64 / n as f64,
        mpjpe: mpjpe(&preds, &gts)?,
        frames: used.len(),
    })
}

/// Scores all frames together and per action label.
pub fn evaluate(frames: &[Scored<'_>], cfg: &MetricConfig) -> Result<EvalReport> {
    let all: Vec<&Scored<'_>> = frames.iter().collect();
    let overall = scores(&all, cfg)?;
    let mut groups: BTreeMap<&str, Vec<&Scored<'_>>> = BTreeMap::new();
    for f in frames {
        groups.entry(f.action).or_default().push(f);
    }
    let mut per_action = BTreeMap::new();
    for (action, group) in groups {
        match scores(&group, cfg) {
            Ok(s) => {
                per_action.insert(action.to_owned(), s);
            }
            Err(Error::UndefinedResult(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(EvalReport {
        overall,
        per_action,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Tab-separated `action AP PCK MPJPE`, one row per action and a final
    /// `all` row.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("action\tAP\tPCK\tMPJPE\n");
        let rows = self
            .per_action
            .iter()
            .map(|(a, s)| (a.as_str(), s))
            .chain([("all", &self.overall)]);
        for (action, s) in rows {
            let _ = writeln!(out, "{action}\t{:.2}\t{:.2}\t{:.2}", s.ap, s.pck, s.mpjpe);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(j: &[[f64; 2]]) -> Pose {
        Pose::from_joints(j.to_vec())
    }

    #[test]
    fn mpjpe_pythagorean_case() {
        let gt = pose(&[[0.0, 0.0], [10.0, 10.0]]);
        let pred = pose(&[[3.0, 4.0], [10.0, 10.0]]);
        assert_eq!(mpjpe(&[pred], &[gt]).unwrap(), 2.5);
    }

    #[test]
    fn mpjpe_shift_and_identity() {
        let gt = pose(&[[1.0, 2.0], [5.0, -3.0], [7.5, 7.5]]);
        assert_eq!(mpjpe(&[gt.clone()], &[gt.clone()]).unwrap(), 0.0);
        let shifted = gt.translated(0.0, 1.75);
        assert_eq!(mpjpe(&[shifted], &[gt]).unwrap(), 1.75);
    }

    #[test]
    fn mpjpe_without_visible_joints_is_undefined() {
        let gt = Pose::new(vec![[0.0, 0.0]], vec![false]).unwrap();
        assert!(matches!(
            mpjpe(&[gt.clone()], &[gt]),
            Err(Error::UndefinedResult(_))
        ));
    }

    #[test]
    fn oks_unit_cases() {
        let gt = pose(&[[0.0, 0.0], [4.0, 0.0], [4.0, 4.0]]);
        assert_eq!(oks(&gt, &gt, &[0.1; 3]).unwrap(), 1.0);
        // single visible joint: s² clamps to 1, d² = 2κ² gives e⁻¹
        let one = Pose::new(vec![[10.0, 10.0], [0.0, 0.0]], vec![true, false]).unwrap();
        let kappa = 0.3;
        let d = (2.0f64).sqrt() * kappa;
        let pred = pose(&[[10.0 + d, 10.0], [50.0, 50.0]]);
        let v = oks(&pred, &one, &[kappa, kappa]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn oks_matches_direct_formula() {
        let gt = pose(&[[2.0, 3.0], [12.0, 9.0], [6.0, 15.0]]);
        let pred = pose(&[[2.5, 2.0], [11.0, 9.5], [9.0, 14.0]]);
        let kappa = [0.1, 0.2, 0.15];
        let s2 = 10.0 * 12.0;
        let expect = [(0.25 + 1.0, 0.1), (1.0 + 0.25, 0.2), (9.0 + 1.0, 0.15)]
            .iter()
            .map(|&(d2, k): &(f64, f64)| (-d2 / (2.0 * s2 * k * k)).exp())
            .sum::<f64>()
            / 3.0;
        assert!((oks(&pred, &gt, &kappa).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn ap_enumeration() {
        assert_eq!(ap_suite(&[1.0; 7]).unwrap(), (100.0, 100.0, 100.0));
        assert_eq!(ap_suite(&[0.6; 5]).unwrap(), (30.0, 100.0, 0.0));
        assert!(ap_suite(&[]).is_err());
    }

    #[test]
    fn pck_counting() {
        let gt = pose(&[[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]]);
        // radius = 0.1 × 10 = 1
        let pred = pose(&[[1.0, 0.0], [10.0, 0.5], [12.0, 10.0], [0.0, 13.0]]);
        assert_eq!(pck(&[pred], &[gt.clone()], 0.1).unwrap(), 50.0);
        assert_eq!(pck(&[gt.clone()], &[gt], 0.1).unwrap(), 100.0);
    }

    #[test]
    fn pck_single_joint_uses_unit_side() {
        let gt = Pose::new(vec![[5.0, 5.0], [0.0, 0.0]], vec![true, false]).unwrap();
        let near = pose(&[[5.5, 5.0], [99.0, 99.0]]);
        assert_eq!(pck(&[near], &[gt.clone()], 0.5).unwrap(), 100.0);
        let far = pose(&[[5.6, 5.0], [0.0, 0.0]]);
        assert_eq!(pck(&[far], &[gt], 0.5).unwrap(), 0.0);
    }

    #[test]
    fn decode_ties_and_zero_maps() {
        let mut t = Tensor::<f32>::zeros(&[2, 3, 3]);
        assert!(decode(&t, 4, 0.1).unwrap().visible.iter().all(|v| !v));
        t.data_mut()[4] = 0.7;
        t.data_mut()[9 + 5] = 0.9;
        t.data_mut()[9 + 7] = 0.9;
        let p = decode(&t, 4, 0.1).unwrap();
        assert_eq!(p.joints[0], [6.0, 6.0]);
        assert_eq!(p.joints[1], [10.0, 6.0]);
        assert_eq!(p.visible, vec![true, true]);
    }

    #[test]
    fn report_groups_by_action() {
        let gt = pose(&[[0.0, 0.0], [10.0, 10.0]]);
        let off = gt.translated(3.0, 4.0);
        let frames = vec![
            Scored { action: "fast", pred: &off, gt: &gt },
            Scored { action: "slow", pred: &gt, gt: &gt },
        ];
        let r = evaluate(&frames, &MetricConfig::default()).unwrap();
        assert_eq!(r.per_action["slow"].pck, 100.0);
        assert_eq!(r.per_action["fast"].mpjpe, 5.0);
        assert_eq!(r.overall.mpjpe, 2.5);
        let tsv = r.to_tsv();
        assert!(tsv.starts_with("action\tAP\tPCK\tMPJPE\nfast\t"));
        assert!(tsv.ends_with("all\t50.00\t50.00\t2.50\n"), "{tsv}");
        let back: EvalReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    fn arb_pose() -> impl Strategy<Value = Pose> {
        prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..6)
            .prop_map(|v| Pose::from_joints(v.into_iter().map(|(x, y)| [x, y]).collect()))
    }

    proptest! {
        #[test]
        fn metrics_are_translation_invariant(gt in arb_pose(), noise in 0.0..5.0f64, dx in -20.0..20.0f64, dy in -20.0..20.0f64) {
            let pred = Pose::from_joints(gt.joints.iter().enumerate()
                .map(|(i, j)| [j[0] + noise * (i as f64).cos(), j[1] - noise * (i as f64).sin()]).collect());
            let kappa = vec![0.1; gt.len()];
            let (p2, g2) = (pred.translated(dx, dy), gt.translated(dx, dy));
            prop_assert!((mpjpe(&[pred.clone()], &[gt.clone()]).unwrap() - mpjpe(&[p2.clone()], &[g2.clone()]).unwrap()).abs() < 1e-9);
            prop_assert!((oks(&pred, &gt, &kappa).unwrap() - oks(&p2, &g2, &kappa).unwrap()).abs() < 1e-9);
            prop_assert_eq!(pck(&[pred], &[gt], 0.1).unwrap(), pck(&[p2], &[g2], 0.1).unwrap());
        }

        #[test]
        fn oks_is_scale_consistent(gt in arb_pose(), c in 1.5..4.0f64) {
            let pred = gt.translated(0.7, -0.4);
            let scale = |p: &Pose| Pose::from_joints(p.joints.iter().map(|j| [j[0] * c, j[1] * c]).collect());
            let kappa = vec![0.1; gt.len()];
            let [x0, y0, x1, y1] = gt.visible_bbox().unwrap();
            prop_assume!((x1 - x0) * (y1 - y0) >= 1.0);
            let a = oks(&pred, &gt, &kappa).unwrap();
            let b = oks(&scale(&pred), &scale(&gt), &kappa).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn ap_is_monotone(values in prop::collection::vec(0.0..1.0f64, 1..40)) {
            let per: Vec<f64> = ap_thresholds().iter().map(|&t| ap_at(&values, t).unwrap()).collect();
            prop_assert!(per.windows(2).all(|w| w[0] >= w[1]));
            let (ap, ap50, _) = ap_suite(&values).unwrap();
            prop_assert!(ap <= ap50 && (0.0..=100.0).contains(&ap));
        }
    }
}
