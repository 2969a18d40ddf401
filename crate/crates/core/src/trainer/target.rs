use crate::error::{Error, Result};
use crate::ndgrad::{Float, Tape, Tensor, Var};
use crate::pose::Pose;

/// Gaussian heatmaps `K×S×S` for `pose`, centered on `joint / stride - 0.5`
/// so that [`crate::metrics::decode`] maps the peak cell back onto the joint.
/// Invisible joints get an all-zero channel.
pub fn make_target<F: Float>(pose: &Pose, size: usize, stride: usize, sigma: f64) -> Tensor<F> {
    let k = pose.len();
    let mut data = vec![F::zero(); k * size * size];
    let inv = 1.0 / (2.0 * sigma * sigma);
    for (c, (j, &vis)) in pose.joints.iter().zip(&pose.visible).enumerate() {
        if !vis {
            continue;
        }
        let cx = j[0] / stride as f64 - 0.5;
        let cy = j[1] / stride as f64 - 0.5;
        let plane = &mut data[c * size * size..(c + 1) * size * size];
        for y in 0..size {
            let dy = y as f64 - cy;
            for x in 0..size {
                let dx = x as f64 - cx;
                plane[y * size + x] = F::of((-(dx * dx + dy * dy) * inv).exp());
            }
        }
    }
    Tensor::new(vec![k, size, size], data).expect("buffer matches shape")
}

/// `Σ_t Σ_k mask · sse(b_t(k), b*_t(k))`, divided by the number of
/// masked-in channels times the heatmap area. `preds` are `1×K×S×S` tape
/// values, `targets` `K×S×S` tensors, `masks[t][k]` the visibility flags.
pub fn heatmap_loss<F: Float>(
    tape: &mut Tape<F>,
    preds: &[Var],
    targets: &[Tensor<F>],
    masks: &[Vec<bool>],
) -> Result<Var> {
    if preds.len() != targets.len() || preds.len() != masks.len() {
        return Err(Error::arg(format!(
            "loss over {} predictions, {} targets and {} masks",
            preds.len(),
            targets.len(),
            masks.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::arg("loss over an empty sequence"));
    }
    let mut terms = Vec::with_capacity(preds.len());
    let mut channels = 0usize;
    let mut area = 0usize;
    for ((&b, target), mask) in preds.iter().zip(targets).zip(masks) {
        let shape = tape.shape(b).to_vec();
        let &[1, k, h, w] = shape.as_slice() else {
            return Err(Error::arg(format!("prediction shape {shape:?} is not 1×K×H×W")));
        };
        if target.shape() != [k, h, w] || mask.len() != k {
            return Err(Error::ShapeMismatch {
                name: "target".into(),
                expected: vec![k, h, w],
                found: target.shape().to_vec(),
            });
        }
        area = h * w;
        channels += mask.iter().filter(|&&m| m).count();
        let target = tape.constant(target.clone().reshape(&shape)?);
        let masked = if mask.iter().all(|&m| m) {
            b
        } else {
            let mut m = vec![F::zero(); k * h * w];
            for (c, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
                m[c * h * w..(c + 1) * h * w].fill(F::one());
            }
            let m = tape.constant(Tensor::new(shape.clone(), m)?);
            tape.mul(b, m)?
        };
        terms.push(tape.sse(masked, target)?);
    }
    let total = tape.sum_tensors(&terms)?;
    let denom = (channels * area).max(1);
    Ok(tape.scale(total, F::of(1.0 / denom as f64)))
}
