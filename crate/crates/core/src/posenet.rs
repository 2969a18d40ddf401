//! The pose network: a strided encoder with three deconvolutions (`F`), a
//! stacked ConvLSTM (`L`), 1×1 heatmap heads (`g`, `g₀`), the attention
//! gate over earlier heatmaps, and the four unrolling variants.
//!
//! Everything is recorded on an [`ndgrad::Tape`](crate::ndgrad::Tape) with
//! a batch dimension of one.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::EventFrame;
use crate::ndgrad::{Float, ParamId, ParamSet, Tape, Tensor, Var};

/// How earlier heatmaps feed the recurrent input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// No prior: `b_t = g(L(F(I_t)))`.
    Rnn,
    /// Prior is the previous step's heatmaps.
    Thin,
    /// Prior is the plain sum of all earlier heatmaps.
    DenseNoAtt,
    /// Prior is the attention-weighted sum of all earlier heatmaps.
    DenseAtt,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Rnn,
        Variant::Thin,
        Variant::DenseNoAtt,
        Variant::DenseAtt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Rnn => "rnn",
            Variant::Thin => "thin",
            Variant::DenseNoAtt => "dense_no_att",
            Variant::DenseAtt => "dense_att",
        }
    }

    /// Whether the LSTM input carries a heatmap prior.
    pub fn has_prior(self) -> bool {
        self != Variant::Rnn
    }

    pub fn is_dense(self) -> bool {
        matches!(self, Variant::DenseNoAtt | Variant::DenseAtt)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::arg(format!(
                    "unknown variant `{s}` (expected rnn, thin, dense_no_att or dense_att)"
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_size: usize,
    pub heatmap_stride: usize,
    /// Keypoint count `K`.
    pub keypoints: usize,
    /// Feature width `M`, shared by the encoder output and the LSTM.
    pub feature_channels: usize,
    /// Number of stride-2 encoder stages.
    pub encoder_depth: usize,
    pub lstm_layers: usize,
    pub lstm_kernel: usize,
    pub variant: Variant,
    pub attention_channels: usize,
    pub t_max: usize,
    /// Divide the dense prior by the number of summed terms.
    pub mean_normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_size: 256,
            heatmap_stride: 4,
            keypoints: 13,
            feature_channels: 32,
            encoder_depth: 5,
            lstm_layers: 2,
            lstm_kernel: 3,
            variant: Variant::DenseAtt,
            attention_channels: 16,
            t_max: 16,
            mean_normalize: false,
        }
    }
}

impl ModelConfig {
    /// The smallest useful configuration: 16×16 input, `M = 4`, `K = 2`,
    /// three steps, heatmap stride 2.
    pub fn micro(variant: Variant) -> Self {
        ModelConfig {
            input_size: 16,
            heatmap_stride: 2,
            encoder_depth: 4,
            keypoints: 2,
            feature_channels: 4,
            attention_channels: 2,
            lstm_layers: 2,
            lstm_kernel: 3,
            t_max: 3,
            variant,
            mean_normalize: false,
        }
    }

    /// Side of the heatmap and feature grids.
    pub fn heatmap_size(&self) -> usize {
        self.input_size / self.heatmap_stride
    }

    /// Channels entering the first LSTM layer.
    pub fn lstm_input_channels(&self) -> usize {
        if self.variant.has_prior() {
            self.feature_channels + self.keypoints
        } else {
            self.feature_channels
        }
    }

    /// Width of encoder stage `s`: narrow early stages, `M` at the bottom.
    pub fn stage_width(&self, s: usize) -> usize {
        let m = self.feature_channels;
        (m >> (self.encoder_depth - 1 - s)).max(m.min(8))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.keypoints == 0 || self.feature_channels == 0 || self.attention_channels == 0 {
            return bad("keypoints, feature_channels and attention_channels must be positive".into());
        }
        if self.lstm_layers == 0 {
            return bad("lstm_layers must be at least 1".into());
        }
        if self.lstm_kernel % 2 == 0 {
            return bad(format!("lstm_kernel must be odd, got {}", self.lstm_kernel));
        }
        if self.t_max == 0 {
            return bad("t_max must be at least 1".into());
        }
        if self.heatmap_stride == 0 || !self.heatmap_stride.is_power_of_two() {
            return bad(format!(
                "heatmap_stride must be a power of two, got {}",
                self.heatmap_stride
            ));
        }
        if self.input_size == 0 || self.input_size % self.heatmap_stride != 0 {
            return bad(format!(
                "input_size {} is not divisible by heatmap_stride {}",
                self.input_size, self.heatmap_stride
            ));
        }
        // three ×2 deconvolutions follow the encoder
        let want = self.heatmap_stride.trailing_zeros() as usize + 3;
        if self.encoder_depth != want {
            return bad(format!(
                "encoder_depth {} cannot reach heatmap stride {} with three upsampling stages \
                 (needs depth {want})",
                self.encoder_depth, self.heatmap_stride
            ));
        }
        if self.input_size % (1 << self.encoder_depth) != 0 {
            return bad(format!(
                "input_size {} is not divisible by 2^{}",
                self.input_size, self.encoder_depth
            ));
        }
        Ok(())
    }
}

/// Fan-in scaled uniform init; ReLU-fed layers use the Kaiming bound.
fn init_conv<F: Float>(
    ps: &mut ParamSet<F>,
    rng: &mut ChaCha8Rng,
    name: &str,
    shape: [usize; 4],
    fan_in: usize,
    relu: bool,
) -> Result<()> {
    let bound = if relu {
        (6.0 / fan_in as f64).sqrt()
    } else {
        1.0 / (fan_in as f64).sqrt()
    };
    let out = shape[0];
    ps.insert(&format!("{name}.w"), Tensor::uniform(&shape, bound, rng))?;
    ps.insert(&format!("{name}.b"), Tensor::zeros(&[out]))?;
    Ok(())
}

/// Fresh parameters for `cfg`, fully determined by `seed`.
///
/// Parameters are drawn in a fixed order with attention last, so a
/// `dense_att` set drawn from the same seed as a `dense_no_att` set agrees
/// with it on every shared tensor.
pub fn init_params<F: Float>(cfg: &ModelConfig, seed: u64) -> Result<ParamSet<F>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = ParamSet::new();
    let rng = &mut rng;
    let (m, k) = (cfg.feature_channels, cfg.keypoints);

    let mut c_in = 2;
    for s in 0..cfg.encoder_depth {
        let w = cfg.stage_width(s);
        init_conv(&mut ps, rng, &format!("enc{s}.down"), [w, c_in, 3, 3], c_in * 9, true)?;
        init_conv(&mut ps, rng, &format!("enc{s}.res1"), [w, w, 3, 3], w * 9, true)?;
        init_conv(&mut ps, rng, &format!("enc{s}.res2"), [w, w, 3, 3], w * 9, false)?;
        c_in = w;
    }
    for d in 0..3 {
        let name = format!("dec{d}");
        let bound = (6.0 / (c_in * 4) as f64).sqrt();
        ps.insert(&format!("{name}.w"), Tensor::uniform(&[c_in, m, 4, 4], bound, rng))?;
        ps.insert(&format!("{name}.b"), Tensor::zeros(&[m]))?;
        c_in = m;
    }

    let kk = cfg.lstm_kernel;
    let mut x_in = cfg.lstm_input_channels();
    for l in 0..cfg.lstm_layers {
        let ci = x_in + m;
        init_conv(&mut ps, rng, &format!("lstm{l}"), [4 * m, ci, kk, kk], ci * kk * kk, false)?;
        // forget gate starts open
        let b = ps.get_mut(&format!("lstm{l}.b")).unwrap();
        b.value.data_mut()[m..2 * m].iter_mut().for_each(|v| *v = F::one());
        x_in = m;
    }

    init_conv(&mut ps, rng, "head", [k, m, 1, 1], m, false)?;
    if cfg.variant.has_prior() {
        init_conv(&mut ps, rng, "boot", [k, m, 1, 1], m, false)?;
    }
    if cfg.variant == Variant::DenseAtt {
        let a = cfg.attention_channels;
        init_conv(&mut ps, rng, "att.reduce", [a, m, 1, 1], m, false)?;
        init_conv(&mut ps, rng, "att.hidden", [a, a + k, 1, 1], a + k, true)?;
        ps.insert("att.out.w", Tensor::zeros(&[k, a, 1, 1]))?;
        ps.insert("att.out.b", Tensor::zeros(&[k]))?;
        ps.insert("att.offset_bias", Tensor::zeros(&[cfg.t_max - 1]))?;
    }
    Ok(ps)
}

/// Parameters of one model bound to a tape.
pub struct Net<'a> {
    pub cfg: &'a ModelConfig,
    vars: HashMap<String, Var>,
}

impl<'a> Net<'a> {
    /// Records every parameter on `tape`. Fails if `params` lacks a tensor
    /// `cfg` needs or holds one of the wrong shape.
    pub fn bind<F: Float>(cfg: &'a ModelConfig, params: &ParamSet<F>, tape: &mut Tape<F>) -> Result<Self> {
        cfg.validate()?;
        check_params(cfg, params)?;
        let bound = params.bind(tape);
        let vars = params
            .iter()
            .enumerate()
            .map(|(i, p)| (p.name.clone(), bound.var(ParamId(i))))
            .collect();
        Ok(Net { cfg, vars })
    }

    /// Uses existing tape values as parameters, paired with `names` in order.
    pub fn from_vars<'n>(
        cfg: &'a ModelConfig,
        names: impl IntoIterator<Item = &'n str>,
        vars: &[Var],
    ) -> Result<Self> {
        cfg.validate()?;
        let vars = names
            .into_iter()
            .zip(vars)
            .map(|(n, &v)| (n.to_owned(), v))
            .collect();
        Ok(Net { cfg, vars })
    }

    pub fn param(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidState(format!("missing parameter `{name}`")))
    }

    fn conv<F: Float>(&self, tape: &mut Tape<F>, name: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let w = self.param(&format!("{name}.w"))?;
        let b = self.param(&format!("{name}.b"))?;
        tape.conv2d(x, w, Some(b), stride, pad)
    }
}

/// Confirms `params` holds every tensor `cfg` needs with the right shape.
pub fn check_params<F: Float>(cfg: &ModelConfig, params: &ParamSet<F>) -> Result<()> {
    let reference = init_params::<F>(cfg, 0)?;
    for p in reference.iter() {
        let Some(q) = params.get(&p.name) else {
            return Err(Error::ShapeMismatch {
                name: p.name.clone(),
                expected: p.value.shape().to_vec(),
                found: vec![],
            });
        };
        if q.value.shape() != p.value.shape() {
            return Err(Error::ShapeMismatch {
                name: p.name.clone(),
                expected: p.value.shape().to_vec(),
                found: q.value.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// A two-channel event frame as a `1×2×H×W` tensor.
pub fn frame_tensor<F: Float>(frame: &EventFrame) -> Tensor<F> {
    let data = frame.grid.iter().map(|&v| F::of(f64::from(v))).collect();
    Tensor::new(vec![1, 2, frame.height, frame.width], data).expect("frame grid matches its size")
}

/// `F`: frame `1×2×S×S` → features `1×M×S'×S'`.
pub fn encoder_forward<F: Float>(tape: &mut Tape<F>, net: &Net<'_>, frame: Var) -> Result<Var> {
    let s = net.cfg.input_size;
    if tape.shape(frame) != [1, 2, s, s] {
        return Err(Error::ShapeMismatch {
            name: "frame".into(),
            expected: vec![1, 2, s, s],
            found: tape.shape(frame).to_vec(),
        });
    }
    let mut x = frame;
    for st in 0..net.cfg.encoder_depth {
        let d = net.conv(tape, &format!("enc{st}.down"), x, 2, 1)?;
        let d = tape.relu(d);
        let r = net.conv(tape, &format!("enc{st}.res1"), d, 1, 1)?;
        let r = tape.relu(r);
        let r = net.conv(tape, &format!("enc{st}.res2"), r, 1, 1)?;
        let sum = tape.add(d, r)?;
        x = tape.relu(sum);
    }
    for d in 0..3 {
        let w = net.param(&format!("dec{d}.w"))?;
        let b = net.param(&format!("dec{d}.b"))?;
        let y = tape.conv_transpose2d(x, w, Some(b), 2, 1, 0)?;
        x = tape.relu(y);
    }
    Ok(x)
}

/// Which 1×1 heatmap head to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    /// `g`, fed by the last LSTM layer.
    Main,
    /// `g₀`, fed by raw features at `t = 0`.
    Bootstrap,
}

/// `g` or `g₀`: `1×M×S'×S'` → raw heatmaps `1×K×S'×S'`.
pub fn head_forward<F: Float>(tape: &mut Tape<F>, net: &Net<'_>, x: Var, head: Head) -> Result<Var> {
    let m = net.cfg.feature_channels;
    if tape.shape(x).get(1) != Some(&m) {
        return Err(Error::arg(format!(
            "heatmap head expects {m} channels, got shape {:?}",
            tape.shape(x)
        )));
    }
    let name = match head {
        Head::Main => "head",
        Head::Bootstrap => "boot",
    };
    net.conv(tape, name, x, 1, 0)
}

/// Per-layer cell and hidden state.
#[derive(Debug, Clone)]
pub struct LstmState {
    pub c: Vec<Var>,
    pub h: Vec<Var>,
}

impl LstmState {
    pub fn zeros<F: Float>(tape: &mut Tape<F>, cfg: &ModelConfig) -> Self {
        let s = cfg.heatmap_size();
        let shape = [1, cfg.feature_channels, s, s];
        let mut layer = || tape.constant(Tensor::zeros(&shape));
        let c = (0..cfg.lstm_layers).map(|_| layer()).collect();
        let h = (0..cfg.lstm_layers).map(|_| layer()).collect();
        LstmState { c, h }
    }
}

/// One step of the stacked ConvLSTM without peepholes. Returns the new
/// state and the top layer's hidden output.
pub fn convlstm_step<F: Float>(
    tape: &mut Tape<F>,
    net: &Net<'_>,
    x: Var,
    state: &LstmState,
) -> Result<(LstmState, Var)> {
    let m = net.cfg.feature_channels;
    let pad = net.cfg.lstm_kernel / 2;
    let mut input = x;
    let mut next = LstmState {
        c: Vec::with_capacity(state.c.len()),
        h: Vec::with_capacity(state.h.len()),
    };
    for l in 0..net.cfg.lstm_layers {
        let (c_prev, h_prev) = (state.c[l], state.h[l]);
        let (xs, hs) = (tape.shape(input), tape.shape(h_prev));
        if xs.len() != 4 || xs[2..] != hs[2..] {
            return Err(Error::arg(format!(
                "convlstm input {xs:?} does not match state {hs:?}"
            )));
        }
        let xh = tape.concat_channels(&[input, h_prev])?;
        let z = net.conv(tape, &format!("lstm{l}"), xh, 1, pad)?;
        let zi = tape.slice_channels(z, 0, m)?;
        let zf = tape.slice_channels(z, m, m)?;
        let zo = tape.slice_channels(z, 2 * m, m)?;
        let zg = tape.slice_channels(z, 3 * m, m)?;
        let i = tape.sigmoid(zi);
        let f = tape.sigmoid(zf);
        let o = tape.sigmoid(zo);
        let g = tape.tanh(zg);
        let fc = tape.mul(f, c_prev)?;
        let ig = tape.mul(i, g)?;
        let c = tape.add(fc, ig)?;
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        next.c.push(c);
        next.h.push(h);
        input = h;
    }
    Ok((next, input))
}

/// `reduce(F_t)`, shared by every attention evaluation at step `t`.
pub fn attention_reduce<F: Float>(tape: &mut Tape<F>, net: &Net<'_>, features: Var) -> Result<Var> {
    net.conv(tape, "att.reduce", features, 1, 0)
}

/// `W^t_τ` from already reduced features. `offset = t − τ`.
pub fn attention_from_reduced<F: Float>(
    tape: &mut Tape<F>,
    net: &Net<'_>,
    reduced: Var,
    prior: Var,
    offset: usize,
) -> Result<Var> {
    if offset == 0 || offset >= net.cfg.t_max {
        return Err(Error::arg(format!(
            "attention offset {offset} outside 1..{}",
            net.cfg.t_max
        )));
    }
    let z = tape.concat_channels(&[reduced, prior])?;
    let hdn = net.conv(tape, "att.hidden", z, 1, 0)?;
    let hdn = tape.relu(hdn);
    let out = net.conv(tape, "att.out", hdn, 1, 0)?;
    let bias = net.param("att.offset_bias")?;
    let out = tape.add_scalar_at(out, bias, offset - 1)?;
    Ok(tape.sigmoid(out))
}

/// `W^t_τ = σ(out(relu(hidden(reduce(F_t) ⊕ b_τ))) + bias[t − τ])`.
pub fn attention_weights<F: Float>(
    tape: &mut Tape<F>,
    net: &Net<'_>,
    features: Var,
    prior: Var,
    offset: usize,
) -> Result<Var> {
    let reduced = attention_reduce(tape, net, features)?;
    attention_from_reduced(tape, net, reduced, prior, offset)
}

/// Diagnostic switches for [`unroll`]. The default is the model proper.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct UnrollOptions {
    /// Zero the LSTM state before every step.
    pub reset_state: bool,
    /// Feed every earlier heatmap into a prior through a fresh leaf, so
    /// gradients stop at the direct connection.
    pub detach_priors: bool,
    /// Replace every attention weight with 1.
    pub force_attention_one: bool,
}

/// Tape handles produced by [`unroll`].
#[derive(Debug, Clone, Default)]
pub struct Unrolled {
    /// `b_t` per step, each `1×K×S'×S'`.
    pub heatmaps: Vec<Var>,
    /// `g₀(F(I_0))` for variants with a prior.
    pub bootstrap: Option<Var>,
    /// `(t, τ, W^t_τ)` in evaluation order.
    pub attention: Vec<(usize, usize, Var)>,
    /// `(t, τ, leaf)` for each detached prior input.
    pub prior_leaves: Vec<(usize, usize, Var)>,
}

impl Unrolled {
    pub fn attention_evals(&self) -> usize {
        self.attention.len()
    }
}

/// Runs the recurrent model over `frames` (each `1×2×S×S`).
pub fn unroll<F: Float>(
    tape: &mut Tape<F>,
    net: &Net<'_>,
    frames: &[Var],
    opts: UnrollOptions,
) -> Result<Unrolled> {
    let cfg = net.cfg;
    if frames.is_empty() {
        return Err(Error::arg("cannot unroll an empty sequence"));
    }
    if frames.len() > cfg.t_max {
        return Err(Error::arg(format!(
            "sequence of {} frames exceeds t_max {}",
            frames.len(),
            cfg.t_max
        )));
    }
    let mut out = Unrolled::default();
    let mut state = LstmState::zeros(tape, cfg);
    for (t, &frame) in frames.iter().enumerate() {
        if opts.reset_state && t > 0 {
            state = LstmState::zeros(tape, cfg);
        }
        let feat = encoder_forward(tape, net, frame)?;
        let input = if cfg.variant.has_prior() {
            let prior = if t == 0 {
                let b0 = head_forward(tape, net, feat, Head::Bootstrap)?;
                out.bootstrap = Some(b0);
                b0
            } else {
                prior_at(tape, net, t, feat, opts, &mut out)?
            };
            tape.concat_channels(&[feat, prior])?
        } else {
            feat
        };
        let (next, h) = convlstm_step(tape, net, input, &state)?;
        state = next;
        let b = head_forward(tape, net, h, Head::Main)?;
        out.heatmaps.push(b);
    }
    Ok(out)
}

fn prior_at<F: Float>(
    tape: &mut Tape<F>,
    net: &Net<'_>,
    t: usize,
    feat: Var,
    opts: UnrollOptions,
    out: &mut Unrolled,
) -> Result<Var> {
    let cfg = net.cfg;
    let sources: Vec<usize> = match cfg.variant {
        Variant::Rnn => unreachable!("rnn has no prior"),
        Variant::Thin => vec![t - 1],
        Variant::DenseNoAtt | Variant::DenseAtt => (0..t).collect(),
    };
    let mut terms = Vec::with_capacity(sources.len());
    let reduced = if cfg.variant == Variant::DenseAtt && !opts.force_attention_one {
        Some(attention_reduce(tape, net, feat)?)
    } else {
        None
    };
    for tau in sources {
        let mut b = out.heatmaps[tau];
        if opts.detach_priors {
            let leaf = tape.leaf(tape.value(b).clone(), true);
            out.prior_leaves.push((t, tau, leaf));
            b = leaf;
        }
        if let Some(reduced) = reduced {
            let w = attention_from_reduced(tape, net, reduced, b, t - tau)?;
            out.attention.push((t, tau, w));
            b = tape.mul(w, b)?;
        }
        terms.push(b);
    }
    let sum = tape.sum_tensors(&terms)?;
    if cfg.mean_normalize && terms.len() > 1 {
        Ok(tape.scale(sum, F::of(1.0 / terms.len() as f64)))
    } else {
        Ok(sum)
    }
}

/// Heatmaps for a clip, one `K×S'×S'` tensor per frame.
pub fn predict<F: Float>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    frames: &[EventFrame],
) -> Result<Vec<Tensor<F>>> {
    let mut tape = Tape::new();
    let net = Net::bind(cfg, params, &mut tape)?;
    let vars: Vec<Var> = frames
        .iter()
        .map(|f| tape.constant(frame_tensor(f)))
        .collect();
    let un = unroll(&mut tape, &net, &vars, UnrollOptions::default())?;
    let s = cfg.heatmap_size();
    un.heatmaps
        .iter()
        .map(|&b| tape.value(b).clone().reshape(&[cfg.keypoints, s, s]))
        .collect()
}

/// The exact weights `W^t_τ` used when unrolling `frames`, as `K×S'×S'`.
pub fn export_attention<F: Float>(
    cfg: &ModelConfig,
    params: &ParamSet<F>,
    frames: &[EventFrame],
    pair: (usize, usize),
) -> Result<Tensor<F>> {
    if cfg.variant != Variant::DenseAtt {
        return Err(Error::InvalidState(format!(
            "attention maps exist only for dense_att, not {}",
            cfg.variant
        )));
    }
    let (t, tau) = pair;
    if tau >= t || t >= frames.len() {
        return Err(Error::arg(format!(
            "attention pair (t={t}, tau={tau}) needs tau < t < {}",
            frames.len()
        )));
    }
    let mut tape = Tape::new();
    let net = Net::bind(cfg, params, &mut tape)?;
    let vars: Vec<Var> = frames[..=t]
        .iter()
        .map(|f| tape.constant(frame_tensor(f)))
        .collect();
    let un = unroll(&mut tape, &net, &vars, UnrollOptions::default())?;
    let &(_, _, w) = un
        .attention
        .iter()
        .find(|&&(a, b, _)| (a, b) == pair)
        .expect("every pair below t is evaluated");
    let s = cfg.heatmap_size();
    tape.value(w).clone().reshape(&[cfg.keypoints, s, s])
}

/// Worst relative error between tape and central-difference gradients of a
/// full [`ModelConfig::micro`] unroll, over every parameter and input pixel.
/// Denominators are floored at 1e-3 of the largest gradient.
///
/// Biases and the attention output layer are randomised so no ReLU sits on
/// its kink and every path carries gradient. The readout is the squared
/// distance to targets just off the base prediction, which keeps the
/// finite-difference rounding noise small.
pub fn full_model_grad_check(variant: Variant, seed: u64) -> Result<f64> {
    use crate::ndgrad::grad_check_scaled;
    use crate::ndgrad::suite::SUITE_EPS;
    use rand::Rng;

    let cfg = ModelConfig::micro(variant);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = init_params::<f64>(&cfg, rng.random())?;
    for p in ps.iter_mut() {
        let full = p.name.starts_with("att.out") || p.name == "att.offset_bias";
        if full || p.name.ends_with(".b") {
            let spread = if full { 0.8 } else { 0.3 };
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-spread..spread));
        }
    }
    let names: Vec<String> = ps.iter().map(|p| p.name.clone()).collect();
    let n_params = names.len();
    let mut inputs: Vec<Tensor<f64>> = ps.iter().map(|p| p.value.clone()).collect();
    let s = cfg.input_size;
    for _ in 0..cfg.t_max {
        inputs.push(Tensor::uniform(&[1, 2, s, s], 1.0, &mut rng));
    }

    let forward = |tape: &mut Tape<f64>, vars: &[Var]| -> Result<Vec<Var>> {
        let net = Net::from_vars(&cfg, names.iter().map(String::as_str), &vars[..n_params])?;
        Ok(unroll(tape, &net, &vars[n_params..], UnrollOptions::default())?.heatmaps)
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let targets: Vec<Tensor<f64>> = forward(&mut tape, &vars)?
        .into_iter()
        .map(|b| {
            let mut t = tape.value(b).clone();
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v += rng.random_range(-0.01..0.01));
            t
        })
        .collect();

    grad_check_scaled(
        |tape, vars| {
            let heatmaps = forward(tape, vars)?;
            let mut terms = Vec::with_capacity(heatmaps.len());
            for (&b, target) in heatmaps.iter().zip(&targets) {
                let c = tape.constant(target.clone());
                terms.push(tape.sse(b, c)?);
            }
            tape.sum_tensors(&terms)
        },
        &inputs,
        SUITE_EPS,
        1e-3,
    )
}
