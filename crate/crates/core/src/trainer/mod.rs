//! Heatmap targets, the masked loss, event-level augmentation, the plateau
//! schedule, checkpoints, and the training loop.
//!
//! Training is deterministic for a given seed: the clip order of epoch `e`
//! comes from its own random stream, and the augmentation draws for clip
//! `c` in epoch `e` from another, so a run resumed from a checkpoint at an
//! epoch boundary continues exactly as the uninterrupted run would.

mod augment;
mod checkpoint;
mod data;
mod schedule;
mod target;

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use augment::{augment_global_rotation, augment_limb_rotation, labelled_bones, rotate_point, AugClip};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use data::{extract_clip, ClipRef, Dataset, Sequence};
pub use schedule::{lr_schedule_step, PlateauSchedule, ScheduleDecision};
pub use target::{heatmap_loss, make_target};

use crate::error::{Error, Result};
use crate::events::{EventFrame, DEFAULT_COUNT_CAP, DEFAULT_INTERVAL_US};
use crate::metrics::{decode, evaluate, EvalReport, MetricConfig, Scored, DEFAULT_VISIBILITY_THRESHOLD};
use crate::ndgrad::{adam_step, AdamConfig, Float, ParamSet, Tape, Tensor, Var};
use crate::pose::Pose;
use crate::posenet::{frame_tensor, init_params, predict, unroll, ModelConfig, Net, UnrollOptions};

const ORDER_SALT: u64 = 0x6f72_6465_72;
const AUGMENT_SALT: u64 = 0x6175_676d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub plateau_patience: usize,
    pub lr_factor: f64,
    pub lr_min: f64,
    /// Frames per training clip.
    #[serde(alias = "T")]
    pub clip_length: usize,
    /// Clips per Adam step.
    pub batch_size: usize,
    /// Gaussian standard deviation in heatmap pixels.
    pub sigma: f64,
    pub epochs_max: usize,
    pub seed: u64,
    pub interval_us: u64,
    pub count_cap: u32,
    pub augment: bool,
    pub limb_rotation_prob: f64,
    /// Limb angles are drawn from `(-max, max)` degrees.
    pub limb_rotation_max_deg: f64,
    pub global_rotation_prob: f64,
    pub global_rotation_deg: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 5e-5,
            weight_decay: 1e-4,
            plateau_patience: 5,
            lr_factor: 0.5,
            lr_min: 1e-6,
            clip_length: 16,
            batch_size: 1,
            sigma: 2.0,
            epochs_max: 100,
            seed: 0,
            interval_us: DEFAULT_INTERVAL_US,
            count_cap: DEFAULT_COUNT_CAP,
            augment: true,
            limb_rotation_prob: 0.5,
            limb_rotation_max_deg: 90.0,
            global_rotation_prob: 0.5,
            global_rotation_deg: 30.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be a non-negative number, got {}", self.lr));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return bad(format!("lr_factor must lie in (0, 1), got {}", self.lr_factor));
        }
        if self.plateau_patience < 1 {
            return bad("plateau_patience must be at least 1".into());
        }
        if !(self.sigma > 0.0) {
            return bad(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.clip_length == 0 || self.batch_size == 0 {
            return bad("clip_length and batch_size must be positive".into());
        }
        if self.interval_us == 0 || self.count_cap == 0 {
            return bad("interval_us and count_cap must be positive".into());
        }
        for p in [self.limb_rotation_prob, self.global_rotation_prob] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("augmentation probability {p} outside [0, 1]"));
            }
        }
        Ok(())
    }

    pub fn schedule(&self) -> PlateauSchedule {
        PlateauSchedule {
            patience: self.plateau_patience,
            factor: self.lr_factor,
            lr_min: self.lr_min,
        }
    }
}

/// Network input and loss targets for one clip.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub frames: Vec<EventFrame>,
    /// Labels in crop coordinates.
    pub poses: Vec<Pose>,
    pub targets: Vec<Tensor<f32>>,
}

impl PreparedClip {
    pub fn masks(&self) -> Vec<Vec<bool>> {
        self.poses.iter().map(|p| p.visible.clone()).collect()
    }
}

/// Rasterizes `clip` and builds its Gaussian targets.
pub fn prepare(clip: &AugClip, model: &ModelConfig, cfg: &TrainConfig) -> Result<PreparedClip> {
    let frames = clip.rasterize(cfg.count_cap)?;
    let size = model.heatmap_size();
    let targets = clip
        .poses
        .iter()
        .map(|p| make_target(p, size, model.heatmap_stride, cfg.sigma))
        .collect();
    Ok(PreparedClip {
        frames,
        poses: clip.poses.clone(),
        targets,
    })
}

/// Random limb and global rotations, drawn from `rng`.
pub fn random_augment(clip: &AugClip, seq: &Sequence, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<AugClip> {
    let mut out = clip.clone();
    let pivots = &seq.skeleton.pivots;
    if !pivots.is_empty() && rng.random_bool(cfg.limb_rotation_prob) {
        let pivot = pivots[rng.random_range(0..pivots.len())];
        let m = cfg.limb_rotation_max_deg;
        let theta = if m > 0.0 { rng.random_range(-m..m) } else { 0.0 };
        out = augment_limb_rotation(&out, &seq.skeleton, pivot, theta)?;
    }
    if rng.random_bool(cfg.global_rotation_prob) {
        let m = cfg.global_rotation_deg;
        let theta = if m > 0.0 { rng.random_range(-m..=m) } else { 0.0 };
        out = augment_global_rotation(&out, theta);
    }
    Ok(out)
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub val_pck: Option<f64>,
    pub seconds: f64,
}

impl EpochRecord {
    pub const HEADER: &'static str = "epoch\tlr\tloss\tval_pck\tseconds";

    pub fn to_tsv(&self) -> String {
        let pck = self.val_pck.map_or_else(|| "-".to_owned(), |p| format!("{p:.4}"));
        format!(
            "{}\t{:e}\t{:.9e}\t{}\t{:.3}",
            self.epoch, self.lr, self.loss, pck, self.seconds
        )
    }
}

/// Mutable training state over a borrowed dataset.
pub struct Trainer<'d> {
    pub model: ModelConfig,
    pub cfg: TrainConfig,
    pub params: ParamSet<f32>,
    pub lr: f64,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<f64>,
    pub best_loss: Option<f64>,
    data: &'d Dataset,
    clips: Vec<ClipRef>,
}

impl<'d> Trainer<'d> {
    pub fn new(model: &ModelConfig, cfg: &TrainConfig, data: &'d Dataset) -> Result<Self> {
        let params = init_params(model, cfg.seed)?;
        Self::with_state(model.clone(), cfg, data, params, cfg.lr, 0, Vec::new(), None)
    }

    /// Continues from `ckpt`. Learning rate, Adam state and epoch count come
    /// from the checkpoint; everything else from `cfg`.
    pub fn resume(ckpt: Checkpoint, cfg: &TrainConfig, data: &'d Dataset) -> Result<Self> {
        if ckpt.seed != cfg.seed {
            return Err(Error::InvalidConfig(format!(
                "checkpoint was trained with seed {}, configuration says {}",
                ckpt.seed, cfg.seed
            )));
        }
        Self::with_state(
            ckpt.model,
            cfg,
            data,
            ckpt.params,
            ckpt.optimizer.lr,
            ckpt.epoch,
            ckpt.loss_history,
            ckpt.best_loss,
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn with_state(
        model: ModelConfig,
        cfg: &TrainConfig,
        data: &'d Dataset,
        params: ParamSet<f32>,
        lr: f64,
        epoch: usize,
        history: Vec<f64>,
        best_loss: Option<f64>,
    ) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::arg("training dataset is empty"));
        }
        if cfg.clip_length > model.t_max {
            return Err(Error::InvalidConfig(format!(
                "clip_length {} exceeds the model's t_max {}",
                cfg.clip_length, model.t_max
            )));
        }
        if let Some(seq) = data.sequences.iter().find(|s| s.poses.first().is_some_and(|p| p.len() != model.keypoints)) {
            return Err(Error::InvalidConfig(format!(
                "sequence {} has {} joints, model predicts {}",
                seq.id,
                seq.poses[0].len(),
                model.keypoints
            )));
        }
        let clips = data.clips(cfg.clip_length);
        if clips.is_empty() {
            return Err(Error::arg("training dataset has no labelled frames"));
        }
        Ok(Trainer {
            model,
            cfg: cfg.clone(),
            params,
            lr,
            epoch,
            history,
            best_loss,
            data,
            clips,
        })
    }

    pub fn clips(&self) -> &[ClipRef] {
        &self.clips
    }

    /// Clip `index` as seen in `epoch`, augmentation included.
    pub fn prepare_clip(&self, epoch: usize, index: usize) -> Result<PreparedClip> {
        let clip = self.clips[index];
        let seq = &self.data.sequences[clip.sequence];
        let (mut aug, _) = extract_clip(seq, clip, self.model.input_size, self.cfg.interval_us)?;
        if self.cfg.augment {
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ AUGMENT_SALT);
            rng.set_stream(((epoch as u64) << 32) | index as u64);
            aug = random_augment(&aug, seq, &self.cfg, &mut rng)?;
        }
        prepare(&aug, &self.model, &self.cfg)
    }

    /// Clip order of `epoch`.
    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ ORDER_SALT);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..self.clips.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.cfg.weight_decay,
            ..AdamConfig::default()
        }
    }

    /// One Adam step on the mean loss over `batch`. Returns that loss.
    pub fn step(&mut self, batch: &[PreparedClip]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::arg("empty batch"));
        }
        self.params.zero_grad();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for clip in batch {
            let mut tape = Tape::new();
            let net = Net::bind(&self.model, &self.params, &mut tape)?;
            let frames: Vec<Var> = clip.frames.iter().map(|f| tape.constant(frame_tensor(f))).collect();
            let un = unroll(&mut tape, &net, &frames, UnrollOptions::default())?;
            let loss = heatmap_loss(&mut tape, &un.heatmaps, &clip.targets, &clip.masks())?;
            let value = tape.value(loss).data()[0].f64();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: 0,
                    loss: value,
                });
            }
            total += value * scale;
            let scaled = tape.scale(loss, f32::of(scale));
            tape.backward(scaled)?;
            self.params.collect_grads(&tape);
        }
        let adam = self.adam();
        adam_step(&mut self.params, &adam)?;
        Ok(total)
    }

    /// Runs one epoch without touching the schedule. Returns the mean loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        let epoch = self.epoch;
        let order = self.epoch_order(epoch);
        let mut sum = 0.0;
        for (b, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let batch = chunk
                .par_iter()
                .map(|&i| self.prepare_clip(epoch, i))
                .collect::<Result<Vec<_>>>()?;
            let loss = self.step(&batch).map_err(|e| match e {
                Error::NonFiniteLoss { epoch, loss, .. } => Error::NonFiniteLoss { epoch, batch: b, loss },
                e => e,
            })?;
            sum += loss * chunk.len() as f64;
        }
        Ok(sum / order.len() as f64)
    }

    /// Records `loss` for the epoch just run and applies the schedule.
    pub fn finish_epoch(&mut self, loss: f64) -> ScheduleDecision {
        self.history.push(loss);
        self.epoch += 1;
        if self.best_loss.is_none_or(|b| loss < b) {
            self.best_loss = Some(loss);
        }
        let decision = lr_schedule_step(&self.history, self.lr, &self.cfg.schedule());
        if let ScheduleDecision::Continue { lr, .. } = decision {
            self.lr = lr;
        }
        decision
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            params: self.params.clone(),
            optimizer: self.adam(),
            epoch: self.epoch,
            loss_history: self.history.clone(),
            best_loss: self.best_loss,
            seed: self.cfg.seed,
        }
    }
}

/// Result of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub records: Vec<EpochRecord>,
    pub stopped_by_schedule: bool,
}

/// Trains until the schedule stops or `epochs_max` epochs have run. With
/// `out`, writes `train.log`, `checkpoint_last.epc` after every epoch and
/// `checkpoint_best.epc` whenever the training loss improves.
pub fn train(
    data: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    out: Option<&Path>,
    val: Option<&Dataset>,
) -> Result<TrainOutcome> {
    let trainer = Trainer::new(model, cfg, data)?;
    run(trainer, out, val)
}

/// Continues a [`Trainer`] until the schedule or `epochs_max` ends it.
pub fn run(mut trainer: Trainer<'_>, out: Option<&Path>, val: Option<&Dataset>) -> Result<TrainOutcome> {
    let mut log = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("train.log");
            let fresh = trainer.epoch == 0 || !path.exists();
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(&path)
                .map_err(|e| Error::io(&path, e))?;
            if fresh {
                writeln!(f, "{}", EpochRecord::HEADER).map_err(|e| Error::io(&path, e))?;
            }
            Some((f, path))
        }
        None => None,
    };
    let mut records = Vec::new();
    let mut stopped = false;
    while trainer.epoch < trainer.cfg.epochs_max {
        let started = Instant::now();
        let lr = trainer.lr;
        let loss = trainer.run_epoch()?;
        let improved = trainer.best_loss.is_none_or(|b| loss < b);
        let decision = trainer.finish_epoch(loss);
        let val_pck = match val {
            Some(v) => Some(evaluate_dataset(&trainer.model, &trainer.params, v, &EvalOptions::from(&trainer.cfg))?.overall.pck),
            None => None,
        };
        let record = EpochRecord {
            epoch: trainer.epoch - 1,
            lr,
            loss,
            val_pck,
            seconds: started.elapsed().as_secs_f64(),
        };
        if let (Some((f, path)), Some(dir)) = (log.as_mut(), out) {
            writeln!(f, "{}", record.to_tsv()).map_err(|e| Error::io(&*path, e))?;
            let ckpt = trainer.checkpoint();
            ckpt.save(dir.join("checkpoint_last.epc"))?;
            if improved {
                ckpt.save(dir.join("checkpoint_best.epc"))?;
            }
        }
        records.push(record);
        if decision == ScheduleDecision::Stop {
            stopped = true;
            break;
        }
    }
    Ok(TrainOutcome {
        checkpoint: trainer.checkpoint(),
        records,
        stopped_by_schedule: stopped,
    })
}

/// Settings for [`evaluate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub clip_length: usize,
    pub interval_us: u64,
    pub count_cap: u32,
    pub threshold: f64,
    pub metrics: MetricConfig,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions::from(&TrainConfig::default())
    }
}

impl From<&TrainConfig> for EvalOptions {
    fn from(cfg: &TrainConfig) -> Self {
        EvalOptions {
            clip_length: cfg.clip_length,
            interval_us: cfg.interval_us,
            count_cap: cfg.count_cap,
            threshold: DEFAULT_VISIBILITY_THRESHOLD,
            metrics: MetricConfig::default(),
        }
    }
}

/// Decoded predictions for every frame of `data`, in crop coordinates,
/// paired with the crop-space labels.
pub fn predict_dataset<F: Float>(
    model: &ModelConfig,
    params: &ParamSet<F>,
    data: &Dataset,
    opts: &EvalOptions,
) -> Result<Vec<(usize, Pose, Pose)>> {
    let clips = data.clips(opts.clip_length.min(model.t_max));
    let per_clip = clips
        .par_iter()
        .map(|&clip| {
            let seq = &data.sequences[clip.sequence];
            let (aug, _) = extract_clip(seq, clip, model.input_size, opts.interval_us)?;
            let frames = aug.rasterize(opts.count_cap)?;
            let maps = predict(model, params, &frames)?;
            maps.iter()
                .zip(aug.poses)
                .map(|(m, gt)| Ok((clip.sequence, decode(m, model.heatmap_stride, opts.threshold)?, gt)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_clip.into_iter().flatten().collect())
}

/// Metrics over every frame of `data`, broken down by action label.
pub fn evaluate_dataset<F: Float>(
    model: &ModelConfig,
    params: &ParamSet<F>,
    data: &Dataset,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::arg("evaluation dataset is empty"));
    }
    let rows = predict_dataset(model, params, data, opts)?;
    let scored: Vec<Scored<'_>> = rows
        .iter()
        .map(|(s, pred, gt)| Scored {
            action: &data.sequences[*s].action,
            pred,
            gt,
        })
        .collect();
    evaluate(&scored, &opts.metrics)
}

/// Reads `train.log` rows back as `(epoch, loss)` pairs.
pub fn read_loss_trace(path: &Path) -> Result<Vec<(usize, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        let parse = || -> Option<(usize, f64)> { Some((cols.first()?.parse().ok()?, cols.get(2)?.parse().ok()?)) };
        out.push(parse().ok_or_else(|| Error::format_at_line(i + 1, "malformed training log row"))?);
    }
    Ok(out)
}

/// Summary line for a finished run.
pub fn describe(outcome: &TrainOutcome) -> String {
    let mut s = String::new();
    if let Some(last) = outcome.records.last() {
        let _ = write!(s, "{} epochs, final loss {:.6e}, lr {:e}", outcome.records.len(), last.loss, outcome.checkpoint.optimizer.lr);
    }
    if outcome.stopped_by_schedule {
        s.push_str(", stopped by schedule");
    }
    s
}
