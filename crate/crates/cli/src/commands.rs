use std::fs;
use std::path::Path;
use std::process::ExitCode;

use evpose::events::{
    event_centroid, read_events, slice_packets, stream_to_frames, CropTransform, EventStream,
};
use evpose::metrics::decode;
use evpose::ndgrad::fault::inject_sign_flip;
use evpose::ndgrad::suite::{op_suite, SUITE_TOLERANCE};
use evpose::ndgrad::OpKind;
use evpose::pose::{write_poses, Pose};
use evpose::posenet::{export_attention, full_model_grad_check, predict, Variant};
use evpose::trainer::{
    evaluate_dataset, extract_clip, labelled_bones, run, AugClip, Checkpoint, ClipRef, Dataset, EvalOptions,
    Trainer,
};
use evpose::{Error, Result};

use crate::config::{io_err, RunConfig};
use crate::image::{save_gray, Rgb};
use crate::{ConvertArgs, EvalArgs, GradcheckArgs, InferArgs, PlotArgs, SynthArgs, TrainArgs};

fn located(path: &Path, e: Error) -> Error {
    match e {
        Error::Format { location, message } => Error::Format {
            location: format!("{}, {location}", path.display()),
            message,
        },
        e => e,
    }
}

fn load_events(path: &Path) -> Result<EventStream> {
    read_events(path).map_err(|e| located(path, e))
}

fn load_checkpoint(path: &Path, expected: Option<&evpose::posenet::ModelConfig>) -> Result<Checkpoint> {
    Checkpoint::load(path, expected).map_err(|e| located(path, e))
}

pub fn synth(a: SynthArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    let d = &mut cfg.dataset;
    if let Some(n) = a.sequences {
        d.sequences = n;
    }
    if let Some(s) = a.seed {
        d.seed = s;
    }
    if let Some(f) = a.static_fraction {
        d.static_fraction = f;
    }
    if let Some(f) = a.figure {
        d.figure = f;
    }
    if let Some(ms) = a.duration_ms {
        d.sim.duration_us = ms * 1000;
    }
    if let Some(w) = a.width {
        d.sim.width = w;
    }
    if let Some(h) = a.height {
        d.sim.height = h;
    }
    d.validate()?;
    let summary = evpose::synthgen::make_dataset(&a.out, d, a.force)?;
    let train = summary.entries.iter().filter(|e| e.split == "train").count();
    let with_static = summary.entries.iter().filter(|e| e.static_episodes > 0).count();
    println!(
        "wrote {} sequences ({train} train, {} test, {with_static} with static episodes), {} events",
        summary.entries.len(),
        summary.entries.len() - train,
        summary.total_events()
    );
    Ok(ExitCode::SUCCESS)
}

pub fn convert(a: ConvertArgs) -> Result<ExitCode> {
    if a.interval_us == 0 {
        return Err(Error::InvalidArgument("--interval-us must be positive".into()));
    }
    let stream = load_events(&a.events)?;
    let t0 = stream.events.first().map_or(0, |e| e.t);
    let seq = stream_to_frames(&stream, a.interval_us, t0, None).map_err(|e| located(&a.events, e))?;
    let packets = slice_packets(&stream, a.interval_us, t0, None)?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let mut raw = Vec::new();
    let mut index = String::from("frame\tt_start\tt_end\tevents\n");
    for (f, p) in seq.frames.iter().zip(&packets) {
        for v in &f.grid {
            raw.extend_from_slice(&v.to_le_bytes());
        }
        index.push_str(&format!("{}\t{}\t{}\t{}\n", p.index, p.t_start, p.t_end, p.events.len()));
    }
    let meta = serde_json::json!({
        "width": stream.width,
        "height": stream.height,
        "channels": 2,
        "frames": seq.frames.len(),
        "interval_us": a.interval_us,
        "t0": t0,
        "dtype": "f32le",
        "layout": "frame, channel (negative, positive), row, column",
    });
    let write = |name: &str, bytes: &[u8]| {
        let p = a.out.join(name);
        fs::write(&p, bytes).map_err(|e| io_err(&p, e))
    };
    write("frames.f32", &raw)?;
    write("index.tsv", index.as_bytes())?;
    write("frames.json", (serde_json::to_string_pretty(&meta).expect("json") + "\n").as_bytes())?;
    println!("{} frames of {}x{}", seq.frames.len(), stream.width, stream.height);
    Ok(ExitCode::SUCCESS)
}

pub fn train(a: TrainArgs) -> Result<ExitCode> {
    let mut cfg = RunConfig::load(a.config.as_deref())?;
    if let Some(v) = a.variant {
        cfg.model.variant = v;
    }
    if let Some(t) = a.t {
        cfg.train.clip_length = t;
        cfg.model.t_max = t;
    }
    if let Some(n) = a.epochs {
        cfg.train.epochs_max = n;
    }
    if let Some(lr) = a.lr {
        cfg.train.lr = lr;
    }
    if let Some(s) = a.seed {
        cfg.train.seed = s;
    }
    if let Some(b) = a.batch_size {
        cfg.train.batch_size = b;
    }
    let resume = match &a.resume {
        Some(p) => {
            let expected = a.config.as_ref().map(|_| &cfg.model);
            let ckpt = load_checkpoint(p, expected)?;
            cfg.model = ckpt.model.clone();
            Some(ckpt)
        }
        None => None,
    };
    cfg.validate()?;
    let data = Dataset::load(&a.data, Some("train"))?;
    let val = if a.val {
        Some(Dataset::load(&a.data, Some("test"))?)
    } else {
        None
    };
    cfg.echo(&a.out)?;
    let trainer = match resume {
        Some(ckpt) => Trainer::resume(ckpt, &cfg.train, &data)?,
        None => Trainer::new(&cfg.model, &cfg.train, &data)?,
    };
    println!(
        "training {} on {} sequences ({} clips of up to {} frames), {} parameters",
        cfg.model.variant,
        data.len(),
        trainer.clips().len(),
        cfg.train.clip_length,
        trainer.params.numel()
    );
    let outcome = run(trainer, Some(&a.out), val.as_ref())?;
    for r in &outcome.records {
        println!("{}", r.to_tsv());
    }
    println!("{}", evpose::trainer::describe(&outcome));
    Ok(ExitCode::SUCCESS)
}

pub fn eval(a: EvalArgs) -> Result<ExitCode> {
    let cfg = RunConfig::load(a.config.as_deref())?;
    let expected = a.config.as_ref().map(|_| &cfg.model);
    let ckpt = load_checkpoint(&a.checkpoint, expected)?;
    let data = Dataset::load(&a.data, Some(&a.split))?;
    if data.is_empty() {
        return Err(Error::InvalidArgument(format!("split `{}` is empty", a.split)));
    }
    let t = a.t.unwrap_or(ckpt.model.t_max.min(cfg.train.clip_length.max(1)));
    if t == 0 || t > ckpt.model.t_max {
        return Err(Error::InvalidArgument(format!(
            "--T {t} outside 1..={}",
            ckpt.model.t_max
        )));
    }
    let opts = EvalOptions {
        clip_length: t,
        metrics: cfg.metrics.clone(),
        ..EvalOptions::from(&cfg.train)
    };
    let report = evaluate_dataset(&ckpt.model, &ckpt.params, &data, &opts)?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let json = a.out.join("report.json");
    fs::write(&json, report.to_json() + "\n").map_err(|e| io_err(&json, e))?;
    let tsv = a.out.join("report.tsv");
    fs::write(&tsv, report.to_tsv()).map_err(|e| io_err(&tsv, e))?;
    print!("{}", report.to_tsv());
    Ok(ExitCode::SUCCESS)
}

pub fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    if let Some(name) = &a.inject_fault {
        let op = OpKind::from_name(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown operation `{name}`")))?;
        inject_sign_flip(Some(op));
    }
    let mut worst: f64 = 0.0;
    println!("check\trelative_error\tstatus");
    let mut report = |name: &str, err: f64| {
        let ok = err < SUITE_TOLERANCE;
        println!("{name}\t{err:.3e}\t{}", if ok { "ok" } else { "FAIL" });
        worst = if err.is_nan() { f64::INFINITY } else { worst.max(err) };
    };
    for (op, err) in op_suite(a.seed)? {
        report(op.name(), err);
    }
    if a.full_model {
        for v in Variant::ALL {
            report(&format!("model:{v}"), full_model_grad_check(v, a.seed)?);
        }
    }
    Ok(if worst < SUITE_TOLERANCE {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

pub fn infer(a: InferArgs) -> Result<ExitCode> {
    if a.interval_us == 0 || a.count_cap == 0 {
        return Err(Error::InvalidArgument("--interval-us and --count-cap must be positive".into()));
    }
    let ckpt = load_checkpoint(&a.checkpoint, None)?;
    let model = &ckpt.model;
    let t = a.t.unwrap_or(model.t_max);
    if t == 0 || t > model.t_max {
        return Err(Error::InvalidArgument(format!("--T {t} outside 1..={}", model.t_max)));
    }
    let stream = load_events(&a.events)?;
    let t_end = stream.events.last().map_or(0, |e| e.t + 1);
    let packets = slice_packets(&stream, a.interval_us, 0, Some(t_end))?;
    let mut poses = Vec::with_capacity(packets.len());
    for window in packets.chunks(t) {
        let events: Vec<_> = window.iter().flat_map(|p| p.events.iter().copied()).collect();
        let center = event_centroid(&events, usize::from(stream.width), usize::from(stream.height));
        let crop = CropTransform::centered(center, model.input_size)?;
        let clip = AugClip {
            events: events
                .iter()
                .map(|e| {
                    let mut p = e.to_point();
                    p.x -= crop.offset_x as f64;
                    p.y -= crop.offset_y as f64;
                    p
                })
                .collect(),
            poses: vec![Pose::from_joints(vec![]); window.len()],
            t0: window[0].t_start,
            interval: a.interval_us,
            width: model.input_size,
            height: model.input_size,
        };
        let frames = clip.rasterize(a.count_cap)?;
        for m in predict(model, &ckpt.params, &frames)? {
            let pose = decode(&m, model.heatmap_stride, evpose::metrics::DEFAULT_VISIBILITY_THRESHOLD)?;
            poses.push(crop.invert_pose(&pose));
        }
    }
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    write_poses(&poses, a.out.join("poses.jsonl"))?;
    println!("{} frames decoded", poses.len());
    Ok(ExitCode::SUCCESS)
}

pub fn plot(a: PlotArgs) -> Result<ExitCode> {
    if a.interval_us == 0 || a.count_cap == 0 {
        return Err(Error::InvalidArgument("--interval-us and --count-cap must be positive".into()));
    }
    let ckpt = load_checkpoint(&a.checkpoint, None)?;
    let model = &ckpt.model;
    if !a.attention.is_empty() && model.variant != Variant::DenseAtt {
        return Err(Error::InvalidState(format!(
            "--attention needs a dense_att checkpoint, this one is {}",
            model.variant
        )));
    }
    let data = Dataset::load(&a.data, None)?;
    let (index, seq) = data
        .sequences
        .iter()
        .enumerate()
        .find(|(_, s)| s.id == a.clip)
        .ok_or_else(|| Error::InvalidArgument(format!("no sequence `{}` in {}", a.clip, a.data.display())))?;
    let t = a.t.unwrap_or(model.t_max).min(model.t_max);
    if a.start >= seq.poses.len() || t == 0 {
        return Err(Error::InvalidArgument(format!(
            "--start {} outside the {} frames of sequence {}",
            a.start,
            seq.poses.len(),
            seq.id
        )));
    }
    let clip = ClipRef {
        sequence: index,
        start: a.start,
        len: t.min(seq.poses.len() - a.start),
    };
    let (aug, _) = extract_clip(seq, clip, model.input_size, a.interval_us)?;
    let frames = aug.rasterize(a.count_cap)?;
    let mut attention = Vec::new();
    for &(at, tau) in &a.attention {
        let maps = export_attention(model, &ckpt.params, &frames, (at, tau))?;
        attention.push((at, tau, maps));
    }
    let maps = predict(model, &ckpt.params, &frames)?;
    fs::create_dir_all(&a.out).map_err(|e| io_err(&a.out, e))?;
    let bones = labelled_bones(&seq.skeleton);
    let s = model.heatmap_size();
    for (i, (frame, m)) in frames.iter().zip(&maps).enumerate() {
        let pred = decode(m, model.heatmap_stride, evpose::metrics::DEFAULT_VISIBILITY_THRESHOLD)?;
        let mut img = Rgb::from_frame(frame);
        img.skeleton(&aug.poses[i], &bones, [0, 160, 255]);
        img.skeleton(&pred, &bones, [255, 64, 0]);
        img.save(&a.out.join(format!("overlay_{i:02}.ppm")))?;
        for k in 0..model.keypoints {
            let plane: Vec<f64> = m.data()[k * s * s..(k + 1) * s * s].iter().map(|&v| f64::from(v)).collect();
            save_gray(&a.out.join(format!("heatmap_{i:02}_k{k:02}.pgm")), s, s, &plane)?;
        }
    }
    for (at, tau, maps) in &attention {
        for k in 0..model.keypoints {
            let plane: Vec<f64> = maps.data()[k * s * s..(k + 1) * s * s].iter().map(|&v| f64::from(v)).collect();
            save_gray(&a.out.join(format!("attention_t{at:02}_tau{tau:02}_k{k:02}.pgm")), s, s, &plane)?;
        }
    }
    println!("wrote {} frames to {}", frames.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}
