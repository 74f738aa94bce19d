use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};

use gesture_pipe::augment::{resample_speed, rotate_sequence, DepthTable, RotationSpec};
use gesture_pipe::eval::{evaluate, windows_from_sequences, ConfusionMatrix, EvalSample};
use gesture_pipe::features::encode_pose;
use gesture_pipe::nn::{
    io as weights_io, train_split, ModelConfig, NnError, Sample, Split, TrainOptions,
};
use gesture_pipe::par::Exec;
use gesture_pipe::recognizer::{WindowConfig, WindowState};
use gesture_pipe::skeleton::{
    list_sequence_files, load_sequence, open_sequence, save_sequence, GestureLabel, Sequence,
};
use gesture_pipe::speed::{estimate_speed, StartPositionTable};
use gesture_pipe::synth::{generate_dataset, Jitter, SynthConfig};

use crate::manifest::Run;
use crate::{AugmentArgs, EvalArgs, IngestArgs, SpeedArgs, StreamArgs, SynthArgs, TrainArgs};

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type CmdResult<T = ()> = Result<T, Failure>;

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 2,
        error: error.into(),
    }
}

fn data(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: 3,
        error: error.into(),
    }
}

fn model(error: NnError) -> Failure {
    match error {
        NnError::NonFiniteGradient => Failure {
            code: 4,
            error: error.into(),
        },
        NnError::InvalidConfig(_) => usage(error),
        _ => data(error),
    }
}

trait Tag<T> {
    fn or_usage(self) -> CmdResult<T>;
    fn or_data(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn or_usage(self) -> CmdResult<T> {
        self.map_err(usage)
    }

    fn or_data(self) -> CmdResult<T> {
        self.map_err(data)
    }
}

fn range<T: Copy + PartialOrd + std::fmt::Debug>(flag: &str, values: &[T]) -> CmdResult<(T, T)> {
    match values {
        [lo, hi] if lo <= hi => Ok((*lo, *hi)),
        _ => Err(usage(anyhow!("--{flag} takes MIN,MAX, got {values:?}"))),
    }
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .or_data()
}

/// Directory that holds a file output, for the manifest.
fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> CmdResult {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .or_data()
}

/// Labelled sequences of a dataset directory, sorted by file name.
fn load_dataset(dir: &Path) -> CmdResult<Vec<(PathBuf, Sequence)>> {
    let files = list_sequence_files(dir)
        .with_context(|| format!("listing {}", dir.display()))
        .or_data()?;
    if files.is_empty() {
        return Err(data(anyhow!(
            "no .jsonl sequence files in {}",
            dir.display()
        )));
    }
    files
        .into_iter()
        .map(|path| {
            let seq = open_sequence(&path)
                .with_context(|| format!("reading {}", path.display()))
                .or_data()?;
            if seq.label.is_none() {
                return Err(data(anyhow!("{} has no label", path.display())));
            }
            Ok((path, seq))
        })
        .collect()
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Dataset name of a file: its stem up to any `__` suffix added by `augment`.
fn source_name(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.split("__").next().unwrap_or_default().to_string()
}

fn depth_table(path: &Option<PathBuf>) -> CmdResult<DepthTable> {
    match path {
        Some(p) => DepthTable::load(p)
            .with_context(|| format!("depth table {}", p.display()))
            .or_data(),
        None => Ok(DepthTable::default()),
    }
}

pub fn synth(a: &SynthArgs) -> CmdResult {
    let mut run = Run::start("synth");
    let base = SynthConfig {
        n_frames: a.n_frames,
        fps: a.fps,
        drop_prob: a.drop_prob,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let jitter = Jitter {
        period_frames: range("period", &a.period)?,
        subject_scale: range("scale", &a.scale)?,
        offset_x: range("offset-x", &a.offset_x)?,
        offset_y: range("offset-y", &a.offset_y)?,
        noise_frac: range("noise", &a.noise)?,
        random_phase: !a.fixed_phase,
    };
    let seqs = generate_dataset(a.per_class, &base, &jitter).or_usage()?;
    create_dir(&a.out)?;
    for (i, seq) in seqs.iter().enumerate() {
        let label = seq.label.expect("generated sequences are labelled");
        let path = a.out.join(format!("{i:04}_{label}.jsonl"));
        save_sequence(seq, &path)
            .with_context(|| format!("writing {}", path.display()))
            .or_data()?;
        run.outputs.push(path);
    }
    println!("wrote {} sequences to {}", seqs.len(), a.out.display());
    run.seeds.insert("seed", a.seed);
    run.finish(&a.out, a).or_data()
}

pub fn ingest(a: &IngestArgs) -> CmdResult {
    let mut run = Run::start("ingest");
    let mut seq = load_sequence(&a.input, a.fps)
        .with_context(|| format!("loading {}", a.input.display()))
        .or_data()?;
    seq.label = a.label;
    seq.view_angle_deg = a.view_angle;
    let dir = parent_dir(&a.out);
    create_dir(&dir)?;
    save_sequence(&seq, &a.out)
        .with_context(|| format!("writing {}", a.out.display()))
        .or_data()?;
    println!("{} frames -> {}", seq.len(), a.out.display());
    run.inputs.push(a.input.clone());
    run.outputs.push(a.out.clone());
    run.finish(&dir, a).or_data()
}

pub fn augment(a: &AugmentArgs) -> CmdResult {
    let mut run = Run::start("augment");
    if a.angles.is_empty() && a.speed_ratios.is_empty() {
        return Err(usage(anyhow!("give --angles and/or --speed-ratios")));
    }
    let mut angles: Vec<RotationSpec> = Vec::new();
    for &deg in &a.angles {
        angles.push(RotationSpec::new(deg).or_usage()?);
        if a.both_sides && deg != 0.0 {
            angles.push(RotationSpec::new(-deg).or_usage()?);
        }
    }
    if let Some(r) = a
        .speed_ratios
        .iter()
        .find(|r| !(**r > 0.0 && r.is_finite()))
    {
        return Err(usage(anyhow!("speed ratio {r} must be positive")));
    }
    let table = depth_table(&a.depth_table)?;
    let inputs: Vec<(PathBuf, Sequence)> = if a.input.is_dir() {
        load_dataset(&a.input)?
    } else {
        let seq = open_sequence(&a.input)
            .with_context(|| format!("reading {}", a.input.display()))
            .or_data()?;
        vec![(a.input.clone(), seq)]
    };
    create_dir(&a.out)?;
    let stem = |p: &Path| {
        p.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    };
    let mut written = 0;
    for (path, seq) in &inputs {
        for spec in &angles {
            let rotated = rotate_sequence(seq, &table, *spec)
                .with_context(|| format!("rotating {}", path.display()))
                .or_data()?;
            let out = a
                .out
                .join(format!("{}__rot{:+}.jsonl", stem(path), spec.angle_deg()));
            save_sequence(&rotated, &out).or_data()?;
            run.outputs.push(out);
            written += 1;
        }
        for &ratio in &a.speed_ratios {
            let resampled = resample_speed(seq, ratio)
                .with_context(|| format!("resampling {}", path.display()))
                .or_data()?;
            let out = a.out.join(format!("{}__speed{ratio}.jsonl", stem(path)));
            save_sequence(&resampled, &out).or_data()?;
            run.outputs.push(out);
            written += 1;
        }
        run.inputs.push(path.clone());
    }
    println!("wrote {written} sequences to {}", a.out.display());
    run.finish(&a.out, a).or_data()
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    train: Vec<String>,
    val: Vec<String>,
    test: Vec<String>,
}

fn to_samples(windows: &[EvalSample]) -> Vec<Sample> {
    windows.iter().map(EvalSample::to_sample).collect()
}

pub fn train(a: &TrainArgs) -> CmdResult {
    let mut run = Run::start("train");
    if a.window < 2 || a.epochs == 0 {
        return Err(usage(anyhow!(
            "--window must be at least 2 and --epochs at least 1"
        )));
    }
    let specs: Vec<RotationSpec> = a
        .augment_angles
        .iter()
        .map(|&d| RotationSpec::new(d).or_usage())
        .collect::<CmdResult<_>>()?;
    let table = depth_table(&a.depth_table)?;
    let dataset = load_dataset(&a.data)?;
    let labels: Vec<usize> = dataset
        .iter()
        .map(|(_, s)| s.label.unwrap().index())
        .collect();
    let split = Split::stratified(&labels, a.split_seed);

    let exec = Exec::default();
    let pick = |idx: &[usize]| -> CmdResult<Vec<Sequence>> {
        let mut out: Vec<Sequence> = idx.iter().map(|&i| dataset[i].1.clone()).collect();
        for spec in &specs {
            for &i in idx {
                let (path, seq) = &dataset[i];
                out.push(
                    rotate_sequence(seq, &table, *spec)
                        .with_context(|| format!("rotating {}", path.display()))
                        .or_data()?,
                );
            }
        }
        Ok(out)
    };
    let windows =
        |seqs: &[Sequence]| windows_from_sequences(seqs, a.encoding, a.window, exec).or_data();
    let train_set = to_samples(&windows(&pick(&split.train)?)?);
    let val_set = to_samples(&windows(&pick(&split.val)?)?);
    let test_seqs: Vec<Sequence> = split.test.iter().map(|&i| dataset[i].1.clone()).collect();
    let test_windows = windows(&test_seqs)?;

    let config = ModelConfig::standard(a.encoding.dim(), GestureLabel::COUNT, a.seed);
    let opts = TrainOptions {
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        split_seed: a.split_seed,
        stop_at_perfect_validation: a.stop_at_perfect_validation,
        exec,
    };
    let report = train_split(&train_set, &val_set, config, a.encoding, &opts).map_err(model)?;

    create_dir(&a.out)?;
    let weights = a.out.join("weights.bin");
    weights_io::save_weights(&report.params, &weights).map_err(model)?;
    let history = a.out.join("history.csv");
    write_file(&history, report.history_csv().as_bytes())?;
    let names = |idx: &[usize]| idx.iter().map(|&i| file_name(&dataset[i].0)).collect();
    let split_file = SplitFile {
        train: names(&split.train),
        val: names(&split.val),
        test: names(&split.test),
    };
    let split_path = a.out.join("split.json");
    write_file(
        &split_path,
        (serde_json::to_string_pretty(&split_file).or_data()? + "\n").as_bytes(),
    )?;

    let best = &report.history[report.best_epoch - 1];
    println!(
        "best epoch {} of {}: validation accuracy {:.4}",
        report.best_epoch,
        report.history.len(),
        best.val_accuracy
    );
    if !test_windows.is_empty() {
        let cm = evaluate(&report.params.network, &test_windows, exec).or_data()?;
        println!(
            "held-out test accuracy {:.4} ({} sequences)",
            cm.accuracy(),
            cm.total()
        );
    }
    run.inputs.push(a.data.clone());
    run.outputs.extend([weights, history, split_path]);
    run.seeds.insert("seed", a.seed);
    run.seeds.insert("split_seed", a.split_seed);
    run.finish(&a.out, a).or_data()
}

pub fn eval(a: &EvalArgs) -> CmdResult {
    let mut run = Run::start("eval");
    if !(a.speed_ratio > 0.0 && a.speed_ratio.is_finite())
        || a.base_fps.is_nan()
        || a.base_fps <= 0.0
        || a.window < 2
    {
        return Err(usage(anyhow!(
            "--speed-ratio and --base-fps must be positive, --window at least 2"
        )));
    }
    let params = weights_io::load_weights(&a.weights, a.encoding)
        .with_context(|| format!("loading {}", a.weights.display()))
        .or_data()?;
    let mut dataset = load_dataset(&a.data)?;
    if let Some(split_path) = &a.split {
        let text = fs::read_to_string(split_path)
            .with_context(|| format!("reading {}", split_path.display()))
            .or_data()?;
        let split: SplitFile = serde_json::from_str(&text).or_data()?;
        let keep: BTreeSet<String> = split
            .test
            .iter()
            .map(|n| source_name(Path::new(n)))
            .collect();
        dataset.retain(|(p, _)| keep.contains(&source_name(p)));
        if dataset.is_empty() {
            return Err(data(anyhow!(
                "no files in {} belong to the test split",
                a.data.display()
            )));
        }
        run.inputs.push(split_path.clone());
    }
    let exec = Exec::default();
    let mut samples = Vec::with_capacity(dataset.len());
    for (path, seq) in &dataset {
        let seq = if a.speed_ratio == 1.0 {
            seq.clone()
        } else {
            resample_speed(seq, a.speed_ratio)
                .with_context(|| format!("resampling {}", path.display()))
                .or_data()?
        };
        let window = WindowConfig {
            base_len: a.window,
            base_fps: a.base_fps,
            fps: seq.fps,
            speed_ratio: a.speed_ratio,
            ..WindowConfig::default()
        }
        .effective_window();
        let mut s =
            windows_from_sequences(std::slice::from_ref(&seq), params.encoding, window, exec)
                .with_context(|| path.display().to_string())
                .or_data()?;
        samples.append(&mut s);
    }
    let cm: ConfusionMatrix = evaluate(&params.network, &samples, exec).or_data()?;
    print!("{}", cm.render_text());
    println!();
    print!("{}", cm.per_class_text());
    if let Some(out) = &a.out {
        create_dir(out)?;
        let files = [
            ("confusion.csv", cm.to_csv()),
            ("confusion.txt", cm.render_text()),
            ("per_class.csv", cm.per_class_text()),
        ];
        for (name, body) in files {
            let path = out.join(name);
            write_file(&path, body.as_bytes())?;
            run.outputs.push(path);
        }
        run.inputs.extend([a.weights.clone(), a.data.clone()]);
        run.finish(out, a).or_data()?;
    }
    Ok(())
}

pub fn stream(a: &StreamArgs) -> CmdResult {
    let mut run = Run::start("stream");
    let params = weights_io::load_weights(&a.weights, None)
        .with_context(|| format!("loading {}", a.weights.display()))
        .or_data()?;
    let seq = open_sequence(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .or_data()?;
    let config = WindowConfig {
        base_len: a.base_len,
        base_fps: a.base_fps,
        fps: a.fps.unwrap_or(seq.fps),
        speed_ratio: a.speed_ratio,
        vote_n: a.vote_n,
        retention: a.retention,
    };
    let mut state = WindowState::new(&config).or_usage()?;
    let frame_time = Duration::from_secs_f64(1.0 / config.fps);
    let started = Instant::now();
    let mut lines = String::from("frame_index,raw,smoothed,confidence\n");
    print!("{lines}");
    for (i, pose) in seq.frames.iter().enumerate() {
        if a.realtime {
            let due = frame_time * i as u32;
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                std::thread::sleep(wait);
            }
        }
        let fv = encode_pose(pose, params.encoding)
            .with_context(|| format!("frame {i}"))
            .or_data()?;
        if let Some(e) = state.push_frame(fv, &params).or_data()? {
            let line = format!(
                "{},{},{},{}\n",
                e.frame_index, e.raw, e.smoothed, e.confidence
            );
            print!("{line}");
            let _ = std::io::stdout().flush();
            lines.push_str(&line);
        }
    }
    if seq.len() < state.capacity() {
        log::warn!(
            "stream of {} frames never filled the {}-frame window",
            seq.len(),
            state.capacity()
        );
    }
    if let Some(out) = &a.out {
        let dir = parent_dir(out);
        create_dir(&dir)?;
        write_file(out, lines.as_bytes())?;
        run.inputs.extend([a.weights.clone(), a.input.clone()]);
        run.outputs.push(out.clone());
        run.finish(&dir, a).or_data()?;
    }
    Ok(())
}

pub fn speed(a: &SpeedArgs) -> CmdResult {
    let mut run = Run::start("speed");
    let table = match &a.start_positions {
        Some(p) => StartPositionTable::load(p)
            .with_context(|| format!("start positions {}", p.display()))
            .or_data()?,
        None => StartPositionTable::synthetic(a.encoding).or_data()?,
    };
    let seq = open_sequence(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))
        .or_data()?;
    let frames = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, p)| encode_pose(p, table.encoding).with_context(|| format!("frame {i}")))
        .collect::<Result<Vec<_>, _>>()
        .or_data()?;
    let fps = a.fps.unwrap_or(seq.fps);
    let est = estimate_speed(&frames, a.label, &table, fps, a.radius).or_data()?;
    println!("period_frames {}", est.period_frames);
    println!("cycles_per_second {}", est.cycles_per_second);
    println!(
        "minima {}",
        est.minima_indices
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    if let Some(out) = &a.out {
        let dir = parent_dir(out);
        create_dir(&dir)?;
        write_file(
            out,
            (serde_json::to_string_pretty(&est).or_data()? + "\n").as_bytes(),
        )?;
        run.inputs.push(a.input.clone());
        run.outputs.push(out.clone());
        run.finish(&dir, a).or_data()?;
    }
    Ok(())
}
