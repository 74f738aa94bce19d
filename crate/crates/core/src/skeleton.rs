//! BODY-25 pose types and OpenPose / JSONL ingestion.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of keypoints in the BODY-25 model.
pub const BODY25: usize = 25;
/// Keypoints 0..=8 (nose, neck, both arms, mid-hip) drive all downstream math.
pub const UPPER_BODY: usize = 9;
pub const NECK: usize = 1;

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("malformed json: {0}")]
    MalformedJson(String),
    #[error("frame has no person entry")]
    NoPerson,
    #[error("pose_keypoints_2d has {0} values, expected 75")]
    WrongArity(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("frame {index}")]
    Frame {
        index: usize,
        #[source]
        source: Box<SkeletonError>,
    },
    #[error("invalid sequence metadata: {0}")]
    InvalidMetadata(String),
    #[error("unknown gesture label {0:?}")]
    UnknownLabel(String),
}

impl SkeletonError {
    fn at(index: usize, err: SkeletonError) -> Self {
        SkeletonError::Frame {
            index,
            source: Box::new(err),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const MISSING: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        confidence: 0.0,
    };

    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Keypoint { x, y, confidence }
    }

    /// A keypoint with zero confidence was not detected; its coordinates carry no meaning.
    pub fn is_present(&self) -> bool {
        self.confidence > 0.0
    }

    pub fn xy(&self) -> Option<[f64; 2]> {
        self.is_present().then_some([self.x, self.y])
    }
}

/// One frame of BODY-25 keypoints, indexed by keypoint id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub keypoints: [Keypoint; BODY25],
}

impl Default for Pose {
    fn default() -> Self {
        Pose {
            keypoints: [Keypoint::MISSING; BODY25],
        }
    }
}

impl Pose {
    pub fn from_triples(values: &[f64]) -> Result<Self, SkeletonError> {
        if values.len() != BODY25 * 3 {
            return Err(SkeletonError::WrongArity(values.len()));
        }
        let mut pose = Pose::default();
        for (kp, triple) in pose.keypoints.iter_mut().zip(values.chunks_exact(3)) {
            *kp = Keypoint::new(triple[0], triple[1], triple[2]);
        }
        Ok(pose)
    }

    pub fn get(&self, index: usize) -> Option<[f64; 2]> {
        self.keypoints[index].xy()
    }
}

/// The closed gesture vocabulary, in class-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GestureLabel {
    RightHandLeftCircle,
    RightHandRightCircle,
    StandStill,
    LeftHandWave,
    RightHandWave,
    CallToPass,
    LeftHandRightCircle,
    LeftHandLeftCircle,
}

impl GestureLabel {
    pub const COUNT: usize = 8;

    pub const ALL: [GestureLabel; 8] = [
        GestureLabel::RightHandLeftCircle,
        GestureLabel::RightHandRightCircle,
        GestureLabel::StandStill,
        GestureLabel::LeftHandWave,
        GestureLabel::RightHandWave,
        GestureLabel::CallToPass,
        GestureLabel::LeftHandRightCircle,
        GestureLabel::LeftHandLeftCircle,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GestureLabel::RightHandLeftCircle => "RightHandLeftCircle",
            GestureLabel::RightHandRightCircle => "RightHandRightCircle",
            GestureLabel::StandStill => "StandStill",
            GestureLabel::LeftHandWave => "LeftHandWave",
            GestureLabel::RightHandWave => "RightHandWave",
            GestureLabel::CallToPass => "CallToPass",
            GestureLabel::LeftHandRightCircle => "LeftHandRightCircle",
            GestureLabel::LeftHandLeftCircle => "LeftHandLeftCircle",
        }
    }

    pub fn is_cyclic(self) -> bool {
        self != GestureLabel::StandStill
    }
}

impl fmt::Display for GestureLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GestureLabel {
    type Err = SkeletonError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| SkeletonError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub frames: Vec<Pose>,
    pub fps: f64,
    pub label: Option<GestureLabel>,
    /// Signed view angle in degrees, 0 = frontal.
    pub view_angle_deg: Option<f64>,
}

impl Sequence {
    pub fn new(frames: Vec<Pose>, fps: f64) -> Result<Self, SkeletonError> {
        if frames.is_empty() {
            return Err(SkeletonError::InvalidMetadata(
                "sequence has no frames".into(),
            ));
        }
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(SkeletonError::InvalidMetadata(format!(
                "fps must be positive, got {fps}"
            )));
        }
        Ok(Sequence {
            frames,
            fps,
            label: None,
            view_angle_deg: None,
        })
    }

    pub fn with_label(mut self, label: GestureLabel) -> Self {
        self.label = Some(label);
        self
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Deserialize)]
struct OpenPoseDocument {
    people: Vec<OpenPosePerson>,
}

#[derive(Deserialize)]
struct OpenPosePerson {
    pose_keypoints_2d: Vec<f64>,
}

/// Parses one OpenPose per-frame output document and returns the first person's pose.
pub fn parse_openpose_frame(json_text: &str) -> Result<Pose, SkeletonError> {
    let doc: OpenPoseDocument =
        serde_json::from_str(json_text).map_err(|e| SkeletonError::MalformedJson(e.to_string()))?;
    let count = doc.people.len();
    let person = doc
        .people
        .into_iter()
        .next()
        .ok_or(SkeletonError::NoPerson)?;
    if count > 1 {
        log::warn!("frame contains {count} people; using the first entry");
    }
    Pose::from_triples(&person.pose_keypoints_2d)
}

/// Loads a directory of per-frame OpenPose JSON files (sorted by file name) or a
/// JSONL file holding one OpenPose document per line.
pub fn load_sequence(path: &Path, fps: f64) -> Result<Sequence, SkeletonError> {
    let frames = if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "json"))
            .collect();
        files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
        files
            .iter()
            .enumerate()
            .map(|(i, file)| {
                let text = fs::read_to_string(file).map_err(|e| SkeletonError::at(i, e.into()))?;
                parse_openpose_frame(&text).map_err(|e| SkeletonError::at(i, e))
            })
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut frames = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let index = frames.len();
            frames.push(parse_openpose_frame(&line).map_err(|e| SkeletonError::at(index, e))?);
        }
        frames
    };
    if frames.is_empty() {
        return Err(io::Error::new(io::ErrorKind::NotFound, "no frames").into());
    }
    Sequence::new(frames, fps)
}

#[derive(Serialize, Deserialize)]
struct SequenceHeader {
    fps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<GestureLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    view_angle_deg: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct FrameLine {
    kp: Vec<[f64; 3]>,
}

impl From<&Pose> for FrameLine {
    fn from(pose: &Pose) -> Self {
        FrameLine {
            kp: pose
                .keypoints
                .iter()
                .map(|k| [k.x, k.y, k.confidence])
                .collect(),
        }
    }
}

/// Writes the JSONL sequence format: a metadata header line, then one `{"kp": [[x,y,c]; 25]}` per frame.
pub fn write_sequence_jsonl<W: Write>(seq: &Sequence, mut out: W) -> Result<(), SkeletonError> {
    let header = SequenceHeader {
        fps: seq.fps,
        label: seq.label,
        view_angle_deg: seq.view_angle_deg,
    };
    let encode = |e: serde_json::Error| SkeletonError::MalformedJson(e.to_string());
    writeln!(out, "{}", serde_json::to_string(&header).map_err(encode)?)?;
    for pose in &seq.frames {
        writeln!(
            out,
            "{}",
            serde_json::to_string(&FrameLine::from(pose)).map_err(encode)?
        )?;
    }
    Ok(())
}

pub fn read_sequence_jsonl<R: BufRead>(input: R) -> Result<Sequence, SkeletonError> {
    let mut lines = input.lines();
    let header_line = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "no frames").into()),
        }
    };
    let header: SequenceHeader = serde_json::from_str(&header_line)
        .map_err(|e| SkeletonError::InvalidMetadata(e.to_string()))?;
    let mut frames = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let index = frames.len();
        let parsed: FrameLine = serde_json::from_str(&line)
            .map_err(|e| SkeletonError::at(index, SkeletonError::MalformedJson(e.to_string())))?;
        let flat: Vec<f64> = parsed.kp.iter().flatten().copied().collect();
        frames.push(Pose::from_triples(&flat).map_err(|e| SkeletonError::at(index, e))?);
    }
    if frames.is_empty() {
        return Err(io::Error::new(io::ErrorKind::UnexpectedEof, "no frames").into());
    }
    let mut seq = Sequence::new(frames, header.fps)?;
    seq.label = header.label;
    seq.view_angle_deg = header.view_angle_deg;
    Ok(seq)
}

pub fn save_sequence(seq: &Sequence, path: &Path) -> Result<(), SkeletonError> {
    let mut file = io::BufWriter::new(fs::File::create(path)?);
    write_sequence_jsonl(seq, &mut file)?;
    file.flush()?;
    Ok(())
}

pub fn open_sequence(path: &Path) -> Result<Sequence, SkeletonError> {
    read_sequence_jsonl(BufReader::new(fs::File::open(path)?))
}

/// Lists the `*.jsonl` sequence files in a dataset directory, sorted by file name.
pub fn list_sequence_files(dir: &Path) -> Result<Vec<std::path::PathBuf>, SkeletonError> {
    let mut files: Vec<_> = fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|ext| ext == "jsonl"))
        .collect();
    files.sort();
    Ok(files)
}
