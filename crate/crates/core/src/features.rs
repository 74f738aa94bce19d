//! Per-frame feature encodings: normalized coordinates or normalized joint angles.

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{self, NormalizeError, NormalizedPose, Point};
use crate::par::Exec;
use crate::skeleton::{GestureLabel, Pose, Sequence, UPPER_BODY};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("keypoint {0} is missing")]
    MissingKeypoint(usize),
    #[error("zero-length ray at vertex")]
    ZeroLengthRay,
    #[error(transparent)]
    Normalize(#[from] NormalizeError),
    #[error("frame {index}")]
    Frame {
        index: usize,
        #[source]
        source: Box<FeatureError>,
    },
    #[error("unknown encoding {0:?} (expected coordinate or angle)")]
    UnknownEncoding(String),
    #[error("feature cache: {0}")]
    Cache(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Coordinate,
    Angle,
}

impl Encoding {
    pub fn dim(self) -> usize {
        match self {
            Encoding::Coordinate => 2 * UPPER_BODY,
            Encoding::Angle => ANGLE_SPEC.len(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Encoding::Coordinate => "coordinate",
            Encoding::Angle => "angle",
        }
    }
}

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Encoding {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coordinate" | "coord" | "coordinates" => Ok(Encoding::Coordinate),
            "angle" | "angles" => Ok(Encoding::Angle),
            other => Err(FeatureError::UnknownEncoding(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub encoding: Encoding,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Joint-angle triples `(a, vertex, b)` over BODY-25 ids.
pub const ANGLE_SPEC: [(usize, usize, usize); 5] =
    [(2, 3, 4), (5, 6, 7), (1, 2, 3), (1, 5, 6), (0, 1, 8)];

/// Display names for [`ANGLE_SPEC`] entries; they do not affect the computation.
pub const ANGLE_NAMES: [&str; 5] = [
    "left elbow",
    "right elbow",
    "left shoulder",
    "right shoulder",
    "neck",
];

pub fn encode_coordinates(np: &NormalizedPose) -> Result<FeatureVector, FeatureError> {
    let mut values = Vec::with_capacity(2 * UPPER_BODY);
    for i in 0..UPPER_BODY {
        let [x, y] = np.get(i).ok_or(FeatureError::MissingKeypoint(i))?;
        values.push(x);
        values.push(y);
    }
    Ok(FeatureVector {
        values,
        encoding: Encoding::Coordinate,
    })
}

/// Unsigned angle in degrees between the rays `vertex→a` and `vertex→b`.
pub fn angle_at(a: Point, vertex: Point, b: Point) -> Result<f64, FeatureError> {
    let u = [a[0] - vertex[0], a[1] - vertex[1]];
    let v = [b[0] - vertex[0], b[1] - vertex[1]];
    let nu = u[0].hypot(u[1]);
    let nv = v[0].hypot(v[1]);
    if !(nu > 0.0 && nv > 0.0) {
        return Err(FeatureError::ZeroLengthRay);
    }
    let cos = ((u[0] * v[0] + u[1] * v[1]) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Angles for [`ANGLE_SPEC`], each divided by 180 so the result lies in [0, 1].
pub fn encode_angles(points: &[Option<Point>; UPPER_BODY]) -> Result<FeatureVector, FeatureError> {
    let fetch = |i: usize| points[i].ok_or(FeatureError::MissingKeypoint(i));
    let values = ANGLE_SPEC
        .iter()
        .map(|&(a, v, b)| Ok(angle_at(fetch(a)?, fetch(v)?, fetch(b)?)? / 180.0))
        .collect::<Result<Vec<_>, FeatureError>>()?;
    Ok(FeatureVector {
        values,
        encoding: Encoding::Angle,
    })
}

/// Encodes one raw pose. Coordinates go through 1×1 normalization; angles are taken
/// from the neck-relative points without scaling, since anisotropic scaling bends angles.
pub fn encode_pose(pose: &Pose, encoding: Encoding) -> Result<FeatureVector, FeatureError> {
    match encoding {
        Encoding::Coordinate => encode_coordinates(&normalize::normalize_1x1(pose)?),
        Encoding::Angle => encode_angles(&normalize::neck_relative(pose)?),
    }
}

pub fn encode_frames(
    frames: &[Pose],
    encoding: Encoding,
    exec: Exec,
) -> Result<Vec<FeatureVector>, FeatureError> {
    exec.map_indexed(frames, |i, pose| {
        encode_pose(pose, encoding).map_err(|e| FeatureError::Frame {
            index: i,
            source: Box::new(e),
        })
    })
    .into_iter()
    .collect()
}

pub fn encode_sequence(
    seq: &Sequence,
    encoding: Encoding,
) -> Result<Vec<FeatureVector>, FeatureError> {
    encode_frames(&seq.frames, encoding, Exec::Sequential)
}

/// Stacks feature vectors into a `frames × dim` matrix.
pub fn window_matrix(frames: &[FeatureVector]) -> Array2<f64> {
    let dim = frames.first().map_or(0, |f| f.len());
    let mut out = Array2::zeros((frames.len(), dim));
    for (mut row, fv) in out.rows_mut().into_iter().zip(frames) {
        row.assign(&ndarray::ArrayView1::from(&fv.values[..]));
    }
    out
}

/// One cached training window: `{label, encoding, frames: [[f; d]; T]}` per JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub label: GestureLabel,
    pub encoding: Encoding,
    pub frames: Vec<Vec<f64>>,
}

impl WindowRecord {
    pub fn from_features(label: GestureLabel, frames: &[FeatureVector]) -> Option<Self> {
        let encoding = frames.first()?.encoding;
        Some(WindowRecord {
            label,
            encoding,
            frames: frames.iter().map(|f| f.values.clone()).collect(),
        })
    }

    pub fn matrix(&self) -> Array2<f64> {
        let dim = self.frames.first().map_or(0, Vec::len);
        Array2::from_shape_fn((self.frames.len(), dim), |(t, j)| self.frames[t][j])
    }
}

pub fn write_window_cache<W: Write>(records: &[WindowRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_window_cache<R: BufRead>(input: R) -> Result<Vec<WindowRecord>, FeatureError> {
    let mut records = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| FeatureError::Cache(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: WindowRecord = serde_json::from_str(&line)
            .map_err(|e| FeatureError::Cache(format!("line {}: {e}", i + 1)))?;
        if record
            .frames
            .iter()
            .any(|f| f.len() != record.encoding.dim())
        {
            return Err(FeatureError::Cache(format!(
                "line {}: wrong feature width",
                i + 1
            )));
        }
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_examples() {
        assert!((angle_at([1.0, 0.0], [0.0, 0.0], [0.0, 1.0]).unwrap() - 90.0).abs() < 1e-12);
        assert!((angle_at([1.0, 0.0], [0.0, 0.0], [-1.0, 0.0]).unwrap() - 180.0).abs() < 1e-12);
        assert_eq!(angle_at([1.0, 0.0], [0.0, 0.0], [2.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            angle_at([0.0, 0.0], [0.0, 0.0], [2.0, 0.0]),
            Err(FeatureError::ZeroLengthRay)
        );
    }

    fn arm_points(elbow_bend: bool) -> [Option<Point>; UPPER_BODY] {
        let mut pts = [None; UPPER_BODY];
        pts[0] = Some([0.0, -1.0]);
        pts[1] = Some([0.0, 0.0]);
        pts[2] = Some([-1.0, 0.0]);
        pts[3] = Some([-2.0, 0.0]);
        pts[4] = Some(if elbow_bend {
            [-2.0, -1.0]
        } else {
            [-3.0, 0.0]
        });
        pts[5] = Some([1.0, 0.0]);
        pts[6] = Some([1.0, 1.0]);
        pts[7] = Some([1.0, 2.0]);
        pts[8] = Some([0.0, 2.0]);
        pts
    }

    #[test]
    fn straight_and_right_angle_elbow() {
        let straight = encode_angles(&arm_points(false)).unwrap();
        assert!((straight.values[0] - 1.0).abs() < 1e-12);
        let bent = encode_angles(&arm_points(true)).unwrap();
        assert!((bent.values[0] - 0.5).abs() < 1e-12);
        // arm hanging straight down from a horizontal shoulder line
        assert!((bent.values[3] - 0.5).abs() < 1e-12);
        assert_eq!(bent.encoding, Encoding::Angle);
        assert_eq!(bent.len(), 5);
    }

    #[test]
    fn missing_keypoint_is_reported() {
        let mut pts = arm_points(false);
        pts[6] = None;
        assert_eq!(encode_angles(&pts), Err(FeatureError::MissingKeypoint(6)));
        let np = NormalizedPose {
            points: [[0.0; 2]; UPPER_BODY],
            present: [true, true, true, false, true, true, true, true, true],
        };
        assert_eq!(
            encode_coordinates(&np),
            Err(FeatureError::MissingKeypoint(3))
        );
    }

    #[test]
    fn coordinate_vector_layout() {
        let mut np = NormalizedPose {
            points: [[0.0; 2]; UPPER_BODY],
            present: [true; UPPER_BODY],
        };
        for i in 0..UPPER_BODY {
            np.points[i] = [i as f64, -(i as f64)];
        }
        np.points[1] = [0.0, 0.0];
        let fv = encode_coordinates(&np).unwrap();
        assert_eq!(fv.len(), 18);
        assert_eq!(&fv.values[2..4], &[0.0, 0.0]);
        assert_eq!(fv.values[16], 8.0);
        assert_eq!(fv.values[17], -8.0);
    }

    #[test]
    fn encoding_parse() {
        assert_eq!("Angle".parse::<Encoding>().unwrap(), Encoding::Angle);
        assert!("polar".parse::<Encoding>().is_err());
    }

    #[test]
    fn window_cache_round_trip() {
        let fv = |v: f64| FeatureVector {
            values: vec![v; 5],
            encoding: Encoding::Angle,
        };
        let rec =
            WindowRecord::from_features(GestureLabel::CallToPass, &[fv(0.25), fv(0.5)]).unwrap();
        let mut buf = Vec::new();
        write_window_cache(std::slice::from_ref(&rec), &mut buf).unwrap();
        let back = read_window_cache(&buf[..]).unwrap();
        assert_eq!(back, vec![rec.clone()]);
        assert_eq!(back[0].matrix().dim(), (2, 5));
    }
}
