//! View-angle augmentation and speed resampling.
//!
//! Rotation lifts the arm keypoints (2..=7) to pseudo-3D using a per-gesture depth
//! row, rotates about the vertical axis through the neck, and projects back
//! orthographically by dropping z. Depths are fractions of the frame's shoulder
//! width (distance between keypoints 2 and 5).
//!
//! Sign convention: a positive angle turns the subject so that keypoint 2's
//! shoulder moves toward the camera.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::skeleton::{GestureLabel, Keypoint, Pose, Sequence, BODY25, NECK};

pub const DEPTH_KEYPOINTS: std::ops::RangeInclusive<usize> = 2..=7;

/// Speed ratios used throughout the speed-sensitivity experiments.
pub const SPEED_RATIOS: [f64; 7] = [0.5, 0.75, 0.9, 1.0, 1.1, 1.3, 2.0];

const DEFAULT_DEPTH_TABLE: &str = include_str!("../data/depth_table.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugmentError {
    #[error("keypoint {0} is missing")]
    MissingKeypoint(usize),
    #[error("sequence has no label or the depth table has no row for it")]
    UnknownLabel,
    #[error("frame {index}")]
    Frame {
        index: usize,
        #[source]
        source: Box<AugmentError>,
    },
    #[error("need at least 2 frames to resample, got {0}")]
    TooShort(usize),
    #[error("speed ratio must be positive, got {0}")]
    NonPositiveRatio(f64),
    #[error("rotation angle {0} exceeds ±90 degrees")]
    InvalidAngle(f64),
    #[error("depth table line {line}: {message}")]
    DepthTable { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRow {
    pub depths: [f64; 6],
    /// True when the row is a tool default rather than a reference estimate.
    pub authored: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthTable {
    rows: BTreeMap<GestureLabel, DepthRow>,
}

impl Default for DepthTable {
    fn default() -> Self {
        Self::parse(DEFAULT_DEPTH_TABLE).expect("bundled depth table is valid")
    }
}

impl DepthTable {
    pub fn parse(text: &str) -> Result<Self, AugmentError> {
        let mut rows = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let err = |message: String| AugmentError::DepthTable {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let label: GestureLabel = fields
                .next()
                .unwrap_or_default()
                .parse()
                .map_err(|e| err(format!("{e}")))?;
            let rest: Vec<&str> = fields.collect();
            let (numbers, authored) = match rest.as_slice() {
                [nums @ .., "authored"] => (nums, true),
                nums => (nums, false),
            };
            if numbers.len() != 6 {
                return Err(err(format!("expected 6 depths, found {}", numbers.len())));
            }
            let mut depths = [0.0f64; 6];
            for (d, s) in depths.iter_mut().zip(numbers) {
                *d = s.parse().map_err(|_| err(format!("not a number: {s:?}")))?;
                if !d.is_finite() {
                    return Err(err(format!("non-finite depth {s:?}")));
                }
            }
            if rows.insert(label, DepthRow { depths, authored }).is_some() {
                return Err(err(format!("duplicate row for {label}")));
            }
        }
        if let Some(missing) = GestureLabel::ALL.iter().find(|l| !rows.contains_key(l)) {
            return Err(AugmentError::DepthTable {
                line: 0,
                message: format!("no row for {missing}"),
            });
        }
        Ok(DepthTable { rows })
    }

    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let text = std::fs::read_to_string(path).map_err(|e| AugmentError::DepthTable {
            line: 0,
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, label: GestureLabel) -> Option<&DepthRow> {
        self.rows.get(&label)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# label  KP2 KP3 KP4 KP5 KP6 KP7\n");
        for (label, row) in &self.rows {
            let _ = write!(out, "{label:<22}");
            for d in row.depths {
                let _ = write!(out, " {d}");
            }
            out.push_str(if row.authored { " authored\n" } else { "\n" });
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationSpec {
    angle_deg: f64,
}

impl RotationSpec {
    pub fn new(angle_deg: f64) -> Result<Self, AugmentError> {
        if angle_deg.is_nan() || angle_deg.abs() > 90.0 {
            return Err(AugmentError::InvalidAngle(angle_deg));
        }
        Ok(RotationSpec { angle_deg })
    }

    pub fn angle_deg(&self) -> f64 {
        self.angle_deg
    }
}

/// Neck-relative pseudo-3D points for every present keypoint.
/// Keypoints outside 2..=7 sit at depth 0.
pub fn lift(pose: &Pose, depths: &[f64; 6]) -> Result<[Option<[f64; 3]>; BODY25], AugmentError> {
    let [nx, ny] = pose.get(NECK).ok_or(AugmentError::MissingKeypoint(NECK))?;
    for i in DEPTH_KEYPOINTS {
        if !pose.keypoints[i].is_present() {
            return Err(AugmentError::MissingKeypoint(i));
        }
    }
    let (l, r) = (pose.keypoints[2], pose.keypoints[5]);
    let shoulder_width = (l.x - r.x).hypot(l.y - r.y);
    Ok(std::array::from_fn(|i| {
        pose.get(i).map(|[x, y]| {
            let z = if DEPTH_KEYPOINTS.contains(&i) {
                depths[i - 2] * shoulder_width
            } else {
                0.0
            };
            [x - nx, y - ny, z]
        })
    }))
}

/// Rotation about the vertical (y) axis. y is never touched.
pub fn rotate_vertical(p: [f64; 3], angle_rad: f64) -> [f64; 3] {
    let (s, c) = angle_rad.sin_cos();
    [p[0] * c - p[2] * s, p[1], p[0] * s + p[2] * c]
}

pub fn rotate_pose(
    pose: &Pose,
    depths: &[f64; 6],
    spec: RotationSpec,
) -> Result<Pose, AugmentError> {
    let lifted = lift(pose, depths)?;
    let theta = spec.angle_deg.to_radians();
    let nx = pose.keypoints[NECK].x;
    let mut out = pose.clone();
    for (kp, p) in out.keypoints.iter_mut().zip(lifted.iter()) {
        if let Some(p) = p {
            let [x, _, _] = rotate_vertical(*p, theta);
            // y is carried over from the input untouched
            kp.x = nx + x;
        }
    }
    Ok(out)
}

pub fn rotate_sequence(
    seq: &Sequence,
    table: &DepthTable,
    spec: RotationSpec,
) -> Result<Sequence, AugmentError> {
    let label = seq.label.ok_or(AugmentError::UnknownLabel)?;
    let row = table.get(label).ok_or(AugmentError::UnknownLabel)?;
    let frames = seq
        .frames
        .iter()
        .enumerate()
        .map(|(index, pose)| {
            rotate_pose(pose, &row.depths, spec).map_err(|e| AugmentError::Frame {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sequence {
        frames,
        fps: seq.fps,
        label: seq.label,
        view_angle_deg: Some(spec.angle_deg),
    })
}

/// Frame count after resampling by `ratio`: round-half-away-from-zero, at least 2.
pub fn resampled_len(len: usize, ratio: f64) -> usize {
    ((len as f64 / ratio).round() as usize).max(2)
}

/// Simulates execution at `ratio` × the recorded speed by linear interpolation between frames.
pub fn resample_speed(seq: &Sequence, ratio: f64) -> Result<Sequence, AugmentError> {
    if !(ratio > 0.0 && ratio.is_finite()) {
        return Err(AugmentError::NonPositiveRatio(ratio));
    }
    let len = seq.frames.len();
    if len < 2 {
        return Err(AugmentError::TooShort(len));
    }
    let out_len = resampled_len(len, ratio);
    let span = (len - 1) as u64;
    let steps = (out_len - 1) as u64;
    let frames = (0..out_len as u64)
        .map(|j| {
            // source position j·(len−1)/(out_len−1), split exactly into integer and fractional parts
            let num = j * span;
            let base = (num / steps) as usize;
            let rem = num % steps;
            if rem == 0 {
                return seq.frames[base].clone();
            }
            let frac = rem as f64 / steps as f64;
            interpolate(&seq.frames[base], &seq.frames[base + 1], frac)
        })
        .collect();
    Ok(Sequence {
        frames,
        fps: seq.fps,
        label: seq.label,
        view_angle_deg: seq.view_angle_deg,
    })
}

fn interpolate(a: &Pose, b: &Pose, frac: f64) -> Pose {
    let mut out = Pose::default();
    for ((o, ka), kb) in out.keypoints.iter_mut().zip(&a.keypoints).zip(&b.keypoints) {
        if ka.is_present() && kb.is_present() {
            *o = Keypoint::new(
                ka.x + frac * (kb.x - ka.x),
                ka.y + frac * (kb.y - ka.y),
                ka.confidence.min(kb.confidence),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_pose() -> Pose {
        let mut pose = Pose::default();
        let pts = [
            (0, 100.0, 40.0),
            (1, 100.0, 60.0),
            (2, 80.0, 60.0),
            (3, 70.0, 80.0),
            (4, 75.0, 100.0),
            (5, 120.0, 60.0),
            (6, 128.0, 80.0),
            (7, 126.0, 100.0),
            (8, 100.0, 120.0),
        ];
        for (i, x, y) in pts {
            pose.keypoints[i] = Keypoint::new(x, y, 0.9);
        }
        pose
    }

    #[test]
    fn bundled_table_has_reference_rows() {
        let table = DepthTable::default();
        let still = table.get(GestureLabel::StandStill).unwrap();
        assert_eq!(still.depths, [0.0, 0.1, -0.1, 0.0, 0.1, -0.1]);
        assert!(!still.authored);
        assert_eq!(
            table.get(GestureLabel::LeftHandWave).unwrap().depths,
            [0.0, -0.4, -0.4, 0.0, 0.1, -0.1]
        );
        assert_eq!(
            table.get(GestureLabel::LeftHandLeftCircle).unwrap().depths,
            [0.0, -0.1, -0.1, 0.0, 0.1, -0.1]
        );
        assert!(table.get(GestureLabel::CallToPass).unwrap().authored);
        assert_eq!(DepthTable::parse(&table.render()).unwrap(), table);
    }

    #[test]
    fn table_errors() {
        assert!(matches!(
            DepthTable::parse("StandStill 0 0 0\n"),
            Err(AugmentError::DepthTable { line: 1, .. })
        ));
        assert!(DepthTable::parse("StandStill 0 0 0 0 0 0\n").is_err());
    }

    #[test]
    fn zero_rotation_is_identity() {
        let pose = test_pose();
        let out = rotate_pose(
            &pose,
            &[0.0, 0.1, -0.1, 0.0, 0.1, -0.1],
            RotationSpec::new(0.0).unwrap(),
        )
        .unwrap();
        for (a, b) in pose.keypoints.iter().zip(&out.keypoints) {
            assert!((a.x - b.x).abs() < 1e-12);
            assert_eq!(a.y, b.y);
            assert_eq!(a.confidence, b.confidence);
        }
    }

    #[test]
    fn quarter_turn_collapses_in_plane_point() {
        let p = rotate_vertical([1.0, 0.3, 0.0], 90f64.to_radians());
        assert!(p[0].abs() < 1e-15);
        assert_eq!(p[1], 0.3);
    }

    #[test]
    fn missing_arm_keypoint_is_error() {
        let mut pose = test_pose();
        pose.keypoints[6].confidence = 0.0;
        assert_eq!(
            rotate_pose(&pose, &[0.0; 6], RotationSpec::new(15.0).unwrap()),
            Err(AugmentError::MissingKeypoint(6))
        );
        assert_eq!(
            RotationSpec::new(91.0),
            Err(AugmentError::InvalidAngle(91.0))
        );
    }

    #[test]
    fn inverse_rotation_recovers_lifted_points() {
        let lifted = lift(&test_pose(), &[0.0, 0.1, -0.1, 0.0, -0.4, 0.3]).unwrap();
        for theta in [-1.2, -0.3, 0.5, 1.5] {
            for p in lifted.iter().flatten() {
                let back = rotate_vertical(rotate_vertical(*p, theta), -theta);
                assert!((back[0] - p[0]).abs() < 1e-9);
                assert!((back[2] - p[2]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resample_two_frames_at_half_speed() {
        let a = test_pose();
        let mut b = test_pose();
        for k in b.keypoints.iter_mut() {
            k.x += 30.0;
            k.y -= 9.0;
            k.confidence = 0.6;
        }
        let seq = Sequence::new(vec![a.clone(), b.clone()], 30.0).unwrap();
        let out = resample_speed(&seq, 0.5).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(out.frames[0], a);
        assert_eq!(out.frames[3], b);
        let k1 = out.frames[1].keypoints[3];
        assert!((k1.x - (a.keypoints[3].x + 10.0)).abs() < 1e-12);
        assert!((k1.y - (a.keypoints[3].y - 3.0)).abs() < 1e-12);
        assert_eq!(k1.confidence, 0.6);
        let k2 = out.frames[2].keypoints[3];
        assert!((k2.x - (a.keypoints[3].x + 20.0)).abs() < 1e-12);
        // keypoints absent in both endpoints stay absent
        assert!(!out.frames[1].keypoints[20].is_present());
    }

    #[test]
    fn resample_errors_and_identity() {
        let seq = Sequence::new(vec![test_pose()], 30.0).unwrap();
        assert_eq!(resample_speed(&seq, 1.0), Err(AugmentError::TooShort(1)));
        let seq = Sequence::new(vec![test_pose(); 5], 30.0).unwrap();
        assert_eq!(
            resample_speed(&seq, 0.0),
            Err(AugmentError::NonPositiveRatio(0.0))
        );
        assert_eq!(resample_speed(&seq, 1.0).unwrap(), seq);
        assert_eq!(resampled_len(50, 2.0), 25);
        assert_eq!(resampled_len(5, 0.4), 13);
        assert_eq!(resampled_len(3, 10.0), 2);
    }

    #[test]
    fn missing_neighbour_makes_output_missing() {
        let a = test_pose();
        let mut b = test_pose();
        b.keypoints[4].confidence = 0.0;
        let seq = Sequence::new(vec![a, b], 30.0).unwrap();
        let out = resample_speed(&seq, 0.5).unwrap();
        assert!(!out.frames[1].keypoints[4].is_present());
        assert!(out.frames[1].keypoints[3].is_present());
    }
}
