//! 1×1 normalization of the upper body.
//!
//! The skeleton is translated so the neck sits at the origin, then x and y are
//! scaled independently so the bounding box of the present upper-body keypoints
//! (BODY-25 ids 0..=8) measures exactly 1 by 1.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::{Pose, NECK, UPPER_BODY};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum NormalizeError {
    #[error("neck keypoint (1) is missing")]
    MissingNeck,
    #[error("upper-body keypoints have zero {axis} extent")]
    DegenerateExtent { axis: char },
}

/// Upper-body keypoints after normalization. Coordinates of absent points are zero and meaningless.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPose {
    pub points: [Point; UPPER_BODY],
    pub present: [bool; UPPER_BODY],
}

impl NormalizedPose {
    pub fn get(&self, index: usize) -> Option<Point> {
        self.present[index].then_some(self.points[index])
    }

    pub fn as_options(&self) -> [Option<Point>; UPPER_BODY] {
        std::array::from_fn(|i| self.get(i))
    }

    /// Reinterprets normalized points as a pixel-space pose (confidence 1 where present).
    pub fn embed(&self) -> Pose {
        let mut pose = Pose::default();
        for i in 0..UPPER_BODY {
            if self.present[i] {
                let [x, y] = self.points[i];
                pose.keypoints[i] = crate::skeleton::Keypoint::new(x, y, 1.0);
            }
        }
        pose
    }
}

/// Upper-body points translated so the neck is at the origin. No scaling.
pub fn neck_relative(pose: &Pose) -> Result<[Option<Point>; UPPER_BODY], NormalizeError> {
    let [nx, ny] = pose.get(NECK).ok_or(NormalizeError::MissingNeck)?;
    Ok(std::array::from_fn(|i| {
        pose.get(i).map(|[x, y]| [x - nx, y - ny])
    }))
}

pub fn normalize_1x1(pose: &Pose) -> Result<NormalizedPose, NormalizeError> {
    let shifted = neck_relative(pose)?;
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for [x, y] in shifted.iter().flatten() {
        min_x = min_x.min(*x);
        max_x = max_x.max(*x);
        min_y = min_y.min(*y);
        max_y = max_y.max(*y);
    }
    let width = max_x - min_x;
    let height = max_y - min_y;
    if !(width > 0.0 && width.is_finite()) {
        return Err(NormalizeError::DegenerateExtent { axis: 'x' });
    }
    if !(height > 0.0 && height.is_finite()) {
        return Err(NormalizeError::DegenerateExtent { axis: 'y' });
    }
    let (sx, sy) = (1.0 / width, 1.0 / height);

    let mut out = NormalizedPose {
        points: [[0.0; 2]; UPPER_BODY],
        present: [false; UPPER_BODY],
    };
    for (i, p) in shifted.iter().enumerate() {
        if let Some([x, y]) = p {
            out.points[i] = [x * sx, y * sy];
            out.present[i] = true;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Keypoint;

    fn pose_from(points: &[(usize, f64, f64)]) -> Pose {
        let mut pose = Pose::default();
        for &(i, x, y) in points {
            pose.keypoints[i] = Keypoint::new(x, y, 1.0);
        }
        pose
    }

    #[test]
    fn hand_computed_three_points() {
        // neck (2,2), A (4,6) at id 3, B (0,0) at id 5
        let pose = pose_from(&[(1, 2.0, 2.0), (3, 4.0, 6.0), (5, 0.0, 0.0)]);
        let np = normalize_1x1(&pose).unwrap();
        assert_eq!(np.points[1], [0.0, 0.0]);
        assert!((np.points[3][0] - 0.5).abs() < 1e-15);
        assert!((np.points[3][1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((np.points[5][0] + 0.5).abs() < 1e-15);
        assert!((np.points[5][1] + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(np.present.iter().filter(|p| **p).count(), 3);
    }

    #[test]
    fn already_normalized_is_fixed_point() {
        let pose = pose_from(&[
            (0, 0.0, -0.25),
            (1, 0.0, 0.0),
            (2, -0.5, 0.0),
            (5, 0.5, 0.0),
            (8, 0.1, 0.75),
        ]);
        let np = normalize_1x1(&pose).unwrap();
        for i in [0, 1, 2, 5, 8] {
            let [x, y] = pose.get(i).unwrap();
            assert!((np.points[i][0] - x).abs() < 1e-12);
            assert!((np.points[i][1] - y).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_line_is_degenerate() {
        let pts: Vec<_> = (0..9).map(|i| (i, 5.0, i as f64 * 10.0)).collect();
        assert_eq!(
            normalize_1x1(&pose_from(&pts)),
            Err(NormalizeError::DegenerateExtent { axis: 'x' })
        );
    }

    #[test]
    fn missing_neck() {
        let pose = pose_from(&[(0, 1.0, 1.0), (2, 3.0, 4.0)]);
        assert_eq!(normalize_1x1(&pose), Err(NormalizeError::MissingNeck));
    }

    #[test]
    fn lower_body_does_not_affect_extent() {
        let mut pose = pose_from(&[(1, 0.0, 0.0), (2, -1.0, 0.0), (5, 1.0, 0.0), (8, 0.0, 3.0)]);
        let before = normalize_1x1(&pose).unwrap();
        pose.keypoints[11] = Keypoint::new(50.0, 90.0, 1.0);
        assert_eq!(normalize_1x1(&pose).unwrap(), before);
    }
}
