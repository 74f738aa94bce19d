//! Execution-speed estimate for cyclic gestures.
//!
//! Each cyclic gesture has a start pose that its motion keeps returning to. The
//! distance of every frame in a window from that pose dips once per cycle, so the
//! gap between the first two local minima of the distance series is the period.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{encode_pose, Encoding, FeatureError, FeatureVector};
use crate::skeleton::GestureLabel;
use crate::synth::{generate, SynthConfig};

pub const DEFAULT_RADIUS: usize = 2;

#[derive(Debug, Error)]
pub enum SpeedError {
    #[error("feature encoding {got} does not match the start positions' {expected}")]
    EncodingMismatch { expected: Encoding, got: Encoding },
    #[error("frame {index} has {got} features, reference has {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("series of {len} values is too short for radius {radius}")]
    TooShort { len: usize, radius: usize },
    #[error("{0} has no start position")]
    NotCyclic(GestureLabel),
    #[error("found {found} local minima, need 2")]
    InsufficientMinima { found: usize },
    #[error("radius must be at least 1")]
    ZeroRadius,
    #[error("fps {0} must be positive")]
    InvalidFps(f64),
    #[error("start position file: {0}")]
    File(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartPositionTable {
    pub encoding: Encoding,
    pub positions: BTreeMap<GestureLabel, Vec<f64>>,
}

impl StartPositionTable {
    /// The first noise-free frame of every cyclic gesture from the synthetic generator.
    pub fn synthetic(encoding: Encoding) -> Result<Self, SpeedError> {
        let mut positions = BTreeMap::new();
        for gesture in GestureLabel::ALL.into_iter().filter(|g| g.is_cyclic()) {
            let seq = generate(&SynthConfig {
                gesture,
                n_frames: 1,
                ..SynthConfig::default()
            })
            .expect("default synth config is valid");
            positions.insert(gesture, encode_pose(&seq.frames[0], encoding)?.values);
        }
        Ok(StartPositionTable {
            encoding,
            positions,
        })
    }

    pub fn reference(&self, label: GestureLabel) -> Result<FeatureVector, SpeedError> {
        let values = self
            .positions
            .get(&label)
            .ok_or(SpeedError::NotCyclic(label))?;
        Ok(FeatureVector {
            values: values.clone(),
            encoding: self.encoding,
        })
    }

    pub fn load(path: &Path) -> Result<Self, SpeedError> {
        let table: StartPositionTable = serde_json::from_str(&fs::read_to_string(path)?)
            .map_err(|e| SpeedError::File(e.to_string()))?;
        for (label, v) in &table.positions {
            if v.len() != table.encoding.dim() {
                return Err(SpeedError::File(format!(
                    "{label} has {} values, {} needs {}",
                    v.len(),
                    table.encoding,
                    table.encoding.dim()
                )));
            }
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<(), SpeedError> {
        let json =
            serde_json::to_string_pretty(self).map_err(|e| SpeedError::File(e.to_string()))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedEstimate {
    pub period_frames: usize,
    pub cycles_per_second: f64,
    /// Window indices of the minima that define the period.
    pub minima_indices: Vec<usize>,
}

/// Euclidean distance of every frame from `reference`.
///
/// Unsigned joint angles can repeat within one cycle (a circling arm passes through
/// mirror-image poses), so angle-encoded series may dip more than once per period.
pub fn distance_series(
    window: &[FeatureVector],
    reference: &FeatureVector,
) -> Result<Vec<f64>, SpeedError> {
    window
        .iter()
        .enumerate()
        .map(|(index, fv)| {
            if fv.encoding != reference.encoding {
                return Err(SpeedError::EncodingMismatch {
                    expected: reference.encoding,
                    got: fv.encoding,
                });
            }
            if fv.len() != reference.len() {
                return Err(SpeedError::LengthMismatch {
                    index,
                    expected: reference.len(),
                    got: fv.len(),
                });
            }
            Ok(fv
                .values
                .iter()
                .zip(&reference.values)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt())
        })
        .collect()
}

/// Indices that are no larger than every value within `radius` and smaller than at
/// least one of them. A run of equal qualifying values reports only its first index.
pub fn local_minima(series: &[f64], radius: usize) -> Result<Vec<usize>, SpeedError> {
    if radius == 0 {
        return Err(SpeedError::ZeroRadius);
    }
    if series.len() <= 2 * radius {
        return Err(SpeedError::TooShort {
            len: series.len(),
            radius,
        });
    }
    let qualifies = |i: usize| {
        let hood = &series[i - radius..=i + radius];
        hood.iter().all(|&v| series[i] <= v) && hood.iter().any(|&v| series[i] < v)
    };
    let mut out: Vec<usize> = Vec::new();
    for i in radius..series.len() - radius {
        if !qualifies(i) {
            continue;
        }
        if out.last() == Some(&(i - 1)) && series[i - 1] == series[i] {
            continue;
        }
        // also collapse plateaus whose first member was skipped for lack of a strict neighbour
        if i > radius
            && series[i - 1] == series[i]
            && out
                .last()
                .is_some_and(|&j| series[j..i].iter().all(|&v| v == series[i]))
        {
            continue;
        }
        out.push(i);
    }
    Ok(out)
}

pub fn estimate_speed(
    window: &[FeatureVector],
    label: GestureLabel,
    table: &StartPositionTable,
    fps: f64,
    radius: usize,
) -> Result<SpeedEstimate, SpeedError> {
    if !(fps > 0.0 && fps.is_finite()) {
        return Err(SpeedError::InvalidFps(fps));
    }
    let reference = table.reference(label)?;
    let series = distance_series(window, &reference)?;
    let minima = local_minima(&series, radius)?;
    if minima.len() < 2 {
        return Err(SpeedError::InsufficientMinima {
            found: minima.len(),
        });
    }
    let period_frames = minima[1] - minima[0];
    Ok(SpeedEstimate {
        period_frames,
        cycles_per_second: fps / period_frames as f64,
        minima_indices: minima[..2].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::encode_sequence;
    use GestureLabel::*;

    #[test]
    fn minima_examples() {
        assert_eq!(
            local_minima(&[5., 3., 4., 2., 6., 2., 5.], 1).unwrap(),
            vec![1, 3, 5]
        );
        assert!(local_minima(&[1., 2., 3., 4., 5.], 1).unwrap().is_empty());
        assert!(local_minima(&[2.; 6], 2).unwrap().is_empty());
        assert_eq!(local_minima(&[5., 3., 3., 3., 5.], 1).unwrap(), vec![1]);
        assert!(matches!(
            local_minima(&[0.; 10], 5),
            Err(SpeedError::TooShort { len: 10, radius: 5 })
        ));
    }

    #[test]
    fn distances() {
        let r = FeatureVector {
            values: vec![0.0, 0.0],
            encoding: Encoding::Angle,
        };
        let w = vec![
            FeatureVector {
                values: vec![1.0, 0.0],
                encoding: Encoding::Angle,
            },
            r.clone(),
        ];
        assert_eq!(distance_series(&w, &r).unwrap(), vec![1.0, 0.0]);
        let wrong = FeatureVector {
            values: vec![0.0, 0.0],
            encoding: Encoding::Coordinate,
        };
        assert!(matches!(
            distance_series(&[wrong], &r),
            Err(SpeedError::EncodingMismatch { .. })
        ));
        let short = FeatureVector {
            values: vec![0.0],
            encoding: Encoding::Angle,
        };
        assert!(matches!(
            distance_series(&[short], &r),
            Err(SpeedError::LengthMismatch { index: 0, .. })
        ));
    }

    #[test]
    fn circle_period() {
        // unsigned joint angles revisit the start values mid-cycle, so only coordinates are checked
        let encoding = Encoding::Coordinate;
        let table = StartPositionTable::synthetic(encoding).unwrap();
        assert!(!table.positions.contains_key(&StandStill));
        let seq = generate(&SynthConfig {
            gesture: RightHandRightCircle,
            n_frames: 100,
            ..SynthConfig::default()
        })
        .unwrap();
        let frames = encode_sequence(&seq, encoding).unwrap();
        let est =
            estimate_speed(&frames, RightHandRightCircle, &table, 30.0, DEFAULT_RADIUS).unwrap();
        assert_eq!(est.period_frames, 30);
        assert!((est.cycles_per_second - 1.0).abs() < 1e-12);
        assert!(matches!(
            estimate_speed(&frames, StandStill, &table, 30.0, 2),
            Err(SpeedError::NotCyclic(StandStill))
        ));
    }

    #[test]
    fn table_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("start.json");
        let table = StartPositionTable::synthetic(Encoding::Angle).unwrap();
        table.save(&path).unwrap();
        assert_eq!(StartPositionTable::load(&path).unwrap(), table);
        fs::write(
            &path,
            r#"{"encoding":"angle","positions":{"CallToPass":[1.0]}}"#,
        )
        .unwrap();
        assert!(StartPositionTable::load(&path).is_err());
    }
}
