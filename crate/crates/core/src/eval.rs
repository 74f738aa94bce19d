//! Confusion matrices over (true label, view angle) rows.

use std::fmt::Write as _;

use ndarray::Array2;
use thiserror::Error;

use crate::features::{encode_frames, window_matrix, Encoding, FeatureError};
use crate::nn::{predict_all, Network, NnError, Sample};
use crate::par::Exec;
use crate::skeleton::{GestureLabel, Sequence};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("sequence {index} has no label")]
    Unlabelled { index: usize },
    #[error("sequence {index} has {len} frames, window needs {needed}")]
    TooShort {
        index: usize,
        len: usize,
        needed: usize,
    },
    #[error("model predicted class {0}, which has no gesture label")]
    UnknownClass(usize),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] NnError),
}

/// A labelled window tagged with the view angle it was recorded or rotated at.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSample {
    pub window: Array2<f64>,
    pub label: GestureLabel,
    pub view_angle_deg: f64,
}

/// Encodes the first `window` frames of every sequence.
pub fn windows_from_sequences(
    seqs: &[Sequence],
    encoding: Encoding,
    window: usize,
    exec: Exec,
) -> Result<Vec<EvalSample>, EvalError> {
    seqs.iter()
        .enumerate()
        .map(|(index, seq)| {
            let label = seq.label.ok_or(EvalError::Unlabelled { index })?;
            if seq.len() < window {
                return Err(EvalError::TooShort {
                    index,
                    len: seq.len(),
                    needed: window,
                });
            }
            let fvs = encode_frames(&seq.frames[..window], encoding, exec)?;
            Ok(EvalSample {
                window: window_matrix(&fvs),
                label,
                view_angle_deg: seq.view_angle_deg.unwrap_or(0.0),
            })
        })
        .collect()
}

impl EvalSample {
    pub fn to_sample(&self) -> Sample {
        Sample {
            window: self.window.clone(),
            label: self.label.index(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionRow {
    pub label: GestureLabel,
    pub view_angle_deg: f64,
    pub counts: [usize; GestureLabel::COUNT],
}

impl ConfusionRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn correct(&self) -> usize {
        self.counts[self.label.index()]
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfusionMatrix {
    /// Sorted by view angle, then label order.
    pub rows: Vec<ConfusionRow>,
}

impl ConfusionMatrix {
    pub fn record(&mut self, label: GestureLabel, view_angle_deg: f64, predicted: GestureLabel) {
        let pos = self
            .rows
            .iter()
            .position(|r| r.label == label && r.view_angle_deg == view_angle_deg);
        let row = match pos {
            Some(i) => &mut self.rows[i],
            None => {
                self.rows.push(ConfusionRow {
                    label,
                    view_angle_deg,
                    counts: [0; GestureLabel::COUNT],
                });
                self.rows.sort_by(|a, b| {
                    a.view_angle_deg
                        .total_cmp(&b.view_angle_deg)
                        .then(a.label.cmp(&b.label))
                });
                self.rows
                    .iter_mut()
                    .find(|r| r.label == label && r.view_angle_deg == view_angle_deg)
                    .expect("just inserted")
            }
        };
        row.counts[predicted.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.rows.iter().map(ConfusionRow::total).sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = self.rows.iter().map(ConfusionRow::correct).sum();
        correct as f64 / self.total() as f64
    }

    fn accuracy_where(&self, keep: impl Fn(&ConfusionRow) -> bool) -> Option<f64> {
        let (c, t) = self
            .rows
            .iter()
            .filter(|r| keep(r))
            .fold((0, 0), |(c, t), r| (c + r.correct(), t + r.total()));
        (t > 0).then(|| c as f64 / t as f64)
    }

    pub fn class_accuracy(&self, label: GestureLabel) -> Option<f64> {
        self.accuracy_where(|r| r.label == label)
    }

    pub fn angle_accuracy(&self, view_angle_deg: f64) -> Option<f64> {
        self.accuracy_where(|r| r.view_angle_deg == view_angle_deg)
    }

    /// Distinct view angles in ascending order.
    pub fn angles(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.rows.iter().map(|r| r.view_angle_deg).collect();
        out.dedup();
        out
    }

    /// One line per row; cells are the share of that row's samples given each prediction.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_label,view_angle_deg,count");
        for l in GestureLabel::ALL {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.label, r.view_angle_deg, r.total());
            for c in r.counts {
                let _ = write!(out, ",{}", c as f64 / r.total() as f64);
            }
            out.push('\n');
        }
        out
    }

    /// Aligned grid of row rates, columns abbreviated to the label initials.
    pub fn render_text(&self) -> String {
        let abbrev = |l: GestureLabel| -> String {
            l.as_str()
                .chars()
                .filter(|c| c.is_ascii_uppercase())
                .collect()
        };
        let name_w = GestureLabel::ALL
            .iter()
            .map(|l| l.as_str().len())
            .max()
            .unwrap_or(0);
        let mut out = format!("{:<name_w$} {:>7}", "true \\ predicted", "angle");
        for l in GestureLabel::ALL {
            let _ = write!(out, " {:>6}", abbrev(l));
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:<name_w$} {:>7.1}",
                r.label.as_str(),
                r.view_angle_deg
            );
            for c in r.counts {
                let _ = write!(out, " {:>6.3}", c as f64 / r.total() as f64);
            }
            out.push('\n');
        }
        out
    }

    pub fn per_class_text(&self) -> String {
        let mut out = String::from("class,accuracy\n");
        for l in GestureLabel::ALL {
            if let Some(a) = self.class_accuracy(l) {
                let _ = writeln!(out, "{l},{a:.4}");
            }
        }
        let _ = writeln!(out, "overall,{:.4}", self.accuracy());
        out
    }
}

pub fn evaluate(
    net: &Network,
    samples: &[EvalSample],
    exec: Exec,
) -> Result<ConfusionMatrix, EvalError> {
    let plain: Vec<Sample> = samples.iter().map(EvalSample::to_sample).collect();
    let predicted = predict_all(net, &plain, exec)?;
    let mut cm = ConfusionMatrix::default();
    for (s, p) in samples.iter().zip(predicted) {
        let p = GestureLabel::from_index(p).ok_or(EvalError::UnknownClass(p))?;
        cm.record(s.label, s.view_angle_deg, p);
    }
    Ok(cm)
}
