//! Streaming sliding-window recognition with majority-vote smoothing.
//!
//! Frames are pushed one at a time. Once the window is full the model runs, and then
//! again every `ceil((1 − retention) · capacity)` frames, so each evaluation keeps
//! the newest `retention` share of the previous window. Raw predictions feed a vote
//! history of the last `vote_n` results; the emitted label is its mode.

use std::collections::VecDeque;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Encoding, FeatureVector};
use crate::nn::{argmax, softmax, ModelParams, NnError};
use crate::skeleton::GestureLabel;

#[derive(Debug, Error)]
pub enum RecognizerError {
    #[error("feature encoding {got} does not match the model's {expected}")]
    EncodingMismatch { expected: Encoding, got: Encoding },
    #[error("stream has {len} frames, window needs {needed}")]
    TooShort { len: usize, needed: usize },
    #[error("invalid window config: {0}")]
    InvalidConfig(String),
    #[error("model predicted class {0}, which has no gesture label")]
    UnknownClass(usize),
    #[error(transparent)]
    Model(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Window length at `base_fps` and normal speed.
    pub base_len: usize,
    pub base_fps: f64,
    /// Frame rate of the incoming stream.
    pub fps: f64,
    pub speed_ratio: f64,
    pub vote_n: usize,
    /// Fraction of the window kept between evaluations.
    pub retention: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            base_len: 50,
            base_fps: 30.0,
            fps: 30.0,
            speed_ratio: 1.0,
            vote_n: 5,
            retention: 0.5,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<(), RecognizerError> {
        let bad = |m: String| Err(RecognizerError::InvalidConfig(m));
        if self.base_len < 2 {
            return bad(format!("base_len {} < 2", self.base_len));
        }
        if !(self.base_fps > 0.0 && self.fps > 0.0 && self.speed_ratio > 0.0) {
            return bad("fps, base_fps and speed_ratio must be positive".into());
        }
        if self.vote_n == 0 {
            return bad("vote_n must be at least 1".into());
        }
        if !(self.retention > 0.0 && self.retention < 1.0) {
            return bad(format!("retention {} outside (0, 1)", self.retention));
        }
        Ok(())
    }

    /// Frames per evaluation window after FPS and speed adjustment.
    pub fn effective_window(&self) -> usize {
        ((self.base_len as f64 * (self.fps / self.base_fps) / self.speed_ratio).round() as usize)
            .max(2)
    }

    /// Frames between consecutive evaluations.
    pub fn stride(&self) -> usize {
        let raw = (1.0 - self.retention) * self.effective_window() as f64;
        // shave float noise such as 0.3 · 50 = 15.000000000000002
        ((raw - 1e-9).ceil() as usize).max(1)
    }
}

pub fn effective_window(config: &WindowConfig) -> usize {
    config.effective_window()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    /// Frames consumed so far, counting from 1; the first emission happens at `capacity`.
    pub frame_index: usize,
    pub raw: GestureLabel,
    pub smoothed: GestureLabel,
    /// Softmax probability of the raw label.
    pub confidence: f64,
}

/// Mode of `history`; ties go to the label seen most recently.
pub fn vote(history: &VecDeque<GestureLabel>) -> Option<GestureLabel> {
    let mut counts = [0usize; GestureLabel::COUNT];
    let mut last_seen = [0usize; GestureLabel::COUNT];
    for (pos, label) in history.iter().enumerate() {
        counts[label.index()] += 1;
        last_seen[label.index()] = pos;
    }
    history
        .iter()
        .copied()
        .max_by_key(|l| (counts[l.index()], last_seen[l.index()]))
}

#[derive(Debug, Clone)]
pub struct WindowState {
    capacity: usize,
    stride: usize,
    vote_n: usize,
    buffer: VecDeque<FeatureVector>,
    votes: VecDeque<GestureLabel>,
    frames_seen: usize,
    next_eval: usize,
    last: Option<GestureLabel>,
}

impl WindowState {
    pub fn new(config: &WindowConfig) -> Result<Self, RecognizerError> {
        config.validate()?;
        let capacity = config.effective_window();
        Ok(WindowState {
            capacity,
            stride: config.stride(),
            vote_n: config.vote_n,
            buffer: VecDeque::with_capacity(capacity),
            votes: VecDeque::with_capacity(config.vote_n),
            frames_seen: 0,
            next_eval: capacity,
            last: None,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.buffer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buffer.is_empty()
    }

    pub fn votes(&self) -> &VecDeque<GestureLabel> {
        &self.votes
    }

    pub fn last_emitted(&self) -> Option<GestureLabel> {
        self.last
    }

    /// Records a raw prediction and returns the smoothed label.
    pub fn record_vote(&mut self, raw: GestureLabel) -> GestureLabel {
        if self.votes.len() == self.vote_n {
            self.votes.pop_front();
        }
        self.votes.push_back(raw);
        let smoothed = vote(&self.votes).unwrap_or(raw);
        self.last = Some(smoothed);
        smoothed
    }

    pub fn push_frame(
        &mut self,
        fv: FeatureVector,
        params: &ModelParams,
    ) -> Result<Option<Emission>, RecognizerError> {
        if fv.encoding != params.encoding {
            return Err(RecognizerError::EncodingMismatch {
                expected: params.encoding,
                got: fv.encoding,
            });
        }
        if self.buffer.len() == self.capacity {
            self.buffer.pop_front();
        }
        self.buffer.push_back(fv);
        self.frames_seen += 1;
        if self.frames_seen < self.next_eval {
            return Ok(None);
        }
        self.next_eval += self.stride;

        let dim = self.buffer[0].len();
        let mut window = Array2::zeros((self.buffer.len(), dim));
        for (mut row, f) in window.rows_mut().into_iter().zip(&self.buffer) {
            row.assign(&ndarray::ArrayView1::from(&f.values[..]));
        }
        let logits = params.forward(window.view())?;
        let class = argmax(logits.view());
        let confidence = softmax(logits.view())[class];
        let raw = GestureLabel::from_index(class).ok_or(RecognizerError::UnknownClass(class))?;
        let smoothed = self.record_vote(raw);
        Ok(Some(Emission {
            frame_index: self.frames_seen,
            raw,
            smoothed,
            confidence,
        }))
    }
}

/// Offline replay: feeds `frames` through a fresh [`WindowState`] and collects every emission.
pub fn classify_sequence(
    frames: &[FeatureVector],
    params: &ModelParams,
    config: &WindowConfig,
) -> Result<Vec<Emission>, RecognizerError> {
    let mut state = WindowState::new(config)?;
    if frames.len() < state.capacity() {
        return Err(RecognizerError::TooShort {
            len: frames.len(),
            needed: state.capacity(),
        });
    }
    let mut out = Vec::new();
    for fv in frames {
        if let Some(e) = state.push_frame(fv.clone(), params)? {
            out.push(e);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;
    use GestureLabel::*;

    fn cfg(fps: f64, ratio: f64) -> WindowConfig {
        WindowConfig {
            fps,
            speed_ratio: ratio,
            ..WindowConfig::default()
        }
    }

    #[test]
    fn window_sizes() {
        assert_eq!(cfg(30.0, 0.5).effective_window(), 100);
        assert_eq!(cfg(30.0, 2.0).effective_window(), 25);
        assert_eq!(cfg(60.0, 1.0).effective_window(), 100);
        assert_eq!(cfg(30.0, 1.0).stride(), 25);
        let odd = WindowConfig {
            retention: 0.7,
            ..WindowConfig::default()
        };
        assert_eq!(odd.stride(), 15);
        assert_eq!(cfg(30.0, 100.0).effective_window(), 2);
    }

    #[test]
    fn invalid_configs() {
        for bad in [
            WindowConfig {
                base_len: 1,
                ..WindowConfig::default()
            },
            WindowConfig {
                retention: 1.0,
                ..WindowConfig::default()
            },
            WindowConfig {
                retention: 0.0,
                ..WindowConfig::default()
            },
            WindowConfig {
                vote_n: 0,
                ..WindowConfig::default()
            },
            WindowConfig {
                speed_ratio: 0.0,
                ..WindowConfig::default()
            },
        ] {
            assert!(WindowState::new(&bad).is_err());
        }
    }

    #[test]
    fn vote_majority_and_tie_break() {
        let h: VecDeque<_> = [StandStill, StandStill, CallToPass].into_iter().collect();
        assert_eq!(vote(&h), Some(StandStill));
        let h: VecDeque<_> = [StandStill, CallToPass].into_iter().collect();
        assert_eq!(vote(&h), Some(CallToPass));
        let h: VecDeque<_> = [LeftHandWave, CallToPass, CallToPass, LeftHandWave]
            .into_iter()
            .collect();
        assert_eq!(vote(&h), Some(LeftHandWave));
        assert_eq!(vote(&VecDeque::new()), None);
    }

    fn tiny_params() -> ModelParams {
        let config = ModelConfig {
            input_dim: 5,
            hidden_dims: [6, 6],
            gru_hidden: 4,
            head_dim: 4,
            output_dim: 8,
            seed: 3,
        };
        ModelParams::init(config, Encoding::Angle).unwrap()
    }

    fn fv(v: f64) -> FeatureVector {
        FeatureVector {
            values: vec![v; 5],
            encoding: Encoding::Angle,
        }
    }

    #[test]
    fn emission_cadence() {
        let params = tiny_params();
        let config = WindowConfig {
            base_len: 10,
            ..WindowConfig::default()
        };
        let mut state = WindowState::new(&config).unwrap();
        let mut emitted_at = Vec::new();
        for i in 0..40 {
            if let Some(e) = state.push_frame(fv(i as f64 * 0.01), &params).unwrap() {
                emitted_at.push(e.frame_index);
                assert!(e.confidence > 0.0 && e.confidence <= 1.0);
            }
            assert!(state.len() <= state.capacity());
            assert!(state.votes().len() <= config.vote_n);
        }
        assert_eq!(emitted_at, vec![10, 15, 20, 25, 30, 35, 40]);
    }

    #[test]
    fn encoding_mismatch_and_too_short() {
        let params = tiny_params();
        let mut state = WindowState::new(&WindowConfig::default()).unwrap();
        let wrong = FeatureVector {
            values: vec![0.0; 18],
            encoding: Encoding::Coordinate,
        };
        assert!(matches!(
            state.push_frame(wrong, &params),
            Err(RecognizerError::EncodingMismatch { .. })
        ));
        let frames: Vec<_> = (0..49).map(|_| fv(0.5)).collect();
        assert!(matches!(
            classify_sequence(&frames, &params, &WindowConfig::default()),
            Err(RecognizerError::TooShort {
                len: 49,
                needed: 50
            })
        ));
    }
}
