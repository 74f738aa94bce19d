//! Parametric generator of labelled keypoint sequences for the eight gestures.
//!
//! Geometry is orthographic and expressed in shoulder widths around the neck, with
//! y pointing down as in image coordinates. Keypoints 2..=4 form the arm on the
//! image-left side, 5..=7 the arm on the image-right side; gesture names follow the
//! keypoint triples (the "left" arm is 2..=4). Each arm is a two-bone chain whose
//! elbow is placed by inverse kinematics, bending away from the body.
//!
//! Screen orientation: "clockwise" is clockwise as seen in the image.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par::Exec;
use crate::skeleton::{GestureLabel, Keypoint, Pose, Sequence, BODY25};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synth config: {0}")]
    InvalidConfig(String),
}

/// Upper-arm length in shoulder widths.
pub const UPPER_ARM: f64 = 0.7;
/// Forearm length in shoulder widths.
pub const FOREARM: f64 = 0.6;
/// Radius of the wrist circle, centred on the shoulder.
pub const CIRCLE_RADIUS: f64 = 0.6;
/// Vertical amplitude of a wave.
pub const WAVE_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub gesture: GestureLabel,
    pub n_frames: usize,
    pub fps: f64,
    /// Cycle length of cyclic gestures.
    pub period_frames: usize,
    /// Gaussian noise per coordinate per frame, pixels.
    pub noise_sigma: f64,
    /// Shoulder width, pixels.
    pub subject_scale: f64,
    /// Neck position, pixels.
    pub offset: [f64; 2],
    pub seed: u64,
    /// Cycle position of frame 0, as a fraction of a period.
    #[serde(default)]
    pub phase: f64,
    /// Probability of zeroing each keypoint's confidence in each frame.
    #[serde(default)]
    pub drop_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            gesture: GestureLabel::StandStill,
            n_frames: 50,
            fps: 30.0,
            period_frames: 30,
            noise_sigma: 0.0,
            subject_scale: 100.0,
            offset: [320.0, 180.0],
            seed: 0,
            phase: 0.0,
            drop_prob: 0.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidConfig(m));
        if self.n_frames == 0 {
            return bad("n_frames must be positive".into());
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return bad(format!("fps {} must be positive", self.fps));
        }
        if self.gesture.is_cyclic() && self.period_frames < 4 {
            return bad(format!("period_frames {} < 4", self.period_frames));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma {} must be non-negative",
                self.noise_sigma
            ));
        }
        if !(self.subject_scale > 0.0 && self.subject_scale.is_finite()) {
            return bad(format!(
                "subject_scale {} must be positive",
                self.subject_scale
            ));
        }
        if !self.offset.iter().all(|v| v.is_finite()) || !self.phase.is_finite() {
            return bad("offset and phase must be finite".into());
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return bad(format!("drop_prob {} outside [0, 1)", self.drop_prob));
        }
        Ok(())
    }
}

type P = [f64; 2];

/// Rest positions (shoulder widths, neck-relative) of the keypoints that never move.
const BODY_REST: [(usize, P); 21] = [
    (0, [0.0, -0.55]),
    (1, [0.0, 0.0]),
    (2, [-0.5, 0.0]),
    (5, [0.5, 0.0]),
    (8, [0.0, 1.6]),
    (9, [-0.25, 1.6]),
    (10, [-0.27, 2.4]),
    (11, [-0.28, 3.2]),
    (12, [0.25, 1.6]),
    (13, [0.27, 2.4]),
    (14, [0.28, 3.2]),
    (15, [-0.08, -0.63]),
    (16, [0.08, -0.63]),
    (17, [-0.17, -0.58]),
    (18, [0.17, -0.58]),
    (19, [0.33, 3.35]),
    (20, [0.4, 3.32]),
    (21, [0.27, 3.25]),
    (22, [-0.33, 3.35]),
    (23, [-0.4, 3.32]),
    (24, [-0.27, 3.25]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// Keypoints 2..=4, image-left.
    Left,
    /// Keypoints 5..=7, image-right.
    Right,
}

impl Side {
    fn shoulder(self) -> P {
        match self {
            Side::Left => [-0.5, 0.0],
            Side::Right => [0.5, 0.0],
        }
    }

    /// +1 when "away from the body" is +x.
    fn outward(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }

    fn ids(self) -> (usize, usize) {
        match self {
            Side::Left => (3, 4),
            Side::Right => (6, 7),
        }
    }
}

/// Elbow position for a two-bone chain reaching from `shoulder` to `wrist`, bent on
/// the side given by `bend` (+1 rotates the shoulder→wrist direction clockwise on screen).
pub fn two_bone_ik(shoulder: P, wrist: P, upper: f64, fore: f64, bend: f64) -> P {
    let d = [wrist[0] - shoulder[0], wrist[1] - shoulder[1]];
    let dist = d[0]
        .hypot(d[1])
        .clamp((upper - fore).abs().max(1e-12), upper + fore);
    let norm = d[0].hypot(d[1]);
    let u = if norm > 0.0 {
        [d[0] / norm, d[1] / norm]
    } else {
        [0.0, 1.0]
    };
    let cos_a =
        ((upper * upper + dist * dist - fore * fore) / (2.0 * upper * dist)).clamp(-1.0, 1.0);
    let a = bend * cos_a.acos();
    let (s, c) = a.sin_cos();
    [
        shoulder[0] + upper * (u[0] * c - u[1] * s),
        shoulder[1] + upper * (u[0] * s + u[1] * c),
    ]
}

fn place_arm(points: &mut [P; BODY25], side: Side, wrist: P) {
    let shoulder = side.shoulder();
    let elbow = two_bone_ik(shoulder, wrist, UPPER_ARM, FOREARM, side.outward());
    let (e, w) = side.ids();
    points[e] = elbow;
    points[w] = wrist;
}

fn hang_arm(points: &mut [P; BODY25], side: Side) {
    let [sx, sy] = side.shoulder();
    let o = side.outward();
    let (e, w) = side.ids();
    let (s1, c1) = 10f64.to_radians().sin_cos();
    let (s2, c2) = 5f64.to_radians().sin_cos();
    points[e] = [sx + o * UPPER_ARM * s1, sy + UPPER_ARM * c1];
    points[w] = [points[e][0] + o * FOREARM * s2, points[e][1] + FOREARM * c2];
}

fn extend_arm(points: &mut [P; BODY25], side: Side) {
    let [sx, sy] = side.shoulder();
    let o = side.outward();
    let (e, w) = side.ids();
    points[e] = [sx + o * UPPER_ARM, sy];
    points[w] = [sx + o * (UPPER_ARM + FOREARM), sy];
}

fn rest_points() -> [P; BODY25] {
    let mut points = [[0.0; 2]; BODY25];
    for (i, p) in &BODY_REST {
        points[*i] = *p;
    }
    points
}

/// Wrist on a circle around the shoulder, starting at the top. `direction` +1 is clockwise on screen.
fn circle_wrist(side: Side, angle: f64, direction: f64) -> P {
    let [sx, sy] = side.shoulder();
    let phi = -PI / 2.0 + direction * angle;
    [
        sx + CIRCLE_RADIUS * phi.cos(),
        sy + CIRCLE_RADIUS * phi.sin(),
    ]
}

/// Wrist beside and above the shoulder, oscillating vertically; starts at the top.
fn wave_wrist(side: Side, angle: f64) -> P {
    let [sx, sy] = side.shoulder();
    [
        sx + side.outward() * 0.6,
        sy - 0.6 - WAVE_AMPLITUDE * angle.cos(),
    ]
}

/// Wrist in front of the shoulder swinging horizontally toward and away from the body.
fn beckon_wrist(side: Side, angle: f64) -> P {
    let [sx, sy] = side.shoulder();
    [sx + side.outward() * (0.35 + 0.35 * angle.cos()), sy - 0.45]
}

/// Noise-free pose in shoulder-width units around the neck for cycle angle `angle` (radians).
pub fn canonical_pose(gesture: GestureLabel, angle: f64) -> [P; BODY25] {
    use GestureLabel::*;
    let mut pts = rest_points();
    let (active, wrist) = match gesture {
        StandStill => (None, [0.0; 2]),
        RightHandRightCircle => (Some(Side::Right), circle_wrist(Side::Right, angle, 1.0)),
        RightHandLeftCircle => (Some(Side::Right), circle_wrist(Side::Right, angle, -1.0)),
        LeftHandRightCircle => (Some(Side::Left), circle_wrist(Side::Left, angle, 1.0)),
        LeftHandLeftCircle => (Some(Side::Left), circle_wrist(Side::Left, angle, -1.0)),
        LeftHandWave => (Some(Side::Left), wave_wrist(Side::Left, angle)),
        RightHandWave => (Some(Side::Right), wave_wrist(Side::Right, angle)),
        CallToPass => (Some(Side::Right), beckon_wrist(Side::Right, angle)),
    };
    for side in [Side::Left, Side::Right] {
        if active == Some(side) {
            place_arm(&mut pts, side, wrist);
        } else if gesture == CallToPass {
            extend_arm(&mut pts, side);
        } else {
            hang_arm(&mut pts, side);
        }
    }
    pts
}

fn to_pixels(points: &[P; BODY25], scale: f64, offset: [f64; 2]) -> Pose {
    let mut pose = Pose::default();
    for (kp, [x, y]) in pose.keypoints.iter_mut().zip(points) {
        *kp = Keypoint::new(offset[0] + scale * x, offset[1] + scale * y, 1.0);
    }
    pose
}

/// Both arms held straight out to the sides.
pub fn t_pose(scale: f64, offset: [f64; 2]) -> Pose {
    let mut pts = rest_points();
    extend_arm(&mut pts, Side::Left);
    extend_arm(&mut pts, Side::Right);
    to_pixels(&pts, scale, offset)
}

/// Gesture and cycle angle to draw frame `k` with. Counter-clockwise circles run the
/// clockwise cycle backwards, so both directions share bitwise-identical poses.
fn cycle_pose(gesture: GestureLabel, k: usize, period: usize, phase: f64) -> (GestureLabel, f64) {
    use GestureLabel::*;
    let p = period as f64;
    let pos = (k as f64 + phase * p).rem_euclid(p);
    let backwards = |g| (g, TAU * ((p - pos) % p) / p);
    match gesture {
        RightHandLeftCircle => backwards(RightHandRightCircle),
        LeftHandLeftCircle => backwards(LeftHandRightCircle),
        g => (g, TAU * pos / p),
    }
}

pub fn generate(config: &SynthConfig) -> Result<Sequence, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma).expect("validated sigma");
    let frames = (0..config.n_frames)
        .map(|k| {
            let (gesture, angle) =
                cycle_pose(config.gesture, k, config.period_frames, config.phase);
            let mut pose = to_pixels(
                &canonical_pose(gesture, angle),
                config.subject_scale,
                config.offset,
            );
            if config.noise_sigma > 0.0 {
                for kp in pose.keypoints.iter_mut() {
                    kp.x += noise.sample(&mut rng);
                    kp.y += noise.sample(&mut rng);
                }
            }
            if config.drop_prob > 0.0 {
                for kp in pose.keypoints.iter_mut() {
                    if rng.random::<f64>() < config.drop_prob {
                        *kp = Keypoint::MISSING;
                    }
                }
            }
            pose
        })
        .collect();
    let mut seq =
        Sequence::new(frames, config.fps).map_err(|e| SynthError::InvalidConfig(e.to_string()))?;
    seq.label = Some(config.gesture);
    seq.view_angle_deg = Some(0.0);
    Ok(seq)
}

/// Inclusive ranges the dataset generator draws per-sequence parameters from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub period_frames: (usize, usize),
    pub subject_scale: (f64, f64),
    pub offset_x: (f64, f64),
    pub offset_y: (f64, f64),
    /// Noise sigma as a fraction of the drawn subject scale.
    pub noise_frac: (f64, f64),
    pub random_phase: bool,
}

impl Jitter {
    /// No variation: every sequence uses the template's values.
    pub fn none(base: &SynthConfig) -> Self {
        Jitter {
            period_frames: (base.period_frames, base.period_frames),
            subject_scale: (base.subject_scale, base.subject_scale),
            offset_x: (base.offset[0], base.offset[0]),
            offset_y: (base.offset[1], base.offset[1]),
            noise_frac: (
                base.noise_sigma / base.subject_scale,
                base.noise_sigma / base.subject_scale,
            ),
            random_phase: false,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let ok = self.period_frames.0 <= self.period_frames.1
            && self.subject_scale.0 <= self.subject_scale.1
            && self.offset_x.0 <= self.offset_x.1
            && self.offset_y.0 <= self.offset_y.1
            && self.noise_frac.0 <= self.noise_frac.1
            && self.noise_frac.0 >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(SynthError::InvalidConfig(format!(
                "jitter ranges must be ordered: {self:?}"
            )))
        }
    }
}

fn draw_f(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// `per_class` sequences for every gesture, class-major order. All per-sequence
/// parameters (including each sequence's noise seed) come from `base.seed`.
pub fn generate_dataset(
    per_class: usize,
    base: &SynthConfig,
    jitter: &Jitter,
) -> Result<Vec<Sequence>, SynthError> {
    if per_class == 0 {
        return Err(SynthError::InvalidConfig(
            "per_class must be at least 1".into(),
        ));
    }
    jitter.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(base.seed);
    let mut configs = Vec::with_capacity(per_class * GestureLabel::COUNT);
    for gesture in GestureLabel::ALL {
        for _ in 0..per_class {
            let period = if jitter.period_frames.1 > jitter.period_frames.0 {
                rng.random_range(jitter.period_frames.0..=jitter.period_frames.1)
            } else {
                jitter.period_frames.0
            };
            let scale = draw_f(&mut rng, jitter.subject_scale);
            let offset = [
                draw_f(&mut rng, jitter.offset_x),
                draw_f(&mut rng, jitter.offset_y),
            ];
            let noise_sigma = draw_f(&mut rng, jitter.noise_frac) * scale;
            let phase = if jitter.random_phase {
                rng.random::<f64>()
            } else {
                base.phase
            };
            let seed = rng.random::<u64>();
            let config = SynthConfig {
                gesture,
                period_frames: period,
                subject_scale: scale,
                offset,
                noise_sigma,
                phase,
                seed,
                ..*base
            };
            config.validate()?;
            configs.push(config);
        }
    }
    Exec::default()
        .map(&configs, generate)
        .into_iter()
        .collect()
}
