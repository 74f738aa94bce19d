//! Real-time arm-gesture recognition over OpenPose BODY-25 keypoints.
//!
//! The pipeline runs: [`skeleton`] ingestion → [`normalize`] (neck-centred 1×1
//! scaling) → [`features`] (coordinates or joint angles) → [`nn`] (linear layers, GRU,
//! linear head) → [`recognizer`] (sliding window with vote smoothing). [`augment`]
//! synthesises rotated views and speed changes, [`speed`] measures the period of
//! cyclic gestures, and [`synth`] generates labelled training data.

pub mod augment;
pub mod eval;
pub mod features;
pub mod nn;
pub mod normalize;
pub mod par;
pub mod recognizer;
pub mod skeleton;
pub mod speed;
pub mod synth;
