use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::argmax;
use super::model::{batch_loss_grad, ModelConfig, Network};
use super::{ModelParams, NnError};
use crate::features::Encoding;
use crate::par::Exec;

/// One labelled `T × N` window.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub window: Array2<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub split_seed: u64,
    /// Stop once validation accuracy reaches 1.0. The returned weights are the same
    /// either way, since later epochs can only tie the best score.
    pub stop_at_perfect_validation: bool,
    pub exec: Exec,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 30,
            lr: 1e-3,
            batch_size: 16,
            split_seed: 0,
            stop_at_perfect_validation: false,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Weights of the best-validation epoch (earliest on ties).
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

impl TrainReport {
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_accuracy\n");
        for h in &self.history {
            out.push_str(&format!(
                "{},{},{}\n",
                h.epoch, h.train_loss, h.val_accuracy
            ));
        }
        out
    }
}

/// Index sets for the 60 / 10 / 30 train / validation / test split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Splits each class separately (60 / 10 / 30, rounded) so every subset keeps the
    /// class balance. Deterministic in `seed`.
    pub fn stratified(labels: &[usize], seed: u64) -> Split {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            by_class.entry(l).or_default().push(i);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (_, mut idx) in by_class {
            idx.shuffle(&mut rng);
            let n = idx.len();
            let n_train = ((n as f64) * 0.6).round() as usize;
            let n_val = (((n as f64) * 0.1).round() as usize).min(n - n_train);
            split.train.extend_from_slice(&idx[..n_train]);
            split.val.extend_from_slice(&idx[n_train..n_train + n_val]);
            split.test.extend_from_slice(&idx[n_train + n_val..]);
        }
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        split
    }
}

fn check_dataset(samples: &[Sample], config: &ModelConfig) -> Result<(), NnError> {
    let first = samples.first().ok_or(NnError::EmptyDataset)?;
    let shape = first.window.dim();
    if shape.1 != config.input_dim {
        return Err(NnError::InconsistentShapes(format!(
            "windows have {} features, model expects {}",
            shape.1, config.input_dim
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.window.dim() != shape {
            return Err(NnError::InconsistentShapes(format!(
                "sample {i} is {:?}, expected {shape:?}",
                s.window.dim()
            )));
        }
        if s.label >= config.output_dim {
            return Err(NnError::LabelOutOfRange {
                label: s.label,
                classes: config.output_dim,
            });
        }
    }
    Ok(())
}

pub fn predict(net: &Network, window: ArrayView2<f64>) -> Result<usize, NnError> {
    Ok(argmax(net.forward(window)?.view()))
}

pub fn predict_all(net: &Network, samples: &[Sample], exec: Exec) -> Result<Vec<usize>, NnError> {
    exec.map(samples, |s| predict(net, s.window.view()))
        .into_iter()
        .collect()
}

pub fn accuracy(net: &Network, samples: &[Sample], exec: Exec) -> Result<f64, NnError> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let predicted = predict_all(net, samples, exec)?;
    let correct = predicted
        .iter()
        .zip(samples)
        .filter(|(p, s)| **p == s.label)
        .count();
    Ok(correct as f64 / samples.len() as f64)
}

/// Splits `dataset` 60/10/30 by `opts.split_seed` and trains on the first part,
/// selecting weights on the second. The test indices are returned untouched.
pub fn train(
    dataset: &[Sample],
    config: ModelConfig,
    encoding: Encoding,
    opts: &TrainOptions,
) -> Result<(TrainReport, Split), NnError> {
    check_dataset(dataset, &config)?;
    let labels: Vec<usize> = dataset.iter().map(|s| s.label).collect();
    let split = Split::stratified(&labels, opts.split_seed);
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset[i].clone()).collect::<Vec<_>>();
    let report = train_split(
        &pick(&split.train),
        &pick(&split.val),
        config,
        encoding,
        opts,
    )?;
    Ok((report, split))
}

/// Minibatch Adam on `train_set`, tracking validation accuracy per epoch. When the
/// validation set is empty the training accuracy stands in for it.
pub fn train_split(
    train_set: &[Sample],
    val_set: &[Sample],
    config: ModelConfig,
    encoding: Encoding,
    opts: &TrainOptions,
) -> Result<TrainReport, NnError> {
    check_dataset(train_set, &config)?;
    if !val_set.is_empty() {
        check_dataset(val_set, &config)?;
    }
    if opts.batch_size == 0 || opts.lr.is_nan() || opts.lr <= 0.0 {
        return Err(NnError::InvalidConfig(
            "batch size and learning rate must be positive".into(),
        ));
    }
    let mut params = ModelParams::init(config, encoding)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 1..=opts.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch_idx in order.chunks(opts.batch_size) {
            let batch: Vec<_> = batch_idx
                .iter()
                .map(|&i| (train_set[i].window.view(), train_set[i].label))
                .collect();
            let (loss, mut grads) = batch_loss_grad(&params.network, &batch, opts.exec)?;
            grads.scale(1.0 / batch.len() as f64);
            params.adam_step(&grads, opts.lr)?;
            loss_sum += loss;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let val_accuracy = if val_set.is_empty() {
            accuracy(&params.network, train_set, opts.exec)?
        } else {
            accuracy(&params.network, val_set, opts.exec)?
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}, validation accuracy {val_accuracy:.4}"
        );
        history.push(EpochStats {
            epoch,
            train_loss,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, params.network.clone()));
        }
        if opts.stop_at_perfect_validation && val_accuracy >= 1.0 {
            break;
        }
    }

    let (best_epoch, network) = match best {
        Some((_, epoch, net)) => (epoch, net),
        None => (0, params.network.clone()),
    };
    params.network = network;
    Ok(TrainReport {
        params,
        history,
        best_epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64, classes: usize) -> ModelConfig {
        ModelConfig {
            input_dim: 2,
            hidden_dims: [8, 8],
            gru_hidden: 6,
            head_dim: 6,
            output_dim: classes,
            seed,
        }
    }

    fn toy_dataset(n: usize, classes: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let label = i % classes;
                let window = Array2::from_shape_fn((6, 2), |(t, j)| {
                    let phase = t as f64 * 0.7 + i as f64 * 0.1;
                    if j == 0 {
                        (phase + label as f64).sin()
                    } else {
                        label as f64 - 0.5 + 0.05 * phase.cos()
                    }
                });
                Sample { window, label }
            })
            .collect()
    }

    #[test]
    fn split_proportions_and_disjointness() {
        let labels: Vec<usize> = (0..320).map(|i| i % 8).collect();
        let split = Split::stratified(&labels, 3);
        assert_eq!(
            (split.train.len(), split.val.len(), split.test.len()),
            (192, 32, 96)
        );
        let mut all: Vec<_> = split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.test)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..320).collect::<Vec<_>>());
        assert_eq!(Split::stratified(&labels, 3), split);
        assert_ne!(Split::stratified(&labels, 4), split);
    }

    #[test]
    fn single_class_validates_perfectly() {
        let data = toy_dataset(10, 1);
        let opts = TrainOptions {
            epochs: 1,
            batch_size: 4,
            ..TrainOptions::default()
        };
        let (report, _) = train(&data, tiny(1, 1), Encoding::Angle, &opts).unwrap();
        assert_eq!(report.history[0].val_accuracy, 1.0);
    }

    #[test]
    fn training_is_deterministic_and_learns() {
        let data = toy_dataset(40, 2);
        let opts = TrainOptions {
            epochs: 15,
            lr: 5e-3,
            batch_size: 8,
            split_seed: 1,
            ..TrainOptions::default()
        };
        let (a, split) = train(&data, tiny(7, 2), Encoding::Angle, &opts).unwrap();
        let (b, _) = train(&data, tiny(7, 2), Encoding::Angle, &opts).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.params, b.params);
        let test: Vec<_> = split.test.iter().map(|&i| data[i].clone()).collect();
        assert!(accuracy(&a.params.network, &test, Exec::Sequential).unwrap() >= 0.9);
        assert!(a.history.last().unwrap().train_loss < a.history[0].train_loss);
    }

    #[test]
    fn dataset_errors() {
        let opts = TrainOptions::default();
        assert!(matches!(
            train(&[], tiny(1, 2), Encoding::Angle, &opts),
            Err(NnError::EmptyDataset)
        ));
        let mut data = toy_dataset(4, 2);
        data[2].window = Array2::zeros((5, 2));
        assert!(matches!(
            train(&data, tiny(1, 2), Encoding::Angle, &opts),
            Err(NnError::InconsistentShapes(_))
        ));
    }
}
