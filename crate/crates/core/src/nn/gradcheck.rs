//! Central finite-difference check of the analytic gradients.

use ndarray::{Array2, ArrayView2};

use super::model::{Network, TENSOR_NAMES};
use super::NnError;

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares every parameter's analytic gradient against `(L(p+ε) − L(p−ε)) / 2ε`.
/// Meant for small configurations: it costs two forward passes per parameter.
pub fn check_gradients(
    net: &Network,
    window: ArrayView2<f64>,
    label: usize,
    eps: f64,
) -> Result<GradCheckReport, NnError> {
    let mut analytic = net.zeros_like();
    net.loss_and_grad(window, label, &mut analytic)?;
    let mut probe = net.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_tensor: TENSOR_NAMES[0],
        worst_index: 0,
        checked: 0,
    };
    let tensor_lens: Vec<usize> = net.tensors().iter().map(|t| t.len()).collect();
    for (k, len) in tensor_lens.into_iter().enumerate() {
        for i in 0..len {
            let original = probe.tensors()[k][i];
            probe.tensors_mut()[k][i] = original + eps;
            let up = probe.loss(window, label)?;
            probe.tensors_mut()[k][i] = original - eps;
            let down = probe.loss(window, label)?;
            probe.tensors_mut()[k][i] = original;
            let numeric = (up - down) / (2.0 * eps);
            let err = relative_error(analytic.tensors()[k][i], numeric);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_tensor = TENSOR_NAMES[k];
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}

/// Smallest |pre-activation| over all ReLU units. Finite differences straddling a
/// ReLU kink are meaningless, so checks should use inputs with a comfortable margin.
pub fn relu_margin(net: &Network, window: ArrayView2<f64>) -> Result<f64, NnError> {
    let cache = net.forward_cached(window)?;
    let mut a1: Array2<f64> = window.dot(&net.fc1.weight.t()) + &net.fc1.bias;
    let mut margin = a1.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    a1.mapv_inplace(|v| v.max(0.0));
    let a2 = a1.dot(&net.fc2.weight.t()) + &net.fc2.bias;
    margin = a2.iter().fold(margin, |m, v| m.min(v.abs()));
    let a3 = net.head.weight.dot(&cache.final_hidden()) + &net.head.bias;
    Ok(a3.iter().fold(margin, |m, v| m.min(v.abs())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelConfig;
    use rand::{Rng, SeedableRng};

    #[test]
    fn tiny_network_gradients_match() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let config = ModelConfig {
            input_dim: 4,
            hidden_dims: [6, 5],
            gru_hidden: 3,
            head_dim: 4,
            output_dim: 3,
            seed: 5,
        };
        let net = Network::init(&config).unwrap();
        let window = loop {
            let w = Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0));
            if relu_margin(&net, w.view()).unwrap() > 1e-3 {
                break w;
            }
        };
        let report = check_gradients(&net, window.view(), 2, 1e-4).unwrap();
        assert_eq!(report.checked, net.num_parameters());
        assert!(report.max_rel_error < 1e-4, "{report:?}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-12, 0.0) - 1e-6).abs() < 1e-18);
    }
}
