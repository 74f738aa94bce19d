use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy;
use super::NnError;
use crate::par::Exec;

/// Layer sizes: `input → hidden[0] → hidden[1] → GRU(gru_hidden) → head → output`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden_dims: [usize; 2],
    pub gru_hidden: usize,
    pub head_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// The full-size recognizer: N → 2048 → 1024 → GRU 256 → 128 → M.
    pub fn standard(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        ModelConfig {
            input_dim,
            hidden_dims: [2048, 1024],
            gru_hidden: 256,
            head_dim: 128,
            output_dim,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let dims = [
            self.input_dim,
            self.hidden_dims[0],
            self.hidden_dims[1],
            self.gru_hidden,
            self.head_dim,
            self.output_dim,
        ];
        if dims.contains(&0) {
            return Err(NnError::InvalidConfig(format!(
                "zero-sized layer in {dims:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `out × in`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn zeros(input: usize, output: usize) -> Self {
        Linear {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }
}

/// GRU with gates packed row-wise as `[update; reset; candidate]`. The reset gate
/// multiplies the hidden state before the candidate's recurrent product:
///
/// ```text
/// z = σ(Wz x + Uz h + bz)
/// r = σ(Wr x + Ur h + br)
/// n = tanh(Wn x + Un (r ⊙ h) + bn)
/// h' = (1 − z) ⊙ h + z ⊙ n
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    /// `3H × in`
    pub w_input: Array2<f64>,
    /// `3H × H`
    pub w_hidden: Array2<f64>,
    pub bias: Array1<f64>,
}

pub const GATE_ORDER: [&str; 3] = ["update", "reset", "candidate"];

impl Gru {
    pub fn hidden(&self) -> usize {
        self.w_hidden.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub fc1: Linear,
    pub fc2: Linear,
    pub gru: Gru,
    pub head: Linear,
    pub out: Linear,
}

pub const TENSOR_NAMES: [&str; 11] = [
    "fc1.weight",
    "fc1.bias",
    "fc2.weight",
    "fc2.bias",
    "gru.w_input",
    "gru.w_hidden",
    "gru.bias",
    "head.weight",
    "head.bias",
    "out.weight",
    "out.bias",
];

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    x: Array2<f64>,
    h1: Array2<f64>,
    h2: Array2<f64>,
    /// Hidden states `h_0 .. h_T`, one per row.
    hs: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    n: Array2<f64>,
    /// `r_t ⊙ h_{t−1}` per step.
    rh: Array2<f64>,
    h3: Array1<f64>,
    pub logits: Array1<f64>,
}

impl ForwardCache {
    pub fn final_hidden(&self) -> ArrayView1<'_, f64> {
        self.hs.row(self.hs.nrows() - 1)
    }

    pub fn hidden2(&self) -> ArrayView2<'_, f64> {
        self.h2.view()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn affine_rows(x: &ArrayView2<f64>, layer: &Linear) -> Array2<f64> {
    let mut out = Array2::from_shape_fn((x.nrows(), layer.bias.len()), |(_, j)| layer.bias[j]);
    general_mat_mul(1.0, x, &layer.weight.t(), 1.0, &mut out);
    out
}

impl Network {
    pub fn init(config: &ModelConfig) -> Result<Self, NnError> {
        config.validate()?;
        let mut net = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let fan_ins = [
            config.input_dim,
            config.input_dim,
            config.hidden_dims[0],
            config.hidden_dims[0],
            config.hidden_dims[1],
            config.gru_hidden,
            config.hidden_dims[1],
            config.gru_hidden,
            config.gru_hidden,
            config.head_dim,
            config.head_dim,
        ];
        for (tensor, fan_in) in net.tensors_mut().into_iter().zip(fan_ins) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            tensor.iter_mut().for_each(|v| *v = dist.sample(&mut rng));
        }
        Ok(net)
    }

    pub fn zeros(config: &ModelConfig) -> Self {
        let h = config.gru_hidden;
        Network {
            fc1: Linear::zeros(config.input_dim, config.hidden_dims[0]),
            fc2: Linear::zeros(config.hidden_dims[0], config.hidden_dims[1]),
            gru: Gru {
                w_input: Array2::zeros((3 * h, config.hidden_dims[1])),
                w_hidden: Array2::zeros((3 * h, h)),
                bias: Array1::zeros(3 * h),
            },
            head: Linear::zeros(h, config.head_dim),
            out: Linear::zeros(config.head_dim, config.output_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    pub fn input_dim(&self) -> usize {
        self.fc1.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.out.bias.len()
    }

    pub fn tensors(&self) -> [&[f64]; 11] {
        [
            self.fc1.weight.as_slice().expect("standard layout"),
            self.fc1.bias.as_slice().expect("standard layout"),
            self.fc2.weight.as_slice().expect("standard layout"),
            self.fc2.bias.as_slice().expect("standard layout"),
            self.gru.w_input.as_slice().expect("standard layout"),
            self.gru.w_hidden.as_slice().expect("standard layout"),
            self.gru.bias.as_slice().expect("standard layout"),
            self.head.weight.as_slice().expect("standard layout"),
            self.head.bias.as_slice().expect("standard layout"),
            self.out.weight.as_slice().expect("standard layout"),
            self.out.bias.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [f64]; 11] {
        [
            self.fc1.weight.as_slice_mut().expect("standard layout"),
            self.fc1.bias.as_slice_mut().expect("standard layout"),
            self.fc2.weight.as_slice_mut().expect("standard layout"),
            self.fc2.bias.as_slice_mut().expect("standard layout"),
            self.gru.w_input.as_slice_mut().expect("standard layout"),
            self.gru.w_hidden.as_slice_mut().expect("standard layout"),
            self.gru.bias.as_slice_mut().expect("standard layout"),
            self.head.weight.as_slice_mut().expect("standard layout"),
            self.head.bias.as_slice_mut().expect("standard layout"),
            self.out.weight.as_slice_mut().expect("standard layout"),
            self.out.bias.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn shapes(&self) -> [Vec<usize>; 11] {
        [
            self.fc1.weight.shape().to_vec(),
            self.fc1.bias.shape().to_vec(),
            self.fc2.weight.shape().to_vec(),
            self.fc2.bias.shape().to_vec(),
            self.gru.w_input.shape().to_vec(),
            self.gru.w_hidden.shape().to_vec(),
            self.gru.bias.shape().to_vec(),
            self.head.weight.shape().to_vec(),
            self.head.bias.shape().to_vec(),
            self.out.weight.shape().to_vec(),
            self.out.bias.shape().to_vec(),
        ]
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Network) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn check_window(&self, window: &ArrayView2<f64>) -> Result<(), NnError> {
        if window.ncols() != self.input_dim() || window.nrows() == 0 {
            return Err(NnError::ShapeMismatch {
                expected: format!("T×{} with T ≥ 1", self.input_dim()),
                got: format!("{}×{}", window.nrows(), window.ncols()),
            });
        }
        Ok(())
    }

    /// Logits for one `T × N` window.
    pub fn forward(&self, window: ArrayView2<f64>) -> Result<Array1<f64>, NnError> {
        Ok(self.forward_cached(window)?.logits)
    }

    pub fn forward_cached(&self, window: ArrayView2<f64>) -> Result<ForwardCache, NnError> {
        self.check_window(&window)?;
        let steps = window.nrows();
        let hsize = self.gru.hidden();

        let mut h1 = affine_rows(&window, &self.fc1);
        relu_inplace(&mut h1);
        let mut h2 = affine_rows(&h1.view(), &self.fc2);
        relu_inplace(&mut h2);

        // input contributions of all gates for every step at once
        let mut gates_x = Array2::from_shape_fn((steps, 3 * hsize), |(_, j)| self.gru.bias[j]);
        general_mat_mul(1.0, &h2, &self.gru.w_input.t(), 1.0, &mut gates_x);

        let u_zr = self.gru.w_hidden.slice(s![..2 * hsize, ..]);
        let u_n = self.gru.w_hidden.slice(s![2 * hsize.., ..]);
        let mut hs = Array2::zeros((steps + 1, hsize));
        let mut z = Array2::zeros((steps, hsize));
        let mut r = Array2::zeros((steps, hsize));
        let mut n = Array2::zeros((steps, hsize));
        let mut rh = Array2::zeros((steps, hsize));
        for t in 0..steps {
            let h_prev = hs.row(t).to_owned();
            let gx = gates_x.row(t);
            let hzr = u_zr.dot(&h_prev);
            for j in 0..hsize {
                z[[t, j]] = sigmoid(gx[j] + hzr[j]);
                r[[t, j]] = sigmoid(gx[hsize + j] + hzr[hsize + j]);
                rh[[t, j]] = r[[t, j]] * h_prev[j];
            }
            let hn = u_n.dot(&rh.row(t));
            for j in 0..hsize {
                let cand = (gx[2 * hsize + j] + hn[j]).tanh();
                n[[t, j]] = cand;
                hs[[t + 1, j]] = (1.0 - z[[t, j]]) * h_prev[j] + z[[t, j]] * cand;
            }
        }

        let h_last = hs.row(steps);
        let h3 = (self.head.weight.dot(&h_last) + &self.head.bias).mapv(|v| v.max(0.0));
        let logits = self.out.weight.dot(&h3) + &self.out.bias;

        Ok(ForwardCache {
            x: window.to_owned(),
            h1,
            h2,
            hs,
            z,
            r,
            n,
            rh,
            h3,
            logits,
        })
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with respect
    /// to the logits is `dlogits`. Backpropagates through every time step.
    pub fn backward(&self, cache: &ForwardCache, dlogits: ArrayView1<f64>, grads: &mut Network) {
        let steps = cache.x.nrows();
        let hsize = self.gru.hidden();
        let outer = |col: ArrayView1<f64>, row: ArrayView1<f64>, target: &mut Array2<f64>| {
            Zip::from(target.rows_mut())
                .and(&col)
                .for_each(|mut dst, &c| {
                    dst.scaled_add(c, &row);
                });
        };

        // head
        let h_last = cache.final_hidden();
        outer(dlogits, cache.h3.view(), &mut grads.out.weight);
        grads.out.bias += &dlogits;
        let dh3 = self.out.weight.t().dot(&dlogits);
        let da3 = Zip::from(&dh3)
            .and(&cache.h3)
            .map_collect(|&d, &h| if h > 0.0 { d } else { 0.0 });
        outer(da3.view(), h_last, &mut grads.head.weight);
        grads.head.bias += &da3;
        let mut dh = self.head.weight.t().dot(&da3);

        // recurrence
        let u_zr = self.gru.w_hidden.slice(s![..2 * hsize, ..]);
        let u_n = self.gru.w_hidden.slice(s![2 * hsize.., ..]);
        let mut dgates = Array2::<f64>::zeros((steps, 3 * hsize));
        let mut dzr = Array1::<f64>::zeros(2 * hsize);
        let mut dan = Array1::<f64>::zeros(hsize);
        for t in (0..steps).rev() {
            let h_prev = cache.hs.row(t);
            let (z, r, n) = (cache.z.row(t), cache.r.row(t), cache.n.row(t));
            let mut dh_prev = Array1::<f64>::zeros(hsize);
            for j in 0..hsize {
                let dn = dh[j] * z[j];
                let dz = dh[j] * (n[j] - h_prev[j]);
                dh_prev[j] = dh[j] * (1.0 - z[j]);
                dan[j] = dn * (1.0 - n[j] * n[j]);
                dzr[j] = dz * z[j] * (1.0 - z[j]);
            }
            let drh = u_n.t().dot(&dan);
            for j in 0..hsize {
                let dr = drh[j] * h_prev[j];
                dh_prev[j] += drh[j] * r[j];
                dzr[hsize + j] = dr * r[j] * (1.0 - r[j]);
            }
            dh_prev += &u_zr.t().dot(&dzr);
            let mut row = dgates.row_mut(t);
            row.slice_mut(s![..2 * hsize]).assign(&dzr);
            row.slice_mut(s![2 * hsize..]).assign(&dan);
            dh = dh_prev;
        }
        {
            let hs_prev = cache.hs.slice(s![..steps, ..]);
            let mut gu_zr = grads.gru.w_hidden.slice_mut(s![..2 * hsize, ..]);
            general_mat_mul(
                1.0,
                &dgates.slice(s![.., ..2 * hsize]).t(),
                &hs_prev,
                1.0,
                &mut gu_zr,
            );
            let mut gu_n = grads.gru.w_hidden.slice_mut(s![2 * hsize.., ..]);
            general_mat_mul(
                1.0,
                &dgates.slice(s![.., 2 * hsize..]).t(),
                &cache.rh,
                1.0,
                &mut gu_n,
            );
        }
        general_mat_mul(1.0, &dgates.t(), &cache.h2, 1.0, &mut grads.gru.w_input);
        grads.gru.bias += &dgates.sum_axis(Axis(0));

        // per-step linear stack
        let mut da2 = dgates.dot(&self.gru.w_input);
        Zip::from(&mut da2).and(&cache.h2).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0
            }
        });
        general_mat_mul(1.0, &da2.t(), &cache.h1, 1.0, &mut grads.fc2.weight);
        grads.fc2.bias += &da2.sum_axis(Axis(0));
        let mut da1 = da2.dot(&self.fc2.weight);
        Zip::from(&mut da1).and(&cache.h1).for_each(|d, &h| {
            if h <= 0.0 {
                *d = 0.0
            }
        });
        general_mat_mul(1.0, &da1.t(), &cache.x, 1.0, &mut grads.fc1.weight);
        grads.fc1.bias += &da1.sum_axis(Axis(0));
    }

    /// Cross-entropy loss of one window; its gradient is added to `grads`.
    pub fn loss_and_grad(
        &self,
        window: ArrayView2<f64>,
        label: usize,
        grads: &mut Network,
    ) -> Result<f64, NnError> {
        let cache = self.forward_cached(window)?;
        let (loss, dlogits) = cross_entropy(cache.logits.view(), label)?;
        self.backward(&cache, dlogits.view(), grads);
        Ok(loss)
    }

    pub fn loss(&self, window: ArrayView2<f64>, label: usize) -> Result<f64, NnError> {
        let logits = self.forward(window)?;
        Ok(cross_entropy(logits.view(), label)?.0)
    }
}

/// Summed loss and summed gradient over a batch. Per-sample gradients are computed
/// independently (in parallel when `exec` allows) and added in sample order, so the
/// result does not depend on the number of threads.
pub fn batch_loss_grad(
    net: &Network,
    batch: &[(ArrayView2<'_, f64>, usize)],
    exec: Exec,
) -> Result<(f64, Network), NnError> {
    let mut total = net.zeros_like();
    let mut loss = 0.0;
    let mut first = true;
    for chunk in batch.chunks(exec.width()) {
        let parts = exec.map(chunk, |(window, label)| {
            let mut g = net.zeros_like();
            net.loss_and_grad(window.view(), *label, &mut g)
                .map(|l| (l, g))
        });
        for part in parts {
            let (l, g) = part?;
            loss += l;
            if first {
                total = g;
                first = false;
            } else {
                total.add_assign(&g);
            }
        }
    }
    Ok((loss, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> ModelConfig {
        ModelConfig {
            input_dim: 5,
            hidden_dims: [8, 8],
            gru_hidden: 4,
            head_dim: 4,
            output_dim: 3,
            seed: 11,
        }
    }

    #[test]
    fn zero_network_gives_zero_logits() {
        let net = Network::zeros(&tiny());
        let logits = net.forward(Array2::zeros((6, 5)).view()).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = Network::init(&tiny()).unwrap();
        assert!(matches!(
            net.forward(Array2::zeros((6, 4)).view()),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn standard_shapes() {
        let net = Network::zeros(&ModelConfig::standard(18, 8, 0));
        let shapes = net.shapes();
        assert_eq!(shapes[0], vec![2048, 18]);
        assert_eq!(shapes[2], vec![1024, 2048]);
        assert_eq!(shapes[4], vec![768, 1024]);
        assert_eq!(shapes[5], vec![768, 256]);
        assert_eq!(shapes[7], vec![128, 256]);
        assert_eq!(shapes[9], vec![8, 128]);
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = Network::init(&tiny()).unwrap();
        let b = Network::init(&tiny()).unwrap();
        assert_eq!(a, b);
        let bound = 1.0 / 5f64.sqrt();
        assert!(a.fc1.weight.iter().all(|v| v.abs() <= bound));
        let mut other = tiny();
        other.seed = 12;
        assert_ne!(Network::init(&other).unwrap(), a);
    }

    #[test]
    fn gradient_shapes_match_parameters() {
        let net = Network::init(&tiny()).unwrap();
        let mut g = net.zeros_like();
        let window = Array2::from_shape_fn((4, 5), |(t, j)| (t as f64 - j as f64) * 0.3);
        net.loss_and_grad(window.view(), 2, &mut g).unwrap();
        assert_eq!(g.shapes(), net.shapes());
        assert!(g.tensors().iter().all(|t| !t.is_empty()));
    }

    #[test]
    fn duplicated_sample_doubles_gradient_exactly() {
        let net = Network::init(&tiny()).unwrap();
        let window =
            Array2::from_shape_fn((5, 5), |(t, j)| ((t * 7 + j * 3) % 5) as f64 * 0.2 - 0.4);
        let (l1, g1) = batch_loss_grad(&net, &[(window.view(), 1)], Exec::Sequential).unwrap();
        let pair = [(window.view(), 1), (window.view(), 1)];
        for exec in [Exec::Sequential, Exec::Parallel] {
            let (l2, g2) = batch_loss_grad(&net, &pair, exec).unwrap();
            assert_eq!(l2, 2.0 * l1);
            for (a, b) in g1.tensors().iter().zip(g2.tensors()) {
                assert!(a.iter().zip(b).all(|(x, y)| 2.0 * x == *y));
            }
        }
    }
}
