//! Feed-forward network: ReLU hidden layers, softmax output, Adam with
//! coupled L2 weight decay, mini-batch training with early stopping on an
//! internal stratified holdout.
//!
//! The numeric core is generic over the float type: training runs in f32
//! for speed, while stored weights, prediction, and the finite-difference
//! gradient check use f64.

use ndarray::{Array1, Array2, Axis, LinalgScalar};
use num_traits::{Float, FromPrimitive};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use super::gbdt::stratified_tail_split;
use crate::featurize::FeatureMatrix;
use crate::types::{derive_seed, Label};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden_width: usize,
    pub hidden_depth: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub holdout_fraction: f64,
    pub min_delta: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_width: 128,
            hidden_depth: 4,
            learning_rate: 3e-4,
            weight_decay: 1e-6,
            max_epochs: 500,
            batch_size: 256,
            patience: 20,
            holdout_fraction: 0.1,
            min_delta: 1e-6,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.hidden_width == 0 || self.hidden_depth == 0 {
            return Err("hidden layers must be non-empty".into());
        }
        if self.learning_rate <= 0.0 {
            return Err("learning_rate must be > 0".into());
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err("batch_size and max_epochs must be >= 1".into());
        }
        Ok(())
    }
}

trait Scalar: Float + FromPrimitive + LinalgScalar + Send + Sync + std::fmt::Debug {}
impl<T: Float + FromPrimitive + LinalgScalar + Send + Sync + std::fmt::Debug> Scalar for T {}

/// Layer parameters; weights are [fan_in, fan_out].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Net<F> {
    w: Vec<Array2<F>>,
    b: Vec<Array1<F>>,
}

impl<F: Scalar> Net<F> {
    fn zeros_like(&self) -> Net<F> {
        Net {
            w: self.w.iter().map(|w| Array2::zeros(w.dim())).collect(),
            b: self.b.iter().map(|b| Array1::zeros(b.dim())).collect(),
        }
    }

    fn cast<G: Scalar>(&self) -> Net<G> {
        Net {
            w: self
                .w
                .iter()
                .map(|w| w.mapv(|v| G::from_f64(v.to_f64().unwrap()).unwrap()))
                .collect(),
            b: self
                .b
                .iter()
                .map(|b| b.mapv(|v| G::from_f64(v.to_f64().unwrap()).unwrap()))
                .collect(),
        }
    }

    /// Activations after every hidden layer plus the output logits.
    fn forward(&self, x: &Array2<F>) -> (Vec<Array2<F>>, Array2<F>) {
        let add_bias = |z: &mut Array2<F>, b: &Array1<F>| {
            for mut row in z.outer_iter_mut() {
                ndarray::Zip::from(&mut row).and(b).for_each(|v, &bv| *v = *v + bv);
            }
        };
        let mut acts: Vec<Array2<F>> = Vec::with_capacity(self.w.len() - 1);
        let mut cur = x.clone();
        for l in 0..self.w.len() - 1 {
            let mut z = cur.dot(&self.w[l]);
            add_bias(&mut z, &self.b[l]);
            z.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
            acts.push(z.clone());
            cur = z;
        }
        let last = self.w.len() - 1;
        let mut logits = cur.dot(&self.w[last]);
        add_bias(&mut logits, &self.b[last]);
        (acts, logits)
    }

    /// Mean cross-entropy plus (wd/2)·‖θ‖², and its gradient.
    fn loss_and_grad(&self, x: &Array2<F>, y: &[u8], wd: F) -> (F, Net<F>) {
        let n = x.nrows();
        let (acts, logits) = self.forward(x);
        let (loss_ce, mut dlogits) = softmax_ce(&logits, y);

        let mut grads = self.zeros_like();
        let last = self.w.len() - 1;
        let mut reg = F::zero();
        for l in 0..self.w.len() {
            reg = reg + self.w[l].iter().fold(F::zero(), |a, &v| a + v * v);
            reg = reg + self.b[l].iter().fold(F::zero(), |a, &v| a + v * v);
        }
        let loss = loss_ce + wd / F::from_f64(2.0).unwrap() * reg;

        // Backward pass.
        let mut l = last;
        loop {
            let input: &Array2<F> = if l == 0 { x } else { &acts[l - 1] };
            grads.w[l] = input.t().dot(&dlogits);
            grads.b[l] = dlogits.sum_axis(Axis(0));
            if l == 0 {
                break;
            }
            let mut dprev = dlogits.dot(&self.w[l].t());
            // ReLU mask from the stored activation.
            ndarray::Zip::from(&mut dprev).and(&acts[l - 1]).for_each(|d, &a| {
                if a <= F::zero() {
                    *d = F::zero();
                }
            });
            dlogits = dprev;
            l -= 1;
        }
        let _ = n;
        for l in 0..self.w.len() {
            ndarray::Zip::from(&mut grads.w[l]).and(&self.w[l]).for_each(|g, &w| {
                *g = *g + wd * w;
            });
            ndarray::Zip::from(&mut grads.b[l]).and(&self.b[l]).for_each(|g, &b| {
                *g = *g + wd * b;
            });
        }
        (loss, grads)
    }
}

/// Row-wise stable softmax cross-entropy. Returns mean loss and dLoss/dLogits.
fn softmax_ce<F: Scalar>(logits: &Array2<F>, y: &[u8]) -> (F, Array2<F>) {
    let n = logits.nrows();
    let nf = F::from_usize(n).unwrap();
    let mut probs = logits.clone();
    let mut loss = F::zero();
    for (i, mut row) in probs.outer_iter_mut().enumerate() {
        let max = row.iter().fold(F::neg_infinity(), |a, &v| a.max(v));
        let mut denom = F::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            denom = denom + *v;
        }
        for v in row.iter_mut() {
            *v = *v / denom;
        }
        let p = row[y[i] as usize].max(F::from_f64(1e-12).unwrap());
        loss = loss - p.ln();
    }
    loss = loss / nf;
    for (i, mut row) in probs.outer_iter_mut().enumerate() {
        row[y[i] as usize] = row[y[i] as usize] - F::one();
        for v in row.iter_mut() {
            *v = *v / nf;
        }
    }
    (loss, probs)
}

struct Adam<F> {
    m: Net<F>,
    v: Net<F>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    fn new(net: &Net<F>) -> Self {
        Adam {
            m: net.zeros_like(),
            v: net.zeros_like(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Net<F>, grads: &Net<F>, lr: F) {
        let b1 = F::from_f64(0.9).unwrap();
        let b2 = F::from_f64(0.999).unwrap();
        let eps = F::from_f64(1e-8).unwrap();
        self.t += 1;
        let c1 = F::one() - b1.powi(self.t);
        let c2 = F::one() - b2.powi(self.t);
        for l in 0..net.w.len() {
            update(&mut self.m.w[l], &mut self.v.w[l], &mut net.w[l], &grads.w[l], b1, b2, eps, lr, c1, c2);
            update1(&mut self.m.b[l], &mut self.v.b[l], &mut net.b[l], &grads.b[l], b1, b2, eps, lr, c1, c2);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update<F: Scalar>(
    m: &mut Array2<F>,
    v: &mut Array2<F>,
    w: &mut Array2<F>,
    g: &Array2<F>,
    b1: F,
    b2: F,
    eps: F,
    lr: F,
    c1: F,
    c2: F,
) {
    ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
        *m = b1 * *m + (F::one() - b1) * g;
        *v = b2 * *v + (F::one() - b2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *w = *w - lr * mh / (vh.sqrt() + eps);
    });
}

#[allow(clippy::too_many_arguments)]
fn update1<F: Scalar>(
    m: &mut Array1<F>,
    v: &mut Array1<F>,
    w: &mut Array1<F>,
    g: &Array1<F>,
    b1: F,
    b2: F,
    eps: F,
    lr: F,
    c1: F,
    c2: F,
) {
    ndarray::Zip::from(w).and(m).and(v).and(g).for_each(|w, m, v, &g| {
        *m = b1 * *m + (F::one() - b1) * g;
        *v = b2 * *v + (F::one() - b2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *w = *w - lr * mh / (vh.sqrt() + eps);
    });
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpModel {
    pub params: MlpParams,
    means: Vec<f64>,
    scales: Vec<f64>,
    net: Net<f64>,
    pub epochs_trained: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum GradCheckError {
    #[error("epsilon must lie in [1e-6, 1e-4], got {0}")]
    BadEpsilon(f64),
    #[error("gradient check batch must have at most 16 rows, got {0}")]
    BatchTooLarge(usize),
}

impl MlpModel {
    /// Freshly initialized network (He-uniform weights, zero biases) with
    /// identity standardization; `fit` refines a model from this state.
    pub fn init(params: MlpParams, n_features: usize, seed: u64) -> MlpModel {
        let mut dims = vec![n_features];
        dims.extend(std::iter::repeat(params.hidden_width).take(params.hidden_depth));
        dims.push(2);
        let mut w = Vec::new();
        let mut b = Vec::new();
        for l in 0..dims.len() - 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, l as u64));
            let limit = (6.0 / dims[l] as f64).sqrt();
            let weights =
                Array2::from_shape_fn((dims[l], dims[l + 1]), |_| rng.gen_range(-limit..limit));
            w.push(weights);
            b.push(Array1::zeros(dims[l + 1]));
        }
        MlpModel {
            params,
            means: vec![0.0; n_features],
            scales: vec![1.0; n_features],
            net: Net { w, b },
            epochs_trained: 0,
        }
    }

    /// All-zero weights; useful to pin down symmetric behavior.
    pub fn zeroed(params: MlpParams, n_features: usize) -> MlpModel {
        let mut m = MlpModel::init(params, n_features, 0);
        for w in &mut m.net.w {
            w.fill(0.0);
        }
        m
    }

    pub fn n_features(&self) -> usize {
        self.means.len()
    }

    pub fn fit(params: MlpParams, x: &FeatureMatrix, y: &[Label], seed: u64) -> MlpModel {
        let labels: Vec<u8> = y.iter().map(|l| l.as_f64() as u8).collect();
        let (fit_rows, holdout_rows) = stratified_tail_split(y, params.holdout_fraction);
        let use_holdout = !holdout_rows.is_empty();

        // Standardize on the rows actually trained on.
        let d = x.n_cols();
        let mut means = vec![0.0f64; d];
        let mut scales = vec![0.0f64; d];
        for &r in &fit_rows {
            for (j, v) in x.row(r).iter().enumerate() {
                means[j] += v;
            }
        }
        for m in &mut means {
            *m /= fit_rows.len() as f64;
        }
        for &r in &fit_rows {
            for (j, v) in x.row(r).iter().enumerate() {
                let c = v - means[j];
                scales[j] += c * c;
            }
        }
        for s in &mut scales {
            let std = (*s / fit_rows.len() as f64).sqrt();
            *s = if std > 1e-12 { 1.0 / std } else { 1.0 };
        }

        let standardized = |rows: &[usize]| -> Array2<f32> {
            let mut out = Array2::zeros((rows.len(), d));
            for (i, &r) in rows.iter().enumerate() {
                for (j, v) in x.row(r).iter().enumerate() {
                    out[(i, j)] = ((v - means[j]) * scales[j]) as f32;
                }
            }
            out
        };
        let x_fit = standardized(&fit_rows);
        let y_fit: Vec<u8> = fit_rows.iter().map(|&r| labels[r]).collect();
        let x_hold = standardized(&holdout_rows);
        let y_hold: Vec<u8> = holdout_rows.iter().map(|&r| labels[r]).collect();

        let mut model = MlpModel::init(params, d, seed);
        model.means = means;
        model.scales = scales;
        let mut net: Net<f32> = model.net.cast();
        let mut adam = Adam::new(&net);
        let lr = params.learning_rate as f32;
        let wd = params.weight_decay as f32;

        let n_fit = fit_rows.len();
        let mut best: Net<f32> = net.clone();
        let mut best_loss = f32::INFINITY;
        let mut best_epoch = 0usize;
        let mut epochs_done = 0usize;
        let mut order: Vec<usize> = (0..n_fit).collect();

        for epoch in 0..params.max_epochs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 10_000 + epoch as u64));
            for i in (1..n_fit).rev() {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
            }
            for batch in order.chunks(params.batch_size) {
                let xb = x_fit.select(Axis(0), batch);
                let yb: Vec<u8> = batch.iter().map(|&i| y_fit[i]).collect();
                let (_, grads) = net.loss_and_grad(&xb, &yb, wd);
                adam.step(&mut net, &grads, lr);
            }
            epochs_done = epoch + 1;

            let eval_loss = if use_holdout {
                let (_, logits) = net.forward(&x_hold);
                softmax_ce(&logits, &y_hold).0
            } else {
                let (_, logits) = net.forward(&x_fit);
                softmax_ce(&logits, &y_fit).0
            };
            if eval_loss + (params.min_delta as f32) < best_loss {
                best_loss = eval_loss;
                best_epoch = epoch;
                best = net.clone();
            } else if epoch - best_epoch >= params.patience {
                break;
            }
        }

        model.net = best.cast();
        model.epochs_trained = epochs_done;
        model
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Vec<f64> {
        let d = self.n_features();
        let mut input = Array2::zeros((x.n_rows(), d));
        for r in 0..x.n_rows() {
            for (j, v) in x.row(r).iter().enumerate() {
                input[(r, j)] = (v - self.means[j]) * self.scales[j];
            }
        }
        let (_, logits) = self.net.forward(&input);
        logits
            .outer_iter()
            .map(|row| {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e0 = (row[0] - max).exp();
                let e1 = (row[1] - max).exp();
                e1 / (e0 + e1)
            })
            .collect()
    }

    /// Analytic gradients of the training loss against central finite
    /// differences, over every parameter; returns the max relative error.
    pub fn gradient_check(
        &self,
        x: &FeatureMatrix,
        y: &[Label],
        epsilon: f64,
    ) -> Result<f64, GradCheckError> {
        if !(1e-6..=1e-4).contains(&epsilon) {
            return Err(GradCheckError::BadEpsilon(epsilon));
        }
        if x.n_rows() > 16 {
            return Err(GradCheckError::BatchTooLarge(x.n_rows()));
        }
        let d = self.n_features();
        let mut input = Array2::zeros((x.n_rows(), d));
        for r in 0..x.n_rows() {
            for (j, v) in x.row(r).iter().enumerate() {
                input[(r, j)] = (v - self.means[j]) * self.scales[j];
            }
        }
        let labels: Vec<u8> = y.iter().map(|l| l.as_f64() as u8).collect();
        let wd = self.params.weight_decay;

        let mut net = self.net.clone();
        let (_, analytic) = net.loss_and_grad(&input, &labels, wd);

        // Gradients below the finite-difference noise floor (~1e-12 at
        // these epsilons) are unresolvable; the denominator floor keeps
        // them from registering as spurious relative error.
        let rel = |a: f64, f: f64| (a - f).abs() / (a.abs() + f.abs()).max(1e-6);
        let mut max_rel: f64 = 0.0;
        for l in 0..net.w.len() {
            for idx in 0..net.w[l].len() {
                let a = analytic.w[l].as_slice().unwrap()[idx];
                let f = {
                    let w = net.w[l].as_slice_mut().unwrap();
                    let orig = w[idx];
                    w[idx] = orig + epsilon;
                    let (lp, _) = net.loss_and_grad(&input, &labels, wd);
                    let w = net.w[l].as_slice_mut().unwrap();
                    w[idx] = orig - epsilon;
                    let (lm, _) = net.loss_and_grad(&input, &labels, wd);
                    let w = net.w[l].as_slice_mut().unwrap();
                    w[idx] = orig;
                    (lp - lm) / (2.0 * epsilon)
                };
                max_rel = max_rel.max(rel(a, f));
            }
            for idx in 0..net.b[l].len() {
                let a = analytic.b[l].as_slice().unwrap()[idx];
                let f = {
                    let b = net.b[l].as_slice_mut().unwrap();
                    let orig = b[idx];
                    b[idx] = orig + epsilon;
                    let (lp, _) = net.loss_and_grad(&input, &labels, wd);
                    let b = net.b[l].as_slice_mut().unwrap();
                    b[idx] = orig - epsilon;
                    let (lm, _) = net.loss_and_grad(&input, &labels, wd);
                    let b = net.b[l].as_slice_mut().unwrap();
                    b[idx] = orig;
                    (lp - lm) / (2.0 * epsilon)
                };
                max_rel = max_rel.max(rel(a, f));
            }
        }
        Ok(max_rel)
    }

    /// Analytic gradient of the output-layer bias on the given batch,
    /// exposed for the closed-form symmetry check.
    pub fn output_bias_gradient(&self, x: &FeatureMatrix, y: &[Label]) -> Vec<f64> {
        let d = self.n_features();
        let mut input = Array2::zeros((x.n_rows(), d));
        for r in 0..x.n_rows() {
            for (j, v) in x.row(r).iter().enumerate() {
                input[(r, j)] = (v - self.means[j]) * self.scales[j];
            }
        }
        let labels: Vec<u8> = y.iter().map(|l| l.as_f64() as u8).collect();
        let net = self.net.clone();
        let (_, grads) = net.loss_and_grad(&input, &labels, self.params.weight_decay);
        grads.b.last().unwrap().to_vec()
    }
}
