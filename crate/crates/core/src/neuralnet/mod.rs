//! Dense feed-forward networks with exact backpropagation.
//!
//! Parameters flatten in a fixed order: layers in forward order, each layer's
//! weights row-major by input index (`fan_in x fan_out`), then its bias.

mod init;
mod scg;

pub use init::{glorot_limit, init_parameters};
pub use scg::{
    scg_minimize, FnObjective, Objective, ScgOutcome, ScgState, StopReason, TrainConfig,
};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows per work unit when a batch is split across threads. Fixed so the
/// reduction order, and hence every floating-point sum, does not depend on
/// the thread count.
pub const CHUNK_ROWS: usize = 1024;

/// Floor applied to probabilities inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Saturating linear: clamps to [0, 1].
    SatLin,
    Linear,
    Softmax,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::SatLin => z.mapv_inplace(satlin),
            Activation::Linear => {}
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    softmax_inplace(row.as_slice_mut().expect("contiguous row"));
                }
            }
        }
    }
}

pub fn satlin(z: f64) -> f64 {
    z.clamp(0.0, 1.0)
}

/// Derivative of `satlin`; boundary points get 0.
pub fn satlin_grad(z: f64) -> f64 {
    if z > 0.0 && z < 1.0 {
        1.0
    } else {
        0.0
    }
}

pub fn softmax_inplace(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    /// Returns `(pre-activation, activation)` for a batch of rows.
    fn forward_batch(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let mut z = x.dot(&self.weights);
        z += &self.bias;
        let mut a = z.clone();
        self.activation.apply(&mut a);
        (z, a)
    }

    /// Applies the layer to a batch without keeping the pre-activation.
    pub fn apply(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.dot(&self.weights);
        a += &self.bias;
        self.activation.apply(&mut a);
        a
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend(self.weights.iter());
        out.extend(self.bias.iter());
    }

    fn read_params(&mut self, src: &[f64]) -> usize {
        let nw = self.weights.len();
        let nb = self.bias.len();
        for (dst, v) in self.weights.iter_mut().zip(&src[..nw]) {
            *dst = *v;
        }
        for (dst, v) in self.bias.iter_mut().zip(&src[nw..nw + nb]) {
            *dst = *v;
        }
        nw + nb
    }
}

/// Inputs and targets, one sample per row.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Array2<f64>,
    pub targets: Array2<f64>,
}

impl Batch {
    pub fn new(inputs: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if inputs.nrows() != targets.nrows() {
            return Err(Error::Dimension {
                expected: inputs.nrows(),
                actual: targets.nrows(),
            });
        }
        Ok(Batch { inputs, targets })
    }

    /// A reconstruction batch: targets are the inputs.
    pub fn autoencoding(inputs: Array2<f64>) -> Self {
        Batch {
            targets: inputs.clone(),
            inputs,
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }
}

/// One-hot target matrix for class indices.
pub fn one_hot_targets(labels: &[usize], classes: usize) -> Array2<f64> {
    let mut t = Array2::zeros((labels.len(), classes));
    for (i, &c) in labels.iter().enumerate() {
        t[[i, c]] = 1.0;
    }
    t
}

/// Sums per-chunk `(loss, gradient)` contributions over row ranges in a fixed
/// order.
pub(crate) fn chunked_sum<F>(rows: usize, dim: usize, f: F) -> (f64, Vec<f64>)
where
    F: Fn(usize, usize) -> (f64, Vec<f64>) + Sync,
{
    let ranges: Vec<(usize, usize)> = (0..rows)
        .step_by(CHUNK_ROWS)
        .map(|start| (start, (start + CHUNK_ROWS).min(rows)))
        .collect();
    let parts: Vec<(f64, Vec<f64>)> = ranges.par_iter().map(|&(a, b)| f(a, b)).collect();
    let mut loss = 0.0;
    let mut grad = vec![0.0; dim];
    for (l, g) in parts {
        loss += l;
        for (acc, v) in grad.iter_mut().zip(&g) {
            *acc += v;
        }
    }
    (loss, grad)
}

pub(crate) fn chunked_loss<F>(rows: usize, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let ranges: Vec<(usize, usize)> = (0..rows)
        .step_by(CHUNK_ROWS)
        .map(|start| (start, (start + CHUNK_ROWS).min(rows)))
        .collect();
    let parts: Vec<f64> = ranges.par_iter().map(|&(a, b)| f(a, b)).collect();
    parts.into_iter().sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<DenseLayer>,
    loss: LossKind,
}

impl Network {
    pub fn new(layers: Vec<DenseLayer>, loss: LossKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::data("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].fan_out() != pair[1].fan_in() {
                return Err(Error::Dimension {
                    expected: pair[0].fan_out(),
                    actual: pair[1].fan_in(),
                });
            }
        }
        for l in &layers {
            if l.bias.len() != l.fan_out() {
                return Err(Error::Dimension {
                    expected: l.fan_out(),
                    actual: l.bias.len(),
                });
            }
        }
        let last = layers.len() - 1;
        if layers[..last]
            .iter()
            .any(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::data("softmax is only allowed on the output layer"));
        }
        let softmax_out = layers[last].activation == Activation::Softmax;
        if softmax_out != (loss == LossKind::CrossEntropy) {
            return Err(Error::data(
                "cross-entropy loss requires a softmax output layer and vice versa",
            ));
        }
        Ok(Network { layers, loss })
    }

    /// Glorot-initialized network for the given layer widths and activations.
    pub fn init(
        dims: &[usize],
        activations: &[Activation],
        loss: LossKind,
        seed: u64,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::data("need one activation per layer"));
        }
        let layers: Vec<DenseLayer> = dims
            .windows(2)
            .zip(activations)
            .map(|(d, &a)| DenseLayer::zeros(d[0], d[1], a))
            .collect();
        let shapes: Vec<(usize, usize)> = dims.windows(2).map(|d| (d[0], d[1])).collect();
        let mut net = Network::new(layers, loss)?;
        net.set_params(&init_parameters(&shapes, seed))?;
        Ok(net)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    /// Layer widths from input to output.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::fan_out))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(DenseLayer::num_params).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            l.write_params(&mut out);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension {
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        let mut offset = 0;
        for l in &mut self.layers {
            offset += l.read_params(&params[offset..]);
        }
        Ok(())
    }

    /// Per-layer activations for one input; the last entry is the output.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut current = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("shape");
        let mut out = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            current = l.apply(current.view());
            out.push(current.row(0).to_vec());
        }
        Ok(out)
    }

    /// Output rows for a batch of inputs.
    pub fn output(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        let rows = x.nrows();
        let mut out = Array2::zeros((rows, self.output_dim()));
        let ranges: Vec<(usize, usize)> = (0..rows)
            .step_by(CHUNK_ROWS)
            .map(|a| (a, (a + CHUNK_ROWS).min(rows)))
            .collect();
        let parts: Vec<Array2<f64>> = ranges
            .par_iter()
            .map(|&(a, b)| {
                let mut cur = x.slice(s![a..b, ..]).to_owned();
                for l in &self.layers {
                    cur = l.apply(cur.view());
                }
                cur
            })
            .collect();
        for ((a, b), part) in ranges.into_iter().zip(parts) {
            out.slice_mut(s![a..b, ..]).assign(&part);
        }
        Ok(out)
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.inputs.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: batch.inputs.ncols(),
            });
        }
        if batch.targets.ncols() != self.output_dim() {
            return Err(Error::Dimension {
                expected: self.output_dim(),
                actual: batch.targets.ncols(),
            });
        }
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        if self.loss == LossKind::CrossEntropy {
            check_one_hot(batch.targets.view())?;
        }
        Ok(())
    }

    /// Contribution of rows `a..b` to the batch-mean loss over `n` samples.
    fn chunk_loss(&self, batch: &Batch, a: usize, b: usize, n: usize) -> f64 {
        let mut cur = batch.inputs.slice(s![a..b, ..]).to_owned();
        for l in &self.layers {
            cur = l.apply(cur.view());
        }
        self.loss_sum(cur.view(), batch.targets.slice(s![a..b, ..])) / self.normalizer(n)
    }

    fn normalizer(&self, n: usize) -> f64 {
        match self.loss {
            LossKind::Mse => (n * self.output_dim()) as f64,
            LossKind::CrossEntropy => n as f64,
        }
    }

    fn loss_sum(&self, out: ArrayView2<f64>, targets: ArrayView2<f64>) -> f64 {
        match self.loss {
            LossKind::Mse => out
                .iter()
                .zip(targets.iter())
                .map(|(o, t)| (o - t) * (o - t))
                .sum(),
            LossKind::CrossEntropy => -out
                .iter()
                .zip(targets.iter())
                .filter(|(_, &t)| t != 0.0)
                .map(|(o, t)| t * o.max(LOG_FLOOR).ln())
                .sum::<f64>(),
        }
    }

    pub fn loss(&self, batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let n = batch.len();
        Ok(chunked_loss(n, |a, b| self.chunk_loss(batch, a, b, n)))
    }

    pub fn gradient(&self, batch: &Batch) -> Result<Vec<f64>> {
        Ok(self.loss_and_gradient(batch)?.1)
    }

    pub fn loss_and_gradient(&self, batch: &Batch) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let n = batch.len();
        let dim = self.num_params();
        Ok(chunked_sum(n, dim, |a, b| {
            self.chunk_gradient(batch, a, b, n)
        }))
    }

    fn chunk_gradient(&self, batch: &Batch, a: usize, b: usize, n: usize) -> (f64, Vec<f64>) {
        let x = batch.inputs.slice(s![a..b, ..]);
        let t = batch.targets.slice(s![a..b, ..]);
        let norm = self.normalizer(n);

        // Forward, keeping pre-activations and activations.
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (z, act) = if i == 0 {
                l.forward_batch(x)
            } else {
                l.forward_batch(acts[i - 1].view())
            };
            pre.push(z);
            acts.push(act);
        }
        let out = acts.last().expect("non-empty");
        let loss = self.loss_sum(out.view(), t) / norm;

        // Output delta.
        let mut delta = match self.loss {
            LossKind::CrossEntropy => (out - &t) / norm,
            LossKind::Mse => {
                let mut d = (out - &t) * (2.0 / norm);
                let last = self.layers.len() - 1;
                if self.layers[last].activation == Activation::SatLin {
                    d.zip_mut_with(&pre[last], |d, &z| *d *= satlin_grad(z));
                }
                d
            }
        };

        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { acts[i - 1].view() };
            let dw = input.t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            let mut g = Vec::with_capacity(self.layers[i].num_params());
            g.extend(dw.iter());
            g.extend(db.iter());
            grads[i] = g;
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                match self.layers[i - 1].activation {
                    Activation::SatLin => {
                        back.zip_mut_with(&pre[i - 1], |d, &z| *d *= satlin_grad(z))
                    }
                    Activation::Linear => {}
                    Activation::Softmax => unreachable!("softmax is output-only"),
                }
                delta = back;
            }
        }
        (loss, grads.concat())
    }
}

fn check_one_hot(targets: ArrayView2<f64>) -> Result<()> {
    for (i, row) in targets.rows().into_iter().enumerate() {
        let ones = row.iter().filter(|&&v| v == 1.0).count();
        let zeros = row.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != row.len() {
            return Err(Error::Target(format!("row {i} is not one-hot")));
        }
    }
    Ok(())
}

/// SCG objective over the parameters of a network on a fixed batch.
pub struct NetworkObjective<'a> {
    net: Network,
    batch: &'a Batch,
}

impl<'a> NetworkObjective<'a> {
    pub fn new(net: Network, batch: &'a Batch) -> Result<Self> {
        net.check_batch(batch)?;
        Ok(NetworkObjective { net, batch })
    }

    pub fn into_network(self) -> Network {
        self.net
    }
}

impl Objective for NetworkObjective<'_> {
    fn dim(&self) -> usize {
        self.net.num_params()
    }

    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        self.net.set_params(theta)?;
        self.net.loss(self.batch)
    }

    fn value_and_gradient(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.net.set_params(theta)?;
        self.net.loss_and_gradient(self.batch)
    }
}

/// Trains `net` on `batch` in place and returns the optimizer outcome.
pub fn train_network(net: &mut Network, batch: &Batch, cfg: &TrainConfig) -> Result<ScgOutcome> {
    let theta0 = net.params();
    let mut objective = NetworkObjective::new(net.clone(), batch)?;
    let outcome = scg_minimize(&mut objective, &theta0, cfg)?;
    net.set_params(&outcome.params)?;
    Ok(outcome)
}
