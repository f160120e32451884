//! Analytic gradients against central finite differences.

use ids_core::models::AutoencoderTier;
use ids_core::neuralnet::{one_hot_targets, Activation, Batch, LossKind, Network};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-5;

/// Central differences of `f` at `theta`.
pub fn finite_differences(theta: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut work = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            work[i] = theta[i] + STEP;
            let plus = f(&work);
            work[i] = theta[i] - STEP;
            let minus = f(&work);
            work[i] = theta[i];
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt())
        .max(1e-12);
    diff / scale
}

pub fn random_matrix(
    rng: &mut ChaCha8Rng,
    rows: usize,
    cols: usize,
    lo: f64,
    hi: f64,
) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(lo..hi))
}

/// Nudges parameters so no SatLin pre-activation sits within `margin` of a kink,
/// where finite differences straddle the discontinuous derivative.
pub fn away_from_kinks(net: &Network, batch: &Batch, margin: f64) -> bool {
    let mut cur = batch.inputs.clone();
    for l in net.layers() {
        let mut z = cur.dot(&l.weights);
        z += &l.bias;
        if l.activation == Activation::SatLin
            && z.iter()
                .any(|&v| v.abs() < margin || (v - 1.0).abs() < margin)
        {
            return false;
        }
        cur = l.apply(cur.view());
    }
    true
}

pub fn check_network(
    dims: &[usize],
    acts: &[Activation],
    loss: LossKind,
    seed: u64,
) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network::init(dims, acts, loss, seed).unwrap();
    // Random nonzero biases so every code path is exercised.
    let mut params = net.params();
    for p in params.iter_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    net.set_params(&params).unwrap();

    let rows = 7;
    let inputs = random_matrix(&mut rng, rows, dims[0], 0.0, 1.0);
    let out_dim = *dims.last().unwrap();
    let targets = match loss {
        LossKind::Mse => random_matrix(&mut rng, rows, out_dim, -0.5, 1.5),
        LossKind::CrossEntropy => {
            let labels: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..out_dim)).collect();
            one_hot_targets(&labels, out_dim)
        }
    };
    let batch = Batch::new(inputs, targets).unwrap();
    if !away_from_kinks(&net, &batch, 1e-4) {
        return None;
    }
    let analytic = net.gradient(&batch).unwrap();
    let mut probe = net.clone();
    let numeric = finite_differences(&params, |t| {
        probe.set_params(t).unwrap();
        probe.loss(&batch).unwrap()
    });
    Some(relative_error(&analytic, &numeric))
}

pub fn check_tier(n: usize, m: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tier = AutoencoderTier::init(n, m, seed);
    let mut params = tier.params();
    for p in params.iter_mut() {
        *p += rng.gen_range(-0.2..0.2);
    }
    tier.set_params(&params).unwrap();
    let x = random_matrix(&mut rng, 9, n, 0.0, 1.0);
    let (_, analytic) = tier.mse_and_gradient(x.view()).unwrap();
    let mut probe = tier.clone();
    let numeric = finite_differences(&params, |t| {
        probe.set_params(t).unwrap();
        probe.mse(x.view()).unwrap()
    });
    relative_error(&analytic, &numeric)
}
