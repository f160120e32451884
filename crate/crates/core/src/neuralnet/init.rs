use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Half-width of the Glorot uniform interval.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Flattened parameters for layers of the given `(fan_in, fan_out)` shapes:
/// weights uniform in `±glorot_limit`, biases zero. Deterministic per seed.
pub fn init_parameters(shapes: &[(usize, usize)], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for &(fan_in, fan_out) in shapes {
        let limit = glorot_limit(fan_in, fan_out);
        out.extend((0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)));
        out.extend(std::iter::repeat_n(0.0, fan_out));
    }
    out
}
