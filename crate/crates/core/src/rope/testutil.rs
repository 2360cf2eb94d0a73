use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::rope::{Instance, InstanceParts, RopeWeights};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug)]
pub(crate) enum Mode {
    Identity,
    Rotary,
}

/// Small random instance with B = 1 and an unrelated random target.
pub(crate) fn random_instance(n: usize, d: usize, mode: Mode, seed: u64) -> Instance {
    random_instance_with_bound(n, d, mode, seed, 1.0)
}

pub(crate) fn random_instance_with_bound(
    n: usize,
    d: usize,
    mode: Mode,
    seed: u64,
    bound: f64,
) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beta = (bound / d as f64).sqrt();
    let mut draw = |r: usize, c: usize, scale: f64| {
        Matrix::from_fn(r, c, |_, _| rng.random_range(-scale..=scale))
    };
    let weights = match mode {
        Mode::Identity => RopeWeights::identity(n, d).unwrap(),
        Mode::Rotary => RopeWeights::rotary(n, d, 10.0).unwrap(),
    };
    Instance::new(InstanceParts {
        a1: draw(n, d, beta),
        a2: draw(n, d, beta),
        a3: draw(n, d, beta),
        x1: draw(d, d, beta),
        x2: draw(d, d, beta),
        y: draw(d, d, beta),
        e: draw(n, d, 0.5),
        bound,
        weights,
    })
    .unwrap()
}
