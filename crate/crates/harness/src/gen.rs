//! Deterministic random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use ropegrad_core::rope::{forward, Instance, InstanceParts, RopeWeights};
use ropegrad_core::tensor::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

pub const DEFAULT_BASE: f64 = 10_000.0;
pub const DEFAULT_SIGMA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GenMode {
    Identity,
    Rotary,
}

impl GenMode {
    pub fn name(self) -> &'static str {
        match self {
            GenMode::Identity => "identity",
            GenMode::Rotary => "rotary",
        }
    }
}

impl std::str::FromStr for GenMode {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(GenMode::Identity),
            "rotary" => Ok(GenMode::Rotary),
            other => Err(HarnessError::Config(format!(
                "unknown mode `{other}` (expected identity | rotary)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub bound: f64,
    pub mode: GenMode,
    pub base: f64,
    /// Standard deviation of the Gaussian noise added to the exact output to form `E`.
    pub sigma: f64,
}

impl GenParams {
    pub fn new(seed: u64, n: usize, d: usize, bound: f64, mode: GenMode) -> Self {
        GenParams {
            seed,
            n,
            d,
            bound,
            mode,
            base: DEFAULT_BASE,
            sigma: DEFAULT_SIGMA,
        }
    }

    pub fn sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize, beta: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-beta..=beta))
}

/// Shrinks `x` so that `‖a x‖∞ <= bound`.
fn fit_bound(a: &Matrix, x: Matrix, bound: f64) -> Matrix {
    let norm = a.matmul(&x).expect("generated shapes").max_abs();
    if norm > bound {
        x.scale(bound / norm * (1.0 - 1e-12))
    } else {
        x
    }
}

/// Entries uniform on `[-β, β]` with `β = sqrt(B/d)`, rescaled when a product exceeds `B`.
/// `E` is the exact output plus `σ N(0, 1)` noise.
pub fn gen_instance(p: &GenParams) -> Result<Instance> {
    if p.n == 0 || p.d == 0 {
        return Err(HarnessError::Config(format!(
            "n and d must be positive (n = {}, d = {})",
            p.n, p.d
        )));
    }
    if !(p.bound > 0.0 && p.bound.is_finite()) {
        return Err(HarnessError::Config(format!(
            "B must be positive, got {}",
            p.bound
        )));
    }
    if !(p.sigma >= 0.0 && p.sigma.is_finite()) {
        return Err(HarnessError::Config(format!(
            "sigma must be non-negative, got {}",
            p.sigma
        )));
    }
    let weights = match p.mode {
        GenMode::Identity => RopeWeights::identity(p.n, p.d)?,
        GenMode::Rotary => RopeWeights::rotary(p.n, p.d, p.base)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let beta = (p.bound / p.d as f64).sqrt();
    let a1 = uniform(&mut rng, p.n, p.d, beta);
    let a2 = uniform(&mut rng, p.n, p.d, beta);
    let a3 = uniform(&mut rng, p.n, p.d, beta);
    let x1 = fit_bound(&a1, uniform(&mut rng, p.d, p.d, beta), p.bound);
    let x2 = fit_bound(&a2, uniform(&mut rng, p.d, p.d, beta), p.bound);
    let y = fit_bound(&a3, uniform(&mut rng, p.d, p.d, beta), p.bound);
    let noise = Matrix::from_fn(p.n, p.d, |_, _| {
        p.sigma * rng.sample::<f64, _>(StandardNormal)
    });
    let draft = Instance::new(InstanceParts {
        a1,
        a2,
        a3,
        x1,
        x2,
        y,
        e: Matrix::zeros(p.n, p.d),
        bound: p.bound,
        weights,
    })?;
    let st = forward(&draft)?;
    let e = st.s.matmul(&st.vy)?.add(&noise)?;
    Ok(draft.with_target(e)?)
}
