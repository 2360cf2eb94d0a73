use crate::error::{Error, Result};
use crate::rope::weights::RopeWeights;
use crate::tensor::Matrix;

/// Largest admissible logit bound `c_S * B^2`; `exp(40)` leaves ample double range.
pub const MAX_LOGIT_BOUND: f64 = 40.0;

/// All inputs of one regression problem.
///
/// Attention logits are `(A1 X1)_{j0,*} W_{j0-i} (A2 X2)_{i,*}^T / d`, values are `A3 Y`,
/// and the target is `E`.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    n: usize,
    d: usize,
    a1: Matrix,
    a2: Matrix,
    a3: Matrix,
    x1: Matrix,
    x2: Matrix,
    y: Matrix,
    e: Matrix,
    bound: f64,
    weights: RopeWeights,
}

pub struct InstanceParts {
    pub a1: Matrix,
    pub a2: Matrix,
    pub a3: Matrix,
    pub x1: Matrix,
    pub x2: Matrix,
    pub y: Matrix,
    pub e: Matrix,
    pub bound: f64,
    pub weights: RopeWeights,
}

fn expect_shape(name: &str, m: &Matrix, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::Invariant(format!(
            "{name} is {}x{}, expected {}x{}",
            m.rows(),
            m.cols(),
            shape.0,
            shape.1
        )));
    }
    Ok(())
}

impl Instance {
    /// Validates every invariant and reports the first one violated.
    pub fn new(parts: InstanceParts) -> Result<Self> {
        let n = parts.weights.n();
        let d = parts.weights.d();
        expect_shape("A1", &parts.a1, (n, d))?;
        expect_shape("A2", &parts.a2, (n, d))?;
        expect_shape("A3", &parts.a3, (n, d))?;
        expect_shape("E", &parts.e, (n, d))?;
        expect_shape("X1", &parts.x1, (d, d))?;
        expect_shape("X2", &parts.x2, (d, d))?;
        expect_shape("Y", &parts.y, (d, d))?;
        let bound = parts.bound;
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Invariant(format!(
                "bound B must be positive, got {bound}"
            )));
        }
        let inst = Instance {
            n,
            d,
            a1: parts.a1,
            a2: parts.a2,
            a3: parts.a3,
            x1: parts.x1,
            x2: parts.x2,
            y: parts.y,
            e: parts.e,
            bound,
            weights: parts.weights,
        };
        let slack = bound * (1.0 + 1e-12);
        for (name, m) in [
            ("A1·X1", inst.query()),
            ("A2·X2", inst.key()),
            ("A3·Y", inst.value()),
        ] {
            let norm = m.max_abs();
            if norm > slack {
                return Err(Error::Invariant(format!(
                    "‖{name}‖∞ = {norm} exceeds B = {bound}"
                )));
            }
        }
        let lmax = inst.logit_bound();
        if lmax > MAX_LOGIT_BOUND {
            return Err(Error::InstanceBound(format!(
                "c_S·B² = {lmax} exceeds {MAX_LOGIT_BOUND}; use a smaller B"
            )));
        }
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn a1(&self) -> &Matrix {
        &self.a1
    }

    pub fn a2(&self) -> &Matrix {
        &self.a2
    }

    pub fn a3(&self) -> &Matrix {
        &self.a3
    }

    pub fn x1(&self) -> &Matrix {
        &self.x1
    }

    pub fn x2(&self) -> &Matrix {
        &self.x2
    }

    pub fn y(&self) -> &Matrix {
        &self.y
    }

    pub fn e(&self) -> &Matrix {
        &self.e
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn weights(&self) -> &RopeWeights {
        &self.weights
    }

    /// `A1 X1`.
    pub fn query(&self) -> Matrix {
        self.a1.matmul(&self.x1).expect("validated shapes")
    }

    /// `A2 X2`.
    pub fn key(&self) -> Matrix {
        self.a2.matmul(&self.x2).expect("validated shapes")
    }

    /// `v(y) = A3 Y`.
    pub fn value(&self) -> Matrix {
        self.a3.matmul(&self.y).expect("validated shapes")
    }

    /// `L_max = c_S * B^2`, an upper bound on every `|logit|`.
    pub fn logit_bound(&self) -> f64 {
        self.weights.density() * self.bound * self.bound
    }

    pub fn into_parts(self) -> InstanceParts {
        InstanceParts {
            a1: self.a1,
            a2: self.a2,
            a3: self.a3,
            x1: self.x1,
            x2: self.x2,
            y: self.y,
            e: self.e,
            bound: self.bound,
            weights: self.weights,
        }
    }

    /// Same problem with a different target `E`.
    pub fn with_target(&self, e: Matrix) -> Result<Instance> {
        expect_shape("E", &e, (self.n, self.d))?;
        Ok(Instance { e, ..self.clone() })
    }

    /// Same problem with different query/key factors, re-validated.
    pub fn with_factors(&self, x1: Matrix, x2: Matrix) -> Result<Instance> {
        let mut parts = self.clone().into_parts();
        parts.x1 = x1;
        parts.x2 = x2;
        Instance::new(parts)
    }
}
