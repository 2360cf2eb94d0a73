use crate::error::{Error, Result};
use crate::rope::{rotary_frequencies, Instance, WeightMode};
use crate::tensor::{dot, Matrix};

/// Separable features with `<phi_{j0}, psi_i> = logit(j0, i) + shift`.
///
/// Rotary weights factor as `W_{j0-i} = R(j0) R(i)^T`, so the query row rotated by its own
/// position pairs with the key row rotated by its own position. The last column carries
/// `sqrt(shift)` on both sides.
#[derive(Clone, Debug, PartialEq)]
pub struct TrigFeatures {
    pub phi: Matrix,
    pub psi: Matrix,
    pub shift: f64,
}

impl TrigFeatures {
    pub fn dim(&self) -> usize {
        self.phi.cols()
    }

    pub fn pair(&self, j0: usize, i: usize) -> f64 {
        dot(self.phi.row(j0), self.psi.row(i))
    }
}

/// Rotates each `(x[2b], x[2b+1])` pair of `row` as a row vector times the block `R(pos * θ_b)`.
fn rotate_row(row: &[f64], pos: f64, freqs: &[f64], out: &mut [f64]) {
    for (b, &theta) in freqs.iter().enumerate() {
        let (s, c) = (pos * theta).sin_cos();
        let (x, y) = (row[2 * b], row[2 * b + 1]);
        out[2 * b] = x * c + y * s;
        out[2 * b + 1] = -x * s + y * c;
    }
}

/// Features with shift `c_S * B^2`, which bounds every `|logit|`.
pub fn trig_features(inst: &Instance) -> Result<TrigFeatures> {
    trig_features_with_shift(inst, inst.logit_bound())
}

pub fn trig_features_with_shift(inst: &Instance, shift: f64) -> Result<TrigFeatures> {
    if !(shift >= 0.0 && shift.is_finite()) {
        return Err(Error::Parameter(format!(
            "shift must be finite and non-negative, got {shift}"
        )));
    }
    let (n, d) = (inst.n(), inst.d());
    let q = inst.query();
    let k = inst.key();
    let freqs = match inst.weights().mode() {
        WeightMode::Identity => None,
        WeightMode::Rotary { base } => Some(rotary_frequencies(d, *base)),
        WeightMode::General => {
            return Err(Error::Unsupported(
                "general sparse weights have no separable features; use the exact gradient".into(),
            ))
        }
    };
    let root = shift.sqrt();
    let side = 1.0 / (d as f64).sqrt();
    let mut phi = Matrix::zeros(n, d + 1);
    let mut psi = Matrix::zeros(n, d + 1);
    let mut buf = vec![0.0; d];
    for (src, dst) in [(&q, &mut phi), (&k, &mut psi)] {
        for j in 0..n {
            match &freqs {
                Some(f) => rotate_row(src.row(j), j as f64, f, &mut buf),
                None => buf.copy_from_slice(src.row(j)),
            }
            let row = dst.row_mut(j);
            for (o, &v) in row.iter_mut().zip(&buf) {
                *o = v * side;
            }
            row[d] = root;
        }
    }
    Ok(TrigFeatures { phi, psi, shift })
}
