//! Exact forward pass: logits, the attention numerator, row normalization and the loss.

use crate::error::{Error, Result};
use crate::rope::instance::Instance;
use crate::tensor::{dot, Matrix};

/// Beyond this `exp` overflows a double.
const EXP_OVERFLOW: f64 = 700.0;

/// Guard for oracles that materialize `n^2 x d^4` blocks.
pub const MATERIALIZE_LIMIT: usize = 1 << 26;

#[derive(Clone, Debug)]
pub struct ForwardState {
    /// Attention numerator, `exp(logit)`; row `j0` is `u(x)_{j0}`.
    pub a: Matrix,
    /// Row sums of `a`, i.e. `alpha(x)`.
    pub dvec: Vec<f64>,
    /// Row-stochastic softmax `diag(dvec)^{-1} a`.
    pub s: Matrix,
    /// `v(y) = A3 Y`.
    pub vy: Matrix,
    /// Residual `S Vy - E`.
    pub c: Matrix,
    pub loss: f64,
}

fn check_index(name: &str, idx: usize, n: usize) -> Result<()> {
    if idx >= n {
        return Err(Error::Index(format!("{name} = {idx} not in 0..{n}")));
    }
    Ok(())
}

/// Exponent of entry `(j0, i)` of the attention matrix (0-based indices).
pub fn logit(inst: &Instance, j0: usize, i: usize) -> Result<f64> {
    check_index("j0", j0, inst.n())?;
    check_index("i", i, inst.n())?;
    let q = inst.a1().matmul(inst.x1())?;
    let k = inst.a2().matmul(inst.x2())?;
    Ok(pair_logit(
        inst,
        q.row(j0),
        k.row(i),
        j0 as isize - i as isize,
    ))
}

#[inline]
fn pair_logit(inst: &Instance, q: &[f64], k: &[f64], t: isize) -> f64 {
    let mut acc = 0.0;
    for &(r, c, v) in inst.weights().lag(t) {
        acc += q[r] * v * k[c];
    }
    acc / inst.d() as f64
}

/// All `n x n` logits from query rows `q` and key rows `k`.
pub fn logits_from_qk(inst: &Instance, q: &Matrix, k: &Matrix) -> Matrix {
    let n = inst.n();
    let d = inst.d() as f64;
    let w = inst.weights();
    let mut out = Matrix::zeros(n, n);
    for j0 in 0..n {
        let qrow = q.row(j0);
        let orow = out.row_mut(j0);
        for (i, o) in orow.iter_mut().enumerate() {
            let krow = k.row(i);
            let mut acc = 0.0;
            for &(r, c, v) in w.lag_at(j0 + n - 1 - i) {
                acc += qrow[r] * v * krow[c];
            }
            *o = acc / d;
        }
    }
    out
}

/// Logits for an unfactored `d^2 x d^2` parameter `X` in place of `X1 ⊗ X2`:
/// `logit = (A1_{j0} ⊗ A2_i) X vec(W_{j0-i}) / d`.
pub fn logits_from_big_x(inst: &Instance, xbig: &Matrix) -> Result<Matrix> {
    let (n, d) = (inst.n(), inst.d());
    let dd = d * d;
    if xbig.shape() != (dd, dd) {
        return Err(Error::shape("logits_from_big_x", xbig.shape(), (dd, dd)));
    }
    // m_t = X vec(W_t), reshaped d x d
    let lag_maps: Vec<Matrix> = (0..2 * n - 1)
        .map(|idx| {
            let mut m = Matrix::zeros(d, d);
            for &(r, c, v) in inst.weights().lag_at(idx) {
                let q = r * d + c;
                for p in 0..dd {
                    m.as_mut_slice()[p] += xbig[(p, q)] * v;
                }
            }
            m
        })
        .collect();
    let mut out = Matrix::zeros(n, n);
    let mut tmp = vec![0.0; d];
    for j0 in 0..n {
        let a1row = inst.a1().row(j0);
        for i in 0..n {
            let m = &lag_maps[j0 + n - 1 - i];
            for (c, t) in tmp.iter_mut().enumerate() {
                *t = (0..d).map(|a| a1row[a] * m[(a, c)]).sum();
            }
            out[(j0, i)] = dot(&tmp, inst.a2().row(i)) / d as f64;
        }
    }
    Ok(out)
}

/// `(row sums, diag(sums)^{-1} a)`.
pub fn normalize_rows(a: &Matrix) -> (Vec<f64>, Matrix) {
    let dvec = a.row_sums();
    let inv: Vec<f64> = dvec.iter().map(|v| 1.0 / v).collect();
    let s = a.scale_rows(&inv).expect("row count matches");
    (dvec, s)
}

pub fn forward_from_logits(inst: &Instance, logits: &Matrix) -> Result<ForwardState> {
    let worst = logits.max_abs();
    if worst > EXP_OVERFLOW {
        return Err(Error::InstanceBound(format!(
            "logit magnitude {worst} overflows exp; use a smaller B"
        )));
    }
    let a = logits.map(f64::exp);
    let (dvec, s) = normalize_rows(&a);
    let vy = inst.value();
    let c = s.matmul(&vy)?.sub(inst.e())?;
    let loss = 0.5 * c.frobenius_sq();
    Ok(ForwardState {
        a,
        dvec,
        s,
        vy,
        c,
        loss,
    })
}

pub fn forward(inst: &Instance) -> Result<ForwardState> {
    forward_factors(inst, inst.x1(), inst.x2())
}

/// Forward pass with substitute `X1`, `X2` (no bound re-validation; used by finite differences).
pub fn forward_factors(inst: &Instance, x1: &Matrix, x2: &Matrix) -> Result<ForwardState> {
    let q = inst.a1().matmul(x1)?;
    let k = inst.a2().matmul(x2)?;
    forward_from_logits(inst, &logits_from_qk(inst, &q, &k))
}

/// Forward pass with an unfactored parameter `X` in place of `X1 ⊗ X2`.
pub fn forward_big_x(inst: &Instance, xbig: &Matrix) -> Result<ForwardState> {
    forward_from_logits(inst, &logits_from_big_x(inst, xbig)?)
}

/// The loss as `sum_{j0,i0} 0.5 c_{j0,i0}^2`.
pub fn loss_double_sum(state: &ForwardState) -> f64 {
    let mut total = 0.0;
    for j0 in 0..state.c.rows() {
        for &c in state.c.row(j0) {
            total += 0.5 * c * c;
        }
    }
    total
}

/// Target `E := S Vy`, for which the residual and the gradient vanish.
pub fn self_consistent_target(inst: &Instance) -> Result<Matrix> {
    let st = forward(inst)?;
    st.s.matmul(&st.vy)
}

pub(crate) fn check_materialize(n: usize, d: usize) -> Result<()> {
    let d4 = d.pow(4);
    match n.checked_mul(n).and_then(|nn| nn.checked_mul(d4)) {
        Some(total) if total <= MATERIALIZE_LIMIT => Ok(()),
        _ => Err(Error::Guard(format!(
            "n²·d⁴ for n = {n}, d = {d} exceeds the 2^26 materialization limit"
        ))),
    }
}

/// Block `j0` of `Ã = (A1 ⊗ A2) ⊘ W`, scaled by `1/d`: row `i` is
/// `kron(kron(A1_{j0}, A2_i), vec(W_{j0-i})^T) / d`, so `exp(block · vec(X1 ⊗ X2))` is row
/// `j0` of the attention numerator.
pub fn build_tilde_a_block(inst: &Instance, j0: usize) -> Result<Matrix> {
    let (n, d) = (inst.n(), inst.d());
    check_materialize(n, d)?;
    check_index("j0", j0, n)?;
    let dd = d * d;
    let scale = 1.0 / d as f64;
    let a1row = inst.a1().row(j0);
    let mut block = Matrix::zeros(n, dd * dd);
    for i in 0..n {
        let a2row = inst.a2().row(i);
        let lag = inst.weights().lag(j0 as isize - i as isize);
        let row = block.row_mut(i);
        for a in 0..d {
            for c in 0..d {
                let coef = a1row[a] * a2row[c] * scale;
                let p = a * d + c;
                for &(r, cc, v) in lag {
                    row[p * dd + r * d + cc] = coef * v;
                }
            }
        }
    }
    Ok(block)
}
