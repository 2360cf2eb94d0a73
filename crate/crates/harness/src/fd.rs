//! Central finite differences of the loss.

use ropegrad_core::rope::{forward_big_x, forward_factors, Instance};
use ropegrad_core::tensor::{kron, Matrix, Vector};

use crate::error::{HarnessError, Result};

pub const MAX_FD_ENTRIES: usize = 4096;

/// `dL/dx` for `x = vec(X)`, perturbing the unfactored `d^2 x d^2` parameter `X` directly.
pub fn finite_diff_gradient(inst: &Instance, h: f64) -> Result<Vector> {
    let d4 = inst.d().pow(4);
    if d4 > MAX_FD_ENTRIES {
        return Err(HarnessError::Config(format!(
            "finite differences need 2·d⁴ forward passes; d⁴ = {d4} exceeds {MAX_FD_ENTRIES}"
        )));
    }
    check_step(h)?;
    let x = kron(inst.x1(), inst.x2())?;
    let mut g = Vec::with_capacity(d4);
    for p in 0..d4 {
        let mut plus = x.clone();
        plus.as_mut_slice()[p] += h;
        let mut minus = x.clone();
        minus.as_mut_slice()[p] -= h;
        let lp = forward_big_x(inst, &plus)?.loss;
        let lm = forward_big_x(inst, &minus)?.loss;
        g.push((lp - lm) / (2.0 * h));
    }
    Ok(Vector::new(g)?)
}

/// `(dL/dX1, dL/dX2)` by perturbing each factor with the other held fixed.
pub fn finite_diff_factors(inst: &Instance, h: f64) -> Result<(Matrix, Matrix)> {
    check_step(h)?;
    let d = inst.d();
    let loss = |x1: &Matrix, x2: &Matrix| forward_factors(inst, x1, x2).map(|s| s.loss);
    let mut g1 = Matrix::zeros(d, d);
    let mut g2 = Matrix::zeros(d, d);
    for p in 0..d * d {
        let (mut a, mut b) = (inst.x1().clone(), inst.x1().clone());
        a.as_mut_slice()[p] += h;
        b.as_mut_slice()[p] -= h;
        g1.as_mut_slice()[p] = (loss(&a, inst.x2())? - loss(&b, inst.x2())?) / (2.0 * h);
        let (mut a, mut b) = (inst.x2().clone(), inst.x2().clone());
        a.as_mut_slice()[p] += h;
        b.as_mut_slice()[p] -= h;
        g2.as_mut_slice()[p] = (loss(inst.x1(), &a)? - loss(inst.x1(), &b)?) / (2.0 * h);
    }
    Ok((g1, g2))
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(HarnessError::Config(format!(
            "step h must be positive, got {h}"
        )));
    }
    Ok(())
}

/// `‖got - want‖∞ / ‖want‖∞`, falling back to the absolute error when `want` vanishes.
pub fn relative_linf(got: &[f64], want: &[f64]) -> f64 {
    let diff = ropegrad_core::tensor::linf_diff(got, want);
    let scale = ropegrad_core::tensor::linf(want);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}
