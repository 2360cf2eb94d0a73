//! Entrywise gradient oracle built from the chain of partial derivatives of one softmax row.
//!
//! Everything here works on the materialized block `Ã_{j0}` (`n x d^4`) and is meant for
//! small cross-checks only.

use crate::error::Result;
use crate::rope::{build_tilde_a_block, Instance};
use crate::tensor::{dot, kron, Matrix, Vector};

/// Row `j0` of the attention problem evaluated at an arbitrary `x`.
#[derive(Clone, Debug)]
pub struct RowContext {
    pub block: Matrix,
    /// `u = exp(Ã_{j0} x)`.
    pub u: Vec<f64>,
    /// `α = <u, 1>`.
    pub alpha: f64,
    /// `s = u / α`.
    pub s: Vec<f64>,
}

pub fn row_context(inst: &Instance, x: &[f64], j0: usize) -> Result<RowContext> {
    let block = build_tilde_a_block(inst, j0)?;
    let u: Vec<f64> = block.matvec(x)?.into_iter().map(f64::exp).collect();
    let alpha: f64 = u.iter().sum();
    let s = u.iter().map(|v| v / alpha).collect();
    Ok(RowContext { block, u, alpha, s })
}

/// `d(Ã_{j0} x)/dx_i`: column `i` of the block.
pub fn part1_dlogits(ctx: &RowContext, i: usize) -> Vec<f64> {
    ctx.block.col(i)
}

/// `du/dx_i = u ∘ Ã_{*,i}`.
pub fn part2_du(ctx: &RowContext, i: usize) -> Vec<f64> {
    part1_dlogits(ctx, i)
        .iter()
        .zip(&ctx.u)
        .map(|(a, u)| a * u)
        .collect()
}

/// `dα/dx_i = <Ã_{*,i}, u>`.
pub fn part3_dalpha(ctx: &RowContext, i: usize) -> f64 {
    dot(&part1_dlogits(ctx, i), &ctx.u)
}

/// `ds/dx_i = -s <Ã_{*,i}, s> + s ∘ Ã_{*,i}`.
pub fn part4_ds(ctx: &RowContext, i: usize) -> Vec<f64> {
    let col = part1_dlogits(ctx, i);
    let inner = dot(&col, &ctx.s);
    ctx.s
        .iter()
        .zip(&col)
        .map(|(s, a)| s * (a - inner))
        .collect()
}

/// `d<s, v>/dx_i` for a value column `v`.
pub fn part5_ds_dot_v(ctx: &RowContext, i: usize, v: &[f64]) -> f64 {
    dot(&part4_ds(ctx, i), v)
}

/// `dc_{j0,i0}/dx_i`; the target is constant so this equals the previous part.
pub fn part6_dc(ctx: &RowContext, i: usize, v: &[f64]) -> f64 {
    part5_ds_dot_v(ctx, i, v)
}

/// `d(0.5 c_{j0,i0}^2)/dx_i = c_{j0,i0} dc_{j0,i0}/dx_i`.
pub fn part7_dloss(ctx: &RowContext, i: usize, v: &[f64], c: f64) -> f64 {
    c * part6_dc(ctx, i, v)
}

struct OracleSetup {
    contexts: Vec<RowContext>,
    value_cols: Vec<Vec<f64>>,
    residual: Matrix,
}

fn setup(inst: &Instance) -> Result<OracleSetup> {
    let x = kron(inst.x1(), inst.x2())?;
    let vy = inst.value();
    let value_cols: Vec<Vec<f64>> = (0..inst.d()).map(|i0| vy.col(i0)).collect();
    let contexts = (0..inst.n())
        .map(|j0| row_context(inst, x.as_slice(), j0))
        .collect::<Result<Vec<_>>>()?;
    let residual = Matrix::from_fn(inst.n(), inst.d(), |j0, i0| {
        dot(&contexts[j0].s, &value_cols[i0]) - inst.e()[(j0, i0)]
    });
    Ok(OracleSetup {
        contexts,
        value_cols,
        residual,
    })
}

fn entry(setup: &OracleSetup, i: usize) -> f64 {
    let mut total = 0.0;
    for (j0, ctx) in setup.contexts.iter().enumerate() {
        for (i0, v) in setup.value_cols.iter().enumerate() {
            total += part7_dloss(ctx, i, v, setup.residual[(j0, i0)]);
        }
    }
    total
}

/// `dL/dx_i` as the literal double sum over rows `j0` and output columns `i0`.
pub fn gradient_entry_oracle(inst: &Instance, i: usize) -> Result<f64> {
    let d4 = inst.d().pow(4);
    if i >= d4 {
        return Err(crate::Error::Index(format!(
            "gradient index {i} not in 0..{d4}"
        )));
    }
    Ok(entry(&setup(inst)?, i))
}

/// All `d^4` oracle entries, sharing the per-row setup.
pub fn oracle_gradient(inst: &Instance) -> Result<Vector> {
    let s = setup(inst)?;
    Vector::new((0..inst.d().pow(4)).map(|i| entry(&s, i)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::exact_gradient;
    use crate::rope::self_consistent_target;
    use crate::rope::testutil::{random_instance, Mode};
    use crate::tensor::linf_diff;

    fn perturbed(inst: &Instance, j0: usize, i: usize, h: f64) -> (RowContext, RowContext) {
        let x = kron(inst.x1(), inst.x2()).unwrap().into_vec();
        let mut plus = x.clone();
        plus[i] += h;
        let mut minus = x;
        minus[i] -= h;
        (
            row_context(inst, &plus, j0).unwrap(),
            row_context(inst, &minus, j0).unwrap(),
        )
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn parts_match_finite_differences() {
        let inst = random_instance(4, 2, Mode::Rotary, 70);
        let x = kron(inst.x1(), inst.x2()).unwrap().into_vec();
        let vy = inst.value();
        let h = 1e-6;
        for j0 in [0, 3] {
            let ctx = row_context(&inst, &x, j0).unwrap();
            for i in [0, 5, 10, 15] {
                let (p, m) = perturbed(&inst, j0, i, h);
                let fd = |f: &dyn Fn(&RowContext) -> f64| (f(&p) - f(&m)) / (2.0 * h);

                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let lp = ctx.block.matvec(&xp).unwrap();
                let lm = ctx.block.matvec(&xm).unwrap();
                for (k, &v) in part1_dlogits(&ctx, i).iter().enumerate() {
                    assert!(close(v, (lp[k] - lm[k]) / (2.0 * h), 1e-8));
                }
                let du = part2_du(&ctx, i);
                for k in 0..4 {
                    assert!(close(du[k], fd(&|c: &RowContext| c.u[k]), 1e-6));
                }
                assert!(close(
                    part3_dalpha(&ctx, i),
                    fd(&|c: &RowContext| c.alpha),
                    1e-6
                ));
                let ds = part4_ds(&ctx, i);
                for k in 0..4 {
                    assert!(close(ds[k], fd(&|c: &RowContext| c.s[k]), 1e-6));
                }
                for i0 in 0..2 {
                    let v = vy.col(i0);
                    let e = inst.e()[(j0, i0)];
                    assert!(close(
                        part5_ds_dot_v(&ctx, i, &v),
                        fd(&|c: &RowContext| dot(&c.s, &v)),
                        1e-6
                    ));
                    assert!(close(
                        part6_dc(&ctx, i, &v),
                        fd(&|c: &RowContext| dot(&c.s, &v) - e),
                        1e-6
                    ));
                    let c0 = dot(&ctx.s, &v) - e;
                    let half_sq = |c: &RowContext| 0.5 * (dot(&c.s, &v) - e).powi(2);
                    assert!(close(part7_dloss(&ctx, i, &v, c0), fd(&half_sq), 1e-6));
                }
            }
        }
    }

    #[test]
    fn part1_column_is_block_slope() {
        let inst = random_instance(3, 2, Mode::Identity, 71);
        let x = kron(inst.x1(), inst.x2()).unwrap().into_vec();
        let ctx = row_context(&inst, &x, 1).unwrap();
        let mut e7 = vec![0.0; 16];
        e7[7] = 1.0;
        assert_eq!(part1_dlogits(&ctx, 7), ctx.block.matvec(&e7).unwrap());
    }

    #[test]
    fn zero_residual_oracle_is_zero() {
        let inst = random_instance(4, 2, Mode::Rotary, 72);
        let inst = inst
            .with_target(self_consistent_target(&inst).unwrap())
            .unwrap();
        assert!(oracle_gradient(&inst).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn oracle_agrees_with_structured_gradient() {
        for (n, d, mode, seed) in [
            (4, 2, Mode::Rotary, 73),
            (4, 2, Mode::Identity, 74),
            (3, 4, Mode::Rotary, 75),
        ] {
            let inst = random_instance(n, d, mode, seed);
            let g = exact_gradient(&inst).unwrap().g;
            let o = oracle_gradient(&inst).unwrap();
            assert!(linf_diff(&g, &o) < 1e-10);
            assert!((gradient_entry_oracle(&inst, 3).unwrap() - g[3]).abs() < 1e-10);
        }
        let inst = random_instance(2, 2, Mode::Rotary, 76);
        assert!(gradient_entry_oracle(&inst, 16).is_err());
    }
}
