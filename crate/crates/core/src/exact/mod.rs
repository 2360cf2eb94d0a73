//! Closed-form gradient `dL/dx = Ã^T vec(Γ)` with respect to `x = vec(X1 ⊗ X2)`.
//!
//! Entry `(a*d + c)*d^2 + r*d + e` of the gradient belongs to `X[(a*d + c), (r*d + e)] =
//! X1[a, r] X2[c, e]`. The contraction with `Ã` is assembled lag by lag:
//! `T_t[a, c] = sum_i Γ[i + t, i] A1[i + t, a] A2[i, c]`, then each `T_t` is spread against
//! the sparse `vec(W_t) / d`.

pub mod oracle;

use crate::error::{Error, Result};
use crate::rope::{forward, ForwardState, Instance};
use crate::tensor::{dot, Matrix, Vector};

#[derive(Clone, Debug)]
pub struct GradIntermediates {
    /// `C Vy^T`; row `j0` is `β(x)_{j0}`.
    pub beta: Matrix,
    /// Row `j0` is `(diag(s) - s s^T) β_{j0}` with `s = S_{j0,*}`.
    pub gamma: Matrix,
    pub g: Vector,
    pub loss: f64,
}

/// `Beta = C Vy^T`.
pub fn compute_beta(state: &ForwardState) -> Matrix {
    state.c.matmul_t(&state.vy).expect("forward state shapes")
}

fn gamma_row(s: &[f64], beta: &[f64], out: &mut [f64]) {
    let r = dot(s, beta);
    for ((o, &si), &bi) in out.iter_mut().zip(s).zip(beta) {
        *o = si * (bi - r);
    }
}

/// Row `j0` of the result is `s ∘ β - s <s, β>`.
pub fn compute_gamma(state: &ForwardState, beta: &Matrix) -> Result<Matrix> {
    if beta.shape() != state.s.shape() {
        return Err(Error::shape("compute_gamma", beta.shape(), state.s.shape()));
    }
    let mut gamma = Matrix::zeros(beta.rows(), beta.cols());
    for j0 in 0..beta.rows() {
        gamma_row(state.s.row(j0), beta.row(j0), gamma.row_mut(j0));
    }
    Ok(gamma)
}

/// Per-lag sums `T_t`, stored flat as `(2n - 1) x d x d` with lag `t` at block `t + n - 1`.
struct LagSums {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl LagSums {
    fn new(n: usize, d: usize) -> Self {
        LagSums {
            n,
            d,
            data: vec![0.0; (2 * n - 1) * d * d],
        }
    }

    /// Adds `w * A1_{j0}^T A2_i` to `T_{j0 - i}`.
    #[inline]
    fn add_pair(&mut self, j0: usize, i: usize, w: f64, a1row: &[f64], a2row: &[f64]) {
        let d = self.d;
        let base = (j0 + self.n - 1 - i) * d * d;
        let block = &mut self.data[base..base + d * d];
        for (a, &x) in a1row.iter().enumerate() {
            let wa = w * x;
            for (slot, &y) in block[a * d..(a + 1) * d].iter_mut().zip(a2row) {
                *slot += wa * y;
            }
        }
    }

    fn scatter(&self, inst: &Instance) -> Vector {
        scatter_lag_sums(inst, &self.data)
    }
}

/// `g[(a*d + c)*d^2 + q] = sum_t T_t[a, c] vec(W_t)[q] / d`, summed in increasing `t`.
/// `lag_sums` holds `T_t` row-major at block `t + n - 1`.
pub(crate) fn scatter_lag_sums(inst: &Instance, lag_sums: &[f64]) -> Vector {
    let (n, d) = (inst.n(), inst.d());
    let dd = d * d;
    debug_assert_eq!(lag_sums.len(), (2 * n - 1) * dd);
    let scale = 1.0 / d as f64;
    let mut g = vec![0.0; dd * dd];
    for idx in 0..2 * n - 1 {
        let block = &lag_sums[idx * dd..(idx + 1) * dd];
        for &(r, c, v) in inst.weights().lag_at(idx) {
            let q = r * d + c;
            let wv = v * scale;
            for (p, &tv) in block.iter().enumerate() {
                g[p * dd + q] += tv * wv;
            }
        }
    }
    Vector::from_vec_unchecked(g)
}

/// `Ã^T vec(Γ)` for a dense `n x n` matrix `Γ`, by lag grouping in `O(n^2 d^2)`.
pub fn contract_structured(inst: &Instance, gamma: &Matrix) -> Result<Vector> {
    let n = inst.n();
    if gamma.shape() != (n, n) {
        return Err(Error::shape("contract_structured", gamma.shape(), (n, n)));
    }
    let mut sums = LagSums::new(n, inst.d());
    for j0 in 0..n {
        let a1row = inst.a1().row(j0);
        for (i, &w) in gamma.row(j0).iter().enumerate() {
            sums.add_pair(j0, i, w, a1row, inst.a2().row(i));
        }
    }
    Ok(sums.scatter(inst))
}

/// Exact gradient with the intermediate `Beta` and `Gamma` matrices.
pub fn exact_gradient(inst: &Instance) -> Result<GradIntermediates> {
    let state = forward(inst)?;
    let beta = compute_beta(&state);
    let gamma = compute_gamma(&state, &beta)?;
    let g = contract_structured(inst, &gamma)?;
    Ok(GradIntermediates {
        beta,
        gamma,
        g,
        loss: state.loss,
    })
}

/// Same gradient as [`exact_gradient`], one row at a time, holding `O(n d^2)` memory.
pub fn exact_gradient_streaming(inst: &Instance) -> Result<Vector> {
    let (n, d) = (inst.n(), inst.d());
    let q = inst.query();
    let k = inst.key();
    let vy = inst.value();
    let w = inst.weights();
    let scale = 1.0 / d as f64;
    let mut sums = LagSums::new(n, d);
    let mut u = vec![0.0; n];
    let mut beta = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    let mut out = vec![0.0; d];
    for j0 in 0..n {
        let qrow = q.row(j0);
        for (i, ui) in u.iter_mut().enumerate() {
            let krow = k.row(i);
            let mut acc = 0.0;
            for &(r, c, v) in w.lag_at(j0 + n - 1 - i) {
                acc += qrow[r] * v * krow[c];
            }
            *ui = (acc * scale).exp();
        }
        let alpha: f64 = u.iter().sum();
        if !alpha.is_finite() {
            return Err(Error::InstanceBound(format!(
                "row {j0} overflows exp; use a smaller B"
            )));
        }
        u.iter_mut().for_each(|v| *v /= alpha);
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &si) in u.iter().enumerate() {
            for (o, &v) in out.iter_mut().zip(vy.row(i)) {
                *o += si * v;
            }
        }
        // residual row, then β_{j0} = Vy c_{j0}^T
        for (o, &e) in out.iter_mut().zip(inst.e().row(j0)) {
            *o -= e;
        }
        for (i, b) in beta.iter_mut().enumerate() {
            *b = dot(vy.row(i), &out);
        }
        gamma_row(&u, &beta, &mut gamma);
        let a1row = inst.a1().row(j0);
        for (i, &gv) in gamma.iter().enumerate() {
            sums.add_pair(j0, i, gv, a1row, inst.a2().row(i));
        }
    }
    Ok(sums.scatter(inst))
}

/// Maps `g = dL/dvec(X1 ⊗ X2)` to `(dL/dX1, dL/dX2)`.
pub fn chain_to_factors(g: &[f64], x1: &Matrix, x2: &Matrix) -> Result<(Matrix, Matrix)> {
    let d = x1.rows();
    if x1.shape() != (d, d) || x2.shape() != (d, d) {
        return Err(Error::shape("chain_to_factors", x1.shape(), x2.shape()));
    }
    let dd = d * d;
    if g.len() != dd * dd {
        return Err(Error::shape("chain_to_factors", (g.len(), 1), (dd * dd, 1)));
    }
    let mut g1 = Matrix::zeros(d, d);
    let mut g2 = Matrix::zeros(d, d);
    for a in 0..d {
        for c in 0..d {
            let row = (a * d + c) * dd;
            for b in 0..d {
                for e in 0..d {
                    let gv = g[row + b * d + e];
                    g1[(a, b)] += gv * x2[(c, e)];
                    g2[(c, e)] += gv * x1[(a, b)];
                }
            }
        }
    }
    Ok((g1, g2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rope::testutil::{random_instance, Mode};
    use crate::rope::{
        forward_big_x, forward_factors, self_consistent_target, InstanceParts, RopeWeights,
    };
    use crate::tensor::{kron, linf, linf_diff};

    fn fd_big_x(inst: &Instance, h: f64) -> Vec<f64> {
        let x = kron(inst.x1(), inst.x2()).unwrap();
        (0..x.as_slice().len())
            .map(|p| {
                let mut plus = x.clone();
                plus.as_mut_slice()[p] += h;
                let mut minus = x.clone();
                minus.as_mut_slice()[p] -= h;
                (forward_big_x(inst, &plus).unwrap().loss
                    - forward_big_x(inst, &minus).unwrap().loss)
                    / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(got: &[f64], want: &[f64]) -> f64 {
        linf_diff(got, want) / linf(want).max(1e-300)
    }

    #[test]
    fn beta_matches_summation_loop() {
        let inst = random_instance(4, 2, Mode::Rotary, 2);
        let st = forward(&inst).unwrap();
        let beta = compute_beta(&st);
        for j0 in 0..4 {
            for i in 0..4 {
                let want: f64 = (0..2).map(|i0| st.c[(j0, i0)] * st.vy[(i, i0)]).sum();
                assert!((beta[(j0, i)] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn gamma_matches_dense_projection() {
        let inst = random_instance(4, 2, Mode::Identity, 4);
        let st = forward(&inst).unwrap();
        let beta = compute_beta(&st);
        let gamma = compute_gamma(&st, &beta).unwrap();
        for j0 in 0..4 {
            let s = st.s.row(j0);
            for i in 0..4 {
                let want: f64 = (0..4)
                    .map(|k| {
                        let jac = if i == k { s[i] } else { 0.0 } - s[i] * s[k];
                        jac * beta[(j0, k)]
                    })
                    .sum();
                assert!((gamma[(j0, i)] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_constant_annihilation() {
        let inst = random_instance(5, 2, Mode::Rotary, 8);
        let st = forward(&inst).unwrap();
        let beta = compute_beta(&st);
        let gamma = compute_gamma(&st, &beta).unwrap();
        let mut shifted = beta.clone();
        shifted.row_mut(2).iter_mut().for_each(|v| *v += 3.5);
        let g2 = compute_gamma(&st, &shifted).unwrap();
        assert!(linf_diff(gamma.row(2), g2.row(2)) < 1e-12);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let inst = random_instance(6, 2, Mode::Rotary, 5);
        let inst = inst
            .with_target(self_consistent_target(&inst).unwrap())
            .unwrap();
        let out = exact_gradient(&inst).unwrap();
        assert!(out.beta.max_abs() < 1e-12);
        assert!(out.gamma.max_abs() < 1e-12);
        assert!(out.g.max_abs() < 1e-12);
    }

    #[test]
    fn single_token_has_zero_gradient() {
        let inst = random_instance(1, 2, Mode::Rotary, 6);
        let out = exact_gradient(&inst).unwrap();
        assert_eq!(out.gamma.shape(), (1, 1));
        assert!(out.gamma[(0, 0)].abs() < 1e-15);
        assert!(out.g.max_abs() < 1e-15);
    }

    #[test]
    fn hand_case_two_tokens_scalar_head() {
        let col = |v: &[f64]| Matrix::new(v.len(), 1, v.to_vec()).unwrap();
        let one = Matrix::identity(1);
        let inst = Instance::new(InstanceParts {
            a1: col(&[0.5, -0.25]),
            a2: col(&[0.75, 0.4]),
            a3: col(&[1.0, 0.3]),
            x1: one.clone(),
            x2: one.clone(),
            y: one,
            e: col(&[0.2, -0.1]),
            bound: 1.0,
            weights: RopeWeights::identity(2, 1).unwrap(),
        })
        .unwrap();
        let g = exact_gradient(&inst).unwrap().g;
        // closed-form expansion of the two-row sum
        assert!((g[0] - 0.0033761058615735286).abs() < 1e-15);
        assert!(
            (oracle::gradient_entry_oracle(&inst, 0).unwrap() - 0.0033761058615735286).abs()
                < 1e-15
        );
    }

    #[test]
    fn matches_finite_differences() {
        for (seed, mode) in [(11, Mode::Identity), (12, Mode::Rotary), (13, Mode::Rotary)] {
            let inst = random_instance(4, 2, mode, seed);
            let g = exact_gradient(&inst).unwrap().g;
            let fd = fd_big_x(&inst, 1e-5);
            assert!(
                rel_err(&g, &fd) <= 1e-5,
                "seed {seed}: {}",
                rel_err(&g, &fd)
            );
        }
    }

    #[test]
    fn finite_difference_error_shrinks_with_step() {
        let inst = random_instance(4, 2, Mode::Rotary, 21);
        let g = exact_gradient(&inst).unwrap().g;
        let coarse = rel_err(&g, &fd_big_x(&inst, 1e-3));
        let fine = rel_err(&g, &fd_big_x(&inst, 1e-5));
        assert!(fine < coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn streaming_matches_dense() {
        for (n, d, mode) in [
            (7, 2, Mode::Rotary),
            (9, 4, Mode::Rotary),
            (5, 3, Mode::Identity),
        ] {
            let inst = random_instance(n, d, mode, 30 + n as u64);
            let dense = exact_gradient(&inst).unwrap().g;
            let streamed = exact_gradient_streaming(&inst).unwrap();
            assert!(linf_diff(&dense, &streamed) < 1e-13);
        }
    }

    #[test]
    fn structured_matches_literal_contraction() {
        let inst = random_instance(5, 2, Mode::Rotary, 40);
        let out = exact_gradient(&inst).unwrap();
        let mut lit = vec![0.0; 16];
        for j0 in 0..5 {
            let block = crate::rope::build_tilde_a_block(&inst, j0).unwrap();
            for i in 0..5 {
                for (p, &v) in block.row(i).iter().enumerate() {
                    lit[p] += out.gamma[(j0, i)] * v;
                }
            }
        }
        assert!(linf_diff(&out.g, &lit) < 1e-14);
    }

    #[test]
    fn chain_rule_trivial_cases() {
        let x = Matrix::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let g: Vec<f64> = (0..16).map(|k| k as f64 * 0.1).collect();
        let (g1, _) = chain_to_factors(&g, &x, &Matrix::zeros(2, 2)).unwrap();
        assert_eq!(g1.max_abs(), 0.0);
        let (g1, g2) = chain_to_factors(
            &[2.0],
            &Matrix::identity(1).scale(3.0),
            &Matrix::identity(1).scale(-4.0),
        )
        .unwrap();
        assert_eq!(g1[(0, 0)], -8.0);
        assert_eq!(g2[(0, 0)], 6.0);
        assert!(chain_to_factors(&g[..15], &x, &x).is_err());
    }

    #[test]
    fn chain_rule_matches_factor_perturbation() {
        for seed in [50, 51] {
            let inst = random_instance(4, 2, Mode::Rotary, seed);
            let g = exact_gradient(&inst).unwrap().g;
            let (g1, g2) = chain_to_factors(&g, inst.x1(), inst.x2()).unwrap();
            let h = 1e-5;
            let loss = |x1: &Matrix, x2: &Matrix| forward_factors(&inst, x1, x2).unwrap().loss;
            let mut fd1 = vec![0.0; 4];
            let mut fd2 = vec![0.0; 4];
            for p in 0..4 {
                let (mut p1, mut m1) = (inst.x1().clone(), inst.x1().clone());
                p1.as_mut_slice()[p] += h;
                m1.as_mut_slice()[p] -= h;
                fd1[p] = (loss(&p1, inst.x2()) - loss(&m1, inst.x2())) / (2.0 * h);
                let (mut p2, mut m2) = (inst.x2().clone(), inst.x2().clone());
                p2.as_mut_slice()[p] += h;
                m2.as_mut_slice()[p] -= h;
                fd2[p] = (loss(inst.x1(), &p2) - loss(inst.x1(), &m2)) / (2.0 * h);
            }
            assert!(rel_err(g1.as_slice(), &fd1) <= 1e-5);
            assert!(rel_err(g2.as_slice(), &fd2) <= 1e-5);
        }
    }
}
