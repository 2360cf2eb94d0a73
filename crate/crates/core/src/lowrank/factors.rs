use crate::error::{Error, Result};
use crate::lowrank::features::TrigFeatures;
use crate::poly::PolyApprox;
use crate::tensor::{dot, rowwise_kron, Matrix};

/// Default cap on any factor rank.
pub const DEFAULT_K_CAP: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    S,
    Beta,
    Gamma1,
    Gamma2,
    Gamma,
}

/// `U V^T` approximates the `n x n` matrix named by `target`.
#[derive(Clone, Debug, PartialEq)]
pub struct LowRankFactors {
    pub u: Matrix,
    pub v: Matrix,
    pub target: Target,
    pub eps_tag: f64,
    /// Measured `‖U V^T - target‖∞` when a dense check was run.
    pub verified_err: Option<f64>,
}

impl LowRankFactors {
    pub fn new(u: Matrix, v: Matrix, target: Target, eps_tag: f64) -> Result<Self> {
        if u.shape() != v.shape() {
            return Err(Error::shape("LowRankFactors::new", u.shape(), v.shape()));
        }
        Ok(LowRankFactors {
            u,
            v,
            target,
            eps_tag,
            verified_err: None,
        })
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    pub fn n(&self) -> usize {
        self.u.rows()
    }

    /// Materializes `U V^T`; small sizes only.
    pub fn dense(&self) -> Matrix {
        self.u.matmul_t(&self.v).expect("factor shapes agree")
    }

    /// Records `‖U V^T - target‖∞` against a dense reference.
    pub fn verify_against(&mut self, reference: &Matrix) -> Result<f64> {
        let err = self.dense().max_abs_diff(reference)?;
        self.verified_err = Some(err);
        Ok(err)
    }
}

/// When dense checks run inside the fast gradient.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyPolicy {
    /// Only for `n <= AUTO_VERIFY_MAX_N`.
    Auto,
    Always,
    Never,
}

pub const AUTO_VERIFY_MAX_N: usize = 256;
pub const VERIFY_MAX_N: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowRankConfig {
    pub k_cap: usize,
    pub verify: VerifyPolicy,
    /// Workers for the FFT contraction.
    pub threads: usize,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        LowRankConfig {
            k_cap: DEFAULT_K_CAP,
            verify: VerifyPolicy::Auto,
            threads: 1,
        }
    }
}

impl LowRankConfig {
    pub fn verifies(&self, n: usize) -> Result<bool> {
        match self.verify {
            VerifyPolicy::Never => Ok(false),
            VerifyPolicy::Auto => Ok(n <= AUTO_VERIFY_MAX_N),
            VerifyPolicy::Always if n > VERIFY_MAX_N => Err(Error::Guard(format!(
                "dense verification refused for n = {n} > {VERIFY_MAX_N}"
            ))),
            VerifyPolicy::Always => Ok(true),
        }
    }

    fn check_rank(&self, rank: usize, hint: &'static str) -> Result<()> {
        if rank > self.k_cap {
            return Err(Error::RankBudget {
                rank,
                cap: self.k_cap,
                hint,
            });
        }
        Ok(())
    }
}

/// `C(m + g, g)`, the number of monomials of degree at most `g` in `m` variables.
pub fn monomial_count(m: usize, g: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for k in 1..=g {
        acc = acc.checked_mul(m + k)? / k;
    }
    Some(acc)
}

/// Lifts the polynomial kernel `P(<phi, psi>)` to explicit factors:
/// one column per multiset of feature indices of size `k <= g`, weighted by `c_k k! / α!`.
pub fn lift(feat: &TrigFeatures, p: &PolyApprox, cfg: &LowRankConfig) -> Result<(Matrix, Matrix)> {
    let n = feat.phi.rows();
    let m = feat.dim();
    let g = p.degree;
    let hint = "use a smaller d or a larger eps";
    let k1 = monomial_count(m, g).unwrap_or(usize::MAX);
    cfg.check_rank(k1, hint)?;

    struct Mono {
        last: usize,
        run: usize,
        multinom: f64,
        phi: Vec<f64>,
        psi: Vec<f64>,
    }
    let mut ua = Matrix::zeros(n, k1);
    let mut va = Matrix::zeros(n, k1);
    let mut col = 0;
    let mut emit = |mono: &Mono, k: usize| {
        let w = p.coeffs[k] * mono.multinom;
        let s = w.abs().sqrt();
        let su = if w < 0.0 { -s } else { s };
        for j in 0..n {
            ua[(j, col)] = su * mono.phi[j];
            va[(j, col)] = s * mono.psi[j];
        }
        col += 1;
    };
    let mut level = vec![Mono {
        last: 0,
        run: 0,
        multinom: 1.0,
        phi: vec![1.0; n],
        psi: vec![1.0; n],
    }];
    emit(&level[0], 0);
    for k in 1..=g {
        let mut next = Vec::new();
        for parent in &level {
            for idx in parent.last..m {
                let run = if idx == parent.last && k > 1 {
                    parent.run + 1
                } else {
                    1
                };
                let mono = Mono {
                    last: idx,
                    run,
                    multinom: parent.multinom * k as f64 / run as f64,
                    phi: parent
                        .phi
                        .iter()
                        .zip(feat.phi.col(idx))
                        .map(|(a, b)| a * b)
                        .collect(),
                    psi: parent
                        .psi
                        .iter()
                        .zip(feat.psi.col(idx))
                        .map(|(a, b)| a * b)
                        .collect(),
                };
                emit(&mono, k);
                next.push(mono);
            }
        }
        level = next;
    }
    debug_assert_eq!(col, k1);
    Ok((ua, va))
}

/// Factors of the row-normalized polynomial attention, approximating `S`.
pub fn lift_and_factor_a(
    feat: &TrigFeatures,
    p: &PolyApprox,
    cfg: &LowRankConfig,
) -> Result<LowRankFactors> {
    let (ua, va) = lift(feat, p, cfg)?;
    let col_sums: Vec<f64> = (0..va.cols()).map(|l| va.col(l).iter().sum()).collect();
    let rowsum = ua.matvec(&col_sums)?;
    if let Some(j) = rowsum.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Invariant(format!(
            "approximate row sum {} at row {j} is not positive",
            rowsum[j]
        )));
    }
    let inv: Vec<f64> = rowsum.iter().map(|v| 1.0 / v).collect();
    LowRankFactors::new(ua.scale_rows(&inv)?, va, Target::S, p.certified_err)
}

fn check_rows(f: &LowRankFactors, m: &Matrix, name: &'static str) -> Result<()> {
    if m.rows() != f.n() {
        return Err(Error::shape(name, f.u.shape(), m.shape()));
    }
    Ok(())
}

/// `C̃ = U1 (V1^T Vy) - E`.
pub fn approx_c(f1: &LowRankFactors, vy: &Matrix, e: &Matrix) -> Result<Matrix> {
    check_rows(f1, vy, "approx_c")?;
    if e.shape() != vy.shape() {
        return Err(Error::shape("approx_c", e.shape(), vy.shape()));
    }
    f1.u.matmul(&f1.v.t_matmul(vy)?)?.sub(e)
}

/// `Beta ≈ C̃ Vy^T` with `U2 = C̃`, `V2 = Vy` (rank `d`).
pub fn approx_beta_factors(f1: &LowRankFactors, vy: &Matrix, e: &Matrix) -> Result<LowRankFactors> {
    let c = approx_c(f1, vy, e)?;
    LowRankFactors::new(c, vy.clone(), Target::Beta, f1.eps_tag)
}

/// The same product as [`approx_beta_factors`] in the unreduced form
/// `U2 = [U1 | -E]`, `V2 = [Vy (Vy^T V1) | Vy]` (rank `k1 + d`).
pub fn approx_beta_factors_expanded(
    f1: &LowRankFactors,
    vy: &Matrix,
    e: &Matrix,
) -> Result<LowRankFactors> {
    check_rows(f1, vy, "approx_beta_factors_expanded")?;
    let u = f1.u.hcat(&e.scale(-1.0))?;
    let v = vy.matmul(&vy.t_matmul(&f1.v)?)?.hcat(vy)?;
    LowRankFactors::new(u, v, Target::Beta, f1.eps_tag)
}

/// `U3 = U1 ⊘ U2`, `V3 = V1 ⊘ V2`, so `U3 V3^T = (U1 V1^T) ∘ (U2 V2^T)`.
pub fn gamma1_factors(
    f1: &LowRankFactors,
    f2: &LowRankFactors,
    cfg: &LowRankConfig,
) -> Result<LowRankFactors> {
    cfg.check_rank(
        f1.rank() * f2.rank(),
        "the Hadamard product multiplies ranks",
    )?;
    LowRankFactors::new(
        rowwise_kron(&f1.u, &f2.u)?,
        rowwise_kron(&f1.v, &f2.v)?,
        Target::Gamma1,
        f1.eps_tag,
    )
}

/// `r̃_{j0} = U1_{j0} (V1^T V2) U2_{j0}^T`, the approximate `<s_{j0}, β_{j0}>`.
pub fn approx_r(f1: &LowRankFactors, f2: &LowRankFactors) -> Result<Vec<f64>> {
    if f1.n() != f2.n() {
        return Err(Error::shape("approx_r", f1.u.shape(), f2.u.shape()));
    }
    let m = f1.v.t_matmul(&f2.v)?;
    let mut tmp = vec![0.0; f2.rank()];
    Ok((0..f1.n())
        .map(|j| {
            tmp.iter_mut().for_each(|t| *t = 0.0);
            for (l1, &u1) in f1.u.row(j).iter().enumerate() {
                if u1 != 0.0 {
                    for (t, &mv) in tmp.iter_mut().zip(m.row(l1)) {
                        *t += u1 * mv;
                    }
                }
            }
            dot(&tmp, f2.u.row(j))
        })
        .collect())
}

/// `U4 = diag(r̃) U1`, `V4 = V1`; row `j0` of `U4 V4^T` approximates `r_{j0} s_{j0}`.
pub fn gamma2_factors(f1: &LowRankFactors, f2: &LowRankFactors) -> Result<LowRankFactors> {
    let r = approx_r(f1, f2)?;
    LowRankFactors::new(
        f1.u.scale_rows(&r)?,
        f1.v.clone(),
        Target::Gamma2,
        f1.eps_tag,
    )
}

/// `U_Γ = [U3 | -U4]`, `V_Γ = [V3 | V4]`.
pub fn gamma_from_parts(
    f3: &LowRankFactors,
    f4: &LowRankFactors,
    cfg: &LowRankConfig,
) -> Result<LowRankFactors> {
    cfg.check_rank(f3.rank() + f4.rank(), "use a smaller d or a larger eps")?;
    LowRankFactors::new(
        f3.u.hcat(&f4.u.scale(-1.0))?,
        f3.v.hcat(&f4.v)?,
        Target::Gamma,
        f3.eps_tag,
    )
}

/// Builds `U_Γ`, `V_Γ` row by row without holding the intermediate `U3`, `V3`, `U4`.
pub fn gamma_factors(
    f1: &LowRankFactors,
    f2: &LowRankFactors,
    cfg: &LowRankConfig,
) -> Result<LowRankFactors> {
    let (k1, k2) = (f1.rank(), f2.rank());
    cfg.check_rank(k1 * k2, "the Hadamard product multiplies ranks")?;
    cfg.check_rank(k1 * k2 + k1, "use a smaller d or a larger eps")?;
    let r = approx_r(f1, f2)?;
    let n = f1.n();
    let k = k1 * k2 + k1;
    let mut u = Matrix::zeros(n, k);
    let mut v = Matrix::zeros(n, k);
    for j in 0..n {
        for (dst, a, b, scale) in [
            (u.row_mut(j), f1.u.row(j), f2.u.row(j), -r[j]),
            (v.row_mut(j), f1.v.row(j), f2.v.row(j), 1.0),
        ] {
            let (head, tail) = dst.split_at_mut(k1 * k2);
            for (l1, &x) in a.iter().enumerate() {
                for (o, &y) in head[l1 * k2..(l1 + 1) * k2].iter_mut().zip(b) {
                    *o = x * y;
                }
            }
            for (o, &x) in tail.iter_mut().zip(a) {
                *o = scale * x;
            }
        }
    }
    LowRankFactors::new(u, v, Target::Gamma, f1.eps_tag)
}
