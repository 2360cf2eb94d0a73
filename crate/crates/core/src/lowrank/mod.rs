//! Almost-linear gradient path.
//!
//! `exp` is replaced by a polynomial on `[0, 2L]` applied to `logit + L`; the polynomial kernel
//! is lifted to explicit factors `U1 V1^T ≈ S`; `β`, `γ1` and `γ2` inherit low-rank factors; and
//! `Ã^T vec(U_Γ V_Γ^T)` is contracted lag by lag with FFT cross-correlations.

mod contract;
mod factors;
mod features;


use std::time::Instant;

pub use contract::{fast_contract, fast_contract_threaded, naive_contract};
pub use factors::{
    approx_beta_factors, approx_beta_factors_expanded, approx_c, approx_r, gamma1_factors,
    gamma2_factors, gamma_factors, gamma_from_parts, lift, lift_and_factor_a, monomial_count,
    LowRankConfig, LowRankFactors, Target, VerifyPolicy, AUTO_VERIFY_MAX_N, DEFAULT_K_CAP,
    VERIFY_MAX_N,
};
pub use features::{trig_features, trig_features_with_shift, TrigFeatures};

use crate::error::Result;
use crate::exact::exact_gradient_streaming;
use crate::poly::build_poly;
use crate::rope::{forward, Instance};
use crate::tensor::{linf_diff, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageTiming {
    pub stage: &'static str,
    pub nanos: u128,
}

/// Dense comparisons made when verification is enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct Verification {
    /// `‖U1 V1^T - S‖∞`.
    pub s_err: f64,
    pub g_exact: Vector,
    /// `‖g̃ - g‖∞`.
    pub grad_err: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FastGradient {
    pub g: Vector,
    pub degree: usize,
    pub poly_err: f64,
    /// Rank of the softmax factors.
    pub k1: usize,
    /// Rank of the final `Γ` factors.
    pub rank: usize,
    pub timings: Vec<StageTiming>,
    pub verification: Option<Verification>,
}

fn timed<T>(
    timings: &mut Vec<StageTiming>,
    stage: &'static str,
    f: impl FnOnce() -> Result<T>,
) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage))?;
    timings.push(StageTiming {
        stage,
        nanos: start.elapsed().as_nanos().max(1),
    });
    Ok(out)
}

pub fn fast_gradient(inst: &Instance, eps: f64) -> Result<FastGradient> {
    fast_gradient_with(inst, eps, &LowRankConfig::default())
}

pub fn fast_gradient_with(inst: &Instance, eps: f64, cfg: &LowRankConfig) -> Result<FastGradient> {
    let verify = cfg.verifies(inst.n())?;
    let mut timings = Vec::new();
    let feat = timed(&mut timings, "features", || trig_features(inst))?;
    let p = timed(&mut timings, "poly", || {
        build_poly(0.0, 2.0 * feat.shift, eps)
    })?;
    let mut f1 = timed(&mut timings, "lift", || lift_and_factor_a(&feat, &p, cfg))?;
    drop(feat);
    let vy = inst.value();
    let f2 = timed(&mut timings, "beta", || {
        approx_beta_factors(&f1, &vy, inst.e())
    })?;
    let fg = timed(&mut timings, "gamma", || gamma_factors(&f1, &f2, cfg))?;
    let g = timed(&mut timings, "contract", || {
        fast_contract_threaded(inst, &fg, cfg.threads)
    })?;
    let rank = fg.rank();
    drop(fg);
    let verification = if verify {
        Some(timed(&mut timings, "verify", || {
            let s_err = f1.verify_against(&forward(inst)?.s)?;
            let g_exact = exact_gradient_streaming(inst)?;
            let grad_err = linf_diff(&g, &g_exact);
            Ok(Verification {
                s_err,
                g_exact,
                grad_err,
            })
        })?)
    } else {
        None
    };
    Ok(FastGradient {
        g,
        degree: p.degree,
        poly_err: p.certified_err,
        k1: f1.rank(),
        rank,
        timings,
        verification,
    })
}
