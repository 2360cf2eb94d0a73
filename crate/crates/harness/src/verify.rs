//! The ten acceptance checks, runnable from the CLI or from tests.

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ropegrad_core::exact::oracle::oracle_gradient;
use ropegrad_core::exact::{chain_to_factors, exact_gradient};
use ropegrad_core::lowrank::{
    fast_contract, fast_gradient_with, lift_and_factor_a, naive_contract, trig_features,
    LowRankConfig, LowRankFactors, Target, VerifyPolicy,
};
use ropegrad_core::poly::build_poly;
use ropegrad_core::rope::forward;
use ropegrad_core::spectral::{correlate_all_lags, fft, ComplexBuffer};
use ropegrad_core::tensor::{
    hadamard, linf, linf_diff, rowwise_kron, tensor_trick, tensor_trick_kron, Matrix,
};
use serde::{Deserialize, Serialize};

use crate::bench::{run_bench, BenchConfig};
use crate::error::{HarnessError, Result};
use crate::fd::{finite_diff_factors, finite_diff_gradient, relative_linf};
use crate::gen::{gen_instance, GenMode, GenParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct Tolerances {
    pub identity: f64,
    pub oracle: f64,
    pub finite_diff: f64,
    pub fd_step: f64,
    pub s_fidelity: f64,
    pub contract: f64,
    pub end_to_end: f64,
    pub fast_slope_max: f64,
    pub exact_slope_min: f64,
    pub degenerate: f64,
    pub approx_budget: f64,
    pub fft_round_trip: f64,
    pub parseval: f64,
    pub correlation: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            identity: 1e-12,
            oracle: 1e-10,
            finite_diff: 1e-5,
            fd_step: 1e-5,
            s_fidelity: 1e-3,
            contract: 1e-9,
            end_to_end: 1e-2,
            fast_slope_max: 1.35,
            exact_slope_min: 1.7,
            degenerate: 1e-12,
            approx_budget: 1e-2,
            fft_round_trip: 1e-12,
            parseval: 1e-10,
            correlation: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ScalingConfig {
    pub fast_n_list: Vec<usize>,
    pub exact_n_list: Vec<usize>,
    pub d: usize,
    pub eps: f64,
    pub bound: f64,
    pub repeat: usize,
    pub warmup: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            fast_n_list: vec![512, 1024, 2048, 4096, 8192],
            exact_n_list: vec![512, 1024, 2048],
            d: 4,
            eps: 1e-2,
            bound: 0.5,
            repeat: 5,
            warmup: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct VerifyConfig {
    pub seed: u64,
    /// Criteria to run, by number. Empty means all of them.
    pub checks: Vec<usize>,
    pub tolerances: Tolerances,
    pub scaling: ScalingConfig,
    /// Enforce the per-check wall-time budgets.
    pub enforce_runtime: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: 0,
            checks: Vec::new(),
            tolerances: Tolerances::default(),
            scaling: ScalingConfig::default(),
            enforce_runtime: true,
        }
    }
}

impl VerifyConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("verify config: {e}")))
    }

    pub fn selected(&self) -> Result<Vec<Check>> {
        if self.checks.is_empty() {
            return Ok(Check::ALL.to_vec());
        }
        self.checks
            .iter()
            .map(|&id| {
                Check::from_id(id)
                    .ok_or_else(|| HarnessError::Config(format!("no check numbered {id}")))
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Check {
    Identities,
    CrossOracle,
    FiniteDiff,
    PolyExp,
    SFidelity,
    Contraction,
    EndToEnd,
    Scaling,
    Degeneracy,
    Fft,
}

impl Check {
    pub const ALL: [Check; 10] = [
        Check::Identities,
        Check::CrossOracle,
        Check::FiniteDiff,
        Check::PolyExp,
        Check::SFidelity,
        Check::Contraction,
        Check::EndToEnd,
        Check::Scaling,
        Check::Degeneracy,
        Check::Fft,
    ];

    pub fn id(self) -> usize {
        Check::ALL.iter().position(|&c| c == self).expect("listed") + 1
    }

    pub fn from_id(id: usize) -> Option<Check> {
        id.checked_sub(1).and_then(|i| Check::ALL.get(i).copied())
    }

    pub fn name(self) -> &'static str {
        match self {
            Check::Identities => "algebraic-identities",
            Check::CrossOracle => "gradient-cross-oracle",
            Check::FiniteDiff => "finite-difference",
            Check::PolyExp => "polynomial-exp",
            Check::SFidelity => "low-rank-softmax",
            Check::Contraction => "contraction-equivalence",
            Check::EndToEnd => "end-to-end-gradient",
            Check::Scaling => "scaling-surrogate",
            Check::Degeneracy => "degeneracy",
            Check::Fft => "fft",
        }
    }

    pub fn budget(self) -> Duration {
        Duration::from_secs(match self {
            Check::Identities | Check::PolyExp | Check::Degeneracy | Check::Fft => 5,
            Check::CrossOracle | Check::Contraction => 30,
            Check::FiniteDiff | Check::SFidelity => 60,
            Check::EndToEnd => 120,
            Check::Scaling => 600,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{:>2}] {}: {} ({:.2} s, budget {} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.check.id(),
            self.check.name(),
            self.detail,
            self.elapsed.as_secs_f64(),
            self.check.budget().as_secs()
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub results: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            0
        } else {
            1
        }
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.results
            .iter()
            .filter(|r| !r.pass)
            .map(|r| r.check.name())
            .collect()
    }
}

/// Measured value against a tolerance, for the report line.
struct Outcome {
    pass: bool,
    detail: String,
}

fn at_most(label: &str, value: f64, tol: f64) -> Outcome {
    Outcome {
        pass: value <= tol,
        detail: format!("{label} = {value:.3e} <= {tol:.1e}"),
    }
}

fn both(a: Outcome, b: Outcome) -> Outcome {
    Outcome {
        pass: a.pass && b.pass,
        detail: format!("{}; {}", a.detail, b.detail),
    }
}

fn all(parts: Vec<Outcome>) -> Outcome {
    parts
        .into_iter()
        .reduce(both)
        .expect("at least one outcome")
}

/// Runs the selected checks in order. `sink` receives each report line as it is produced.
pub fn run_verify(cfg: &VerifyConfig, mut sink: impl FnMut(&CheckResult)) -> Result<VerifyReport> {
    let checks = cfg.selected()?;
    let mut report = VerifyReport::default();
    for check in checks {
        let start = Instant::now();
        let outcome = run_check(check, cfg).unwrap_or_else(|e| Outcome {
            pass: false,
            detail: format!("error: {e}"),
        });
        let elapsed = start.elapsed();
        let over = cfg.enforce_runtime && elapsed > check.budget();
        let result = CheckResult {
            check,
            pass: outcome.pass && !over,
            detail: if over {
                format!("{}; over the wall-time budget", outcome.detail)
            } else {
                outcome.detail
            },
            elapsed,
        };
        sink(&result);
        report.results.push(result);
    }
    Ok(report)
}

fn run_check(check: Check, cfg: &VerifyConfig) -> Result<Outcome> {
    let seed = cfg.seed;
    let tol = &cfg.tolerances;
    match check {
        Check::Identities => identities(seed, tol.identity),
        Check::CrossOracle => cross_oracle(seed, tol.oracle),
        Check::FiniteDiff => finite_diff(seed, tol.finite_diff, tol.fd_step),
        Check::PolyExp => poly_exp(),
        Check::SFidelity => s_fidelity(seed, tol.s_fidelity),
        Check::Contraction => contraction(seed, tol.contract),
        Check::EndToEnd => end_to_end(seed, tol.end_to_end),
        Check::Scaling => scaling(seed, &cfg.scaling, tol),
        Check::Degeneracy => degeneracy(seed, tol),
        Check::Fft => fft_suite(seed, tol),
    }
}

fn rand_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn identities(seed: u64, tol: f64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1d);
    let (mut trick, mut rowwise) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let (n, d) = (rng.random_range(1..=16), rng.random_range(1..=4));
        let a1 = rand_matrix(&mut rng, n, d);
        let a2 = rand_matrix(&mut rng, n, d);
        let x = rand_matrix(&mut rng, d, d);
        let lhs = tensor_trick(&a1, &x, &a2)?;
        let rhs = tensor_trick_kron(&a1, &x, &a2)?;
        trick = trick.max(linf_diff(&lhs, &rhs));
    }
    for _ in 0..100 {
        let n = rng.random_range(1..=16);
        let (k1, k2) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let (u1, v1) = (rand_matrix(&mut rng, n, k1), rand_matrix(&mut rng, n, k1));
        let (u2, v2) = (rand_matrix(&mut rng, n, k2), rand_matrix(&mut rng, n, k2));
        let lhs = hadamard(&u1.matmul_t(&v1)?, &u2.matmul_t(&v2)?)?;
        let rhs = rowwise_kron(&u1, &u2)?.matmul_t(&rowwise_kron(&v1, &v2)?)?;
        rowwise = rowwise.max(lhs.max_abs_diff(&rhs)?);
    }
    Ok(both(
        at_most("tensor trick", trick, tol),
        at_most("row-wise kron", rowwise, tol),
    ))
}

fn cross_oracle(seed: u64, tol: f64) -> Result<Outcome> {
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let n = [2, 4, 8][(k % 3) as usize];
        let d = [2, 4][(k / 3 % 2) as usize];
        let mode = if k % 2 == 0 {
            GenMode::Rotary
        } else {
            GenMode::Identity
        };
        let inst = gen_instance(&GenParams::new(seed.wrapping_add(100 + k), n, d, 1.0, mode))?;
        let g = exact_gradient(&inst)?.g;
        let o = oracle_gradient(&inst)?;
        worst = worst.max(linf_diff(&g, &o));
    }
    Ok(at_most("max ‖g - oracle‖∞ over 20", worst, tol))
}

fn finite_diff(seed: u64, tol: f64, h: f64) -> Result<Outcome> {
    let (mut full, mut factors) = (0.0f64, 0.0f64);
    for k in 0..10u64 {
        let n = 1 + (k as usize % 8);
        let mode = if k % 2 == 0 {
            GenMode::Rotary
        } else {
            GenMode::Identity
        };
        let inst = gen_instance(&GenParams::new(seed.wrapping_add(200 + k), n, 2, 1.0, mode))?;
        let g = exact_gradient(&inst)?.g;
        full = full.max(relative_linf(&finite_diff_gradient(&inst, h)?, &g));
        let (g1, g2) = chain_to_factors(&g, inst.x1(), inst.x2())?;
        let (f1, f2) = finite_diff_factors(&inst, h)?;
        factors = factors
            .max(relative_linf(g1.as_slice(), f1.as_slice()))
            .max(relative_linf(g2.as_slice(), f2.as_slice()));
    }
    Ok(both(
        at_most("rel err dL/dx", full, tol),
        at_most("rel err dL/dX1,dL/dX2", factors, tol),
    ))
}

fn poly_exp() -> Result<Outcome> {
    let mut worst_ratio = 0.0f64;
    let mut monotone = true;
    for bint in [1.0, 2.0, 4.0] {
        let coarse = build_poly(0.0, bint, 1e-2)?;
        let fine = build_poly(0.0, bint, 1e-4)?;
        worst_ratio = worst_ratio
            .max(coarse.certified_err / 1e-2)
            .max(fine.certified_err / 1e-4);
        monotone &= fine.degree >= coarse.degree;
    }
    Ok(Outcome {
        pass: worst_ratio <= 1.0 && monotone,
        detail: format!(
            "max certified err / eps = {worst_ratio:.3e} <= 1; degree monotone: {monotone}"
        ),
    })
}

fn end_to_end_instance(seed: u64) -> Result<ropegrad_core::rope::Instance> {
    gen_instance(&GenParams::new(
        seed.wrapping_add(500),
        256,
        4,
        0.5,
        GenMode::Rotary,
    ))
}

fn s_fidelity(seed: u64, tol: f64) -> Result<Outcome> {
    let inst = end_to_end_instance(seed)?;
    let feat = trig_features(&inst)?;
    let p = build_poly(0.0, 2.0 * feat.shift, 1e-4)?;
    let mut f = lift_and_factor_a(&feat, &p, &LowRankConfig::default())?;
    let err = f.verify_against(&forward(&inst)?.s)?;
    Ok(at_most("‖U1 V1^T - S‖∞", err, tol))
}

fn contraction(seed: u64, tol: f64) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c);
    let mut worst = 0.0f64;
    for k in 0..10u64 {
        let n = rng.random_range(1..=64);
        let rank = rng.random_range(1..=8);
        let mode = if k % 2 == 0 {
            GenMode::Rotary
        } else {
            GenMode::Identity
        };
        let inst = gen_instance(&GenParams::new(seed.wrapping_add(600 + k), n, 2, 1.0, mode))?;
        let f = LowRankFactors::new(
            rand_matrix(&mut rng, n, rank),
            rand_matrix(&mut rng, n, rank),
            Target::Gamma,
            0.0,
        )?;
        let fast = fast_contract(&inst, &f)?;
        let naive = naive_contract(&inst, &f.dense())?;
        worst = worst.max(linf_diff(&fast, &naive));
    }
    Ok(at_most("max ‖fast - naive‖∞ over 10", worst, tol))
}

fn verified_error(inst: &ropegrad_core::rope::Instance, eps: f64) -> Result<f64> {
    let cfg = LowRankConfig {
        verify: VerifyPolicy::Always,
        ..LowRankConfig::default()
    };
    let out = fast_gradient_with(inst, eps, &cfg)?;
    Ok(out.verification.expect("verification forced").grad_err)
}

fn end_to_end(seed: u64, tol: f64) -> Result<Outcome> {
    let inst = end_to_end_instance(seed)?;
    let fine = verified_error(&inst, 1e-4)?;
    let coarse = verified_error(&inst, 1e-2)?;
    let err = at_most("‖g̃ - g‖∞ at eps 1e-4", fine, tol);
    Ok(Outcome {
        pass: err.pass && coarse >= fine,
        detail: format!(
            "{}; at eps 1e-2 = {coarse:.3e} >= fine: {}",
            err.detail,
            coarse >= fine
        ),
    })
}

fn scaling(seed: u64, sc: &ScalingConfig, tol: &Tolerances) -> Result<Outcome> {
    let base = BenchConfig {
        d: sc.d,
        mode: GenMode::Rotary,
        eps: sc.eps,
        bound: sc.bound,
        seed,
        repeat: sc.repeat,
        warmup: sc.warmup,
        threads: 1,
        ..BenchConfig::default()
    };
    let fast = run_bench(
        &BenchConfig {
            n_list: sc.fast_n_list.clone(),
            fast: true,
            ..base.clone()
        },
        std::io::sink(),
    )?;
    let exact = run_bench(
        &BenchConfig {
            n_list: sc.exact_n_list.clone(),
            exact: true,
            ..base
        },
        std::io::sink(),
    )?;
    let missing = || HarnessError::Config("scaling n-lists need at least two sizes".into());
    let fs = fast.fast_slope.ok_or_else(missing)?;
    let es = exact.exact_slope.ok_or_else(missing)?;
    let rank = fast.rows.first().and_then(|r| r.rank).unwrap_or(0);
    Ok(Outcome {
        pass: fs <= tol.fast_slope_max && es >= tol.exact_slope_min,
        detail: format!(
            "fast slope = {fs:.3} <= {}; exact slope = {es:.3} >= {} (rank {rank})",
            tol.fast_slope_max, tol.exact_slope_min
        ),
    })
}

fn degeneracy(seed: u64, tol: &Tolerances) -> Result<Outcome> {
    let single = gen_instance(&GenParams::new(
        seed.wrapping_add(900),
        1,
        4,
        1.0,
        GenMode::Rotary,
    ))?;
    let g1 = linf(&exact_gradient(&single)?.g);

    let clean = gen_instance(
        &GenParams::new(seed.wrapping_add(901), 64, 4, 0.5, GenMode::Rotary).sigma(0.0),
    )?;
    let g0 = linf(&exact_gradient(&clean)?.g);
    let cfg = LowRankConfig {
        verify: VerifyPolicy::Never,
        ..LowRankConfig::default()
    };
    let approx = linf(&fast_gradient_with(&clean, 1e-4, &cfg)?.g);

    let flat = clean.with_factors(Matrix::zeros(4, 4), Matrix::zeros(4, 4))?;
    let s = forward(&flat)?.s;
    let uniform = 1.0 / flat.n() as f64;
    let spread = s
        .as_slice()
        .iter()
        .map(|v| (v - uniform).abs())
        .fold(0.0, f64::max);

    Ok(all(vec![
        at_most("n=1 ‖g‖∞", g1, tol.degenerate),
        at_most("zero residual ‖g‖∞", g0, tol.degenerate),
        at_most("zero residual ‖g̃‖∞", approx, tol.approx_budget),
        at_most("X=0 max |S - 1/n|", spread, tol.degenerate),
    ]))
}

fn naive_correlation(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..2 * n - 1)
        .map(|idx| {
            let t = idx as isize - (n as isize - 1);
            (0..n)
                .filter_map(|i| {
                    let j = i as isize + t;
                    (0..n as isize).contains(&j).then(|| x[j as usize] * y[i])
                })
                .sum()
        })
        .collect()
}

fn fft_suite(seed: u64, tol: &Tolerances) -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xff7);
    let (mut round, mut parseval, mut corr) = (0.0f64, 0.0f64, 0.0f64);
    let mut len = 1;
    while len <= 1024 {
        let re: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let im: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let buf = ComplexBuffer::new(re.clone(), im.clone())?;
        let energy = buf.norm_sq();
        let spec = fft(buf, false)?;
        parseval = parseval.max((spec.norm_sq() / len as f64 - energy).abs() / energy);
        let back = fft(spec, true)?;
        round = round
            .max(linf_diff(back.re(), &re))
            .max(linf_diff(back.im(), &im));

        let y: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        corr = corr.max(linf_diff(
            &correlate_all_lags(&re, &y)?,
            &naive_correlation(&re, &y),
        ));
        len *= 2;
    }
    Ok(all(vec![
        at_most("round trip", round, tol.fft_round_trip),
        at_most("Parseval rel", parseval, tol.parseval),
        at_most("correlation", corr, tol.correlation),
    ]))
}
