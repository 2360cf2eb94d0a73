//! Wall-clock scaling runs.

use std::io::Write;
use std::time::Instant;

use ropegrad_core::exact::exact_gradient_streaming;
use ropegrad_core::lowrank::{fast_gradient_with, LowRankConfig, VerifyPolicy};
use ropegrad_core::tensor::linf_diff;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::gen::{gen_instance, GenMode, GenParams};
use crate::report::{csv_writer, BenchRow, Method};

pub const DEFAULT_N_EXACT_CAP: usize = 8192;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct BenchConfig {
    pub n_list: Vec<usize>,
    pub d: usize,
    pub mode: GenMode,
    pub eps: f64,
    pub bound: f64,
    pub seed: u64,
    pub exact: bool,
    pub fast: bool,
    pub repeat: usize,
    pub warmup: usize,
    pub n_exact_cap: usize,
    /// Fill `linf_err` on fast rows with the distance to the exact gradient.
    pub verify: bool,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            n_list: vec![256, 512, 1024, 2048],
            d: 4,
            mode: GenMode::Rotary,
            eps: 1e-2,
            bound: 0.5,
            seed: 0,
            exact: false,
            fast: false,
            repeat: 5,
            warmup: 2,
            n_exact_cap: DEFAULT_N_EXACT_CAP,
            verify: false,
            threads: 1,
        }
    }
}

impl BenchConfig {
    /// Methods in scope; neither flag means both.
    pub fn methods(&self) -> Vec<Method> {
        match (self.exact, self.fast) {
            (true, false) => vec![Method::Exact],
            (false, true) => vec![Method::Fast],
            _ => vec![Method::Exact, Method::Fast],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.n_list.is_empty() {
            return bad("n-list is empty".into());
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) || self.n_list[0] == 0 {
            return bad(format!(
                "n-list must be positive and strictly ascending, got {:?}",
                self.n_list
            ));
        }
        if self.repeat == 0 || self.warmup == 0 {
            return bad("repeat and warmup must be at least 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be at least 1".into());
        }
        let max_n = *self.n_list.last().expect("non-empty");
        if self.methods().contains(&Method::Exact) && max_n > self.n_exact_cap {
            return bad(format!(
                "exact method refused for n = {max_n} above n-exact-cap = {}",
                self.n_exact_cap
            ));
        }
        if self.verify && max_n > self.n_exact_cap {
            return bad(format!(
                "verification needs the exact gradient; n = {max_n} exceeds the cap"
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchSummary {
    pub rows: Vec<BenchRow>,
    pub fast_slope: Option<f64>,
    pub exact_slope: Option<f64>,
}

pub fn median(mut xs: Vec<u128>) -> u128 {
    xs.sort_unstable();
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2
    }
}

/// Least-squares slope of `ln y` against `ln x`. `None` below two points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let k = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn time_runs<T>(
    warmup: usize,
    repeat: usize,
    mut f: impl FnMut() -> Result<T>,
) -> Result<(u128, T)> {
    for _ in 0..warmup {
        f()?;
    }
    let mut walls = Vec::with_capacity(repeat);
    let mut last = None;
    for _ in 0..repeat {
        let start = Instant::now();
        let out = f()?;
        walls.push(start.elapsed().as_nanos().max(1));
        last = Some(out);
    }
    Ok((median(walls), last.expect("repeat >= 1")))
}

/// Runs every `(n, method)` pair, writing one CSV row each, and prints the slope fits to stderr.
pub fn run_bench<W: Write>(cfg: &BenchConfig, out: W) -> Result<BenchSummary> {
    cfg.validate()?;
    let methods = cfg.methods();
    let lr = LowRankConfig {
        verify: VerifyPolicy::Never,
        threads: cfg.threads,
        ..LowRankConfig::default()
    };
    let mut w = csv_writer(out);
    let mut summary = BenchSummary::default();
    for &n in &cfg.n_list {
        let inst = gen_instance(&GenParams::new(cfg.seed, n, cfg.d, cfg.bound, cfg.mode))?;
        let reference = if cfg.verify {
            Some(exact_gradient_streaming(&inst)?)
        } else {
            None
        };
        for &method in &methods {
            let row = match method {
                Method::Exact => {
                    let (wall, _) = time_runs(cfg.warmup, cfg.repeat, || {
                        Ok(exact_gradient_streaming(&inst)?)
                    })?;
                    BenchRow {
                        n,
                        d: cfg.d,
                        mode: cfg.mode.name().into(),
                        eps: cfg.eps,
                        degree: None,
                        rank: None,
                        method,
                        wall_ns: wall,
                        linf_err: None,
                    }
                }
                Method::Fast => {
                    let (wall, fg) = time_runs(cfg.warmup, cfg.repeat, || {
                        Ok(fast_gradient_with(&inst, cfg.eps, &lr)?)
                    })?;
                    BenchRow {
                        n,
                        d: cfg.d,
                        mode: cfg.mode.name().into(),
                        eps: cfg.eps,
                        degree: Some(fg.degree),
                        rank: Some(fg.rank),
                        method,
                        wall_ns: wall,
                        linf_err: reference.as_ref().map(|g| linf_diff(&fg.g, g)),
                    }
                }
            };
            w.serialize(&row)?;
            w.flush()?;
            summary.rows.push(row);
        }
    }
    for method in methods {
        let pts: Vec<(f64, f64)> = summary
            .rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| (r.n as f64, r.wall_ns as f64))
            .collect();
        let slope = loglog_slope(&pts);
        match slope {
            Some(s) => eprintln!(
                "log-log slope ({}, {} points): {s:.3}",
                method.name(),
                pts.len()
            ),
            None => eprintln!(
                "log-log slope ({}): needs at least two n values",
                method.name()
            ),
        }
        match method {
            Method::Exact => summary.exact_slope = slope,
            Method::Fast => summary.fast_slope = slope,
        }
    }
    Ok(summary)
}
