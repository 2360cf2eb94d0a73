use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use ropegrad::bench::{run_bench, BenchConfig};
use ropegrad::gen::GenMode;
use ropegrad::report::{GradReport, Method};
use ropegrad::verify::{run_verify, VerifyConfig};
use ropegrad::{threads_from_env, HarnessError, Result};
use ropegrad_core::exact::exact_gradient_streaming;
use ropegrad_core::lowrank::{fast_gradient_with, LowRankConfig};
use ropegrad_core::rope::Instance;

#[derive(Parser)]
#[command(
    name = "ropegrad",
    version,
    about = "Exact and almost-linear RoPE attention gradients"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the acceptance checks and print one PASS/FAIL line per check.
    Verify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Time the exact and fast paths over a list of sizes and write CSV.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        n_list: Option<Vec<usize>>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        mode: Option<GenMode>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        bound: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        exact: bool,
        #[arg(long)]
        fast: bool,
        #[arg(long)]
        repeat: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        /// Fill linf_err for fast rows.
        #[arg(long)]
        verify: bool,
        /// Use ROPEGRAD_THREADS workers instead of one.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gradient of one instance file.
    Grad {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        method: Method,
        #[arg(long, default_value_t = 1e-4)]
        eps: f64,
        #[arg(long)]
        emit_json: bool,
    },
}

fn read_config<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn verify(config: Option<PathBuf>, seed: Option<u64>) -> Result<i32> {
    let mut cfg: VerifyConfig = match &config {
        Some(p) => read_config(p)?,
        None => VerifyConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let report = run_verify(&cfg, |r| println!("{r}"))?;
    let passed = report.results.iter().filter(|r| r.pass).count();
    println!("{passed}/{} checks passed", report.results.len());
    Ok(report.exit_code())
}

fn grad(path: PathBuf, method: Method, eps: f64, emit_json: bool) -> Result<i32> {
    let inst = Instance::load(&path)?;
    let threads = threads_from_env()?;
    let echo = format!(
        "instance={} n={} d={} method={} eps={eps} threads={threads}",
        path.display(),
        inst.n(),
        inst.d(),
        method.name()
    );
    let mut report = GradReport::new(None, echo);
    match method {
        Method::Exact => {
            let start = Instant::now();
            let g = exact_gradient_streaming(&inst)?;
            report.record("exact", start.elapsed().as_nanos());
            report.g_exact = Some(g.into_vec());
        }
        Method::Fast => {
            let cfg = LowRankConfig {
                threads,
                ..LowRankConfig::default()
            };
            let out = fast_gradient_with(&inst, eps, &cfg)?;
            report.record_all(&out.timings);
            match out.verification {
                Some(v) => report.set_pair(v.g_exact.into_vec(), out.g.into_vec()),
                None => report.g_approx = Some(out.g.into_vec()),
            }
        }
    }
    eprintln!("{}", report.config_echo);
    if emit_json {
        println!("{}", report.to_json()?);
    } else {
        let g = report
            .g_approx
            .as_ref()
            .or(report.g_exact.as_ref())
            .expect("one gradient set");
        println!(
            "‖g‖∞ = {:.6e} over {} entries",
            ropegrad_core::tensor::linf(g),
            g.len()
        );
        if let Some(diff) = report.linf_diff {
            println!("‖g̃ - g‖∞ = {diff:.6e}");
        }
        for (stage, ns) in &report.stage_timings {
            println!("{stage}: {:.3} ms", *ns as f64 / 1e6);
        }
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Verify { config, seed } => verify(config, seed),
        Cmd::Bench {
            config,
            n_list,
            d,
            mode,
            eps,
            bound,
            seed,
            exact,
            fast,
            repeat,
            warmup,
            verify,
            parallel,
            out,
        } => {
            let mut cfg: BenchConfig = match &config {
                Some(p) => read_config(p)?,
                None => BenchConfig::default(),
            };
            cfg.n_list = n_list.unwrap_or(cfg.n_list);
            cfg.d = d.unwrap_or(cfg.d);
            cfg.mode = mode.unwrap_or(cfg.mode);
            cfg.eps = eps.unwrap_or(cfg.eps);
            cfg.bound = bound.unwrap_or(cfg.bound);
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.repeat = repeat.unwrap_or(cfg.repeat);
            cfg.warmup = warmup.unwrap_or(cfg.warmup);
            cfg.exact |= exact;
            cfg.fast |= fast;
            cfg.verify |= verify;
            cfg.threads = if parallel { threads_from_env()? } else { 1 };
            cfg.validate()?;
            eprintln!("{}", serde_json::to_string(&cfg)?);
            match out {
                Some(p) => {
                    let f = File::create(&p)?;
                    run_bench(&cfg, BufWriter::new(f))?;
                }
                None => {
                    run_bench(&cfg, io::stdout().lock())?;
                }
            }
            io::stdout().flush()?;
            Ok(0)
        }
        Cmd::Grad {
            instance,
            method,
            eps,
            emit_json,
        } => grad(instance, method, eps, emit_json),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
