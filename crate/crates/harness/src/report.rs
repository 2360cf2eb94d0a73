//! Serializable outputs: the gradient report and benchmark rows.

use std::collections::BTreeMap;

use ropegrad_core::lowrank::StageTiming;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GradReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_exact: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g_approx: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linf_diff: Option<f64>,
    pub stage_timings: BTreeMap<String, u128>,
    pub seed: Option<u64>,
    /// Resolved run configuration. Written to stderr, never into the JSON body.
    #[serde(skip)]
    pub config_echo: String,
}

impl GradReport {
    pub fn new(seed: Option<u64>, config_echo: String) -> Self {
        GradReport {
            seed,
            config_echo,
            ..GradReport::default()
        }
    }

    pub fn record(&mut self, stage: &str, nanos: u128) {
        *self.stage_timings.entry(stage.to_string()).or_insert(0) += nanos.max(1);
    }

    pub fn record_all(&mut self, timings: &[StageTiming]) {
        for t in timings {
            self.record(t.stage, t.nanos);
        }
    }

    /// Sets both gradients and their `ℓ∞` distance.
    pub fn set_pair(&mut self, exact: Vec<f64>, approx: Vec<f64>) {
        self.linf_diff = Some(ropegrad_core::tensor::linf_diff(&exact, &approx));
        self.g_exact = Some(exact);
        self.g_approx = Some(approx);
    }

    pub fn check(&self) -> Result<()> {
        let both = self.g_exact.is_some() && self.g_approx.is_some();
        if both != self.linf_diff.is_some() {
            return Err(HarnessError::Config(
                "linf_diff must be present iff both gradients are".into(),
            ));
        }
        if self.stage_timings.values().any(|&t| t == 0) {
            return Err(HarnessError::Config(
                "stage timings must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.check()?;
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Exact,
    Fast,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Fast => "fast",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Method::Exact),
            "fast" => Ok(Method::Fast),
            other => Err(HarnessError::Config(format!(
                "unknown method `{other}` (expected exact | fast)"
            ))),
        }
    }
}

/// One CSV line. Column order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub mode: String,
    pub eps: f64,
    pub degree: Option<usize>,
    pub rank: Option<usize>,
    pub method: Method,
    pub wall_ns: u128,
    pub linf_err: Option<f64>,
}

pub const BENCH_HEADER: &str = "n,d,mode,eps,degree,rank,method,wall_ns,linf_err";

pub fn csv_writer<W: std::io::Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

pub fn read_bench_csv<R: std::io::Read>(r: R) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != BENCH_HEADER {
        return Err(HarnessError::Config(format!(
            "unexpected CSV header `{}`",
            header.join(",")
        )));
    }
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}
