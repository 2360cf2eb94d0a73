use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One stored coefficient of a sparse `d x d` weight matrix.
pub type SparseEntry = (usize, usize, f64);

#[derive(Clone, Debug, PartialEq)]
pub enum WeightMode {
    Identity,
    Rotary { base: f64 },
    General,
}

impl WeightMode {
    pub fn name(&self) -> &'static str {
        match self {
            WeightMode::Identity => "identity",
            WeightMode::Rotary { .. } => "rotary",
            WeightMode::General => "general",
        }
    }
}

/// The family `W_t`, `t` in `-(n-1)..=n-1`, stored as sparse entry lists indexed by `t + n - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct RopeWeights {
    n: usize,
    d: usize,
    mode: WeightMode,
    lags: Vec<Vec<SparseEntry>>,
}

/// Largest admissible support, `|S| <= SUPPORT_FACTOR * d`.
pub const SUPPORT_FACTOR: usize = 2;

fn check_dims(n: usize, d: usize) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::Config(format!(
            "n and d must be positive (n = {n}, d = {d})"
        )));
    }
    Ok(())
}

/// Rotation frequencies `base^(-2b/d)` for `b = 0..d/2`.
pub fn rotary_frequencies(d: usize, base: f64) -> Vec<f64> {
    (0..d / 2)
        .map(|b| base.powf(-2.0 * b as f64 / d as f64))
        .collect()
}

/// Rotary weights: `W_t` is block diagonal with blocks `[[cos tθ_b, -sin tθ_b], [sin tθ_b, cos tθ_b]]`.
pub fn make_rotary_weights(n: usize, d: usize, base: f64) -> Result<RopeWeights> {
    check_dims(n, d)?;
    if d % 2 != 0 {
        return Err(Error::Config(format!(
            "rotary weights need an even head dimension, got d = {d}"
        )));
    }
    if !(base > 0.0 && base.is_finite()) {
        return Err(Error::Config(format!(
            "rotary base must be positive, got {base}"
        )));
    }
    let freqs = rotary_frequencies(d, base);
    let lags = (0..2 * n - 1)
        .map(|idx| {
            let t = idx as f64 - (n as f64 - 1.0);
            let mut entries = Vec::with_capacity(2 * d);
            for (b, &theta) in freqs.iter().enumerate() {
                let (s, c) = (t * theta).sin_cos();
                let r = 2 * b;
                entries.push((r, r, c));
                entries.push((r, r + 1, -s));
                entries.push((r + 1, r, s));
                entries.push((r + 1, r + 1, c));
            }
            entries
        })
        .collect();
    Ok(RopeWeights {
        n,
        d,
        mode: WeightMode::Rotary { base },
        lags,
    })
}

impl RopeWeights {
    pub fn identity(n: usize, d: usize) -> Result<Self> {
        check_dims(n, d)?;
        let diag: Vec<SparseEntry> = (0..d).map(|r| (r, r, 1.0)).collect();
        Ok(RopeWeights {
            n,
            d,
            mode: WeightMode::Identity,
            lags: vec![diag; 2 * n - 1],
        })
    }

    pub fn rotary(n: usize, d: usize, base: f64) -> Result<Self> {
        make_rotary_weights(n, d, base)
    }

    /// General sparse family. Lags missing from `table` are zero matrices.
    pub fn general(n: usize, d: usize, table: Vec<(i64, Vec<SparseEntry>)>) -> Result<Self> {
        check_dims(n, d)?;
        let span = n as i64 - 1;
        let mut lags = vec![Vec::new(); 2 * n - 1];
        let mut seen = vec![false; 2 * n - 1];
        for (t, entries) in table {
            if t < -span || t > span {
                return Err(Error::Invariant(format!(
                    "weight lag {t} outside [-{span}, {span}]"
                )));
            }
            let idx = (t + span) as usize;
            if seen[idx] {
                return Err(Error::Invariant(format!("weight lag {t} listed twice")));
            }
            seen[idx] = true;
            let mut cells = std::collections::BTreeSet::new();
            for &(r, c, v) in &entries {
                if r >= d || c >= d {
                    return Err(Error::Invariant(format!(
                        "W_{t} entry ({r}, {c}) outside {d} x {d}"
                    )));
                }
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(Error::Invariant(format!(
                        "W_{t}[{r},{c}] = {v} violates |w| <= 1"
                    )));
                }
                if !cells.insert((r, c)) {
                    return Err(Error::Invariant(format!(
                        "W_{t} entry ({r}, {c}) listed twice"
                    )));
                }
            }
            lags[idx] = entries;
        }
        let support: std::collections::BTreeSet<(usize, usize)> = lags
            .iter()
            .flat_map(|l| l.iter().map(|&(r, c, _)| (r, c)))
            .collect();
        if support.len() > SUPPORT_FACTOR * d {
            return Err(Error::Invariant(format!(
                "union support has {} cells, more than {SUPPORT_FACTOR}·d = {}",
                support.len(),
                SUPPORT_FACTOR * d
            )));
        }
        Ok(RopeWeights {
            n,
            d,
            mode: WeightMode::General,
            lags,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mode(&self) -> &WeightMode {
        &self.mode
    }

    #[inline]
    pub fn lag(&self, t: isize) -> &[SparseEntry] {
        &self.lags[(t + self.n as isize - 1) as usize]
    }

    /// Sparse entries of lag `t` by array position `t + n - 1`.
    #[inline]
    pub(crate) fn lag_at(&self, idx: usize) -> &[SparseEntry] {
        &self.lags[idx]
    }

    pub fn matrix(&self, t: isize) -> Matrix {
        let mut w = Matrix::zeros(self.d, self.d);
        for &(r, c, v) in self.lag(t) {
            w[(r, c)] = v;
        }
        w
    }

    /// `c_S = max_t nnz(W_t) / d`; logits are bounded by `c_S * B^2`.
    pub fn density(&self) -> f64 {
        let nnz = self.lags.iter().map(Vec::len).max().unwrap_or(0);
        nnz as f64 / self.d as f64
    }

    pub fn lag_table(&self) -> Vec<(i64, Vec<SparseEntry>)> {
        let span = self.n as i64 - 1;
        self.lags
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.is_empty())
            .map(|(idx, e)| (idx as i64 - span, e.clone()))
            .collect()
    }
}
