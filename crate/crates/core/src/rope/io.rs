//! JSON instance files.
//!
//! ```json
//! { "n": 2, "d": 2, "B": 1.0, "mode": "rotary", "base": 10000.0,
//!   "A1": [[..],[..]], "A2": .., "A3": .., "X1": .., "X2": .., "Y": .., "E": .. }
//! ```
//!
//! General mode replaces `base` with `"weights": [{"t": -1, "entries": [[row, col, value], ..]}, ..]`
//! (0-based row/col; omitted lags are zero).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rope::instance::{Instance, InstanceParts};
use crate::rope::weights::{RopeWeights, SparseEntry, WeightMode};
use crate::tensor::Matrix;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LagEntries {
    pub t: i64,
    pub entries: Vec<SparseEntry>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub n: usize,
    pub d: usize,
    #[serde(rename = "B")]
    pub bound: f64,
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<LagEntries>>,
    #[serde(rename = "A1")]
    pub a1: Vec<Vec<f64>>,
    #[serde(rename = "A2")]
    pub a2: Vec<Vec<f64>>,
    #[serde(rename = "A3")]
    pub a3: Vec<Vec<f64>>,
    #[serde(rename = "X1")]
    pub x1: Vec<Vec<f64>>,
    #[serde(rename = "X2")]
    pub x2: Vec<Vec<f64>>,
    #[serde(rename = "Y")]
    pub y: Vec<Vec<f64>>,
    #[serde(rename = "E")]
    pub e: Vec<Vec<f64>>,
}

fn named(name: &'static str, rows: &[Vec<f64>]) -> Result<Matrix> {
    Matrix::from_rows(rows).map_err(|e| Error::Invariant(format!("{name}: {e}")))
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        let weights = match self.mode.as_str() {
            "identity" => RopeWeights::identity(self.n, self.d)?,
            "rotary" => {
                let base = self
                    .base
                    .ok_or_else(|| Error::Invariant("rotary mode requires `base`".into()))?;
                RopeWeights::rotary(self.n, self.d, base)?
            }
            "general" => {
                let table = self
                    .weights
                    .ok_or_else(|| Error::Invariant("general mode requires `weights`".into()))?;
                RopeWeights::general(
                    self.n,
                    self.d,
                    table.into_iter().map(|l| (l.t, l.entries)).collect(),
                )?
            }
            other => {
                return Err(Error::Invariant(format!(
                    "unknown mode `{other}` (expected identity | rotary | general)"
                )))
            }
        };
        Instance::new(InstanceParts {
            a1: named("A1", &self.a1)?,
            a2: named("A2", &self.a2)?,
            a3: named("A3", &self.a3)?,
            x1: named("X1", &self.x1)?,
            x2: named("X2", &self.x2)?,
            y: named("Y", &self.y)?,
            e: named("E", &self.e)?,
            bound: self.bound,
            weights,
        })
    }

    pub fn from_instance(inst: &Instance) -> Self {
        let w = inst.weights();
        let (base, weights) = match w.mode() {
            WeightMode::Identity => (None, None),
            WeightMode::Rotary { base } => (Some(*base), None),
            WeightMode::General => (
                None,
                Some(
                    w.lag_table()
                        .into_iter()
                        .map(|(t, entries)| LagEntries { t, entries })
                        .collect(),
                ),
            ),
        };
        InstanceFile {
            n: inst.n(),
            d: inst.d(),
            bound: inst.bound(),
            mode: w.mode().name().to_string(),
            base,
            weights,
            a1: inst.a1().to_rows(),
            a2: inst.a2().to_rows(),
            a3: inst.a3().to_rows(),
            x1: inst.x1().to_rows(),
            x2: inst.x2().to_rows(),
            y: inst.y().to_rows(),
            e: inst.e().to_rows(),
        }
    }
}

impl Instance {
    pub fn from_json_str(s: &str) -> Result<Instance> {
        serde_json::from_str::<InstanceFile>(s)?.into_instance()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&InstanceFile::from_instance(
            self,
        ))?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Instance::from_json_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()?)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rope::testutil::{random_instance, Mode};

    #[test]
    fn json_round_trip_rotary_and_identity() {
        for mode in [Mode::Rotary, Mode::Identity] {
            let inst = random_instance(4, 2, mode, 9);
            let back = Instance::from_json_str(&inst.to_json_string().unwrap()).unwrap();
            assert_eq!(back, inst);
        }
    }

    #[test]
    fn general_mode_file() {
        let text = r#"{
            "n": 2, "d": 1, "B": 1.0, "mode": "general",
            "weights": [{"t": 0, "entries": [[0, 0, 1.0]]}, {"t": -1, "entries": [[0, 0, -0.5]]}],
            "A1": [[0.5], [0.25]], "A2": [[1.0], [-1.0]], "A3": [[0.1], [0.2]],
            "X1": [[1.0]], "X2": [[0.5]], "Y": [[1.0]], "E": [[0.0], [0.0]]
        }"#;
        let inst = Instance::from_json_str(text).unwrap();
        assert_eq!(inst.weights().matrix(-1)[(0, 0)], -0.5);
        assert_eq!(inst.weights().matrix(1)[(0, 0)], 0.0);
        let back = Instance::from_json_str(&inst.to_json_string().unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn loader_reports_first_violation() {
        let inst = random_instance(3, 2, Mode::Rotary, 1);
        let mut file = InstanceFile::from_instance(&inst);
        file.a2.pop();
        let err = file.clone().into_instance().unwrap_err().to_string();
        assert!(err.contains("A2"), "{err}");

        let mut file = InstanceFile::from_instance(&inst);
        file.bound = 1e-3;
        let err = file.into_instance().unwrap_err().to_string();
        assert!(err.contains("A1·X1"), "{err}");

        let mut file = InstanceFile::from_instance(&inst);
        file.base = None;
        assert!(file
            .into_instance()
            .unwrap_err()
            .to_string()
            .contains("base"));

        let mut file = InstanceFile::from_instance(&inst);
        file.mode = "alibi".into();
        assert!(file.into_instance().is_err());

        assert!(matches!(Instance::from_json_str("{"), Err(Error::Parse(_))));
    }

    #[test]
    fn loader_rejects_overflowing_bound() {
        let inst = random_instance(3, 2, Mode::Rotary, 1);
        let mut file = InstanceFile::from_instance(&inst);
        file.bound = 5.0; // 2 * 25 > 40
        assert!(matches!(file.into_instance(), Err(Error::InstanceBound(_))));
    }
}
