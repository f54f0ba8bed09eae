use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{GridField, LiftMap, PinnedParams};
use crate::error::{Error, Result};

/// JSON description of a map.
///
/// ```json
/// {"family": "coupled_shear", "params": {"a": 0, "b": 0, "r": 0.3, "s": 0.2}, "conservative": true}
/// {"family": "grid", "resolution": 64, "data": "field.bin"}
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub family: String,
    #[serde(default)]
    pub params: serde_json::Map<String, Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conservative: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
}

impl MapConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("map config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn num(&self, key: &str, default: Option<f64>) -> Result<f64> {
        match self.params.get(key) {
            Some(v) => v
                .as_f64()
                .filter(|x| x.is_finite())
                .ok_or_else(|| Error::Parse(format!("parameter {key:?} must be a finite number"))),
            None => default.ok_or_else(|| Error::Parse(format!("{} family needs parameter {key:?}", self.family))),
        }
    }

    fn int(&self, key: &str) -> Result<i64> {
        self.params
            .get(key)
            .and_then(Value::as_i64)
            .ok_or_else(|| Error::Parse(format!("{} family needs integer parameter {key:?}", self.family)))
    }

    /// Builds the canonical lift. Relative grid data paths are resolved
    /// against `base_dir`.
    pub fn build(&self, base_dir: Option<&Path>) -> Result<LiftMap> {
        let map = match self.family.as_str() {
            "translation" | "identity" => LiftMap::translation(self.num("a", Some(0.0))?, self.num("b", Some(0.0))?),
            "shear" => LiftMap::shear(self.num("r", None)?),
            "coupled_shear" => LiftMap::coupled_shear(
                self.num("a", Some(0.0))?,
                self.num("b", Some(0.0))?,
                self.num("r", None)?,
                self.num("s", None)?,
            ),
            "pinned" => {
                let q = u32::try_from(self.int("q")?).map_err(|_| Error::Parse("q out of range".into()))?;
                LiftMap::pinned(PinnedParams::new(
                    self.int("p")?,
                    q,
                    self.num("lock", Some(0.9))?,
                    self.num("contraction", Some(0.9))?,
                )?)
            }
            "grid" => {
                let n = self.resolution.ok_or_else(|| Error::Parse("grid family needs \"resolution\"".into()))?;
                let data = self.data.as_ref().ok_or_else(|| Error::Parse("grid family needs \"data\"".into()))?;
                let path = match base_dir {
                    Some(dir) if data.is_relative() => dir.join(data),
                    _ => data.clone(),
                };
                LiftMap::grid(GridField::read_f32(&path, n)?)
            }
            other => return Err(Error::Parse(format!("unknown map family {other:?}"))),
        };
        let map = match self.conservative {
            Some(flag) => map.with_conservative(flag),
            None => map,
        };
        Ok(map.canonicalize())
    }
}

/// Reads a config file and builds its canonical lift.
pub fn load_map(path: &Path) -> Result<LiftMap> {
    MapConfig::load(path)?.build(path.parent())
}
