//! Weight files: `{"schema": "vispinn-net-v1", "activation": "tanh",
//! "arch": [..], "layers": [{"W": [[..]], "b": [..]}]}`.

use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Architecture, Layer, MlpParams};
use crate::error::{Error, Result};

pub const NET_SCHEMA: &str = "vispinn-net-v1";
pub const ACTIVATION: &str = "tanh";

#[derive(Serialize, Deserialize)]
struct NetFile {
    schema: String,
    activation: String,
    arch: Vec<usize>,
    layers: Vec<LayerFile>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    #[serde(rename = "W")]
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

impl MlpParams {
    pub fn to_json(&self) -> Result<String> {
        let file = NetFile {
            schema: NET_SCHEMA.to_string(),
            activation: ACTIVATION.to_string(),
            arch: self.arch().widths().to_vec(),
            layers: self
                .layers()
                .iter()
                .map(|l| LayerFile {
                    w: l.w.outer_iter().map(|r| r.to_vec()).collect(),
                    b: l.b.to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetFile = serde_json::from_str(text)?;
        if file.schema != NET_SCHEMA {
            return Err(Error::Schema(format!(
                "unknown network schema `{}` (expected `{NET_SCHEMA}`)",
                file.schema
            )));
        }
        if file.activation != ACTIVATION {
            return Err(Error::Schema(format!(
                "unsupported activation `{}`",
                file.activation
            )));
        }
        let arch = Architecture::new(file.arch)?;
        let layers = file
            .layers
            .into_iter()
            .map(|l| {
                let rows = l.w.len();
                let cols = l.w.first().map_or(0, Vec::len);
                if l.w.iter().any(|r| r.len() != cols) {
                    return Err(Error::Schema("ragged weight matrix".into()));
                }
                let flat: Vec<f64> = l.w.into_iter().flatten().collect();
                let w = Array2::from_shape_vec((rows, cols), flat)
                    .map_err(|e| Error::Schema(e.to_string()))?;
                Ok(Layer {
                    w,
                    b: Array1::from_vec(l.b),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MlpParams::from_layers(arch, layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let arch = Architecture::new(vec![2, 5, 3, 1]).unwrap();
        let p = MlpParams::init(&arch, 17);
        let q = MlpParams::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_unknown_schema() {
        let p = MlpParams::init(&Architecture::new(vec![1, 2, 1]).unwrap(), 0);
        let text = p.to_json().unwrap().replace(NET_SCHEMA, "vispinn-net-v9");
        assert!(matches!(MlpParams::from_json(&text), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let text = r#"{"schema":"vispinn-net-v1","activation":"tanh","arch":[1,2,1],
            "layers":[{"W":[[1.0],[2.0]],"b":[0.0,0.0]},{"W":[[1.0,2.0,3.0]],"b":[0.0]}]}"#;
        assert!(MlpParams::from_json(text).is_err());
        let sigmoid = r#"{"schema":"vispinn-net-v1","activation":"sigmoid","arch":[1,1,1],
            "layers":[{"W":[[1.0]],"b":[0.0]},{"W":[[1.0]],"b":[0.0]}]}"#;
        assert!(MlpParams::from_json(sigmoid).is_err());
    }
}
