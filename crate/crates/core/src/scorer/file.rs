//! JSON model files with base64 little-endian f64 weight payloads.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{Dense, LossKind, ScorerModel};
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "xmodal-scorer";
const MODEL_VERSION: u32 = 1;
const ENCODING: &str = "base64-f64le";

#[derive(Serialize, Deserialize)]
struct LayerFile {
    inputs: usize,
    outputs: usize,
    weights: String,
    biases: String,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    input_dim: usize,
    text_dim: usize,
    image_dim: usize,
    hidden_sizes: Vec<usize>,
    seed: u64,
    loss: Option<LossKind>,
    encoding: String,
    layers: Vec<LayerFile>,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(text: &str, expected: usize, what: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::ModelFormat(format!("{what}: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::ModelFormat(format!(
            "{what}: {} bytes, expected {}",
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl ScorerModel {
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            input_dim: self.input_dim(),
            text_dim: self.text_dim,
            image_dim: self.image_dim,
            hidden_sizes: self.hidden_sizes.clone(),
            seed: self.seed,
            loss: self.loss,
            encoding: ENCODING.into(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: encode(&l.weights),
                    biases: encode(&l.biases),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!(
                "format {:?}, expected {MODEL_FORMAT:?}",
                file.format
            )));
        }
        if file.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", file.version)));
        }
        if file.encoding != ENCODING {
            return Err(Error::ModelFormat(format!("unsupported encoding {:?}", file.encoding)));
        }
        if file.input_dim != file.text_dim + file.image_dim {
            return Err(Error::ModelFormat(format!(
                "input_dim {} is not text_dim {} + image_dim {}",
                file.input_dim, file.text_dim, file.image_dim
            )));
        }
        let layers = file
            .layers
            .iter()
            .enumerate()
            .map(|(k, l)| {
                Ok(Dense {
                    inputs: l.inputs,
                    outputs: l.outputs,
                    weights: decode(&l.weights, l.inputs * l.outputs, &format!("layer {k} weights"))?,
                    biases: decode(&l.biases, l.outputs, &format!("layer {k} biases"))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = ScorerModel::from_layers(file.text_dim, file.image_dim, layers)
            .map_err(|e| Error::ModelFormat(e.to_string()))?;
        if model.hidden_sizes != file.hidden_sizes {
            return Err(Error::ModelFormat(format!(
                "hidden_sizes {:?} disagree with the layers {:?}",
                file.hidden_sizes, model.hidden_sizes
            )));
        }
        model.seed = file.seed;
        model.loss = file.loss;
        Ok(model)
    }
}

pub fn save_model(model: &ScorerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model.to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ScorerModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ScorerModel::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut m = ScorerModel::new(3, 2, &[6, 4], 11).unwrap();
        m.loss = Some(LossKind::Contrastive);
        *m.param_mut(5) = f64::MIN_POSITIVE / 3.0; // subnormal survives too
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        let (x, y) = ([0.3f32, -2.0, 1.5], [0.25f32, 7.0]);
        assert_eq!(
            back.forward(&x, &y).unwrap().to_bits(),
            m.forward(&x, &y).unwrap().to_bits()
        );
    }

    #[test]
    fn rejects_bad_files() {
        let m = ScorerModel::new(2, 2, &[3], 0).unwrap();
        let good: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        let mutate = |f: &dyn Fn(&mut serde_json::Value)| {
            let mut v = good.clone();
            f(&mut v);
            ScorerModel::from_json(&v.to_string()).unwrap_err().code()
        };
        assert_eq!(mutate(&|v| v["format"] = "other".into()), "model_format");
        assert_eq!(mutate(&|v| v["version"] = 9.into()), "model_format");
        assert_eq!(mutate(&|v| v["input_dim"] = 5.into()), "model_format");
        assert_eq!(mutate(&|v| v["hidden_sizes"] = serde_json::json!([4])), "model_format");
        assert_eq!(mutate(&|v| v["layers"][0]["biases"] = "AAAA".into()), "model_format");
        assert_eq!(ScorerModel::from_json("{").unwrap_err().code(), "model_format");
    }
}
