//! Model file (JSON with base64 little-endian float32 parameter blobs) and
//! the per-epoch history CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::{Dense, MlpModel};
use super::{History, MlpConfig};
use crate::blob;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: String,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    weights: Tensor,
    bias: Tensor,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    config: MlpConfig,
    techniques: Vec<String>,
    layers: Vec<LayerFile>,
}

/// Writes `model` with its candidate column ordering. Parameters are stored
/// as float32.
pub fn save_model(model: &MlpModel, techniques: &[String], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if techniques.len() != model.config().output_dim {
        return Err(Error::validation(format!(
            "{} technique names for {} outputs",
            techniques.len(),
            model.config().output_dim
        )));
    }
    let file = ModelFile {
        config: model.config().clone(),
        techniques: techniques.to_vec(),
        layers: model
            .layers()
            .iter()
            .map(|l| LayerFile {
                weights: Tensor {
                    shape: vec![l.out_dim(), l.in_dim()],
                    data: blob::encode_f32(l.weights().iter().map(|&w| w as f32)),
                },
                bias: Tensor {
                    shape: vec![l.out_dim()],
                    data: blob::encode_f32(l.biases().iter().map(|&b| b as f32)),
                },
            })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MlpModel, Vec<String>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_str(&text)?;
    let layers = file
        .layers
        .iter()
        .map(|l| {
            let [out_dim, in_dim] = l.weights.shape[..] else {
                return Err(Error::Format("weight shape must be [out, in]".into()));
            };
            if l.bias.shape != [out_dim] {
                return Err(Error::Format("bias shape must be [out]".into()));
            }
            let w = blob::decode_f32(&l.weights.data, out_dim * in_dim)?;
            let b = blob::decode_f32(&l.bias.data, out_dim)?;
            Dense::new(
                in_dim,
                out_dim,
                w.into_iter().map(f64::from).collect(),
                b.into_iter().map(f64::from).collect(),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    if file.techniques.len() != file.config.output_dim {
        return Err(Error::Format("technique list does not match output width".into()));
    }
    Ok((MlpModel::from_layers(file.config, layers)?, file.techniques))
}

pub fn write_history(history: &History, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("epoch,train_bce,val_bce\n");
    for e in &history.epochs {
        writeln!(out, "{},{},{}", e.epoch, e.train_bce, e.val_bce).expect("write to String");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
