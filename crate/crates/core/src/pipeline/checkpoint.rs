use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{read_matrix, write_matrix};
use crate::ndcore::{Activation, Layer, Matrix, Mlp};
use crate::{Error, Result};

pub const DESCRIPTOR: &str = "descriptor.json";

/// `descriptor.json` of one stage directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub stage: String,
    pub config_hash: String,
    pub parent_hash: Option<String>,
    pub seed: u64,
    pub sub_seeds: BTreeMap<String, u64>,
    pub version: String,
    /// Files written next to the descriptor, relative to its directory.
    pub files: Vec<String>,
    pub payload: serde_json::Value,
}

pub fn write_descriptor(dir: &Path, d: &Descriptor) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(DESCRIPTOR);
    let mut text = serde_json::to_string_pretty(d)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads the descriptor of `stage` under `dir` and checks it was produced
/// under `expected_hash`.
pub fn read_fresh(dir: &Path, stage: &str, expected_hash: &str) -> Result<Descriptor> {
    let path = dir.join(DESCRIPTOR);
    if !path.exists() {
        return Err(Error::MissingPrerequisite {
            stage: stage.to_string(),
            path,
        });
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let d: Descriptor = serde_json::from_str(&text)?;
    if d.stage != stage {
        return Err(Error::Dataset {
            field: path.display().to_string(),
            message: format!("descriptor belongs to stage `{}`, expected `{stage}`", d.stage),
        });
    }
    if d.config_hash != expected_hash {
        return Err(Error::StaleCheckpoint {
            stage: stage.to_string(),
            recorded: d.config_hash,
            expected: expected_hash.to_string(),
        });
    }
    Ok(d)
}

/// Layer widths and activations; the weights live in matrix files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpShape {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
}

fn layer_files(prefix: &str, i: usize) -> (String, String) {
    (format!("{prefix}.layer{i}.weight.zsmx"), format!("{prefix}.layer{i}.bias.zsmx"))
}

/// Writes every layer as two matrix files. Returns the file names.
pub fn save_mlp(dir: &Path, prefix: &str, net: &Mlp) -> Result<(Vec<String>, MlpShape)> {
    let mut files = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        let (w, b) = layer_files(prefix, i);
        write_matrix(dir.join(&w), &layer.weight)?;
        write_matrix(dir.join(&b), &Matrix::from_vec(1, layer.bias.len(), layer.bias.clone())?)?;
        files.push(w);
        files.push(b);
    }
    Ok((
        files,
        MlpShape {
            dims: net.dims(),
            activations: net.activations(),
        },
    ))
}

pub fn load_mlp(dir: &Path, prefix: &str, shape: &MlpShape) -> Result<Mlp> {
    if shape.dims.len() != shape.activations.len() + 1 {
        return Err(Error::shape("mlp shape", shape.activations.len() + 1, shape.dims.len()));
    }
    let mut layers = Vec::with_capacity(shape.activations.len());
    for (i, &activation) in shape.activations.iter().enumerate() {
        let (w, b) = layer_files(prefix, i);
        let weight = read_matrix(dir.join(w))?;
        let bias = read_matrix(dir.join(b))?;
        if weight.shape() != (shape.dims[i + 1], shape.dims[i]) || bias.shape() != (1, shape.dims[i + 1]) {
            return Err(Error::shape(
                format!("{prefix} layer {i}"),
                format!("{}x{}", shape.dims[i + 1], shape.dims[i]),
                format!("{}x{}", weight.rows(), weight.cols()),
            ));
        }
        layers.push(Layer {
            weight,
            bias: bias.into_vec(),
            activation,
        });
    }
    Mlp::from_layers(layers)
}

pub fn stage_dir(root: &Path, stage: &str) -> PathBuf {
    root.join(stage)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_roundtrip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let net = Mlp::new(&[3, 5, 2], &[Activation::LeakyRelu, Activation::Identity], 4).unwrap();
        let (files, shape) = save_mlp(dir.path(), "g", &net).unwrap();
        assert_eq!(files.len(), 4);
        let back = load_mlp(dir.path(), "g", &shape).unwrap();
        assert_eq!(back, net);
        let bytes: Vec<Vec<u8>> = files.iter().map(|f| fs::read(dir.path().join(f)).unwrap()).collect();
        save_mlp(dir.path(), "g", &back).unwrap();
        for (f, b) in files.iter().zip(bytes) {
            assert_eq!(fs::read(dir.path().join(f)).unwrap(), b);
        }
    }

    #[test]
    fn missing_and_stale_descriptors() {
        let dir = tempfile::tempdir().unwrap();
        let err = read_fresh(dir.path(), "score", "abc").unwrap_err();
        assert_eq!(err.kind(), "missing_prerequisite");
        assert!(err.to_string().contains("score"));
        let d = Descriptor {
            stage: "score".into(),
            config_hash: "abc".into(),
            parent_hash: None,
            seed: 0,
            sub_seeds: BTreeMap::new(),
            version: "0".into(),
            files: vec![],
            payload: serde_json::Value::Null,
        };
        write_descriptor(dir.path(), &d).unwrap();
        assert_eq!(read_fresh(dir.path(), "score", "abc").unwrap(), d);
        assert_eq!(read_fresh(dir.path(), "score", "abd").unwrap_err().kind(), "stale_checkpoint");
    }
}
