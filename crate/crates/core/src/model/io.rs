//! JSON model files: a shape header, the training configuration and one
//! base64 block of little-endian `f64` values per parameter tensor.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{RiskModel, TrainConfig};
use crate::error::{Result, RiskError};
use crate::ndcore::Matrix;

pub const MODEL_FORMAT: &str = "risk_model_v1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    input_dim: usize,
    classes: usize,
    w1: usize,
    d_h: usize,
    d: usize,
    config: TrainConfig,
    params: Vec<ParamBlock>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamBlock {
    name: String,
    rows: usize,
    cols: usize,
    data: String,
}

fn param_names(model: &RiskModel) -> Vec<String> {
    let affine = |prefix: String| [format!("{prefix}.weight"), format!("{prefix}.bias")];
    let mut names = vec![];
    for k in 0..model.encoder.len() {
        names.extend(affine(format!("encoder.{k}")));
    }
    names.push("recovery.a".into());
    for k in 0..model.decoder.len() {
        names.extend(affine(format!("decoder.{k}")));
    }
    names.extend(affine("classifier".into()));
    names
}

fn encode_block(m: &Matrix) -> String {
    let bytes: Vec<u8> = m.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode_block(block: &ParamBlock) -> Result<Matrix> {
    let bytes = STANDARD
        .decode(&block.data)
        .map_err(|e| RiskError::ModelFormat(format!("{}: {e}", block.name)))?;
    if bytes.len() != block.rows * block.cols * 8 {
        return Err(RiskError::ModelFormat(format!(
            "{}: {} bytes for a {}x{} block",
            block.name,
            bytes.len(),
            block.rows,
            block.cols
        )));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::new(block.rows, block.cols, values)
}

pub fn model_to_json(model: &RiskModel) -> Result<String> {
    let params = param_names(model)
        .into_iter()
        .zip(model.params())
        .map(|(name, p)| ParamBlock {
            name,
            rows: p.value.rows(),
            cols: p.value.cols(),
            data: encode_block(&p.value),
        })
        .collect();
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        input_dim: model.widths.input,
        classes: model.classes,
        w1: model.widths.w1,
        d_h: model.widths.d_h,
        d: model.widths.d,
        config: model.config.clone(),
        params,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<RiskModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    if file.format != MODEL_FORMAT {
        return Err(RiskError::ModelFormat(format!("unknown format {:?}", file.format)));
    }
    let mut model = RiskModel::new(file.input_dim, file.classes, &file.config)?;
    let w = model.widths;
    if (w.w1, w.d_h, w.d) != (file.w1, file.d_h, file.d) {
        return Err(RiskError::ModelFormat(format!(
            "header widths ({}, {}, {}) disagree with the config ({}, {}, {})",
            file.w1, file.d_h, file.d, w.w1, w.d_h, w.d
        )));
    }
    let names = param_names(&model);
    if file.params.len() != names.len() {
        return Err(RiskError::ModelFormat(format!(
            "{} parameter blocks, expected {}",
            file.params.len(),
            names.len()
        )));
    }
    for ((block, name), p) in file.params.iter().zip(&names).zip(model.params_mut()) {
        if &block.name != name {
            return Err(RiskError::ModelFormat(format!("block {:?} where {name:?} was expected", block.name)));
        }
        let value = decode_block(block)?;
        if value.shape() != p.value.shape() {
            return Err(RiskError::ModelFormat(format!(
                "{name}: shape {:?}, expected {:?}",
                value.shape(),
                p.value.shape()
            )));
        }
        p.value = value;
    }
    if !model.params().iter().all(|p| p.value.is_finite()) {
        return Err(RiskError::NonFinite("model parameters".into()));
    }
    Ok(model)
}

pub fn save_model(model: &RiskModel, path: &Path) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<RiskModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
