//! Model and trainer checkpoints.
//!
//! A model is `model.json` (architecture, sensors, scale, seed, checksum) plus
//! `model.bin`: every layer in branch-then-trunk order as the row-major
//! weight matrix followed by the bias, all little-endian `f64`. A trainer
//! checkpoint adds `trainer.json` and `optimizer.bin` (first moments of every
//! layer, then second moments, same layout).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::deeponet::{DeepOperatorModel, OperatorArchitecture};
use super::mlp::Dense;
use super::train::{EpochRecord, OptimizerState, TrainerState, TrainingConfig};
use crate::error::{Error, Result};
use crate::util::{f64s_to_le, le_to_f64s, sha256_hex};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const MODEL_MANIFEST: &str = "model.json";
pub const MODEL_PARAMS: &str = "model.bin";
pub const TRAINER_MANIFEST: &str = "trainer.json";
pub const OPTIMIZER_PARAMS: &str = "optimizer.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub version: u32,
    pub arch: OperatorArchitecture,
    pub sensor_locations: Vec<f64>,
    pub input_scale: f64,
    pub init_seed: u64,
    pub param_count: usize,
    pub params_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainerManifest {
    version: u32,
    config: TrainingConfig,
    epochs_done: usize,
    optimizer_step: u64,
    optimizer_sha256: String,
    curve: Vec<EpochRecord>,
}

fn layers_to_le<'a>(layers: impl Iterator<Item = &'a Dense>, out: &mut Vec<u8>) {
    for l in layers {
        f64s_to_le(l.w.iter().copied(), out);
        f64s_to_le(l.b.iter().copied(), out);
    }
}

/// Fill `layers` from `vals` in storage order; returns the values consumed.
fn fill_layers<'a>(layers: impl Iterator<Item = &'a mut Dense>, vals: &[f64]) -> Result<usize> {
    let mut pos = 0;
    for l in layers {
        for dst in l.w.iter_mut().chain(l.b.iter_mut()) {
            *dst = *vals
                .get(pos)
                .ok_or_else(|| Error::Structural("parameter file too short".into()))?;
            pos += 1;
        }
    }
    Ok(pos)
}

fn read_checked(path: &Path, expected_len: usize, checksum: &str) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() != 8 * expected_len {
        return Err(Error::Truncated {
            expected: 8 * expected_len,
            found: bytes.len(),
        });
    }
    let actual = sha256_hex(&bytes);
    if actual != checksum {
        return Err(Error::Checksum {
            expected: checksum.to_string(),
            actual,
        });
    }
    Ok(le_to_f64s(&bytes))
}

pub fn save_model(model: &DeepOperatorModel, dir: &Path) -> Result<ModelManifest> {
    fs::create_dir_all(dir)?;
    let mut bytes = Vec::with_capacity(8 * model.param_count());
    layers_to_le(model.layers(), &mut bytes);
    let manifest = ModelManifest {
        version: MODEL_FORMAT_VERSION,
        arch: model.arch.clone(),
        sensor_locations: model.sensor_locations.clone(),
        input_scale: model.input_scale,
        init_seed: model.init_seed,
        param_count: model.param_count(),
        params_sha256: sha256_hex(&bytes),
    };
    fs::write(dir.join(MODEL_PARAMS), bytes)?;
    fs::write(
        dir.join(MODEL_MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(manifest)
}

pub fn load_model(dir: &Path) -> Result<DeepOperatorModel> {
    let manifest: ModelManifest = serde_json::from_str(&fs::read_to_string(dir.join(MODEL_MANIFEST))?)?;
    if manifest.version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let mut model = DeepOperatorModel::zeros(manifest.arch.clone(), manifest.input_scale)?;
    if model.param_count() != manifest.param_count
        || model.sensor_locations.len() != manifest.sensor_locations.len()
    {
        return Err(Error::Structural("manifest sizes disagree with the architecture".into()));
    }
    model.sensor_locations = manifest.sensor_locations;
    model.init_seed = manifest.init_seed;
    let vals = read_checked(&dir.join(MODEL_PARAMS), manifest.param_count, &manifest.params_sha256)?;
    fill_layers(model.layers_mut(), &vals)?;
    Ok(model)
}

/// Model files plus optimizer moments and the curve so far.
pub fn save_trainer(state: &TrainerState, dir: &Path) -> Result<()> {
    save_model(&state.model, dir)?;
    let mut bytes = Vec::new();
    layers_to_le(state.optimizer.m.iter(), &mut bytes);
    layers_to_le(state.optimizer.v.iter(), &mut bytes);
    let manifest = TrainerManifest {
        version: MODEL_FORMAT_VERSION,
        config: state.config.clone(),
        epochs_done: state.epochs_done,
        optimizer_step: state.optimizer.step,
        optimizer_sha256: sha256_hex(&bytes),
        curve: state.curve.clone(),
    };
    fs::write(dir.join(OPTIMIZER_PARAMS), bytes)?;
    fs::write(
        dir.join(TRAINER_MANIFEST),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(())
}

pub fn load_trainer(dir: &Path) -> Result<TrainerState> {
    let model = load_model(dir)?;
    let manifest: TrainerManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(TRAINER_MANIFEST))?)?;
    if manifest.version != MODEL_FORMAT_VERSION {
        return Err(Error::Version {
            found: manifest.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let mut optimizer = OptimizerState::new(&model);
    optimizer.step = manifest.optimizer_step;
    let n = model.param_count();
    let vals = read_checked(&dir.join(OPTIMIZER_PARAMS), 2 * n, &manifest.optimizer_sha256)?;
    fill_layers(optimizer.m.iter_mut(), &vals[..n])?;
    fill_layers(optimizer.v.iter_mut(), &vals[n..])?;
    let mut state = TrainerState::new(model, manifest.config)?;
    state.optimizer = optimizer;
    state.epochs_done = manifest.epochs_done;
    state.curve = manifest.curve;
    Ok(state)
}
