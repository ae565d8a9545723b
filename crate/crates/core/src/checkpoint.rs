//! Checkpoint directories: parameters, configuration, scaler and thresholds,
//! with a manifest of SHA-256 file hashes checked on load.
//!
//! ```text
//! <dir>/params.semt       parameter tensors (one entry per named tensor)
//! <dir>/config.json       ModelConfig
//! <dir>/scaler.json       FeatureScaler or null
//! <dir>/thresholds.json   ThresholdSet
//! <dir>/meta.json         CheckpointMeta
//! <dir>/manifest.json     file name → sha256
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{EmbeddingKind, FeatureScaler};
use crate::error::{Error, Result};
use crate::evaluation::ThresholdSet;
use crate::model::{ModelConfig, ModelParams};
use crate::tensor_file::TensorFile;

pub const PARAMS_FILE: &str = "params.semt";
pub const MANIFEST_FILE: &str = "manifest.json";
const CONFIG_FILE: &str = "config.json";
const SCALER_FILE: &str = "scaler.json";
const THRESHOLDS_FILE: &str = "thresholds.json";
const META_FILE: &str = "meta.json";
const FORMAT: &str = "sljp-checkpoint/1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    /// Epoch the parameters come from; 0 for the initialisation.
    pub epoch: usize,
    /// Model-selection score at that epoch, if evaluated.
    pub score: Option<f64>,
    pub label_names: Vec<String>,
    pub embedding_kind: Option<EmbeddingKind>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    files: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub scaler: Option<FeatureScaler>,
    pub thresholds: ThresholdSet,
    pub meta: CheckpointMeta,
}

fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serialisable");
    s.push(b'\n');
    s
}

fn from_json<T: DeserializeOwned>(name: &str, bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| Error::Checkpoint(format!("{name}: {e}")))
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))?;
        let files: [(&str, Vec<u8>); 5] = [
            (PARAMS_FILE, self.params.to_tensor_file().to_bytes()),
            (CONFIG_FILE, to_json(&self.config)),
            (SCALER_FILE, to_json(&self.scaler)),
            (THRESHOLDS_FILE, to_json(&self.thresholds)),
            (META_FILE, to_json(&self.meta)),
        ];
        let mut manifest = Manifest {
            format: FORMAT.into(),
            files: BTreeMap::new(),
        };
        for (name, bytes) in &files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| Error::write(&path, e))?;
            manifest.files.insert((*name).into(), sha256_hex(bytes));
        }
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, to_json(&manifest)).map_err(|e| Error::write(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| -> Result<Vec<u8>> {
            let path = dir.join(name);
            fs::read(&path).map_err(|e| Error::read(&path, e))
        };
        let manifest: Manifest = from_json(MANIFEST_FILE, &read(MANIFEST_FILE)?)?;
        if manifest.format != FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint format `{}`",
                manifest.format
            )));
        }
        let mut verified = BTreeMap::new();
        for name in [
            PARAMS_FILE,
            CONFIG_FILE,
            SCALER_FILE,
            THRESHOLDS_FILE,
            META_FILE,
        ] {
            let bytes = read(name)?;
            let expected = manifest
                .files
                .get(name)
                .ok_or_else(|| Error::Checkpoint(format!("manifest does not list {name}")))?;
            if &sha256_hex(&bytes) != expected {
                return Err(Error::Checkpoint(format!(
                    "{name} does not match its manifest hash"
                )));
            }
            verified.insert(name, bytes);
        }
        let config: ModelConfig = from_json(CONFIG_FILE, &verified[CONFIG_FILE])?;
        config.validate()?;
        let file = TensorFile::from_bytes(&verified[PARAMS_FILE])?;
        let params = ModelParams::from_tensor_file(&config, &file)?;
        let scaler: Option<FeatureScaler> = from_json(SCALER_FILE, &verified[SCALER_FILE])?;
        let thresholds: ThresholdSet = from_json(THRESHOLDS_FILE, &verified[THRESHOLDS_FILE])?;
        if thresholds.len() != config.num_labels {
            return Err(Error::dim(
                "checkpoint thresholds",
                config.num_labels,
                thresholds.len(),
            ));
        }
        if let Some(s) = &scaler {
            if s.dim() != config.embedding_dim {
                return Err(Error::dim(
                    "checkpoint scaler",
                    config.embedding_dim,
                    s.dim(),
                ));
            }
        }
        let meta = from_json(META_FILE, &verified[META_FILE])?;
        Ok(Self {
            config,
            params,
            scaler,
            thresholds,
            meta,
        })
    }
}
