//! Files written by training runs and the per-command run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ergoscene_core::CodecConfig;
use ergoscene_model::{checkpoint, Model};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::LabError;
use crate::train::EpochMetrics;

pub const CODEC_FILE: &str = "codec.json";
pub const TRAIN_CONFIG_FILE: &str = "train_config.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_FILE: &str = "best.ckpt";
pub const LAST_FILE: &str = "last.ckpt";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), LabError> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    std::fs::write(path, text + "\n").map_err(LabError::io(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, LabError> {
    let text = std::fs::read_to_string(path).map_err(LabError::io(path))?;
    serde_json::from_str(&text).map_err(|e| LabError::Format { path: path.into(), reason: e.to_string() })
}

pub fn save_codec(cfg: &CodecConfig, path: &Path) -> Result<(), LabError> {
    write_json(path, cfg)
}

pub fn load_codec(path: &Path) -> Result<CodecConfig, LabError> {
    let cfg: CodecConfig = read_json(path)?;
    cfg.check()?;
    Ok(cfg)
}

pub fn write_metrics(path: &Path, metrics: &[EpochMetrics]) -> Result<(), LabError> {
    let mut w = csv::Writer::from_path(path)?;
    for m in metrics {
        w.serialize(m)?;
    }
    w.flush().map_err(LabError::io(path))
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>, LabError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Model and codec of a training output directory. `path` may also name a
/// checkpoint file, in which case the codec is read next to it.
pub fn load_run(path: &Path) -> Result<(Model<f32>, CodecConfig), LabError> {
    let (ckpt, dir) = if path.is_dir() {
        (path.join(BEST_FILE), path.to_path_buf())
    } else {
        (path.to_path_buf(), path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf))
    };
    let model = checkpoint::load(&ckpt).map_err(|e| LabError::Format { path: ckpt.clone(), reason: e.to_string() })?;
    let codec = load_codec(&dir.join(CODEC_FILE))?;
    Ok((model, codec))
}

pub fn save_run(dir: &Path, model: &Model<f32>, codec: &CodecConfig) -> Result<(), LabError> {
    std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
    checkpoint::save(model, &dir.join(BEST_FILE))?;
    save_codec(codec, &dir.join(CODEC_FILE))
}

/// Hex SHA-256 of `bytes`.
pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Record of one command invocation, written next to its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub version: String,
    pub started_unix: u64,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Self {
        let json = serde_json::to_vec(config).expect("config serializes");
        RunManifest {
            command: command.to_string(),
            config_hash: digest(&json),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            version: format!("ergoscene {}", env!("CARGO_PKG_VERSION")),
            started_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            timings: BTreeMap::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, LabError> {
        std::fs::create_dir_all(dir).map_err(LabError::io(dir))?;
        let path = dir.join(MANIFEST_FILE);
        write_json(&path, self)?;
        Ok(path)
    }
}
