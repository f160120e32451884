//! Pipeline configuration: defaults, flat `key = value` files, hashing.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::ZERO_RATIO_THRESHOLD;
use crate::preprocess::{MAD_SCALE, OUTLIER_K};

/// Environment variable naming the directory holding `KDDTrain+.txt` and
/// `KDDTest+.txt`.
pub const DATA_DIR_ENV: &str = "KDD_IDS_DATA_DIR";
pub const TRAIN_FILE: &str = "KDDTrain+.txt";
pub const TEST_FILE: &str = "KDDTest+.txt";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ae,
    Mlp,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ae" => Ok(ModelKind::Ae),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::Config(format!(
                "unknown model {other:?} (expected ae or mlp)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Ae => "ae",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train_path: PathBuf,
    pub test_path: PathBuf,
    pub k: f64,
    pub mad_scale: f64,
    pub zero_ratio_threshold: f64,
    pub code_sizes: Vec<usize>,
    pub mlp_hidden: usize,
    pub pretrain_iters: usize,
    pub finetune_iters: usize,
    pub head_iters: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub out_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let data_dir = std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data"));
        PipelineConfig {
            train_path: data_dir.join(TRAIN_FILE),
            test_path: data_dir.join(TEST_FILE),
            k: OUTLIER_K,
            mad_scale: MAD_SCALE,
            zero_ratio_threshold: ZERO_RATIO_THRESHOLD,
            code_sizes: vec![50],
            mlp_hidden: 50,
            pretrain_iters: 100,
            finetune_iters: 300,
            head_iters: 100,
            seed: 1,
            model: ModelKind::Ae,
            out_dir: PathBuf::from("out"),
        }
    }
}

pub fn parse_code_sizes(s: &str) -> Result<Vec<usize>> {
    let sizes = s
        .trim()
        .trim_start_matches('[')
        .trim_end_matches(']')
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("invalid code size {p:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(sizes)
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl PipelineConfig {
    /// Sets one field from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        match key.as_str() {
            "train_path" => self.train_path = value.trim().into(),
            "test_path" => self.test_path = value.trim().into(),
            "data_dir" => {
                let dir = PathBuf::from(value.trim());
                self.train_path = dir.join(TRAIN_FILE);
                self.test_path = dir.join(TEST_FILE);
            }
            "k" => self.k = parse_value(&key, value)?,
            "c" | "mad_scale" => self.mad_scale = parse_value(&key, value)?,
            "zero_ratio_threshold" => self.zero_ratio_threshold = parse_value(&key, value)?,
            "code_sizes" => self.code_sizes = parse_code_sizes(value)?,
            "mlp_hidden" => self.mlp_hidden = parse_value(&key, value)?,
            "pretrain_iters" => self.pretrain_iters = parse_value(&key, value)?,
            "finetune_iters" => self.finetune_iters = parse_value(&key, value)?,
            "head_iters" => self.head_iters = parse_value(&key, value)?,
            "seed" => self.seed = parse_value(&key, value)?,
            "model" => self.model = value.parse()?,
            "out_dir" => self.out_dir = value.trim().into(),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies a flat `key = value` file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0) {
            return Err(Error::Config(format!("k must be positive, got {}", self.k)));
        }
        if !(self.mad_scale > 0.0) {
            return Err(Error::Config(format!(
                "C must be positive, got {}",
                self.mad_scale
            )));
        }
        if !(self.zero_ratio_threshold > 0.0 && self.zero_ratio_threshold < 1.0) {
            return Err(Error::Config(format!(
                "zero_ratio_threshold must lie in (0, 1), got {}",
                self.zero_ratio_threshold
            )));
        }
        if self.model == ModelKind::Ae
            && (self.code_sizes.is_empty() || self.code_sizes.contains(&0))
        {
            return Err(Error::Config(
                "code_sizes must be a non-empty list of positive sizes".into(),
            ));
        }
        if self.mlp_hidden == 0 {
            return Err(Error::Config("mlp_hidden must be positive".into()));
        }
        Ok(())
    }

    /// Human-readable model tag, e.g. `AE[50,25]` or `MLP[50]`.
    pub fn model_tag(&self) -> String {
        match self.model {
            ModelKind::Ae => format!(
                "AE[{}]",
                self.code_sizes
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ),
            ModelKind::Mlp => format!("MLP[{}]", self.mlp_hidden),
        }
    }

    /// File stem for the artifact of this configuration, e.g. `ae-50-25`.
    pub fn artifact_stem(&self) -> String {
        match self.model {
            ModelKind::Ae => format!(
                "ae-{}",
                self.code_sizes
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join("-")
            ),
            ModelKind::Mlp => format!("mlp-{}", self.mlp_hidden),
        }
    }

    pub fn artifact_path(&self) -> PathBuf {
        self.out_dir
            .join(format!("{}.model.json", self.artifact_stem()))
    }

    /// Hash of everything that affects preprocessing; keys the encoded caches.
    pub fn preprocessing_hash(&self) -> String {
        let key = serde_json::json!({
            "train_path": self.train_path,
            "test_path": self.test_path,
            "k": self.k,
            "mad_scale": self.mad_scale,
            "zero_ratio_threshold": self.zero_ratio_threshold,
        });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }

    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
