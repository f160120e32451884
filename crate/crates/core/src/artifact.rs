//! Model artifact and encoded-dataset cache files.
//!
//! The artifact is one JSON document. Parameter arrays are base64 of
//! little-endian `f64`s; layers appear in forward order and each layer's
//! weights are row-major by input index (`[fan_in][fan_out]`), followed by a
//! separate bias array.
//!
//! Caches are binary: a magic line, a JSON header line, then `rows` label
//! bytes and `rows * dim` little-endian `f64`s.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, PipelineConfig};
use crate::dataset::Split;
use crate::error::{Error, Result};
use crate::features::FeatureSchema;
use crate::models::{StageLog, CLASSES};
use crate::neuralnet::{Activation, DenseLayer, LossKind, Network};
use crate::pipeline::{EncodedSet, TrainedModel};

pub const ARTIFACT_FORMAT: &str = "kdd-ids-model";
pub const ARTIFACT_VERSION: u32 = 1;
pub const PARAMETER_ENCODING: &str = "base64:f64-le";
pub const PARAMETER_ORDERING: &str =
    "layers in forward order; weights row-major [fan_in][fan_out], then bias [fan_out]";

const CACHE_MAGIC: &[u8] = b"KDDIDS-CACHE 1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub loss: LossKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub weights: String,
    pub bias: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    pub encoding: String,
    pub ordering: String,
    pub layers: Vec<LayerParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub stages: Vec<StageLog>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub format_version: u32,
    pub model_kind: ModelKind,
    pub model_tag: String,
    pub schema_hash: String,
    pub schema: FeatureSchema,
    /// Class name for each output index.
    pub classes: Vec<String>,
    pub topology: Topology,
    pub parameters: Parameters,
    pub config: PipelineConfig,
    pub config_hash: String,
    pub training: TrainingMetadata,
}

pub fn encode_f64s(values: impl IntoIterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(f64::to_le_bytes).collect();
    STANDARD.encode(bytes)
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::Artifact(format!("bad base64: {e}")))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Artifact(
            "parameter byte length is not a multiple of 8".into(),
        ));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

impl ModelArtifact {
    pub fn new(schema: &FeatureSchema, model: &TrainedModel, config: &PipelineConfig) -> Self {
        let net = &model.network;
        ModelArtifact {
            format: ARTIFACT_FORMAT.to_string(),
            format_version: ARTIFACT_VERSION,
            model_kind: model.kind,
            model_tag: model.tag.clone(),
            schema_hash: schema.hash(),
            schema: schema.clone(),
            classes: CLASSES.iter().map(|c| c.name().to_string()).collect(),
            topology: Topology {
                dims: net.dims(),
                activations: net.layers().iter().map(|l| l.activation).collect(),
                loss: net.loss_kind(),
            },
            parameters: Parameters {
                encoding: PARAMETER_ENCODING.to_string(),
                ordering: PARAMETER_ORDERING.to_string(),
                layers: net
                    .layers()
                    .iter()
                    .map(|l| LayerParams {
                        weights: encode_f64s(l.weights.iter().copied()),
                        bias: encode_f64s(l.bias.iter().copied()),
                    })
                    .collect(),
            },
            config: config.clone(),
            config_hash: config.hash(),
            training: TrainingMetadata {
                stages: model.stages.clone(),
                warnings: model.warnings.clone(),
            },
        }
    }

    /// Rebuilds the network, checking every declared dimension.
    pub fn network(&self) -> Result<Network> {
        let dims = &self.topology.dims;
        if dims.len() < 2
            || self.topology.activations.len() != dims.len() - 1
            || self.parameters.layers.len() != dims.len() - 1
        {
            return Err(Error::Artifact(
                "topology and parameter layer counts disagree".into(),
            ));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (i, (params, &act)) in self
            .parameters
            .layers
            .iter()
            .zip(&self.topology.activations)
            .enumerate()
        {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let w = decode_f64s(&params.weights)?;
            let b = decode_f64s(&params.bias)?;
            if w.len() != fan_in * fan_out || b.len() != fan_out {
                return Err(Error::Artifact(format!(
                    "layer {i}: expected {fan_in}x{fan_out} weights and {fan_out} biases, found {} and {}",
                    w.len(),
                    b.len()
                )));
            }
            layers.push(DenseLayer {
                weights: Array2::from_shape_vec((fan_in, fan_out), w).expect("checked length"),
                bias: Array1::from(b),
                activation: act,
            });
        }
        Network::new(layers, self.topology.loss)
            .map_err(|e| Error::Artifact(format!("invalid topology: {e}")))
    }

    fn validate(&self) -> Result<()> {
        if self.format != ARTIFACT_FORMAT {
            return Err(Error::Artifact(format!(
                "unrecognized format {:?}",
                self.format
            )));
        }
        if self.format_version != ARTIFACT_VERSION {
            return Err(Error::Artifact(format!(
                "unsupported format version {} (expected {ARTIFACT_VERSION})",
                self.format_version
            )));
        }
        if self.parameters.encoding != PARAMETER_ENCODING {
            return Err(Error::Artifact(format!(
                "unsupported parameter encoding {:?}",
                self.parameters.encoding
            )));
        }
        if self.schema.hash() != self.schema_hash {
            return Err(Error::Artifact(
                "schema does not match its recorded hash".into(),
            ));
        }
        let expected: Vec<String> = CLASSES.iter().map(|c| c.name().to_string()).collect();
        if self.classes != expected {
            return Err(Error::Artifact(format!(
                "unexpected class map {:?}",
                self.classes
            )));
        }
        let net = self.network()?;
        if net.input_dim() != self.schema.input_dim {
            return Err(Error::Artifact(format!(
                "network input {} does not match schema input {}",
                net.input_dim(),
                self.schema.input_dim
            )));
        }
        Ok(())
    }

    /// Writes the artifact via a temporary file so readers never see a partial one.
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let artifact: ModelArtifact = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Artifact(format!("{}: {e}", path.display())))?;
        artifact.validate()?;
        Ok(artifact)
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = tmp_path(path);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".tmp");
    path.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheHeader {
    pub split: Split,
    pub rows: usize,
    pub dim: usize,
    pub schema_hash: String,
    pub preprocessing_hash: String,
}

pub fn save_cache(
    path: &Path,
    set: &EncodedSet,
    schema_hash: &str,
    preprocessing_hash: &str,
) -> Result<()> {
    let header = CacheHeader {
        split: set.split,
        rows: set.len(),
        dim: set.inputs.ncols(),
        schema_hash: schema_hash.to_string(),
        preprocessing_hash: preprocessing_hash.to_string(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = tmp_path(path);
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(&tmp, e);
    w.write_all(CACHE_MAGIC).map_err(io)?;
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n").map_err(io)?;
    let labels: Vec<u8> = set.labels.iter().map(|&l| l as u8).collect();
    w.write_all(&labels).map_err(io)?;
    for v in set.inputs.iter() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_cache(path: &Path) -> Result<(CacheHeader, EncodedSet)> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let corrupt = |what: &str| Error::Data(format!("{}: corrupt cache ({what})", path.display()));
    let rest = bytes
        .strip_prefix(CACHE_MAGIC)
        .ok_or_else(|| corrupt("bad magic"))?;
    let newline = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| corrupt("missing header"))?;
    let header: CacheHeader =
        serde_json::from_slice(&rest[..newline]).map_err(|_| corrupt("bad header"))?;
    let body = &rest[newline + 1..];
    if body.len() != header.rows + header.rows * header.dim * 8 {
        return Err(corrupt("unexpected length"));
    }
    let (labels, values) = body.split_at(header.rows);
    let labels: Vec<usize> = labels.iter().map(|&b| b as usize).collect();
    if labels.iter().any(|&l| l >= CLASSES.len()) {
        return Err(corrupt("label out of range"));
    }
    let values: Vec<f64> = values
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let inputs = Array2::from_shape_vec((header.rows, header.dim), values).expect("checked length");
    let set = EncodedSet {
        inputs,
        labels,
        split: header.split,
    };
    Ok((header, set))
}
