//! Zero-ratio feature selection and assembly of the model input vector.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{LabeledDataset, RawRecord, NUM_NUMERIC};
use crate::error::{Error, Result};
use crate::preprocess::{CategoricalVocabulary, OutlierModel};

pub const ZERO_RATIO_THRESHOLD: f64 = 0.80;

/// Fraction of records in which each numeric feature is exactly zero.
pub fn compute_zero_ratios(ds: &LabeledDataset) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return Err(Error::data(
            "cannot compute zero ratios on an empty dataset",
        ));
    }
    let mut zeros = [0usize; NUM_NUMERIC];
    for r in &ds.records {
        for (z, x) in zeros.iter_mut().zip(&r.numeric) {
            if *x == 0.0 {
                *z += 1;
            }
        }
    }
    let n = ds.len() as f64;
    Ok(zeros.iter().map(|&z| z as f64 / n).collect())
}

/// Indices whose zero ratio is at most `threshold`, in original order.
pub fn select_features(ratios: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "zero-ratio threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let kept: Vec<usize> = ratios
        .iter()
        .enumerate()
        .filter(|(_, &r)| r <= threshold)
        .map(|(i, _)| i)
        .collect();
    if kept.is_empty() {
        return Err(Error::data(format!(
            "every numeric feature exceeds the zero-ratio threshold {threshold}"
        )));
    }
    Ok(kept)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    /// Maps `x` into [0, 1]; a degenerate range maps everything to 0.
    pub fn scale(&self, x: f64) -> f64 {
        let range = self.max - self.min;
        if range > 0.0 {
            ((x - self.min) / range).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

pub fn fit_scaling(ds: &LabeledDataset, kept: &[usize]) -> Result<Vec<MinMax>> {
    if ds.is_empty() {
        return Err(Error::data("cannot fit scaling on an empty dataset"));
    }
    Ok(kept
        .iter()
        .map(|&i| {
            ds.records.iter().fold(
                MinMax {
                    min: f64::INFINITY,
                    max: f64::NEG_INFINITY,
                },
                |acc, r| MinMax {
                    min: acc.min.min(r.numeric[i]),
                    max: acc.max.max(r.numeric[i]),
                },
            )
        })
        .collect())
}

/// All fitted preprocessing state. Defines the model input layout:
/// `[scaled kept numerics | protocol | service | flag]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub outlier: OutlierModel,
    pub vocab: CategoricalVocabulary,
    pub zero_ratio_threshold: f64,
    pub zero_ratios: Vec<f64>,
    pub kept_numeric: Vec<usize>,
    pub scaling: Vec<MinMax>,
    pub input_dim: usize,
}

impl FeatureSchema {
    /// Fits feature selection and scaling on the outlier-filtered training split.
    pub fn fit(
        train: &LabeledDataset,
        outlier: OutlierModel,
        vocab: CategoricalVocabulary,
        zero_ratio_threshold: f64,
    ) -> Result<Self> {
        let zero_ratios = compute_zero_ratios(train)?;
        let kept_numeric = select_features(&zero_ratios, zero_ratio_threshold)?;
        let scaling = fit_scaling(train, &kept_numeric)?;
        let input_dim = kept_numeric.len() + vocab.width();
        Ok(FeatureSchema {
            outlier,
            vocab,
            zero_ratio_threshold,
            zero_ratios,
            kept_numeric,
            scaling,
            input_dim,
        })
    }

    /// Width of the full encoding before selection: all numerics plus one-hot.
    pub fn encoded_dim(&self) -> usize {
        NUM_NUMERIC + self.vocab.width()
    }

    pub fn discarded_numeric(&self) -> Vec<usize> {
        (0..NUM_NUMERIC)
            .filter(|i| !self.kept_numeric.contains(i))
            .collect()
    }

    pub fn encode_into(&self, rec: &RawRecord, out: &mut [f64]) {
        assert_eq!(out.len(), self.input_dim, "encode buffer width");
        let (numeric, categorical) = out.split_at_mut(self.kept_numeric.len());
        for ((slot, &i), mm) in numeric
            .iter_mut()
            .zip(&self.kept_numeric)
            .zip(&self.scaling)
        {
            *slot = mm.scale(rec.numeric[i]);
        }
        self.vocab.write_one_hot(rec, categorical);
    }

    pub fn encode(&self, rec: &RawRecord) -> Vec<f64> {
        let mut out = vec![0.0; self.input_dim];
        self.encode_into(rec, &mut out);
        out
    }

    /// Hex SHA-256 of the canonical JSON form; ties caches and artifacts together.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("schema serializes");
        hex::encode(Sha256::digest(&json))
    }
}

pub fn encode(schema: &FeatureSchema, rec: &RawRecord) -> Vec<f64> {
    schema.encode(rec)
}
