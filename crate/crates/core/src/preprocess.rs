//! Robust outlier rejection and one-hot encoding of the categorical columns.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, RawRecord, Split, NUM_NUMERIC};
use crate::error::{Error, Result};

/// Consistency constant that makes the MAD estimate the standard deviation
/// of normally distributed data.
pub const MAD_SCALE: f64 = 1.4826;
/// Rejection threshold in MAD units.
pub const OUTLIER_K: f64 = 10.0;

/// Per-feature median and scaled MAD, fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierModel {
    pub medians: Vec<f64>,
    pub mads: Vec<f64>,
    pub scale: f64,
    pub k: f64,
}

/// Median of a slice; averages the two middle values for even lengths.
/// Returns `None` for an empty slice.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}

/// Returns `(median, scale * median(|x - median|))`.
pub fn median_abs_deviation(values: &[f64], scale: f64) -> Option<(f64, f64)> {
    let m = median(values)?;
    let deviations: Vec<f64> = values.iter().map(|x| (x - m).abs()).collect();
    Some((m, scale * median(&deviations)?))
}

pub fn fit_outlier_model(ds: &LabeledDataset, scale: f64, k: f64) -> Result<OutlierModel> {
    if ds.is_empty() {
        return Err(Error::data("cannot fit outlier model on an empty dataset"));
    }
    if ds.split != Split::Train {
        return Err(Error::data(
            "outlier model must be fitted on the training split",
        ));
    }
    if !(k > 0.0) || !(scale > 0.0) {
        return Err(Error::Config(format!(
            "outlier constants must be positive (k={k}, C={scale})"
        )));
    }
    let mut medians = Vec::with_capacity(NUM_NUMERIC);
    let mut mads = Vec::with_capacity(NUM_NUMERIC);
    let mut column = Vec::with_capacity(ds.len());
    for i in 0..NUM_NUMERIC {
        column.clear();
        column.extend(ds.records.iter().map(|r| r.numeric[i]));
        let (m, mad) = median_abs_deviation(&column, scale).expect("non-empty");
        medians.push(m);
        mads.push(mad);
    }
    Ok(OutlierModel {
        medians,
        mads,
        scale,
        k,
    })
}

impl OutlierModel {
    /// True when any feature with a positive MAD deviates from its median by
    /// more than `k` MADs. Zero-MAD features never trigger.
    pub fn is_outlier(&self, rec: &RawRecord) -> bool {
        rec.numeric
            .iter()
            .zip(self.medians.iter().zip(&self.mads))
            .any(|(x, (m, mad))| *mad > 0.0 && (x - m).abs() > self.k * mad)
    }

    /// Features that can trigger rejection (positive MAD).
    pub fn active_features(&self) -> Vec<usize> {
        (0..self.mads.len())
            .filter(|&i| self.mads[i] > 0.0)
            .collect()
    }
}

pub fn is_outlier(model: &OutlierModel, rec: &RawRecord) -> bool {
    model.is_outlier(rec)
}

pub fn filter_outliers(model: &OutlierModel, ds: LabeledDataset) -> LabeledDataset {
    ds.retain(|r, _| !model.is_outlier(r))
}

/// Ordered symbol list for one categorical feature.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Adds `symbol` if unseen; keeps first-occurrence order.
    pub fn observe(&mut self, symbol: &str) {
        if !self.index.contains_key(symbol) {
            self.index.insert(symbol.to_string(), self.symbols.len());
            self.symbols.push(symbol.to_string());
        }
    }

    pub fn position(&self, symbol: &str) -> Option<usize> {
        self.index.get(symbol).copied()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    fn write_one_hot(&self, symbol: &str, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.len());
        out.fill(0.0);
        if let Some(i) = self.position(symbol) {
            out[i] = 1.0;
        }
    }
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.symbols == other.symbols
    }
}

impl From<Vec<String>> for Vocab {
    fn from(symbols: Vec<String>) -> Self {
        let mut v = Vocab::default();
        for s in &symbols {
            v.observe(s);
        }
        v
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.symbols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalVocabulary {
    pub protocol: Vocab,
    pub service: Vocab,
    pub flag: Vocab,
}

impl CategoricalVocabulary {
    /// Total one-hot width.
    pub fn width(&self) -> usize {
        self.protocol.len() + self.service.len() + self.flag.len()
    }

    /// Writes the protocol, service and flag indicator blocks into `out`.
    /// Unseen symbols leave their block all zero.
    pub fn write_one_hot(&self, rec: &RawRecord, out: &mut [f64]) {
        assert_eq!(out.len(), self.width(), "one-hot buffer width");
        let (p, rest) = out.split_at_mut(self.protocol.len());
        let (s, f) = rest.split_at_mut(self.service.len());
        self.protocol.write_one_hot(&rec.protocol, p);
        self.service.write_one_hot(&rec.service, s);
        self.flag.write_one_hot(&rec.flag, f);
    }

    /// `(offset, len)` of each block within the one-hot vector.
    pub fn blocks(&self) -> [(usize, usize); 3] {
        let p = self.protocol.len();
        let s = self.service.len();
        [(0, p), (p, s), (p + s, self.flag.len())]
    }
}

pub fn fit_vocabulary(ds: &LabeledDataset) -> Result<CategoricalVocabulary> {
    if ds.is_empty() {
        return Err(Error::data("cannot fit vocabulary on an empty dataset"));
    }
    if ds.split != Split::Train {
        return Err(Error::data(
            "vocabulary must be fitted on the training split",
        ));
    }
    let mut vocab = CategoricalVocabulary {
        protocol: Vocab::default(),
        service: Vocab::default(),
        flag: Vocab::default(),
    };
    for r in &ds.records {
        vocab.protocol.observe(&r.protocol);
        vocab.service.observe(&r.service);
        vocab.flag.observe(&r.flag);
    }
    Ok(vocab)
}

pub fn one_hot(vocab: &CategoricalVocabulary, rec: &RawRecord) -> Vec<f64> {
    let mut out = vec![0.0; vocab.width()];
    vocab.write_one_hot(rec, &mut out);
    out
}
