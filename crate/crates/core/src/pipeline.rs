//! End-to-end stages: preprocessing, training and scoring.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, PipelineConfig};
use crate::dataset::{
    class_histogram, drop_category, filter_novel_test_attacks, numeric_feature_name, parse_split,
    AttackCategory, ClassHistogram, LabeledDataset, Split,
};
use crate::error::{Result, StageContext};
use crate::eval::{confusion, EvalReport};
use crate::features::FeatureSchema;
use crate::models::{
    argmax, class_index, train_ae_classifier, train_mlp, AeSchedule, StageLog, NUM_CLASSES,
};
use crate::neuralnet::{Network, TrainConfig};
use crate::preprocess::{filter_outliers, fit_outlier_model, fit_vocabulary};

/// Encoded model inputs with class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSet {
    pub inputs: Array2<f64>,
    pub labels: Vec<usize>,
    pub split: Split,
}

impl EncodedSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Encodes every record of a dataset whose category is one of the model
/// classes. Records of other categories are skipped.
pub fn encode_dataset(schema: &FeatureSchema, ds: &LabeledDataset) -> EncodedSet {
    let rows: Vec<(&crate::dataset::RawRecord, usize)> = ds
        .iter()
        .filter_map(|(r, c)| c.and_then(class_index).map(|i| (r, i)))
        .collect();
    let mut inputs = Array2::zeros((rows.len(), schema.input_dim));
    for ((rec, _), mut row) in rows.iter().zip(inputs.rows_mut()) {
        schema.encode_into(rec, row.as_slice_mut().expect("contiguous row"));
    }
    EncodedSet {
        inputs,
        labels: rows.into_iter().map(|(_, i)| i).collect(),
        split: ds.split,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedFeature {
    pub index: usize,
    pub name: String,
    pub zero_ratio: f64,
}

/// Record counts at each preprocessing step and the resulting dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrepareSummary {
    pub train_parsed: ClassHistogram,
    pub test_parsed: ClassHistogram,
    pub test_known: ClassHistogram,
    pub train_after_outliers: ClassHistogram,
    pub test_after_outliers: ClassHistogram,
    pub train_final: usize,
    pub test_final: usize,
    pub vocabulary_sizes: [usize; 3],
    pub one_hot_width: usize,
    pub encoded_dim: usize,
    pub input_dim: usize,
    pub kept_numeric: Vec<usize>,
    pub discarded: Vec<DiscardedFeature>,
}

impl PrepareSummary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let row = |name: &str, h: &ClassHistogram| {
            let mut s = format!("{name:<24}{:>8}", h.total());
            for c in AttackCategory::ALL {
                s.push_str(&format!("{:>8}", h.get(c)));
            }
            if h.unknown > 0 {
                s.push_str(&format!("{:>8}", h.unknown));
            }
            s.push('\n');
            s
        };
        out.push_str(&format!("{:<24}{:>8}", "split", "Total"));
        for c in AttackCategory::ALL {
            out.push_str(&format!("{:>8}", c.name()));
        }
        out.push_str(&format!("{:>8}\n", "novel"));
        out.push_str(&row("train (parsed)", &self.train_parsed));
        out.push_str(&row("test (parsed)", &self.test_parsed));
        out.push_str(&row("test (known attacks)", &self.test_known));
        out.push_str(&row("train (no outliers)", &self.train_after_outliers));
        out.push_str(&row("test (no outliers)", &self.test_after_outliers));
        out.push_str(&format!(
            "final (U2R dropped): train {}, test {}\n",
            self.train_final, self.test_final
        ));
        out.push_str(&format!(
            "one-hot width {} (protocol {}, service {}, flag {}), encoded dims {}, selected input dims {}\n",
            self.one_hot_width,
            self.vocabulary_sizes[0],
            self.vocabulary_sizes[1],
            self.vocabulary_sizes[2],
            self.encoded_dim,
            self.input_dim
        ));
        out.push_str(&format!(
            "discarded {} of 38 numeric features:\n",
            self.discarded.len()
        ));
        for d in &self.discarded {
            out.push_str(&format!(
                "  {:>2} {:<28} {:6.2}% zeros\n",
                d.index,
                d.name,
                100.0 * d.zero_ratio
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Prepared {
    pub schema: FeatureSchema,
    pub train: EncodedSet,
    pub test: EncodedSet,
    pub summary: PrepareSummary,
}

/// Runs novel-attack filtering, outlier rejection, U2R removal, schema
/// fitting and encoding on already-parsed splits.
pub fn prepare_datasets(
    train: LabeledDataset,
    test: LabeledDataset,
    cfg: &PipelineConfig,
) -> Result<Prepared> {
    cfg.validate().stage("config")?;
    let train_parsed = class_histogram(&train);
    let test_parsed = class_histogram(&test);
    let test = filter_novel_test_attacks(test).stage("novel-attack filter")?;
    let test_known = class_histogram(&test);

    // The vocabulary comes from the full training split so rare symbols
    // dropped by outlier rejection still get an indicator column.
    let vocab = fit_vocabulary(&train).stage("one-hot encoding")?;

    let outlier = fit_outlier_model(&train, cfg.mad_scale, cfg.k).stage("outlier fit")?;
    let train = filter_outliers(&outlier, train);
    let test = filter_outliers(&outlier, test);
    let train_after_outliers = class_histogram(&train);
    let test_after_outliers = class_histogram(&test);

    let train = drop_category(train, AttackCategory::U2R);
    let test = drop_category(test, AttackCategory::U2R);

    let schema = FeatureSchema::fit(&train, outlier, vocab, cfg.zero_ratio_threshold)
        .stage("feature selection")?;
    let train_set = encode_dataset(&schema, &train);
    let test_set = encode_dataset(&schema, &test);

    let discarded = schema
        .discarded_numeric()
        .into_iter()
        .map(|i| DiscardedFeature {
            index: i,
            name: numeric_feature_name(i).to_string(),
            zero_ratio: schema.zero_ratios[i],
        })
        .collect();
    let summary = PrepareSummary {
        train_parsed,
        test_parsed,
        test_known,
        train_after_outliers,
        test_after_outliers,
        train_final: train_set.len(),
        test_final: test_set.len(),
        vocabulary_sizes: [
            schema.vocab.protocol.len(),
            schema.vocab.service.len(),
            schema.vocab.flag.len(),
        ],
        one_hot_width: schema.vocab.width(),
        encoded_dim: schema.encoded_dim(),
        input_dim: schema.input_dim,
        kept_numeric: schema.kept_numeric.clone(),
        discarded,
    };
    Ok(Prepared {
        schema,
        train: train_set,
        test: test_set,
        summary,
    })
}

/// Parses both input files and prepares them.
pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let train = parse_split(&cfg.train_path, Split::Train).stage("parse train")?;
    let test = parse_split(&cfg.test_path, Split::Test).stage("parse test")?;
    prepare_datasets(train, test, cfg)
}

/// A trained classifier network with its training history.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub tag: String,
    pub network: Network,
    /// AE only: encoders plus head before fine-tuning.
    pub head_only: Option<Network>,
    pub stages: Vec<StageLog>,
    pub warnings: Vec<String>,
}

pub fn train(train: &EncodedSet, cfg: &PipelineConfig) -> Result<TrainedModel> {
    cfg.validate().stage("config")?;
    let x = train.inputs.view();
    match cfg.model {
        ModelKind::Ae => {
            let schedule = AeSchedule::new(
                cfg.pretrain_iters,
                cfg.head_iters,
                cfg.finetune_iters,
                cfg.seed,
            );
            let t =
                train_ae_classifier(x, &train.labels, &cfg.code_sizes, &schedule).stage("train")?;
            Ok(TrainedModel {
                kind: ModelKind::Ae,
                tag: cfg.model_tag(),
                network: t.classifier.into_network(),
                head_only: Some(t.head_only.into_network()),
                stages: t.stages,
                warnings: t.warnings,
            })
        }
        ModelKind::Mlp => {
            let (mlp, outcome) = train_mlp(
                x,
                &train.labels,
                cfg.mlp_hidden,
                &TrainConfig::new(cfg.finetune_iters, cfg.seed),
            )
            .stage("train")?;
            log::info!(
                "mlp: cross-entropy {:.6} after {} iterations",
                outcome.final_loss(),
                outcome.iterations
            );
            Ok(TrainedModel {
                kind: ModelKind::Mlp,
                tag: cfg.model_tag(),
                network: mlp.into_network(),
                head_only: None,
                stages: vec![StageLog::from_outcome("train", &outcome)],
                warnings: vec![],
            })
        }
    }
}

/// Predicted class index per row.
pub fn predict_classes(net: &Network, x: ArrayView2<f64>) -> Result<Vec<usize>> {
    let out = net.output(x)?;
    debug_assert_eq!(out.ncols(), NUM_CLASSES);
    Ok(out
        .rows()
        .into_iter()
        .map(|r| argmax(r.as_slice().expect("contiguous")))
        .collect())
}

pub fn evaluate(
    net: &Network,
    set: &EncodedSet,
    tag: &str,
    config_hash: &str,
) -> Result<EvalReport> {
    let pred = predict_classes(net, set.inputs.view()).stage("eval")?;
    let m = confusion(&set.labels, &pred).stage("eval")?;
    EvalReport::new(tag, config_hash, m).stage("eval")
}
