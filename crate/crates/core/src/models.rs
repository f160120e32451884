//! The autoencoder classifier and the shallow MLP baseline.
//!
//! The AE classifier is built in three stages: each autoencoder tier is
//! pretrained unsupervised on the codes of the tiers before it, a softmax head
//! is trained on the final codes, then encoders and head are fine-tuned
//! together on cross-entropy. Decoders only exist during pretraining.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::AttackCategory;
use crate::error::{Error, Result};
use crate::neuralnet::{
    chunked_loss, chunked_sum, init_parameters, one_hot_targets, satlin_grad, scg_minimize,
    train_network, Activation, Batch, DenseLayer, LossKind, Network, Objective, ScgOutcome,
    StopReason, TrainConfig,
};

/// Classes in output order. U2R is excluded from training and evaluation.
pub const CLASSES: [AttackCategory; 4] = [
    AttackCategory::Normal,
    AttackCategory::DoS,
    AttackCategory::Probe,
    AttackCategory::R2L,
];
pub const NUM_CLASSES: usize = CLASSES.len();

pub fn class_index(cat: AttackCategory) -> Option<usize> {
    CLASSES.iter().position(|&c| c == cat)
}

/// Seed for the `stream`-th independently initialized component.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One autoencoder tier with tied weights: the decoder uses the transpose of
/// the encoder matrix plus its own bias, and a linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderTier {
    pub encoder: DenseLayer,
    pub decoder_bias: Array1<f64>,
}

impl AutoencoderTier {
    pub fn init(input_dim: usize, code_dim: usize, seed: u64) -> Self {
        let mut tier = AutoencoderTier {
            encoder: DenseLayer::zeros(input_dim, code_dim, Activation::SatLin),
            decoder_bias: Array1::zeros(input_dim),
        };
        let mut params = init_parameters(&[(input_dim, code_dim)], seed);
        params.extend(std::iter::repeat_n(0.0, input_dim));
        tier.set_params(&params).expect("sized by construction");
        tier
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.fan_in()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder.fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.encoder.num_params() + self.decoder_bias.len()
    }

    /// `[weights row-major, encoder bias, decoder bias]`
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(self.encoder.weights.iter());
        out.extend(self.encoder.bias.iter());
        out.extend(self.decoder_bias.iter());
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension {
                expected: self.num_params(),
                actual: params.len(),
            });
        }
        let nw = self.encoder.weights.len();
        let nb = self.encoder.bias.len();
        self.encoder
            .weights
            .iter_mut()
            .zip(&params[..nw])
            .for_each(|(d, v)| *d = *v);
        self.encoder
            .bias
            .iter_mut()
            .zip(&params[nw..nw + nb])
            .for_each(|(d, v)| *d = *v);
        self.decoder_bias
            .iter_mut()
            .zip(&params[nw + nb..])
            .for_each(|(d, v)| *d = *v);
        Ok(())
    }

    pub fn encode(&self, x: ArrayView2<f64>) -> Array2<f64> {
        self.encoder.apply(x)
    }

    pub fn reconstruct(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let h = self.encode(x);
        let mut out = h.dot(&self.encoder.weights.t());
        out += &self.decoder_bias;
        out
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension {
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::data("empty batch"));
        }
        Ok(())
    }

    /// Mean over samples and components of the squared reconstruction error.
    pub fn mse(&self, x: ArrayView2<f64>) -> Result<f64> {
        self.check_input(x)?;
        let norm = (x.nrows() * x.ncols()) as f64;
        Ok(chunked_loss(x.nrows(), |a, b| {
            let xs = x.slice(s![a..b, ..]);
            let r = self.reconstruct(xs);
            r.iter()
                .zip(xs.iter())
                .map(|(r, x)| (r - x) * (r - x))
                .sum::<f64>()
                / norm
        }))
    }

    /// MSE and its gradient in [`params`](Self::params) order. Gradients from
    /// the encoder and decoder paths accumulate into the shared matrix.
    pub fn mse_and_gradient(&self, x: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
        self.check_input(x)?;
        let n = self.input_dim();
        let m = self.code_dim();
        let norm = (x.nrows() * n) as f64;
        let w = &self.encoder.weights;
        Ok(chunked_sum(x.nrows(), self.num_params(), |a, b| {
            let xs = x.slice(s![a..b, ..]);
            let mut z = xs.dot(w);
            z += &self.encoder.bias;
            let h = z.mapv(crate::neuralnet::satlin);
            let mut recon = h.dot(&w.t());
            recon += &self.decoder_bias;
            let err = &recon - &xs;
            let loss = err.iter().map(|e| e * e).sum::<f64>() / norm;
            let e = err * (2.0 / norm);

            // Decoder path: recon = h W^T + c  =>  dW += e^T h.
            let mut dw = e.t().dot(&h);
            // Encoder path through the saturating activation.
            let mut d = e.dot(w);
            d.zip_mut_with(&z, |d, &z| *d *= satlin_grad(z));
            dw += &xs.t().dot(&d);

            let mut g = Vec::with_capacity(n * m + m + n);
            g.extend(dw.iter());
            g.extend(d.sum_axis(Axis(0)).iter());
            g.extend(e.sum_axis(Axis(0)).iter());
            (loss, g)
        }))
    }
}

struct TierObjective<'a> {
    tier: AutoencoderTier,
    inputs: ArrayView2<'a, f64>,
}

impl Objective for TierObjective<'_> {
    fn dim(&self) -> usize {
        self.tier.num_params()
    }

    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        self.tier.set_params(theta)?;
        self.tier.mse(self.inputs)
    }

    fn value_and_gradient(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.tier.set_params(theta)?;
        self.tier.mse_and_gradient(self.inputs)
    }
}

/// Summary of one optimizer run, kept in the model artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: String,
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub stop: StopReason,
    pub trace: Vec<f64>,
}

impl StageLog {
    pub fn from_outcome(stage: impl Into<String>, outcome: &ScgOutcome) -> Self {
        StageLog {
            stage: stage.into(),
            iterations: outcome.iterations,
            initial_loss: outcome.trace[0],
            final_loss: outcome.final_loss(),
            stop: outcome.stop,
            trace: outcome.trace.clone(),
        }
    }
}

fn check_unit_interval(x: ArrayView2<f64>) -> Result<()> {
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::data("autoencoder inputs must lie in [0, 1]"));
    }
    Ok(())
}

/// Trains one tier to reconstruct `inputs` through a `code_dim`-wide code.
pub fn pretrain_tier(
    inputs: ArrayView2<f64>,
    code_dim: usize,
    cfg: &TrainConfig,
) -> Result<(AutoencoderTier, ScgOutcome)> {
    if inputs.nrows() == 0 {
        return Err(Error::data("no pretraining inputs"));
    }
    if code_dim == 0 {
        return Err(Error::data("code size must be positive"));
    }
    check_unit_interval(inputs)?;
    let tier = AutoencoderTier::init(inputs.ncols(), code_dim, cfg.seed);
    let theta0 = tier.params();
    let mut objective = TierObjective { tier, inputs };
    let outcome = scg_minimize(&mut objective, &theta0, cfg)?;
    let mut tier = objective.tier;
    tier.set_params(&outcome.params)?;
    Ok((tier, outcome))
}

/// Trains tiers one at a time, each on the codes of the frozen tiers before it.
/// Tier `t` is seeded with `derive_seed(cfg.seed, t)`.
pub fn greedy_pretrain(
    inputs: ArrayView2<f64>,
    code_sizes: &[usize],
    cfg: &TrainConfig,
) -> Result<Vec<(AutoencoderTier, ScgOutcome)>> {
    if code_sizes.is_empty() {
        return Err(Error::data("at least one code size is required"));
    }
    let mut tiers = Vec::with_capacity(code_sizes.len());
    let mut current: Option<Array2<f64>> = None;
    for (t, &m) in code_sizes.iter().enumerate() {
        let tier_cfg = TrainConfig {
            seed: derive_seed(cfg.seed, t as u64),
            ..cfg.clone()
        };
        let view = current.as_ref().map_or(inputs, |c| c.view());
        let (tier, outcome) = pretrain_tier(view, m, &tier_cfg)?;
        log::info!(
            "pretrained tier {} ({}->{}): mse {:.6} after {} iterations",
            t + 1,
            tier.input_dim(),
            m,
            outcome.final_loss(),
            outcome.iterations
        );
        if t + 1 < code_sizes.len() {
            current = Some(encode_rows(&tier.encoder, view));
        }
        tiers.push((tier, outcome));
    }
    Ok(tiers)
}

fn encode_rows(layer: &DenseLayer, x: ArrayView2<f64>) -> Array2<f64> {
    let net = Network::new(vec![layer.clone()], LossKind::Mse).expect("single satlin layer");
    net.output(x).expect("dimensions checked by caller")
}

/// Passes inputs through a stack of encoder layers.
pub fn encode_through(encoders: &[DenseLayer], x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if encoders.is_empty() {
        return Ok(x.to_owned());
    }
    let net = Network::new(encoders.to_vec(), LossKind::Mse)?;
    net.output(x)
}

fn check_labels(labels: &[usize], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Dimension {
            expected: rows,
            actual: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&c| c >= NUM_CLASSES) {
        return Err(Error::Target(format!("class index {bad} out of range")));
    }
    if rows == 0 {
        return Err(Error::data("no labeled samples"));
    }
    Ok(())
}

fn missing_class_warnings(labels: &[usize]) -> Vec<String> {
    let mut seen = [false; NUM_CLASSES];
    for &c in labels {
        seen[c] = true;
    }
    CLASSES
        .iter()
        .zip(seen)
        .filter(|(_, s)| !s)
        .map(|(c, _)| format!("class {c} absent from training labels"))
        .collect()
}

#[derive(Debug, Clone)]
pub struct HeadTraining {
    pub head: DenseLayer,
    pub outcome: ScgOutcome,
    pub warnings: Vec<String>,
}

/// Trains a softmax layer on codes from frozen encoders.
pub fn train_head(
    codes: ArrayView2<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<HeadTraining> {
    check_labels(labels, codes.nrows())?;
    let warnings = missing_class_warnings(labels);
    for w in &warnings {
        log::warn!("{w}");
    }
    let mut net = Network::init(
        &[codes.ncols(), NUM_CLASSES],
        &[Activation::Softmax],
        LossKind::CrossEntropy,
        cfg.seed,
    )?;
    let batch = Batch::new(codes.to_owned(), one_hot_targets(labels, NUM_CLASSES))?;
    let outcome = train_network(&mut net, &batch, cfg)?;
    Ok(HeadTraining {
        head: net.layers()[0].clone(),
        outcome,
        warnings,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub probabilities: [f64; NUM_CLASSES],
}

impl Prediction {
    pub fn category(&self) -> AttackCategory {
        CLASSES[self.class]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub trait Classifier {
    fn network(&self) -> &Network;

    fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let out = self.network().forward(x)?;
        Ok(to_prediction(out.last().expect("non-empty")))
    }

    fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Vec<Prediction>> {
        let out = self.network().output(x)?;
        Ok(out
            .rows()
            .into_iter()
            .map(|r| to_prediction(r.as_slice().expect("contiguous")))
            .collect())
    }
}

fn to_prediction(probs: &[f64]) -> Prediction {
    let mut probabilities = [0.0; NUM_CLASSES];
    probabilities.copy_from_slice(probs);
    Prediction {
        class: argmax(probs),
        probabilities,
    }
}

pub fn predict<C: Classifier + ?Sized>(clf: &C, x: &[f64]) -> Result<Prediction> {
    clf.predict(x)
}

fn classifier_network(net: Network) -> Result<Network> {
    if net.output_dim() != NUM_CLASSES || net.loss_kind() != LossKind::CrossEntropy {
        return Err(Error::data(format!(
            "classifier must end in a {NUM_CLASSES}-way softmax"
        )));
    }
    Ok(net)
}

/// Encoder stack plus softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct AeClassifier {
    network: Network,
}

impl AeClassifier {
    pub fn new(encoders: Vec<DenseLayer>, head: DenseLayer) -> Result<Self> {
        if encoders.iter().any(|e| e.activation != Activation::SatLin) {
            return Err(Error::data(
                "encoder layers use the saturating linear activation",
            ));
        }
        let mut layers = encoders;
        layers.push(head);
        Self::from_network(Network::new(layers, LossKind::CrossEntropy)?)
    }

    pub fn from_network(network: Network) -> Result<Self> {
        Ok(AeClassifier {
            network: classifier_network(network)?,
        })
    }

    pub fn code_sizes(&self) -> Vec<usize> {
        let dims = self.network.dims();
        dims[1..dims.len() - 1].to_vec()
    }

    pub fn into_network(self) -> Network {
        self.network
    }
}

impl Classifier for AeClassifier {
    fn network(&self) -> &Network {
        &self.network
    }
}

/// One hidden saturating-linear layer plus softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpClassifier {
    network: Network,
}

impl MlpClassifier {
    pub fn from_network(network: Network) -> Result<Self> {
        if network.layers().len() != 2 {
            return Err(Error::data("MLP has exactly one hidden layer"));
        }
        Ok(MlpClassifier {
            network: classifier_network(network)?,
        })
    }

    pub fn into_network(self) -> Network {
        self.network
    }
}

impl Classifier for MlpClassifier {
    fn network(&self) -> &Network {
        &self.network
    }
}

fn supervised_batch(inputs: ArrayView2<f64>, labels: &[usize]) -> Result<Batch> {
    check_labels(labels, inputs.nrows())?;
    Batch::new(inputs.to_owned(), one_hot_targets(labels, NUM_CLASSES))
}

/// Jointly optimizes all encoder and head parameters on cross-entropy.
pub fn fine_tune(
    clf: AeClassifier,
    inputs: ArrayView2<f64>,
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<(AeClassifier, ScgOutcome)> {
    let batch = supervised_batch(inputs, labels)?;
    let mut net = clf.into_network();
    let outcome = train_network(&mut net, &batch, cfg)?;
    Ok((AeClassifier { network: net }, outcome))
}

pub fn train_mlp(
    inputs: ArrayView2<f64>,
    labels: &[usize],
    hidden: usize,
    cfg: &TrainConfig,
) -> Result<(MlpClassifier, ScgOutcome)> {
    let batch = supervised_batch(inputs, labels)?;
    for w in missing_class_warnings(labels) {
        log::warn!("{w}");
    }
    let mut net = Network::init(
        &[inputs.ncols(), hidden, NUM_CLASSES],
        &[Activation::SatLin, Activation::Softmax],
        LossKind::CrossEntropy,
        cfg.seed,
    )?;
    let outcome = train_network(&mut net, &batch, cfg)?;
    Ok((MlpClassifier { network: net }, outcome))
}

/// Iteration budgets for the three AE training stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeSchedule {
    pub pretrain: TrainConfig,
    pub head: TrainConfig,
    pub fine_tune: TrainConfig,
}

impl AeSchedule {
    pub fn new(pretrain_iters: usize, head_iters: usize, finetune_iters: usize, seed: u64) -> Self {
        AeSchedule {
            pretrain: TrainConfig::new(pretrain_iters, seed),
            head: TrainConfig::new(head_iters, derive_seed(seed, 100)),
            fine_tune: TrainConfig::new(finetune_iters, seed),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AeTraining {
    /// Pretrained encoders with the trained head, before fine-tuning.
    pub head_only: AeClassifier,
    pub classifier: AeClassifier,
    pub stages: Vec<StageLog>,
    pub warnings: Vec<String>,
}

/// Greedy pretraining, head training, then fine-tuning.
pub fn train_ae_classifier(
    inputs: ArrayView2<f64>,
    labels: &[usize],
    code_sizes: &[usize],
    schedule: &AeSchedule,
) -> Result<AeTraining> {
    check_labels(labels, inputs.nrows())?;
    let tiers = greedy_pretrain(inputs, code_sizes, &schedule.pretrain)?;
    let mut stages: Vec<StageLog> = tiers
        .iter()
        .enumerate()
        .map(|(t, (_, o))| StageLog::from_outcome(format!("pretrain_tier_{}", t + 1), o))
        .collect();
    let encoders: Vec<DenseLayer> = tiers.into_iter().map(|(t, _)| t.encoder).collect();

    let codes = encode_through(&encoders, inputs)?;
    let head = train_head(codes.view(), labels, &schedule.head)?;
    log::info!(
        "head: cross-entropy {:.6} after {} iterations",
        head.outcome.final_loss(),
        head.outcome.iterations
    );
    stages.push(StageLog::from_outcome("head", &head.outcome));
    let head_only = AeClassifier::new(encoders, head.head)?;

    let (classifier, outcome) = fine_tune(head_only.clone(), inputs, labels, &schedule.fine_tune)?;
    log::info!(
        "fine-tune: cross-entropy {:.6} after {} iterations",
        outcome.final_loss(),
        outcome.iterations
    );
    stages.push(StageLog::from_outcome("fine_tune", &outcome));
    Ok(AeTraining {
        head_only,
        classifier,
        stages,
        warnings: head.warnings,
    })
}
