//! Trainable softmax networks and exact Bayes predictors.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnKind, Dataset, Schema};
use crate::error::{AsvError, Result};
use crate::rng::{derive_seed, stream, STREAM_TRAINING};
use crate::scenarios::{GenerativeProcess, ProcessSpec};
use crate::stats::RunningMoments;
use crate::value::{argmax, Predictor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum Encoding {
    OneHot { cardinality: usize },
    Standardize { mean: f64, sd: f64 },
}

/// One-hot codes for discrete features and train-split standardisation for
/// continuous ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    columns: Vec<Encoding>,
}

impl Encoder {
    pub fn fit(data: &Dataset) -> Self {
        let columns = data
            .schema()
            .features()
            .enumerate()
            .map(|(j, c)| match c.kind {
                ColumnKind::Discrete { cardinality } => Encoding::OneHot { cardinality },
                ColumnKind::Continuous => {
                    let mut m = RunningMoments::new();
                    for v in data.column(j) {
                        m.push(v);
                    }
                    let sd = m.variance().sqrt();
                    Encoding::Standardize {
                        mean: m.mean(),
                        sd: if sd > 1e-12 { sd } else { 1.0 },
                    }
                }
            })
            .collect();
        Self { columns }
    }

    pub fn n_inputs(&self) -> usize {
        self.columns.len()
    }

    pub fn width(&self) -> usize {
        self.columns
            .iter()
            .map(|c| match c {
                Encoding::OneHot { cardinality } => *cardinality,
                Encoding::Standardize { .. } => 1,
            })
            .sum()
    }

    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) {
        let mut k = 0;
        for (c, &v) in self.columns.iter().zip(x) {
            match c {
                Encoding::OneHot { cardinality } => {
                    for slot in &mut out[k..k + cardinality] {
                        *slot = 0.0;
                    }
                    let code = v.round();
                    if code >= 0.0 && (code as usize) < *cardinality {
                        out[k + code as usize] = 1.0;
                    }
                    k += cardinality;
                }
                Encoding::Standardize { mean, sd } => {
                    out[k] = (v - mean) / sd;
                    k += 1;
                }
            }
        }
    }

    pub fn encode(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.width()];
        self.encode_into(x, &mut out);
        out
    }
}

/// Fully connected layers with ReLU hidden units and a softmax output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

impl Network {
    pub fn n_params(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn init<R: Rng + ?Sized>(sizes: Vec<usize>, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(Self::n_params(&sizes));
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = if l < last {
                (6.0 / fan_in as f64).sqrt()
            } else {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            };
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-a..a)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes, params }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Pre-activations of every layer for input `x`.
    fn forward_with(sizes: &[usize], params: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(sizes.len() - 1);
        let mut offset = 0;
        let last = sizes.len() - 2;
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weights = &params[offset..offset + fan_in * fan_out];
            let bias = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input: &[f64] = if l == 0 { x } else { &layers[l - 1] };
            let mut z = bias.to_vec();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                *zo += row.iter().zip(input).map(|(w, a)| w * a).sum::<f64>();
            }
            if l < last {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            } else {
                softmax_in_place(&mut z);
            }
            layers.push(z);
        }
        layers
    }

    pub fn predict_encoded(&self, x: &[f64]) -> Vec<f64> {
        Self::forward_with(&self.sizes, &self.params, x).pop().expect("at least one layer")
    }

    /// Mean cross-entropy over `rows` of the encoded inputs, with its
    /// gradient, plus `½·l2·‖W‖²`.
    pub fn loss_and_gradient(
        sizes: &[usize],
        params: &[f64],
        inputs: &[Vec<f64>],
        labels: &[usize],
        rows: &[usize],
        l2: f64,
    ) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        let n_layers = sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in sizes.windows(2) {
            offsets.push(off);
            off += w[0] * w[1] + w[1];
        }
        for &r in rows {
            let x = &inputs[r];
            let acts = Self::forward_with(sizes, params, x);
            let probs = &acts[n_layers - 1];
            loss -= probs[labels[r]].max(1e-300).ln();
            let mut delta = probs.clone();
            delta[labels[r]] -= 1.0;
            for l in (0..n_layers).rev() {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let input: &[f64] = if l == 0 { x } else { &acts[l - 1] };
                let o = offsets[l];
                for (out, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let g = &mut grad[o + out * fan_in..o + (out + 1) * fan_in];
                    for (gi, &a) in g.iter_mut().zip(input) {
                        *gi += d * a;
                    }
                    grad[o + fan_in * fan_out + out] += d;
                }
                if l > 0 {
                    let weights = &params[o..o + fan_in * fan_out];
                    let mut prev = vec![0.0; fan_in];
                    for (out, &d) in delta.iter().enumerate() {
                        let row = &weights[out * fan_in..(out + 1) * fan_in];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * d;
                        }
                    }
                    for (p, &a) in prev.iter_mut().zip(&acts[l - 1]) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                    delta = prev;
                }
            }
        }
        let scale = 1.0 / rows.len() as f64;
        loss *= scale;
        for g in &mut grad {
            *g *= scale;
        }
        if l2 > 0.0 {
            for (l, w) in sizes.windows(2).enumerate() {
                let o = offsets[l];
                for k in o..o + w[0] * w[1] {
                    loss += 0.5 * l2 * params[k] * params[k];
                    grad[k] += l2 * params[k];
                }
            }
        }
        (loss, grad)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    Logistic,
    Mlp,
}

fn default_hidden() -> Vec<usize> {
    vec![10, 10]
}
fn default_learning_rate() -> f64 {
    0.05
}
fn default_momentum() -> f64 {
    0.9
}
fn default_batch_size() -> usize {
    64
}
fn default_max_epochs() -> usize {
    500
}
fn default_patience() -> usize {
    20
}
fn default_validation_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: NetworkKind,
    /// Hidden layer widths; ignored for logistic models.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    /// Minibatch size; 0 means full-batch descent.
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_validation_fraction")]
    pub validation_fraction: f64,
    #[serde(default)]
    pub l2: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn logistic(seed: u64) -> Self {
        Self::new(NetworkKind::Logistic, seed)
    }

    pub fn mlp(seed: u64) -> Self {
        Self::new(NetworkKind::Mlp, seed)
    }

    /// Default hyperparameters for `kind`.
    pub fn new(kind: NetworkKind, seed: u64) -> Self {
        Self {
            kind,
            hidden: default_hidden(),
            learning_rate: default_learning_rate(),
            momentum: default_momentum(),
            batch_size: default_batch_size(),
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            validation_fraction: default_validation_fraction(),
            l2: 0.0,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || !(0.0..1.0).contains(&self.momentum) {
            return Err(AsvError::InvalidArgument(
                "learning rate must be positive and momentum in [0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(AsvError::InvalidArgument("validation fraction must be in [0, 1)".into()));
        }
        if self.max_epochs == 0 {
            return Err(AsvError::InvalidArgument("max_epochs must be at least 1".into()));
        }
        if self.kind == NetworkKind::Mlp && (self.hidden.is_empty() || self.hidden.contains(&0)) {
            return Err(AsvError::InvalidArgument("hidden layers must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub validation_loss: Vec<f64>,
    pub train_accuracy: f64,
    pub validation_accuracy: Option<f64>,
}

/// A trained network with its input encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub kind: NetworkKind,
    pub schema_hash: String,
    pub n_features: usize,
    pub n_classes: usize,
    pub encoder: Encoder,
    pub network: Network,
    pub config: TrainConfig,
}

impl Predictor for NetworkModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.network.predict_encoded(&self.encoder.encode(x))
    }
}

pub fn train_logistic(data: &Dataset, config: &TrainConfig) -> Result<(NetworkModel, TrainReport)> {
    if config.kind != NetworkKind::Logistic {
        return Err(AsvError::InvalidArgument("train_logistic needs a logistic config".into()));
    }
    train(data, config)
}

pub fn train_mlp(data: &Dataset, config: &TrainConfig) -> Result<(NetworkModel, TrainReport)> {
    if config.kind != NetworkKind::Mlp {
        return Err(AsvError::InvalidArgument("train_mlp needs an mlp config".into()));
    }
    train(data, config)
}

/// Minibatch gradient descent with momentum on cross-entropy, stopping when
/// the validation loss has not improved for `patience` epochs and keeping
/// the best parameters seen.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(NetworkModel, TrainReport)> {
    config.validate()?;
    if data.is_empty() {
        return Err(AsvError::DegenerateData("training set is empty".into()));
    }
    let (fit, val) = if config.validation_fraction > 0.0 {
        let (f, v) = data.split(1.0 - config.validation_fraction, derive_seed(config.seed, 1))?;
        (f, Some(v).filter(|v| !v.is_empty()))
    } else {
        (data.clone(), None)
    };
    let present = fit.class_counts().iter().filter(|&&c| c > 0).count();
    if present < 2 {
        return Err(AsvError::DegenerateData(
            "training labels contain a single class".into(),
        ));
    }
    let encoder = Encoder::fit(&fit);
    let n_classes = data.schema().n_classes();
    let mut sizes = vec![encoder.width()];
    if config.kind == NetworkKind::Mlp {
        sizes.extend(&config.hidden);
    }
    sizes.push(n_classes);
    let mut rng = stream(config.seed, STREAM_TRAINING);
    let mut net = Network::init(sizes.clone(), &mut rng);

    let encode_all = |d: &Dataset| -> Vec<Vec<f64>> { d.rows().map(|r| encoder.encode(r)).collect() };
    let fit_x = encode_all(&fit);
    let all_fit: Vec<usize> = (0..fit.len()).collect();
    let val_x = val.as_ref().map(encode_all);
    let val_rows: Vec<usize> = val.as_ref().map(|v| (0..v.len()).collect()).unwrap_or_default();
    let val_loss_of = |params: &[f64]| -> Option<f64> {
        let (vx, vd) = (val_x.as_ref()?, val.as_ref()?);
        Some(Network::loss_and_gradient(&sizes, params, vx, vd.labels(), &val_rows, 0.0).0)
    };

    let batch = if config.batch_size == 0 || config.batch_size >= fit.len() {
        fit.len()
    } else {
        config.batch_size
    };
    let mut velocity = vec![0.0; net.params.len()];
    let mut order = all_fit.clone();
    let mut report = TrainReport {
        epochs_run: 0,
        best_epoch: 0,
        train_loss: Vec::new(),
        validation_loss: Vec::new(),
        train_accuracy: 0.0,
        validation_accuracy: None,
    };
    let monitor = |params: &[f64]| {
        val_loss_of(params)
            .unwrap_or_else(|| Network::loss_and_gradient(&sizes, params, &fit_x, fit.labels(), &all_fit, 0.0).0)
    };
    let mut best_loss = monitor(&net.params);
    let mut best_params = net.params.clone();
    for epoch in 1..=config.max_epochs {
        if batch < fit.len() {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (_, grad) = Network::loss_and_gradient(&sizes, &net.params, &fit_x, fit.labels(), chunk, config.l2);
            for ((p, v), g) in net.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = config.momentum * *v - config.learning_rate * g;
                *p += *v;
            }
        }
        let train_loss = Network::loss_and_gradient(&sizes, &net.params, &fit_x, fit.labels(), &all_fit, 0.0).0;
        report.train_loss.push(train_loss);
        let current = match val_loss_of(&net.params) {
            Some(v) => {
                report.validation_loss.push(v);
                v
            }
            None => train_loss,
        };
        report.epochs_run = epoch;
        if !current.is_finite() {
            return Err(AsvError::DegenerateData("training diverged".into()));
        }
        if current < best_loss - 1e-9 {
            best_loss = current;
            best_params.copy_from_slice(&net.params);
            report.best_epoch = epoch;
        } else if epoch - report.best_epoch >= config.patience {
            break;
        }
    }
    net.params = best_params;
    let model = NetworkModel {
        kind: config.kind,
        schema_hash: data.schema().content_hash(),
        n_features: data.n_features(),
        n_classes,
        encoder,
        network: net,
        config: config.clone(),
    };
    report.train_accuracy = evaluate(&model, &fit)?.max_class_accuracy;
    report.validation_accuracy = match &val {
        Some(v) => Some(evaluate(&model, v)?.max_class_accuracy),
        None => None,
    };
    Ok((model, report))
}

/// Accuracy of a predictor on labelled data, in both senses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub rows: usize,
    /// Fraction of rows whose most probable class is the label.
    pub max_class_accuracy: f64,
    /// Mean probability assigned to the label.
    pub sampled_label_accuracy: f64,
    pub log_loss: f64,
}

pub fn evaluate(pred: &dyn Predictor, data: &Dataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(AsvError::InvalidArgument("cannot evaluate on an empty dataset".into()));
    }
    if data.n_features() != pred.n_features() {
        return Err(AsvError::DimensionMismatch {
            expected: pred.n_features(),
            found: data.n_features(),
        });
    }
    let mut hits = 0usize;
    let mut sampled = RunningMoments::new();
    let mut loss = RunningMoments::new();
    for (r, x) in data.rows().enumerate() {
        let p = pred.predict_proba(x);
        let y = data.label(r);
        hits += usize::from(argmax(&p) == y);
        sampled.push(p[y]);
        loss.push(-p[y].max(1e-300).ln());
    }
    Ok(Metrics {
        rows: data.len(),
        max_class_accuracy: hits as f64 / data.len() as f64,
        sampled_label_accuracy: sampled.mean(),
        log_loss: loss.mean(),
    })
}

/// The exact label probability of a generative process.
#[derive(Debug, Clone)]
pub struct BayesPredictor {
    process: Arc<dyn GenerativeProcess>,
}

impl BayesPredictor {
    pub fn new(process: Arc<dyn GenerativeProcess>) -> Self {
        Self { process }
    }

    pub fn process(&self) -> &Arc<dyn GenerativeProcess> {
        &self.process
    }
}

pub fn bayes_predict(process: &dyn GenerativeProcess, x: &[f64]) -> Result<Vec<f64>> {
    process.label_proba(x)
}

impl Predictor for BayesPredictor {
    fn n_features(&self) -> usize {
        self.process.n_features()
    }

    fn n_classes(&self) -> usize {
        self.process.schema().n_classes()
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        self.process
            .label_proba(x)
            .unwrap_or_else(|e| panic!("point does not match the process schema: {e}"))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
enum ModelFile {
    Network(NetworkModel),
    Bayes { process: ProcessSpec, schema_hash: String },
}

/// Any predictor that can be saved to and loaded from JSON.
#[derive(Debug, Clone)]
pub enum Model {
    Network(NetworkModel),
    Bayes(BayesPredictor),
}

impl Model {
    pub fn schema_hash(&self) -> String {
        match self {
            Model::Network(m) => m.schema_hash.clone(),
            Model::Bayes(b) => b.process.schema().content_hash(),
        }
    }

    /// Fails unless the model was built for `schema`.
    pub fn check_schema(&self, schema: &Schema) -> Result<()> {
        if self.schema_hash() != schema.content_hash() {
            return Err(AsvError::Schema("model was trained on a different schema".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = match self {
            Model::Network(m) => ModelFile::Network(m.clone()),
            Model::Bayes(b) => ModelFile::Bayes {
                process: b.process.spec(),
                schema_hash: self.schema_hash(),
            },
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        match serde_json::from_str(s)? {
            ModelFile::Network(m) => Ok(Model::Network(m)),
            ModelFile::Bayes { process, schema_hash } => {
                let p = BayesPredictor::new(process.build()?);
                if p.process.schema().content_hash() != schema_hash {
                    return Err(AsvError::Schema("Bayes model schema hash does not match its process".into()));
                }
                Ok(Model::Bayes(p))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

impl Predictor for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Network(m) => m.n_features(),
            Model::Bayes(b) => b.n_features(),
        }
    }

    fn n_classes(&self) -> usize {
        match self {
            Model::Network(m) => m.n_classes(),
            Model::Bayes(b) => b.n_classes(),
        }
    }

    fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        match self {
            Model::Network(m) => m.predict_proba(x),
            Model::Bayes(b) => b.predict_proba(x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Column;
    use crate::scenarios::{generate, Xor};

    fn toy(n: usize, seed: u64) -> Dataset {
        let schema = Arc::new(
            Schema::with_label(
                vec![Column::continuous("a"), Column::discrete("b", 3), Column::continuous("c")],
                "y",
                3,
            )
            .unwrap(),
        );
        let mut rng = stream(seed, 0);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.random_range(-2.0..2.0);
            let b = rng.random_range(0..3) as f64;
            let c: f64 = rng.random_range(-1.0..1.0);
            labels.push(if a + 0.5 * c > 0.5 { 2 } else if b == 1.0 { 1 } else { 0 });
            rows.push(vec![a, b, c]);
        }
        Dataset::new(schema, rows, labels).unwrap()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = toy(12, 1);
        let enc = Encoder::fit(&data);
        let xs: Vec<Vec<f64>> = data.rows().map(|r| enc.encode(r)).collect();
        let rows: Vec<usize> = (0..data.len()).collect();
        for sizes in [vec![enc.width(), 3], vec![enc.width(), 4, 5, 3]] {
            let net = Network::init(sizes.clone(), &mut stream(2, 0));
            let (_, grad) = Network::loss_and_gradient(&sizes, &net.params, &xs, data.labels(), &rows, 0.01);
            for k in 0..net.params.len() {
                let h = 1e-5;
                let mut p = net.params.clone();
                p[k] += h;
                let up = Network::loss_and_gradient(&sizes, &p, &xs, data.labels(), &rows, 0.01).0;
                p[k] -= 2.0 * h;
                let down = Network::loss_and_gradient(&sizes, &p, &xs, data.labels(), &rows, 0.01).0;
                let numeric = (up - down) / (2.0 * h);
                let scale = grad[k].abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (grad[k] - numeric).abs() / scale < 1e-4,
                    "param {k}: analytic {} numeric {numeric}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn full_batch_loss_is_non_increasing() {
        let data = toy(60, 4);
        for kind in [NetworkKind::Logistic, NetworkKind::Mlp] {
            let cfg = TrainConfig {
                batch_size: 0,
                momentum: 0.0,
                learning_rate: 0.05,
                max_epochs: 100,
                validation_fraction: 0.0,
                patience: 1000,
                ..TrainConfig::new(kind, 5)
            };
            let (_, report) = train(&data, &cfg).unwrap();
            for w in report.train_loss.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{:?}", w);
            }
        }
    }

    #[test]
    fn separable_toy_is_learned() {
        let schema = Arc::new(
            Schema::with_label(vec![Column::continuous("a"), Column::continuous("b")], "y", 2).unwrap(),
        );
        let mut rng = stream(8, 0);
        let rows: Vec<Vec<f64>> = (0..400).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let labels = rows.iter().map(|r| usize::from(r[0] + r[1] > 0.0)).collect();
        let data = Dataset::new(schema, rows, labels).unwrap();
        let (m, report) = train_logistic(&data, &TrainConfig::logistic(1)).unwrap();
        assert!(report.train_accuracy >= 0.99, "{}", report.train_accuracy);
        assert!(evaluate(&m, &data).unwrap().max_class_accuracy >= 0.98);
    }

    #[test]
    fn xor_needs_hidden_layers() {
        let p = Xor::new();
        let data = generate(&p, 4000, 3).unwrap().dataset;
        let (train_set, test_set) = data.split(0.75, 3).unwrap();
        let (mlp, _) = train_mlp(&train_set, &TrainConfig::mlp(3)).unwrap();
        let (lin, _) = train_logistic(&train_set, &TrainConfig::logistic(3)).unwrap();
        let mlp_acc = evaluate(&mlp, &test_set).unwrap().max_class_accuracy;
        let lin_acc = evaluate(&lin, &test_set).unwrap().max_class_accuracy;
        assert!(mlp_acc > 0.95, "{mlp_acc}");
        assert!(lin_acc < 0.6, "{lin_acc}");
    }

    #[test]
    fn single_class_is_degenerate() {
        let schema = Arc::new(Schema::with_label(vec![Column::continuous("a")], "y", 2).unwrap());
        let data = Dataset::new(schema, (0..20).map(|i| vec![i as f64]).collect(), vec![1; 20]).unwrap();
        assert!(matches!(train(&data, &TrainConfig::mlp(0)), Err(AsvError::DegenerateData(_))));
    }

    #[test]
    fn training_is_deterministic_and_round_trips() {
        let data = toy(80, 9);
        let (a, _) = train(&data, &TrainConfig::mlp(4)).unwrap();
        let (b, _) = train(&data, &TrainConfig::mlp(4)).unwrap();
        assert_eq!(a, b);
        let m = Model::Network(a);
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        let x = data.row(3);
        assert_eq!(m.predict_proba(x), back.predict_proba(x));
        let p = m.predict_proba(x);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(back.check_schema(data.schema()).is_ok());
    }

    #[test]
    fn bayes_model_round_trip() {
        let m = Model::Bayes(BayesPredictor::new(ProcessSpec::FairAdmissions.build().unwrap()));
        let back = Model::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.predict_proba(&[1.0, 1.0, 0.0])[1], 0.5);
    }
}
