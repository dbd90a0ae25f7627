//! Classical dense layers feeding a quantum network, with training loops
//! for the fraud and digit classification tasks.

use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FRAUD, GENUINE};
use crate::error::{Error, Result};
use crate::fock::FockState;
use crate::layers::{encode_classical, CompiledNetwork, Network, ParamVector, Readout, ReadoutKind};
use crate::nonlin::{Detector, LoopStats};
use crate::optim::{
    cost_classification, layered_fd_gradient, Adam, AdamConfig, OptimizerTrace, StopReason, TraceRow, FD_STEP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `x` for `x > 0`, `e^x - 1` otherwise.
    Elu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu if z <= 0.0 => z.exp_m1(),
            _ => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Elu if z <= 0.0 => z.exp(),
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub inputs: usize,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            inputs,
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        Self {
            weights: (0..inputs * outputs)
                .map(|_| rng.random_range(-limit..=limit))
                .collect(),
            bias: vec![0.0; outputs],
            inputs,
            activation,
        }
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    /// Returns `(z, activation(z))`.
    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let z: Vec<f64> = self
            .weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        let a = z.iter().map(|&v| self.activation.apply(v)).collect();
        (z, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridConfig {
    pub features: usize,
    /// Hidden classical widths (ELU); an identity boundary layer is appended.
    pub hidden: Vec<usize>,
    pub p: usize,
    /// Quantum layers including the encoding layer.
    pub quantum_layers: usize,
    pub cutoff: usize,
    pub success_loop: usize,
    pub zeta_half_width: f64,
}

impl HybridConfig {
    pub fn fraud_desk() -> Self {
        Self {
            features: crate::data::FRAUD_FEATURES,
            hidden: vec![10],
            p: 2,
            quantum_layers: 4,
            cutoff: 6,
            success_loop: 1,
            zeta_half_width: 0.05,
        }
    }

    pub fn mnist_desk(features: usize) -> Self {
        Self {
            features,
            hidden: vec![],
            p: 4,
            quantum_layers: 3,
            cutoff: 4,
            success_loop: 1,
            zeta_half_width: 0.05,
        }
    }
}

/// Model checkpoint format version.
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridModel {
    pub version: u32,
    pub classical: Vec<DenseLayer>,
    /// Quantum layers; the first is the encoding layer.
    pub network: Network,
    /// Trainable parameters of the quantum layers after the encoding layer.
    pub zeta: Vec<f64>,
}

impl HybridModel {
    pub fn new(config: &HybridConfig, seed: u64) -> Result<Self> {
        if config.quantum_layers == 0 {
            return Err(Error::InvalidParameter(
                "at least the encoding layer is required".into(),
            ));
        }
        let mut network = Network::standard(config.p, config.quantum_layers, config.cutoff)?;
        network.success_loop = config.success_loop;
        network.leakage_budget = None;
        network.validate()?;
        let boundary = network.layers[0].param_count;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut classical = Vec::new();
        let mut width = config.features;
        for &h in &config.hidden {
            classical.push(DenseLayer::random(width, h, Activation::Elu, &mut rng));
            width = h;
        }
        classical.push(DenseLayer::random(width, boundary, Activation::Identity, &mut rng));
        let tail: usize = network.layers[1..].iter().map(|l| l.param_count).sum();
        let zeta = (0..tail)
            .map(|_| rng.random_range(-config.zeta_half_width..=config.zeta_half_width))
            .collect();
        let model = Self {
            version: MODEL_VERSION,
            classical,
            network,
            zeta,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the layer shape chain and the boundary width law `7p - 2`.
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let boundary = self.network.layers[0].param_count;
        if boundary != 7 * self.network.p - 2 {
            return Err(Error::shape(7 * self.network.p - 2, boundary));
        }
        let last = self
            .classical
            .last()
            .ok_or_else(|| Error::InvalidParameter("no classical layers".into()))?;
        if last.outputs() != boundary {
            return Err(Error::shape(
                format!("{boundary} classical outputs"),
                format!("{} classical outputs", last.outputs()),
            ));
        }
        for (l, pair) in self.classical.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs {
                return Err(Error::shape(
                    format!("layer {} with {} inputs", l + 1, pair[0].outputs()),
                    pair[1].inputs,
                ));
            }
        }
        for layer in &self.classical {
            if layer.weights.len() != layer.inputs * layer.outputs() {
                return Err(Error::shape(layer.inputs * layer.outputs(), layer.weights.len()));
            }
        }
        let tail: usize = self.network.layers[1..].iter().map(|l| l.param_count).sum();
        if self.zeta.len() != tail {
            return Err(Error::shape(tail, self.zeta.len()));
        }
        if self.parameters().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(())
    }

    pub fn features(&self) -> usize {
        self.classical[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.network.p
    }

    /// Flat parameters: each classical layer's weights then bias, then `zeta`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.classical {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v.extend_from_slice(&self.zeta);
        v
    }

    pub fn set_parameters(&mut self, values: &[f64]) -> Result<()> {
        let expected = self.parameters().len();
        if values.len() != expected {
            return Err(Error::shape(expected, values.len()));
        }
        let mut at = 0;
        for l in &mut self.classical {
            let (w, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&values[at..at + w]);
            l.bias.copy_from_slice(&values[at + w..at + w + b]);
            at += w + b;
        }
        self.zeta.copy_from_slice(&values[at..]);
        Ok(())
    }

    fn tail_network(&self) -> Network {
        let mut tail = self.network.clone();
        tail.layers = self.network.layers[1..].to_vec();
        tail
    }

    /// Compiled quantum layers after the encoding layer.
    fn compile_tail(&self) -> Result<Option<CompiledNetwork>> {
        if self.network.layers.len() == 1 {
            return Ok(None);
        }
        let tail = self.tail_network();
        Ok(Some(
            tail.compile(&ParamVector::from_values(&tail, self.zeta.clone())?)?,
        ))
    }

    fn classical_forward(&self, x: &[f64]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        if x.len() != self.features() {
            return Err(Error::shape(self.features(), x.len()));
        }
        let mut cache = Vec::with_capacity(self.classical.len());
        let mut a = x.to_vec();
        for layer in &self.classical {
            let (z, next) = layer.forward(&a);
            cache.push((z, next.clone()));
            a = next;
        }
        Ok(cache)
    }

    /// State entering the tail, starting from vacuum.
    fn encoded_state(&self, raw: &[f64]) -> Result<(FockState, f64)> {
        let enc = encode_classical(raw, &self.network.layers[0], &self.network.squash)?;
        let layer = self.network.compile_layer(&self.network.layers[0], &enc)?;
        let single = CompiledNetwork {
            layers: vec![layer],
            p: self.network.p,
            hbar: self.network.hbar,
            class_readout: self.network.class_readout,
            leakage_budget: None,
        };
        let mut state = FockState::vacuum(self.network.p, self.network.cutoff)?;
        let success = single.apply_layer(0, &mut state).map_err(|e| e.in_layer(0))?;
        Ok((state, success))
    }

    fn quantum_probabilities(&self, raw: &[f64], tail: Option<&CompiledNetwork>) -> Result<Vec<f64>> {
        let (mut state, _) = self.encoded_state(raw)?;
        if let Some(t) = tail {
            for l in 0..t.layers.len() {
                t.apply_layer(l, &mut state).map_err(|e| e.in_layer(l + 1))?;
            }
        }
        Ok(crate::layers::class_probabilities(&state, self.network.class_readout))
    }

    /// Class probabilities for one feature vector.
    pub fn forward(&self, x: &[f64]) -> Result<HybridOutput> {
        let tail = self.compile_tail()?;
        self.forward_with(x, tail.as_ref())
    }

    fn forward_with(&self, x: &[f64], tail: Option<&CompiledNetwork>) -> Result<HybridOutput> {
        let cache = self.classical_forward(x)?;
        let raw = cache.last().expect("at least one layer").1.clone();
        let probabilities = self.quantum_probabilities(&raw, tail)?;
        Ok(HybridOutput {
            encoding: raw,
            probabilities,
        })
    }

    /// Probabilities for every row, evaluated in parallel.
    pub fn predict(&self, data: &Dataset) -> Result<Vec<Vec<f64>>> {
        let tail = self.compile_tail()?;
        data.features
            .par_iter()
            .map(|x| Ok(self.forward_with(x, tail.as_ref())?.probabilities))
            .collect()
    }

    /// Loss `sum (1 - p_correct)^2` over a batch.
    pub fn loss(&self, features: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
        let tail = self.compile_tail()?;
        let correct = features
            .iter()
            .zip(labels)
            .map(|(x, &y)| Ok(self.forward_with(x, tail.as_ref())?.probabilities[y]))
            .collect::<Result<Vec<f64>>>()?;
        Ok(cost_classification(&correct))
    }

    /// Loss and gradient over all parameters in [`Self::parameters`] order.
    ///
    /// Classical weights get analytic backpropagation; the derivative of the
    /// quantum loss with respect to the encoding vector and `zeta` comes from
    /// central differences with step `h`.
    pub fn backward(&self, features: &[Vec<f64>], labels: &[usize], h: f64) -> Result<(f64, Vec<f64>)> {
        if features.is_empty() || features.len() != labels.len() {
            return Err(Error::InvalidDataset(format!(
                "batch of {} rows with {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= self.classes()) {
            return Err(Error::InvalidDataset(format!(
                "label {y} outside {} classes",
                self.classes()
            )));
        }
        let tail = self.compile_tail()?;
        let per_sample = features
            .par_iter()
            .zip(labels)
            .map(|(x, &y)| self.sample_gradient(x, y, tail.as_ref(), h))
            .collect::<Result<Vec<_>>>()?;
        let mut grad = vec![0.0; self.parameters().len()];
        let mut correct = Vec::with_capacity(per_sample.len());
        for (p, g) in &per_sample {
            correct.push(*p);
            for (acc, v) in grad.iter_mut().zip(g) {
                *acc += v;
            }
        }
        let loss = cost_classification(&correct);
        if !self.zeta.is_empty() {
            let states = features
                .par_iter()
                .map(|x| {
                    let cache = self.classical_forward(x)?;
                    Ok(self.encoded_state(&cache.last().expect("layer").1)?.0)
                })
                .collect::<Result<Vec<_>>>()?;
            let tail_net = self.tail_network();
            let zp = ParamVector::from_values(&tail_net, self.zeta.clone())?;
            let (_, gz) = layered_fd_gradient(
                &tail_net,
                &zp,
                &states,
                ReadoutKind::ClassProbabilities,
                |outs| {
                    let correct: Vec<f64> = outs
                        .iter()
                        .zip(labels)
                        .map(|(r, &y)| match r {
                            Readout::ClassProbabilities(p) => p[y],
                            _ => unreachable!("class readout requested"),
                        })
                        .collect();
                    Ok(cost_classification(&correct))
                },
                h,
            )?;
            let start = grad.len() - gz.len();
            grad[start..].copy_from_slice(&gz);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("hybrid gradient".into()));
        }
        Ok((loss, grad))
    }

    /// `(p_correct, gradient of (1 - p_correct)^2 w.r.t. classical parameters)`.
    fn sample_gradient(&self, x: &[f64], y: usize, tail: Option<&CompiledNetwork>, h: f64) -> Result<(f64, Vec<f64>)> {
        let cache = self.classical_forward(x)?;
        let raw = &cache.last().expect("layer").1;
        let p = self.quantum_probabilities(raw, tail)?[y];
        let sample_loss = |u: &[f64]| -> Result<f64> { Ok((1.0 - self.quantum_probabilities(u, tail)?[y]).powi(2)) };
        let mut delta = Vec::with_capacity(raw.len());
        for k in 0..raw.len() {
            let mut up = raw.clone();
            up[k] += h;
            let mut down = raw.clone();
            down[k] -= h;
            delta.push((sample_loss(&up)? - sample_loss(&down)?) / (2.0 * h));
        }
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.classical.len());
        for l in (0..self.classical.len()).rev() {
            let layer = &self.classical[l];
            let input = if l == 0 { x } else { cache[l - 1].1.as_slice() };
            let dz: Vec<f64> = delta
                .iter()
                .zip(&cache[l].0)
                .map(|(d, &z)| d * layer.activation.derivative(z))
                .collect();
            let mut dw = vec![0.0; layer.weights.len()];
            for (o, &g) in dz.iter().enumerate() {
                for (i, &v) in input.iter().enumerate() {
                    dw[o * layer.inputs + i] = g * v;
                }
            }
            let mut back = vec![0.0; layer.inputs];
            for (o, &g) in dz.iter().enumerate() {
                for (i, b) in back.iter_mut().enumerate() {
                    *b += layer.weights[o * layer.inputs + i] * g;
                }
            }
            grads.push((dw, dz));
            delta = back;
        }
        let mut flat = Vec::with_capacity(self.parameters().len());
        for (dw, db) in grads.into_iter().rev() {
            flat.extend(dw);
            flat.extend(db);
        }
        flat.extend(std::iter::repeat_n(0.0, self.zeta.len()));
        Ok((p, flat))
    }

    /// Full quantum network (encoding layer included) for one feature vector.
    pub fn compile_for(&self, x: &[f64], detector: Option<Detector>) -> Result<CompiledNetwork> {
        let cache = self.classical_forward(x)?;
        let mut values = encode_classical(
            &cache.last().expect("layer").1,
            &self.network.layers[0],
            &self.network.squash,
        )?;
        values.extend_from_slice(&self.zeta);
        let mut net = self.network.clone();
        if let Some(d) = detector {
            net.detector = d;
        }
        net.compile(&ParamVector::from_values(&net, values)?)
    }

    /// Repeat-until-success round counts over `trials` passes cycling through `data`.
    ///
    /// `detector` replaces the training detector when given.
    pub fn loop_statistics(
        &self,
        data: &Dataset,
        trials: usize,
        seed: u64,
        detector: Option<Detector>,
    ) -> Result<LoopStats> {
        if data.is_empty() {
            return Err(Error::InvalidDataset("no rows to sample".into()));
        }
        let vacuum = FockState::vacuum(self.network.p, self.network.cutoff)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stats = LoopStats::new(self.network.layers.len());
        for t in 0..trials {
            let compiled = self.compile_for(&data.features[t % data.len()], detector)?;
            stats.sample(&compiled, &vacuum, &mut rng)?;
        }
        Ok(stats)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: HybridModel = serde_json::from_str(text)?;
        if m.version != MODEL_VERSION {
            return Err(Error::InvalidParameter(format!(
                "unsupported model version {}",
                m.version
            )));
        }
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridOutput {
    /// Raw boundary-layer outputs before squashing.
    pub encoding: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl HybridOutput {
    /// Index of the largest class probability.
    pub fn predicted(&self) -> usize {
        argmax(&self.probabilities)
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        )
        .0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    /// Number of optimizer steps (fraud) or full passes (digits).
    pub iterations: usize,
    pub fd_step: f64,
}

impl TrainConfig {
    pub fn fraud_desk() -> Self {
        Self {
            adam: AdamConfig {
                learning_rate: 0.003,
                ..AdamConfig::default()
            },
            batch_size: 24,
            iterations: 1500,
            fd_step: FD_STEP,
        }
    }

    pub fn mnist_desk() -> Self {
        Self {
            adam: AdamConfig {
                learning_rate: 0.001,
                decay_every: Some(5000),
                decay_factor: 0.9,
                ..AdamConfig::default()
            },
            batch_size: 16,
            iterations: 20,
            fd_step: FD_STEP,
        }
    }
}

/// One Adam step on a batch; returns the batch loss.
fn train_step(model: &mut HybridModel, opt: &mut Adam, features: &[Vec<f64>], labels: &[usize], h: f64) -> Result<f64> {
    let (loss, grad) = model.backward(features, labels, h)?;
    let mut params = model.parameters();
    opt.step(&mut params, &grad)?;
    model.set_parameters(&params)?;
    Ok(loss)
}

fn batch_of(data: &Dataset, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>) {
    (
        idx.iter().map(|&i| data.features[i].clone()).collect(),
        idx.iter().map(|&i| data.labels[i]).collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC of `score` for the positive class, sweeping every distinct score.
///
/// A row is predicted positive when its score is at least the threshold.
pub fn roc_curve(scores: &[f64], positive: &[bool]) -> Result<Vec<RocPoint>> {
    let pos = positive.iter().filter(|&&p| p).count();
    let neg = positive.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidDataset("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: t,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// Trapezoidal area under an ROC curve.
pub fn auc(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// ROC point closest to `(fpr, tpr) = (0, 1)`.
pub fn optimal_point(points: &[RocPoint]) -> RocPoint {
    *points
        .iter()
        .filter(|p| p.threshold.is_finite())
        .min_by(|a, b| {
            let da = a.fpr.powi(2) + (1.0 - a.tpr).powi(2);
            let db = b.fpr.powi(2) + (1.0 - b.tpr).powi(2);
            da.total_cmp(&db)
        })
        .expect("ROC has finite thresholds")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FraudMetrics {
    /// Rows: actual genuine, actual fraud. Columns: predicted genuine, predicted fraud.
    pub confusion: [[usize; 2]; 2],
    pub accuracy: f64,
    pub auc: f64,
    /// Genuine-probability threshold at the test ROC point closest to `(0, 1)`.
    pub threshold: f64,
    pub train_auc: f64,
    /// The same rule applied to the training ROC, and the test accuracy it gives.
    pub train_threshold: f64,
    pub accuracy_at_train_threshold: f64,
    pub roc: Vec<RocPoint>,
    pub final_batch_loss: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row_id: usize,
    pub label: usize,
    pub probabilities: Vec<f64>,
    pub predicted: usize,
}

pub struct FraudRun {
    pub model: HybridModel,
    pub metrics: FraudMetrics,
    pub trace: OptimizerTrace,
    pub predictions: Vec<Prediction>,
}

/// Trains with Adam on minibatches drawn by `seed`, then scores the test set.
///
/// Transactions are classified genuine when the genuine-mode probability
/// reaches the threshold whose test ROC point is closest to `(0, 1)`.
pub fn train_fraud(
    config: &HybridConfig,
    train: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    seed: u64,
) -> Result<FraudRun> {
    for d in [train_set, test_set] {
        d.validate()?;
        let counts = d.class_counts();
        if counts.len() != 2 || counts.contains(&0) {
            return Err(Error::InvalidDataset(format!(
                "fraud data needs both classes, found {counts:?}"
            )));
        }
    }
    if config.p != 2 {
        return Err(Error::InvalidParameter(format!(
            "fraud classification uses two modes, got {}",
            config.p
        )));
    }
    let start = Instant::now();
    let mut model = HybridModel::new(config, seed)?;
    let mut opt = Adam::new(train.adam, model.parameters().len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut cursor = order.len();
    let mut trace = OptimizerTrace {
        rows: Vec::new(),
        reason: None,
        snapshots: Vec::new(),
        snapshot_every: 0,
        evaluations: 0,
    };
    let mut last = f64::NAN;
    for step in 0..train.iterations {
        if cursor + train.batch_size > order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let idx = &order[cursor..(cursor + train.batch_size).min(order.len())];
        cursor += train.batch_size;
        let (xs, ys) = batch_of(train_set, idx);
        let lr = train.adam.learning_rate_at(step);
        last = match train_step(&mut model, &mut opt, &xs, &ys, train.fd_step) {
            Ok(l) => l,
            Err(Error::NonFinite(_)) => {
                trace.reason = Some(StopReason::NonFinite);
                break;
            }
            Err(e) => return Err(e),
        };
        trace.evaluations += 1;
        trace.rows.push(TraceRow {
            step,
            evaluations: trace.evaluations,
            cost: last,
            learning_rate: lr,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    trace.reason.get_or_insert(StopReason::MaxSteps);

    let genuine_score = |probs: &[Vec<f64>]| -> Vec<f64> { probs.iter().map(|p| p[GENUINE]).collect() };
    let train_probs = model.predict(train_set)?;
    let train_roc = roc_curve(
        &genuine_score(&train_probs),
        &train_set.labels.iter().map(|&l| l == GENUINE).collect::<Vec<_>>(),
    )?;
    let train_threshold = optimal_point(&train_roc).threshold;
    let test_probs = model.predict(test_set)?;
    let scores = genuine_score(&test_probs);
    let truth: Vec<bool> = test_set.labels.iter().map(|&l| l == GENUINE).collect();
    let roc = roc_curve(&scores, &truth)?;
    let threshold = optimal_point(&roc).threshold;
    let accuracy_at =
        |t: f64| scores.iter().zip(&truth).filter(|(s, g)| (**s >= t) == **g).count() as f64 / scores.len() as f64;
    let mut confusion = [[0usize; 2]; 2];
    let mut predictions = Vec::with_capacity(test_set.len());
    for (i, probs) in test_probs.into_iter().enumerate() {
        let predicted = if scores[i] >= threshold { GENUINE } else { FRAUD };
        confusion[test_set.labels[i]][predicted] += 1;
        predictions.push(Prediction {
            row_id: test_set.row_ids[i],
            label: test_set.labels[i],
            probabilities: probs,
            predicted,
        });
    }
    let accuracy = (confusion[0][0] + confusion[1][1]) as f64 / test_set.len() as f64;
    let metrics = FraudMetrics {
        confusion,
        accuracy,
        auc: auc(&roc),
        threshold,
        train_auc: auc(&train_roc),
        train_threshold,
        accuracy_at_train_threshold: accuracy_at(train_threshold),
        roc,
        final_batch_loss: last,
        elapsed_s: start.elapsed().as_secs_f64(),
    };
    Ok(FraudRun {
        model,
        metrics,
        trace,
        predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean per-sample loss.
    pub train_loss: f64,
    pub test_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub elapsed_s: f64,
}

pub struct ClassifierRun {
    pub model: HybridModel,
    pub epochs: Vec<EpochMetrics>,
    pub trace: OptimizerTrace,
}

/// Loss per sample and argmax accuracy.
pub fn evaluate(model: &HybridModel, data: &Dataset) -> Result<(f64, f64)> {
    let probs = model.predict(data)?;
    let correct: Vec<f64> = probs.iter().zip(&data.labels).map(|(p, &y)| p[y]).collect();
    let hits = probs.iter().zip(&data.labels).filter(|(p, &y)| argmax(p) == y).count();
    Ok((
        cost_classification(&correct) / data.len() as f64,
        hits as f64 / data.len() as f64,
    ))
}

/// Multi-class training with shuffled minibatches for `train.iterations` epochs.
pub fn train_classifier(
    config: &HybridConfig,
    train: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    seed: u64,
) -> Result<ClassifierRun> {
    for d in [train_set, test_set] {
        d.validate()?;
        if d.is_empty() {
            return Err(Error::InvalidDataset("empty split".into()));
        }
        if d.classes != config.p {
            return Err(Error::InvalidDataset(format!(
                "{} classes for {} modes",
                d.classes, config.p
            )));
        }
    }
    let start = Instant::now();
    let mut model = HybridModel::new(config, seed)?;
    let mut opt = Adam::new(train.adam, model.parameters().len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut trace = OptimizerTrace {
        rows: Vec::new(),
        reason: None,
        snapshots: Vec::new(),
        snapshot_every: 0,
        evaluations: 0,
    };
    let mut epochs = Vec::with_capacity(train.iterations);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0;
    'outer: for epoch in 1..=train.iterations {
        order.shuffle(&mut rng);
        for idx in order.chunks(train.batch_size) {
            let (xs, ys) = batch_of(train_set, idx);
            let lr = train.adam.learning_rate_at(step);
            let loss = match train_step(&mut model, &mut opt, &xs, &ys, train.fd_step) {
                Ok(l) => l,
                Err(Error::NonFinite(_)) => {
                    trace.reason = Some(StopReason::NonFinite);
                    break 'outer;
                }
                Err(e) => return Err(e),
            };
            trace.evaluations += 1;
            trace.rows.push(TraceRow {
                step,
                evaluations: trace.evaluations,
                cost: loss,
                learning_rate: lr,
                elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
            });
            step += 1;
        }
        let (train_loss, train_accuracy) = evaluate(&model, train_set)?;
        let (test_loss, test_accuracy) = evaluate(&model, test_set)?;
        epochs.push(EpochMetrics {
            epoch,
            train_loss,
            test_loss,
            train_accuracy,
            test_accuracy,
            elapsed_s: start.elapsed().as_secs_f64(),
        });
    }
    trace.reason.get_or_insert(StopReason::MaxSteps);
    Ok(ClassifierRun { model, epochs, trace })
}

/// Digit classification; `config.success_loop` selects the conditioning model.
pub fn train_mnist(
    config: &HybridConfig,
    train: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    seed: u64,
) -> Result<ClassifierRun> {
    train_classifier(config, train, train_set, test_set, seed)
}

pub fn write_roc_csv<W: Write>(points: &[RocPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "fpr", "tpr"])?;
    for p in points {
        w.write_record([
            format!("{:?}", p.threshold),
            format!("{:?}", p.fpr),
            format!("{:?}", p.tpr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions_csv<W: Write>(predictions: &[Prediction], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let classes = predictions.first().map_or(0, |p| p.probabilities.len());
    let mut header = vec!["row_id".to_string(), "label".to_string(), "predicted".to_string()];
    header.extend((0..classes).map(|c| format!("p{c}")));
    w.write_record(&header)?;
    for p in predictions {
        let mut rec = vec![p.row_id.to_string(), p.label.to_string(), p.predicted.to_string()];
        rec.extend(p.probabilities.iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_epochs_csv<W: Write>(epochs: &[EpochMetrics], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "epoch",
        "train_loss",
        "test_loss",
        "train_accuracy",
        "test_accuracy",
        "elapsed_s",
    ])?;
    for e in epochs {
        w.write_record([
            e.epoch.to_string(),
            format!("{:?}", e.train_loss),
            format!("{:?}", e.test_loss),
            format!("{:?}", e.train_accuracy),
            format!("{:?}", e.test_accuracy),
            format!("{:.3}", e.elapsed_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(quantum_layers: usize) -> HybridModel {
        let cfg = HybridConfig {
            features: 2,
            hidden: vec![3],
            p: 2,
            quantum_layers,
            cutoff: 4,
            success_loop: 1,
            zeta_half_width: 0.3,
        };
        HybridModel::new(&cfg, 3).unwrap()
    }

    #[test]
    fn boundary_width_law() {
        let m = toy(2);
        assert_eq!(m.classical.last().unwrap().outputs(), 12);
        let mut bad = m.clone();
        bad.classical.last_mut().unwrap().bias.pop();
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_weights_give_identity_encoding() {
        let mut m = toy(1);
        let zeros = vec![0.0; m.parameters().len()];
        m.set_parameters(&zeros).unwrap();
        let out = m.forward(&[0.7, -1.2]).unwrap();
        // identity layer on vacuum: no photons in either mode
        assert!(out.probabilities.iter().all(|&p| p.abs() < 1e-12));
        assert!(out.encoding.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn probabilities_are_bounded() {
        let m = toy(2);
        for x in [[0.1, 0.2], [-2.0, 3.0], [5.0, -5.0]] {
            let out = m.forward(&x).unwrap();
            assert!(out.probabilities.iter().all(|p| (0.0..=1.0).contains(p)));
            assert!(out.probabilities.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn loss_matches_classification_cost() {
        let m = toy(2);
        let xs = vec![vec![0.3, -0.4], vec![1.0, 0.5]];
        let ys = vec![0, 1];
        let p0 = m.forward(&xs[0]).unwrap().probabilities[0];
        let p1 = m.forward(&xs[1]).unwrap().probabilities[1];
        assert_eq!(m.loss(&xs, &ys).unwrap(), cost_classification(&[p0, p1]));
        let (loss, _) = m.backward(&xs, &ys, FD_STEP).unwrap();
        assert_eq!(loss, m.loss(&xs, &ys).unwrap());
    }

    #[test]
    fn duplicated_sample_doubles_gradient() {
        let m = toy(2);
        let x = vec![0.3, -0.4];
        let (_, g1) = m.backward(std::slice::from_ref(&x), &[1], FD_STEP).unwrap();
        let (_, g2) = m.backward(&[x.clone(), x], &[1, 1], FD_STEP).unwrap();
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn unused_encoding_slots_have_zero_gradient() {
        use crate::layers::SlotKind;
        // the encoding layer acts on vacuum, where beamsplitters and rotations do nothing
        let m = toy(2);
        let (_, g) = m
            .backward(&[vec![0.3, -0.4], vec![-1.0, 0.8]], &[0, 1], FD_STEP)
            .unwrap();
        let boundary = m.classical.last().unwrap();
        let bias_start = m.parameters().len() - m.zeta.len() - boundary.outputs();
        let kinds = &m.network.layers[0].slot_kinds;
        let mut checked = 0;
        for (k, kind) in kinds.iter().enumerate() {
            if matches!(kind, SlotKind::BsTheta | SlotKind::BsPhi | SlotKind::Rotation) {
                assert_eq!(g[bias_start + k], 0.0, "slot {k} {kind:?}");
                checked += 1;
            } else if *kind == SlotKind::DisplacementRe {
                assert!(g[bias_start + k] != 0.0);
            }
        }
        assert_eq!(checked, 4);
    }

    #[test]
    fn roc_of_separable_scores() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let truth = [true, true, true, false, false];
        let roc = roc_curve(&scores, &truth).unwrap();
        assert_eq!(auc(&roc), 1.0);
        let best = optimal_point(&roc);
        assert_eq!((best.fpr, best.tpr, best.threshold), (0.0, 1.0, 0.7));
        assert!(roc_curve(&scores, &[true; 5]).is_err());
    }

    #[test]
    fn auc_of_reversed_and_tied_scores() {
        let truth = [true, false, true, false];
        assert_eq!(auc(&roc_curve(&[0.1, 0.9, 0.2, 0.8], &truth).unwrap()), 0.0);
        assert_eq!(auc(&roc_curve(&[0.5; 4], &truth).unwrap()), 0.5);
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = toy(2);
        let back = HybridModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, back);
        let x = [0.2, 0.1];
        assert_eq!(
            m.forward(&x).unwrap().probabilities,
            back.forward(&x).unwrap().probabilities
        );
    }

    /// Largest componentwise relative error between two gradients.
    pub(crate) fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| {
                let scale = x.abs().max(y.abs());
                if scale == 0.0 {
                    0.0
                } else {
                    (x - y).abs() / scale.max(1e-6)
                }
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn composite_gradient_matches_end_to_end_differences() {
        let m = toy(2);
        let xs = vec![vec![0.3, -0.4], vec![1.0, 0.5], vec![-0.7, 0.2]];
        let ys = vec![0, 1, 1];
        let (_, g) = m.backward(&xs, &ys, FD_STEP).unwrap();
        let theta = m.parameters();
        let h = 1e-5;
        let fd: Vec<f64> = (0..theta.len())
            .map(|k| {
                let at = |d: f64| {
                    let mut t = theta.clone();
                    t[k] += d;
                    let mut mm = m.clone();
                    mm.set_parameters(&t).unwrap();
                    mm.loss(&xs, &ys).unwrap()
                };
                (at(h) - at(-h)) / (2.0 * h)
            })
            .collect();
        let err = max_relative_error(&g, &fd);
        assert!(err <= 1e-3, "max relative error {err}");
    }

    #[test]
    fn compiled_network_matches_forward() {
        let m = toy(2);
        let x = [0.4, -0.9];
        let compiled = m.compile_for(&x, None).unwrap();
        let vac = FockState::vacuum(2, 4).unwrap();
        let out = compiled.run(&vac, ReadoutKind::ClassProbabilities).unwrap();
        let Readout::ClassProbabilities(p) = out.readout else {
            panic!()
        };
        let q = m.forward(&x).unwrap().probabilities;
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
