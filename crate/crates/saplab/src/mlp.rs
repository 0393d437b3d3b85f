//! MLP lifecycle: architecture spec, seeded init, SGD training, clean
//! prediction, and JSON checkpoints.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::{
    argmax_lowest, backward_params, forward, softmax, softmax_cross_entropy, Layer, Network,
    Tensor,
};
use crate::rng::{self, domain};

/// Layer widths `[input, hidden..., classes]` plus the init seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub init_seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::Config(format!(
                "network needs at least one hidden layer: widths {:?}",
                self.widths
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!(
                "zero-width layer in {:?}",
                self.widths
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.widths.last().unwrap()
    }
}

/// Seeded scaled-gaussian init: weights N(0, 2/fan_in), biases zero, ReLU on
/// every layer except the logits layer.
pub fn init_network(spec: &MlpSpec) -> Result<Network> {
    spec.validate()?;
    let mut layers = Vec::with_capacity(spec.widths.len() - 1);
    for (l, pair) in spec.widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        let mut stream = rng::stream(&[spec.init_seed, domain::INIT, l as u64]);
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| std * stream.sample::<f64, _>(StandardNormal))
            .collect();
        let relu = l + 2 < spec.widths.len();
        layers.push(Layer::new(
            Tensor::matrix(fan_in, fan_out, data)?,
            Tensor::zeros(vec![fan_out]),
            relu,
        )?);
    }
    Network::new(layers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config(format!(
                "learning rate must be a finite non-negative real, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-epoch mean training loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainLog {
    pub epoch_loss: Vec<f64>,
}

/// Plain minibatch SGD on softmax cross-entropy. Deterministic given the
/// shuffle seed; epoch ordering comes from a per-epoch derived stream.
pub fn train(
    net: &mut Network,
    xs: &[Tensor],
    ys: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if xs.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if xs.len() != ys.len() {
        return Err(Error::InvalidArgument(format!(
            "{} inputs but {} labels",
            xs.len(),
            ys.len()
        )));
    }
    if cfg.batch_size > xs.len() {
        return Err(Error::Config(format!(
            "batch size {} exceeds dataset size {}",
            cfg.batch_size,
            xs.len()
        )));
    }
    let classes = net.output_dim();
    if let Some(&bad) = ys.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            classes,
        });
    }

    let n = xs.len();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        let mut stream = rng::stream(&[cfg.shuffle_seed, domain::SHUFFLE, epoch as u64]);
        order.shuffle(&mut stream);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc: Option<Vec<(Vec<f64>, Vec<f64>)>> = None;
            for &idx in batch {
                let (logits, tape) = forward(net, &xs[idx])?;
                let (loss, lgrad) = softmax_cross_entropy(&logits, ys[idx])?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged {
                        epoch,
                        reason: format!("non-finite loss {loss} on sample {idx}"),
                    });
                }
                loss_sum += loss;
                let grads = backward_params(net, &tape, &lgrad)?;
                match &mut acc {
                    None => {
                        acc = Some(
                            grads
                                .weights
                                .into_iter()
                                .zip(grads.biases)
                                .map(|(w, b)| (w.into_data(), b.into_data()))
                                .collect(),
                        );
                    }
                    Some(acc) => {
                        for (slot, (gw, gb)) in acc.iter_mut().zip(
                            grads.weights.iter().zip(grads.biases.iter()),
                        ) {
                            for (a, &g) in slot.0.iter_mut().zip(gw.data()) {
                                *a += g;
                            }
                            for (a, &g) in slot.1.iter_mut().zip(gb.data()) {
                                *a += g;
                            }
                        }
                    }
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            let acc = acc.expect("batches are non-empty");
            for (layer, (gw, gb)) in net.layers_mut().iter_mut().zip(&acc) {
                for (w, &g) in layer.weights_mut().iter_mut().zip(gw) {
                    *w -= scale * g;
                }
                for (b, &g) in layer.bias_mut().iter_mut().zip(gb) {
                    *b -= scale * g;
                }
            }
        }
        epoch_loss.push(loss_sum / n as f64);
    }
    Ok(TrainLog { epoch_loss })
}

/// Deterministic prediction on the undefended network:
/// `(label, probabilities)`, ties broken toward the lowest index.
pub fn predict_clean(net: &Network, x: &Tensor) -> Result<(usize, Vec<f64>)> {
    let (logits, _) = forward(net, x)?;
    let probs = softmax(logits.data());
    Ok((argmax_lowest(&probs), probs))
}

/// Fraction of examples the undefended network labels correctly.
pub fn accuracy(net: &Network, xs: &[Tensor], ys: &[usize]) -> Result<f64> {
    assert_eq!(xs.len(), ys.len(), "inputs and labels must align");
    let mut correct = 0usize;
    for (x, &y) in xs.iter().zip(ys) {
        if predict_clean(net, x)?.0 == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / xs.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub shuffle_seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub final_epoch_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Weights as nested decimal arrays; JSON serialization uses shortest
/// round-trip formatting, so saved reals reload bit-for-bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub spec: MlpSpec,
    pub weights: Vec<Vec<Vec<f64>>>,
    pub biases: Vec<Vec<f64>>,
    pub metadata: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_network(net: &Network, spec: MlpSpec, metadata: CheckpointMeta) -> Self {
        let mut weights = Vec::with_capacity(net.depth());
        let mut biases = Vec::with_capacity(net.depth());
        for layer in net.layers() {
            let (in_dim, out_dim) = (layer.in_dim(), layer.out_dim());
            let w = layer.weights().data();
            weights.push(
                (0..in_dim)
                    .map(|a| w[a * out_dim..(a + 1) * out_dim].to_vec())
                    .collect(),
            );
            biases.push(layer.bias().data().to_vec());
        }
        Self {
            spec,
            weights,
            biases,
            metadata,
        }
    }

    pub fn to_network(&self) -> Result<Network> {
        self.spec.validate()?;
        let depth = self.spec.widths.len() - 1;
        if self.weights.len() != depth || self.biases.len() != depth {
            return Err(Error::Config(format!(
                "checkpoint stores {} weight and {} bias layers, spec wants {depth}",
                self.weights.len(),
                self.biases.len()
            )));
        }
        let mut layers = Vec::with_capacity(depth);
        for (l, (rows, bias)) in self.weights.iter().zip(&self.biases).enumerate() {
            let (in_dim, out_dim) = (self.spec.widths[l], self.spec.widths[l + 1]);
            if rows.len() != in_dim || rows.iter().any(|r| r.len() != out_dim) {
                return Err(Error::Config(format!(
                    "layer {l} weights do not match widths {in_dim}x{out_dim}"
                )));
            }
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            layers.push(Layer::new(
                Tensor::matrix(in_dim, out_dim, flat)?,
                Tensor::vector(bias.clone()),
                l + 1 < depth,
            )?);
        }
        Network::new(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
