//! Stochastic activation pruning: retention distributions, keep
//! probabilities, mask sampling, inverse-probability rescaling, and the
//! averaged stochastic classifier built on top of the clean network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::{argmax_lowest, forward_staged, softmax, Network, Tape, Tensor};
use crate::rng;

/// How masks are drawn. Both schemes share the same per-coordinate keep
/// probability `1 - (1 - p_j)^r`; multinomial draws `r` indices with
/// replacement from the retention distribution, binomial flips one coin per
/// coordinate at that marginal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Multinomial,
    Binomial,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Multinomial => "multinomial",
            Scheme::Binomial => "binomial",
        }
    }
}

/// Pruning policy for one defended model. `r_multiplier` scales the number
/// of draws relative to the layer width; `passes` is the number of forward
/// passes averaged at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SapConfig {
    pub r_multiplier: f64,
    pub scheme: Scheme,
    pub passes: usize,
    pub seed: u64,
}

impl SapConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.r_multiplier.is_finite() || self.r_multiplier <= 0.0 {
            return Err(Error::Config(format!(
                "r multiplier must be a finite positive real, got {}",
                self.r_multiplier
            )));
        }
        if self.passes == 0 {
            return Err(Error::Config("passes must be at least 1".into()));
        }
        Ok(())
    }

    /// Number of draws for a layer of the given width, never below one.
    pub fn draws(&self, width: usize) -> usize {
        ((self.r_multiplier * width as f64).round() as usize).max(1)
    }
}

/// Retention distribution over one activation vector: `|h_j| / sum_k |h_k|`.
/// `None` when every activation is exactly zero, in which case there is
/// nothing to prune and the layer passes through untouched.
pub fn retention_probs(h: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = h.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return None;
    }
    Some(h.iter().map(|v| v.abs() / total).collect())
}

/// Marginal keep probability `1 - (1 - p_j)^r` for each coordinate,
/// evaluated as `-exp_m1(r * ln_1p(-p))` so tiny probabilities survive.
/// `r == 1` returns `p` itself, bit for bit.
pub fn keep_prob(probs: &[f64], r: f64) -> Vec<f64> {
    assert!(
        r.is_finite() && r > 0.0,
        "draw count must be a finite positive real, got {r}"
    );
    if r == 1.0 {
        return probs.to_vec();
    }
    probs
        .iter()
        .map(|&p| {
            debug_assert!((0.0..=1.0).contains(&p), "probability {p} out of range");
            let q = -f64::exp_m1(r * f64::ln_1p(-p));
            // exp_m1 returns -0.0 at p = 0; normalize the sign.
            if q == 0.0 {
                0.0
            } else {
                q
            }
        })
        .collect()
}

fn multinomial_mask(probs: &[f64], draws: usize, stream: &mut rand_chacha::ChaCha8Rng) -> Vec<bool> {
    use rand::Rng;
    let mut total = 0.0;
    let prefix: Vec<f64> = probs
        .iter()
        .map(|&p| {
            total += p;
            total
        })
        .collect();
    let mut mask = vec![false; probs.len()];
    for _ in 0..draws {
        let idx = loop {
            let u = stream.random::<f64>() * total;
            // First index whose cumulative mass exceeds u. A zero-probability
            // coordinate has an empty interval and can never win.
            let idx = prefix.partition_point(|&c| c <= u);
            if idx < probs.len() {
                break idx;
            }
            // Rounding pushed u to the total itself; redraw.
        };
        mask[idx] = true;
    }
    mask
}

fn binomial_mask(probs: &[f64], draws: usize, stream: &mut rand_chacha::ChaCha8Rng) -> Vec<bool> {
    use rand::Rng;
    keep_prob(probs, draws as f64)
        .into_iter()
        .map(|q| stream.random::<f64>() < q)
        .collect()
}

/// Draw a keep mask under the given scheme.
pub fn sample_mask(
    probs: &[f64],
    draws: usize,
    scheme: Scheme,
    stream: &mut rand_chacha::ChaCha8Rng,
) -> Vec<bool> {
    assert!(draws >= 1, "at least one draw is required");
    match scheme {
        Scheme::Multinomial => multinomial_mask(probs, draws, stream),
        Scheme::Binomial => binomial_mask(probs, draws, stream),
    }
}

/// One realized pruning decision for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneSample {
    pub probs: Vec<f64>,
    pub keep: Vec<f64>,
    pub mask: Vec<bool>,
}

impl PruneSample {
    /// Multiplicative factor per coordinate: `1/q_j` when kept, `0` when
    /// pruned. Dividing by the keep probability makes the pruned vector an
    /// unbiased estimate of the original.
    pub fn factors(&self) -> Vec<f64> {
        self.mask
            .iter()
            .zip(&self.keep)
            .map(|(&kept, &q)| if kept { 1.0 / q } else { 0.0 })
            .collect()
    }
}

/// Apply a realized pruning decision to an activation vector.
pub fn apply_sap(h: &[f64], sample: &PruneSample) -> Vec<f64> {
    assert_eq!(h.len(), sample.mask.len(), "sample width must match h");
    h.iter()
        .zip(sample.factors())
        .map(|(&v, f)| v * f)
        .collect()
}

/// One stochastic forward pass: logits, the pruning decision taken at each
/// layer (`None` where nothing was pruned, always the logits layer), and the
/// tape for backprop through the realized masks.
#[derive(Debug, Clone)]
pub struct SapTrace {
    pub logits: Tensor,
    pub samples: Vec<Option<PruneSample>>,
    pub tape: Tape,
}

/// Forward pass with pruning after every hidden activation. The mask stream
/// is keyed by `(seed, example, pass, layer)`, so any single activation's
/// randomness can be replayed without rerunning anything else.
pub fn sap_forward(
    net: &Network,
    x: &Tensor,
    cfg: &SapConfig,
    example: u64,
    pass: u64,
) -> Result<SapTrace> {
    cfg.validate()?;
    let mut samples: Vec<Option<PruneSample>> = vec![None; net.depth()];
    let (logits, tape) = forward_staged(net, x, |layer, h| {
        let probs = retention_probs(h)?;
        let draws = cfg.draws(h.len());
        let mut stream = rng::stream(&[cfg.seed, example, pass, layer as u64]);
        let mask = sample_mask(&probs, draws, cfg.scheme, &mut stream);
        let keep = keep_prob(&probs, draws as f64);
        let sample = PruneSample { probs, keep, mask };
        let factors = sample.factors();
        samples[layer] = Some(sample);
        Some(factors)
    })?;
    Ok(SapTrace {
        logits,
        samples,
        tape,
    })
}

/// Defended prediction: mean of the softmax outputs of `k` independent
/// stochastic passes, ties broken toward the lowest class index.
pub fn averaged_predict_k(
    net: &Network,
    x: &Tensor,
    cfg: &SapConfig,
    example: u64,
    k: usize,
) -> Result<(usize, Vec<f64>)> {
    if k == 0 {
        return Err(Error::Config("averaging needs at least one pass".into()));
    }
    let mut mean = vec![0.0; net.output_dim()];
    for pass in 0..k {
        let trace = sap_forward(net, x, cfg, example, pass as u64)?;
        let probs = softmax(trace.logits.data());
        for (m, p) in mean.iter_mut().zip(&probs) {
            *m += p;
        }
    }
    for m in &mut mean {
        *m /= k as f64;
    }
    Ok((argmax_lowest(&mean), mean))
}

/// Defended prediction at the config's own pass count.
pub fn averaged_predict(
    net: &Network,
    x: &Tensor,
    cfg: &SapConfig,
    example: u64,
) -> Result<(usize, Vec<f64>)> {
    averaged_predict_k(net, x, cfg, example, cfg.passes)
}
