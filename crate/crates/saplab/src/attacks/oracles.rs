//! Gradient oracles and prediction judges for the PGD driver.
//!
//! An oracle answers "which way does the loss move" at a point; a judge
//! answers "what does the model under evaluation predict there". Keeping the
//! two separate is what lets one attack compute gradients on one function
//! while being scored against another.

use crate::error::{Error, Result};
use crate::gradcore::{
    backward, forward, softmax_cross_entropy, BackwardRule, Network, Overrides, Tensor,
};
use crate::mlp::predict_clean;
use crate::rng::{self, domain};
use crate::sap::{averaged_predict_k, sap_forward, SapConfig, SapTrace};

/// Gradient of the softmax cross-entropy toward `class` with respect to the
/// input, evaluated at `x`. `example` and `step` key any internal randomness;
/// deterministic oracles ignore them.
pub trait GradientOracle {
    fn loss_gradient(
        &self,
        x: &Tensor,
        class: usize,
        example: u64,
        step: u64,
    ) -> Result<(f64, Tensor)>;

    fn name(&self) -> &'static str;
}

/// Exact backprop through the undefended network. Deterministic; consumes no
/// randomness.
pub struct VanillaOracle<'a> {
    net: &'a Network,
}

impl<'a> VanillaOracle<'a> {
    pub fn new(net: &'a Network) -> Self {
        Self { net }
    }
}

impl GradientOracle for VanillaOracle<'_> {
    fn loss_gradient(
        &self,
        x: &Tensor,
        class: usize,
        _example: u64,
        _step: u64,
    ) -> Result<(f64, Tensor)> {
        let (logits, tape) = forward(self.net, x)?;
        let (loss, lgrad) = softmax_cross_entropy(&logits, class)?;
        let grad = backward(self.net, &tape, &lgrad, &Overrides::new())?;
        Ok((loss, grad))
    }

    fn name(&self) -> &'static str {
        "vanilla"
    }
}

/// Gradient substitution for the pruning defense: the averaged defended model
/// is an unbiased estimate of the clean network, so the substitute backward
/// pass drops the pruning entirely and differentiates the clean network. The
/// gradient is therefore the vanilla gradient, bit for bit; the defended
/// model enters only when the attack's progress is judged.
pub struct BpdaOracle<'a> {
    vanilla: VanillaOracle<'a>,
}

impl<'a> BpdaOracle<'a> {
    pub fn new(net: &'a Network) -> Self {
        Self {
            vanilla: VanillaOracle::new(net),
        }
    }
}

impl GradientOracle for BpdaOracle<'_> {
    fn loss_gradient(
        &self,
        x: &Tensor,
        class: usize,
        example: u64,
        step: u64,
    ) -> Result<(f64, Tensor)> {
        self.vanilla.loss_gradient(x, class, example, step)
    }

    fn name(&self) -> &'static str {
        "bpda"
    }
}

/// Mask-scale rules for every layer the trace actually pruned; the exact
/// derivative of the realized stochastic forward.
pub fn mask_scale_overrides(trace: &SapTrace) -> Overrides {
    trace
        .samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.as_ref().map(|_| (i, BackwardRule::MaskScale)))
        .collect()
}

/// Differentiates straight through the stochastic defense: each gradient
/// sample fixes the masks of one fresh stochastic forward and backprops the
/// realized mask-and-rescale exactly; the oracle returns the mean over
/// `eot` samples. The attacker draws its own mask stream, derived from the
/// defense seed but disjoint from every stream the defense itself uses.
pub struct ThroughSapOracle<'a> {
    net: &'a Network,
    defense: SapConfig,
    eot: usize,
}

impl<'a> ThroughSapOracle<'a> {
    pub fn new(net: &'a Network, defense: &SapConfig, eot: usize) -> Result<Self> {
        if eot == 0 {
            return Err(Error::Config(
                "through-defense oracle needs at least one gradient sample".into(),
            ));
        }
        defense.validate()?;
        let mut attacker_view = defense.clone();
        attacker_view.seed = rng::derive_seed(&[defense.seed, domain::SAP_ATTACK]);
        Ok(Self {
            net,
            defense: attacker_view,
            eot,
        })
    }
}

impl GradientOracle for ThroughSapOracle<'_> {
    fn loss_gradient(
        &self,
        x: &Tensor,
        class: usize,
        example: u64,
        step: u64,
    ) -> Result<(f64, Tensor)> {
        let mut grad_sum = vec![0.0; self.net.input_dim()];
        let mut loss_sum = 0.0;
        for s in 0..self.eot {
            // One fresh mask per gradient sample, never reused across steps.
            let pass = step
                .wrapping_mul(self.eot as u64)
                .wrapping_add(s as u64);
            let trace = sap_forward(self.net, x, &self.defense, example, pass)?;
            let (loss, lgrad) = softmax_cross_entropy(&trace.logits, class)?;
            let overrides = mask_scale_overrides(&trace);
            let g = backward(self.net, &trace.tape, &lgrad, &overrides)?;
            loss_sum += loss;
            for (acc, &gj) in grad_sum.iter_mut().zip(g.data()) {
                *acc += gj;
            }
        }
        let inv = 1.0 / self.eot as f64;
        for g in &mut grad_sum {
            *g *= inv;
        }
        Ok((loss_sum * inv, Tensor::vector(grad_sum)))
    }

    fn name(&self) -> &'static str {
        "through_sap"
    }
}

/// The model whose verdict counts when an attack checks its progress.
pub trait Predictor {
    fn predict(&self, x: &Tensor, example: u64) -> Result<usize>;

    fn name(&self) -> &'static str;
}

/// Judges on the undefended network.
pub struct CleanPredictor<'a> {
    net: &'a Network,
}

impl<'a> CleanPredictor<'a> {
    pub fn new(net: &'a Network) -> Self {
        Self { net }
    }
}

impl Predictor for CleanPredictor<'_> {
    fn predict(&self, x: &Tensor, _example: u64) -> Result<usize> {
        Ok(predict_clean(self.net, x)?.0)
    }

    fn name(&self) -> &'static str {
        "clean"
    }
}

/// Judges on the defended model's declared decision rule: the argmax of the
/// mean softmax over `passes` stochastic forwards.
pub struct DefendedPredictor<'a> {
    net: &'a Network,
    cfg: SapConfig,
    passes: usize,
}

impl<'a> DefendedPredictor<'a> {
    pub fn new(net: &'a Network, cfg: &SapConfig, passes: usize) -> Result<Self> {
        cfg.validate()?;
        if passes == 0 {
            return Err(Error::Config(
                "defended judgment needs at least one pass".into(),
            ));
        }
        Ok(Self {
            net,
            cfg: cfg.clone(),
            passes,
        })
    }
}

impl Predictor for DefendedPredictor<'_> {
    fn predict(&self, x: &Tensor, example: u64) -> Result<usize> {
        Ok(averaged_predict_k(self.net, x, &self.cfg, example, self.passes)?.0)
    }

    fn name(&self) -> &'static str {
        "defended"
    }
}
