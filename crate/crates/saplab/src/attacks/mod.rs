//! Projected gradient ascent under an L-infinity budget, with pluggable
//! gradient oracles and progress judges.
//!
//! The driver is one loop: signed gradient steps, clipping to the epsilon
//! ball and the [0, 1] data box every step, and periodic progress checks on
//! whichever model is being judged. Which gradients feed the loop and which
//! model judges success are both injected, because their combinations are
//! exactly the attack variants under study.

mod dump;
mod oracles;

pub use dump::{load_dump, read_block, save_dump, write_block, DumpBlock, DUMP_VERSION, UNTARGETED};
pub use oracles::{
    mask_scale_overrides, BpdaOracle, CleanPredictor, DefendedPredictor, GradientOracle,
    Predictor, ThroughSapOracle, VanillaOracle,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::rng::{self, domain};

/// Which gradient oracle an attack uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Vanilla,
    Bpda,
    ThroughSap,
}

impl OracleKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OracleKind::Vanilla => "vanilla",
            OracleKind::Bpda => "bpda",
            OracleKind::ThroughSap => "through_sap",
        }
    }
}

/// Attack parameters. `eot_samples` only matters for the through-defense
/// oracle; `eval_every` is the checkpoint cadence; `eval_passes` is the
/// averaging count used when the judged model is the defended one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub step_size: f64,
    pub iterations: usize,
    pub targeted: bool,
    pub target_seed: u64,
    pub oracle: OracleKind,
    pub eot_samples: usize,
    pub eval_every: usize,
    pub eval_passes: usize,
}

/// Default radius, calibrated on the reference benchmark: the smallest value
/// on a seeded sweep ladder where the white-box attack saturates against the
/// undefended net (success 1.00 at 0.15, 0.98 at 0.14) while clean accuracy
/// stays at 1.00. The anchor geometry fixes the scale; radii must be chosen
/// against it, not imported from image benchmarks.
pub const DEFAULT_EPSILON: f64 = 0.15;

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            step_size: DEFAULT_EPSILON / 8.0,
            iterations: 200,
            targeted: false,
            target_seed: 0,
            oracle: OracleKind::Vanilla,
            eot_samples: 1,
            eval_every: 25,
            eval_passes: 100,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.epsilon.is_finite() || self.epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be a finite non-negative real, got {}",
                self.epsilon
            )));
        }
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::Config(format!(
                "step size must be a finite positive real, got {}",
                self.step_size
            )));
        }
        if self.epsilon > 0.0 && self.step_size > self.epsilon {
            return Err(Error::Config(format!(
                "step size {} exceeds the ball radius {}",
                self.step_size, self.epsilon
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if self.eot_samples == 0 {
            return Err(Error::Config("eot_samples must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be at least 1".into()));
        }
        if self.eval_passes == 0 {
            return Err(Error::Config("eval_passes must be at least 1".into()));
        }
        Ok(())
    }
}

/// What counts as a win: untargeted attacks push the prediction anywhere
/// away from the true label, targeted attacks pull it onto a chosen one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackGoal {
    Untargeted { label: usize },
    Targeted { target: usize },
}

impl AttackGoal {
    /// The class whose cross-entropy the oracle differentiates.
    pub fn class(&self) -> usize {
        match *self {
            AttackGoal::Untargeted { label } => label,
            AttackGoal::Targeted { target } => target,
        }
    }

    pub fn succeeded(&self, predicted: usize) -> bool {
        match *self {
            AttackGoal::Untargeted { label } => predicted != label,
            AttackGoal::Targeted { target } => predicted == target,
        }
    }

    pub fn is_targeted(&self) -> bool {
        matches!(self, AttackGoal::Targeted { .. })
    }
}

/// Judged prediction at one checkpoint of the attack.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalPoint {
    pub iteration: usize,
    pub label: usize,
}

/// Outcome of one attack on one example.
#[derive(Debug, Clone)]
pub struct AdvResult {
    pub x_adv: Tensor,
    pub checkpoints: Vec<EvalPoint>,
    pub success: bool,
    pub iterations_used: usize,
    pub final_label: usize,
}

/// Signed step direction; exact zeros stay put (f64::signum would push them).
fn step_sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projected gradient ascent from `x0` (no random start). Checkpoints are
/// taken at iteration 0, every `eval_every` iterations, and the final
/// iteration; the first checkpoint the judge scores as a win stops the
/// attack and becomes `x_adv`, otherwise the final iterate does. Every
/// returned iterate satisfies the ball and box constraints exactly.
pub fn pgd(
    oracle: &dyn GradientOracle,
    judge: &dyn Predictor,
    x0: &Tensor,
    goal: AttackGoal,
    cfg: &AttackConfig,
    example: u64,
) -> Result<AdvResult> {
    cfg.validate()?;
    if x0.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidArgument(
            "attack start point must lie in the [0, 1] data box".into(),
        ));
    }

    let lo: Vec<f64> = x0.data().iter().map(|&v| (v - cfg.epsilon).max(0.0)).collect();
    let hi: Vec<f64> = x0.data().iter().map(|&v| (v + cfg.epsilon).min(1.0)).collect();

    let label0 = judge.predict(x0, example)?;
    let mut checkpoints = vec![EvalPoint {
        iteration: 0,
        label: label0,
    }];
    if goal.succeeded(label0) || cfg.epsilon == 0.0 {
        // Already winning, or a zero-radius ball that pins x' to x0.
        return Ok(AdvResult {
            x_adv: x0.clone(),
            success: goal.succeeded(label0),
            iterations_used: 0,
            final_label: label0,
            checkpoints,
        });
    }

    let direction = if goal.is_targeted() { -1.0 } else { 1.0 };
    let mut x = x0.data().to_vec();
    let mut success = false;
    let mut iterations_used = cfg.iterations;
    for t in 1..=cfg.iterations {
        let (_, grad) = oracle.loss_gradient(&Tensor::vector(x.clone()), goal.class(), example, t as u64)?;
        for (j, xj) in x.iter_mut().enumerate() {
            let moved = *xj + cfg.step_size * direction * step_sign(grad.data()[j]);
            *xj = moved.clamp(lo[j], hi[j]);
        }
        if t % cfg.eval_every == 0 || t == cfg.iterations {
            let label = judge.predict(&Tensor::vector(x.clone()), example)?;
            checkpoints.push(EvalPoint {
                iteration: t,
                label,
            });
            if goal.succeeded(label) {
                success = true;
                iterations_used = t;
                break;
            }
        }
    }

    for (j, &v) in x.iter().enumerate() {
        assert!(
            v >= lo[j] && v <= hi[j],
            "iterate escaped the feasible region at coordinate {j}"
        );
    }
    let final_label = checkpoints.last().expect("at least the start checkpoint").label;
    Ok(AdvResult {
        x_adv: Tensor::vector(x),
        checkpoints,
        success,
        iterations_used,
        final_label,
    })
}

/// Seeded uniform draw over the wrong classes.
pub fn draw_target(target_seed: u64, example: u64, true_label: usize, classes: usize) -> usize {
    use rand::Rng;
    assert!(classes >= 2, "targeted attacks need at least two classes");
    assert!(true_label < classes, "true label out of range");
    let mut stream = rng::stream(&[target_seed, domain::TARGETS, example]);
    let t = stream.random_range(0..classes - 1);
    if t >= true_label {
        t + 1
    } else {
        t
    }
}

/// A rate with its binomial standard error and sample count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStat {
    pub rate: f64,
    pub stderr: f64,
    pub n: usize,
}

impl RateStat {
    pub fn from_count(successes: usize, n: usize) -> Self {
        assert!(n > 0, "a rate needs at least one observation");
        assert!(successes <= n, "more successes than observations");
        let rate = successes as f64 / n as f64;
        Self {
            rate,
            stderr: (rate * (1.0 - rate) / n as f64).sqrt(),
            n,
        }
    }
}
