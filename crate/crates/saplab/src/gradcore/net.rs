//! Dense layers, taped forward passes, and reverse-mode gradients.
//!
//! The forward pass can interpose an elementwise "stage" transform after
//! each hidden activation (the mechanism activation pruning plugs into),
//! and the backward pass can override how recorded stages are treated,
//! which is what makes straight-through gradient substitution expressible.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::gradcore::tensor::Tensor;

/// One dense layer. Weights are row-major `[in_dim, out_dim]`; `relu`
/// selects the activation (`max(0, .)` or identity).
#[derive(Debug, Clone)]
pub struct Layer {
    weights: Tensor,
    bias: Tensor,
    relu: bool,
}

impl Layer {
    pub fn new(weights: Tensor, bias: Tensor, relu: bool) -> Result<Self> {
        if weights.shape().len() != 2 {
            return Err(Error::ShapeMismatch {
                context: "Layer::new weights",
                expected: vec![2],
                got: vec![weights.shape().len()],
            });
        }
        let out_dim = weights.shape()[1];
        if bias.shape() != [out_dim] {
            return Err(Error::ShapeMismatch {
                context: "Layer::new bias",
                expected: vec![out_dim],
                got: bias.shape().to_vec(),
            });
        }
        Ok(Self {
            weights,
            bias,
            relu,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn out_dim(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn relu(&self) -> bool {
        self.relu
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.data_mut()
    }

    pub(crate) fn bias_mut(&mut self) -> &mut [f64] {
        self.bias.data_mut()
    }
}

/// Ordered dense layers; the differentiable object everything else wraps.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::ShapeMismatch {
                    context: "Network::new layer chain",
                    expected: vec![w[0].out_dim()],
                    got: vec![w[1].in_dim()],
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }
}

/// What one layer saw during a forward pass.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// The vector the layer consumed (previous stage output, or the input).
    pub input: Vec<f64>,
    /// Post-activation output, before any stage transform.
    pub output: Vec<f64>,
    /// Elementwise multipliers a stage applied to `output` to form the next
    /// layer's input; `None` when no stage ran here.
    pub stage_factors: Option<Vec<f64>>,
}

/// Cached per-layer state from one forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    pub layers: Vec<LayerTrace>,
}

/// Substitute backward rule for a recorded stage.
///
/// `MaskScale` multiplies the incoming gradient by the recorded stage
/// factors, which is the exact derivative of the stage and identical to
/// passing no override. `IdentityThrough` lets the gradient through as if
/// the stage had not run (a no-op on layers without a recorded stage).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackwardRule {
    IdentityThrough,
    MaskScale,
}

pub type Overrides = BTreeMap<usize, BackwardRule>;

/// `out[j] += sum_a x[a] * w[a, j]` with `w` row-major `[x.len(), out.len()]`.
fn matvec_acc(out: &mut [f64], w: &[f64], x: &[f64]) {
    let o = out.len();
    debug_assert_eq!(w.len(), x.len() * o);
    for (a, &xa) in x.iter().enumerate() {
        // Activations are often exactly zero (ReLU, pruning); skipping the
        // row changes nothing numerically and saves a large share of work.
        if xa == 0.0 {
            continue;
        }
        let row = &w[a * o..(a + 1) * o];
        for (y, &wj) in out.iter_mut().zip(row) {
            *y += xa * wj;
        }
    }
}

/// `g_in[a] = sum_j w[a, j] * g[j]`.
fn matvec_transpose(w: &[f64], g: &[f64], in_dim: usize) -> Vec<f64> {
    let o = g.len();
    debug_assert_eq!(w.len(), in_dim * o);
    let mut out = vec![0.0; in_dim];
    for (a, y) in out.iter_mut().enumerate() {
        let row = &w[a * o..(a + 1) * o];
        let mut acc = 0.0;
        for (&wj, &gj) in row.iter().zip(g) {
            acc += wj * gj;
        }
        *y = acc;
    }
    out
}

/// Clean forward pass: `(logits, tape)`.
pub fn forward(net: &Network, x: &Tensor) -> Result<(Tensor, Tape)> {
    forward_staged(net, x, |_, _| None)
}

/// Forward pass with a stage hook.
///
/// After each hidden layer's activation the hook sees `(layer_index, output)`
/// and may return elementwise multipliers to apply before the next layer
/// consumes the vector. The hook is not invoked for the final layer; logits
/// are returned untransformed.
pub fn forward_staged<F>(net: &Network, x: &Tensor, mut stage: F) -> Result<(Tensor, Tape)>
where
    F: FnMut(usize, &[f64]) -> Option<Vec<f64>>,
{
    if x.shape() != [net.input_dim()] {
        return Err(Error::ShapeMismatch {
            context: "forward input",
            expected: vec![net.input_dim()],
            got: x.shape().to_vec(),
        });
    }
    let depth = net.depth();
    let mut traces = Vec::with_capacity(depth);
    let mut cur = x.data().to_vec();
    for (i, layer) in net.layers().iter().enumerate() {
        let input = cur;
        let mut out = layer.bias().data().to_vec();
        matvec_acc(&mut out, layer.weights().data(), &input);
        if layer.relu() {
            for v in &mut out {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        let mut factors = None;
        if i + 1 < depth {
            if let Some(f) = stage(i, &out) {
                assert_eq!(
                    f.len(),
                    out.len(),
                    "stage factors must match layer width ({} vs {})",
                    f.len(),
                    out.len()
                );
                let mut staged = Vec::with_capacity(out.len());
                for (&h, &fj) in out.iter().zip(&f) {
                    staged.push(h * fj);
                }
                factors = Some(f);
                cur = staged;
            } else {
                cur = out.clone();
            }
        } else {
            cur = out.clone();
        }
        traces.push(LayerTrace {
            input,
            output: out,
            stage_factors: factors,
        });
    }
    Ok((Tensor::vector(cur), Tape { layers: traces }))
}

fn check_backward_args(
    net: &Network,
    tape: &Tape,
    loss_grad: &Tensor,
    overrides: &Overrides,
) -> Result<()> {
    if tape.layers.len() != net.depth() {
        return Err(Error::ShapeMismatch {
            context: "backward tape depth",
            expected: vec![net.depth()],
            got: vec![tape.layers.len()],
        });
    }
    if loss_grad.shape() != [net.output_dim()] {
        return Err(Error::ShapeMismatch {
            context: "backward loss gradient",
            expected: vec![net.output_dim()],
            got: loss_grad.shape().to_vec(),
        });
    }
    for (&i, rule) in overrides {
        if i >= net.depth() {
            return Err(Error::Config(format!(
                "backward override references layer {i}, network has {} layers",
                net.depth()
            )));
        }
        if *rule == BackwardRule::MaskScale && tape.layers[i].stage_factors.is_none() {
            return Err(Error::Config(format!(
                "mask-scale override on layer {i}, but the tape recorded no stage there"
            )));
        }
    }
    Ok(())
}

/// Applies the stage and activation parts of the chain rule for layer `i`,
/// mutating `g` from d(loss)/d(stage output) to d(loss)/d(pre-activation).
fn pull_through_activation(trace: &LayerTrace, relu: bool, rule: Option<BackwardRule>, g: &mut [f64]) {
    if let Some(factors) = &trace.stage_factors {
        match rule {
            Some(BackwardRule::IdentityThrough) => {}
            // Exact derivative of the recorded stage.
            _ => {
                for (gj, &fj) in g.iter_mut().zip(factors) {
                    *gj *= fj;
                }
            }
        }
    }
    if relu {
        for (gj, &h) in g.iter_mut().zip(&trace.output) {
            if h <= 0.0 {
                *gj = 0.0;
            }
        }
    }
}

/// Reverse-mode gradient of the recorded computation with respect to the
/// input. With empty overrides this is the exact chain-rule gradient of the
/// forward pass the tape recorded, stages included.
pub fn backward(
    net: &Network,
    tape: &Tape,
    loss_grad: &Tensor,
    overrides: &Overrides,
) -> Result<Tensor> {
    check_backward_args(net, tape, loss_grad, overrides)?;
    let mut g = loss_grad.data().to_vec();
    for i in (0..net.depth()).rev() {
        let layer = &net.layers()[i];
        let trace = &tape.layers[i];
        pull_through_activation(trace, layer.relu(), overrides.get(&i).copied(), &mut g);
        g = matvec_transpose(layer.weights().data(), &g, layer.in_dim());
    }
    Ok(Tensor::vector(g))
}

/// Per-layer parameter gradients from one recorded pass.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
}

/// Reverse-mode gradients with respect to every weight and bias (training
/// path; tapes recorded from clean forwards).
pub fn backward_params(net: &Network, tape: &Tape, loss_grad: &Tensor) -> Result<ParamGrads> {
    let overrides = Overrides::new();
    check_backward_args(net, tape, loss_grad, &overrides)?;
    let depth = net.depth();
    let mut weights = vec![Tensor::zeros(vec![0]); depth];
    let mut biases = vec![Tensor::zeros(vec![0]); depth];
    let mut g = loss_grad.data().to_vec();
    for i in (0..depth).rev() {
        let layer = &net.layers()[i];
        let trace = &tape.layers[i];
        pull_through_activation(trace, layer.relu(), None, &mut g);
        let (in_dim, out_dim) = (layer.in_dim(), layer.out_dim());
        let mut dw = vec![0.0; in_dim * out_dim];
        for (a, &xa) in trace.input.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            let row = &mut dw[a * out_dim..(a + 1) * out_dim];
            for (d, &gj) in row.iter_mut().zip(&g) {
                *d = xa * gj;
            }
        }
        weights[i] = Tensor::matrix(in_dim, out_dim, dw)?;
        biases[i] = Tensor::vector(g.clone());
        g = matvec_transpose(layer.weights().data(), &g, in_dim);
    }
    Ok(ParamGrads { weights, biases })
}
