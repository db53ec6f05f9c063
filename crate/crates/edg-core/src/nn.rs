//! Parameterized building blocks: multilayer perceptrons, classification and
//! distillation losses, and the sgd/adam optimizers.
//!
//! The same [`MlpParams`] type serves the featurizer, the classifier, and the
//! four domain-transformer sub-networks. A zero-layer MLP (`dims = [d]`) is
//! the identity function, which is how the toy featurizers are configured.

use crate::error::{EdgError, Result};
use crate::graph::{Graph, NodeId};
use crate::tensor::{self, Tensor};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(EdgError::Config(format!(
                "unknown activation '{other}' (expected relu|tanh|identity)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

/// An affine-activation stack. `weights[i]` has shape `[dims[i+1], dims[i]]`,
/// biases `[dims[i+1]]`; the activation is applied between layers, never after
/// the last.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Tensor>,
    pub biases: Vec<Tensor>,
    pub activation: Activation,
}

/// Graph handles for one MLP's parameters within an episode graph.
#[derive(Clone, Debug)]
pub struct MlpNodes {
    pub weights: Vec<NodeId>,
    pub biases: Vec<NodeId>,
    pub activation: Activation,
}

impl MlpParams {
    /// Initialize with uniform fan-in scaling: every weight and bias of a
    /// layer with `fan_in` inputs is drawn from U(-1/sqrt(fan_in),
    /// +1/sqrt(fan_in)), deterministically from `rng`.
    pub fn init(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.is_empty() {
            return Err(EdgError::InvalidArg(
                "MlpParams::init: dims must be non-empty".into(),
            ));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for win in dims.windows(2) {
            let (fan_in, fan_out) = (win[0], win[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let b: Vec<f64> = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            weights.push(Tensor::matrix(fan_out, fan_in, w)?);
            biases.push(Tensor::vector(b));
        }
        Ok(MlpParams {
            layer_dims: dims.to_vec(),
            weights,
            biases,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Zero the last layer's weight and bias (used to start the transformer's
    /// value/skip nets as the zero function).
    pub fn zero_last_layer(&mut self) {
        if let Some(w) = self.weights.last_mut() {
            w.data_mut().fill(0.0);
        }
        if let Some(b) = self.biases.last_mut() {
            b.data_mut().fill(0.0);
        }
    }

    /// Register all parameters on a graph.
    pub fn to_graph(&self, g: &mut Graph) -> MlpNodes {
        MlpNodes {
            weights: self.weights.iter().map(|w| g.input(w.clone())).collect(),
            biases: self.biases.iter().map(|b| g.input(b.clone())).collect(),
            activation: self.activation,
        }
    }

    /// Value-level forward pass (no graph, no gradients).
    pub fn forward_value(&self, x: &Tensor) -> Result<Tensor> {
        let mut cur = x.clone();
        for (i, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let wt = tensor::transpose(w)?;
            let lin = tensor::matmul(&cur, &wt)?;
            let bb = tensor::bcast_rows(b, lin.shape()[0])?;
            cur = tensor::add(&lin, &bb)?;
            if i + 1 < self.weights.len() {
                cur = match self.activation {
                    Activation::Relu => tensor::relu(&cur),
                    Activation::Tanh => tensor::tanh(&cur),
                    Activation::Identity => cur,
                };
            }
        }
        Ok(cur)
    }

    /// Flat parameter views in a stable order (w0, b0, w1, b1, ...).
    pub fn param_tensors(&self) -> Vec<&Tensor> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.param_tensors().iter().map(|t| t.len()).sum()
    }
}

impl MlpNodes {
    /// Parameter handles in the same stable order as `MlpParams::param_tensors`.
    pub fn param_nodes(&self) -> Vec<NodeId> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(&w, &b)| [w, b])
            .collect()
    }

    /// Forward pass on the graph: `x` is `[batch, in_dim]`.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let mut cur = x;
        let n = self.weights.len();
        for i in 0..n {
            let wt = g.transpose(self.weights[i])?;
            let lin = g.matmul(cur, wt)?;
            let rows = g.value(lin).shape()[0];
            let bb = g.bcast_rows(self.biases[i], rows)?;
            cur = g.add(lin, bb)?;
            if i + 1 < n {
                cur = match self.activation {
                    Activation::Relu => g.relu(cur)?,
                    Activation::Tanh => g.tanh(cur)?,
                    Activation::Identity => cur,
                };
            }
        }
        Ok(cur)
    }
}

/// Standalone forward named per the module's operation list.
pub fn mlp_forward(g: &mut Graph, p: &MlpNodes, x: NodeId) -> Result<NodeId> {
    p.forward(g, x)
}

/// Mean over the batch of -log softmax(logits)[label].
pub fn cross_entropy(g: &mut Graph, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
    let shape = g.value(logits).shape().to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(EdgError::BadShape {
            op: "cross_entropy",
            shape,
            detail: format!("expected [{}, k] logits", labels.len()),
        });
    }
    let ls = g.log_softmax(logits)?;
    let picked = g.pick_row(ls, labels)?;
    let s = g.sum(picked)?;
    g.scalar_mul(s, -1.0 / labels.len() as f64)
}

/// Value-level cross entropy (used by value-only paths, e.g. the teacher).
pub fn cross_entropy_value(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let ls = tensor::log_softmax(logits)?;
    let picked = tensor::pick_row(&ls, labels)?;
    // Same rounding order as the graph path so value- and graph-side losses
    // agree bit-for-bit.
    Ok(picked.data().iter().sum::<f64>() * (-1.0 / labels.len() as f64))
}

/// Mean over the batch of D_KL(softmax(teacher/tau) || softmax(student/tau)).
///
/// The teacher side is a plain tensor, not a graph node: detachment is
/// enforced by the type, no gradient can flow into whatever produced it.
/// Temperature follows the standard distillation reading softmax(logits/tau).
pub fn kl_distill(
    g: &mut Graph,
    teacher_logits: &Tensor,
    student_logits: NodeId,
    tau: f64,
) -> Result<NodeId> {
    if tau <= 0.0 {
        return Err(EdgError::InvalidArg(format!(
            "kl_distill: tau must be > 0, got {tau}"
        )));
    }
    let s_shape = g.value(student_logits).shape().to_vec();
    if teacher_logits.shape() != s_shape.as_slice() {
        return Err(EdgError::ShapeMismatch {
            op: "kl_distill",
            lhs: teacher_logits.shape().to_vec(),
            rhs: s_shape,
        });
    }
    let b = teacher_logits.shape()[0] as f64;
    let t_scaled = tensor::scalar_mul(teacher_logits, 1.0 / tau);
    let p = tensor::softmax(&t_scaled)?;
    let lp = tensor::log_softmax(&t_scaled)?;
    // sum p ⊙ log p computed value-side; p enters the graph as a constant.
    let plogp: f64 = p.data().iter().zip(lp.data()).map(|(a, b)| a * b).sum();
    let p_const = g.constant(p);
    let s_scaled = g.scalar_mul(student_logits, 1.0 / tau)?;
    let s_ls = g.log_softmax(s_scaled)?;
    let cross = g.mul(p_const, s_ls)?;
    let cross_sum = g.sum(cross)?;
    let neg = g.scalar_mul(cross_sum, -1.0)?;
    let kl_sum = g.scalar_add(neg, plogp)?;
    g.scalar_mul(kl_sum, 1.0 / b)
}

/// Value-level counterpart of [`kl_distill`].
pub fn kl_distill_value(teacher_logits: &Tensor, student_logits: &Tensor, tau: f64) -> Result<f64> {
    let t = tensor::scalar_mul(teacher_logits, 1.0 / tau);
    let s = tensor::scalar_mul(student_logits, 1.0 / tau);
    let p = tensor::softmax(&t)?;
    let lp = tensor::log_softmax(&t)?;
    let ls = tensor::log_softmax(&s)?;
    let b = teacher_logits.shape()[0] as f64;
    Ok(p.data()
        .iter()
        .zip(lp.data().iter().zip(ls.data()))
        .map(|(pv, (lpv, lsv))| pv * (lpv - lsv))
        .sum::<f64>()
        / b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimKind {
    Sgd,
    Adam,
}

impl OptimKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimKind::Sgd),
            "adam" => Ok(OptimKind::Adam),
            other => Err(EdgError::Config(format!(
                "unknown optimizer '{other}' (expected sgd|adam)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimKind::Sgd => "sgd",
            OptimKind::Adam => "adam",
        }
    }
}

/// Optimizer state over a fixed, ordered parameter list.
#[derive(Clone, Debug)]
pub struct OptimState {
    pub kind: OptimKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimState {
    pub fn sgd(lr: f64) -> Self {
        OptimState {
            kind: OptimKind::Sgd,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: vec![],
            v: vec![],
        }
    }

    pub fn adam(lr: f64) -> Self {
        OptimState {
            kind: OptimKind::Adam,
            ..OptimState::sgd(lr)
        }
    }

    pub fn new(kind: OptimKind, lr: f64) -> Self {
        match kind {
            OptimKind::Sgd => OptimState::sgd(lr),
            OptimKind::Adam => OptimState::adam(lr),
        }
    }

    /// One update over all parameters. `grads` must cover `params` in order.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
        if grads.len() != params.len() {
            return Err(EdgError::MissingGrad {
                index: grads.len().min(params.len()),
                name: format!("{} params, {} grads", params.len(), grads.len()),
            });
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() {
                return Err(EdgError::ShapeMismatch {
                    op: "opt_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            let _ = i;
        }
        self.step_count += 1;
        match self.kind {
            OptimKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                        *pv -= self.lr * gv;
                    }
                }
            }
            OptimKind::Adam => {
                if self.m.is_empty() {
                    self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
                    self.v = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
                }
                let t = self.step_count as i32;
                let bc1 = 1.0 - self.beta1.powi(t);
                let bc2 = 1.0 - self.beta2.powi(t);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    for (((pv, gv), mv), vv) in p
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(m.data_mut().iter_mut())
                        .zip(v.data_mut().iter_mut())
                    {
                        *mv = self.beta1 * *mv + (1.0 - self.beta1) * gv;
                        *vv = self.beta2 * *vv + (1.0 - self.beta2) * gv * gv;
                        let mhat = *mv / bc1;
                        let vhat = *vv / bc2;
                        *pv -= self.lr * mhat / (vhat.sqrt() + self.eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Spec-named wrapper over [`OptimState::step`].
pub fn opt_step(state: &mut OptimState, params: &mut [&mut Tensor], grads: &[&Tensor]) -> Result<()> {
    state.step(params, grads)
}
