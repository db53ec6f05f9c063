//! The full directional domain augmentation method: attention-based domain
//! transformer, bi-level episodic meta-training, inference by fast adaptation
//! on simulated target features, and multi-target rollout.
//!
//! Structure of one training episode (all pairs of consecutive domains):
//! for pair (t, t+1), queries from domain t attend over history-domain keys to
//! produce augmented features `z_tilde` that simulate domain t+1; the shared
//! classifier is fast-adapted on `z_tilde` under a cross-entropy +
//! distillation inner loss (teacher = the classifier adapted on domain t's
//! real data, detached); the adapted classifier is evaluated on real domain
//! t+1 data, and that outer loss trains everything — featurizer, transformer,
//! and the classifier initialization — through the adaptation steps.

use crate::datagen::{DomainRole, DomainSamples};
use crate::error::{EdgError, Result};
use crate::graph::{Graph, NodeId};
use crate::nn::{
    cross_entropy, kl_distill, mlp_forward, Activation, MlpNodes, MlpParams, OptimKind, OptimState,
};
use crate::rng::derive_stream;
use crate::tensor::Tensor;
use rand::Rng;
use std::sync::atomic::{AtomicU64, Ordering};

/// Counts every forward evaluation of a teacher network (adaptation steps and
/// logit computations). Lets tests assert that lambda = 1 episodes never
/// touch the teacher.
static TEACHER_FORWARD_EVALS: AtomicU64 = AtomicU64::new(0);

pub fn teacher_eval_count() -> u64 {
    TEACHER_FORWARD_EVALS.load(Ordering::SeqCst)
}

pub fn reset_teacher_eval_count() {
    TEACHER_FORWARD_EVALS.store(0, Ordering::SeqCst);
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

/// Which consecutive-domain pairs an episode trains on: every pair summed
/// (the algorithm's loop) or one uniformly random pair (the prose variant).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairMode {
    AllPairs,
    RandomPair,
}

impl PairMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all_pairs" => Ok(PairMode::AllPairs),
            "random_pair" => Ok(PairMode::RandomPair),
            other => Err(EdgError::Config(format!(
                "unknown pair_mode '{other}' (expected all_pairs or random_pair)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PairMode::AllPairs => "all_pairs",
            PairMode::RandomPair => "random_pair",
        }
    }
}

/// Hyperparameters of the meta-learning pipeline. `inner_steps_src` adapts
/// the teacher on real source-domain data; `inner_steps_aug` adapts the
/// classifier on augmented (simulated next-domain) features, both during
/// training and at inference.
#[derive(Clone, Debug, PartialEq)]
pub struct DdaConfig {
    /// Inner-loop learning rate.
    pub alpha: f64,
    /// Outer-loop learning rate.
    pub beta: f64,
    /// Trade-off between classification and distillation in the inner loss.
    pub lambda: f64,
    /// Distillation temperature.
    pub tau_temp: f64,
    /// Fast-adaptation steps on augmented features (the "target" setting).
    pub inner_steps_aug: usize,
    /// Teacher adaptation steps on real source data (the "source" setting).
    pub inner_steps_src: usize,
    /// Per-domain episode batch size.
    pub batch: usize,
    /// Training episodes.
    pub episodes: usize,
    /// Differentiate through the inner gradient (full meta-gradients) or
    /// treat inner gradients as constants (first-order).
    pub second_order: bool,
    /// Attention history range for pair (t, t+1): domains 1..=t when true
    /// (the equation's reading), 1..t when false (the algorithm listing's).
    pub history_includes_current: bool,
    pub pair_mode: PairMode,
    /// Inference augmentation pool size; 0 means all available queries.
    pub n_infer: usize,
    /// Episodes between source-validation checks for model selection.
    pub val_every: usize,
    /// Outer optimizer.
    pub optimizer: OptimKind,
}

impl DdaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(EdgError::Config(format!(
                "alpha must be > 0, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0) {
            return Err(EdgError::Config(format!(
                "beta must be > 0, got {}",
                self.beta
            )));
        }
        if !(self.tau_temp > 0.0) {
            return Err(EdgError::Config(format!(
                "tau_temp must be > 0, got {}",
                self.tau_temp
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(EdgError::Config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.batch == 0 {
            return Err(EdgError::Config("batch must be >= 1".into()));
        }
        if self.val_every == 0 {
            return Err(EdgError::Config("val_every must be >= 1".into()));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

/// The four attention sub-networks. All share the feature dimension as input;
/// the value and skip nets map back to the feature dimension, and the
/// query/key output dimension normalizes the attention scores.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformerParams {
    pub psi_q: MlpParams,
    pub psi_k: MlpParams,
    pub psi_v: MlpParams,
    pub psi_sc: MlpParams,
}

impl TransformerParams {
    /// Initialize all four sub-nets with the listed layer shape. The value
    /// and skip nets start as the zero function (last layer zeroed) so the
    /// initial augmentation is exactly the identity on queries.
    pub fn init(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || dims.first() != dims.last() {
            return Err(EdgError::Config(format!(
                "transformer dims must map the feature dim to itself, got {dims:?}"
            )));
        }
        let psi_q = MlpParams::init(dims, activation, rng)?;
        let psi_k = MlpParams::init(dims, activation, rng)?;
        let mut psi_v = MlpParams::init(dims, activation, rng)?;
        let mut psi_sc = MlpParams::init(dims, activation, rng)?;
        psi_v.zero_last_layer();
        psi_sc.zero_last_layer();
        Ok(TransformerParams {
            psi_q,
            psi_k,
            psi_v,
            psi_sc,
        })
    }

    /// Attention normalization dimension (query/key output width).
    pub fn d_attn(&self) -> usize {
        self.psi_q.out_dim()
    }

    pub fn nets(&self) -> [(&'static str, &MlpParams); 4] {
        [
            ("psi_q", &self.psi_q),
            ("psi_k", &self.psi_k),
            ("psi_v", &self.psi_v),
            ("psi_sc", &self.psi_sc),
        ]
    }
}

/// All trainable parameter groups.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Featurizer phi (layer dims `[d_in]` = identity, no parameters).
    pub phi: MlpParams,
    pub tf: TransformerParams,
    /// Shared classifier initialization theta_h.
    pub h: MlpParams,
}

impl ModelParams {
    pub fn init(
        phi_dims: &[usize],
        tf_dims: &[usize],
        h_dims: &[usize],
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let phi = MlpParams::init(phi_dims, activation, rng)?;
        let feat = phi.out_dim();
        if tf_dims.first() != Some(&feat) || h_dims.first() != Some(&feat) {
            return Err(EdgError::Config(format!(
                "featurizer output dim {feat} must match transformer input {:?} and classifier input {:?}",
                tf_dims.first(),
                h_dims.first()
            )));
        }
        let tf = TransformerParams::init(tf_dims, activation, rng)?;
        let h = MlpParams::init(h_dims, activation, rng)?;
        Ok(ModelParams { phi, tf, h })
    }

    /// Named parameter tensors in the stable checkpoint order:
    /// phi, psi_q, psi_k, psi_v, psi_sc, h; within each net w0, b0, w1, b1...
    pub fn to_named(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        let mut push = |prefix: &str, p: &MlpParams| {
            for (i, (w, b)) in p.weights.iter().zip(&p.biases).enumerate() {
                out.push((format!("{prefix}.w{i}"), w.clone()));
                out.push((format!("{prefix}.b{i}"), b.clone()));
            }
        };
        push("phi", &self.phi);
        for (name, net) in self.tf.nets() {
            push(name, net);
        }
        push("h", &self.h);
        out
    }

    /// Rebuild from named tensors given the architecture (dims + activation).
    pub fn from_named(
        named: &[(String, Tensor)],
        phi_dims: &[usize],
        tf_dims: &[usize],
        h_dims: &[usize],
        activation: Activation,
    ) -> Result<Self> {
        let lookup = |name: &str| -> Result<Tensor> {
            named
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| EdgError::CheckpointFormat(format!("missing parameter '{name}'")))
        };
        let rebuild = |prefix: &str, dims: &[usize]| -> Result<MlpParams> {
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for i in 0..dims.len().saturating_sub(1) {
                let w = lookup(&format!("{prefix}.w{i}"))?;
                let b = lookup(&format!("{prefix}.b{i}"))?;
                if w.shape() != [dims[i + 1], dims[i]] || b.shape() != [dims[i + 1]] {
                    return Err(EdgError::CheckpointFormat(format!(
                        "parameter '{prefix}.w{i}' shape {:?} does not match dims {dims:?}",
                        w.shape()
                    )));
                }
                weights.push(w);
                biases.push(b);
            }
            Ok(MlpParams {
                layer_dims: dims.to_vec(),
                weights,
                biases,
                activation,
            })
        };
        let phi = rebuild("phi", phi_dims)?;
        let tf = TransformerParams {
            psi_q: rebuild("psi_q", tf_dims)?,
            psi_k: rebuild("psi_k", tf_dims)?,
            psi_v: rebuild("psi_v", tf_dims)?,
            psi_sc: rebuild("psi_sc", tf_dims)?,
        };
        let h = rebuild("h", h_dims)?;
        Ok(ModelParams { phi, tf, h })
    }

    /// Flat mutable views over every parameter, in checkpoint order.
    pub fn param_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        out.extend(self.phi.param_tensors_mut());
        out.extend(self.tf.psi_q.param_tensors_mut());
        out.extend(self.tf.psi_k.param_tensors_mut());
        out.extend(self.tf.psi_v.param_tensors_mut());
        out.extend(self.tf.psi_sc.param_tensors_mut());
        out.extend(self.h.param_tensors_mut());
        out
    }

    pub fn feature_dim(&self) -> usize {
        self.phi.out_dim()
    }
}

/// Graph-side handles for all parameter groups, registered in the same flat
/// order as `ModelParams::param_tensors_mut`.
pub struct ModelNodes {
    pub phi: MlpNodes,
    pub psi_q: MlpNodes,
    pub psi_k: MlpNodes,
    pub psi_v: MlpNodes,
    pub psi_sc: MlpNodes,
    pub h: MlpNodes,
}

impl ModelNodes {
    pub fn build(g: &mut Graph, mp: &ModelParams) -> Self {
        ModelNodes {
            phi: mp.phi.to_graph(g),
            psi_q: mp.tf.psi_q.to_graph(g),
            psi_k: mp.tf.psi_k.to_graph(g),
            psi_v: mp.tf.psi_v.to_graph(g),
            psi_sc: mp.tf.psi_sc.to_graph(g),
            h: mp.h.to_graph(g),
        }
    }

    /// Rebuild handle structure over externally created parameter inputs
    /// (used by the finite-difference harness, which re-registers parameters
    /// itself). `ids` must follow the flat checkpoint order.
    pub fn from_param_ids(arch: &ModelParams, ids: &[NodeId]) -> Result<Self> {
        let mut cursor = 0usize;
        let mut take = |p: &MlpParams| -> Result<MlpNodes> {
            let n = p.weights.len();
            if cursor + 2 * n > ids.len() {
                return Err(EdgError::InvalidArg(format!(
                    "from_param_ids: needed more than {} handles",
                    ids.len()
                )));
            }
            let mut weights = Vec::with_capacity(n);
            let mut biases = Vec::with_capacity(n);
            for i in 0..n {
                weights.push(ids[cursor + 2 * i]);
                biases.push(ids[cursor + 2 * i + 1]);
            }
            cursor += 2 * n;
            Ok(MlpNodes {
                weights,
                biases,
                activation: p.activation,
            })
        };
        let built = ModelNodes {
            phi: take(&arch.phi)?,
            psi_q: take(&arch.tf.psi_q)?,
            psi_k: take(&arch.tf.psi_k)?,
            psi_v: take(&arch.tf.psi_v)?,
            psi_sc: take(&arch.tf.psi_sc)?,
            h: take(&arch.h)?,
        };
        if cursor != ids.len() {
            return Err(EdgError::InvalidArg(format!(
                "from_param_ids: {} handles supplied, {} consumed",
                ids.len(),
                cursor
            )));
        }
        Ok(built)
    }

    pub fn all_param_nodes(&self) -> Vec<NodeId> {
        let mut out = Vec::new();
        out.extend(self.phi.param_nodes());
        out.extend(self.psi_q.param_nodes());
        out.extend(self.psi_k.param_nodes());
        out.extend(self.psi_v.param_nodes());
        out.extend(self.psi_sc.param_nodes());
        out.extend(self.h.param_nodes());
        out
    }

    /// Attention normalization dimension.
    fn d_attn(&self, g: &Graph) -> usize {
        g.value(self.psi_q.weights[self.psi_q.weights.len() - 1]).shape()[0]
    }
}

// ---------------------------------------------------------------------------
// episode batches
// ---------------------------------------------------------------------------

/// One episode's per-domain sample batches (raw inputs; features are computed
/// in-graph so featurizer gradients flow).
#[derive(Clone, Debug)]
pub struct EpisodeBatch {
    /// Per source domain in order: `[B, d_in]` inputs.
    pub x: Vec<Tensor>,
    /// Per source domain in order: `B` labels.
    pub y: Vec<Vec<usize>>,
}

impl EpisodeBatch {
    pub fn n_domains(&self) -> usize {
        self.x.len()
    }
}

/// Draw B distinct samples from every source domain's train split. Rejects
/// any domain not tagged as a source (target isolation).
pub fn sample_episode(
    train: &[DomainSamples],
    b: usize,
    rng: &mut impl Rng,
) -> Result<EpisodeBatch> {
    let mut x = Vec::with_capacity(train.len());
    let mut y = Vec::with_capacity(train.len());
    for dom in train {
        if dom.role != DomainRole::Source {
            return Err(EdgError::TargetLeak { index: dom.t });
        }
        if dom.n() < b {
            return Err(EdgError::InvalidArg(format!(
                "batch size {b} exceeds domain {}'s {} training samples",
                dom.t,
                dom.n()
            )));
        }
        let picks = rand::seq::index::sample(rng, dom.n(), b);
        let d = dom.x.shape()[1];
        let mut data = Vec::with_capacity(b * d);
        let mut labels = Vec::with_capacity(b);
        for i in picks.iter() {
            data.extend_from_slice(&dom.x.data()[i * d..(i + 1) * d]);
            labels.push(dom.y[i]);
        }
        x.push(Tensor::matrix(b, d, data)?);
        y.push(labels);
    }
    Ok(EpisodeBatch { x, y })
}

// ---------------------------------------------------------------------------
// attention ops (graph and value paths)
// ---------------------------------------------------------------------------

/// Scaled dot-product similarity scores between transformed queries and keys:
/// `s[i,j] = <psi_q(query_i), psi_k(key_j)> / sqrt(d_attn)`.
pub fn attention_scores(
    g: &mut Graph,
    query: NodeId,
    keys: NodeId,
    nodes: &ModelNodes,
) -> Result<NodeId> {
    let d = nodes.d_attn(g);
    let q = mlp_forward(g, &nodes.psi_q, query)?;
    let k = mlp_forward(g, &nodes.psi_k, keys)?;
    let kt = g.transpose(k)?;
    let s = g.matmul(q, kt)?;
    g.scalar_mul(s, 1.0 / (d as f64).sqrt())
}

/// Directional transform augmentation: softmax-over-all-history attention to
/// value embeddings plus the skip path `psi_sc(z) + z`.
pub fn transform_augment(
    g: &mut Graph,
    z_t: NodeId,
    history: &[NodeId],
    nodes: &ModelNodes,
) -> Result<NodeId> {
    if history.is_empty() {
        return Err(EdgError::InvalidArg(
            "transform_augment: empty history".into(),
        ));
    }
    let keys = if history.len() == 1 {
        history[0]
    } else {
        g.concat0(history)?
    };
    let scores = attention_scores(g, z_t, keys, nodes)?;
    let weights = g.softmax(scores)?;
    let values = mlp_forward(g, &nodes.psi_v, keys)?;
    let attended = g.matmul(weights, values)?;
    let sc = mlp_forward(g, &nodes.psi_sc, z_t)?;
    let skip = g.add(sc, z_t)?;
    g.add(attended, skip)
}

/// Value-level twin of [`transform_augment`] for gradient-free paths
/// (validation and inference pools). Kept in lockstep by a property test.
pub fn transform_augment_value(
    tf: &TransformerParams,
    z_t: &Tensor,
    history: &[&Tensor],
) -> Result<Tensor> {
    use crate::tensor as tv;
    if history.is_empty() {
        return Err(EdgError::InvalidArg(
            "transform_augment: empty history".into(),
        ));
    }
    let keys = tv::concat0(history)?;
    let q = tf.psi_q.forward_value(z_t)?;
    let k = tf.psi_k.forward_value(&keys)?;
    let s = tv::scalar_mul(
        &tv::matmul(&q, &tv::transpose(&k)?)?,
        1.0 / (tf.d_attn() as f64).sqrt(),
    );
    let w = tv::softmax(&s)?;
    let v = tf.psi_v.forward_value(&keys)?;
    let attended = tv::matmul(&w, &v)?;
    let sc = tf.psi_sc.forward_value(z_t)?;
    tv::add(&attended, &tv::add(&sc, z_t)?)
}

// ---------------------------------------------------------------------------
// inner loop pieces
// ---------------------------------------------------------------------------

/// Teacher forward pass (counted by the detachment instrumentation).
fn teacher_forward(p: &MlpParams, z: &Tensor) -> Result<Tensor> {
    TEACHER_FORWARD_EVALS.fetch_add(1, Ordering::SeqCst);
    p.forward_value(z)
}

/// Plain cross-entropy gradient steps from `theta_h` on real domain data.
/// Returns fresh parameter values; nothing links back to `theta_h`'s graph,
/// so no gradient can flow into the meta-parameters through the teacher.
pub fn teacher_adapt(
    theta_h: &MlpParams,
    z: &Tensor,
    y: &[usize],
    alpha: f64,
    steps: usize,
) -> Result<MlpParams> {
    let mut cur = theta_h.clone();
    for _ in 0..steps {
        if alpha == 0.0 {
            break;
        }
        let mut g = Graph::new();
        let nodes = cur.to_graph(&mut g);
        let zn = g.constant(z.clone());
        TEACHER_FORWARD_EVALS.fetch_add(1, Ordering::SeqCst);
        let logits = nodes.forward(&mut g, zn)?;
        let loss = cross_entropy(&mut g, logits, y)?;
        let ids = nodes.param_nodes();
        let gm = g.backward(loss, &ids, false)?;
        let grads: Vec<Tensor> = ids
            .iter()
            .map(|&id| gm.grad_value(&g, id).cloned())
            .collect::<Result<_>>()?;
        for (param, grad) in cur.param_tensors_mut().into_iter().zip(&grads) {
            for (p, gv) in param.data_mut().iter_mut().zip(grad.data()) {
                *p -= alpha * gv;
            }
        }
    }
    Ok(cur)
}

/// The inner objective on augmented features:
/// `lambda * CE(h(z_aug), y) + (1 - lambda) * KL(teacher || h(z_aug))`.
/// Endpoint values skip the absent term entirely (at lambda = 1 the teacher
/// is never evaluated).
pub fn inner_loss(
    g: &mut Graph,
    z_aug: NodeId,
    y: &[usize],
    teacher_logits: Option<&Tensor>,
    h_cur: &MlpNodes,
    cfg: &DdaConfig,
) -> Result<NodeId> {
    let student = mlp_forward(g, h_cur, z_aug)?;
    let lam = cfg.lambda;
    let ce_part = if lam > 0.0 {
        let ce = cross_entropy(g, student, y)?;
        Some(g.scalar_mul(ce, lam)?)
    } else {
        None
    };
    let kl_part = if lam < 1.0 {
        let t = teacher_logits.ok_or_else(|| {
            EdgError::InvalidArg("inner_loss: lambda < 1 requires teacher logits".into())
        })?;
        let kl = kl_distill(g, t, student, cfg.tau_temp)?;
        Some(g.scalar_mul(kl, 1.0 - lam)?)
    } else {
        None
    };
    match (ce_part, kl_part) {
        (Some(a), Some(b)) => g.add(a, b),
        (Some(a), None) => Ok(a),
        (None, Some(b)) => Ok(b),
        (None, None) => unreachable!("lambda is in [0,1]"),
    }
}

/// Iterate `theta <- theta - alpha * grad(loss)` on the graph. With
/// `second_order` the update chain stays differentiable through the inner
/// gradients; otherwise the gradients enter as constants (the update itself
/// remains differentiable with respect to the starting parameters).
/// `alpha = 0` or `steps = 0` returns the starting handles unchanged.
pub fn fast_adapt(
    g: &mut Graph,
    start: &MlpNodes,
    loss_of: &mut dyn FnMut(&mut Graph, &MlpNodes) -> Result<NodeId>,
    alpha: f64,
    steps: usize,
    second_order: bool,
) -> Result<MlpNodes> {
    let mut cur = start.clone();
    if alpha == 0.0 || steps == 0 {
        return Ok(cur);
    }
    for _ in 0..steps {
        let loss = loss_of(g, &cur)?;
        let ids = cur.param_nodes();
        let gm = g.backward(loss, &ids, second_order)?;
        let mut updated = Vec::with_capacity(ids.len());
        for &id in &ids {
            let grad = gm.grad(id).ok_or_else(|| EdgError::MissingGrad {
                index: id.index(),
                name: "fast_adapt parameter".into(),
            })?;
            let step = g.scalar_mul(grad, alpha)?;
            updated.push(g.sub(id, step)?);
        }
        let n = cur.weights.len();
        cur = MlpNodes {
            weights: updated[..n].to_vec(),
            biases: updated[n..].to_vec(),
            activation: cur.activation,
        };
    }
    Ok(cur)
}

// ---------------------------------------------------------------------------
// episodes
// ---------------------------------------------------------------------------

/// Pre-computed teacher logits per pair index (for the finite-difference
/// harness, which must hold teachers fixed while parameters are perturbed).
pub type FrozenTeachers = Vec<Option<Tensor>>;

/// Build one episode's total outer loss on the graph. `pair_choice` selects a
/// single 0-based pair index (random-pair mode) or all pairs when `None`.
/// Teachers are adapted from the current classifier values unless supplied.
pub fn episode_loss(
    g: &mut Graph,
    nodes: &ModelNodes,
    arch: &ModelParams,
    batch: &EpisodeBatch,
    cfg: &DdaConfig,
    pair_choice: Option<usize>,
    frozen_teachers: Option<&FrozenTeachers>,
) -> Result<NodeId> {
    let t_count = batch.n_domains();
    if t_count < 2 {
        return Err(EdgError::TooFewDomains {
            need: 2,
            got: t_count,
        });
    }
    // Features per domain, in-graph so featurizer gradients flow.
    let mut z = Vec::with_capacity(t_count);
    for x in &batch.x {
        let xc = g.constant(x.clone());
        z.push(mlp_forward(g, &nodes.phi, xc)?);
    }
    let pairs: Vec<usize> = match pair_choice {
        Some(t) => {
            if t + 1 >= t_count {
                return Err(EdgError::InvalidArg(format!(
                    "pair index {t} out of range for {t_count} domains"
                )));
            }
            vec![t]
        }
        None => (0..t_count - 1).collect(),
    };
    let mut total: Option<NodeId> = None;
    for &t in &pairs {
        let hist_end = if cfg.history_includes_current { t + 1 } else { t };
        if hist_end == 0 {
            // Exclusive history mode has nothing to attend to at t = 0.
            continue;
        }
        let z_aug = transform_augment(g, z[t], &z[..hist_end], nodes)?;
        let teacher_logits: Option<Tensor> = if cfg.lambda < 1.0 {
            match frozen_teachers.and_then(|f| f.get(t).cloned()) {
                Some(Some(tl)) => Some(tl),
                _ => {
                    // Adapt a teacher on this domain's real batch from the
                    // classifier's current values (detached by construction).
                    let h_now = mlp_params_from_nodes(g, &nodes.h, &arch.h);
                    let teacher = teacher_adapt(
                        &h_now,
                        g.value(z[t]),
                        &batch.y[t],
                        cfg.alpha,
                        cfg.inner_steps_src,
                    )?;
                    Some(teacher_forward(&teacher, g.value(z[t]))?)
                }
            }
        } else {
            None
        };
        let y_t = batch.y[t].clone();
        let tl = teacher_logits.clone();
        let cfg_inner = cfg.clone();
        let adapted = fast_adapt(
            g,
            &nodes.h,
            &mut |g, cur| inner_loss(g, z_aug, &y_t, tl.as_ref(), cur, &cfg_inner),
            cfg.alpha,
            cfg.inner_steps_aug,
            cfg.second_order,
        )?;
        let outer_logits = mlp_forward(g, &adapted, z[t + 1])?;
        let outer = cross_entropy(g, outer_logits, &batch.y[t + 1])?;
        total = Some(match total {
            Some(acc) => g.add(acc, outer)?,
            None => outer,
        });
    }
    total.ok_or_else(|| {
        EdgError::InvalidArg(
            "episode produced no pairs (exclusive history with T = 2 requires T >= 3)".into(),
        )
    })
}

/// Snapshot an MLP's current values off the graph.
fn mlp_params_from_nodes(g: &Graph, nodes: &MlpNodes, arch: &MlpParams) -> MlpParams {
    MlpParams {
        layer_dims: arch.layer_dims.clone(),
        weights: nodes.weights.iter().map(|&w| g.value(w).clone()).collect(),
        biases: nodes.biases.iter().map(|&b| g.value(b).clone()).collect(),
        activation: arch.activation,
    }
}

/// Run one episode: build the loss, backpropagate to every parameter group,
/// and return (loss value, flat gradients in checkpoint order).
pub fn train_episode(
    mp: &ModelParams,
    batch: &EpisodeBatch,
    cfg: &DdaConfig,
    pair_choice: Option<usize>,
) -> Result<(f64, Vec<Tensor>)> {
    let mut g = Graph::new();
    let nodes = ModelNodes::build(&mut g, mp);
    let loss = episode_loss(&mut g, &nodes, mp, batch, cfg, pair_choice, None)?;
    let loss_val = g.value(loss).item();
    let ids = nodes.all_param_nodes();
    let gm = g.backward(loss, &ids, false)?;
    let grads: Vec<Tensor> = ids
        .iter()
        .map(|&id| gm.grad_value(&g, id).cloned())
        .collect::<Result<_>>()?;
    Ok((loss_val, grads))
}

// ---------------------------------------------------------------------------
// inference path (shared by validation and target evaluation)
// ---------------------------------------------------------------------------

/// Value-level fast adaptation of `theta_h` on a fixed pool (no outer
/// gradients needed outside episodes).
fn fast_adapt_value(
    theta_h: &MlpParams,
    pool: &Tensor,
    labels: &[usize],
    teacher_logits: Option<&Tensor>,
    cfg: &DdaConfig,
) -> Result<MlpParams> {
    let mut cur = theta_h.clone();
    for _ in 0..cfg.inner_steps_aug {
        let mut g = Graph::new();
        let nodes = cur.to_graph(&mut g);
        let pn = g.constant(pool.clone());
        let loss = inner_loss(&mut g, pn, labels, teacher_logits, &nodes, cfg)?;
        let ids = nodes.param_nodes();
        let gm = g.backward(loss, &ids, false)?;
        let grads: Vec<Tensor> = ids
            .iter()
            .map(|&id| gm.grad_value(&g, id).cloned())
            .collect::<Result<_>>()?;
        for (param, grad) in cur.param_tensors_mut().into_iter().zip(&grads) {
            for (p, gv) in param.data_mut().iter_mut().zip(grad.data()) {
                *p -= cfg.alpha * gv;
            }
        }
    }
    Ok(cur)
}

/// Fraction of rows whose argmax logit matches the label.
pub fn accuracy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    let shape = logits.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(EdgError::BadShape {
            op: "accuracy",
            shape: shape.to_vec(),
            detail: format!("expected [{}, k] logits", labels.len()),
        });
    }
    let k = shape[1];
    let mut hits = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = &logits.data()[i * k..(i + 1) * k];
        let pred = row
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(j, _)| j)
            .unwrap();
        if pred == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// One simulate-and-adapt step of the inference path: build the augmentation
/// pool from `queries` attending over `history`, then fast-adapt `theta_h` on
/// the pool under the inner loss with the supplied teacher.
fn adapt_on_pool(
    mp: &ModelParams,
    queries: &Tensor,
    labels: &[usize],
    history: &[&Tensor],
    teacher: &MlpParams,
    cfg: &DdaConfig,
) -> Result<(MlpParams, Tensor)> {
    let pool = transform_augment_value(&mp.tf, queries, history)?;
    let teacher_logits = if cfg.lambda < 1.0 {
        Some(teacher_forward(teacher, queries)?)
    } else {
        None
    };
    let adapted = fast_adapt_value(&mp.h, &pool, labels, teacher_logits.as_ref(), cfg)?;
    Ok((adapted, pool))
}

/// Truncate a pool to the configured inference size (0 = all).
fn pool_limit(cfg: &DdaConfig, available: usize) -> usize {
    if cfg.n_infer == 0 {
        available
    } else {
        cfg.n_infer.min(available)
    }
}

/// Fast-adapt toward target horizon `k >= 1` and evaluate on the real target
/// domain. Returns the adapted classifier and its accuracy.
///
/// Horizon 1 queries domain T's training features over all-source history
/// with a teacher adapted on domain T's validation split; deeper horizons
/// re-apply the transformer to the previous pool (history grows by each
/// earlier pool, the teacher is the previously adapted classifier), with
/// labels carried from the originating samples throughout.
pub fn infer_target(
    mp: &ModelParams,
    train: &[DomainSamples],
    val: &[DomainSamples],
    targets: &[DomainSamples],
    cfg: &DdaConfig,
    horizon: usize,
) -> Result<(MlpParams, f64)> {
    if horizon == 0 || horizon > targets.len() {
        return Err(EdgError::MissingTarget {
            horizon,
            available: targets.len(),
        });
    }
    if train.is_empty() {
        return Err(EdgError::TooFewDomains { need: 2, got: 0 });
    }
    let src_feats: Vec<Tensor> = train
        .iter()
        .map(|d| mp.phi.forward_value(&d.x))
        .collect::<Result<_>>()?;
    let last_tr = train.last().unwrap();
    let last_va = val.last().ok_or_else(|| {
        EdgError::InvalidArg("infer_target: validation split required for the teacher".into())
    })?;
    let n = pool_limit(cfg, src_feats.last().unwrap().shape()[0]);
    let mut queries = src_feats.last().unwrap().rows_slice(0, n)?;
    let labels: Vec<usize> = last_tr.y[..n].to_vec();
    let mut teacher = teacher_adapt(
        &mp.h,
        &mp.phi.forward_value(&last_va.x)?,
        &last_va.y,
        cfg.alpha,
        cfg.inner_steps_src,
    )?;
    let mut extra_pools: Vec<Tensor> = Vec::new();
    let mut adapted = mp.h.clone();
    for _k in 1..=horizon {
        let history: Vec<&Tensor> = src_feats.iter().chain(extra_pools.iter()).collect();
        let (a, pool) = adapt_on_pool(mp, &queries, &labels, &history, &teacher, cfg)?;
        adapted = a;
        teacher = adapted.clone();
        queries = pool.clone();
        extra_pools.push(pool);
    }
    let target = &targets[horizon - 1];
    let logits = adapted.forward_value(&mp.phi.forward_value(&target.x)?)?;
    let acc = accuracy(&logits, &target.y)?;
    Ok((adapted, acc))
}

/// Model-selection metric: the deployment procedure replayed at every source
/// horizon. For each source domain t >= 2, simulate it from domain t-1
/// (queries from t-1's train split, history = domains 1..t-1, teacher
/// adapted on t-1's validation split), fast-adapt, and score domain t's
/// validation split. Returns the mean over horizons.
pub fn validate_sources(
    mp: &ModelParams,
    train: &[DomainSamples],
    val: &[DomainSamples],
    cfg: &DdaConfig,
) -> Result<f64> {
    let t_count = train.len();
    if t_count < 2 {
        return Err(EdgError::TooFewDomains {
            need: 2,
            got: t_count,
        });
    }
    let feats: Vec<Tensor> = train
        .iter()
        .map(|d| mp.phi.forward_value(&d.x))
        .collect::<Result<_>>()?;
    let mut accs = Vec::with_capacity(t_count - 1);
    for t in 1..t_count {
        let n = pool_limit(cfg, feats[t - 1].shape()[0]);
        let queries = feats[t - 1].rows_slice(0, n)?;
        let labels = &train[t - 1].y[..n];
        let teacher = teacher_adapt(
            &mp.h,
            &mp.phi.forward_value(&val[t - 1].x)?,
            &val[t - 1].y,
            cfg.alpha,
            cfg.inner_steps_src,
        )?;
        let history: Vec<&Tensor> = feats[..t].iter().collect();
        let (adapted, _) = adapt_on_pool(mp, &queries, labels, &history, &teacher, cfg)?;
        let logits = adapted.forward_value(&mp.phi.forward_value(&val[t].x)?)?;
        accs.push(accuracy(&logits, &val[t].y)?);
    }
    Ok(accs.iter().sum::<f64>() / accs.len() as f64)
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

/// Per-run training artifacts.
#[derive(Clone, Debug)]
pub struct TrainLog {
    /// (episode, source-validation accuracy) at each check.
    pub val_curve: Vec<(usize, f64)>,
    /// Episodes skipped because the loss went non-finite.
    pub aborted_episodes: usize,
}

/// Best-validation snapshot and its provenance.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub best_val: f64,
    pub episodes_to_best: usize,
    pub log: TrainLog,
}

/// Meta-train on source train splits with best-snapshot selection by the
/// source-validation metric. Deterministic given (initial params, config,
/// seed).
pub fn train(
    init: &ModelParams,
    train_split: &[DomainSamples],
    val_split: &[DomainSamples],
    cfg: &DdaConfig,
    seed: u64,
) -> Result<TrainedModel> {
    cfg.validate()?;
    if train_split.len() < 2 {
        return Err(EdgError::TooFewDomains {
            need: 2,
            got: train_split.len(),
        });
    }
    let mut mp = init.clone();
    let mut opt = OptimState::new(cfg.optimizer, cfg.beta);
    let mut rng = derive_stream(seed, "dda.train", 0);
    let mut log = TrainLog {
        val_curve: Vec::new(),
        aborted_episodes: 0,
    };
    let mut best: Option<(f64, ModelParams, usize)> = None;
    for ep in 1..=cfg.episodes {
        let batch = sample_episode(train_split, cfg.batch, &mut rng)?;
        let pair_choice = match cfg.pair_mode {
            PairMode::AllPairs => None,
            PairMode::RandomPair => Some(rng.random_range(0..train_split.len() - 1)),
        };
        match train_episode(&mp, &batch, cfg, pair_choice) {
            Ok((_loss, grads)) => {
                let mut params = mp.param_tensors_mut();
                let grad_refs: Vec<&Tensor> = grads.iter().collect();
                opt.step(&mut params, &grad_refs)?;
            }
            Err(EdgError::NonFinite { op }) => {
                log::warn!("episode {ep}: non-finite value in {op}; skipping update");
                log.aborted_episodes += 1;
                continue;
            }
            Err(EdgError::NonFiniteLoss { context }) => {
                log::warn!("episode {ep}: non-finite loss at {context}; skipping update");
                log.aborted_episodes += 1;
                continue;
            }
            Err(e) => return Err(e),
        }
        if ep % cfg.val_every == 0 || ep == cfg.episodes {
            let acc = validate_sources(&mp, train_split, val_split, cfg)?;
            log.val_curve.push((ep, acc));
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, mp.clone(), ep));
            }
        }
    }
    let (best_val, params, episodes_to_best) = match best {
        Some(b) => b,
        // episodes = 0: return the initial parameters with an honest metric.
        None => (
            validate_sources(&mp, train_split, val_split, cfg)?,
            mp,
            0,
        ),
    };
    Ok(TrainedModel {
        params,
        best_val,
        episodes_to_best,
        log,
    })
}
