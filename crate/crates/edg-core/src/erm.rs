//! Pooled empirical risk minimization baseline: all source train data merged,
//! plain cross-entropy minimization on the featurizer∘classifier stack, model
//! selection by pooled source validation accuracy.

use crate::datagen::{DomainRole, DomainSamples};
use crate::dda::accuracy;
use crate::error::{EdgError, Result};
use crate::graph::Graph;
use crate::nn::{cross_entropy, MlpParams, OptimKind, OptimState};
use crate::rng::derive_stream;
use crate::tensor::Tensor;

/// Baseline hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ErmConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub optimizer: OptimKind,
    /// Epochs between pooled-validation checks for model selection.
    pub val_every: usize,
}

impl ErmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(EdgError::Config(format!("lr must be > 0, got {}", self.lr)));
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

/// Training artifacts: best-validation snapshot and its provenance.
#[derive(Clone, Debug)]
pub struct ErmTrained {
    pub params: MlpParams,
    pub best_val: f64,
    /// Optimizer steps taken up to the selected snapshot.
    pub steps_to_best: usize,
    /// (epoch, pooled validation accuracy) at each check.
    pub val_curve: Vec<(usize, f64)>,
}

/// Concatenate every source domain's samples in domain order. Rejects any
/// domain not tagged as a source (target isolation).
pub fn pool_sources(domains: &[DomainSamples]) -> Result<(Tensor, Vec<usize>)> {
    if domains.is_empty() {
        return Err(EdgError::TooFewDomains { need: 1, got: 0 });
    }
    let mut parts: Vec<&Tensor> = Vec::with_capacity(domains.len());
    let mut labels = Vec::new();
    for dom in domains {
        if dom.role != DomainRole::Source {
            return Err(EdgError::TargetLeak { index: dom.t });
        }
        parts.push(&dom.x);
        labels.extend_from_slice(&dom.y);
    }
    let x = crate::tensor::concat0(&parts)?;
    Ok((x, labels))
}

/// Accuracy of a plain classifier stack on one domain.
pub fn eval_on(params: &MlpParams, dom: &DomainSamples) -> Result<f64> {
    let logits = params.forward_value(&dom.x)?;
    accuracy(&logits, &dom.y)
}

/// Minibatch cross-entropy training on pooled source data with best-snapshot
/// selection on the pooled validation accuracy. Deterministic given
/// (initial params, config, seed).
pub fn train_erm(
    init: &MlpParams,
    train: &[DomainSamples],
    val: &[DomainSamples],
    cfg: &ErmConfig,
    seed: u64,
) -> Result<ErmTrained> {
    cfg.validate()?;
    let (tr_x, tr_y) = pool_sources(train)?;
    let (va_x, va_y) = pool_sources(val)?;
    let n = tr_y.len();
    let d = tr_x.shape()[1];
    let mut params = init.clone();
    let mut opt = OptimState::new(cfg.optimizer, cfg.lr);
    let mut rng = derive_stream(seed, "erm.train", 0);
    let mut best: Option<(f64, MlpParams, usize)> = None;
    let mut val_curve = Vec::new();
    let mut steps = 0usize;
    let pooled_val_acc = |p: &MlpParams| -> Result<f64> {
        let logits = p.forward_value(&va_x)?;
        accuracy(&logits, &va_y)
    };
    for epoch in 1..=cfg.epochs {
        let order = rand::seq::index::sample(&mut rng, n, n);
        let order: Vec<usize> = order.iter().collect();
        for chunk in order.chunks(cfg.batch) {
            let mut data = Vec::with_capacity(chunk.len() * d);
            let mut labels = Vec::with_capacity(chunk.len());
            for &i in chunk {
                data.extend_from_slice(&tr_x.data()[i * d..(i + 1) * d]);
                labels.push(tr_y[i]);
            }
            let xb = Tensor::matrix(chunk.len(), d, data)?;
            let mut g = Graph::new();
            let nodes = params.to_graph(&mut g);
            let xn = g.constant(xb);
            let logits = nodes.forward(&mut g, xn)?;
            let loss = cross_entropy(&mut g, logits, &labels)?;
            let ids = nodes.param_nodes();
            let gm = g.backward(loss, &ids, false)?;
            let grads: Vec<Tensor> = ids
                .iter()
                .map(|&id| gm.grad_value(&g, id).cloned())
                .collect::<Result<_>>()?;
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            let mut tensors = params.param_tensors_mut();
            opt.step(&mut tensors, &grad_refs)?;
            steps += 1;
        }
        if epoch % cfg.val_every == 0 || epoch == cfg.epochs {
            let acc = pooled_val_acc(&params)?;
            val_curve.push((epoch, acc));
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, params.clone(), steps));
            }
        }
    }
    let (best_val, params, steps_to_best) = match best {
        Some(b) => b,
        None => (pooled_val_acc(&params)?, params, 0),
    };
    Ok(ErmTrained {
        params,
        best_val,
        steps_to_best,
        val_curve,
    })
}
