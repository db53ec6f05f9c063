//! Deterministic generators for the synthetic evolving-domain benchmarks and
//! the train/validation split.
//!
//! Generators are pure functions of (parameters, seed): identical inputs give
//! bit-identical datasets. Each domain draws from its own derived RNG stream,
//! so changing one domain's sample count never shifts another's draws.

use crate::error::{EdgError, Result};
use crate::rng::derive_stream;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Source domains feed training and model selection; target domains are
/// evaluation-only. The tag travels with every batch so training paths can
/// reject leaked target data.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRole {
    Source,
    Target,
}

/// One domain's labeled samples.
#[derive(Clone, Debug, PartialEq)]
pub struct DomainSamples {
    /// 1-based domain index within the evolving sequence.
    pub t: usize,
    pub role: DomainRole,
    /// `[n, d_in]` features.
    pub x: Tensor,
    /// Labels in `0..n_classes`.
    pub y: Vec<usize>,
}

impl DomainSamples {
    pub fn n(&self) -> usize {
        self.y.len()
    }
}

/// Generator name + parameters, serialized into dataset files and result rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: u64,
    pub d_in: usize,
    pub n_classes: usize,
}

/// Ordered sequence of source domains t = 1..T followed by target domains
/// t = T+1..T+K. The two lists are separate types of membership on purpose:
/// training-path code receives only `sources`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolvingDataset {
    pub sources: Vec<DomainSamples>,
    pub targets: Vec<DomainSamples>,
    pub meta: DatasetMeta,
}

impl EvolvingDataset {
    pub fn n_source(&self) -> usize {
        self.sources.len()
    }

    pub fn n_target(&self) -> usize {
        self.targets.len()
    }

    pub fn d_in(&self) -> usize {
        self.meta.d_in
    }

    pub fn n_classes(&self) -> usize {
        self.meta.n_classes
    }

    /// Validate index contiguity and role tags.
    pub fn validate(&self) -> Result<()> {
        let t = self.sources.len();
        for (i, d) in self.sources.iter().enumerate() {
            if d.t != i + 1 || d.role != DomainRole::Source {
                return Err(EdgError::DataFormat(format!(
                    "source domain {} has index {} / role {:?}",
                    i + 1,
                    d.t,
                    d.role
                )));
            }
        }
        for (i, d) in self.targets.iter().enumerate() {
            if d.t != t + i + 1 || d.role != DomainRole::Target {
                return Err(EdgError::DataFormat(format!(
                    "target domain {} has index {} / role {:?}",
                    t + i + 1,
                    d.t,
                    d.role
                )));
            }
        }
        Ok(())
    }
}

/// Unit normal of the domain-t rotated-Gaussian boundary: the boundary starts
/// on the x-axis (normal = +y) and rotates counterclockwise by
/// `(t-1)*delta_deg`.
pub fn rotated_gaussian_normal(t: usize, delta_deg: f64) -> [f64; 2] {
    let theta = ((t - 1) as f64 * delta_deg).to_radians();
    [-theta.sin(), theta.cos()]
}

/// Rotated Gaussian benchmark: 2-D standard normal points; domain t labels by
/// the sign of `w_t . x` with the boundary rotated `(t-1)*delta_deg`
/// counterclockwise from the x-axis. `n_domains` counts source + target
/// domains together; the trailing `n_targets` domains are held out.
pub fn gen_rotated_gaussian(
    n_domains: usize,
    n_per_domain: usize,
    delta_deg: f64,
    n_targets: usize,
    seed: u64,
) -> Result<EvolvingDataset> {
    if n_domains < 2 || n_per_domain < 2 {
        return Err(EdgError::InvalidArg(format!(
            "gen_rotated_gaussian: need n_domains >= 2 and n_per_domain >= 2, got {n_domains}/{n_per_domain}"
        )));
    }
    if n_targets == 0 || n_targets >= n_domains {
        return Err(EdgError::InvalidArg(format!(
            "gen_rotated_gaussian: n_targets must be in 1..n_domains, got {n_targets}"
        )));
    }
    let n_source = n_domains - n_targets;
    let mut sources = Vec::new();
    let mut targets = Vec::new();
    for t in 1..=n_domains {
        let mut rng = derive_stream(seed, "datagen.rotated_gaussian", t as u64);
        let w = rotated_gaussian_normal(t, delta_deg);
        let mut data = Vec::with_capacity(n_per_domain * 2);
        let mut y = Vec::with_capacity(n_per_domain);
        for _ in 0..n_per_domain {
            let x0: f64 = rng.sample(StandardNormal);
            let x1: f64 = rng.sample(StandardNormal);
            data.push(x0);
            data.push(x1);
            y.push(usize::from(w[0] * x0 + w[1] * x1 > 0.0));
        }
        let role = if t <= n_source {
            DomainRole::Source
        } else {
            DomainRole::Target
        };
        let dom = DomainSamples {
            t,
            role,
            x: Tensor::matrix(n_per_domain, 2, data)?,
            y,
        };
        if t <= n_source {
            sources.push(dom);
        } else {
            targets.push(dom);
        }
    }
    Ok(EvolvingDataset {
        sources,
        targets,
        meta: DatasetMeta {
            generator: "rotated_gaussian".into(),
            params: serde_json::json!({
                "n_domains": n_domains,
                "n_per_domain": n_per_domain,
                "delta_deg": delta_deg,
                "n_targets": n_targets,
            }),
            seed,
            d_in: 2,
            n_classes: 2,
        },
    })
}

/// Sine benchmark: domain t covers the strip x1 in [(t-1)pi/3, t*pi/3) (each
/// domain spans 1/6 of the sinusoid's period), x2 uniform in
/// [-(amp+margin), amp+margin]; label = 1 iff x2 > amp*sin(x1).
pub fn gen_sine(
    n_domains: usize,
    n_per_domain: usize,
    n_targets: usize,
    amp: f64,
    margin: f64,
    seed: u64,
) -> Result<EvolvingDataset> {
    if n_domains < 2 || n_per_domain < 2 {
        return Err(EdgError::InvalidArg(format!(
            "gen_sine: need n_domains >= 2 and n_per_domain >= 2, got {n_domains}/{n_per_domain}"
        )));
    }
    if n_targets == 0 || n_targets >= n_domains {
        return Err(EdgError::InvalidArg(format!(
            "gen_sine: n_targets must be in 1..n_domains, got {n_targets}"
        )));
    }
    let n_source = n_domains - n_targets;
    let strip = std::f64::consts::PI / 3.0;
    let half_height = amp + margin;
    let mut sources = Vec::new();
    let mut targets = Vec::new();
    for t in 1..=n_domains {
        let mut rng = derive_stream(seed, "datagen.sine", t as u64);
        let lo = (t - 1) as f64 * strip;
        let mut data = Vec::with_capacity(n_per_domain * 2);
        let mut y = Vec::with_capacity(n_per_domain);
        for _ in 0..n_per_domain {
            let x1 = lo + rng.random_range(0.0..strip);
            let x2 = rng.random_range(-half_height..half_height);
            data.push(x1);
            data.push(x2);
            y.push(usize::from(x2 > amp * x1.sin()));
        }
        let role = if t <= n_source {
            DomainRole::Source
        } else {
            DomainRole::Target
        };
        let dom = DomainSamples {
            t,
            role,
            x: Tensor::matrix(n_per_domain, 2, data)?,
            y,
        };
        if t <= n_source {
            sources.push(dom);
        } else {
            targets.push(dom);
        }
    }
    Ok(EvolvingDataset {
        sources,
        targets,
        meta: DatasetMeta {
            generator: "sine".into(),
            params: serde_json::json!({
                "n_domains": n_domains,
                "n_per_domain": n_per_domain,
                "n_targets": n_targets,
                "amp": amp,
                "margin": margin,
            }),
            seed,
            d_in: 2,
            n_classes: 2,
        },
    })
}

/// Per-domain random split of source domains into train/val; target domains
/// are copied untouched into both halves (they are evaluation-only either way).
pub fn split_train_val(
    ds: &EvolvingDataset,
    frac: f64,
    seed: u64,
) -> Result<(EvolvingDataset, EvolvingDataset)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(EdgError::InvalidArg(format!(
            "split_train_val: frac must be in (0,1), got {frac}"
        )));
    }
    let mut train_sources = Vec::new();
    let mut val_sources = Vec::new();
    for dom in &ds.sources {
        let n = dom.n();
        if n < 2 {
            return Err(EdgError::InvalidArg(format!(
                "split_train_val: source domain {} has {} sample(s), need >= 2",
                dom.t, n
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = derive_stream(seed, "split", dom.t as u64);
        idx.shuffle(&mut rng);
        let k = ((n as f64) * frac).round() as usize;
        let k = k.clamp(1, n - 1);
        let take = |ids: &[usize]| -> Result<DomainSamples> {
            let d = ds.d_in();
            let mut data = Vec::with_capacity(ids.len() * d);
            let mut y = Vec::with_capacity(ids.len());
            for &i in ids {
                data.extend_from_slice(&dom.x.data()[i * d..(i + 1) * d]);
                y.push(dom.y[i]);
            }
            Ok(DomainSamples {
                t: dom.t,
                role: dom.role,
                x: Tensor::matrix(ids.len(), d, data)?,
                y,
            })
        };
        train_sources.push(take(&idx[..k])?);
        val_sources.push(take(&idx[k..])?);
    }
    let train = EvolvingDataset {
        sources: train_sources,
        targets: ds.targets.clone(),
        meta: ds.meta.clone(),
    };
    let val = EvolvingDataset {
        sources: val_sources,
        targets: ds.targets.clone(),
        meta: ds.meta.clone(),
    };
    Ok((train, val))
}
