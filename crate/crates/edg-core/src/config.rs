//! Flat `key=value` run configuration with dataset-keyed defaults.
//!
//! Format: one `key=value` per line; `#` starts a comment; blank lines and
//! decorative `[section]` headers are ignored; keys live in a single flat
//! namespace and may appear at most once. Every tunable has a documented
//! default keyed by the dataset name, so `method=dda dataset=rotated_gaussian`
//! is a complete config. Keys that do not apply to the chosen method or
//! dataset are rejected by name, and unknown keys are rejected with the full
//! valid-key listing. `serialize_config` emits the canonical full form, and
//! `parse(serialize(cfg)) == cfg`.

use crate::dda::{DdaConfig, PairMode};
use crate::erm::ErmConfig;
use crate::error::{EdgError, Result};
use crate::nn::{Activation, OptimKind};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Which pipeline a run trains and evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Dda,
    Ldda,
    Erm,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dda" => Ok(Method::Dda),
            "ldda" => Ok(Method::Ldda),
            "erm" => Ok(Method::Erm),
            other => Err(EdgError::Config(format!(
                "unknown method '{other}' (expected dda, ldda or erm)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Dda => "dda",
            Method::Ldda => "ldda",
            Method::Erm => "erm",
        }
    }
}

/// Dataset source: a named generator with its parameters, or a serialized
/// dataset file (path ending in `.edgdata`).
#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    RotatedGaussian {
        n_domains: usize,
        n_per_domain: usize,
        delta_deg: f64,
        n_targets: usize,
    },
    Sine {
        n_domains: usize,
        n_per_domain: usize,
        amp: f64,
        margin: f64,
        n_targets: usize,
    },
    RotatingImages {
        images_path: String,
        labels_path: String,
        n_domains: usize,
        n_per_domain: usize,
        delta_deg: f64,
    },
    File(String),
}

impl DatasetSpec {
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::RotatedGaussian { .. } => "rotated_gaussian",
            DatasetSpec::Sine { .. } => "sine",
            DatasetSpec::RotatingImages { .. } => "rotating_images",
            DatasetSpec::File(path) => path,
        }
    }
}

/// Network shapes shared by the trainable methods. Dims are full layer lists
/// (input through output); a single-entry featurizer is the identity map.
#[derive(Clone, Debug, PartialEq)]
pub struct ArchSpec {
    pub phi_dims: Vec<usize>,
    /// Transformer sub-net shape (applies to dda only).
    pub tf_dims: Vec<usize>,
    pub h_dims: Vec<usize>,
    pub activation: Activation,
}

/// A fully resolved experiment configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub dataset: DatasetSpec,
    pub out_dir: String,
    pub seeds: Vec<u64>,
    pub horizons: Vec<usize>,
    /// Per-domain validation fraction of the train/val split.
    pub val_frac: f64,
    /// Present for dda and erm (ldda is closed-form over raw features).
    pub arch: Option<ArchSpec>,
    pub dda: Option<DdaConfig>,
    pub erm: Option<ErmConfig>,
}

/// Every key the parser understands, for the unknown-key error message.
const VALID_KEYS: &[&str] = &[
    "method",
    "dataset",
    "out_dir",
    "seeds",
    "horizons",
    "val_frac",
    "n_domains",
    "n_per_domain",
    "delta_deg",
    "n_targets",
    "amp",
    "margin",
    "images_path",
    "labels_path",
    "phi_dims",
    "tf_dims",
    "h_dims",
    "activation",
    "alpha",
    "beta",
    "lambda",
    "tau_temp",
    "inner_steps_aug",
    "inner_steps_src",
    "batch",
    "episodes",
    "second_order",
    "history_includes_current",
    "pair_mode",
    "n_infer",
    "val_every",
    "optimizer",
    "erm_lr",
    "erm_epochs",
    "erm_batch",
    "erm_val_every",
];

/// Per-dataset default table (the published hyperparameter table for the two
/// toys; file datasets fall back to the rotated_gaussian column and must spell
/// out their architecture).
struct Defaults {
    n_domains: usize,
    n_per_domain: usize,
    delta_deg: f64,
    n_targets: usize,
    amp: f64,
    margin: f64,
    phi_dims: &'static str,
    tf_dims: &'static str,
    h_dims: &'static str,
    alpha: f64,
    beta: f64,
    lambda: f64,
    episodes: usize,
}

fn defaults_for(dataset: &str) -> Defaults {
    match dataset {
        "sine" => Defaults {
            n_domains: 11,
            n_per_domain: 200,
            delta_deg: 12.0,
            n_targets: 1,
            amp: 1.0,
            margin: 0.5,
            phi_dims: "2",
            tf_dims: "2,16,16,2",
            h_dims: "2,2",
            alpha: 0.5,
            beta: 0.01,
            lambda: 0.8,
            episodes: 3000,
        },
        "rotating_images" => Defaults {
            n_domains: 6,
            n_per_domain: 800,
            delta_deg: 15.0,
            n_targets: 1,
            amp: 1.0,
            margin: 0.5,
            phi_dims: "784",
            tf_dims: "784,64,64,784",
            h_dims: "784,10",
            alpha: 0.5,
            beta: 0.001,
            lambda: 0.5,
            episodes: 2000,
        },
        // rotated_gaussian and the file-dataset fallback
        _ => Defaults {
            n_domains: 30,
            n_per_domain: 125,
            delta_deg: 12.0,
            n_targets: 1,
            amp: 1.0,
            margin: 0.5,
            phi_dims: "2",
            tf_dims: "2,4,4,2",
            h_dims: "2,2",
            alpha: 2.0,
            beta: 0.001,
            lambda: 0.5,
            episodes: 2000,
        },
    }
}

/// Raw key=value table from the flat text form.
fn parse_lines(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() || (line.starts_with('[') && line.ends_with(']')) {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(EdgError::Config(format!(
                "line {}: expected key=value, got '{line}'",
                lineno + 1
            )));
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(EdgError::Config(format!(
                "line {}: duplicate key '{key}'",
                lineno + 1
            )));
        }
    }
    Ok(map)
}

/// Typed accessor over the raw table that remembers which keys were consumed.
struct KeyReader {
    map: BTreeMap<String, String>,
    consumed: Vec<String>,
}

impl KeyReader {
    fn take(&mut self, key: &str) -> Option<String> {
        let v = self.map.get(key).cloned();
        if v.is_some() {
            self.consumed.push(key.to_string());
        }
        v
    }

    fn parse_with<T>(
        &mut self,
        key: &str,
        default: T,
        f: impl FnOnce(&str) -> Result<T>,
    ) -> Result<T> {
        match self.take(key) {
            Some(v) => f(&v),
            None => Ok(default),
        }
    }

    fn f64_key(&mut self, key: &str, default: f64) -> Result<f64> {
        self.parse_with(key, default, |v| {
            v.parse::<f64>()
                .map_err(|_| EdgError::Config(format!("key '{key}': '{v}' is not a number")))
        })
    }

    fn usize_key(&mut self, key: &str, default: usize) -> Result<usize> {
        self.parse_with(key, default, |v| {
            v.parse::<usize>().map_err(|_| {
                EdgError::Config(format!("key '{key}': '{v}' is not a non-negative integer"))
            })
        })
    }

    fn bool_key(&mut self, key: &str, default: bool) -> Result<bool> {
        self.parse_with(key, default, |v| match v {
            "true" => Ok(true),
            "false" => Ok(false),
            _ => Err(EdgError::Config(format!(
                "key '{key}': '{v}' is not true/false"
            ))),
        })
    }

    fn string_key(&mut self, key: &str, default: &str) -> String {
        self.take(key).unwrap_or_else(|| default.to_string())
    }

    fn required(&mut self, key: &str, why: &str) -> Result<String> {
        self.take(key)
            .ok_or_else(|| EdgError::Config(format!("missing required key '{key}' ({why})")))
    }

    /// Reject leftovers: known-but-inapplicable keys by name, unknown keys
    /// with the listing.
    fn finish(self, method: Method, dataset: &str) -> Result<()> {
        for key in self.map.keys() {
            if self.consumed.iter().any(|c| c == key) {
                continue;
            }
            return if VALID_KEYS.contains(&key.as_str()) {
                Err(EdgError::Config(format!(
                    "key '{key}' does not apply to method '{}' with dataset '{dataset}'",
                    method.name()
                )))
            } else {
                Err(EdgError::Config(format!(
                    "unknown key '{key}'; valid keys: {}",
                    VALID_KEYS.join(", ")
                )))
            };
        }
        Ok(())
    }
}

fn parse_dims(key: &str, v: &str) -> Result<Vec<usize>> {
    let dims: Vec<usize> = v
        .split(',')
        .map(|p| {
            p.trim().parse::<usize>().map_err(|_| {
                EdgError::Config(format!("key '{key}': '{v}' is not a comma list of dims"))
            })
        })
        .collect::<Result<_>>()?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(EdgError::Config(format!(
            "key '{key}': dims must be non-empty positive integers, got '{v}'"
        )));
    }
    Ok(dims)
}

fn parse_u64_list(key: &str, v: &str) -> Result<Vec<u64>> {
    v.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| EdgError::Config(format!("key '{key}': bad integer in '{v}'")))
        })
        .collect()
}

/// Parse a configuration from its flat text form, resolving defaults.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut r = KeyReader {
        map: parse_lines(text)?,
        consumed: Vec::new(),
    };
    let method = Method::parse(&r.required("method", "dda, ldda or erm")?)?;
    let dataset_raw = r.required(
        "dataset",
        "rotated_gaussian, sine, rotating_images, or a .edgdata path",
    )?;
    let is_file = dataset_raw.ends_with(".edgdata");
    if !is_file
        && !matches!(
            dataset_raw.as_str(),
            "rotated_gaussian" | "sine" | "rotating_images"
        )
    {
        return Err(EdgError::Config(format!(
            "unknown dataset '{dataset_raw}' (expected rotated_gaussian, sine, rotating_images, or a path ending in .edgdata)"
        )));
    }
    let d = defaults_for(if is_file {
        "rotated_gaussian"
    } else {
        &dataset_raw
    });

    let dataset = if is_file {
        DatasetSpec::File(dataset_raw.clone())
    } else {
        match dataset_raw.as_str() {
            "rotated_gaussian" => DatasetSpec::RotatedGaussian {
                n_domains: r.usize_key("n_domains", d.n_domains)?,
                n_per_domain: r.usize_key("n_per_domain", d.n_per_domain)?,
                delta_deg: r.f64_key("delta_deg", d.delta_deg)?,
                n_targets: r.usize_key("n_targets", d.n_targets)?,
            },
            "sine" => DatasetSpec::Sine {
                n_domains: r.usize_key("n_domains", d.n_domains)?,
                n_per_domain: r.usize_key("n_per_domain", d.n_per_domain)?,
                amp: r.f64_key("amp", d.amp)?,
                margin: r.f64_key("margin", d.margin)?,
                n_targets: r.usize_key("n_targets", d.n_targets)?,
            },
            _ => DatasetSpec::RotatingImages {
                images_path: r.required("images_path", "IDX image file for rotating_images")?,
                labels_path: r.required("labels_path", "IDX label file for rotating_images")?,
                n_domains: r.usize_key("n_domains", d.n_domains)?,
                n_per_domain: r.usize_key("n_per_domain", d.n_per_domain)?,
                delta_deg: r.f64_key("delta_deg", d.delta_deg)?,
            },
        }
    };

    let out_dir = r.string_key("out_dir", "runs");
    let seeds = {
        let raw = r.string_key("seeds", "0,1,2,3,4");
        let seeds = parse_u64_list("seeds", &raw)?;
        if seeds.is_empty() {
            return Err(EdgError::Config("seeds must be non-empty".into()));
        }
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != seeds.len() {
            return Err(EdgError::Config(format!("seeds must be distinct: {raw}")));
        }
        seeds
    };
    let horizons = {
        let raw = r.string_key("horizons", "1");
        let hs = parse_u64_list("horizons", &raw)?;
        if hs.is_empty() || hs.contains(&0) {
            return Err(EdgError::Config(format!(
                "horizons must be non-empty positive integers, got '{raw}'"
            )));
        }
        let mut sorted: Vec<usize> = hs.iter().map(|&h| h as usize).collect();
        sorted.dedup();
        if sorted.len() != hs.len() {
            return Err(EdgError::Config(format!("horizons must be distinct: {raw}")));
        }
        sorted
    };
    let val_frac = r.f64_key("val_frac", 0.2)?;
    if !(val_frac > 0.0 && val_frac < 1.0) {
        return Err(EdgError::Config(format!(
            "val_frac must be in (0, 1), got {val_frac}"
        )));
    }

    // Architecture (dda and erm).
    let arch = if method == Method::Ldda {
        None
    } else {
        let activation = Activation::parse(&r.string_key("activation", "relu"))?;
        let require_dims = |r: &mut KeyReader, key: &str, default: &str| -> Result<Vec<usize>> {
            if is_file {
                let v = r.required(key, "file datasets carry no architecture defaults")?;
                parse_dims(key, &v)
            } else {
                let v = r.string_key(key, default);
                parse_dims(key, &v)
            }
        };
        let phi_dims = require_dims(&mut r, "phi_dims", d.phi_dims)?;
        let tf_dims = if method == Method::Dda {
            require_dims(&mut r, "tf_dims", d.tf_dims)?
        } else {
            Vec::new()
        };
        let h_dims = require_dims(&mut r, "h_dims", d.h_dims)?;
        let feat = *phi_dims.last().unwrap();
        if method == Method::Dda
            && (tf_dims.len() < 2 || tf_dims[0] != feat || *tf_dims.last().unwrap() != feat)
        {
            return Err(EdgError::Config(format!(
                "tf_dims must map the feature dim {feat} to itself, got {tf_dims:?}"
            )));
        }
        if h_dims.len() < 2 || h_dims[0] != feat {
            return Err(EdgError::Config(format!(
                "h_dims must start at the feature dim {feat}, got {h_dims:?}"
            )));
        }
        Some(ArchSpec {
            phi_dims,
            tf_dims,
            h_dims,
            activation,
        })
    };

    let optimizer = OptimKind::parse(&r.string_key("optimizer", "adam"))?;
    let dda = if method == Method::Dda {
        let cfg = DdaConfig {
            alpha: r.f64_key("alpha", d.alpha)?,
            beta: r.f64_key("beta", d.beta)?,
            lambda: r.f64_key("lambda", d.lambda)?,
            tau_temp: r.f64_key("tau_temp", 2.0)?,
            inner_steps_aug: r.usize_key("inner_steps_aug", 5)?,
            inner_steps_src: r.usize_key("inner_steps_src", 2)?,
            batch: r.usize_key("batch", 32)?,
            episodes: r.usize_key("episodes", d.episodes)?,
            second_order: r.bool_key("second_order", true)?,
            history_includes_current: r.bool_key("history_includes_current", true)?,
            pair_mode: PairMode::parse(&r.string_key("pair_mode", "all_pairs"))?,
            n_infer: r.usize_key("n_infer", 0)?,
            val_every: r.usize_key("val_every", 100)?,
            optimizer,
        };
        cfg.validate()?;
        Some(cfg)
    } else {
        None
    };
    let erm = if method == Method::Erm {
        let cfg = ErmConfig {
            lr: r.f64_key("erm_lr", d.beta)?,
            epochs: r.usize_key("erm_epochs", 100)?,
            batch: r.usize_key("erm_batch", 32)?,
            optimizer,
            val_every: r.usize_key("erm_val_every", 1)?,
        };
        cfg.validate()?;
        Some(cfg)
    } else {
        None
    };
    if method == Method::Ldda {
        // ldda has no optimizer; reject an explicit key.
        if r.map.contains_key("optimizer") {
            return Err(EdgError::Config(
                "key 'optimizer' does not apply to method 'ldda'".into(),
            ));
        }
    }

    let display_name = if is_file { &dataset_raw } else { dataset.name() };
    r.finish(method, display_name)?;
    Ok(RunConfig {
        method,
        dataset,
        out_dir,
        seeds,
        horizons,
        val_frac,
        arch,
        dda,
        erm,
    })
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_u64(v: &[u64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical full text form: every applicable key spelled out, fixed order.
pub fn serialize_config(cfg: &RunConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "[run]");
    let _ = writeln!(s, "method={}", cfg.method.name());
    match &cfg.dataset {
        DatasetSpec::RotatedGaussian {
            n_domains,
            n_per_domain,
            delta_deg,
            n_targets,
        } => {
            let _ = writeln!(s, "dataset=rotated_gaussian");
            let _ = writeln!(s, "n_domains={n_domains}");
            let _ = writeln!(s, "n_per_domain={n_per_domain}");
            let _ = writeln!(s, "delta_deg={delta_deg}");
            let _ = writeln!(s, "n_targets={n_targets}");
        }
        DatasetSpec::Sine {
            n_domains,
            n_per_domain,
            amp,
            margin,
            n_targets,
        } => {
            let _ = writeln!(s, "dataset=sine");
            let _ = writeln!(s, "n_domains={n_domains}");
            let _ = writeln!(s, "n_per_domain={n_per_domain}");
            let _ = writeln!(s, "amp={amp}");
            let _ = writeln!(s, "margin={margin}");
            let _ = writeln!(s, "n_targets={n_targets}");
        }
        DatasetSpec::RotatingImages {
            images_path,
            labels_path,
            n_domains,
            n_per_domain,
            delta_deg,
        } => {
            let _ = writeln!(s, "dataset=rotating_images");
            let _ = writeln!(s, "images_path={images_path}");
            let _ = writeln!(s, "labels_path={labels_path}");
            let _ = writeln!(s, "n_domains={n_domains}");
            let _ = writeln!(s, "n_per_domain={n_per_domain}");
            let _ = writeln!(s, "delta_deg={delta_deg}");
        }
        DatasetSpec::File(path) => {
            let _ = writeln!(s, "dataset={path}");
        }
    }
    let _ = writeln!(s, "out_dir={}", cfg.out_dir);
    let _ = writeln!(s, "seeds={}", join_u64(&cfg.seeds));
    let _ = writeln!(s, "horizons={}", join_usize(&cfg.horizons));
    let _ = writeln!(s, "val_frac={}", cfg.val_frac);
    if let Some(arch) = &cfg.arch {
        let _ = writeln!(s, "[model]");
        let _ = writeln!(s, "activation={}", arch.activation.name());
        let _ = writeln!(s, "phi_dims={}", join_usize(&arch.phi_dims));
        if cfg.method == Method::Dda {
            let _ = writeln!(s, "tf_dims={}", join_usize(&arch.tf_dims));
        }
        let _ = writeln!(s, "h_dims={}", join_usize(&arch.h_dims));
    }
    if let Some(dda) = &cfg.dda {
        let _ = writeln!(s, "[dda]");
        let _ = writeln!(s, "alpha={}", dda.alpha);
        let _ = writeln!(s, "beta={}", dda.beta);
        let _ = writeln!(s, "lambda={}", dda.lambda);
        let _ = writeln!(s, "tau_temp={}", dda.tau_temp);
        let _ = writeln!(s, "inner_steps_aug={}", dda.inner_steps_aug);
        let _ = writeln!(s, "inner_steps_src={}", dda.inner_steps_src);
        let _ = writeln!(s, "batch={}", dda.batch);
        let _ = writeln!(s, "episodes={}", dda.episodes);
        let _ = writeln!(s, "second_order={}", dda.second_order);
        let _ = writeln!(
            s,
            "history_includes_current={}",
            dda.history_includes_current
        );
        let _ = writeln!(s, "pair_mode={}", dda.pair_mode.name());
        let _ = writeln!(s, "n_infer={}", dda.n_infer);
        let _ = writeln!(s, "val_every={}", dda.val_every);
        let _ = writeln!(s, "optimizer={}", dda.optimizer.name());
    }
    if let Some(erm) = &cfg.erm {
        let _ = writeln!(s, "[erm]");
        let _ = writeln!(s, "erm_lr={}", erm.lr);
        let _ = writeln!(s, "erm_epochs={}", erm.epochs);
        let _ = writeln!(s, "erm_batch={}", erm.batch);
        let _ = writeln!(s, "erm_val_every={}", erm.val_every);
        let _ = writeln!(s, "optimizer={}", erm.optimizer.name());
    }
    s
}

/// The canonical form as a flat key→value map (section headers dropped),
/// used for checkpoint provenance echoes.
pub fn config_key_values(cfg: &RunConfig) -> BTreeMap<String, String> {
    parse_lines(&serialize_config(cfg)).expect("canonical form always parses")
}

/// Stable 16-hex-digit digest of the canonical form, for result provenance.
pub fn config_hash(cfg: &RunConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(serialize_config(cfg).as_bytes());
    let digest = hasher.finalize();
    digest[..8].iter().fold(String::new(), |mut acc, b| {
        let _ = write!(acc, "{b:02x}");
        acc
    })
}

/// Numeric/integer fields a sweep may vary, applied to a parsed config.
pub fn set_sweep_axis(cfg: &mut RunConfig, axis: &str, value: &str) -> Result<()> {
    let bad_num = |axis: &str, value: &str| {
        EdgError::Config(format!("axis '{axis}': '{value}' is not a number"))
    };
    let need_dda = |cfg: &RunConfig| -> Result<()> {
        if cfg.dda.is_none() {
            return Err(EdgError::Config(format!(
                "axis requires method=dda, config has {}",
                cfg.method.name()
            )));
        }
        Ok(())
    };
    match axis {
        "alpha" | "beta" | "lambda" | "tau_temp" => {
            need_dda(cfg)?;
            let v: f64 = value.parse().map_err(|_| bad_num(axis, value))?;
            let dda = cfg.dda.as_mut().unwrap();
            match axis {
                "alpha" => dda.alpha = v,
                "beta" => dda.beta = v,
                "lambda" => dda.lambda = v,
                _ => dda.tau_temp = v,
            }
            dda.validate()
        }
        "inner_steps_aug" | "inner_steps_src" | "batch" | "episodes" | "n_infer" | "val_every" => {
            need_dda(cfg)?;
            let v: usize = value.parse().map_err(|_| bad_num(axis, value))?;
            let dda = cfg.dda.as_mut().unwrap();
            match axis {
                "inner_steps_aug" => dda.inner_steps_aug = v,
                "inner_steps_src" => dda.inner_steps_src = v,
                "batch" => dda.batch = v,
                "episodes" => dda.episodes = v,
                "n_infer" => dda.n_infer = v,
                _ => dda.val_every = v,
            }
            dda.validate()
        }
        "erm_lr" => {
            let erm = cfg.erm.as_mut().ok_or_else(|| {
                EdgError::Config("axis 'erm_lr' requires method=erm".into())
            })?;
            erm.lr = value.parse().map_err(|_| bad_num(axis, value))?;
            erm.validate()
        }
        "erm_epochs" | "erm_batch" => {
            let v: usize = value.parse().map_err(|_| bad_num(axis, value))?;
            let erm = cfg.erm.as_mut().ok_or_else(|| {
                EdgError::Config(format!("axis '{axis}' requires method=erm"))
            })?;
            if axis == "erm_epochs" {
                erm.epochs = v;
            } else {
                erm.batch = v;
            }
            erm.validate()
        }
        "val_frac" => {
            let v: f64 = value.parse().map_err(|_| bad_num(axis, value))?;
            if !(v > 0.0 && v < 1.0) {
                return Err(EdgError::Config(format!(
                    "val_frac must be in (0, 1), got {v}"
                )));
            }
            cfg.val_frac = v;
            Ok(())
        }
        other => Err(EdgError::Config(format!(
            "unknown sweep axis '{other}'; sweepable: alpha, beta, lambda, tau_temp, \
             inner_steps_aug, inner_steps_src, batch, episodes, n_infer, val_every, \
             erm_lr, erm_epochs, erm_batch, val_frac"
        ))),
    }
}
