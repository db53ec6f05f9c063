//! Self-describing binary artifacts: `EDGDATA1` dataset files and `EDGCKPT1`
//! model checkpoints.
//!
//! Both formats serialize through a pure `to_bytes` path so that identical
//! inputs produce bit-identical files (no timestamps, map keys sorted).
//!
//! `EDGDATA1` layout:
//! ```text
//! 8  bytes  magic "EDGDATA1"
//! u32 LE    n_source
//! u32 LE    n_target
//! u32 LE    d_in
//! u32 LE    n_classes
//! per domain (sources in order, then targets):
//!   u32 LE  t          (1-based domain index)
//!   u32 LE  role       (0 = source, 1 = target)
//!   u32 LE  n          (samples)
//!   f64 LE  x[n*d_in]  (row-major features)
//!   u32 LE  y[n]       (labels)
//! u32 LE    meta_len
//! bytes     meta       (UTF-8 JSON: generator, params, seed, d_in, n_classes)
//! ```
//!
//! `EDGCKPT1` layout:
//! ```text
//! 8  bytes  magic "EDGCKPT1"
//! u32 LE    manifest_len
//! bytes     manifest   (UTF-8 JSON: kind, named param shapes, config echo,
//!                       episodes_to_best, best_val)
//! f64 LE    payload    (parameters concatenated in manifest order)
//! ```

use crate::datagen::{DatasetMeta, DomainRole, DomainSamples, EvolvingDataset};
use crate::error::{EdgError, Result};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

const DATA_MAGIC: &[u8; 8] = b"EDGDATA1";
const CKPT_MAGIC: &[u8; 8] = b"EDGCKPT1";

// ---------------------------------------------------------------------------
// little-endian cursor helpers
// ---------------------------------------------------------------------------

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Cursor { buf, pos: 0, what }
    }

    fn err(&self, detail: &str) -> EdgError {
        let msg = format!("{} at byte {}", detail, self.pos);
        match self.what {
            "dataset" => EdgError::DataFormat(msg),
            _ => EdgError::CheckpointFormat(msg),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(self.err("unexpected end of file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n * 8)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn u32s(&mut self, n: usize) -> Result<Vec<u32>> {
        let b = self.take(n * 4)?;
        Ok(b.chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.err("trailing bytes after payload"));
        }
        Ok(())
    }
}

fn push_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v)
        .map_err(|_| EdgError::InvalidArg(format!("{what} {v} exceeds u32 range")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

// ---------------------------------------------------------------------------
// EDGDATA1
// ---------------------------------------------------------------------------

/// Serialize a dataset to the `EDGDATA1` byte layout.
pub fn dataset_to_bytes(ds: &EvolvingDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(DATA_MAGIC);
    push_u32(&mut out, ds.sources.len(), "n_source")?;
    push_u32(&mut out, ds.targets.len(), "n_target")?;
    push_u32(&mut out, ds.meta.d_in, "d_in")?;
    push_u32(&mut out, ds.meta.n_classes, "n_classes")?;
    for dom in ds.sources.iter().chain(&ds.targets) {
        if dom.x.shape() != [dom.n(), ds.meta.d_in] {
            return Err(EdgError::DataFormat(format!(
                "domain {}: features shape {:?} does not match {} samples x d_in {}",
                dom.t,
                dom.x.shape(),
                dom.n(),
                ds.meta.d_in
            )));
        }
        push_u32(&mut out, dom.t, "domain index")?;
        push_u32(
            &mut out,
            match dom.role {
                DomainRole::Source => 0,
                DomainRole::Target => 1,
            },
            "role",
        )?;
        push_u32(&mut out, dom.n(), "n")?;
        for &v in dom.x.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &label in &dom.y {
            if label >= ds.meta.n_classes {
                return Err(EdgError::LabelOutOfRange {
                    label,
                    classes: ds.meta.n_classes,
                });
            }
            push_u32(&mut out, label, "label")?;
        }
    }
    let meta = serde_json::to_vec(&ds.meta)?;
    push_u32(&mut out, meta.len(), "meta length")?;
    out.extend_from_slice(&meta);
    Ok(out)
}

/// Parse an `EDGDATA1` byte buffer.
pub fn dataset_from_bytes(buf: &[u8]) -> Result<EvolvingDataset> {
    let mut c = Cursor::new(buf, "dataset");
    if c.take(8)? != DATA_MAGIC {
        return Err(EdgError::DataFormat("bad magic, expected EDGDATA1".into()));
    }
    let n_source = c.u32()? as usize;
    let n_target = c.u32()? as usize;
    let d_in = c.u32()? as usize;
    let n_classes = c.u32()? as usize;
    if d_in == 0 || n_classes < 2 {
        return Err(EdgError::DataFormat(format!(
            "implausible header: d_in={d_in}, n_classes={n_classes}"
        )));
    }
    let read_domain = |c: &mut Cursor| -> Result<DomainSamples> {
        let t = c.u32()? as usize;
        let role = match c.u32()? {
            0 => DomainRole::Source,
            1 => DomainRole::Target,
            other => return Err(c.err(&format!("unknown role tag {other}"))),
        };
        let n = c.u32()? as usize;
        let x = Tensor::matrix(n, d_in, c.f64s(n * d_in)?)?;
        let y: Vec<usize> = c.u32s(n)?.into_iter().map(|v| v as usize).collect();
        for &label in &y {
            if label >= n_classes {
                return Err(EdgError::LabelOutOfRange {
                    label,
                    classes: n_classes,
                });
            }
        }
        Ok(DomainSamples { t, role, x, y })
    };
    let sources: Vec<DomainSamples> = (0..n_source)
        .map(|_| read_domain(&mut c))
        .collect::<Result<_>>()?;
    let targets: Vec<DomainSamples> = (0..n_target)
        .map(|_| read_domain(&mut c))
        .collect::<Result<_>>()?;
    let meta_len = c.u32()? as usize;
    let meta: DatasetMeta = serde_json::from_slice(c.take(meta_len)?)?;
    c.done()?;
    if meta.d_in != d_in || meta.n_classes != n_classes {
        return Err(EdgError::DataFormat(format!(
            "metadata dims ({}, {}) disagree with header ({d_in}, {n_classes})",
            meta.d_in, meta.n_classes
        )));
    }
    let ds = EvolvingDataset {
        sources,
        targets,
        meta,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &EvolvingDataset) -> Result<()> {
    Ok(std::fs::write(path, dataset_to_bytes(ds)?)?)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<EvolvingDataset> {
    dataset_from_bytes(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// EDGCKPT1
// ---------------------------------------------------------------------------

/// A trained model: flat named parameter tensors plus the run context needed
/// to reconstruct and reuse it (`kind` selects the loader, `config` echoes the
/// flat key=value run configuration).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Model family: "dda" or "erm".
    pub kind: String,
    /// Parameters in a stable, documented order.
    pub named: Vec<(String, Tensor)>,
    /// Flat key=value echo of the run configuration.
    pub config: BTreeMap<String, String>,
    /// Training episodes (or epochs) completed when the snapshot was taken.
    pub episodes_to_best: u64,
    /// Model-selection metric at the snapshot.
    pub best_val: f64,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    kind: String,
    params: Vec<ManifestEntry>,
    config: BTreeMap<String, String>,
    episodes_to_best: u64,
    best_val: f64,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.named
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| EdgError::CheckpointFormat(format!("missing parameter '{name}'")))
    }

    pub fn config_value(&self, key: &str) -> Result<&str> {
        self.config
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| EdgError::CheckpointFormat(format!("missing config key '{key}'")))
    }
}

/// Serialize a checkpoint to the `EDGCKPT1` byte layout.
pub fn checkpoint_to_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    if !ck.best_val.is_finite() {
        return Err(EdgError::CheckpointFormat(format!(
            "best_val {} is not finite",
            ck.best_val
        )));
    }
    let manifest = Manifest {
        kind: ck.kind.clone(),
        params: ck
            .named
            .iter()
            .map(|(name, t)| ManifestEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
        config: ck.config.clone(),
        episodes_to_best: ck.episodes_to_best,
        best_val: ck.best_val,
    };
    let manifest = serde_json::to_vec(&manifest)?;
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    push_u32(&mut out, manifest.len(), "manifest length")?;
    out.extend_from_slice(&manifest);
    for (_, t) in &ck.named {
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Parse an `EDGCKPT1` byte buffer.
pub fn checkpoint_from_bytes(buf: &[u8]) -> Result<Checkpoint> {
    let mut c = Cursor::new(buf, "checkpoint");
    if c.take(8)? != CKPT_MAGIC {
        return Err(EdgError::CheckpointFormat(
            "bad magic, expected EDGCKPT1".into(),
        ));
    }
    let manifest_len = c.u32()? as usize;
    let manifest: Manifest = serde_json::from_slice(c.take(manifest_len)?)?;
    let mut named = Vec::with_capacity(manifest.params.len());
    for entry in manifest.params {
        let len: usize = entry.shape.iter().product();
        let data = c.f64s(len)?;
        named.push((entry.name, Tensor::new(entry.shape, data)?));
    }
    c.done()?;
    Ok(Checkpoint {
        kind: manifest.kind,
        named,
        config: manifest.config,
        episodes_to_best: manifest.episodes_to_best,
        best_val: manifest.best_val,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ck: &Checkpoint) -> Result<()> {
    Ok(std::fs::write(path, checkpoint_to_bytes(ck)?)?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}
