//! Decision-boundary grid export: evaluate a (featurizer, classifier) pair on
//! a regular 2-D lattice and emit plot-ready CSV rows.

use crate::error::{EdgError, Result};
use crate::nn::MlpParams;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Inclusive lattice bounds `x1 ∈ [x1_min, x1_max]`, `x2 ∈ [x2_min, x2_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridBounds {
    pub x1_min: f64,
    pub x1_max: f64,
    pub x2_min: f64,
    pub x2_max: f64,
}

impl GridBounds {
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| EdgError::InvalidArg(format!("bad bounds component '{p}'")))
            })
            .collect::<Result<_>>()?;
        if parts.len() != 4 {
            return Err(EdgError::InvalidArg(format!(
                "bounds must be x1min,x1max,x2min,x2max — got '{s}'"
            )));
        }
        let b = GridBounds {
            x1_min: parts[0],
            x1_max: parts[1],
            x2_min: parts[2],
            x2_max: parts[3],
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.x1_min < self.x1_max && self.x2_min < self.x2_max) {
            return Err(EdgError::InvalidArg(format!(
                "bounds must satisfy min < max per axis, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// One lattice point's prediction. `logit_margin` is the winning logit minus
/// the runner-up (0 on exact ties).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub x1: f64,
    pub x2: f64,
    pub predicted_class: usize,
    pub logit_margin: f64,
}

/// Evaluate `classifier(featurizer(x))` over a resolution×resolution lattice
/// (endpoints included; rows ordered x1-major, x2 fastest).
pub fn boundary_grid(
    featurizer: &MlpParams,
    classifier: &MlpParams,
    bounds: &GridBounds,
    resolution: usize,
) -> Result<Vec<GridRow>> {
    bounds.validate()?;
    if featurizer.in_dim() != 2 {
        return Err(EdgError::InvalidArg(format!(
            "boundary grids require 2-D inputs, featurizer takes {}",
            featurizer.in_dim()
        )));
    }
    if resolution < 2 {
        return Err(EdgError::InvalidArg(format!(
            "resolution must be >= 2, got {resolution}"
        )));
    }
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (resolution - 1) as f64;
    let mut points = Vec::with_capacity(resolution * resolution * 2);
    for i in 0..resolution {
        let x1 = step(bounds.x1_min, bounds.x1_max, i);
        for j in 0..resolution {
            let x2 = step(bounds.x2_min, bounds.x2_max, j);
            points.push(x1);
            points.push(x2);
        }
    }
    let x = Tensor::matrix(resolution * resolution, 2, points)?;
    let logits = classifier.forward_value(&featurizer.forward_value(&x)?)?;
    let k = logits.shape()[1];
    if k < 2 {
        return Err(EdgError::BadShape {
            op: "boundary_grid",
            shape: logits.shape().to_vec(),
            detail: "classifier must emit >= 2 logits".into(),
        });
    }
    let mut rows = Vec::with_capacity(resolution * resolution);
    for (idx, chunk) in logits.data().chunks(k).enumerate() {
        let mut best = 0usize;
        for (c, &v) in chunk.iter().enumerate() {
            if v > chunk[best] {
                best = c;
            }
        }
        let runner_up = chunk
            .iter()
            .enumerate()
            .filter(|(c, _)| *c != best)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        rows.push(GridRow {
            x1: x.at2(idx, 0),
            x2: x.at2(idx, 1),
            predicted_class: best,
            logit_margin: chunk[best] - runner_up,
        });
    }
    Ok(rows)
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
