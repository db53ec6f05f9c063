//! Dense fp64 tensors in row-major order, plus the value-level kernels that
//! back every differentiable graph operation.
//!
//! A [`Tensor`] is a plain value object: shape + buffer. It carries no graph
//! handle itself; the graph tracks values by node id (see [`crate::graph`]),
//! which keeps detached tensors trivially shareable across threads.
//!
//! Shape conventions used throughout the crate:
//! - scalar: shape `[]` (buffer length 1),
//! - vector: `[n]`,
//! - matrix: `[m, n]`.
//!
//! Row/column reductions interpret the *last* axis as columns and the product
//! of the remaining axes as rows, so they work uniformly for vectors and
//! matrices.

use crate::error::{EdgError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, validating that the buffer length matches the shape.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(EdgError::BadShape {
                op: "Tensor::new",
                shape,
                detail: format!("buffer has {} elements", data.len()),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
        }
    }

    pub fn full(shape: &[usize], v: f64) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![v; numel],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Build a matrix from equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(m * n);
        for r in rows {
            if r.len() != n {
                return Err(EdgError::BadShape {
                    op: "Tensor::from_rows",
                    shape: vec![m, r.len()],
                    detail: format!("expected every row to have {n} columns"),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Tensor {
            shape: vec![m, n],
            data,
        })
    }

    pub fn matrix(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![m, n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    /// Value of a scalar tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar(), "item() on non-scalar {:?}", self.shape);
        self.data[0]
    }

    /// Rows under the "last axis = columns" convention ([] -> 1 row).
    pub fn view_rows(&self) -> usize {
        let n = self.view_cols();
        if n == 0 {
            0
        } else {
            self.data.len() / n
        }
    }

    /// Columns under the "last axis = columns" convention ([] -> 1 column).
    pub fn view_cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    /// Element of a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// 2-D transpose as a value.
    pub fn t(&self) -> Result<Tensor> {
        transpose(self)
    }

    /// 2-D matrix product as a value.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }

    /// Rows `a..b` of a rank-2 tensor as a new tensor.
    pub fn rows_slice(&self, a: usize, b: usize) -> Result<Tensor> {
        slice_rows(self, a, b)
    }

    /// Same data under a new shape (row-major, element count preserved).
    pub fn reshaped(&self, shape: Vec<usize>) -> Result<Tensor> {
        Tensor::new(shape, self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape != b.shape {
        return Err(EdgError::ShapeMismatch {
            op,
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Value-level kernels. Each returns a fresh tensor; shape errors name the op.
// ---------------------------------------------------------------------------

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape[1] != b.shape[0] {
        return Err(EdgError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape.clone(),
            rhs: b.shape.clone(),
        });
    }
    let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
    let mut out = vec![0.0; m * n];
    // ikj loop order keeps the inner traversal contiguous in both b and out.
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

pub fn transpose(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 2 {
        return Err(EdgError::BadShape {
            op: "transpose",
            shape: x.shape.clone(),
            detail: "expected a rank-2 tensor".into(),
        });
    }
    let (m, n) = (x.shape[0], x.shape[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = x.data[i * n + j];
        }
    }
    Tensor::new(vec![n, m], out)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect(),
    })
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x - y).collect(),
    })
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

pub fn div(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("div", a, b)?;
    Ok(Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(x, y)| x / y).collect(),
    })
}

pub fn scalar_mul(x: &Tensor, c: f64) -> Tensor {
    x.map(|v| v * c)
}

pub fn scalar_add(x: &Tensor, c: f64) -> Tensor {
    x.map(|v| v + c)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// 1.0 where x > 0, else 0.0 (the relu derivative mask; its own derivative is
/// zero almost everywhere, which is how relu stays twice-differentiable on the
/// graph).
pub fn gt_zero_mask(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { 1.0 } else { 0.0 })
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn exp(x: &Tensor) -> Tensor {
    x.map(f64::exp)
}

pub fn log(x: &Tensor) -> Tensor {
    x.map(f64::ln)
}

fn rows_cols(op: &'static str, x: &Tensor) -> Result<(usize, usize)> {
    if x.rank() == 0 {
        return Err(EdgError::BadShape {
            op,
            shape: vec![],
            detail: "expected at least one axis".into(),
        });
    }
    let n = x.shape[x.rank() - 1];
    if n == 0 {
        return Err(EdgError::BadShape {
            op,
            shape: x.shape.clone(),
            detail: "last axis is empty".into(),
        });
    }
    Ok((x.data.len() / n, n))
}

/// Numerically stable softmax over the last axis.
pub fn softmax(x: &Tensor) -> Result<Tensor> {
    let (m, n) = rows_cols("softmax", x)?;
    let mut out = vec![0.0; x.data.len()];
    for i in 0..m {
        let row = &x.data[i * n..(i + 1) * n];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out[i * n..(i + 1) * n];
        let mut sum = 0.0;
        for j in 0..n {
            let e = (row[j] - mx).exp();
            orow[j] = e;
            sum += e;
        }
        for v in orow.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(x.shape.clone(), out)
}

/// Numerically stable log-softmax over the last axis. Shift-invariance of
/// softmax makes the max-subtracted form gradient-exact, not approximate.
pub fn log_softmax(x: &Tensor) -> Result<Tensor> {
    let (m, n) = rows_cols("log_softmax", x)?;
    let mut out = vec![0.0; x.data.len()];
    for i in 0..m {
        let row = &x.data[i * n..(i + 1) * n];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() + mx;
        for j in 0..n {
            out[i * n + j] = row[j] - lse;
        }
    }
    Tensor::new(x.shape.clone(), out)
}

pub fn sum(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data.iter().sum())
}

pub fn mean(x: &Tensor) -> Tensor {
    Tensor::scalar(x.data.iter().sum::<f64>() / x.data.len() as f64)
}

/// Sum over the last axis: `[.., n] -> [..]`.
pub fn sum_cols(x: &Tensor) -> Result<Tensor> {
    let (m, n) = rows_cols("sum_cols", x)?;
    let mut out = vec![0.0; m];
    for i in 0..m {
        out[i] = x.data[i * n..(i + 1) * n].iter().sum();
    }
    Tensor::new(x.shape[..x.rank() - 1].to_vec(), out)
}

/// Append an axis of extent n, repeating each element: `[..] -> [.., n]`.
pub fn bcast_cols(x: &Tensor, n: usize) -> Result<Tensor> {
    let mut shape = x.shape.clone();
    shape.push(n);
    let mut out = Vec::with_capacity(x.data.len() * n);
    for &v in &x.data {
        out.extend(std::iter::repeat(v).take(n));
    }
    Tensor::new(shape, out)
}

/// Sum over the first axis: `[m, ..] -> [..]`.
pub fn sum_axis0(x: &Tensor) -> Result<Tensor> {
    if x.rank() == 0 {
        return Err(EdgError::BadShape {
            op: "sum_axis0",
            shape: vec![],
            detail: "expected at least one axis".into(),
        });
    }
    let m = x.shape[0];
    let rest: usize = x.shape[1..].iter().product();
    let mut out = vec![0.0; rest];
    for i in 0..m {
        for j in 0..rest {
            out[j] += x.data[i * rest + j];
        }
    }
    Tensor::new(x.shape[1..].to_vec(), out)
}

/// Prepend an axis of extent m, repeating the whole tensor: `[..] -> [m, ..]`.
/// This is the leading-batch-axis broadcast (e.g. a bias row added to a batch).
pub fn bcast_rows(x: &Tensor, m: usize) -> Result<Tensor> {
    let mut shape = vec![m];
    shape.extend_from_slice(&x.shape);
    let mut out = Vec::with_capacity(x.data.len() * m);
    for _ in 0..m {
        out.extend_from_slice(&x.data);
    }
    Tensor::new(shape, out)
}

/// Fill a target shape with a scalar's value (adjoint partner of `sum`).
pub fn scalar_bcast(x: &Tensor, shape: &[usize]) -> Result<Tensor> {
    if !x.is_scalar() {
        return Err(EdgError::BadShape {
            op: "scalar_bcast",
            shape: x.shape.clone(),
            detail: "expected a scalar".into(),
        });
    }
    Ok(Tensor::full(shape, x.item()))
}

/// Gather `x[i, labels[i]]` for each row: `[b, k] -> [b]`.
pub fn pick_row(x: &Tensor, labels: &[usize]) -> Result<Tensor> {
    if x.rank() != 2 || x.shape[0] != labels.len() {
        return Err(EdgError::BadShape {
            op: "pick_row",
            shape: x.shape.clone(),
            detail: format!("expected [{}, k]", labels.len()),
        });
    }
    let k = x.shape[1];
    let mut out = Vec::with_capacity(labels.len());
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(EdgError::LabelOutOfRange {
                label: l,
                classes: k,
            });
        }
        out.push(x.data[i * k + l]);
    }
    Tensor::new(vec![labels.len()], out)
}

/// Scatter a vector back into label positions: `[b] -> [b, k]`, zeros elsewhere
/// (adjoint partner of `pick_row`).
pub fn scatter_row(x: &Tensor, labels: &[usize], k: usize) -> Result<Tensor> {
    if x.rank() != 1 || x.shape[0] != labels.len() {
        return Err(EdgError::BadShape {
            op: "scatter_row",
            shape: x.shape.clone(),
            detail: format!("expected [{}]", labels.len()),
        });
    }
    let mut out = vec![0.0; labels.len() * k];
    for (i, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(EdgError::LabelOutOfRange {
                label: l,
                classes: k,
            });
        }
        out[i * k + l] = x.data[i];
    }
    Tensor::new(vec![labels.len(), k], out)
}

/// Concatenate rank-2 tensors along axis 0.
pub fn concat0(parts: &[&Tensor]) -> Result<Tensor> {
    let first = parts.first().ok_or_else(|| EdgError::BadShape {
        op: "concat0",
        shape: vec![],
        detail: "expected at least one input".into(),
    })?;
    if first.rank() != 2 {
        return Err(EdgError::BadShape {
            op: "concat0",
            shape: first.shape.clone(),
            detail: "expected rank-2 tensors".into(),
        });
    }
    let n = first.shape[1];
    let mut rows = 0;
    let mut data = Vec::new();
    for p in parts {
        if p.rank() != 2 || p.shape[1] != n {
            return Err(EdgError::ShapeMismatch {
                op: "concat0",
                lhs: first.shape.clone(),
                rhs: p.shape.clone(),
            });
        }
        rows += p.shape[0];
        data.extend_from_slice(&p.data);
    }
    Tensor::new(vec![rows, n], data)
}

/// Rows `a..b` along axis 0 of a rank-2 tensor.
pub fn slice_rows(x: &Tensor, a: usize, b: usize) -> Result<Tensor> {
    if x.rank() != 2 || a > b || b > x.shape[0] {
        return Err(EdgError::BadShape {
            op: "slice_rows",
            shape: x.shape.clone(),
            detail: format!("invalid row range {a}..{b}"),
        });
    }
    let n = x.shape[1];
    Tensor::new(vec![b - a, n], x.data[a * n..b * n].to_vec())
}

/// Embed a rank-2 tensor into `total_rows` rows starting at `at`, zeros
/// elsewhere (adjoint partner of `slice_rows`).
pub fn pad_rows(x: &Tensor, at: usize, total_rows: usize) -> Result<Tensor> {
    if x.rank() != 2 || at + x.shape[0] > total_rows {
        return Err(EdgError::BadShape {
            op: "pad_rows",
            shape: x.shape.clone(),
            detail: format!("cannot place at row {at} within {total_rows} rows"),
        });
    }
    let n = x.shape[1];
    let mut out = vec![0.0; total_rows * n];
    out[at * n..(at + x.shape[0]) * n].copy_from_slice(&x.data);
    Tensor::new(vec![total_rows, n], out)
}
