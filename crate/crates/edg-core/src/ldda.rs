//! Closed-form linear directional domain augmentation: fit per-domain
//! least-squares classifiers, assemble the stacked Kronecker stationarity
//! system, solve for the linear domain transformer psi, and predict on unseen
//! target domains.
//!
//! Conventions fixed here (and validated by the oracle tests below):
//! * `vec` is column-major, so `vec(P Q R) = (R^T kron P) vec(Q)` holds with
//!   the standard Kronecker layout.
//! * The solved psi maps the next domain's classifier back to the current
//!   one (`psi h_{t+1} ~ h_t`); transporting *data* forward therefore applies
//!   its transpose row-wise, `x_tilde = psi^T x`, i.e. `X_tilde = X psi`.

use crate::datagen::EvolvingDataset;
use crate::error::{EdgError, Result};
use crate::tensor::Tensor;

/// Condition-number threshold above which the ridge term is enabled.
pub const COND_RIDGE_THRESHOLD: f64 = 1e8;

/// The stacked least-squares system of the stationarity equations.
#[derive(Clone, Debug)]
pub struct LinearSystem {
    /// `[(T-1)*d^2, d^2]` stacked blocks.
    pub a_stack: Tensor,
    /// `[(T-1)*d^2]` stacked right-hand sides.
    pub b_stack: Tensor,
    /// Per-domain blocks `(A^t, B^t)` retained for diagnostics.
    pub blocks: Vec<(Tensor, Tensor)>,
}

/// Solved linear domain transformer with solve diagnostics.
#[derive(Clone, Debug)]
pub struct LinearPsi {
    /// `[d, d]` transformer.
    pub psi: Tensor,
    /// `||A_stack vec(psi) - B_stack||_2`.
    pub residual: f64,
    /// Condition number of the normal matrix `A_stack^T A_stack`.
    pub cond: f64,
}

// ---------------------------------------------------------------------------
// dense linear algebra helpers (small systems: d^2 x d^2 with d <= ~30)
// ---------------------------------------------------------------------------

/// Solve `a x = b` for square `a` by Gaussian elimination with partial
/// pivoting. `a` is `[n, n]` row-major, consumed as scratch.
fn gauss_solve(mut a: Vec<f64>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap()
            })
            .unwrap();
        if a[pivot_row * n + col].abs() < f64::MIN_POSITIVE * 16.0 {
            return Err(EdgError::InvalidArg(
                "linear solve: singular matrix (ridge policy should have prevented this)".into(),
            ));
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let piv = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / piv;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col * n + k] * b[k];
        }
        b[col] = s / a[col * n + col];
    }
    Ok(b)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
fn sym_eigenvalues(m: &Tensor) -> Result<Vec<f64>> {
    let shape = m.shape();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(EdgError::BadShape {
            op: "sym_eigenvalues",
            shape: shape.to_vec(),
            detail: "expected a square matrix".into(),
        });
    }
    let n = shape[0];
    let mut a = m.data().to_vec();
    let scale = a.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1.0);
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    Ok((0..n).map(|i| a[i * n + i]).collect())
}

/// Condition number of a symmetric PSD matrix (`lambda_max / lambda_min`);
/// infinite when the smallest eigenvalue is not positive.
fn psd_cond(m: &Tensor) -> Result<f64> {
    let eigs = sym_eigenvalues(m)?;
    let max = eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(max / min)
}

/// Solve the (possibly ridge-stabilized) symmetric system `m x = rhs`: the
/// ridge `eps = 1e-8 * trace(m)/n` is added only when `cond(m)` exceeds
/// [`COND_RIDGE_THRESHOLD`]. Returns the solution and the measured condition
/// number.
fn ridge_solve(m: &Tensor, rhs: &[f64]) -> Result<(Vec<f64>, f64)> {
    let n = rhs.len();
    let cond = psd_cond(m)?;
    let mut a = m.data().to_vec();
    if cond > COND_RIDGE_THRESHOLD {
        let trace: f64 = (0..n).map(|i| a[i * n + i]).sum();
        let eps = 1e-8 * trace / n as f64;
        log::warn!(
            "ill-conditioned normal matrix (cond {cond:.3e}); applying ridge eps {eps:.3e}"
        );
        for i in 0..n {
            a[i * n + i] += eps;
        }
    }
    Ok((gauss_solve(a, rhs.to_vec())?, cond))
}

// ---------------------------------------------------------------------------
// vec / kron
// ---------------------------------------------------------------------------

/// Column-major vectorization of a `[r, c]` matrix.
pub fn vec_cm(m: &Tensor) -> Result<Tensor> {
    let shape = m.shape();
    if shape.len() != 2 {
        return Err(EdgError::BadShape {
            op: "vec_cm",
            shape: shape.to_vec(),
            detail: "expected a matrix".into(),
        });
    }
    let (r, c) = (shape[0], shape[1]);
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(m.at2(i, j));
        }
    }
    Ok(Tensor::vector(out))
}

/// Inverse of [`vec_cm`]: reshape a length `r*c` vector to `[r, c]`.
pub fn unvec_cm(v: &Tensor, r: usize, c: usize) -> Result<Tensor> {
    if v.len() != r * c {
        return Err(EdgError::BadShape {
            op: "unvec_cm",
            shape: v.shape().to_vec(),
            detail: format!("expected {r}*{c} elements"),
        });
    }
    let mut out = vec![0.0; r * c];
    for j in 0..c {
        for i in 0..r {
            out[i * c + j] = v.data()[j * r + i];
        }
    }
    Tensor::matrix(r, c, out)
}

/// Kronecker product `p kron q` in the standard layout:
/// `K[i*rows(q)+r, j*cols(q)+c] = p[i,j] * q[r,c]`.
pub fn kron(p: &Tensor, q: &Tensor) -> Result<Tensor> {
    let (ps, qs) = (p.shape(), q.shape());
    if ps.len() != 2 || qs.len() != 2 {
        return Err(EdgError::BadShape {
            op: "kron",
            shape: ps.to_vec(),
            detail: "expected two matrices".into(),
        });
    }
    let (m, n, r, c) = (ps[0], ps[1], qs[0], qs[1]);
    let mut out = vec![0.0; m * r * n * c];
    for i in 0..m {
        for j in 0..n {
            let pij = p.at2(i, j);
            if pij == 0.0 {
                continue;
            }
            for a in 0..r {
                for b in 0..c {
                    out[(i * r + a) * (n * c) + (j * c + b)] = pij * q.at2(a, b);
                }
            }
        }
    }
    Tensor::matrix(m * r, n * c, out)
}

// ---------------------------------------------------------------------------
// LDDA proper
// ---------------------------------------------------------------------------

/// Map `{0,1}` labels to `{-1,+1}` targets for the squared loss.
pub fn labels_pm(y: &[usize]) -> Tensor {
    Tensor::vector(y.iter().map(|&v| if v == 0 { -1.0 } else { 1.0 }).collect())
}

/// Least-squares classifier `h` solving the (ridge-stabilized when
/// ill-conditioned) normal equations `(X^T X + eps I) h = X^T Y`.
pub fn fit_lsq_classifier(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    let xs = x.shape();
    if xs.len() != 2 || y.shape() != [xs[0]] {
        return Err(EdgError::ShapeMismatch {
            op: "fit_lsq_classifier",
            lhs: xs.to_vec(),
            rhs: y.shape().to_vec(),
        });
    }
    let gram = x.t()?.matmul(x)?;
    let xty = x.t()?.matmul(&y.reshaped(vec![xs[0], 1])?)?;
    let (h, _cond) = ridge_solve(&gram, xty.data())?;
    Ok(Tensor::vector(h))
}

/// One stationarity block: `A^t = (h_next h_next^T) kron (X_t^T X_t)` and
/// `B^t = vec(X_t^T Y_t h_next^T)` (column-major vec).
pub fn assemble_block(x_t: &Tensor, y_t: &Tensor, h_next: &Tensor) -> Result<(Tensor, Tensor)> {
    let xs = x_t.shape();
    if xs.len() != 2 || y_t.shape() != [xs[0]] || h_next.shape() != [xs[1]] {
        return Err(EdgError::ShapeMismatch {
            op: "assemble_block",
            lhs: xs.to_vec(),
            rhs: h_next.shape().to_vec(),
        });
    }
    let d = xs[1];
    let gram = x_t.t()?.matmul(x_t)?;
    let hh = h_next
        .reshaped(vec![d, 1])?
        .matmul(&h_next.reshaped(vec![1, d])?)?;
    let a = kron(&hh, &gram)?;
    let xty = x_t.t()?.matmul(&y_t.reshaped(vec![xs[0], 1])?)?;
    let b = vec_cm(&xty.matmul(&h_next.reshaped(vec![1, d])?)?)?;
    Ok((a, b))
}

/// Assemble the full stacked system from the source domains: block `t` pairs
/// domain `t`'s data with the classifier fit on domain `t+1`.
pub fn assemble_system(ds: &EvolvingDataset) -> Result<LinearSystem> {
    let t_count = ds.sources.len();
    let d = ds.d_in();
    if t_count <= d {
        return Err(EdgError::TooFewDomains {
            need: d + 1,
            got: t_count,
        });
    }
    let mut blocks = Vec::with_capacity(t_count - 1);
    let mut a_rows = Vec::with_capacity((t_count - 1) * d * d * d * d);
    let mut b_rows = Vec::with_capacity((t_count - 1) * d * d);
    for t in 0..t_count - 1 {
        let cur = &ds.sources[t];
        let next = &ds.sources[t + 1];
        let h_next = fit_lsq_classifier(&next.x, &labels_pm(&next.y))?;
        let (a, b) = assemble_block(&cur.x, &labels_pm(&cur.y), &h_next)?;
        a_rows.extend_from_slice(a.data());
        b_rows.extend_from_slice(b.data());
        blocks.push((a, b));
    }
    Ok(LinearSystem {
        a_stack: Tensor::matrix((t_count - 1) * d * d, d * d, a_rows)?,
        b_stack: Tensor::vector(b_rows),
        blocks,
    })
}

/// Solve the stacked stationarity system for psi in the least-squares sense.
pub fn solve_psi(ds: &EvolvingDataset) -> Result<LinearPsi> {
    let d = ds.d_in();
    let sys = assemble_system(ds)?;
    let normal = sys.a_stack.t()?.matmul(&sys.a_stack)?;
    let rows = sys.b_stack.len();
    let rhs = sys
        .a_stack
        .t()?
        .matmul(&sys.b_stack.reshaped(vec![rows, 1])?)?;
    let (v, cond) = ridge_solve(&normal, rhs.data())?;
    let v = Tensor::vector(v);
    let psi = unvec_cm(&v, d, d)?;
    // Residual of the original (non-normalized) stacked system.
    let pred = sys.a_stack.matmul(&v.reshaped(vec![d * d, 1])?)?;
    let residual = pred
        .data()
        .iter()
        .zip(sys.b_stack.data())
        .map(|(p, b)| (p - b) * (p - b))
        .sum::<f64>()
        .sqrt();
    Ok(LinearPsi {
        psi,
        residual,
        cond,
    })
}

/// Accuracy on the target at `horizon` (1-based): simulate the target design
/// by transporting domain T's data forward `horizon` times
/// (`X_tilde = X psi^horizon`, i.e. row-wise `x_tilde = (psi^T)^k x`), fit a
/// classifier on the simulated set with the carried labels, and score the
/// real target samples by the sign of `x . h_tilde`.
pub fn ldda_predict(lp: &LinearPsi, ds: &EvolvingDataset, horizon: usize) -> Result<f64> {
    if horizon == 0 || horizon > ds.targets.len() {
        return Err(EdgError::MissingTarget {
            horizon,
            available: ds.targets.len(),
        });
    }
    let last = ds
        .sources
        .last()
        .ok_or_else(|| EdgError::InvalidArg("ldda_predict: no source domains".into()))?;
    let mut x_sim = last.x.clone();
    for _ in 0..horizon {
        x_sim = x_sim.matmul(&lp.psi)?;
    }
    let h = fit_lsq_classifier(&x_sim, &labels_pm(&last.y))?;
    let target = &ds.targets[horizon - 1];
    let scores = target.x.matmul(&h.reshaped(vec![h.len(), 1])?)?;
    let correct = scores
        .data()
        .iter()
        .zip(&target.y)
        .filter(|(&s, &y)| (s > 0.0) == (y == 1))
        .count();
    Ok(correct as f64 / target.y.len() as f64)
}

/// Frobenius distance between two same-shape matrices.
pub fn frob_dist(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(EdgError::ShapeMismatch {
            op: "frob_dist",
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// The reference rotation matrix in this solver's convention: psi maps the
/// next domain's classifier back to the current one, so for a boundary
/// rotating counterclockwise by `deg` the solved matrix approaches
/// `[[cos, sin], [-sin, cos]]`.
pub fn reference_rotation(deg: f64) -> Tensor {
    let (s, c) = deg.to_radians().sin_cos();
    Tensor::matrix(2, 2, vec![c, s, -s, c]).expect("static shape")
}
