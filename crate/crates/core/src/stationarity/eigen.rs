//! Smallest Hessian eigenvalue from Hessian-vector products.
//!
//! The Krylov path runs Lanczos with full reorthogonalization and solves
//! the tridiagonal projection with Sturm bisection plus inverse iteration.
//! The dense path assembles the Hessian from `d` HVP columns and hands it
//! to a symmetric eigensolver; the two share no numerical code.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::problems::HvpOracle;
use crate::rng::{Purpose, StreamRng, Streams};
use crate::vector::ModelVector;

/// Dimension up to which [`min_eigenvalue`] cross-checks against the dense path.
pub const DENSE_CHECK_MAX_DIM: usize = 50;

const MAX_RESTARTS: usize = 5;
const START_SEED: u64 = 0x5EED_1A2C;

/// A symmetric linear map given only through its action.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &ModelVector) -> Result<ModelVector>;
}

impl LinearOperator for HvpOracle<'_> {
    fn dim(&self) -> usize {
        HvpOracle::dim(self)
    }

    fn apply(&self, v: &ModelVector) -> Result<ModelVector> {
        HvpOracle::apply(self, v)
    }
}

/// Dense row-major symmetric matrix as an operator.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    dim: usize,
    rows: Vec<f64>,
}

impl DenseOperator {
    pub fn new(dim: usize, rows: Vec<f64>) -> Result<Self> {
        crate::error::check_dim(dim * dim, rows.len())?;
        Ok(DenseOperator { dim, rows })
    }
}

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, v: &ModelVector) -> Result<ModelVector> {
        crate::error::check_dim(self.dim, v.dim())?;
        Ok(ModelVector::from_vec(
            self.rows
                .chunks_exact(self.dim)
                .map(|row| row.iter().zip(v.iter()).map(|(a, b)| a * b).sum())
                .collect(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LanczosOutcome {
    pub value: f64,
    /// Operator applications performed.
    pub steps: usize,
    /// Fresh starts after invariant-subspace breakdowns.
    pub restarts: usize,
    /// `β · |s_last|` of the returned Ritz pair.
    pub residual: f64,
}

/// Lanczos estimate of the smallest eigenvalue.
///
/// Stops once the smallest Ritz pair has residual at most `tol`, or the
/// basis spans the whole space. When the Krylov space closes early the
/// iteration continues from a fresh random vector orthogonal to the current
/// basis; five consecutive failures to find one is an error.
pub fn lanczos_min_eigenvalue<O: LinearOperator + ?Sized>(
    op: &O,
    iters: usize,
    tol: f64,
    rng: &mut StreamRng,
) -> Result<LanczosOutcome> {
    if iters == 0 {
        return Err(Error::config("lanczos needs at least one iteration"));
    }
    let d = op.dim();
    let limit = iters.min(d);
    let mut basis: Vec<ModelVector> = Vec::with_capacity(limit);
    // Each block is an independent tridiagonal after a restart.
    let mut blocks: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut restarts = 0usize;
    let mut best = (f64::INFINITY, f64::INFINITY);
    let mut scale = 0.0f64;

    let mut q = fresh_direction(rng, &basis, d, 0)?;
    blocks.push((Vec::new(), Vec::new()));
    loop {
        let mut w = op.apply(&q)?;
        let alpha = q.dot(&w);
        w.axpy(-alpha, &q);
        if let (Some(prev), Some(&beta)) = (basis.last(), blocks.last().unwrap().1.last()) {
            w.axpy(-beta, prev);
        }
        basis.push(q);
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&w);
                w.axpy(-c, b);
            }
        }
        let beta = w.norm();
        scale = scale.max(alpha.abs()).max(beta);

        let (alphas, betas) = blocks.last_mut().unwrap();
        alphas.push(alpha);
        let (theta, last) = tridiagonal_min_pair(alphas, betas);
        let residual = beta * last.abs();
        let broke_down = beta <= 1e-12 * scale.max(f64::MIN_POSITIVE);

        if theta < best.0 {
            best = (theta, if broke_down { 0.0 } else { residual });
        }
        let converged = !broke_down && residual <= tol;
        if converged || basis.len() >= limit {
            return Ok(LanczosOutcome {
                value: best.0,
                steps: basis.len(),
                restarts,
                residual: best.1,
            });
        }
        if broke_down {
            restarts += 1;
            q = fresh_direction(rng, &basis, d, basis.len())?;
            blocks.push((Vec::new(), Vec::new()));
        } else {
            betas.push(beta);
            q = w.scale(1.0 / beta);
        }
    }
}

fn fresh_direction(
    rng: &mut StreamRng,
    basis: &[ModelVector],
    d: usize,
    step: usize,
) -> Result<ModelVector> {
    for _ in 0..MAX_RESTARTS {
        let mut v = ModelVector::from_vec((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
        for _ in 0..2 {
            for b in basis {
                let c = b.dot(&v);
                v.axpy(-c, b);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            return Ok(v.scale(1.0 / norm));
        }
    }
    Err(Error::LanczosBreakdown {
        step,
        restarts: MAX_RESTARTS,
    })
}

/// Number of eigenvalues of the tridiagonal `(alphas, betas)` below `x`.
fn sturm_count(alphas: &[f64], betas: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0f64;
    for (i, &a) in alphas.iter().enumerate() {
        let off = if i == 0 { 0.0 } else { betas[i - 1] * betas[i - 1] / q };
        q = a - x - off;
        if q == 0.0 {
            q = -f64::EPSILON * (a.abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix and the last
/// component of its unit eigenvector.
fn tridiagonal_min_pair(alphas: &[f64], betas: &[f64]) -> (f64, f64) {
    let m = alphas.len();
    if m == 1 {
        return (alphas[0], 1.0);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..m {
        let left = if i > 0 { betas[i - 1].abs() } else { 0.0 };
        let right = if i + 1 < m { betas[i].abs() } else { 0.0 };
        lo = lo.min(alphas[i] - left - right);
        hi = hi.max(alphas[i] + left + right);
    }
    let span = (hi - lo).abs().max(f64::MIN_POSITIVE);
    lo -= f64::EPSILON * span;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(alphas, betas, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let theta = hi;

    // Inverse iteration on (T − θ I) with a Thomas solve.
    let shift = theta - 4.0 * f64::EPSILON * span;
    let mut y = vec![1.0; m];
    for _ in 0..3 {
        y = thomas_solve(alphas, betas, shift, &y);
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        for v in y.iter_mut() {
            *v /= norm;
        }
    }
    (theta, y[m - 1])
}

fn thomas_solve(alphas: &[f64], betas: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let m = alphas.len();
    let tiny = f64::EPSILON * alphas.iter().fold(1.0f64, |a, b| a.max(b.abs()));
    let mut diag = vec![0.0; m];
    let mut y = rhs.to_vec();
    diag[0] = alphas[0] - shift;
    for i in 1..m {
        if diag[i - 1].abs() < tiny {
            diag[i - 1] = tiny.copysign(diag[i - 1]);
        }
        let factor = betas[i - 1] / diag[i - 1];
        diag[i] = alphas[i] - shift - factor * betas[i - 1];
        y[i] -= factor * y[i - 1];
    }
    if diag[m - 1].abs() < tiny {
        diag[m - 1] = tiny.copysign(diag[m - 1]);
    }
    y[m - 1] /= diag[m - 1];
    for i in (0..m - 1).rev() {
        y[i] = (y[i] - betas[i] * y[i + 1]) / diag[i];
    }
    y
}

/// Smallest eigenvalue of the operator assembled densely from its columns.
pub fn dense_min_eigenvalue<O: LinearOperator + ?Sized>(op: &O) -> Result<f64> {
    let d = op.dim();
    let mut columns = Vec::with_capacity(d * d);
    for j in 0..d {
        columns.extend_from_slice(op.apply(&ModelVector::basis(d, j))?.as_slice());
    }
    let raw = DMatrix::from_column_slice(d, d, &columns);
    let sym = (&raw + raw.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// Smallest eigenvalue of `∇²f(x)`, cross-checked densely for `d ≤ 50`.
pub fn min_eigenvalue(hvp: &HvpOracle<'_>, iters: usize, tol: f64) -> Result<f64> {
    min_eigenvalue_of(hvp, iters, tol)
}

pub fn min_eigenvalue_of<O: LinearOperator + ?Sized>(op: &O, iters: usize, tol: f64) -> Result<f64> {
    let mut rng = Streams::new(START_SEED).stream(Purpose::Eigen, 0, 0);
    let outcome = lanczos_min_eigenvalue(op, iters, tol, &mut rng)?;
    if op.dim() <= DENSE_CHECK_MAX_DIM {
        let dense = dense_min_eigenvalue(op)?;
        if (dense - outcome.value).abs() > tol {
            return Err(Error::EigenCrossCheck {
                lanczos: outcome.value,
                dense,
                tol,
            });
        }
    }
    Ok(outcome.value)
}
