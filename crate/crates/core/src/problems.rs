//! Synthetic finite-sum objectives `f = (1/n) Σ f_i` with closed-form
//! gradients and Hessian-vector products.
//!
//! Client heterogeneity is added as zero-sum perturbations on top of a
//! shared global objective. The perturbations for clients `0..n-1` are drawn
//! at random and the last client takes the negated running sum, so the
//! ascending-order sum of perturbations is exactly zero and the global
//! objective does not depend on the heterogeneity level.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{Purpose, Streams};
use crate::vector::{mean_of, ModelVector};

/// Half-width of the box `‖x‖_∞ ≤ B` on which quartic constants are reported.
pub const DEFAULT_BOX_BOUND: f64 = 10.0;

/// Eigenvalue range of the global quadratic's Hessian.
const QUADRATIC_SPECTRUM: (f64, f64) = (1.0, 4.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `f(x) = (x₁² − 1)²/4 + ½ Σ_{j≥2} x_j²`: strict saddle at the origin,
    /// minima at `x₁ = ±1`.
    SaddleQuartic,
    /// `f_i(x) = ½ xᵀA_i x + b_iᵀx` with `A_i = A + Δ_i`.
    HeterogeneousQuadratic,
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "saddle_quartic" | "quartic" | "saddle" => Ok(Family::SaddleQuartic),
            "heterogeneous_quadratic" | "quadratic" => Ok(Family::HeterogeneousQuadratic),
            other => Err(Error::config(format!("unknown problem family `{other}`"))),
        }
    }
}

/// Row-major symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    fn matvec(&self, x: &[f64]) -> ModelVector {
        let out = self
            .data
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect();
        ModelVector::from_vec(out)
    }

    fn quad_form(&self, x: &[f64]) -> f64 {
        self.matvec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    fn add(&self, other: &SymMatrix) -> SymMatrix {
        SymMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        }
    }

    fn spectral_norm(&self) -> f64 {
        SymmetricEigen::new(self.to_nalgebra())
            .eigenvalues
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Objective {
    Quartic,
    Quadratic {
        hessian: SymMatrix,
        linear: ModelVector,
        minimizer: ModelVector,
    },
}

/// Per-client perturbation `½ xᵀΔ_i x + u_iᵀx` (Δ_i absent for the quartic).
#[derive(Debug, Clone, PartialEq)]
struct LocalShift {
    curvature: Option<SymMatrix>,
    linear: ModelVector,
}

/// An immutable finite-sum problem instance together with its constants.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub family: Family,
    pub n: usize,
    pub d: usize,
    pub heterogeneity: f64,
    pub seed: u64,
    /// Smoothness constant of the global gradient (on the box for the quartic).
    pub l_smooth: f64,
    /// Hessian-Lipschitz constant (on the box for the quartic).
    pub rho: f64,
    pub f_min: f64,
    /// Bound on `|f(x₁) − f(x₂)|` over the box.
    pub f_max: f64,
    pub box_bound: f64,
    /// Smoothness constants of the local gradients.
    pub local_l: Vec<f64>,
    objective: Objective,
    /// `None` when the split is homogeneous.
    shifts: Option<Vec<LocalShift>>,
}

/// Additive Gaussian oracle noise with `E‖ζ‖² = σ²` per query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Self {
        NoiseModel { sigma }
    }

    pub fn noiseless() -> Self {
        NoiseModel { sigma: 0.0 }
    }

    /// Per-coordinate standard deviation `σ/√d`.
    pub fn coordinate_std(&self, d: usize) -> f64 {
        self.sigma / (d as f64).sqrt()
    }
}

pub fn make_problem(
    family: Family,
    n: usize,
    d: usize,
    heterogeneity: f64,
    seed: u64,
) -> Result<ProblemSpec> {
    make_problem_in_box(family, n, d, heterogeneity, seed, DEFAULT_BOX_BOUND)
}

pub fn make_problem_in_box(
    family: Family,
    n: usize,
    d: usize,
    heterogeneity: f64,
    seed: u64,
    box_bound: f64,
) -> Result<ProblemSpec> {
    if n == 0 {
        return Err(Error::config("client count n must be at least 1"));
    }
    if d < 2 {
        return Err(Error::config("dimension d must be at least 2"));
    }
    if !(heterogeneity >= 0.0 && heterogeneity.is_finite()) {
        return Err(Error::config("heterogeneity must be a finite nonnegative number"));
    }
    if !(box_bound > 0.0 && box_bound.is_finite()) {
        return Err(Error::config("box bound must be positive"));
    }
    let streams = Streams::new(seed);
    let with_curvature = family == Family::HeterogeneousQuadratic;
    let shifts = (heterogeneity > 0.0 && n > 1)
        .then(|| draw_shifts(&streams, n, d, heterogeneity, with_curvature));

    let spec = match family {
        Family::SaddleQuartic => {
            let b = box_bound;
            let l_smooth = (3.0 * b * b - 1.0).max(1.0);
            ProblemSpec {
                family,
                n,
                d,
                heterogeneity,
                seed,
                l_smooth,
                rho: 6.0 * b,
                f_min: 0.0,
                f_max: (b * b - 1.0).powi(2) / 4.0 + 0.5 * (d as f64 - 1.0) * b * b,
                box_bound,
                local_l: vec![l_smooth; n],
                objective: Objective::Quartic,
                shifts,
            }
        }
        Family::HeterogeneousQuadratic => {
            let mut rng = streams.stream(Purpose::ProblemGlobal, 0, 0);
            let basis = random_orthogonal(&mut rng, d);
            let (lo, hi) = QUADRATIC_SPECTRUM;
            let spectrum: Vec<f64> = (0..d)
                .map(|j| lo + (hi - lo) * j as f64 / (d - 1) as f64)
                .collect();
            let hessian = compose(&basis, &spectrum);
            let linear = gaussian_vector(&mut rng, d, 1.0);
            // x* = −A⁻¹b = −Q Λ⁻¹ Qᵀ b.
            let projected: Vec<f64> = basis
                .iter()
                .zip(&spectrum)
                .map(|(q, lam)| q.dot(&linear) / lam)
                .collect();
            let mut minimizer = ModelVector::zeros(d);
            for (q, c) in basis.iter().zip(&projected) {
                minimizer.axpy(-c, q);
            }
            let f_min = 0.5 * linear.dot(&minimizer);
            let l1: f64 = linear.iter().map(|v| v.abs()).sum();
            let f_upper = 0.5 * hi * d as f64 * box_bound * box_bound + l1 * box_bound;
            let local_l = match &shifts {
                None => vec![hi; n],
                Some(list) => list
                    .iter()
                    .map(|s| {
                        s.curvature
                            .as_ref()
                            .map_or(hi, |delta| hessian.add(delta).spectral_norm())
                    })
                    .collect(),
            };
            ProblemSpec {
                family,
                n,
                d,
                heterogeneity,
                seed,
                l_smooth: hi,
                rho: 0.0,
                f_min,
                f_max: f_upper - f_min,
                box_bound,
                local_l,
                objective: Objective::Quadratic {
                    hessian,
                    linear,
                    minimizer,
                },
                shifts,
            }
        }
    };
    Ok(spec)
}

fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, d: usize, scale: f64) -> ModelVector {
    ModelVector::from_vec(
        (0..d)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect::<Vec<f64>>(),
    )
}

fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<ModelVector> {
    let mut basis: Vec<ModelVector> = Vec::with_capacity(d);
    while basis.len() < d {
        let mut v = gaussian_vector(rng, d, 1.0);
        // Two passes of modified Gram-Schmidt.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v.scale(1.0 / norm));
        }
    }
    basis
}

/// `Σ_j λ_j q_j q_jᵀ`, symmetrized exactly.
fn compose(basis: &[ModelVector], spectrum: &[f64]) -> SymMatrix {
    let d = basis.len();
    let mut data = vec![0.0; d * d];
    for r in 0..d {
        for c in r..d {
            let v: f64 = basis
                .iter()
                .zip(spectrum)
                .map(|(q, lam)| lam * q[r] * q[c])
                .sum();
            data[r * d + c] = v;
            data[c * d + r] = v;
        }
    }
    SymMatrix { dim: d, data }
}

fn draw_shifts(
    streams: &Streams,
    n: usize,
    d: usize,
    heterogeneity: f64,
    with_curvature: bool,
) -> Vec<LocalShift> {
    let entry = Normal::new(0.0, 1.0 / (d as f64).sqrt()).unwrap();
    let mut shifts: Vec<LocalShift> = (0..n - 1)
        .map(|i| {
            let mut rng = streams.stream(Purpose::ProblemLocal, i as u64, 0);
            let linear = gaussian_vector(&mut rng, d, heterogeneity);
            let curvature = with_curvature.then(|| {
                let mut data = vec![0.0; d * d];
                for r in 0..d {
                    for c in r..d {
                        let v = heterogeneity * entry.sample(&mut rng);
                        data[r * d + c] = v;
                        data[c * d + r] = v;
                    }
                }
                SymMatrix { dim: d, data }
            });
            LocalShift { curvature, linear }
        })
        .collect();

    let mut linear_sum = ModelVector::zeros(d);
    for s in &shifts {
        linear_sum.add_assign(&s.linear);
    }
    let curvature = with_curvature.then(|| {
        let mut sum = vec![0.0; d * d];
        for s in &shifts {
            let m = s.curvature.as_ref().unwrap();
            for (a, b) in sum.iter_mut().zip(&m.data) {
                *a += b;
            }
        }
        SymMatrix {
            dim: d,
            data: sum.into_iter().map(|v| -v).collect(),
        }
    });
    shifts.push(LocalShift {
        curvature,
        linear: linear_sum.scale(-1.0),
    });
    shifts
}

impl ProblemSpec {
    fn check_client(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::ClientOutOfRange {
                index: i,
                n: self.n,
            })
        }
    }

    /// Global objective in closed form.
    pub fn objective(&self, x: &ModelVector) -> Result<f64> {
        check_dim(self.d, x.dim())?;
        Ok(match &self.objective {
            Objective::Quartic => {
                let head = x[0] * x[0] - 1.0;
                let tail: f64 = x.as_slice()[1..].iter().map(|v| v * v).sum();
                0.25 * head * head + 0.5 * tail
            }
            Objective::Quadratic { hessian, linear, .. } => {
                0.5 * hessian.quad_form(x) + linear.dot(x)
            }
        })
    }

    pub fn local_objective(&self, i: usize, x: &ModelVector) -> Result<f64> {
        self.check_client(i)?;
        let base = self.objective(x)?;
        Ok(match &self.shifts {
            None => base,
            Some(shifts) => {
                let s = &shifts[i];
                let curv = s.curvature.as_ref().map_or(0.0, |m| 0.5 * m.quad_form(x));
                base + curv + s.linear.dot(x)
            }
        })
    }

    /// Closed-form `∇f(x)` of the global objective.
    pub fn gradient_direct(&self, x: &ModelVector) -> Result<ModelVector> {
        check_dim(self.d, x.dim())?;
        Ok(match &self.objective {
            Objective::Quartic => {
                let mut g = x.clone();
                g[0] = (x[0] * x[0] - 1.0) * x[0];
                g
            }
            Objective::Quadratic { hessian, linear, .. } => hessian.matvec(x).add(linear),
        })
    }

    /// Exact `∇f_i(x)`.
    pub fn local_gradient(&self, i: usize, x: &ModelVector) -> Result<ModelVector> {
        self.check_client(i)?;
        let mut g = self.gradient_direct(x)?;
        if let Some(shifts) = &self.shifts {
            let s = &shifts[i];
            if let Some(m) = &s.curvature {
                g.add_assign(&m.matvec(x));
            }
            g.add_assign(&s.linear);
        }
        Ok(g)
    }

    /// `(1/n) Σ_i ∇f_i(x)`, summed in ascending client order.
    pub fn global_gradient(&self, x: &ModelVector) -> Result<ModelVector> {
        let locals = (0..self.n)
            .map(|i| self.local_gradient(i, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(mean_of(&locals))
    }

    /// Mini-batch oracle: `∇f_i(x)` plus the mean of `batch` independent
    /// Gaussian draws with per-coordinate variance `σ²/d`.
    pub fn stochastic_gradient<R: Rng + ?Sized>(
        &self,
        noise: &NoiseModel,
        i: usize,
        x: &ModelVector,
        batch: usize,
        rng: &mut R,
    ) -> Result<ModelVector> {
        if batch == 0 {
            return Err(Error::config("mini-batch size must be at least 1"));
        }
        let mut g = self.local_gradient(i, x)?;
        if noise.sigma > 0.0 {
            let std = noise.coordinate_std(self.d);
            let mut acc = ModelVector::zeros(self.d);
            for _ in 0..batch {
                for a in acc.iter_mut() {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    *a += std * z;
                }
            }
            g.axpy(1.0 / batch as f64, &acc);
        }
        Ok(g)
    }

    /// Exact `∇²f(x) v`.
    pub fn hvp(&self, x: &ModelVector, v: &ModelVector) -> Result<ModelVector> {
        check_dim(self.d, x.dim())?;
        check_dim(self.d, v.dim())?;
        Ok(match &self.objective {
            Objective::Quartic => {
                let mut out = v.clone();
                out[0] = (3.0 * x[0] * x[0] - 1.0) * v[0];
                out
            }
            Objective::Quadratic { hessian, .. } => hessian.matvec(v),
        })
    }

    pub fn hvp_oracle(&self, x: ModelVector) -> HvpOracle<'_> {
        HvpOracle { problem: self, x }
    }

    /// Global minimizer for the quadratic family.
    pub fn minimizer(&self) -> Option<&ModelVector> {
        match &self.objective {
            Objective::Quadratic { minimizer, .. } => Some(minimizer),
            Objective::Quartic => None,
        }
    }

    /// `L̃ = √((1/n) Σ L̃_i²)`; with additive noise `L̃_i = L_i`.
    pub fn oracle_smoothness(&self) -> f64 {
        let mean_sq = self.local_l.iter().map(|l| l * l).sum::<f64>() / self.n as f64;
        mean_sq.sqrt()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.shifts.is_none()
    }
}

/// Hessian-vector products of `f` at a fixed point.
#[derive(Debug, Clone)]
pub struct HvpOracle<'a> {
    problem: &'a ProblemSpec,
    x: ModelVector,
}

impl HvpOracle<'_> {
    pub fn dim(&self) -> usize {
        self.problem.d
    }

    pub fn point(&self) -> &ModelVector {
        &self.x
    }

    pub fn apply(&self, v: &ModelVector) -> Result<ModelVector> {
        self.problem.hvp(&self.x, v)
    }
}
