//! First- and second-order stationarity checks and parameter schedules.

mod eigen;
mod schedule;

use serde::{Deserialize, Serialize};

pub use eigen::{
    dense_min_eigenvalue, lanczos_min_eigenvalue, min_eigenvalue, min_eigenvalue_of, DenseOperator,
    LanczosOutcome, LinearOperator, DENSE_CHECK_MAX_DIM,
};
pub use schedule::{
    iota_from_delta, p_floor, p_formula, param_schedule, probe_phi, schedule_for_problem,
    schedule_p, second_order_radius, Kappas, Order, ParamSchedule, ScheduleInputs, DEFAULT_DELTA,
};

use crate::algo::RoundTrace;
use crate::error::{Error, Result};
use crate::problems::ProblemSpec;
use crate::vector::ModelVector;

/// Default residual tolerance for eigenvalue estimates.
pub const DEFAULT_EIGEN_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StationarityClass {
    /// `‖∇f‖ > ε`.
    NotFOSP,
    /// `‖∇f‖ ≤ ε` and `λ_min < −√(ρε)`.
    StrictSaddle,
    /// `‖∇f‖ ≤ ε` and `λ_min ≥ −√(ρε)`.
    SOSP,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub grad_norm: f64,
    pub lambda_min: f64,
    pub class: StationarityClass,
    pub epsilon: f64,
    pub rho: f64,
}

impl StationarityReport {
    /// Build a report from precomputed quantities.
    pub fn from_parts(grad_norm: f64, lambda_min: f64, epsilon: f64, rho: f64) -> Self {
        let class = if grad_norm > epsilon {
            StationarityClass::NotFOSP
        } else if lambda_min < -(rho * epsilon).sqrt() {
            StationarityClass::StrictSaddle
        } else {
            StationarityClass::SOSP
        };
        StationarityReport {
            grad_norm,
            lambda_min,
            class,
            epsilon,
            rho,
        }
    }

    /// `-√(ρε)`.
    pub fn curvature_threshold(&self) -> f64 {
        -(self.rho * self.epsilon).sqrt()
    }
}

/// Classify `x` using the exact gradient and a full-dimension Lanczos solve.
pub fn classify(problem: &ProblemSpec, x: &ModelVector, epsilon: f64, rho: f64) -> Result<StationarityReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::config("epsilon must be positive"));
    }
    if rho.is_nan() || rho < 0.0 {
        return Err(Error::config("rho must be nonnegative"));
    }
    let grad_norm = problem.gradient_direct(x)?.norm();
    let lambda_min = min_eigenvalue(
        &problem.hvp_oracle(x.clone()),
        problem.d,
        DEFAULT_EIGEN_TOL,
    )?;
    Ok(StationarityReport::from_parts(grad_norm, lambda_min, epsilon, rho))
}

/// Fraction of `x_0 … x_T` with `‖∇f(x_t)‖ ≤ ε`.
pub fn fosp_fraction(trace: &RoundTrace, problem: &ProblemSpec, epsilon: f64) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for x in trace.iterates() {
        total += 1;
        if problem.gradient_direct(x)?.norm() <= epsilon {
            hits += 1;
        }
    }
    Ok(hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{make_problem, Family};

    #[test]
    fn quartic_origin_is_strict_saddle() {
        let p = make_problem(Family::SaddleQuartic, 1, 2, 0.0, 0).unwrap();
        let rep = classify(&p, &ModelVector::zeros(2), 0.1, 1.0).unwrap();
        assert_eq!(rep.grad_norm, 0.0);
        assert!((rep.lambda_min + 1.0).abs() < 1e-8);
        assert_eq!(rep.class, StationarityClass::StrictSaddle);
    }

    #[test]
    fn quartic_minimum_is_sosp() {
        let p = make_problem(Family::SaddleQuartic, 1, 2, 0.0, 0).unwrap();
        let x = ModelVector::from_vec(vec![1.0, 0.0]);
        let rep = classify(&p, &x, 0.1, 1.0).unwrap();
        assert!((rep.lambda_min - 1.0).abs() < 1e-8);
        assert_eq!(rep.class, StationarityClass::SOSP);
    }

    #[test]
    fn large_gradient_is_not_fosp() {
        let rep = StationarityReport::from_parts(10.0, -100.0, 0.1, 1.0);
        assert_eq!(rep.class, StationarityClass::NotFOSP);
        assert!(classify(
            &make_problem(Family::SaddleQuartic, 1, 2, 0.0, 0).unwrap(),
            &ModelVector::zeros(2),
            0.0,
            1.0
        )
        .is_err());
    }

    #[test]
    fn identity_hessian_quadratic() {
        let op = DenseOperator::new(3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((min_eigenvalue_of(&op, 3, 1e-10).unwrap() - 1.0).abs() < 1e-12);
    }
}
