//! Step size, horizon, FCC exponent and perturbation radius from the
//! first- and second-order convergence conditions.
//!
//! The multipliers `κ` are not pinned down by the analysis, so the output
//! is a starting point for tuning rather than a certificate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problems::{NoiseModel, ProblemSpec};
use crate::rng::{Purpose, Streams};
use crate::vector::ModelVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    First,
    Second,
}

impl std::str::FromStr for Order {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" | "1" => Ok(Order::First),
            "second" | "2" => Ok(Order::Second),
            other => Err(Error::config(format!("unknown schedule order `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappas {
    pub t: f64,
    pub eta: f64,
    pub p: f64,
    pub r: f64,
}

impl Default for Kappas {
    fn default() -> Self {
        Kappas {
            t: 1.0,
            eta: 1.0,
            p: 1.0,
            r: 1.0,
        }
    }
}

/// Default failure budget δ; `ι = ln(1/δ)`.
pub const DEFAULT_DELTA: f64 = 0.01;

pub fn iota_from_delta(delta: f64) -> Result<f64> {
    if delta > 0.0 && delta < 1.0 {
        Ok((1.0 / delta).ln())
    } else {
        Err(Error::config(format!("failure budget δ = {delta} must lie in (0, 1)")))
    }
}

/// Problem and algorithm quantities the schedule formulas read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleInputs {
    pub epsilon: f64,
    pub mu: f64,
    pub n: usize,
    pub d: usize,
    pub sigma: f64,
    pub l_smooth: f64,
    pub rho: f64,
    /// `f(x₀) − f_min`.
    pub f_gap: f64,
    pub f_max: f64,
    pub iota: f64,
    pub kappas: Kappas,
    /// Radius used for `χ²` in the first-order schedule.
    pub r_first_order: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamSchedule {
    pub order: Order,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub eta: f64,
    pub p: usize,
    pub r: f64,
    /// `σ² log d + r²`.
    pub chi_sq: f64,
    pub phi: f64,
    pub iota: f64,
    /// `⌈κ_p (1/μ) log(1/μ)⌉` before clamping and flooring.
    pub p_formula: usize,
    /// `⌈log(μ²/144) / log(1 − μ)⌉`, second order only.
    pub p_floor: Option<usize>,
    /// `ι / (η √(ρε))`, second order only; informational.
    pub escape_horizon: Option<f64>,
}

/// `⌈κ_p (1/μ) ln(1/μ)⌉`.
pub fn p_formula(mu: f64, kappa_p: f64) -> usize {
    (kappa_p / mu * (1.0 / mu).ln()).ceil().max(0.0) as usize
}

/// Smallest integer `p` with `p ≥ ln(μ²/144) / ln(1 − μ)`.
pub fn p_floor(mu: f64) -> usize {
    ((mu * mu / 144.0).ln() / (1.0 - mu).ln()).ceil().max(0.0) as usize
}

/// `r = κ_r σ √(ι d log d)`.
pub fn second_order_radius(kappa_r: f64, sigma: f64, iota: f64, d: usize) -> f64 {
    let d = d as f64;
    kappa_r * sigma * (iota * d * d.ln()).sqrt()
}

/// FCC exponent for the requested order, clamped to at least 1.
pub fn schedule_p(order: Order, mu: f64, kappa_p: f64) -> usize {
    let formula = p_formula(mu, kappa_p);
    let floor = match order {
        Order::First => 0,
        Order::Second => p_floor(mu),
    };
    formula.max(floor).max(1)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive, got {v}")))
    }
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

/// Evaluate the schedule given `Φ`, the initialization quality probe.
pub fn param_schedule(order: Order, inputs: &ScheduleInputs, phi: f64) -> Result<ParamSchedule> {
    let ScheduleInputs {
        epsilon,
        mu,
        n,
        d,
        sigma,
        l_smooth,
        rho,
        f_gap,
        f_max,
        iota,
        kappas,
        r_first_order,
    } = *inputs;
    positive("epsilon", epsilon)?;
    positive("mu", mu)?;
    if mu > 1.0 {
        return Err(Error::config(format!("mu = {mu} exceeds 1")));
    }
    if epsilon > 1.0 {
        return Err(Error::config(format!("epsilon = {epsilon} exceeds 1")));
    }
    positive("L", l_smooth)?;
    positive("iota", iota)?;
    for (name, k) in [("kappa_T", kappas.t), ("kappa_eta", kappas.eta), ("kappa_p", kappas.p)] {
        positive(name, k)?;
    }
    if n == 0 || d < 2 {
        return Err(Error::config("schedule needs n >= 1 and d >= 2"));
    }
    if !(sigma >= 0.0 && f_gap >= 0.0 && phi >= 0.0 && r_first_order >= 0.0) {
        return Err(Error::config("sigma, f gap, phi and r must be nonnegative"));
    }

    let logd = (d as f64).ln();
    let p = schedule_p(order, mu, kappas.p);
    let np = (n * p) as f64;

    let (rounds_f, eta, r, p_floor_v, horizon) = match order {
        Order::First => {
            let chi_sq = sigma * sigma * logd + r_first_order * r_first_order;
            let eta = kappas.eta
                * f64::min(
                    ratio(mu * epsilon, l_smooth * (mu * phi + chi_sq * iota / np).sqrt()),
                    ratio(np * epsilon * epsilon, chi_sq * l_smooth),
                );
            let rounds = kappas.t
                * f64::max(
                    ratio(f_gap, eta * epsilon * epsilon),
                    ratio(chi_sq * iota, np * epsilon * epsilon),
                );
            (rounds, eta, r_first_order, None, None)
        }
        Order::Second => {
            positive("kappa_r", kappas.r)?;
            positive("rho", rho)?;
            positive("sigma", sigma)?;
            positive("f_max", f_max)?;
            let r = second_order_radius(kappas.r, sigma, iota, d);
            let chi_sq = sigma * sigma * logd + r * r;
            let i5 = iota.powi(5);
            let eta = kappas.eta
                * [
                    ratio(mu * epsilon, i5 * l_smooth * (mu * phi + chi_sq * iota / np).sqrt()),
                    ratio(
                        iota * sigma * sigma * (rho * epsilon).sqrt() * logd,
                        l_smooth * l_smooth * (np * phi + chi_sq * iota / (mu * mu)),
                    ),
                    ratio(np * epsilon * epsilon, i5 * l_smooth * chi_sq),
                ]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let rounds = kappas.t
                * f64::max(
                    ratio(i5 * f_max, eta * epsilon * epsilon),
                    ratio(chi_sq * iota, np * epsilon * epsilon),
                );
            let horizon = iota / (eta * (rho * epsilon).sqrt());
            (rounds, eta, r, Some(p_floor(mu)), Some(horizon))
        }
    };
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::config(format!(
            "degenerate schedule: step size evaluates to {eta}"
        )));
    }
    if !(rounds_f.is_finite() && rounds_f < usize::MAX as f64) {
        return Err(Error::config(format!(
            "degenerate schedule: horizon evaluates to {rounds_f}"
        )));
    }
    Ok(ParamSchedule {
        order,
        rounds: (rounds_f.ceil() as usize).max(1),
        eta,
        p,
        r,
        chi_sq: sigma * sigma * logd + r * r,
        phi,
        iota,
        p_formula: p_formula(mu, kappas.p),
        p_floor: p_floor_v,
        escape_horizon: horizon,
    })
}

/// `Φ = (1/n) Σ ‖∇̃_p f_i(x₀) + ξ₀‖² + L̃ (f(x₀) − f_min)`, measured with one
/// oracle probe per client.
pub fn probe_phi(
    problem: &ProblemSpec,
    noise: &NoiseModel,
    x0: &ModelVector,
    p: usize,
    r: f64,
    seed: u64,
) -> Result<f64> {
    let streams = Streams::new(seed);
    let xi = crate::algo::sample_perturbation(
        &mut streams.stream(Purpose::Probe, u64::MAX, 0),
        r,
        problem.n,
        p,
        problem.d,
    );
    let mut total = 0.0;
    for i in 0..problem.n {
        let mut rng = streams.stream(Purpose::Probe, i as u64, 0);
        let g = problem.stochastic_gradient(noise, i, x0, p, &mut rng)?;
        total += g.add(&xi).norm_sq();
    }
    let gap = problem.objective(x0)? - problem.f_min;
    Ok(total / problem.n as f64 + problem.oracle_smoothness() * gap.max(0.0))
}

/// Build the schedule for a concrete problem and start point.
#[allow(clippy::too_many_arguments)]
pub fn schedule_for_problem(
    order: Order,
    problem: &ProblemSpec,
    noise: &NoiseModel,
    x0: &ModelVector,
    mu: f64,
    epsilon: f64,
    iota: f64,
    kappas: Kappas,
    r_first_order: f64,
    seed: u64,
) -> Result<ParamSchedule> {
    let inputs = ScheduleInputs {
        epsilon,
        mu,
        n: problem.n,
        d: problem.d,
        sigma: noise.sigma,
        l_smooth: problem.l_smooth,
        rho: problem.rho,
        f_gap: (problem.objective(x0)? - problem.f_min).max(0.0),
        f_max: problem.f_max,
        iota,
        kappas,
        r_first_order,
    };
    let p = schedule_p(order, mu, kappas.p);
    let r = match order {
        Order::First => r_first_order,
        Order::Second => second_order_radius(kappas.r, noise.sigma, iota, problem.d),
    };
    let phi = probe_phi(problem, noise, x0, p, r, seed)?;
    param_schedule(order, &inputs, phi)
}
