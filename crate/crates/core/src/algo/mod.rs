//! Power-EF and baseline distributed SGD over a simulated synchronous
//! parameter server.
//!
//! One round: the server samples a shared perturbation `ξ_t`, every client
//! queries its mini-batch oracle at `x_t` and uploads compressed messages,
//! then the server aggregates and broadcasts `x_{t+1}`. Client work within
//! a round is independent and may run in parallel; rounds are sequential.

mod baselines;
mod power_ef;
mod trace;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use baselines::{run_baseline, Baseline};
pub use power_ef::{run_power_ef, ClientState, ServerState, Uplink};
pub use trace::{MessageTap, RoundRecord, RoundTrace, TraceDetail};

use crate::compress::CompressorSpec;
use crate::error::{Error, Result};
use crate::parallel::Exec;
use crate::problems::{NoiseModel, ProblemSpec};
use crate::vector::ModelVector;

/// Hyperparameters of a single run.
///
/// `p_fcc` is the number of FCC rounds and `p_batch` the mini-batch size.
/// They share one symbol in the method's description and are equal unless
/// set apart with [`RunConfig::with_split_p`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub eta: f64,
    pub p_fcc: usize,
    pub p_batch: usize,
    pub r: f64,
    pub rounds: usize,
    pub compressor: CompressorSpec,
    pub seed: u64,
    /// Initial model; zeros when absent.
    pub x0: Option<ModelVector>,
    pub exec: Exec,
    pub detail: TraceDetail,
}

impl RunConfig {
    pub fn new(eta: f64, p: usize, r: f64, rounds: usize, compressor: CompressorSpec, seed: u64) -> Self {
        RunConfig {
            eta,
            p_fcc: p,
            p_batch: p,
            r,
            rounds,
            compressor,
            seed,
            x0: None,
            exec: Exec::default(),
            detail: TraceDetail::Full,
        }
    }

    pub fn with_split_p(mut self, p_fcc: usize, p_batch: usize) -> Self {
        self.p_fcc = p_fcc;
        self.p_batch = p_batch;
        self
    }

    pub fn with_x0(mut self, x0: ModelVector) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_detail(mut self, detail: TraceDetail) -> Self {
        self.detail = detail;
        self
    }

    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::config(format!("step size {} must be finite and >= 0", self.eta)));
        }
        if self.p_fcc == 0 || self.p_batch == 0 {
            return Err(Error::config("p must be at least 1"));
        }
        if !(self.r.is_finite() && self.r >= 0.0) {
            return Err(Error::config("perturbation radius r must be >= 0"));
        }
        if self.rounds == 0 {
            return Err(Error::config("round count T must be at least 1"));
        }
        self.compressor.validate(problem.d)?;
        if let Some(x0) = &self.x0 {
            crate::error::check_dim(problem.d, x0.dim())?;
        }
        Ok(())
    }

    pub(crate) fn initial_model(&self, d: usize) -> ModelVector {
        self.x0.clone().unwrap_or_else(|| ModelVector::zeros(d))
    }
}

/// Which optimizer to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    PowerEf,
    Dsgd,
    NaiveCsgd,
    ClassicEf,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::PowerEf,
        Algorithm::Dsgd,
        Algorithm::NaiveCsgd,
        Algorithm::ClassicEf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PowerEf => "power-ef",
            Algorithm::Dsgd => "dsgd",
            Algorithm::NaiveCsgd => "naive-csgd",
            Algorithm::ClassicEf => "classic-ef",
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "power-ef" | "poweref" => Ok(Algorithm::PowerEf),
            "dsgd" | "sgd" => Ok(Algorithm::Dsgd),
            "naive-csgd" | "naive" => Ok(Algorithm::NaiveCsgd),
            "classic-ef" | "ef" | "csgd" => Ok(Algorithm::ClassicEf),
            other => Err(Error::config(format!("unknown algorithm `{other}`"))),
        }
    }
}

pub fn run_algorithm(
    algorithm: Algorithm,
    config: &RunConfig,
    problem: &ProblemSpec,
    noise: &NoiseModel,
) -> Result<RoundTrace> {
    run_algorithm_with_tap(algorithm, config, problem, noise, None)
}

pub fn run_algorithm_with_tap(
    algorithm: Algorithm,
    config: &RunConfig,
    problem: &ProblemSpec,
    noise: &NoiseModel,
    tap: Option<&dyn MessageTap>,
) -> Result<RoundTrace> {
    match algorithm {
        Algorithm::PowerEf => power_ef::run_with_tap(config, problem, noise, tap),
        Algorithm::Dsgd => baselines::run_with_tap(Baseline::Dsgd, config, problem, noise, tap),
        Algorithm::NaiveCsgd => {
            baselines::run_with_tap(Baseline::NaiveCsgd, config, problem, noise, tap)
        }
        Algorithm::ClassicEf => {
            baselines::run_with_tap(Baseline::ClassicEf, config, problem, noise, tap)
        }
    }
}

/// Shared perturbation `ξ ~ N(0, r²/(n p d) · I)`. Draws nothing when `r = 0`.
pub fn sample_perturbation<R: Rng + ?Sized>(
    rng: &mut R,
    r: f64,
    n: usize,
    p: usize,
    d: usize,
) -> ModelVector {
    if r == 0.0 {
        return ModelVector::zeros(d);
    }
    let std = r / ((n * p * d) as f64).sqrt();
    ModelVector::from_vec(
        (0..d)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut *rng);
                std * z
            })
            .collect(),
    )
}
