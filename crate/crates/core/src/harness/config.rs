//! Flat key/value experiment configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algo::Algorithm;
use crate::compress::CompressorSpec;
use crate::error::{Error, Result};
use crate::problems::{make_problem_in_box, Family, NoiseModel, ProblemSpec, DEFAULT_BOX_BOUND};
use crate::stationarity::{Kappas, Order, DEFAULT_DELTA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    Topk,
    Randomk,
    Rounding,
}

impl std::str::FromStr for CompressorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "topk" | "top" => Ok(CompressorKind::Topk),
            "randomk" | "randk" | "random" => Ok(CompressorKind::Randomk),
            "rounding" | "biasedrounding" | "round" => Ok(CompressorKind::Rounding),
            other => Err(Error::config(format!("unknown compressor `{other}`"))),
        }
    }
}

fn default_n() -> usize {
    4
}
fn default_d() -> usize {
    10
}
fn default_algo() -> Algorithm {
    Algorithm::PowerEf
}
fn default_one() -> usize {
    1
}
fn default_epsilon() -> f64 {
    0.1
}
fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_kappa() -> f64 {
    1.0
}
fn default_compressor() -> CompressorKind {
    CompressorKind::Topk
}
fn default_base() -> f64 {
    2.0
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_lambda_stride() -> usize {
    10
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_box() -> f64 {
    DEFAULT_BOX_BOUND
}
fn default_escape_delta() -> f64 {
    0.1
}

/// Everything needed to reproduce a batch of runs.
///
/// `eta`, `T`, `p` and `r` may be left unset when `schedule` is given; the
/// schedule fills whatever is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: Family,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default)]
    pub heterogeneity: f64,
    #[serde(default)]
    pub sigma: f64,
    /// Seed for problem construction; shared by all run seeds.
    #[serde(default)]
    pub problem_seed: u64,
    #[serde(default = "default_box")]
    pub box_bound: f64,

    #[serde(default = "default_algo")]
    pub algo: Algorithm,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_fcc: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Order>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_kappa")]
    pub kappa_t: f64,
    #[serde(default = "default_kappa")]
    pub kappa_eta: f64,
    #[serde(default = "default_kappa")]
    pub kappa_p: f64,
    #[serde(default = "default_kappa")]
    pub kappa_r: f64,

    #[serde(default = "default_compressor")]
    pub compressor: CompressorKind,
    /// Coordinates kept by top-k / random-k; defaults to `max(1, d/100)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_base")]
    pub base: f64,

    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_one")]
    pub record_stride: usize,
    /// Hessian checks run on every `lambda_stride`-th iterate; 0 disables.
    #[serde(default = "default_lambda_stride")]
    pub lambda_stride: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,

    /// Start point `x₀ = init_offset·e₁ + init_scale·z`, `z` standard normal.
    #[serde(default)]
    pub init_offset: f64,
    #[serde(default)]
    pub init_scale: f64,
    /// Gradient-norm level for the bytes-to-threshold column.
    #[serde(default = "default_epsilon")]
    pub threshold: f64,
    /// Objective drop below the saddle value that counts as an escape.
    #[serde(default = "default_escape_delta")]
    pub escape_delta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("family = \"heterogeneous_quadratic\"").expect("defaults parse")
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn compressor_spec(&self) -> Result<CompressorSpec> {
        let spec = match self.compressor {
            CompressorKind::Topk => CompressorSpec::TopK { k: self.effective_k() },
            CompressorKind::Randomk => CompressorSpec::RandomK { k: self.effective_k() },
            CompressorKind::Rounding => CompressorSpec::BiasedRounding { base: self.base },
        };
        spec.validate(self.d)?;
        Ok(spec)
    }

    fn effective_k(&self) -> usize {
        self.k.unwrap_or((self.d / 100).max(1))
    }

    pub fn kappas(&self) -> Kappas {
        Kappas {
            t: self.kappa_t,
            eta: self.kappa_eta,
            p: self.kappa_p,
            r: self.kappa_r,
        }
    }

    pub fn noise(&self) -> NoiseModel {
        NoiseModel::gaussian(self.sigma)
    }

    pub fn build_problem(&self) -> Result<ProblemSpec> {
        make_problem_in_box(
            self.family,
            self.n,
            self.d,
            self.heterogeneity,
            self.problem_seed,
            self.box_bound,
        )
    }

    /// Problem identity used to decide whether runs are comparable.
    pub fn same_problem(&self, other: &ExperimentConfig) -> bool {
        self.family == other.family
            && self.n == other.n
            && self.d == other.d
            && self.heterogeneity.to_bits() == other.heterogeneity.to_bits()
            && self.sigma.to_bits() == other.sigma.to_bits()
            && self.problem_seed == other.problem_seed
            && self.box_bound.to_bits() == other.box_bound.to_bits()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::config("n and d must be positive"));
        }
        if !(self.sigma >= 0.0 && self.heterogeneity >= 0.0) {
            return Err(Error::config("sigma and heterogeneity must be nonnegative"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("at least one seed is required"));
        }
        if self.record_stride == 0 {
            return Err(Error::config("record_stride must be at least 1"));
        }
        if self.schedule.is_none() && (self.eta.is_none() || self.rounds.is_none()) {
            return Err(Error::config("eta and T are required unless a schedule is requested"));
        }
        self.compressor_spec()?;
        Ok(())
    }
}
