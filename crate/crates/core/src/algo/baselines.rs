//! Reference optimizers run over the same round structure and random
//! substreams as Power-EF, so that trajectories are directly comparable.

use super::trace::{MessageTap, RoundRecord, RoundTrace, TraceDetail};
use super::{sample_perturbation, Algorithm, RunConfig};
use crate::compress::{compress, payload_bytes, SparseMessage, INDEX_BYTES, VALUE_BYTES};
use crate::error::Result;
use crate::problems::{NoiseModel, ProblemSpec};
use crate::rng::{Purpose, Streams};
use crate::vector::{mean_of, ModelVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Uncompressed distributed SGD.
    Dsgd,
    /// Compress each local gradient, no memory.
    NaiveCsgd,
    /// Classic error feedback: compress `e + grad`, keep the residual.
    ClassicEf,
}

impl Baseline {
    fn algorithm(self) -> Algorithm {
        match self {
            Baseline::Dsgd => Algorithm::Dsgd,
            Baseline::NaiveCsgd => Algorithm::NaiveCsgd,
            Baseline::ClassicEf => Algorithm::ClassicEf,
        }
    }
}

/// Every baseline adds the shared perturbation `ξ_t` to the local gradient,
/// so `r = 0` recovers the unperturbed method.
pub fn run_baseline(
    kind: Baseline,
    config: &RunConfig,
    problem: &ProblemSpec,
    noise: &NoiseModel,
) -> Result<RoundTrace> {
    run_with_tap(kind, config, problem, noise, None)
}

enum Upload {
    Dense(ModelVector),
    Sparse(SparseMessage),
}

impl Upload {
    fn bytes(&self) -> usize {
        match self {
            Upload::Dense(v) => v.dim() * VALUE_BYTES,
            Upload::Sparse(m) => payload_bytes(m, INDEX_BYTES, VALUE_BYTES),
        }
    }

    fn into_dense(self) -> ModelVector {
        match self {
            Upload::Dense(v) => v,
            Upload::Sparse(m) => m.densify(),
        }
    }
}

pub(super) fn run_with_tap(
    kind: Baseline,
    config: &RunConfig,
    problem: &ProblemSpec,
    noise: &NoiseModel,
    tap: Option<&dyn MessageTap>,
) -> Result<RoundTrace> {
    config.validate(problem)?;
    let (n, d) = (problem.n, problem.d);
    let streams = Streams::new(config.seed);
    let full = config.detail == TraceDetail::Full;

    let mut x = config.initial_model(d);
    let mut errors = vec![ModelVector::zeros(d); n];
    let mut records = Vec::with_capacity(config.rounds);

    for t in 0..config.rounds {
        let round = t as u64;
        let xi = sample_perturbation(
            &mut streams.stream(Purpose::Perturbation, 0, round),
            config.r,
            n,
            config.p_batch,
            d,
        );
        let e_mean = mean_of(&errors);
        let x_t = x.clone();

        let outcomes = config.exec.map_mut(&mut errors, |i, error| -> Result<_> {
            let mut oracle = streams.stream(Purpose::Oracle, i as u64, round);
            let grad = problem.stochastic_gradient(noise, i, &x_t, config.p_batch, &mut oracle)?;
            let mut coins = streams.stream(Purpose::Compressor, i as u64, round);
            let perturbed = grad.add(&xi);
            let upload = match kind {
                Baseline::Dsgd => Upload::Dense(perturbed),
                Baseline::NaiveCsgd => {
                    Upload::Sparse(compress(&config.compressor, &perturbed, &mut coins)?)
                }
                Baseline::ClassicEf => {
                    let memory = error.add(&perturbed);
                    let msg = compress(&config.compressor, &memory, &mut coins)?;
                    let mut residual = memory;
                    msg.sub_from(&mut residual)?;
                    *error = residual;
                    Upload::Sparse(msg)
                }
            };
            Ok((grad, upload))
        });
        let (grads, uploads): (Vec<_>, Vec<_>) =
            outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

        if let Some(tap) = tap {
            for (i, upload) in uploads.iter().enumerate() {
                match upload {
                    Upload::Dense(v) => tap.on_dense_uplink(t, i, v.dim()),
                    Upload::Sparse(m) => tap.on_uplink(t, i, m),
                }
            }
        }
        let uplink_bytes = uploads.iter().map(Upload::bytes).sum();
        let dense: Vec<ModelVector> = uploads.into_iter().map(Upload::into_dense).collect();
        let direction = mean_of(&dense);
        x.axpy(-config.eta, &direction);

        records.push(RoundRecord {
            t,
            x: x_t,
            e_mean,
            g: if full { direction.clone() } else { ModelVector::default() },
            g_client_mean: if full { direction } else { ModelVector::default() },
            xi: if full { xi } else { ModelVector::default() },
            client_grads: if full { grads } else { Vec::new() },
            uplink_bytes,
            downlink_bytes: n * d * VALUE_BYTES,
            uplink_messages: n,
        });
    }

    Ok(RoundTrace {
        algorithm: kind.algorithm().name().to_string(),
        eta: config.eta,
        records,
        final_x: x,
        final_e: mean_of(&errors),
    })
}
