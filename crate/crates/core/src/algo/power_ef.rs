//! Client and server state machines of Power-EF.
//!
//! Each client keeps its error memory `e_t`, the previous error `e_{t-1}`
//! and its running gradient estimate `g_{t-1}`. Per round it uploads the FCC
//! pieces of the error change and one compressed correction.

use rand::Rng;

use super::trace::{MessageTap, RoundRecord, RoundTrace, TraceDetail};
use super::{sample_perturbation, RunConfig};
use crate::compress::{compress, fcc_decode, fcc_encode, CompressorSpec, FccPacket, SparseMessage, INDEX_BYTES, VALUE_BYTES};
use crate::error::{check_dim, Error, Result};
use crate::problems::{NoiseModel, ProblemSpec};
use crate::rng::{Purpose, Streams};
use crate::vector::{mean_of, ModelVector};

/// What one client uploads in one round.
#[derive(Debug, Clone, PartialEq)]
pub struct Uplink {
    /// `C(v_1), …, C(v_p)` for the error change `e_t − e_{t−1}`.
    pub fcc: FccPacket,
    /// `c_t`.
    pub correction: SparseMessage,
}

impl Uplink {
    pub fn payload_bytes(&self) -> usize {
        self.fcc.payload_bytes(INDEX_BYTES, VALUE_BYTES)
            + crate::compress::payload_bytes(&self.correction, INDEX_BYTES, VALUE_BYTES)
    }

    pub fn message_count(&self) -> usize {
        self.fcc.len() + 1
    }

    pub fn messages(&self) -> impl Iterator<Item = &SparseMessage> + '_ {
        self.fcc
            .pieces()
            .iter()
            .chain(std::iter::once(&self.correction))
    }
}

/// `estimate += w + densify(c)`, shared by client and server so both sides
/// perform identical floating-point operations.
fn advance_estimate(estimate: &mut ModelVector, w: &ModelVector, c: &SparseMessage) -> Result<()> {
    estimate.add_assign(w);
    c.add_into(estimate)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    /// `e_t`.
    pub e_cur: ModelVector,
    /// `e_{t−1}`.
    pub e_prev: ModelVector,
    /// `g_{t−1}`.
    pub g_prev: ModelVector,
}

impl ClientState {
    pub fn new(d: usize) -> Self {
        ClientState {
            e_cur: ModelVector::zeros(d),
            e_prev: ModelVector::zeros(d),
            g_prev: ModelVector::zeros(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.e_cur.dim()
    }

    /// Run one client round given the raw mini-batch gradient `grad` and the
    /// shared perturbation `xi`, advancing the state and returning the uplink.
    ///
    /// ```text
    /// w  = FCC_p(e_t − e_{t−1})
    /// c  = C(e_t + grad + ξ − g_{t−1} − w)
    /// g_t = g_{t−1} + w + c
    /// e_{t+1} = e_t + grad + ξ − g_t
    /// ```
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        grad: &ModelVector,
        xi: &ModelVector,
        spec: &CompressorSpec,
        p: usize,
        rng: &mut R,
    ) -> Result<Uplink> {
        let d = self.dim();
        check_dim(d, grad.dim())?;
        check_dim(d, xi.dim())?;

        let change = self.e_cur.sub(&self.e_prev);
        let fcc = fcc_encode(spec, &change, p, rng)?;
        let w = fcc_decode(&fcc)?;

        let mut target = self.e_cur.add(grad);
        target.add_assign(xi);

        let mut innovation = target.sub(&self.g_prev);
        innovation.sub_assign(&w);
        let correction = compress(spec, &innovation, rng)?;

        let mut g_new = self.g_prev.clone();
        advance_estimate(&mut g_new, &w, &correction)?;
        let e_next = target.sub(&g_new);

        self.e_prev = std::mem::replace(&mut self.e_cur, e_next);
        self.g_prev = g_new;
        Ok(Uplink { fcc, correction })
    }
}

/// Server-side model and aggregate gradient estimate.
///
/// The server replays each client's estimate update from the uploaded
/// messages and averages the replicas in ascending client order, which is
/// the same quantity as `g_{t−1} + (1/n) Σ_i (w_i + c_i)` and matches the
/// client-side average bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    /// `x_t`.
    pub x: ModelVector,
    /// `g_{t−1}`.
    pub g_prev: ModelVector,
    replicas: Vec<ModelVector>,
}

impl ServerState {
    pub fn new(x0: ModelVector, n: usize) -> Self {
        let d = x0.dim();
        ServerState {
            x: x0,
            g_prev: ModelVector::zeros(d),
            replicas: vec![ModelVector::zeros(d); n],
        }
    }

    pub fn clients(&self) -> usize {
        self.replicas.len()
    }

    /// Aggregate the uplinks into `g_t`, step `x_{t+1} = x_t − η g_t`, and
    /// return the model to broadcast.
    pub fn step(&mut self, uplinks: &[Uplink], eta: f64) -> Result<&ModelVector> {
        if uplinks.len() != self.replicas.len() {
            return Err(Error::UplinkCount {
                expected: self.replicas.len(),
                found: uplinks.len(),
            });
        }
        for (replica, uplink) in self.replicas.iter_mut().zip(uplinks) {
            let w = fcc_decode(&uplink.fcc)?;
            check_dim(replica.dim(), w.dim())?;
            advance_estimate(replica, &w, &uplink.correction)?;
        }
        self.g_prev = mean_of(&self.replicas);
        self.x.axpy(-eta, &self.g_prev);
        Ok(&self.x)
    }
}

pub fn run_power_ef(config: &RunConfig, problem: &ProblemSpec, noise: &NoiseModel) -> Result<RoundTrace> {
    run_with_tap(config, problem, noise, None)
}

pub(super) fn run_with_tap(
    config: &RunConfig,
    problem: &ProblemSpec,
    noise: &NoiseModel,
    tap: Option<&dyn MessageTap>,
) -> Result<RoundTrace> {
    config.validate(problem)?;
    let (n, d) = (problem.n, problem.d);
    let streams = Streams::new(config.seed);
    let full = config.detail == TraceDetail::Full;

    let mut clients = vec![ClientState::new(d); n];
    let mut server = ServerState::new(config.initial_model(d), n);
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
        let x_t = server.x.clone();
        let e_mean = mean_of(clients.iter().map(|c| &c.e_cur));

        let outcomes = config.exec.map_mut(&mut clients, |i, client| -> Result<_> {
            let mut oracle = streams.stream(Purpose::Oracle, i as u64, round);
            let grad = problem.stochastic_gradient(noise, i, &x_t, config.p_batch, &mut oracle)?;
            let mut coins = streams.stream(Purpose::Compressor, i as u64, round);
            let uplink = client.step(&grad, &xi, &config.compressor, config.p_fcc, &mut coins)?;
            Ok((grad, uplink))
        });
        let (grads, uplinks): (Vec<_>, Vec<_>) = outcomes.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();

        if let Some(tap) = tap {
            for (i, uplink) in uplinks.iter().enumerate() {
                for msg in uplink.messages() {
                    tap.on_uplink(t, i, msg);
                }
            }
        }
        let uplink_bytes = uplinks.iter().map(Uplink::payload_bytes).sum();
        let uplink_messages = uplinks.iter().map(Uplink::message_count).sum();

        server.step(&uplinks, config.eta)?;

        let (g, g_client_mean) = if full {
            (server.g_prev.clone(), mean_of(clients.iter().map(|c| &c.g_prev)))
        } else {
            (ModelVector::default(), ModelVector::default())
        };
        records.push(RoundRecord {
            t,
            x: x_t,
            e_mean,
            g,
            g_client_mean,
            xi: if full { xi } else { ModelVector::default() },
            client_grads: if full { grads } else { Vec::new() },
            uplink_bytes,
            downlink_bytes: n * d * VALUE_BYTES,
            uplink_messages,
        });
    }

    Ok(RoundTrace {
        algorithm: super::Algorithm::PowerEf.name().to_string(),
        eta: config.eta,
        records,
        final_x: server.x,
        final_e: mean_of(clients.iter().map(|c| &c.e_cur)),
    })
}
