//! Contraction compressors and the multi-round FCC encoder.
//!
//! A μ-compressor `C` satisfies `‖x − C(x)‖² ≤ (1 − μ)‖x‖²` on every call.
//! Top-k and biased rounding meet this deterministically; random-k only in
//! expectation and is kept for baseline comparisons.
//!
//! FCC applies the compressor to successive residuals,
//! `v₁ = x, v_{ℓ+1} = v_ℓ − C(v_ℓ)`, and ships the `p` compressed pieces.
//! The receiver sums them; the leftover error decays like `(1 − μ)^p`.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::vector::ModelVector;

/// Bytes per coordinate index on the wire.
pub const INDEX_BYTES: usize = 4;
/// Bytes per coordinate value on the wire.
pub const VALUE_BYTES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompressorSpec {
    /// Keep the `k` largest-magnitude coordinates; ties go to the lower index.
    TopK { k: usize },
    /// Keep `k` uniformly chosen coordinates, unscaled.
    RandomK { k: usize },
    /// Round each magnitude down to a power of `base`, keeping the sign.
    BiasedRounding { base: f64 },
}

impl CompressorSpec {
    /// The lossless member of the top-k family for dimension `dim`.
    pub fn identity(dim: usize) -> Self {
        CompressorSpec::TopK { k: dim }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match *self {
            CompressorSpec::TopK { k } | CompressorSpec::RandomK { k } => {
                if k == 0 {
                    return Err(Error::config("compressor k must be positive"));
                }
                if k > dim {
                    return Err(Error::config(format!(
                        "compressor k = {k} exceeds dimension {dim}"
                    )));
                }
                Ok(())
            }
            CompressorSpec::BiasedRounding { base } => {
                if base.is_finite() && base > 1.0 {
                    Ok(())
                } else {
                    Err(Error::config(format!("rounding base {base} must be > 1")))
                }
            }
        }
    }

    /// Contraction factor μ ∈ (0, 1] for vectors of dimension `dim`.
    ///
    /// Biased rounding keeps `|x| / base < C(x) ≤ |x|`, so each coordinate
    /// loses at most a `1 − 1/base` fraction and `μ = 1 − (1 − 1/base)²`.
    pub fn mu(&self, dim: usize) -> Result<f64> {
        self.validate(dim)?;
        Ok(match *self {
            CompressorSpec::TopK { k } | CompressorSpec::RandomK { k } => k as f64 / dim as f64,
            CompressorSpec::BiasedRounding { base } => {
                let keep = 1.0 - 1.0 / base;
                1.0 - keep * keep
            }
        })
    }

    /// Random-k only contracts in expectation.
    pub fn expectation_only(&self) -> bool {
        matches!(self, CompressorSpec::RandomK { .. })
    }

    pub fn is_deterministic(&self) -> bool {
        !self.expectation_only()
    }

    pub fn name(&self) -> String {
        match *self {
            CompressorSpec::TopK { k } => format!("topk({k})"),
            CompressorSpec::RandomK { k } => format!("randk({k})"),
            CompressorSpec::BiasedRounding { base } => format!("round({base})"),
        }
    }
}

/// One compressed payload: ascending `(coordinate, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMessage {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseMessage {
    pub fn empty(dim: usize) -> Self {
        SparseMessage {
            dim,
            entries: Vec::new(),
        }
    }

    /// Build a message, rejecting unsorted, duplicate or out-of-range indices.
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for (pos, &(index, _)) in entries.iter().enumerate() {
            if index >= dim {
                return Err(Error::Malformed(format!(
                    "index {index} out of range for dimension {dim}"
                )));
            }
            if pos > 0 && entries[pos - 1].0 >= index {
                return Err(Error::Malformed(format!(
                    "indices not strictly increasing at position {pos}"
                )));
            }
        }
        Ok(SparseMessage { dim, entries })
    }

    /// Keep every coordinate of `x`, zeros included.
    pub fn dense(x: &ModelVector) -> Self {
        SparseMessage {
            dim: x.dim(),
            entries: x.iter().copied().enumerate().collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn densify(&self) -> ModelVector {
        let mut out = ModelVector::zeros(self.dim);
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    /// `target += densify(self)`.
    pub fn add_into(&self, target: &mut ModelVector) -> Result<()> {
        check_dim(self.dim, target.dim())?;
        for &(i, v) in &self.entries {
            target[i] += v;
        }
        Ok(())
    }

    /// `target -= densify(self)`.
    pub fn sub_from(&self, target: &mut ModelVector) -> Result<()> {
        check_dim(self.dim, target.dim())?;
        for &(i, v) in &self.entries {
            target[i] -= v;
        }
        Ok(())
    }

    /// Little-endian framing: `dim: u32, count: u32, count × (index: u32, value: f64)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.entries.len() * (INDEX_BYTES + VALUE_BYTES));
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for &(i, v) in &self.entries {
            out.extend_from_slice(&(i as u32).to_le_bytes());
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::Malformed("truncated header".into()))
        };
        let dim = word(0)? as usize;
        let count = word(4)? as usize;
        let stride = INDEX_BYTES + VALUE_BYTES;
        if bytes.len() != 8 + count * stride {
            return Err(Error::Malformed(format!(
                "expected {} bytes for {count} entries, found {}",
                8 + count * stride,
                bytes.len()
            )));
        }
        let entries = bytes[8..]
            .chunks_exact(stride)
            .map(|c| {
                let index = u32::from_le_bytes(c[..4].try_into().unwrap()) as usize;
                let value = f64::from_le_bytes(c[4..].try_into().unwrap());
                (index, value)
            })
            .collect();
        SparseMessage::new(dim, entries)
    }
}

/// Wire cost of a message: `entries × (index_bytes + value_bytes)`, no header.
pub fn payload_bytes(msg: &SparseMessage, index_bytes: usize, value_bytes: usize) -> usize {
    msg.len() * (index_bytes + value_bytes)
}

/// Apply `spec` to `x`. Only random-k draws from `rng`.
pub fn compress<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    x: &ModelVector,
    rng: &mut R,
) -> Result<SparseMessage> {
    let dim = x.dim();
    spec.validate(dim)?;
    let msg = match *spec {
        CompressorSpec::TopK { k } => top_k(x, k),
        CompressorSpec::RandomK { k } => {
            let mut picked = sample(rng, dim, k).into_vec();
            picked.sort_unstable();
            SparseMessage {
                dim,
                entries: picked.into_iter().map(|i| (i, x[i])).collect(),
            }
        }
        CompressorSpec::BiasedRounding { base } => SparseMessage {
            dim,
            entries: x
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i, round_down_to_power(v, base)))
                .collect(),
        },
    };
    Ok(msg)
}

fn top_k(x: &ModelVector, k: usize) -> SparseMessage {
    let dim = x.dim();
    let mut order: Vec<usize> = (0..dim).collect();
    let by_magnitude = |a: &usize, b: &usize| {
        x[*b]
            .abs()
            .total_cmp(&x[*a].abs())
            .then_with(|| a.cmp(b))
    };
    if k < dim {
        order.select_nth_unstable_by(k - 1, by_magnitude);
        order.truncate(k);
    }
    order.sort_unstable();
    SparseMessage {
        dim,
        entries: order.into_iter().map(|i| (i, x[i])).collect(),
    }
}

/// `sign(v) · base^⌊log_base |v|⌋`, with the exponent corrected so that the
/// result `r` satisfies `r ≤ |v| < r · base` in floating point.
fn round_down_to_power(v: f64, base: f64) -> f64 {
    let mag = v.abs();
    if !mag.is_finite() {
        return v;
    }
    let mut exp = (mag.ln() / base.ln()).floor() as i32;
    let mut r = base.powi(exp);
    while r > mag {
        exp -= 1;
        r = base.powi(exp);
    }
    while r * base <= mag {
        exp += 1;
        r = base.powi(exp);
    }
    if r == 0.0 || !r.is_finite() {
        // Outside the representable power range; leave the value alone.
        return v;
    }
    r.copysign(v)
}

/// The `p` compressed residual pieces produced by FCC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FccPacket {
    pieces: Vec<SparseMessage>,
}

impl FccPacket {
    pub fn new(pieces: Vec<SparseMessage>) -> Self {
        FccPacket { pieces }
    }

    pub fn pieces(&self) -> &[SparseMessage] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn payload_bytes(&self, index_bytes: usize, value_bytes: usize) -> usize {
        self.pieces
            .iter()
            .map(|m| payload_bytes(m, index_bytes, value_bytes))
            .sum()
    }
}

/// Encode `x` as `p` pieces `C(v₁), …, C(v_p)` over successive residuals.
pub fn fcc_encode<R: Rng + ?Sized>(
    spec: &CompressorSpec,
    x: &ModelVector,
    p: usize,
    rng: &mut R,
) -> Result<FccPacket> {
    if p == 0 {
        return Err(Error::config("FCC round count p must be at least 1"));
    }
    let mut residual = x.clone();
    let mut pieces = Vec::with_capacity(p);
    for _ in 0..p {
        let piece = compress(spec, &residual, rng)?;
        piece.sub_from(&mut residual)?;
        pieces.push(piece);
    }
    Ok(FccPacket { pieces })
}

/// Sum the densified pieces in ascending piece order.
pub fn fcc_decode(packet: &FccPacket) -> Result<ModelVector> {
    let dim = packet
        .pieces
        .first()
        .map(SparseMessage::dim)
        .ok_or_else(|| Error::Malformed("FCC packet has no pieces".into()))?;
    let mut out = ModelVector::zeros(dim);
    for piece in &packet.pieces {
        piece.add_into(&mut out)?;
    }
    Ok(out)
}
