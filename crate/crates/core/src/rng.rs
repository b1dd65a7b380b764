//! Counter-based random substreams.
//!
//! A master seed plus a `(purpose, client, round)` label identifies a
//! ChaCha stream. Streams never depend on the order in which they are
//! requested, so clients can be stepped in any order or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type StreamRng = ChaCha12Rng;

/// What a substream is used for. Each purpose gets a disjoint key space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    ProblemGlobal,
    ProblemLocal,
    Init,
    Perturbation,
    Oracle,
    Compressor,
    Probe,
    Eigen,
    Test,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::ProblemGlobal => 1,
            Purpose::ProblemLocal => 2,
            Purpose::Init => 3,
            Purpose::Perturbation => 4,
            Purpose::Oracle => 5,
            Purpose::Compressor => 6,
            Purpose::Probe => 7,
            Purpose::Eigen => 8,
            Purpose::Test => 9,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Factory for labelled substreams under one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Streams { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: Purpose, client: u64, round: u64) -> StreamRng {
        let mut key = [0u8; 32];
        let words = [
            splitmix64(self.master),
            splitmix64(self.master ^ splitmix64(purpose.tag())),
            splitmix64(client.wrapping_mul(0xD6E8_FEB8_6659_FD93) ^ purpose.tag()),
            splitmix64(round.wrapping_mul(0xA076_1D64_78BD_642F) ^ splitmix64(client)),
        ];
        for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha12Rng::from_seed(key)
    }
}
