//! Bits-back lossless compression on top of the entropy coder: latent
//! discretization, two op orders over the shared coder stack, bound-based
//! length estimation, and net-bitrate accounting.

mod bb;
mod bins;
mod io;
mod stack;
mod stats;

pub use bb::{bb_decode, bb_encode};
pub use bins::{bin_table, build_bins, BinScheme, Bins, LayerBins, MAX_PRECISION_Z, MIN_PRECISION_Z};
pub use io::{load_record, save_record};
pub use stats::{estimate_latent_stats, load_stats, save_stats, LatentStats, StatsFile};

use crate::data::{AggregateInput, DataError};
use crate::hash::Fingerprint;
use crate::model::{nelbo, LatentModel, ModelError};
use crate::rans::{Bitstream, RansError};
use crate::rng::SplitMix64;
use thiserror::Error;

pub const DEFAULT_PRECISION_Z: u8 = 10;
pub const DEFAULT_PRECISION_R: u8 = 14;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error(transparent)]
    Rans(#[from] RansError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("latent precision {0} outside [4, 14]")]
    InvalidPrecision(u8),
    #[error("bins were built for a different model")]
    BinsMismatch,
    #[error("hash mismatch: {0}")]
    HashMismatch(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("file checksum does not match its contents")]
    ChecksumMismatch,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which op order drives the coder stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Codec {
    BbAns,
    BitSwap,
}

impl Codec {
    pub fn name(self) -> &'static str {
        match self {
            Codec::BbAns => "bbans",
            Codec::BitSwap => "bitswap",
        }
    }

    pub fn parse(name: &str) -> Option<Codec> {
        match name {
            "bbans" => Some(Codec::BbAns),
            "bitswap" => Some(Codec::BitSwap),
            _ => None,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Codec::BbAns => 0,
            Codec::BitSwap => 1,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Codec> {
        match tag {
            0 => Some(Codec::BbAns),
            1 => Some(Codec::BitSwap),
            _ => None,
        }
    }
}

/// Deterministic source of "extra" bits: a seeded word stream with a
/// served counter, so encode-time draws can be replayed at decode time.
#[derive(Debug, Clone)]
pub struct BitReservoir {
    rng: SplitMix64,
    seed: u64,
    words_served: u64,
}

impl BitReservoir {
    pub fn new(seed: u64) -> Self {
        BitReservoir { rng: SplitMix64::new(seed), seed, words_served: 0 }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bits_served(&self) -> u64 {
        16 * self.words_served
    }

    pub(crate) fn next_word(&mut self) -> u16 {
        self.words_served += 1;
        (self.rng.next_u64() & 0xFFFF) as u16
    }
}

/// One compressed input: the stream plus everything needed to invert it
/// and to account for the reservoir bits it borrowed.
#[derive(Debug, Clone)]
pub struct CompressionRecord {
    pub stream: Bitstream,
    /// Bits consumed from the reservoir, initial state included.
    pub n_extra: u32,
    pub model_hash: Fingerprint,
    pub bins_hash: Fingerprint,
    pub codec: Codec,
    pub reservoir_seed: u64,
    pub width: u16,
    pub height: u16,
    pub channels: u8,
    pub pair: bool,
}

impl CompressionRecord {
    pub fn total_bits(&self) -> u64 {
        self.stream.bit_length()
    }

    /// Message content after returning the borrowed reservoir bits.
    pub fn net_bits(&self) -> i64 {
        self.total_bits() as i64 - self.n_extra as i64
    }

    pub fn input_dim(&self) -> usize {
        let per_grid = self.width as usize * self.height as usize * self.channels as usize;
        if self.pair {
            2 * per_grid
        } else {
            per_grid
        }
    }
}

/// Net message content measured to sub-word precision.
///
/// `net_bits` counts whole 16-bit words plus a flat 32 for the final
/// state, which leaves up to two words of slack that varies from message
/// to message. Here the state endpoints enter as `log2(state)` — the
/// information a rANS state actually holds — so the only noise left is
/// the coder's own rounding. Distances between near-identical inputs
/// sit well inside the word granularity, so ranking code lengths needs
/// this version.
pub fn fractional_net_bits(record: &CompressionRecord) -> f64 {
    let mut reservoir = BitReservoir::new(record.reservoir_seed);
    let (seeded, seed_bits) = stack::seeded_state(&mut reservoir);
    16.0 * record.stream.words.len() as f64 + (record.stream.final_state as f64).log2()
        - (seeded as f64).log2()
        - (record.n_extra - seed_bits) as f64
}

/// Expected stream length in bits: the bound divided by ln 2, summed over
/// the parts of an ordered pair. No coder is involved.
pub fn nelbo_length(
    model: &LatentModel,
    input: &AggregateInput,
    n_samples: usize,
    seed: u64,
) -> Result<f64, CodecError> {
    let nats = match input {
        AggregateInput::Single(g) => nelbo(model, g, n_samples, seed)?,
        AggregateInput::OrderedPair(a, b) => {
            nelbo(model, a, n_samples, seed)? + nelbo(model, b, n_samples, seed)?
        }
    };
    Ok(nats / std::f64::consts::LN_2)
}

/// Bits per dimension after reservoir accounting.
pub fn net_bitrate(net_bits: f64, dim: usize) -> f64 {
    assert!(dim > 0, "bitrate needs a positive dimension");
    net_bits / dim as f64
}
