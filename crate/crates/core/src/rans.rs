//! Range asymmetric numeral system coder.
//!
//! Streaming variant: 64-bit arithmetic, a working state kept in
//! [2^16, 2^32) by pushing/popping 16-bit words, and frequency tables of
//! precision r <= 16 whose frequencies sum to exactly M = 2^r. The coder
//! is a stack: the decoder emits symbols in reverse encode order.

use thiserror::Error;

/// Lower bound of the working state, and also the initial state.
pub const STATE_LOW: u64 = 1 << 16;
/// Exclusive upper bound of the working state.
pub const STATE_HIGH: u64 = 1 << 32;
pub const MAX_PRECISION: u8 = 16;

const WORD_BITS: u64 = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RansError {
    #[error("precision {0} outside 1..={MAX_PRECISION}")]
    InvalidPrecision(u8),
    #[error("{count} symbols do not fit a table of precision {precision}")]
    TooManySymbols { count: usize, precision: u8 },
    #[error("probabilities must be finite, non-negative, and sum to a positive value")]
    InvalidProbabilities,
    #[error("symbol {0} outside table")]
    SymbolOutOfRange(usize),
    #[error("{symbols} symbols but {tables} tables")]
    LengthMismatch { symbols: usize, tables: usize },
    #[error("stream corrupt: state fell below range with no words left")]
    CorruptStream,
}

/// Quantized symbol distribution: frequencies summing to 2^precision,
/// every symbol strictly positive so everything stays decodable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyTable {
    precision: u8,
    freqs: Vec<u32>,
    cum: Vec<u32>,
}

impl FrequencyTable {
    pub fn precision(&self) -> u8 {
        self.precision
    }

    pub fn total(&self) -> u32 {
        1 << self.precision
    }

    pub fn len(&self) -> usize {
        self.freqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freqs.is_empty()
    }

    pub fn freq(&self, symbol: usize) -> u32 {
        self.freqs[symbol]
    }

    /// Cumulative frequency below `symbol`.
    pub fn cum_freq(&self, symbol: usize) -> u32 {
        self.cum[symbol]
    }

    pub fn freqs(&self) -> &[u32] {
        &self.freqs
    }

    /// The symbol whose half-open slot range [cum, cum + freq) contains `slot`.
    fn symbol_for(&self, slot: u32) -> usize {
        // cum[1..=len] is sorted; first index whose end exceeds the slot.
        self.cum[1..].partition_point(|&end| end <= slot)
    }

    /// Builds a table directly from frequencies (test and tooling helper).
    pub fn from_freqs(freqs: Vec<u32>, precision: u8) -> Result<Self, RansError> {
        if precision == 0 || precision > MAX_PRECISION {
            return Err(RansError::InvalidPrecision(precision));
        }
        let total: u64 = freqs.iter().map(|&f| f as u64).sum();
        if freqs.is_empty() || freqs.iter().any(|&f| f == 0) || total != 1 << precision {
            return Err(RansError::InvalidProbabilities);
        }
        let mut cum = Vec::with_capacity(freqs.len() + 1);
        let mut acc = 0u32;
        for &f in &freqs {
            cum.push(acc);
            acc += f;
        }
        cum.push(acc);
        Ok(FrequencyTable { precision, freqs, cum })
    }
}

/// Quantizes probabilities to integer frequencies summing to 2^precision.
///
/// Each symbol gets max(1, round(p * M)), then a largest-remainder pass
/// settles the sum to exactly M. Zero-probability symbols keep frequency 1
/// so every symbol stays decodable.
pub fn quantize(probs: &[f64], precision: u8) -> Result<FrequencyTable, RansError> {
    if precision == 0 || precision > MAX_PRECISION {
        return Err(RansError::InvalidPrecision(precision));
    }
    let m = 1u64 << precision;
    if probs.is_empty() || probs.len() as u64 > m {
        return Err(RansError::TooManySymbols { count: probs.len(), precision });
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || !(sum > 0.0) || !sum.is_finite() {
        return Err(RansError::InvalidProbabilities);
    }

    let targets: Vec<f64> = probs.iter().map(|p| p / sum * m as f64).collect();
    let mut freqs: Vec<i64> = targets.iter().map(|&t| (t.round() as i64).max(1)).collect();
    let mut total: i64 = freqs.iter().sum();

    if total != m as i64 {
        // Most underfilled symbols gain first; most overfilled lose first,
        // never dropping below 1. Ties resolve by index.
        let mut order: Vec<usize> = (0..freqs.len()).collect();
        if total < m as i64 {
            order.sort_by(|&a, &b| {
                let da = targets[a] - freqs[a] as f64;
                let db = targets[b] - freqs[b] as f64;
                db.partial_cmp(&da).unwrap().then(a.cmp(&b))
            });
            let mut i = 0;
            while total < m as i64 {
                freqs[order[i % order.len()]] += 1;
                total += 1;
                i += 1;
            }
        } else {
            order.sort_by(|&a, &b| {
                let da = freqs[a] as f64 - targets[a];
                let db = freqs[b] as f64 - targets[b];
                db.partial_cmp(&da).unwrap().then(a.cmp(&b))
            });
            let mut i = 0;
            while total > m as i64 {
                let v = order[i % order.len()];
                if freqs[v] > 1 {
                    freqs[v] -= 1;
                    total -= 1;
                }
                i += 1;
            }
        }
    }

    FrequencyTable::from_freqs(freqs.into_iter().map(|f| f as u32).collect(), precision)
}

/// Pure state transition for one encoded symbol, no renormalization.
pub(crate) fn encode_step(state: u64, freq: u64, cum: u64, precision: u8) -> u64 {
    (state / freq) << precision | (cum + state % freq)
}

/// Pure inverse of `encode_step`: recovers (previous state, symbol).
pub(crate) fn decode_step(state: u64, table: &FrequencyTable) -> (u64, usize) {
    let mask = (1u64 << table.precision) - 1;
    let slot = (state & mask) as u32;
    let symbol = table.symbol_for(slot);
    let prev = table.freq(symbol) as u64 * (state >> table.precision) + slot as u64
        - table.cum_freq(symbol) as u64;
    (prev, symbol)
}

/// Working coder state plus its word stack.
#[derive(Debug, Clone)]
pub struct RansState {
    state: u64,
    words: Vec<u16>,
}

impl RansState {
    pub fn new() -> Self {
        RansState { state: STATE_LOW, words: Vec::new() }
    }

    pub fn from_bitstream(bs: &Bitstream) -> Self {
        RansState { state: bs.final_state as u64, words: bs.words.clone() }
    }

    pub fn state(&self) -> u64 {
        self.state
    }

    pub fn encode_symbol(&mut self, symbol: usize, table: &FrequencyTable) -> Result<(), RansError> {
        if symbol >= table.len() {
            return Err(RansError::SymbolOutOfRange(symbol));
        }
        let freq = table.freq(symbol) as u64;
        let limit = freq << (32 - table.precision as u64);
        while self.state >= limit {
            self.words.push((self.state & 0xFFFF) as u16);
            self.state >>= WORD_BITS;
        }
        self.state = encode_step(self.state, freq, table.cum_freq(symbol) as u64, table.precision);
        debug_assert!(self.state >= STATE_LOW && self.state < STATE_HIGH);
        Ok(())
    }

    pub fn decode_symbol(&mut self, table: &FrequencyTable) -> Result<usize, RansError> {
        let (prev, symbol) = decode_step(self.state, table);
        self.state = prev;
        while self.state < STATE_LOW {
            match self.words.pop() {
                Some(w) => self.state = self.state << WORD_BITS | w as u64,
                None => return Err(RansError::CorruptStream),
            }
        }
        Ok(symbol)
    }

    pub fn into_bitstream(self) -> Bitstream {
        debug_assert!(self.state < STATE_HIGH);
        Bitstream { words: self.words, final_state: self.state as u32 }
    }
}

impl Default for RansState {
    fn default() -> Self {
        Self::new()
    }
}

/// A finished stream: flushed words plus the 32-bit final state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub words: Vec<u16>,
    pub final_state: u32,
}

impl Bitstream {
    pub fn bit_length(&self) -> u64 {
        16 * self.words.len() as u64 + 32
    }

    /// Little-endian serialization: final_state u32, word count u32, then
    /// the words with the most recently pushed last.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 2 * self.words.len());
        out.extend_from_slice(&self.final_state.to_le_bytes());
        out.extend_from_slice(&(self.words.len() as u32).to_le_bytes());
        for &w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    /// Parses a serialized stream, returning it and the bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize), RansError> {
        if bytes.len() < 8 {
            return Err(RansError::CorruptStream);
        }
        let final_state = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let count = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let end = 8 + 2 * count;
        if bytes.len() < end {
            return Err(RansError::CorruptStream);
        }
        let words = bytes[8..end]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok((Bitstream { words, final_state }, end))
    }
}

/// Encodes symbols in forward order; `tables[i]` codes `symbols[i]`.
/// Pass `initial` to stack onto an existing stream.
pub fn encode_sequence(
    symbols: &[usize],
    tables: &[FrequencyTable],
    initial: Option<&Bitstream>,
) -> Result<Bitstream, RansError> {
    if symbols.len() != tables.len() {
        return Err(RansError::LengthMismatch { symbols: symbols.len(), tables: tables.len() });
    }
    let mut st = match initial {
        Some(bs) => RansState::from_bitstream(bs),
        None => RansState::new(),
    };
    for (&v, t) in symbols.iter().zip(tables) {
        st.encode_symbol(v, t)?;
    }
    Ok(st.into_bitstream())
}

/// Decodes one symbol per table, in stack order: the result comes out in
/// reverse encode order, and `tables` must be supplied in decode order.
pub fn decode_sequence(
    bs: &Bitstream,
    tables: &[FrequencyTable],
) -> Result<Vec<usize>, RansError> {
    let mut st = RansState::from_bitstream(bs);
    let mut out = Vec::with_capacity(tables.len());
    for t in tables {
        out.push(st.decode_symbol(t)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    #[test]
    fn quantize_hand_examples() {
        let t = quantize(&[0.75, 0.25], 2).unwrap();
        assert_eq!(t.freqs(), &[3, 1]);
        // A zero-probability symbol keeps frequency 1 and the overshoot is
        // taken from the most overfilled symbol.
        let t = quantize(&[1.0, 0.0], 2).unwrap();
        assert_eq!(t.freqs(), &[3, 1]);
    }

    #[test]
    fn quantize_uniform_is_exact() {
        let probs = vec![1.0 / 256.0; 256];
        let t = quantize(&probs, 8).unwrap();
        assert!(t.freqs().iter().all(|&f| f == 1));
    }

    #[test]
    fn quantize_rejects_bad_input() {
        assert_eq!(
            quantize(&[0.5; 5], 2),
            Err(RansError::TooManySymbols { count: 5, precision: 2 })
        );
        assert_eq!(quantize(&[0.0, 0.0], 4), Err(RansError::InvalidProbabilities));
        assert_eq!(quantize(&[0.3, f64::NAN], 4), Err(RansError::InvalidProbabilities));
        assert_eq!(quantize(&[-0.1, 1.1], 4), Err(RansError::InvalidProbabilities));
        assert_eq!(quantize(&[1.0], 17), Err(RansError::InvalidPrecision(17)));
    }

    #[test]
    fn quantize_sums_to_m_under_stress() {
        let mut rng = SplitMix64::new(123);
        for _ in 0..200 {
            let k = 1 + rng.next_below(40) as usize;
            let probs: Vec<f64> = (0..k).map(|_| rng.next_open01().powi(3)).collect();
            for r in [6u8, 10, 14] {
                if k > 1 << r {
                    continue;
                }
                let t = quantize(&probs, r).unwrap();
                assert_eq!(t.freqs().iter().map(|&f| f as u64).sum::<u64>(), 1 << r);
                assert!(t.freqs().iter().all(|&f| f >= 1));
            }
        }
    }

    /// Table M=4 with frequencies {a: 3, b: 1}, hand-worked transitions.
    #[test]
    fn raw_steps_match_hand_arithmetic() {
        let t = FrequencyTable::from_freqs(vec![3, 1], 2).unwrap();
        // encode b from s=1: floor(1/1)*4 + 3 + 0 = 7
        assert_eq!(encode_step(1, 1, 3, 2), 7);
        // encode a from s=1: floor(1/3)*4 + 0 + 1 = 1
        assert_eq!(encode_step(1, 3, 0, 2), 1);
        // decode 7: slot 3 -> b, back to 1
        assert_eq!(decode_step(7, &t), (1, 1));
        // decode 1: slot 1 -> a, back to 1 (slot 1 sits inside [0, 3))
        assert_eq!(decode_step(1, &t), (1, 0));
    }

    #[test]
    fn slot_rule_is_half_open() {
        let t = FrequencyTable::from_freqs(vec![3, 1], 2).unwrap();
        assert_eq!(t.symbol_for(0), 0);
        assert_eq!(t.symbol_for(2), 0);
        assert_eq!(t.symbol_for(3), 1);
    }

    #[test]
    fn initial_state_is_2_pow_16() {
        assert_eq!(RansState::new().state(), 1 << 16);
        let bs = encode_sequence(&[], &[], None).unwrap();
        assert_eq!(bs.final_state, 1 << 16);
        assert!(bs.words.is_empty());
        assert_eq!(bs.bit_length(), 32);
    }

    #[test]
    fn sequence_roundtrip_reverses() {
        let t = quantize(&[0.6, 0.25, 0.1, 0.05], 10).unwrap();
        let symbols = vec![0, 1, 2, 3, 0, 0, 1, 2, 0, 3, 3, 1];
        let tables = vec![t.clone(); symbols.len()];
        let bs = encode_sequence(&symbols, &tables, None).unwrap();
        let mut decoded = decode_sequence(&bs, &tables).unwrap();
        decoded.reverse();
        assert_eq!(decoded, symbols);
    }

    #[test]
    fn stacking_on_initial_stream_unwinds_cleanly() {
        let t1 = quantize(&[0.9, 0.1], 8).unwrap();
        let t2 = quantize(&[0.2, 0.3, 0.5], 8).unwrap();
        let first: Vec<usize> = vec![0, 0, 1, 0];
        let second: Vec<usize> = vec![2, 0, 1];
        let bs1 = encode_sequence(&first, &vec![t1.clone(); 4], None).unwrap();
        let bs2 = encode_sequence(&second, &vec![t2.clone(); 3], Some(&bs1)).unwrap();
        let mut st = RansState::from_bitstream(&bs2);
        let mut got_second: Vec<usize> =
            (0..3).map(|_| st.decode_symbol(&t2).unwrap()).collect();
        got_second.reverse();
        assert_eq!(got_second, second);
        let mut got_first: Vec<usize> = (0..4).map(|_| st.decode_symbol(&t1).unwrap()).collect();
        got_first.reverse();
        assert_eq!(got_first, first);
        assert_eq!(st.state(), 1 << 16);
    }

    #[test]
    fn decoding_past_the_end_reports_corruption() {
        let t = quantize(&[0.7, 0.3], 6).unwrap();
        let bs = encode_sequence(&[1, 0], &vec![t.clone(); 2], None).unwrap();
        let mut st = RansState::from_bitstream(&bs);
        st.decode_symbol(&t).unwrap();
        st.decode_symbol(&t).unwrap();
        // The stream is spent: the state is back at the initial value and
        // one more decode underflows it.
        assert_eq!(st.state(), 1 << 16);
        assert_eq!(st.decode_symbol(&t).unwrap_err(), RansError::CorruptStream);
        // A truncated word list corrupts mid-stream decodes.
        let bad = Bitstream { words: Vec::new(), final_state: (1 << 16) - 1 };
        let mut st = RansState::from_bitstream(&bad);
        assert_eq!(st.decode_symbol(&t).unwrap_err(), RansError::CorruptStream);
    }

    #[test]
    fn state_stays_in_range_through_long_streams() {
        let mut rng = SplitMix64::new(77);
        let t = quantize(&[0.85, 0.1, 0.05], 14).unwrap();
        let mut st = RansState::new();
        for _ in 0..5000 {
            let v = rng.next_below(3) as usize;
            st.encode_symbol(v, &t).unwrap();
            assert!(st.state() >= STATE_LOW && st.state() < STATE_HIGH);
        }
    }

    #[test]
    fn bitstream_bytes_roundtrip() {
        let t = quantize(&[0.5, 0.3, 0.2], 12).unwrap();
        let bs = encode_sequence(&[0, 2, 1, 1, 0], &vec![t; 5], None).unwrap();
        let bytes = bs.to_bytes();
        let (back, used) = Bitstream::from_bytes(&bytes).unwrap();
        assert_eq!(used, bytes.len());
        assert_eq!(back, bs);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        let t = quantize(&[0.5, 0.5], 4).unwrap();
        assert_eq!(
            encode_sequence(&[0, 1], &[t.clone()], None).unwrap_err(),
            RansError::LengthMismatch { symbols: 2, tables: 1 }
        );
        let mut st = RansState::new();
        assert_eq!(st.encode_symbol(5, &t).unwrap_err(), RansError::SymbolOutOfRange(5));
    }
}
