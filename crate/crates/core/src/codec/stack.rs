//! The shared LIFO coder stack both op orders run on.
//!
//! A rANS state over a word stack, where the encode side starts from
//! reservoir words and keeps borrowing from the reservoir whenever a
//! bits-back decode underflows the stack. Every borrowed bit is counted,
//! so net message length is stream bits minus `n_extra`. The decode side
//! runs without a reservoir: underflow there means a corrupt stream, and
//! whatever remains at the end must be exactly the words the encoder
//! borrowed, in borrowing order.

use super::{BitReservoir, CodecError};
use crate::rans::{decode_step, encode_step, Bitstream, FrequencyTable, RansError, STATE_LOW};

pub(crate) struct CoderStack {
    state: u64,
    words: Vec<u16>,
    reservoir: Option<BitReservoir>,
    n_extra: u32,
}

/// Assembles the initial encode state from reservoir words; returns it
/// with the number of bits drawn.
pub(crate) fn seeded_state(reservoir: &mut BitReservoir) -> (u64, u32) {
    let mut state: u64 = 0;
    let mut bits: u32 = 0;
    while state < STATE_LOW {
        state = state << 16 | reservoir.next_word() as u64;
        bits += 16;
    }
    (state, bits)
}

impl CoderStack {
    /// Encode-side stack; the initial state is assembled from reservoir
    /// words, which count as borrowed bits.
    pub(crate) fn for_encode(mut reservoir: BitReservoir) -> Self {
        let (state, n_extra) = seeded_state(&mut reservoir);
        CoderStack { state, words: Vec::new(), reservoir: Some(reservoir), n_extra }
    }

    /// Decode-side stack over a finished stream.
    pub(crate) fn for_decode(stream: &Bitstream) -> Self {
        CoderStack {
            state: stream.final_state as u64,
            words: stream.words.clone(),
            reservoir: None,
            n_extra: 0,
        }
    }

    pub(crate) fn push(&mut self, symbol: usize, table: &FrequencyTable) -> Result<(), CodecError> {
        if symbol >= table.len() {
            return Err(RansError::SymbolOutOfRange(symbol).into());
        }
        let freq = table.freq(symbol) as u64;
        let limit = freq << (32 - table.precision() as u64);
        while self.state >= limit {
            self.words.push((self.state & 0xFFFF) as u16);
            self.state >>= 16;
        }
        self.state = encode_step(self.state, freq, table.cum_freq(symbol) as u64, table.precision());
        Ok(())
    }

    pub(crate) fn pop(&mut self, table: &FrequencyTable) -> Result<usize, CodecError> {
        let (prev, symbol) = decode_step(self.state, table);
        self.state = prev;
        while self.state < STATE_LOW {
            let w = self.next_word()?;
            self.state = self.state << 16 | w as u64;
        }
        Ok(symbol)
    }

    fn next_word(&mut self) -> Result<u16, CodecError> {
        if let Some(w) = self.words.pop() {
            return Ok(w);
        }
        match &mut self.reservoir {
            Some(r) => {
                self.n_extra += 16;
                Ok(r.next_word())
            }
            None => Err(RansError::CorruptStream.into()),
        }
    }

    pub(crate) fn n_extra(&self) -> u32 {
        self.n_extra
    }

    pub(crate) fn into_bitstream(self) -> Bitstream {
        Bitstream { words: self.words, final_state: self.state as u32 }
    }

    pub(crate) fn into_parts(self) -> (u64, Vec<u16>) {
        (self.state, self.words)
    }
}
