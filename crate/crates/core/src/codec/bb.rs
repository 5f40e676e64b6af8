//! Bits-back coding of grids against a latent-variable model.
//!
//! Encoding interleaves decodes (sampling a discretized posterior latent
//! by spending stack bits) with encodes (paying for data and latents under
//! the generative side). The two op orders differ only in scheduling:
//!
//!   one latent layer   q(z0|x) . x|z0 . prior(z0)
//!   chained, stacked   all q's first, then x|z0, p(z_i|z_{i+1}), prior
//!   chained, swapped   q(z0|x) . x|z0 . [q(z_i|z_{i-1}) . p(z_{i-1}|z_i)] . prior
//!
//! Decoding replays the op list in reverse with the roles flipped; the
//! stack is a perfect LIFO, so the data comes back exactly and the coder
//! ends in the reservoir-built initial state. The decoder checks that,
//! which makes silent corruption loud.
//!
//! Dimensions run forward on decode-type ops and backward on encode-type
//! ops, so per-dimension tables pair up LIFO on both sides.

use super::bins::{bin_table, pixel_tables, posterior_tables, Bins};
use super::stack::CoderStack;
use super::{BitReservoir, Codec, CodecError, CompressionRecord};
use crate::data::{AggregateInput, Grid};
use crate::model::{normalize_grid, LatentModel, LogisticParams};
use crate::rans::{RansError, STATE_LOW};

/// One step of the encode-side schedule. `LatentQ` decodes (spends bits),
/// the rest encode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    LatentQ(usize),
    Pixels,
    LatentP(usize),
    Prior,
}

fn schedule(codec: Codec, layers: usize) -> Vec<Op> {
    match codec {
        Codec::BbAns => {
            let mut ops: Vec<Op> = (0..layers).map(Op::LatentQ).collect();
            ops.push(Op::Pixels);
            ops.extend((0..layers - 1).map(Op::LatentP));
            ops.push(Op::Prior);
            ops
        }
        Codec::BitSwap => {
            let mut ops = vec![Op::LatentQ(0), Op::Pixels];
            for i in 1..layers {
                ops.push(Op::LatentQ(i));
                ops.push(Op::LatentP(i - 1));
            }
            ops.push(Op::Prior);
            ops
        }
    }
}

fn standard_params(dim: usize) -> LogisticParams {
    LogisticParams { mu: vec![0.0; dim], log_s: vec![0.0; dim] }
}

/// Decoded symbols and their real-valued stand-ins for one latent layer.
struct LatentDraw {
    symbols: Vec<usize>,
    reps: Vec<f64>,
}

fn pop_latent(
    stack: &mut CoderStack,
    params: &LogisticParams,
    bins: &Bins,
    layer: usize,
    precision_r: u8,
) -> Result<LatentDraw, CodecError> {
    let lb = bins.layer(layer);
    let tables = bin_table(params, lb, precision_r)?;
    let mut symbols = Vec::with_capacity(tables.len());
    let mut reps = Vec::with_capacity(tables.len());
    for (dim, table) in tables.iter().enumerate() {
        let s = stack.pop(table)?;
        symbols.push(s);
        reps.push(lb.reps[dim][s]);
    }
    Ok(LatentDraw { symbols, reps })
}

fn push_latent(
    stack: &mut CoderStack,
    params: &LogisticParams,
    bins: &Bins,
    layer: usize,
    symbols: &[usize],
    precision_r: u8,
) -> Result<(), CodecError> {
    let tables = bin_table(params, bins.layer(layer), precision_r)?;
    for dim in (0..tables.len()).rev() {
        stack.push(symbols[dim], &tables[dim])?;
    }
    Ok(())
}

// Posterior ops use windowed tables so the quantizer floor never leaks
// mass onto far-off bins; the generative ops above keep the full range
// because they must be able to pay for any bin a window produced.

fn pop_posterior(
    stack: &mut CoderStack,
    params: &LogisticParams,
    bins: &Bins,
    layer: usize,
    precision_r: u8,
) -> Result<LatentDraw, CodecError> {
    let lb = bins.layer(layer);
    let windows = posterior_tables(params, lb, precision_r)?;
    let mut symbols = Vec::with_capacity(windows.len());
    let mut reps = Vec::with_capacity(windows.len());
    for (dim, w) in windows.iter().enumerate() {
        let s = w.start + stack.pop(&w.table)?;
        symbols.push(s);
        reps.push(lb.reps[dim][s]);
    }
    Ok(LatentDraw { symbols, reps })
}

fn push_posterior(
    stack: &mut CoderStack,
    params: &LogisticParams,
    bins: &Bins,
    layer: usize,
    symbols: &[usize],
    precision_r: u8,
) -> Result<(), CodecError> {
    let windows = posterior_tables(params, bins.layer(layer), precision_r)?;
    for dim in (0..windows.len()).rev() {
        let w = &windows[dim];
        let local = symbols[dim]
            .checked_sub(w.start)
            .filter(|&s| s < w.len())
            .ok_or(CodecError::Rans(RansError::CorruptStream))?;
        stack.push(local, &w.table)?;
    }
    Ok(())
}

fn encode_grid(
    model: &LatentModel,
    bins: &Bins,
    grid: &Grid,
    codec: Codec,
    precision_r: u8,
    stack: &mut CoderStack,
) -> Result<(), CodecError> {
    let layers = model.layer_count();
    let x = normalize_grid(grid);
    let mut drawn: Vec<Option<LatentDraw>> = (0..layers).map(|_| None).collect();

    for op in schedule(codec, layers) {
        match op {
            Op::LatentQ(i) => {
                let params = if i == 0 {
                    model.infer_layer(0, &x)?
                } else {
                    model.infer_layer(i, &drawn[i - 1].as_ref().unwrap().reps)?
                };
                drawn[i] = Some(pop_posterior(stack, &params, bins, i, precision_r)?);
            }
            Op::Pixels => {
                let params = model.observe_params(&drawn[0].as_ref().unwrap().reps)?;
                let tables = pixel_tables(&params, precision_r)?;
                for dim in (0..grid.data().len()).rev() {
                    stack.push(grid.data()[dim] as usize, &tables[dim])?;
                }
            }
            Op::LatentP(i) => {
                let params = model.generate_layer(i, &drawn[i + 1].as_ref().unwrap().reps)?;
                let symbols = &drawn[i].as_ref().unwrap().symbols;
                push_latent(stack, &params, bins, i, symbols, precision_r)?;
            }
            Op::Prior => {
                let top = layers - 1;
                let params = standard_params(model.arch().latent_dims[top]);
                let symbols = &drawn[top].as_ref().unwrap().symbols;
                push_latent(stack, &params, bins, top, symbols, precision_r)?;
            }
        }
    }
    Ok(())
}

fn decode_grid(
    model: &LatentModel,
    bins: &Bins,
    shape: (u16, u16, u8),
    codec: Codec,
    precision_r: u8,
    stack: &mut CoderStack,
) -> Result<Grid, CodecError> {
    let layers = model.layer_count();
    let dim = shape.0 as usize * shape.1 as usize * shape.2 as usize;
    let mut drawn: Vec<Option<LatentDraw>> = (0..layers).map(|_| None).collect();
    let mut grid: Option<Grid> = None;

    for op in schedule(codec, layers).into_iter().rev() {
        match op {
            Op::Prior => {
                let top = layers - 1;
                let params = standard_params(model.arch().latent_dims[top]);
                drawn[top] = Some(pop_latent(stack, &params, bins, top, precision_r)?);
            }
            Op::LatentP(i) => {
                let params = model.generate_layer(i, &drawn[i + 1].as_ref().unwrap().reps)?;
                drawn[i] = Some(pop_latent(stack, &params, bins, i, precision_r)?);
            }
            Op::Pixels => {
                let params = model.observe_params(&drawn[0].as_ref().unwrap().reps)?;
                let tables = pixel_tables(&params, precision_r)?;
                let mut data = Vec::with_capacity(dim);
                for table in &tables {
                    data.push(stack.pop(table)? as u8);
                }
                grid = Some(Grid::new(shape.0, shape.1, shape.2, data)?);
            }
            Op::LatentQ(i) => {
                let params = if i == 0 {
                    let x = normalize_grid(grid.as_ref().unwrap());
                    model.infer_layer(0, &x)?
                } else {
                    model.infer_layer(i, &drawn[i - 1].as_ref().unwrap().reps)?
                };
                let symbols = &drawn[i].as_ref().unwrap().symbols;
                push_posterior(stack, &params, bins, i, symbols, precision_r)?;
            }
        }
    }
    Ok(grid.unwrap())
}

fn check_compatible(
    model: &LatentModel,
    bins: &Bins,
    dim: usize,
) -> Result<(), CodecError> {
    if bins.model_hash() != model.fingerprint() {
        return Err(CodecError::BinsMismatch);
    }
    if bins.layer_count() != model.layer_count() {
        return Err(CodecError::BinsMismatch);
    }
    if dim != model.arch().input_dim {
        return Err(CodecError::ShapeMismatch(format!(
            "grid has {} values, model wants {}",
            dim,
            model.arch().input_dim
        )));
    }
    Ok(())
}

/// Losslessly encodes `input`; pairs go through sequentially on one stack,
/// so the second grid reuses bits the first one pushed.
pub fn bb_encode(
    model: &LatentModel,
    bins: &Bins,
    input: &AggregateInput,
    codec: Codec,
    precision_r: u8,
    reservoir_seed: u64,
) -> Result<CompressionRecord, CodecError> {
    let grids = input.grids();
    for grid in &grids {
        check_compatible(model, bins, grid.dim())?;
    }
    if let AggregateInput::OrderedPair(a, b) = input {
        if !a.same_shape(b) {
            return Err(CodecError::ShapeMismatch(
                "paired grids must share a shape".into(),
            ));
        }
    }

    let mut stack = CoderStack::for_encode(BitReservoir::new(reservoir_seed));
    for grid in &grids {
        encode_grid(model, bins, grid, codec, precision_r, &mut stack)?;
    }

    let first = grids[0];
    let n_extra = stack.n_extra();
    Ok(CompressionRecord {
        stream: stack.into_bitstream(),
        n_extra,
        model_hash: model.fingerprint(),
        bins_hash: bins.fingerprint(),
        codec,
        reservoir_seed,
        width: first.width(),
        height: first.height(),
        channels: first.channels(),
        pair: matches!(input, AggregateInput::OrderedPair(..)),
    })
}

/// Inverts `bb_encode`, then verifies the coder drained back to the
/// reservoir-built initial state and returned every borrowed word.
pub fn bb_decode(
    model: &LatentModel,
    bins: &Bins,
    record: &CompressionRecord,
    precision_r: u8,
) -> Result<AggregateInput, CodecError> {
    if record.model_hash != model.fingerprint() {
        return Err(CodecError::HashMismatch("record was coded with another model".into()));
    }
    if record.bins_hash != bins.fingerprint() {
        return Err(CodecError::HashMismatch("record was coded with other bins".into()));
    }
    let shape = (record.width, record.height, record.channels);
    let dim = shape.0 as usize * shape.1 as usize * shape.2 as usize;
    check_compatible(model, bins, dim)?;

    let mut stack = CoderStack::for_decode(&record.stream);
    let mut grids = Vec::new();
    let count = if record.pair { 2 } else { 1 };
    for _ in 0..count {
        grids.push(decode_grid(model, bins, shape, record.codec, precision_r, &mut stack)?);
    }
    verify_reservoir(stack, record)?;

    grids.reverse();
    Ok(match record.pair {
        false => AggregateInput::Single(grids.pop().unwrap()),
        true => {
            let b = grids.pop().unwrap();
            let a = grids.pop().unwrap();
            // decode order was b then a; after the reverse, a is first
            AggregateInput::OrderedPair(a, b)
        }
    })
}

/// The decoder must end exactly where the encoder began: same state,
/// and the leftover words must replay the reservoir's borrowed tail.
fn verify_reservoir(stack: CoderStack, record: &CompressionRecord) -> Result<(), CodecError> {
    let mut replay = BitReservoir::new(record.reservoir_seed);
    let mut state: u64 = 0;
    let mut init_bits: u32 = 0;
    while state < STATE_LOW {
        state = state << 16 | replay.next_word() as u64;
        init_bits += 16;
    }
    let borrowed = record
        .n_extra
        .checked_sub(init_bits)
        .filter(|b| b % 16 == 0)
        .ok_or(RansError::CorruptStream)?;

    let (end_state, leftover) = stack.into_parts();
    if end_state != state {
        return Err(RansError::CorruptStream.into());
    }
    if leftover.len() != (borrowed / 16) as usize {
        return Err(RansError::CorruptStream.into());
    }
    for &w in leftover.iter().rev() {
        if w != replay.next_word() {
            return Err(RansError::CorruptStream.into());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{estimate_latent_stats, nelbo_length};
    use crate::codec::bins::build_bins;
    use crate::data::Dataset;
    use crate::model::{init_model, Architecture};
    use crate::rng::SplitMix64;

    const R: u8 = 14;

    fn random_grid(rng: &mut SplitMix64) -> Grid {
        let data = (0..16).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
        Grid::new(4, 4, 1, data).unwrap()
    }

    fn fixture(latent_dims: Vec<usize>, seed: u64) -> (LatentModel, Bins, Vec<Grid>) {
        let arch = Architecture {
            input_dim: 16,
            latent_dims,
            hidden_dims: vec![6],
            seed,
        };
        let model = init_model(&arch).unwrap();
        let mut rng = SplitMix64::new(seed ^ 0xABCD);
        let grids: Vec<Grid> = (0..24).map(|_| random_grid(&mut rng)).collect();
        let stats =
            estimate_latent_stats(&model, &Dataset::unlabeled(grids.clone()).unwrap(), 8, seed)
                .unwrap();
        let bins = build_bins(&model, &stats, 10).unwrap();
        (model, bins, grids)
    }

    #[test]
    fn single_grids_roundtrip_at_every_depth() {
        for (dims, seed) in [(vec![3], 1u64), (vec![3, 2], 2), (vec![4, 3, 2], 3)] {
            let (model, bins, grids) = fixture(dims.clone(), seed);
            for codec in [Codec::BbAns, Codec::BitSwap] {
                for grid in grids.iter().take(4) {
                    let input = AggregateInput::Single(grid.clone());
                    let rec = bb_encode(&model, &bins, &input, codec, R, 99).unwrap();
                    let back = bb_decode(&model, &bins, &rec, R).unwrap();
                    assert_eq!(back, input, "depth {dims:?} codec {:?}", codec);
                }
            }
        }
    }

    #[test]
    fn ordered_pairs_roundtrip_and_preserve_order() {
        let (model, bins, grids) = fixture(vec![3, 2], 7);
        for codec in [Codec::BbAns, Codec::BitSwap] {
            let input = AggregateInput::OrderedPair(grids[0].clone(), grids[1].clone());
            let rec = bb_encode(&model, &bins, &input, codec, R, 3).unwrap();
            assert!(rec.pair);
            assert_eq!(rec.input_dim(), 32);
            let back = bb_decode(&model, &bins, &rec, R).unwrap();
            assert_eq!(back, input);
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let (model, bins, grids) = fixture(vec![3, 2], 11);
        let input = AggregateInput::Single(grids[0].clone());
        let a = bb_encode(&model, &bins, &input, Codec::BitSwap, R, 5).unwrap();
        let b = bb_encode(&model, &bins, &input, Codec::BitSwap, R, 5).unwrap();
        assert_eq!(a.stream, b.stream);
        assert_eq!(a.n_extra, b.n_extra);
    }

    #[test]
    fn one_layer_schedules_coincide() {
        let (model, bins, grids) = fixture(vec![4], 13);
        for grid in grids.iter().take(6) {
            let input = AggregateInput::Single(grid.clone());
            let a = bb_encode(&model, &bins, &input, Codec::BbAns, R, 21).unwrap();
            let b = bb_encode(&model, &bins, &input, Codec::BitSwap, R, 21).unwrap();
            assert_eq!(a.stream, b.stream);
            assert_eq!(a.n_extra, b.n_extra);
        }
    }

    #[test]
    fn swapped_order_never_borrows_more() {
        let (model, bins, grids) = fixture(vec![3, 2], 17);
        for grid in &grids {
            let input = AggregateInput::Single(grid.clone());
            let bb = bb_encode(&model, &bins, &input, Codec::BbAns, R, 2).unwrap();
            let bs = bb_encode(&model, &bins, &input, Codec::BitSwap, R, 2).unwrap();
            assert!(
                bs.n_extra <= bb.n_extra,
                "swapped borrowed {} vs stacked {}",
                bs.n_extra,
                bb.n_extra
            );
        }
    }

    #[test]
    fn net_bits_track_the_bound() {
        let (model, bins, grids) = fixture(vec![3, 2], 19);
        let mut net = 0.0;
        let mut bound = 0.0;
        for grid in &grids {
            let input = AggregateInput::Single(grid.clone());
            let rec = bb_encode(&model, &bins, &input, Codec::BitSwap, R, 7).unwrap();
            net += rec.net_bits() as f64;
            bound += nelbo_length(&model, &input, 16, 40).unwrap();
        }
        let gap = (net - bound).abs() / bound;
        assert!(gap < 0.1, "net {net} vs bound {bound}, gap {gap}");
    }

    #[test]
    fn bin_count_changes_the_stream_but_not_the_net_length() {
        let (model, _, grids) = fixture(vec![3, 2], 23);
        let stats = estimate_latent_stats(
            &model,
            &Dataset::unlabeled(grids.clone()).unwrap(),
            8,
            23,
        )
        .unwrap();
        let coarse = build_bins(&model, &stats, 8).unwrap();
        let fine = build_bins(&model, &stats, 12).unwrap();
        let mut net_coarse = 0.0;
        let mut net_fine = 0.0;
        for grid in &grids {
            let input = AggregateInput::Single(grid.clone());
            let a = bb_encode(&model, &coarse, &input, Codec::BitSwap, R, 9).unwrap();
            let b = bb_encode(&model, &fine, &input, Codec::BitSwap, R, 9).unwrap();
            net_coarse += a.net_bits() as f64;
            net_fine += b.net_bits() as f64;
        }
        let gap = (net_coarse - net_fine).abs() / net_fine.abs().max(1.0);
        assert!(gap < 0.02, "coarse {net_coarse} vs fine {net_fine}");
    }

    #[test]
    fn tampering_is_detected() {
        let (model, bins, grids) = fixture(vec![3, 2], 29);
        let input = AggregateInput::Single(grids[0].clone());
        let rec = bb_encode(&model, &bins, &input, Codec::BbAns, R, 1).unwrap();

        let mut flipped = rec.clone();
        let mid = flipped.stream.words.len() / 2;
        flipped.stream.words[mid] ^= 0x0400;
        assert!(bb_decode(&model, &bins, &flipped, R).is_err());

        let mut wrong_extra = rec.clone();
        wrong_extra.n_extra += 16;
        assert!(bb_decode(&model, &bins, &wrong_extra, R).is_err());

        let mut truncated = rec;
        truncated.stream.words.pop();
        assert!(bb_decode(&model, &bins, &truncated, R).is_err());
    }

    #[test]
    fn foreign_models_and_bins_are_refused() {
        let (model, bins, grids) = fixture(vec![3, 2], 31);
        let (other_model, other_bins, _) = fixture(vec![3, 2], 32);
        let input = AggregateInput::Single(grids[0].clone());

        assert!(matches!(
            bb_encode(&other_model, &bins, &input, Codec::BbAns, R, 0),
            Err(CodecError::BinsMismatch)
        ));

        let rec = bb_encode(&model, &bins, &input, Codec::BbAns, R, 0).unwrap();
        assert!(matches!(
            bb_decode(&other_model, &other_bins, &rec, R),
            Err(CodecError::HashMismatch(_))
        ));
    }

    #[test]
    fn mismatched_grids_are_refused() {
        let (model, bins, _) = fixture(vec![3, 2], 37);
        let small = Grid::new(2, 2, 1, vec![1, 2, 3, 4]).unwrap();
        assert!(matches!(
            bb_encode(&model, &bins, &AggregateInput::Single(small.clone()), Codec::BbAns, R, 0),
            Err(CodecError::ShapeMismatch(_))
        ));
        let big = Grid::new(4, 4, 1, vec![0; 16]).unwrap();
        let pair = AggregateInput::OrderedPair(big, Grid::new(8, 2, 1, vec![0; 16]).unwrap());
        assert!(matches!(
            bb_encode(&model, &bins, &pair, Codec::BbAns, R, 0),
            Err(CodecError::ShapeMismatch(_))
        ));
    }
}
