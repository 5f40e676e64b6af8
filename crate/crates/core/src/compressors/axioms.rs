//! The normal-compressor axiom harness.
//!
//! NCD is only a metric when the compressor is idempotent, symmetric,
//! monotone, and distributive up to a logarithmic slack. Real compressors
//! get close under the right pairing function and fail under the wrong
//! one; this harness measures where a handle stands instead of assuming.

use super::{CompressorError, CompressorHandle};
use crate::data::{aggregate, AggregateInput, Aggregation, Dataset};
use crate::rng::SplitMix64;

const TRIALS: usize = 100;
const MIN_SAMPLES: usize = 20;

/// Empirical axiom scores for one handle/pairing combination over seeded
/// pairs and triples. Violation counts use `slack_bits` plus one percent
/// of the reference length.
#[derive(Debug, Clone, PartialEq)]
pub struct AxiomReport {
    /// Mean C(psi(x,x)) / C(x); 1.0 is perfect idempotency.
    pub idempotency_ratio: f64,
    /// Max |C(psi(x,y)) - C(psi(y,x))| / C(psi(x,y)).
    pub symmetry_max_dev: f64,
    /// Pairs where C(psi(x,y)) fell below C(x) minus slack.
    pub monotonicity_violations: usize,
    /// Triples where C(psi(x,y)) + C(z) exceeded C(psi(x,z)) + C(psi(y,z))
    /// plus slack.
    pub distributivity_violations: usize,
    pub sample_count: usize,
    pub slack_bits: u64,
}

fn allowed(slack_bits: u64, reference: f64) -> f64 {
    slack_bits as f64 + 0.01 * reference
}

/// Scores `h` on 100 seeded pairs/triples drawn from `samples`.
pub fn axiom_report(
    h: &dyn CompressorHandle,
    samples: &Dataset,
    how: Aggregation,
    slack_bits: u64,
    seed: u64,
) -> Result<AxiomReport, CompressorError> {
    if samples.len() < MIN_SAMPLES {
        return Err(CompressorError::InsufficientSamples {
            have: samples.len(),
            need: MIN_SAMPLES,
        });
    }

    let mut singles: Vec<Option<f64>> = vec![None; samples.len()];
    let mut single = |i: usize, h: &dyn CompressorHandle| -> Result<f64, CompressorError> {
        if let Some(c) = singles[i] {
            return Ok(c);
        }
        let c = h.measure(&AggregateInput::Single(samples.grids[i].clone()))? as f64;
        singles[i] = Some(c);
        Ok(c)
    };

    let mut rng = SplitMix64::new(seed);
    let n = samples.len() as u64;
    let mut ratio_sum = 0.0;
    let mut symmetry_max_dev: f64 = 0.0;
    let mut monotonicity_violations = 0;
    let mut distributivity_violations = 0;

    for _ in 0..TRIALS {
        let xi = rng.next_below(n) as usize;
        let yi = rng.next_below(n) as usize;
        let zi = rng.next_below(n) as usize;
        let (x, y, z) = (&samples.grids[xi], &samples.grids[yi], &samples.grids[zi]);

        let cx = single(xi, h)?;
        let cz = single(zi, h)?;

        let cxx = h.measure(&aggregate(x, x, how)?)? as f64;
        ratio_sum += cxx / cx;

        let cxy = h.measure(&aggregate(x, y, how)?)? as f64;
        let cyx = h.measure(&aggregate(y, x, how)?)? as f64;
        symmetry_max_dev = symmetry_max_dev.max((cxy - cyx).abs() / cxy);

        if cxy < cx - allowed(slack_bits, cx) {
            monotonicity_violations += 1;
        }

        let cxz = h.measure(&aggregate(x, z, how)?)? as f64;
        let cyz = h.measure(&aggregate(y, z, how)?)? as f64;
        if cxy + cz > cxz + cyz + allowed(slack_bits, cxz + cyz) {
            distributivity_violations += 1;
        }
    }

    Ok(AxiomReport {
        idempotency_ratio: ratio_sum / TRIALS as f64,
        symmetry_max_dev,
        monotonicity_violations,
        distributivity_violations,
        sample_count: TRIALS,
        slack_bits,
    })
}
