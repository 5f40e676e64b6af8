//! Discretization of the latent line into coding bins.
//!
//! The prior-coded top layer gets equal-mass bins under the standard
//! logistic, every other layer equal-width bins over its estimated range.
//! A layer stores n_bins - 1 strictly increasing finite edges per
//! dimension (the outer edges sit at +-inf, so the partition covers the
//! whole line) plus one representative per bin; representatives stand in
//! for the decoded symbol wherever a network needs a real-valued input.
//!
//! Frequency tables come from logistic CDF evaluations at the edges,
//! snapped to a 2^-30 grid so the masses telescope to exactly one before
//! quantization.

use super::{CodecError, LatentStats};
use crate::hash::{crc32, fingerprint, Fingerprint};
use crate::model::logistic::{logit, normalize_pixel, sigmoid, DELTA};
use crate::model::{LatentModel, LogisticParams};
use crate::rans::{quantize, FrequencyTable};

pub const MIN_PRECISION_Z: u8 = 4;
pub const MAX_PRECISION_Z: u8 = 14;

const CDF_GRID: f64 = (1u64 << 30) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinScheme {
    EqualMass,
    EqualWidth,
}

/// One layer's partition, per dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerBins {
    pub scheme: BinScheme,
    /// `edges[dim]` holds the n_bins - 1 finite boundaries.
    pub edges: Vec<Vec<f64>>,
    /// `reps[dim]` holds one representative inside each of the n_bins bins.
    pub reps: Vec<Vec<f64>>,
}

/// Bins for every latent layer of one model, bottom to top.
#[derive(Debug, Clone, PartialEq)]
pub struct Bins {
    n_bins: usize,
    precision_z: u8,
    layers: Vec<LayerBins>,
    model_hash: Fingerprint,
}

impl Bins {
    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn precision_z(&self) -> u8 {
        self.precision_z
    }

    pub fn layer(&self, layer: usize) -> &LayerBins {
        &self.layers[layer]
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn model_hash(&self) -> Fingerprint {
        self.model_hash
    }

    /// Fingerprint over the canonical serialization, so records can pin
    /// the exact partition they were coded with.
    pub fn fingerprint(&self) -> Fingerprint {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"BINS");
        bytes.push(1u8);
        bytes.push(self.precision_z);
        bytes.extend_from_slice(&self.model_hash);
        bytes.extend_from_slice(&(self.layers.len() as u32).to_le_bytes());
        for layer in &self.layers {
            bytes.push(match layer.scheme {
                BinScheme::EqualMass => 0,
                BinScheme::EqualWidth => 1,
            });
            bytes.extend_from_slice(&(layer.edges.len() as u32).to_le_bytes());
            for (edges, reps) in layer.edges.iter().zip(&layer.reps) {
                for v in edges.iter().chain(reps) {
                    bytes.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = crc32(&bytes);
        bytes.extend_from_slice(&crc.to_le_bytes());
        fingerprint(&bytes)
    }
}

/// Builds bins for `model`: equal mass on the prior layer, equal width
/// from `stats` elsewhere, with 2^precision_z bins per dimension.
pub fn build_bins(
    model: &LatentModel,
    stats: &LatentStats,
    precision_z: u8,
) -> Result<Bins, CodecError> {
    if !(MIN_PRECISION_Z..=MAX_PRECISION_Z).contains(&precision_z) {
        return Err(CodecError::InvalidPrecision(precision_z));
    }
    let l = model.layer_count();
    if stats.ranges.len() != l - 1 {
        return Err(CodecError::ShapeMismatch(format!(
            "stats cover {} layers, model has {} below the prior",
            stats.ranges.len(),
            l - 1
        )));
    }
    let n_bins = 1usize << precision_z;
    let dims = &model.arch().latent_dims;
    let mut layers = Vec::with_capacity(l);
    for (layer, ranges) in stats.ranges.iter().enumerate() {
        if ranges.len() != dims[layer] {
            return Err(CodecError::ShapeMismatch(format!(
                "stats layer {layer} has {} dims, model wants {}",
                ranges.len(),
                dims[layer]
            )));
        }
        layers.push(equal_width_layer(ranges, n_bins)?);
    }
    layers.push(equal_mass_layer(dims[l - 1], n_bins));
    Ok(Bins { n_bins, precision_z, layers, model_hash: model.fingerprint() })
}

/// Quantiles of the standard logistic: every bin carries mass 1/n_bins.
fn equal_mass_layer(dim: usize, n_bins: usize) -> LayerBins {
    let n = n_bins as f64;
    let edges: Vec<f64> = (1..n_bins).map(|j| logit(j as f64 / n)).collect();
    let reps: Vec<f64> = (0..n_bins).map(|j| logit((j as f64 + 0.5) / n)).collect();
    LayerBins {
        scheme: BinScheme::EqualMass,
        edges: vec![edges; dim],
        reps: vec![reps; dim],
    }
}

fn equal_width_layer(ranges: &[(f64, f64)], n_bins: usize) -> Result<LayerBins, CodecError> {
    let mut edges = Vec::with_capacity(ranges.len());
    let mut reps = Vec::with_capacity(ranges.len());
    for &(lo, hi) in ranges {
        if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
            return Err(CodecError::InvalidArgument(format!(
                "degenerate latent range [{lo}, {hi}]"
            )));
        }
        let w = (hi - lo) / n_bins as f64;
        let e: Vec<f64> = (1..n_bins).map(|j| lo + w * j as f64).collect();
        if e.windows(2).any(|p| p[0] >= p[1]) {
            return Err(CodecError::InvalidArgument(format!(
                "range [{lo}, {hi}] too narrow for {n_bins} bins"
            )));
        }
        let r: Vec<f64> = (0..n_bins).map(|j| lo + w * (j as f64 + 0.5)).collect();
        edges.push(e);
        reps.push(r);
    }
    Ok(LayerBins { scheme: BinScheme::EqualWidth, edges, reps })
}

/// CDF value snapped to the shared dyadic grid.
fn rounded_cdf(edge: f64, mu: f64, s: f64) -> f64 {
    (sigmoid((edge - mu) / s) * CDF_GRID).round() / CDF_GRID
}

/// Masses between consecutive CDF values; `cdf` excludes the implicit
/// 0 and 1 endpoints.
fn masses_from_cdf(cdf: &[f64]) -> Vec<f64> {
    let mut masses = Vec::with_capacity(cdf.len() + 1);
    let mut prev = 0.0;
    for &c in cdf {
        masses.push(c - prev);
        prev = c;
    }
    masses.push(1.0 - prev);
    masses
}

/// Tail mass a posterior coding window may fold into its boundary bins.
const WINDOW_TAIL: f64 = 1e-6;

/// One dimension's posterior table: frequencies over the bins from
/// `start` on; bins outside the window are never decoded.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTable {
    pub start: usize,
    pub table: FrequencyTable,
}

impl WindowTable {
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Posterior-side tables restricted to the bins that carry the mass.
///
/// A full-range table floors every bin at one count, and with many bins
/// per dimension that floor adds up to real probability parked on bins
/// the posterior never visits; the bits-back decode then samples such a
/// bin and the likelihood pays hundreds of bits for the stray latent.
///
/// Two stages keep the floor harmless. A CDF window first bounds the
/// range at the `WINDOW_TAIL` quantiles, folding what it cuts into the
/// boundary bins. Then the ends are trimmed while a bin's share of the
/// window is under half a quantizer count, since those are exactly the
/// bins the floor would inflate; for a unimodal logistic nothing in the
/// interior sits below the ends. Both stages are pure functions of the
/// parameters and partition, so encode and decode rebuild the same
/// tables.
pub fn posterior_tables(
    params: &LogisticParams,
    layer: &LayerBins,
    precision_r: u8,
) -> Result<Vec<WindowTable>, CodecError> {
    if params.len() != layer.edges.len() {
        return Err(CodecError::ShapeMismatch(format!(
            "{} logistic params for a layer of {} dims",
            params.len(),
            layer.edges.len()
        )));
    }
    let cap = 1usize << precision_r.min(16);
    let mut tables = Vec::with_capacity(params.len());
    for dim in 0..params.len() {
        let mu = params.mu[dim];
        let s = params.log_s[dim].exp();
        let edges = &layer.edges[dim];
        let n_bins = edges.len() + 1;
        let z_lo = mu + s * logit(WINDOW_TAIL);
        let z_hi = mu + s * logit(1.0 - WINDOW_TAIL);
        let mut a = edges.partition_point(|&e| e < z_lo);
        let mut b = edges.partition_point(|&e| e < z_hi).min(n_bins - 1);
        if b - a + 1 > cap {
            let mode = edges.partition_point(|&e| e < mu);
            a = mode.saturating_sub(cap / 2);
            b = (a + cap - 1).min(n_bins - 1);
            a = b + 1 - cap;
        }
        let mut masses = Vec::with_capacity(b - a + 1);
        for j in a..=b {
            let lower = if j == a { 0.0 } else { rounded_cdf(edges[j - 1], mu, s) };
            let upper = if j == b { 1.0 } else { rounded_cdf(edges[j], mu, s) };
            masses.push((upper - lower).max(0.0));
        }
        let threshold = 0.5 * masses.iter().sum::<f64>() / cap as f64;
        let mut lo = 0;
        let mut hi = masses.len();
        while hi - lo > 1 && masses[lo] < threshold {
            lo += 1;
        }
        while hi - lo > 1 && masses[hi - 1] < threshold {
            hi -= 1;
        }
        tables.push(WindowTable {
            start: a + lo,
            table: quantize(&masses[lo..hi], precision_r)?,
        });
    }
    Ok(tables)
}

/// Per-dimension frequency tables for a logistic over a layer's bins.
pub fn bin_table(
    params: &LogisticParams,
    layer: &LayerBins,
    precision_r: u8,
) -> Result<Vec<FrequencyTable>, CodecError> {
    if params.len() != layer.edges.len() {
        return Err(CodecError::ShapeMismatch(format!(
            "{} logistic params for a layer of {} dims",
            params.len(),
            layer.edges.len()
        )));
    }
    let mut tables = Vec::with_capacity(params.len());
    for dim in 0..params.len() {
        let mu = params.mu[dim];
        let s = params.log_s[dim].exp();
        let cdf: Vec<f64> = layer.edges[dim].iter().map(|&e| rounded_cdf(e, mu, s)).collect();
        tables.push(quantize(&masses_from_cdf(&cdf), precision_r)?);
    }
    Ok(tables)
}

/// Per-pixel 256-symbol tables matching the discretized observation
/// likelihood: boundaries halfway between adjacent pixel values.
pub(crate) fn pixel_tables(
    params: &LogisticParams,
    precision_r: u8,
) -> Result<Vec<FrequencyTable>, CodecError> {
    let mut tables = Vec::with_capacity(params.len());
    for dim in 0..params.len() {
        let mu = params.mu[dim];
        let s = params.log_s[dim].exp();
        let cdf: Vec<f64> = (0..255)
            .map(|v| rounded_cdf(normalize_pixel(v) + DELTA, mu, s))
            .collect();
        tables.push(quantize(&masses_from_cdf(&cdf), precision_r)?);
    }
    Ok(tables)
}
