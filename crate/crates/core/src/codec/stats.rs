//! Latent range estimation for equal-width discretization.
//!
//! Every layer below the prior gets per-dimension bounds of the posterior
//! chain, sampled from a dataset and widened so fresh draws stay inside.
//! Estimates go in a cache file keyed by the model fingerprint, since they
//! are the slow part of building bins.

use super::CodecError;
use crate::data::Dataset;
use crate::hash::{crc32, Fingerprint};
use crate::model::{logistic, normalize_grid, LatentModel, ModelError};
use crate::rng::SplitMix64;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"NPCB";
const VERSION: u8 = 1;

/// Widened per-dimension `(low, high)` bounds for every layer that is not
/// prior-coded, bottom to top. Empty for single-layer models.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentStats {
    pub ranges: Vec<Vec<(f64, f64)>>,
}

/// A stats cache entry: the estimates plus what produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsFile {
    pub model_hash: Fingerprint,
    pub n_draws: u32,
    pub seed: u64,
    pub stats: LatentStats,
}

/// Samples the posterior chain `n_draws` times per item and records the
/// per-dimension extremes, then widens each range by a tenth of its half
/// width or of its center magnitude, whichever is larger.
pub fn estimate_latent_stats(
    model: &LatentModel,
    data: &Dataset,
    n_draws: usize,
    seed: u64,
) -> Result<LatentStats, CodecError> {
    if data.grids.is_empty() {
        return Err(CodecError::InvalidArgument("no grids to estimate from".into()));
    }
    if n_draws == 0 {
        return Err(CodecError::InvalidArgument("zero posterior draws".into()));
    }
    let l = model.layer_count();
    let dims: Vec<usize> = model.arch().latent_dims[..l - 1].to_vec();
    let mut ranges: Vec<Vec<(f64, f64)>> = dims
        .iter()
        .map(|&m| vec![(f64::INFINITY, f64::NEG_INFINITY); m])
        .collect();

    let mut rng = SplitMix64::new(seed);
    if !ranges.is_empty() {
        for grid in &data.grids {
            let x = normalize_grid(grid);
            for _ in 0..n_draws {
                let mut input = x.clone();
                for (layer, range) in ranges.iter_mut().enumerate() {
                    let p = model.infer_layer(layer, &input)?;
                    let mut z = Vec::with_capacity(p.len());
                    for j in 0..p.len() {
                        let v = logistic::sample(p.mu[j], p.log_s[j], rng.next_open01());
                        if !v.is_finite() {
                            return Err(ModelError::NonFinite {
                                context: format!("latent draw at layer {layer}"),
                            }
                            .into());
                        }
                        range[j].0 = range[j].0.min(v);
                        range[j].1 = range[j].1.max(v);
                        z.push(v);
                    }
                    input = z;
                }
            }
        }
    }

    for range in ranges.iter_mut() {
        for r in range.iter_mut() {
            let half = 0.5 * (r.1 - r.0);
            let center = 0.5 * (r.0 + r.1);
            let pad = (0.1 * half).max(0.1 * center.abs()).max(1e-6);
            *r = (center - half - pad, center + half + pad);
        }
    }
    Ok(LatentStats { ranges })
}

pub fn save_stats(path: &Path, file: &StatsFile) -> Result<(), CodecError> {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(MAGIC);
    bytes.push(VERSION);
    bytes.extend_from_slice(&file.model_hash);
    bytes.extend_from_slice(&file.n_draws.to_le_bytes());
    bytes.extend_from_slice(&file.seed.to_le_bytes());
    bytes.extend_from_slice(&(file.stats.ranges.len() as u32).to_le_bytes());
    for layer in &file.stats.ranges {
        bytes.extend_from_slice(&(layer.len() as u32).to_le_bytes());
        for &(lo, hi) in layer {
            bytes.extend_from_slice(&lo.to_le_bytes());
            bytes.extend_from_slice(&hi.to_le_bytes());
        }
    }
    let crc = crc32(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_stats(path: &Path) -> Result<StatsFile, CodecError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(CodecError::MalformedFile("bad stats magic".into()));
    }
    if bytes.len() < 4 + 1 + 8 + 4 + 8 + 4 + 4 {
        return Err(CodecError::MalformedFile("truncated stats file".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().unwrap());
    if crc32(body) != stored {
        return Err(CodecError::ChecksumMismatch);
    }

    let mut r = super::io::Reader::new(body);
    r.take(4)?;
    let version = r.u8()?;
    if version != VERSION {
        return Err(CodecError::MalformedFile(format!("stats version {version}")));
    }
    let mut model_hash = [0u8; 8];
    model_hash.copy_from_slice(r.take(8)?);
    let n_draws = r.u32()?;
    let seed = r.u64()?;
    let layer_count = r.u32()? as usize;
    let mut ranges = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let dim = r.u32()? as usize;
        let mut layer = Vec::with_capacity(dim);
        for _ in 0..dim {
            let lo = r.f64()?;
            let hi = r.f64()?;
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(CodecError::MalformedFile("degenerate stats range".into()));
            }
            layer.push((lo, hi));
        }
        ranges.push(layer);
    }
    if r.remaining() != 0 {
        return Err(CodecError::MalformedFile("trailing bytes in stats file".into()));
    }
    Ok(StatsFile { model_hash, n_draws, seed, stats: LatentStats { ranges } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Grid;
    use crate::model::{init_model, Architecture};
    use tempfile::tempdir;

    fn grids(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = SplitMix64::new(seed);
        let side = (dim as f64).sqrt() as u16;
        let gs = (0..n)
            .map(|_| {
                let data = (0..dim).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
                Grid::new(side, side, 1, data).unwrap()
            })
            .collect();
        Dataset::unlabeled(gs).unwrap()
    }

    fn two_layer_model(seed: u64) -> LatentModel {
        let arch = Architecture {
            input_dim: 16,
            latent_dims: vec![3, 2],
            hidden_dims: vec![6],
            seed,
        };
        init_model(&arch).unwrap()
    }

    #[test]
    fn estimates_are_deterministic_in_the_seed() {
        let model = two_layer_model(4);
        let data = grids(6, 16, 11);
        let a = estimate_latent_stats(&model, &data, 5, 3).unwrap();
        let b = estimate_latent_stats(&model, &data, 5, 3).unwrap();
        let c = estimate_latent_stats(&model, &data, 5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.ranges.len(), 1);
        assert_eq!(a.ranges[0].len(), 3);
    }

    #[test]
    fn single_layer_models_have_no_ranges() {
        let arch = Architecture {
            input_dim: 16,
            latent_dims: vec![3],
            hidden_dims: vec![6],
            seed: 0,
        };
        let model = init_model(&arch).unwrap();
        let stats = estimate_latent_stats(&model, &grids(4, 16, 2), 4, 0).unwrap();
        assert!(stats.ranges.is_empty());
    }

    #[test]
    fn ranges_cover_fresh_draws() {
        let model = two_layer_model(7);
        let data = grids(12, 16, 21);
        let stats = estimate_latent_stats(&model, &data, 30, 5).unwrap();

        let mut rng = SplitMix64::new(999);
        let mut inside = 0usize;
        let mut total = 0usize;
        for _ in 0..40 {
            for grid in &data.grids {
                let x = normalize_grid(grid);
                let p = model.infer_layer(0, &x).unwrap();
                for j in 0..p.len() {
                    let v = logistic::sample(p.mu[j], p.log_s[j], rng.next_open01());
                    total += 1;
                    let (lo, hi) = stats.ranges[0][j];
                    if v >= lo && v <= hi {
                        inside += 1;
                    }
                }
            }
        }
        assert!(inside as f64 >= 0.99 * total as f64, "coverage {inside}/{total}");
    }

    #[test]
    fn tight_posteriors_collapse_to_a_band_around_the_mean() {
        // Zero weights everywhere except the bottom inference heads: the
        // location bias fixes mu, a very negative log-scale bias makes the
        // posterior nearly deterministic. The widened range should then be
        // the +-10% band around mu.
        let arch = Architecture {
            input_dim: 4,
            latent_dims: vec![1, 1],
            hidden_dims: vec![1],
            seed: 0,
        };
        let mut model = init_model(&arch).unwrap();
        let mut params = vec![0.0; model.param_count()];
        // infer[0] layout: hidden w (4), hidden b (1), mu w (1), mu b (1),
        // log_s w (1), log_s b (1).
        params[6] = 2.0; // mu bias
        params[8] = -40.0; // log_s bias, saturates near -7
        model.set_params(&params).unwrap();

        let data = Dataset::unlabeled(vec![Grid::new(2, 2, 1, vec![128; 4]).unwrap(); 3]).unwrap();
        let stats = estimate_latent_stats(&model, &data, 20, 1).unwrap();
        let (lo, hi) = stats.ranges[0][0];
        assert!((lo - 1.8).abs() < 0.05, "low edge {lo}");
        assert!((hi - 2.2).abs() < 0.05, "high edge {hi}");
    }

    #[test]
    fn rejects_empty_inputs() {
        let model = two_layer_model(1);
        let empty = Dataset::unlabeled(vec![]).unwrap();
        assert!(matches!(
            estimate_latent_stats(&model, &empty, 4, 0),
            Err(CodecError::InvalidArgument(_))
        ));
        let data = grids(2, 16, 0);
        assert!(matches!(
            estimate_latent_stats(&model, &data, 0, 0),
            Err(CodecError::InvalidArgument(_))
        ));
    }

    #[test]
    fn cache_file_roundtrips() {
        let model = two_layer_model(2);
        let data = grids(5, 16, 8);
        let stats = estimate_latent_stats(&model, &data, 6, 12).unwrap();
        let file = StatsFile { model_hash: model.fingerprint(), n_draws: 6, seed: 12, stats };

        let dir = tempdir().unwrap();
        let path = dir.path().join("ranges.npcb");
        save_stats(&path, &file).unwrap();
        let back = load_stats(&path).unwrap();
        assert_eq!(back, file);
    }

    #[test]
    fn cache_corruption_and_malformed_files_are_rejected() {
        let model = two_layer_model(3);
        let data = grids(4, 16, 9);
        let stats = estimate_latent_stats(&model, &data, 4, 7).unwrap();
        let file = StatsFile { model_hash: model.fingerprint(), n_draws: 4, seed: 7, stats };

        let dir = tempdir().unwrap();
        let path = dir.path().join("ranges.npcb");
        save_stats(&path, &file).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x10;
        fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_stats(&path), Err(CodecError::ChecksumMismatch)));

        fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_stats(&path), Err(CodecError::MalformedFile(_))));
    }
}
