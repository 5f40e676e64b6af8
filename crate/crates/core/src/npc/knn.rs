//! k-nearest-neighbour voting over a distance matrix.

use std::collections::BTreeMap;

use crate::data::Dataset;
use crate::model::LatentModel;

use super::{DistanceMatrix, NpcError};

/// How a tied majority vote is resolved. `MinDistanceSum` prefers the tied
/// class with the smallest summed distance, falling back to the lowest
/// label; `LowestLabel` goes straight to the lowest label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    MinDistanceSum,
    LowestLabel,
}

#[derive(Debug, Clone, Copy)]
pub struct KnnConfig {
    pub k: usize,
    pub tiebreak: TieBreak,
}

impl KnnConfig {
    /// Defaults that work well in practice: k = 2 for single-channel
    /// grids, k = 3 for colour.
    pub fn for_channels(channels: u8) -> Self {
        KnnConfig {
            k: if channels == 3 { 3 } else { 2 },
            tiebreak: TieBreak::MinDistanceSum,
        }
    }
}

/// Predict one label per matrix row: stable argsort of the row (ties keep
/// the lower support index), majority vote over the k nearest, vote ties
/// resolved per `cfg.tiebreak`.
///
/// Panics if `labels` does not cover the support set or k is outside
/// [1, support_count]; validate user-supplied configs before calling.
pub fn knn_predict(m: &DistanceMatrix, labels: &[u16], cfg: &KnnConfig) -> Vec<u16> {
    assert_eq!(labels.len(), m.support_count, "one label per support item");
    assert!(cfg.k >= 1, "k must be positive");
    assert!(cfg.k <= m.support_count, "k exceeds support size");
    (0..m.test_count)
        .map(|i| predict_row(m.row(i), labels, cfg))
        .collect()
}

fn predict_row(dists: &[f64], labels: &[u16], cfg: &KnnConfig) -> u16 {
    let mut order: Vec<usize> = (0..dists.len()).collect();
    order.sort_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(a.cmp(&b)));

    let mut tally: BTreeMap<u16, (usize, f64)> = BTreeMap::new();
    for &idx in order.iter().take(cfg.k) {
        let entry = tally.entry(labels[idx]).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += dists[idx];
    }

    // Ascending label order makes "lowest label" the natural final tie.
    let mut winner: Option<(u16, usize, f64)> = None;
    for (&label, &(count, sum)) in &tally {
        let beats = match winner {
            None => true,
            Some((_, best_count, best_sum)) => {
                count > best_count
                    || (count == best_count
                        && cfg.tiebreak == TieBreak::MinDistanceSum
                        && sum < best_sum)
            }
        };
        if beats {
            winner = Some((label, count, sum));
        }
    }
    winner.expect("k >= 1 leaves a non-empty tally").0
}

/// Fraction of predictions matching the truth.
pub fn accuracy(pred: &[u16], truth: &[u16]) -> f64 {
    assert_eq!(pred.len(), truth.len(), "prediction/truth length mismatch");
    assert!(!pred.is_empty(), "accuracy of an empty prediction set");
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / pred.len() as f64
}

/// kNN over Euclidean distance between first-layer posterior means: the
/// baseline the compression distances are measured against.
pub fn latent_knn(
    model: &LatentModel,
    support: &Dataset,
    test: &Dataset,
    k: usize,
) -> Result<Vec<u16>, NpcError> {
    let labels = support
        .labels
        .as_ref()
        .ok_or_else(|| NpcError::InvalidArgument("latent kNN needs a labeled support set".into()))?;
    if k == 0 || k > support.len() {
        return Err(NpcError::InvalidArgument(format!(
            "k = {k} outside [1, {}]",
            support.len()
        )));
    }
    let means = |ds: &Dataset| -> Result<Vec<Vec<f64>>, NpcError> {
        ds.grids.iter().map(|g| Ok(model.latent_mean(g)?)).collect()
    };
    let support_means = means(support)?;
    let test_means = means(test)?;

    let cfg = KnnConfig {
        k,
        tiebreak: TieBreak::MinDistanceSum,
    };
    Ok(test_means
        .iter()
        .map(|t| {
            let dists: Vec<f64> = support_means.iter().map(|s| euclidean(t, s)).collect();
            predict_row(&dists, labels, &cfg)
        })
        .collect())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
