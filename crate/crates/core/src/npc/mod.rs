//! Compression-distance kNN classification.
//!
//! A compressor handle supplies description lengths C(x); the normalized
//! distances here turn those into pairwise dissimilarities between a test
//! set and a support set, and `knn_predict` votes over the nearest support
//! items. Single-item lengths are compressed once per item and cached in
//! the matrix, so an n x m matrix costs n + m + n*m compressions.

mod io;
mod knn;

pub use io::{load_matrix, save_matrix};
pub use knn::{accuracy, knn_predict, latent_knn, KnnConfig, TieBreak};

use rayon::prelude::*;
use thiserror::Error;

use crate::compressors::{CompressorError, CompressorHandle};
use crate::data::{aggregate, AggregateInput, Aggregation, DataError, Dataset};
use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum NpcError {
    #[error("zero-length compression: distances need C(x) > 0")]
    ZeroLength,
    #[error("compressing test item {index}: {source}")]
    TestItem {
        index: usize,
        #[source]
        source: CompressorError,
    },
    #[error("compressing support item {index}: {source}")]
    SupportItem {
        index: usize,
        #[source]
        source: CompressorError,
    },
    #[error("compressing pair ({row}, {col}): {source}")]
    Pair {
        row: usize,
        col: usize,
        #[source]
        source: CompressorError,
    },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    InvalidArgument(String),
    #[error("malformed distance file: {0}")]
    MalformedFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which normalized distance to apply to (C(x), C(y), C(psi(x, y))).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ncd,
    Cdm,
    Clm,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ncd => "ncd",
            Metric::Cdm => "cdm",
            Metric::Clm => "clm",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "ncd" => Metric::Ncd,
            "cdm" => Metric::Cdm,
            "clm" => Metric::Clm,
            _ => return None,
        })
    }

    pub fn eval(self, cx: u64, cy: u64, cxy: u64) -> Result<f64, NpcError> {
        match self {
            Metric::Ncd => ncd(cx, cy, cxy),
            Metric::Cdm => cdm(cx, cy, cxy),
            Metric::Clm => clm(cx, cy, cxy),
        }
    }
}

fn check_singles(cx: u64, cy: u64) -> Result<(), NpcError> {
    if cx == 0 || cy == 0 {
        return Err(NpcError::ZeroLength);
    }
    Ok(())
}

/// NCD(x, y) = (C(xy) - min(C(x), C(y))) / max(C(x), C(y)).
pub fn ncd(cx: u64, cy: u64, cxy: u64) -> Result<f64, NpcError> {
    check_singles(cx, cy)?;
    Ok((cxy as f64 - cx.min(cy) as f64) / cx.max(cy) as f64)
}

/// CDM(x, y) = C(xy) / (C(x) + C(y)); 0.5 for an idempotent compressor,
/// 1.0 when the pair compresses no better than the parts.
pub fn cdm(cx: u64, cy: u64, cxy: u64) -> Result<f64, NpcError> {
    check_singles(cx, cy)?;
    Ok(cxy as f64 / (cx as f64 + cy as f64))
}

/// CLM(x, y) = 1 - (C(x) + C(y) - C(xy)) / C(xy).
pub fn clm(cx: u64, cy: u64, cxy: u64) -> Result<f64, NpcError> {
    check_singles(cx, cy)?;
    Ok(1.0 - (cx as f64 + cy as f64 - cxy as f64) / cxy as f64)
}

/// Pairwise distances between a test set (rows) and a support set
/// (columns), plus the cached single-item lengths that produced them.
///
/// Entries are recorded as computed, never clamped: a value outside the
/// metric's nominal range is evidence of a misbehaving compressor, which
/// the axiom harness should see rather than have hidden.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    /// Row-major, test_count x support_count.
    pub values: Vec<f64>,
    pub test_count: usize,
    pub support_count: usize,
    pub metric: Metric,
    pub aggregation: Aggregation,
    pub compressor: String,
    /// C(x) per test item; empty when loaded from disk.
    pub test_singles: Vec<u64>,
    /// C(y) per support item; empty when loaded from disk.
    pub support_singles: Vec<u64>,
}

impl DistanceMatrix {
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.support_count + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let start = row * self.support_count;
        &self.values[start..start + self.support_count]
    }
}

/// Build the full distance matrix for `metric` under `aggregation`.
///
/// Each single is compressed exactly once; pair cells are distributed over
/// `workers` threads (serial when `workers <= 1`). Results are identical
/// for any worker count, and the first failing cell in row-major order is
/// the one reported.
pub fn distance_matrix(
    handle: &dyn CompressorHandle,
    metric: Metric,
    aggregation: Aggregation,
    test: &Dataset,
    support: &Dataset,
    workers: usize,
) -> Result<DistanceMatrix, NpcError> {
    if !handle.deterministic() {
        return Err(NpcError::InvalidArgument(
            "single-compression caching needs a deterministic compressor".into(),
        ));
    }
    let n = test.len();
    let m = support.len();

    let single = |grid_at: &Dataset, i: usize| {
        handle.measure(&AggregateInput::Single(grid_at.grids[i].clone()))
    };
    let pair = |cell: usize| {
        let (i, j) = (cell / m, cell % m);
        aggregate(&test.grids[i], &support.grids[j], aggregation)
            .map_err(CompressorError::from)
            .and_then(|input| handle.measure(&input))
    };

    let (test_raw, support_raw, pair_raw): (Vec<_>, Vec<_>, Vec<_>) = if workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| NpcError::InvalidArgument(format!("worker pool: {e}")))?;
        pool.install(|| {
            (
                (0..n).into_par_iter().map(|i| single(test, i)).collect(),
                (0..m).into_par_iter().map(|j| single(support, j)).collect(),
                (0..n * m).into_par_iter().map(pair).collect(),
            )
        })
    } else {
        (
            (0..n).map(|i| single(test, i)).collect(),
            (0..m).map(|j| single(support, j)).collect(),
            (0..n * m).map(pair).collect(),
        )
    };

    let unwrap_each = |raw: Vec<Result<u64, CompressorError>>,
                       wrap: fn(usize, CompressorError) -> NpcError|
     -> Result<Vec<u64>, NpcError> {
        raw.into_iter()
            .enumerate()
            .map(|(i, r)| r.map_err(|e| wrap(i, e)))
            .collect()
    };
    let test_singles = unwrap_each(test_raw, |index, source| NpcError::TestItem { index, source })?;
    let support_singles = unwrap_each(support_raw, |index, source| NpcError::SupportItem {
        index,
        source,
    })?;

    let mut values = Vec::with_capacity(n * m);
    for (cell, raw) in pair_raw.into_iter().enumerate() {
        let (row, col) = (cell / m, cell % m);
        let cxy = raw.map_err(|source| NpcError::Pair { row, col, source })?;
        values.push(metric.eval(test_singles[row], support_singles[col], cxy)?);
    }

    Ok(DistanceMatrix {
        values,
        test_count: n,
        support_count: m,
        metric,
        aggregation,
        compressor: handle.name().to_string(),
        test_singles,
        support_singles,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;
    use crate::compressors::mock_ideal_handle;
    use crate::data::Grid;
    use crate::rng::SplitMix64;

    fn random_grids(count: usize, seed: u64) -> Vec<Grid> {
        let mut rng = SplitMix64::new(seed);
        (0..count)
            .map(|_| {
                let data = (0..64).map(|_| (rng.next_u64() & 0xFF) as u8).collect();
                Grid::new(8, 8, 1, data).unwrap()
            })
            .collect()
    }

    #[test]
    fn hand_values_match() {
        assert!((ncd(100, 120, 150).unwrap() - 50.0 / 120.0).abs() < 1e-15);
        assert!((cdm(100, 120, 150).unwrap() - 150.0 / 220.0).abs() < 1e-15);
        assert!((clm(100, 120, 150).unwrap() - (1.0 - 70.0 / 150.0)).abs() < 1e-15);
    }

    #[test]
    fn idempotent_and_additive_endpoints() {
        assert_eq!(ncd(100, 100, 100).unwrap(), 0.0);
        assert_eq!(cdm(100, 100, 100).unwrap(), 0.5);
        assert_eq!(clm(100, 100, 100).unwrap(), 0.0);

        assert_eq!(ncd(100, 120, 220).unwrap(), 1.0);
        assert_eq!(cdm(100, 120, 220).unwrap(), 1.0);
        assert_eq!(clm(100, 120, 220).unwrap(), 1.0);
    }

    #[test]
    fn zero_singles_are_refused() {
        for f in [ncd, cdm, clm] {
            assert!(matches!(f(0, 5, 5), Err(NpcError::ZeroLength)));
            assert!(matches!(f(5, 0, 5), Err(NpcError::ZeroLength)));
        }
    }

    #[test]
    fn super_additive_pairs_do_not_underflow() {
        // cxy > cx + cy happens with defective compressors; the value is
        // recorded out of range rather than wrapped by u64 arithmetic.
        assert!((clm(10, 10, 25).unwrap() - 1.2).abs() < 1e-15);
        assert!(cdm(10, 10, 25).unwrap() > 1.0);
    }

    #[test]
    fn metric_names_roundtrip() {
        for metric in [Metric::Ncd, Metric::Cdm, Metric::Clm] {
            assert_eq!(Metric::parse(metric.name()), Some(metric));
        }
        assert_eq!(Metric::parse("euclidean"), None);
    }

    #[test]
    fn one_by_one_matrix_is_the_metric_of_the_parts() {
        let grids = random_grids(2, 11);
        let handle = mock_ideal_handle();
        let test = Dataset::unlabeled(vec![grids[0].clone()]).unwrap();
        let support = Dataset::unlabeled(vec![grids[1].clone()]).unwrap();
        let m = distance_matrix(
            &*handle,
            Metric::Ncd,
            Aggregation::Concat,
            &test,
            &support,
            1,
        )
        .unwrap();

        let cx = handle
            .measure(&AggregateInput::Single(grids[0].clone()))
            .unwrap();
        let cy = handle
            .measure(&AggregateInput::Single(grids[1].clone()))
            .unwrap();
        let cxy = handle
            .measure(&aggregate(&grids[0], &grids[1], Aggregation::Concat).unwrap())
            .unwrap();
        assert_eq!(m.values, vec![ncd(cx, cy, cxy).unwrap()]);
        assert_eq!(m.test_singles, vec![cx]);
        assert_eq!(m.support_singles, vec![cy]);
        assert_eq!(m.compressor, "mock-ideal");
    }

    #[test]
    fn identical_items_have_zero_ncd() {
        let grids = random_grids(4, 7);
        let test = Dataset::unlabeled(vec![grids[1].clone()]).unwrap();
        let support = Dataset::unlabeled(grids).unwrap();
        let m = distance_matrix(
            &*mock_ideal_handle(),
            Metric::Ncd,
            Aggregation::Concat,
            &test,
            &support,
            1,
        )
        .unwrap();
        assert_eq!(m.value(0, 1), 0.0);
        assert!(m.value(0, 0) > 0.0);
        assert!(m.value(0, 2) > 0.0);
    }

    #[test]
    fn workers_do_not_change_the_matrix() {
        let test = Dataset::unlabeled(random_grids(5, 3)).unwrap();
        let support = Dataset::unlabeled(random_grids(7, 4)).unwrap();
        let handle = mock_ideal_handle();
        let serial = distance_matrix(
            &*handle,
            Metric::Cdm,
            Aggregation::Avg,
            &test,
            &support,
            1,
        )
        .unwrap();
        let parallel = distance_matrix(
            &*handle,
            Metric::Cdm,
            Aggregation::Avg,
            &test,
            &support,
            8,
        )
        .unwrap();
        assert_eq!(serial, parallel);
    }

    struct CountingHandle {
        calls: AtomicUsize,
    }

    impl CompressorHandle for CountingHandle {
        fn name(&self) -> &str {
            "counting"
        }

        fn measure(&self, input: &AggregateInput) -> Result<u64, CompressorError> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            mock_ideal_handle().measure(input)
        }

        fn deterministic(&self) -> bool {
            true
        }
    }

    #[test]
    fn singles_are_compressed_once_per_item() {
        let test = Dataset::unlabeled(random_grids(4, 21)).unwrap();
        let support = Dataset::unlabeled(random_grids(6, 22)).unwrap();
        let handle = CountingHandle {
            calls: AtomicUsize::new(0),
        };
        let m = distance_matrix(
            &handle,
            Metric::Ncd,
            Aggregation::Concat,
            &test,
            &support,
            1,
        )
        .unwrap();
        assert_eq!(m.values.len(), 24);
        assert_eq!(handle.calls.load(Ordering::SeqCst), 4 + 6 + 4 * 6);
    }

    #[test]
    fn cached_entries_match_direct_measurement() {
        let test = Dataset::unlabeled(random_grids(3, 61)).unwrap();
        let support = Dataset::unlabeled(random_grids(4, 62)).unwrap();
        let handle = mock_ideal_handle();
        let m = distance_matrix(
            &*handle,
            Metric::Clm,
            Aggregation::Concat,
            &test,
            &support,
            1,
        )
        .unwrap();
        for i in 0..3 {
            for j in 0..4 {
                let cx = handle
                    .measure(&AggregateInput::Single(test.grids[i].clone()))
                    .unwrap();
                let cy = handle
                    .measure(&AggregateInput::Single(support.grids[j].clone()))
                    .unwrap();
                let cxy = handle
                    .measure(&aggregate(&test.grids[i], &support.grids[j], Aggregation::Concat).unwrap())
                    .unwrap();
                assert_eq!(m.value(i, j), clm(cx, cy, cxy).unwrap());
            }
        }
    }

    #[test]
    fn transposing_the_datasets_transposes_the_matrix() {
        let a = Dataset::unlabeled(random_grids(4, 31)).unwrap();
        let b = Dataset::unlabeled(random_grids(5, 32)).unwrap();
        let handle = mock_ideal_handle();
        let ab = distance_matrix(&*handle, Metric::Ncd, Aggregation::Avg, &a, &b, 1).unwrap();
        let ba = distance_matrix(&*handle, Metric::Ncd, Aggregation::Avg, &b, &a, 1).unwrap();
        for i in 0..4 {
            for j in 0..5 {
                assert_eq!(ab.value(i, j), ba.value(j, i));
            }
        }
    }

    #[test]
    fn ncd_triangle_inequality_holds_on_random_triples() {
        let ds = Dataset::unlabeled(random_grids(24, 41)).unwrap();
        let m = distance_matrix(
            &*mock_ideal_handle(),
            Metric::Ncd,
            Aggregation::Concat,
            &ds,
            &ds,
            1,
        )
        .unwrap();
        let mut rng = SplitMix64::new(99);
        for _ in 0..200 {
            let x = rng.next_below(24) as usize;
            let y = rng.next_below(24) as usize;
            let z = rng.next_below(24) as usize;
            assert!(m.value(x, y) <= m.value(x, z) + m.value(z, y) + 1e-12);
        }
    }

    struct PairAverseHandle;

    impl CompressorHandle for PairAverseHandle {
        fn name(&self) -> &str {
            "pair-averse"
        }

        fn measure(&self, input: &AggregateInput) -> Result<u64, CompressorError> {
            match input {
                AggregateInput::Single(_) => Ok(100),
                AggregateInput::OrderedPair(..) => {
                    Err(CompressorError::UnsupportedCodec("pairs".into()))
                }
            }
        }

        fn deterministic(&self) -> bool {
            true
        }
    }

    #[test]
    fn pair_failures_carry_the_first_cell_position() {
        let test = Dataset::unlabeled(random_grids(2, 51)).unwrap();
        let support = Dataset::unlabeled(random_grids(3, 52)).unwrap();
        // workers = 8: the reported cell must still be the row-major first.
        let err = distance_matrix(
            &PairAverseHandle,
            Metric::Ncd,
            Aggregation::Concat,
            &test,
            &support,
            8,
        )
        .unwrap_err();
        assert!(matches!(err, NpcError::Pair { row: 0, col: 0, .. }), "got {err}");
    }

    struct ZeroHandle;

    impl CompressorHandle for ZeroHandle {
        fn name(&self) -> &str {
            "zero"
        }

        fn measure(&self, _input: &AggregateInput) -> Result<u64, CompressorError> {
            Ok(0)
        }

        fn deterministic(&self) -> bool {
            true
        }
    }

    struct FickleHandle;

    impl CompressorHandle for FickleHandle {
        fn name(&self) -> &str {
            "fickle"
        }

        fn measure(&self, _input: &AggregateInput) -> Result<u64, CompressorError> {
            Ok(1)
        }

        fn deterministic(&self) -> bool {
            false
        }
    }

    #[test]
    fn degenerate_handles_are_refused() {
        let ds = Dataset::unlabeled(random_grids(2, 71)).unwrap();
        let err = distance_matrix(&ZeroHandle, Metric::Ncd, Aggregation::Avg, &ds, &ds, 1)
            .unwrap_err();
        assert!(matches!(err, NpcError::ZeroLength));

        let err = distance_matrix(&FickleHandle, Metric::Ncd, Aggregation::Avg, &ds, &ds, 1)
            .unwrap_err();
        assert!(matches!(err, NpcError::InvalidArgument(_)));
    }
}
