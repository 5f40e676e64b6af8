//! Few-shot splits: per-class shuffles carve support and test items,
//! everything else becomes the unlabeled training pool.

use super::{DataError, Dataset, SplitSpec};
use crate::rng::SplitMix64;

/// Splits a labeled dataset into (unlabeled, support, test).
///
/// Per class, indices are shuffled by a PRNG seeded with
/// `spec.seed XOR class`, then the first `shots` items go to support and
/// the next `test_size / class_count` to test. The same seed always
/// reproduces the same split.
pub fn split_few_shot(ds: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset, Dataset), DataError> {
    let labels = ds.labels.as_ref().ok_or(DataError::UnlabeledInput)?;
    let classes = ds.class_count as usize;
    if classes == 0 {
        return Err(DataError::InsufficientData("dataset has zero classes".into()));
    }
    if spec.shots == 0 {
        return Err(DataError::InsufficientData("shot count must be at least 1".into()));
    }
    if spec.test_size == 0 || spec.test_size % classes != 0 {
        return Err(DataError::InsufficientData(format!(
            "test size {} must be a positive multiple of the class count {classes}",
            spec.test_size
        )));
    }
    let test_per_class = spec.test_size / classes;

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (idx, &label) in labels.iter().enumerate() {
        by_class[label as usize].push(idx);
    }

    let mut support_idx = Vec::new();
    let mut test_idx = Vec::new();
    let mut rest_idx = Vec::new();
    for (class, indices) in by_class.iter_mut().enumerate() {
        let need = spec.shots + test_per_class;
        if indices.len() < need {
            return Err(DataError::InsufficientData(format!(
                "class {class} has {} items, split wants {need}",
                indices.len()
            )));
        }
        let mut rng = SplitMix64::new(spec.seed ^ class as u64);
        rng.shuffle(indices);
        support_idx.extend_from_slice(&indices[..spec.shots]);
        test_idx.extend_from_slice(&indices[spec.shots..need]);
        rest_idx.extend_from_slice(&indices[need..]);
    }

    let pick = |idx: &[usize]| -> (Vec<_>, Vec<_>) {
        let grids = idx.iter().map(|&i| ds.grids[i].clone()).collect();
        let labs = idx.iter().map(|&i| labels[i]).collect();
        (grids, labs)
    };

    let (sup_grids, sup_labels) = pick(&support_idx);
    let (test_grids, test_labels) = pick(&test_idx);
    let (rest_grids, _) = pick(&rest_idx);

    Ok((
        Dataset::unlabeled(rest_grids)?,
        Dataset::labeled(sup_grids, sup_labels, ds.class_count)?,
        Dataset::labeled(test_grids, test_labels, ds.class_count)?,
    ))
}
