//! The experiment driver behind `npc run` and `npc report`.
//!
//! One invocation trains a single model, then reuses it for every shot
//! count, every trial, and every compressor on the bitrate/accuracy
//! plane. Everything downstream of the config is seeded, so two runs of
//! the same config produce byte-identical reports; wall-clock timings
//! are collected separately and never enter the rendered text.

use std::fmt::Write as _;
use std::time::Instant;

use npc_core::codec::{build_bins, estimate_latent_stats};
use npc_core::compressors::{byte_handle, nelbo_handle, neural_handle, CompressorHandle, NeuralMode};
use npc_core::data::{load_dataset, split_few_shot, synth_generate, Dataset, SplitSpec};
use npc_core::model::{init_model, train, Architecture, LatentModel};
use npc_core::npc::{accuracy, distance_matrix, knn_predict, latent_knn, KnnConfig};
use npc_core::rng::derive_seed;

use crate::config::{DataSource, ExperimentConfig};
use crate::CliError;

/// Seed labels for the independent random streams of one run.
mod seeds {
    pub const BASE_SPLIT: u64 = 1;
    pub const ARCH: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const HANDLE: u64 = 4;
    pub const STATS: u64 = 5;
    /// Trial `t` splits with label `EPISODE + t`, shared across shot
    /// counts and compressors so comparisons are paired.
    pub const EPISODE: u64 = 100;
}

/// Accuracies for one shot count, one entry per trial.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotResult {
    pub shots: usize,
    pub accuracies: Vec<f64>,
    pub latent_accuracies: Vec<f64>,
}

impl ShotResult {
    pub fn mean(&self) -> f64 {
        mean(&self.accuracies)
    }

    /// Sample standard deviation over trials; zero for a single trial.
    pub fn spread(&self) -> f64 {
        sample_std(&self.accuracies)
    }

    pub fn latent_mean(&self) -> f64 {
        mean(&self.latent_accuracies)
    }
}

/// One compressor on the bitrate/accuracy plane.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressorPoint {
    pub name: String,
    pub bits_per_dim: f64,
    pub accuracy: f64,
}

/// Everything one run produces, minus artifacts written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub config_echo: String,
    /// Epochs the single training run actually executed.
    pub train_epochs: usize,
    /// Last entry of the training curve; `None` when `epochs = 0`.
    pub final_bits_per_dim: Option<f64>,
    /// Latent bin precision, or `None` when the codec needs no bins.
    pub bins_precision: Option<u8>,
    pub shot_results: Vec<ShotResult>,
    pub points: Vec<CompressorPoint>,
    pub spearman_r: f64,
    /// (stage, seconds); reported on stderr only, never in the files.
    pub timings: Vec<(String, f64)>,
}

impl RunReport {
    /// Deterministic report text: same config, same bytes.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# run report");
        let _ = writeln!(s);
        let _ = write!(s, "{}", self.config_echo);
        let _ = writeln!(s);
        let _ = writeln!(s, "[training]");
        let _ = writeln!(s, "epochs_run = {}", self.train_epochs);
        match self.final_bits_per_dim {
            Some(b) => {
                let _ = writeln!(s, "final_bits_per_dim = {b:.4}");
            }
            None => {
                let _ = writeln!(s, "final_bits_per_dim = n/a");
            }
        }
        match self.bins_precision {
            Some(p) => {
                let _ = writeln!(s, "bins_precision_z = {p}");
            }
            None => {
                let _ = writeln!(s, "bins_precision_z = none (bound-only codec)");
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[accuracy]");
        for r in &self.shot_results {
            let _ = writeln!(
                s,
                "shots = {:<3} mean = {:.4}  spread = {:.4}  latent_knn = {:.4}  trials = {}",
                r.shots,
                r.mean(),
                r.spread(),
                r.latent_mean(),
                r.accuracies.len(),
            );
            let per: Vec<String> = r.accuracies.iter().map(|a| format!("{a:.4}")).collect();
            let _ = writeln!(s, "  per_trial = {}", per.join(" "));
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "[bitrate]");
        let _ = writeln!(s, "{:<12} {:>12} {:>10}", "compressor", "bits_per_dim", "accuracy");
        for p in &self.points {
            let _ = writeln!(s, "{:<12} {:>12.4} {:>10.4}", p.name, p.bits_per_dim, p.accuracy);
        }
        let _ = writeln!(s, "spearman_r = {:.6}", self.spearman_r);
        s
    }

    /// One `name bits_per_dim accuracy` line per compressor.
    pub fn points_file(&self) -> String {
        points_text(&self.points)
    }
}

fn points_text(points: &[CompressorPoint]) -> String {
    let mut s = String::new();
    for p in points {
        let _ = writeln!(s, "{} {:.6} {:.6}", p.name, p.bits_per_dim, p.accuracy);
    }
    s
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    var.sqrt()
}

/// Spearman rank correlation with average ranks on ties.
///
/// Fails on length mismatch, fewer than two pairs, non-finite values,
/// or a constant input (the correlation is undefined there).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64, CliError> {
    if xs.len() != ys.len() {
        return Err(CliError::Numeric("rank correlation needs paired samples".into()));
    }
    if xs.len() < 2 {
        return Err(CliError::Numeric("rank correlation needs at least two pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(CliError::Numeric("rank correlation input must be finite".into()));
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let mx = mean(&rx);
    let my = mean(&ry);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in rx.iter().zip(&ry) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CliError::Numeric("rank correlation is undefined on constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// 1-based ranks; tied values share the average of their positions.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && xs[order[j]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            ranks[idx] = rank;
        }
        i = j;
    }
    ranks
}

/// The single trained model plus everything episodes need from it.
struct Setup {
    model: LatentModel,
    curve: Vec<f64>,
    handle: Box<dyn CompressorHandle>,
    /// `None` when the codec needs no bins.
    bins: Option<npc_core::codec::Bins>,
    /// Labeled pool that every episode re-splits.
    eval: Dataset,
    knn: KnnConfig,
}

fn load_data(cfg: &ExperimentConfig) -> Result<Dataset, CliError> {
    let data = match &cfg.data {
        DataSource::File(path) => load_dataset(path)?,
        DataSource::Synth { classes, per_class, width, height } => {
            synth_generate(*classes, *per_class, *width, *height, cfg.seed)?
        }
    };
    if data.labels.is_none() {
        return Err(CliError::Config("experiments need a labeled dataset".into()));
    }
    Ok(data)
}

fn prepare(cfg: &ExperimentConfig, timings: &mut Vec<(String, f64)>) -> Result<Setup, CliError> {
    let data = load_data(cfg)?;
    let max_shots = *cfg.shots.iter().max().expect("validated non-empty");

    let base = SplitSpec {
        shots: max_shots,
        test_size: cfg.test_size,
        seed: derive_seed(cfg.seed, seeds::BASE_SPLIT),
    };
    let (train_pool, sup0, test0) = split_few_shot(&data, &base)?;
    if train_pool.is_empty() {
        return Err(CliError::Config(
            "the split leaves no grids to train on; shrink shots or test_size".into(),
        ));
    }
    let mut eval = sup0;
    let test_labels = test0.labels.expect("split output is labeled");
    eval.grids.extend(test0.grids);
    eval.labels.as_mut().expect("split output is labeled").extend(test_labels);

    let arch = Architecture {
        input_dim: eval.grids[0].dim(),
        latent_dims: cfg.latent_dims.clone(),
        hidden_dims: cfg.hidden_dims.clone(),
        seed: derive_seed(cfg.seed, seeds::ARCH),
    };
    let t0 = Instant::now();
    let (model, curve) =
        train(&init_model(&arch)?, &train_pool, &cfg.train_config(derive_seed(cfg.seed, seeds::TRAIN)))?;
    timings.push(("train".into(), t0.elapsed().as_secs_f64()));

    let handle_seed = derive_seed(cfg.seed, seeds::HANDLE);
    let (handle, bins) = match cfg.codec.coding() {
        None => (nelbo_handle(&model, handle_seed), None),
        Some(coding) => {
            let stats = estimate_latent_stats(
                &model,
                &train_pool,
                cfg.stats_draws,
                derive_seed(cfg.seed, seeds::STATS),
            )?;
            let bins = build_bins(&model, &stats, cfg.precision_z)?;
            let handle =
                neural_handle(&model, &bins, coding, NeuralMode::Actual, cfg.precision_r, handle_seed)?;
            (handle, Some(bins))
        }
    };

    let knn = match cfg.k {
        Some(k) => KnnConfig { k, ..KnnConfig::for_channels(eval.grids[0].channels()) },
        None => KnnConfig::for_channels(eval.grids[0].channels()),
    };

    Ok(Setup { model, curve, handle, bins, eval, knn })
}

/// The labeled episode splits every trial works from.
fn episodes(
    cfg: &ExperimentConfig,
    eval: &Dataset,
    shots: usize,
    knn: &KnnConfig,
) -> Result<Vec<(Dataset, Dataset)>, CliError> {
    let mut out = Vec::with_capacity(cfg.trials);
    for trial in 0..cfg.trials {
        let spec = SplitSpec {
            shots,
            test_size: cfg.test_size,
            seed: derive_seed(cfg.seed, seeds::EPISODE + trial as u64),
        };
        let (_, sup, test) = split_few_shot(eval, &spec)?;
        if knn.k > sup.len() {
            return Err(CliError::Config(format!(
                "k = {} exceeds the {}-item support set at {} shots",
                knn.k,
                sup.len(),
                shots,
            )));
        }
        out.push((sup, test));
    }
    Ok(out)
}

fn episode_accuracy(
    handle: &dyn CompressorHandle,
    cfg: &ExperimentConfig,
    knn: &KnnConfig,
    sup: &Dataset,
    test: &Dataset,
) -> Result<(f64, npc_core::npc::DistanceMatrix), CliError> {
    let m = distance_matrix(handle, cfg.metric, cfg.aggregation, test, sup, cfg.workers)?;
    let pred = knn_predict(&m, sup.labels.as_ref().expect("split output is labeled"), knn);
    let acc = accuracy(&pred, test.labels.as_ref().expect("split output is labeled"));
    Ok((acc, m))
}

/// Mean net bits per dimension over every single in the matrix.
fn matrix_bits_per_dim(m: &npc_core::npc::DistanceMatrix, test: &Dataset, sup: &Dataset) -> f64 {
    let bits: u64 = m.test_singles.iter().chain(&m.support_singles).sum();
    let dims: usize =
        test.grids.iter().map(|g| g.dim()).sum::<usize>() + sup.grids.iter().map(|g| g.dim()).sum::<usize>();
    bits as f64 / dims as f64
}

/// Bitrate/accuracy points for the given compressors, plus the Spearman
/// rank correlation between the two columns. Accuracy is the mean over
/// `cfg.trials` episodes at the first configured shot count; the bitrate
/// is read off the first trial's singles. Needs at least three
/// compressors, or the correlation is meaningless.
pub fn bitrate_accuracy_report(
    handles: &[Box<dyn CompressorHandle>],
    cfg: &ExperimentConfig,
    eval: &Dataset,
) -> Result<(Vec<CompressorPoint>, f64), CliError> {
    if handles.len() < 3 {
        return Err(CliError::Config(format!(
            "a bitrate/accuracy report needs at least 3 compressors, got {}",
            handles.len(),
        )));
    }
    let knn = match cfg.k {
        Some(k) => KnnConfig { k, ..KnnConfig::for_channels(eval.grids[0].channels()) },
        None => KnnConfig::for_channels(eval.grids[0].channels()),
    };
    let eps = episodes(cfg, eval, cfg.shots[0], &knn)?;
    let mut points = Vec::with_capacity(handles.len());
    for handle in handles {
        let mut accs = Vec::with_capacity(eps.len());
        let mut bits = 0.0;
        for (trial, (sup, test)) in eps.iter().enumerate() {
            let (acc, m) = episode_accuracy(handle.as_ref(), cfg, &knn, sup, test)?;
            accs.push(acc);
            if trial == 0 {
                bits = matrix_bits_per_dim(&m, test, sup);
            }
        }
        points.push(CompressorPoint {
            name: handle.name().to_string(),
            bits_per_dim: bits,
            accuracy: mean(&accs),
        });
    }
    let xs: Vec<f64> = points.iter().map(|p| p.bits_per_dim).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.accuracy).collect();
    let r = spearman(&xs, &ys)?;
    Ok((points, r))
}

/// The compressors every report compares. The configured codec sits
/// alongside its neural siblings when bins exist; the bound-only codec
/// has no bins, so byte-level compressors fill the plane instead.
fn report_handles(cfg: &ExperimentConfig, setup: &Setup) -> Result<Vec<Box<dyn CompressorHandle>>, CliError> {
    let seed = derive_seed(cfg.seed, seeds::HANDLE);
    let mut out: Vec<Box<dyn CompressorHandle>> = vec![byte_handle("deflate")?];
    match &setup.bins {
        Some(bins) => {
            for coding in [npc_core::codec::Codec::BbAns, npc_core::codec::Codec::BitSwap] {
                out.push(neural_handle(
                    &setup.model,
                    bins,
                    coding,
                    NeuralMode::Actual,
                    cfg.precision_r,
                    seed,
                )?);
            }
        }
        None => {
            out.push(byte_handle("zlib")?);
            out.push(byte_handle("gzip")?);
        }
    }
    out.push(nelbo_handle(&setup.model, seed));
    Ok(out)
}

/// Run the full experiment a config describes.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunReport, CliError> {
    let mut timings = Vec::new();
    let setup = prepare(cfg, &mut timings)?;

    let mut shot_results = Vec::with_capacity(cfg.shots.len());
    let t0 = Instant::now();
    for &shots in &cfg.shots {
        let eps = episodes(cfg, &setup.eval, shots, &setup.knn)?;
        let mut accuracies = Vec::with_capacity(eps.len());
        let mut latent_accuracies = Vec::with_capacity(eps.len());
        for (sup, test) in &eps {
            let (acc, _) = episode_accuracy(setup.handle.as_ref(), cfg, &setup.knn, sup, test)?;
            accuracies.push(acc);
            let lat = latent_knn(&setup.model, sup, test, setup.knn.k)?;
            latent_accuracies.push(accuracy(&lat, test.labels.as_ref().expect("split output is labeled")));
        }
        shot_results.push(ShotResult { shots, accuracies, latent_accuracies });
    }
    timings.push(("episodes".into(), t0.elapsed().as_secs_f64()));

    let t0 = Instant::now();
    let handles = report_handles(cfg, &setup)?;
    let (points, spearman_r) = bitrate_accuracy_report(&handles, cfg, &setup.eval)?;
    timings.push(("report".into(), t0.elapsed().as_secs_f64()));

    Ok(RunReport {
        config_echo: cfg.echo(),
        train_epochs: setup.curve.len(),
        final_bits_per_dim: setup.curve.last().copied(),
        bins_precision: setup.bins.as_ref().map(|b| b.precision_z()),
        shot_results,
        points,
        spearman_r,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spearman_matches_hand_computed_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[6.0, 5.0, 4.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap(), 1.0);
        let r = spearman(&[1.0, 2.0, 3.0], &[2.0, 1.0, 3.0]).unwrap();
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn spearman_is_invariant_under_monotone_maps() {
        let xs = [0.3, 1.7, 0.9, 2.4, 1.1];
        let ys = [5.0, 2.0, 4.0, 1.0, 3.0];
        let r1 = spearman(&xs, &ys).unwrap();
        let exp: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let r2 = spearman(&exp, &ys).unwrap();
        assert!((r1 - r2).abs() < 1e-12);
        assert_eq!(r1, -1.0);
    }

    #[test]
    fn ties_share_average_ranks() {
        assert_eq!(average_ranks(&[10.0, 10.0, 20.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(average_ranks(&[7.0, 7.0, 7.0, 7.0]), vec![2.5; 4]);
        assert_eq!(average_ranks(&[3.0, 1.0, 2.0]), vec![3.0, 1.0, 2.0]);
        // All ties on one side leave that side constant.
        let err = spearman(&[7.0, 7.0, 7.0], &[1.0, 2.0, 3.0]).unwrap_err();
        assert_eq!(err.exit_code(), crate::EXIT_NUMERIC);
    }

    #[test]
    fn spearman_rejects_bad_input() {
        for (xs, ys) in [
            (vec![1.0, 2.0], vec![1.0]),
            (vec![1.0], vec![1.0]),
            (vec![1.0, f64::NAN], vec![1.0, 2.0]),
            (vec![1.0, 2.0], vec![f64::INFINITY, 2.0]),
        ] {
            let err = spearman(&xs, &ys).unwrap_err();
            assert_eq!(err.exit_code(), crate::EXIT_NUMERIC);
        }
    }

    #[test]
    fn spread_is_the_sample_deviation() {
        let r = ShotResult {
            shots: 5,
            accuracies: vec![0.5, 0.7, 0.9],
            latent_accuracies: vec![0.5],
        };
        assert!((r.mean() - 0.7).abs() < 1e-12);
        assert!((r.spread() - 0.2).abs() < 1e-12);
        let single = ShotResult { shots: 1, accuracies: vec![0.4], latent_accuracies: vec![0.4] };
        assert_eq!(single.spread(), 0.0);
    }

    #[test]
    fn points_text_is_stable() {
        let points = vec![
            CompressorPoint { name: "deflate".into(), bits_per_dim: 8.125, accuracy: 0.31 },
            CompressorPoint { name: "bbans".into(), bits_per_dim: 4.5, accuracy: 0.62 },
        ];
        assert_eq!(points_text(&points), "deflate 8.125000 0.310000\nbbans 4.500000 0.620000\n");
    }
}
