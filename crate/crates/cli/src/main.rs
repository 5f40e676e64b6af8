//! `npc`: train, compress, measure, classify.
//!
//! Every subcommand is deterministic in its seeds: identical invocations
//! write identical bytes, at any worker count. The env var `NPC_SEED`
//! overrides every seed flag and the config seed when set. Exit codes:
//! 0 success, 2 config error, 3 data error, 4 numeric failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use npc_cli::config::{parse_config, ExperimentConfig, FORMAT_HELP};
use npc_cli::pipeline::run_pipeline;
use npc_cli::CliError;
use npc_core::codec::{
    bb_decode, bb_encode, build_bins, estimate_latent_stats, load_record, load_stats, save_record,
    save_stats, Bins, Codec, StatsFile, DEFAULT_PRECISION_R, DEFAULT_PRECISION_Z,
};
use npc_core::compressors::{
    axiom_report, byte_handle, mock_ideal_handle, nelbo_handle, neural_handle, CompressorHandle,
    NeuralMode,
};
use npc_core::data::{
    load_dataset, save_dataset, split_few_shot, synth_generate, AggregateInput, Aggregation,
    Dataset, SplitSpec,
};
use npc_core::model::{
    grad_check, init_model, load_model, save_model, train, Architecture, LatentModel, TrainConfig,
};
use npc_core::npc::{
    accuracy, distance_matrix, knn_predict, load_matrix, save_matrix, KnnConfig, Metric,
};
use npc_core::rng::derive_seed;

/// Seed labels shared with the pipeline so artifacts line up.
const ARCH_LABEL: u64 = 2;
const TRAIN_LABEL: u64 = 3;
const HANDLE_LABEL: u64 = 4;
const STATS_LABEL: u64 = 5;
const GRADCHECK_LABEL: u64 = 6;
const AXIOM_LABEL: u64 = 7;

#[derive(Parser)]
#[command(
    name = "npc",
    version,
    about = "Non-parametric classification with learned lossless compressors"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a labeled synthetic grid dataset.
    Synth(SynthArgs),
    /// Split a labeled dataset into support, test, and unlabeled pools.
    Split(SplitArgs),
    /// Train a latent-variable model on a dataset.
    Train(TrainArgs),
    /// Compress one grid with a bits-back codec.
    Compress(CompressArgs),
    /// Restore the grid a compress run wrote.
    Decompress(DecompressArgs),
    /// Build the test-vs-support compression distance matrix.
    Distance(DistanceArgs),
    /// kNN-classify from a saved distance matrix.
    Classify(ClassifyArgs),
    /// Score a compressor against the normal-compressor axioms.
    Axioms(AxiomsArgs),
    /// Run the full pipeline and write the bitrate/accuracy report.
    Report(ReportArgs),
    /// Compare analytic gradients against central differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Number of classes.
    #[arg(long, default_value_t = 4)]
    classes: u16,
    /// Grids per class.
    #[arg(long, default_value_t = 60)]
    per_class: usize,
    #[arg(long, default_value_t = 8)]
    width: u16,
    #[arg(long, default_value_t = 8)]
    height: u16,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Dataset file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    /// Labeled dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Labeled support items per class.
    #[arg(long, default_value_t = 5)]
    shots: usize,
    /// Total test items, drawn evenly per class.
    #[arg(long, default_value_t = 40)]
    test_size: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Directory for support.npcd, test.npcd, unlabeled.npcd.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Training dataset file; labels are ignored.
    #[arg(long)]
    data: PathBuf,
    /// Latent widths, bottom to top.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    latent_dims: Vec<usize>,
    /// Hidden widths of every MLP.
    #[arg(long, value_delimiter = ',', default_value = "24")]
    hidden_dims: Vec<usize>,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.002)]
    learning_rate: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompressArgs {
    /// Dataset holding the grid to compress.
    #[arg(long)]
    data: PathBuf,
    /// Which grid of the dataset.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// bbans | bitswap
    #[arg(long, default_value = "bbans")]
    codec: String,
    #[arg(long, default_value_t = DEFAULT_PRECISION_Z)]
    precision_z: u8,
    #[arg(long, default_value_t = DEFAULT_PRECISION_R)]
    precision_r: u8,
    /// Latent-stats cache; estimated from --data and written when absent.
    #[arg(long)]
    stats: PathBuf,
    /// Posterior draws per item when estimating stats.
    #[arg(long, default_value_t = 25)]
    stats_draws: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Record file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecompressArgs {
    /// Record file a compress run wrote.
    #[arg(long, name = "in")]
    input: PathBuf,
    /// The model the record was coded with.
    #[arg(long)]
    model: PathBuf,
    /// The stats cache the compress run wrote.
    #[arg(long)]
    stats: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PRECISION_Z)]
    precision_z: u8,
    #[arg(long, default_value_t = DEFAULT_PRECISION_R)]
    precision_r: u8,
    /// Dataset file for the restored grid.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DistanceArgs {
    /// Test dataset file.
    #[arg(long)]
    test: PathBuf,
    /// Support dataset file.
    #[arg(long)]
    support: PathBuf,
    /// bbans | bitswap | nelbo | deflate | zlib | gzip | mock
    #[arg(long, default_value = "bbans")]
    compressor: String,
    /// Trained model file; required for neural compressors.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latent-stats cache; estimated from --support when absent.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    stats_draws: usize,
    #[arg(long, default_value_t = DEFAULT_PRECISION_Z)]
    precision_z: u8,
    #[arg(long, default_value_t = DEFAULT_PRECISION_R)]
    precision_r: u8,
    /// ncd | cdm | clm
    #[arg(long, default_value = "ncd")]
    metric: String,
    /// avg | min | max | concat | gs_avg
    #[arg(long, default_value = "avg")]
    aggregation: String,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Worker threads; 1 is fully serial.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Matrix file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Matrix file a distance run wrote.
    #[arg(long)]
    matrix: PathBuf,
    /// The labeled support dataset the matrix was built against.
    #[arg(long)]
    support: PathBuf,
    /// Neighbors; picked by channel count when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Labeled dataset to score the predictions against.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Optional file for one predicted label per line.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AxiomsArgs {
    /// Dataset to draw axiom-test pairs and triples from.
    #[arg(long)]
    data: PathBuf,
    /// bbans | bitswap | nelbo | deflate | zlib | gzip | mock
    #[arg(long, default_value = "bbans")]
    compressor: String,
    /// Trained model file; required for neural compressors.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latent-stats cache; estimated from --data when absent.
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    stats_draws: usize,
    #[arg(long, default_value_t = DEFAULT_PRECISION_Z)]
    precision_z: u8,
    #[arg(long, default_value_t = DEFAULT_PRECISION_R)]
    precision_r: u8,
    /// avg | min | max | concat | gs_avg
    #[arg(long, default_value = "avg")]
    aggregation: String,
    /// Flat slack in bits on top of one percent of the reference length.
    #[arg(long, default_value_t = 64)]
    slack_bits: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
#[command(after_long_help = format!("Config file keys (all optional):\n\n{FORMAT_HELP}"))]
struct ReportArgs {
    /// Experiment config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the config output directory.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Dataset supplying the probe grid.
    #[arg(long)]
    data: PathBuf,
    /// Which grid of the dataset.
    #[arg(long, default_value_t = 0)]
    index: usize,
    /// Trained model file; a fresh model is initialized when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Latent widths for the fresh model.
    #[arg(long, value_delimiter = ',', default_value = "4")]
    latent_dims: Vec<usize>,
    /// Hidden widths for the fresh model.
    #[arg(long, value_delimiter = ',', default_value = "24")]
    hidden_dims: Vec<usize>,
    /// Central-difference step, within [1e-6, 1e-3].
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() {
    let cli = Cli::parse();
    let seed_override = match std::env::var("NPC_SEED") {
        Ok(s) => match s.trim().parse::<u64>() {
            Ok(v) => Some(v),
            Err(_) => {
                eprintln!("error: NPC_SEED must be an unsigned integer, got {s:?}");
                std::process::exit(npc_cli::EXIT_CONFIG);
            }
        },
        Err(_) => None,
    };
    if let Err(e) = run(cli.cmd, seed_override) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cmd: Cmd, seed_override: Option<u64>) -> Result<(), CliError> {
    let seed = |s: u64| seed_override.unwrap_or(s);
    match cmd {
        Cmd::Synth(a) => cmd_synth(a, seed_override),
        Cmd::Split(a) => cmd_split(a, seed_override),
        Cmd::Train(a) => cmd_train(a, seed_override),
        Cmd::Compress(a) => {
            let s = seed(a.seed);
            cmd_compress(a, s)
        }
        Cmd::Decompress(a) => cmd_decompress(a),
        Cmd::Distance(a) => {
            let s = seed(a.seed);
            cmd_distance(a, s)
        }
        Cmd::Classify(a) => cmd_classify(a),
        Cmd::Axioms(a) => {
            let s = seed(a.seed);
            cmd_axioms(a, s)
        }
        Cmd::Report(a) => cmd_report(a, seed_override),
        Cmd::Gradcheck(a) => {
            let s = seed(a.seed);
            cmd_gradcheck(a, s)
        }
    }
}

fn cmd_synth(a: SynthArgs, seed_override: Option<u64>) -> Result<(), CliError> {
    let seed = seed_override.unwrap_or(a.seed);
    let ds = synth_generate(a.classes, a.per_class, a.width, a.height, seed)?;
    save_dataset(&a.out, &ds)?;
    println!(
        "wrote {} grids ({} classes, {}x{}) to {}",
        ds.len(),
        ds.class_count,
        a.width,
        a.height,
        a.out.display()
    );
    Ok(())
}

fn cmd_split(a: SplitArgs, seed_override: Option<u64>) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    let spec = SplitSpec {
        shots: a.shots,
        test_size: a.test_size,
        seed: seed_override.unwrap_or(a.seed),
    };
    let (rest, sup, test) = split_few_shot(&ds, &spec)?;
    fs::create_dir_all(&a.out_dir)?;
    save_dataset(&a.out_dir.join("support.npcd"), &sup)?;
    save_dataset(&a.out_dir.join("test.npcd"), &test)?;
    save_dataset(&a.out_dir.join("unlabeled.npcd"), &rest)?;
    println!(
        "support {} / test {} / unlabeled {} -> {}",
        sup.len(),
        test.len(),
        rest.len(),
        a.out_dir.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs, seed_override: Option<u64>) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    if ds.is_empty() {
        return Err(CliError::Config("training set is empty".into()));
    }
    let seed = seed_override.unwrap_or(a.seed);
    let arch = Architecture {
        input_dim: ds.grids[0].dim(),
        latent_dims: a.latent_dims,
        hidden_dims: a.hidden_dims,
        seed: derive_seed(seed, ARCH_LABEL),
    };
    let cfg = TrainConfig {
        learning_rate: a.learning_rate,
        batch_size: a.batch_size,
        epochs: a.epochs,
        seed: derive_seed(seed, TRAIN_LABEL),
        ..TrainConfig::default()
    };
    let (model, curve) = train(&init_model(&arch)?, &ds, &cfg)?;
    save_model(&a.out, &model)?;
    for (i, bits) in curve.iter().enumerate() {
        println!("epoch {:>3}  bits_per_dim = {bits:.4}", i + 1);
    }
    println!("wrote model to {}", a.out.display());
    Ok(())
}

/// Loads the stats cache if `path` exists, estimates from `data` and
/// writes the cache otherwise. Either way the bins match `model`.
fn bins_via_cache(
    model: &LatentModel,
    path: &Path,
    data: &Dataset,
    draws: usize,
    precision_z: u8,
    seed: u64,
) -> Result<Bins, CliError> {
    let stats = if path.exists() {
        let file = load_stats(path)?;
        if file.model_hash != model.fingerprint() {
            return Err(CliError::Data(npc_core::data::DataError::MalformedFile(
                format!("{} was estimated for another model", path.display()),
            )));
        }
        file.stats
    } else {
        let stats_seed = derive_seed(seed, STATS_LABEL);
        let stats = estimate_latent_stats(model, data, draws, stats_seed)?;
        save_stats(
            path,
            &StatsFile {
                model_hash: model.fingerprint(),
                n_draws: draws as u32,
                seed: stats_seed,
                stats: stats.clone(),
            },
        )?;
        stats
    };
    Ok(build_bins(model, &stats, precision_z)?)
}

fn parse_codec(name: &str) -> Result<Codec, CliError> {
    Codec::parse(name)
        .ok_or_else(|| CliError::Config(format!("unknown codec {name:?}; expected bbans or bitswap")))
}

fn cmd_compress(a: CompressArgs, seed: u64) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    let grid = ds
        .grids
        .get(a.index)
        .ok_or_else(|| CliError::Config(format!("--index {} is out of range ({} grids)", a.index, ds.len())))?
        .clone();
    let codec = parse_codec(&a.codec)?;
    let model = load_model(&a.model)?;
    let bins = bins_via_cache(&model, &a.stats, &ds, a.stats_draws, a.precision_z, seed)?;
    let record = bb_encode(
        &model,
        &bins,
        &AggregateInput::Single(grid),
        codec,
        a.precision_r,
        derive_seed(seed, HANDLE_LABEL),
    )?;
    save_record(&a.out, &record)?;
    let dim = record.input_dim();
    println!(
        "stream {} bits, initial {} bits, net {} bits ({:.4} bits/dim)",
        record.total_bits(),
        record.n_extra,
        record.net_bits(),
        record.net_bits() as f64 / dim as f64,
    );
    println!("wrote record to {}", a.out.display());
    Ok(())
}

fn cmd_decompress(a: DecompressArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let file = load_stats(&a.stats)?;
    if file.model_hash != model.fingerprint() {
        return Err(CliError::Data(npc_core::data::DataError::MalformedFile(
            format!("{} was estimated for another model", a.stats.display()),
        )));
    }
    let bins = build_bins(&model, &file.stats, a.precision_z)?;
    let record = load_record(&a.input)?;
    let restored = bb_decode(&model, &bins, &record, a.precision_r)?;
    let grids = match restored {
        AggregateInput::Single(g) => vec![g],
        AggregateInput::OrderedPair(x, y) => vec![x, y],
    };
    let count = grids.len();
    let ds = Dataset::unlabeled(grids)?;
    save_dataset(&a.out, &ds)?;
    println!("restored {} grid(s) to {}", count, a.out.display());
    Ok(())
}

/// Builds the handle a `--compressor` name asks for. Neural names need
/// the model; bbans/bitswap also need bins, cached or estimated from
/// `stats_data`.
#[allow(clippy::too_many_arguments)]
fn handle_for(
    compressor: &str,
    model_path: &Option<PathBuf>,
    stats_path: &Option<PathBuf>,
    stats_data: &Dataset,
    stats_draws: usize,
    precision_z: u8,
    precision_r: u8,
    seed: u64,
) -> Result<Box<dyn CompressorHandle>, CliError> {
    let neural_model = |what: &str| -> Result<LatentModel, CliError> {
        let path = model_path
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("--model is required for the {what} compressor")))?;
        Ok(load_model(path)?)
    };
    match compressor {
        "bbans" | "bitswap" => {
            let codec = parse_codec(compressor)?;
            let model = neural_model(compressor)?;
            let bins = match stats_path {
                Some(p) => bins_via_cache(&model, p, stats_data, stats_draws, precision_z, seed)?,
                None => {
                    let stats = estimate_latent_stats(
                        &model,
                        stats_data,
                        stats_draws,
                        derive_seed(seed, STATS_LABEL),
                    )?;
                    build_bins(&model, &stats, precision_z)?
                }
            };
            Ok(neural_handle(
                &model,
                &bins,
                codec,
                NeuralMode::Actual,
                precision_r,
                derive_seed(seed, HANDLE_LABEL),
            )?)
        }
        "nelbo" => Ok(nelbo_handle(&neural_model("nelbo")?, derive_seed(seed, HANDLE_LABEL))),
        "deflate" | "zlib" | "gzip" => Ok(byte_handle(compressor)?),
        "mock" => Ok(mock_ideal_handle()),
        other => Err(CliError::Config(format!("unknown compressor {other:?}"))),
    }
}

fn parse_metric(name: &str) -> Result<Metric, CliError> {
    Metric::parse(name).ok_or_else(|| CliError::Config(format!("unknown metric {name:?}")))
}

fn parse_aggregation(name: &str) -> Result<Aggregation, CliError> {
    Aggregation::parse(name).ok_or_else(|| CliError::Config(format!("unknown aggregation {name:?}")))
}

fn cmd_distance(a: DistanceArgs, seed: u64) -> Result<(), CliError> {
    let test = load_dataset(&a.test)?;
    let support = load_dataset(&a.support)?;
    let metric = parse_metric(&a.metric)?;
    let aggregation = parse_aggregation(&a.aggregation)?;
    let handle = handle_for(
        &a.compressor,
        &a.model,
        &a.stats,
        &support,
        a.stats_draws,
        a.precision_z,
        a.precision_r,
        seed,
    )?;
    let m = distance_matrix(handle.as_ref(), metric, aggregation, &test, &support, a.workers)?;
    save_matrix(&a.out, &m)?;
    println!(
        "{}x{} {} matrix via {} -> {}",
        m.test_count,
        m.support_count,
        metric.name(),
        handle.name(),
        a.out.display()
    );
    Ok(())
}

fn cmd_classify(a: ClassifyArgs) -> Result<(), CliError> {
    let m = load_matrix(&a.matrix)?;
    let support = load_dataset(&a.support)?;
    let labels = support
        .labels
        .as_ref()
        .ok_or_else(|| CliError::Config("--support must be a labeled dataset".into()))?;
    if support.len() != m.support_count {
        return Err(CliError::Config(format!(
            "matrix was built against {} support items, got {}",
            m.support_count,
            support.len()
        )));
    }
    let mut knn = KnnConfig::for_channels(support.grids[0].channels());
    if let Some(k) = a.k {
        if k == 0 || k > support.len() {
            return Err(CliError::Config(format!(
                "k must be in [1, {}], got {k}",
                support.len()
            )));
        }
        knn.k = k;
    }
    let pred = knn_predict(&m, labels, &knn);
    for (i, label) in pred.iter().enumerate() {
        println!("{i} {label}");
    }
    if let Some(out) = &a.out {
        let mut text = String::new();
        for label in &pred {
            text.push_str(&label.to_string());
            text.push('\n');
        }
        fs::write(out, text)?;
    }
    if let Some(truth_path) = &a.truth {
        let truth = load_dataset(truth_path)?;
        let truth_labels = truth
            .labels
            .ok_or_else(|| CliError::Config("--truth must be a labeled dataset".into()))?;
        if truth_labels.len() != pred.len() {
            return Err(CliError::Config(format!(
                "--truth has {} labels, matrix has {} rows",
                truth_labels.len(),
                pred.len()
            )));
        }
        println!("accuracy = {:.4}", accuracy(&pred, &truth_labels));
    }
    Ok(())
}

fn cmd_axioms(a: AxiomsArgs, seed: u64) -> Result<(), CliError> {
    let data = load_dataset(&a.data)?;
    let aggregation = parse_aggregation(&a.aggregation)?;
    let handle = handle_for(
        &a.compressor,
        &a.model,
        &a.stats,
        &data,
        a.stats_draws,
        a.precision_z,
        a.precision_r,
        seed,
    )?;
    let report = axiom_report(
        handle.as_ref(),
        &data,
        aggregation,
        a.slack_bits,
        derive_seed(seed, AXIOM_LABEL),
    )?;
    println!("compressor = {}", handle.name());
    println!("aggregation = {}", aggregation.name());
    println!("samples = {}", report.sample_count);
    println!("slack_bits = {}", report.slack_bits);
    println!("idempotency_ratio = {:.4}", report.idempotency_ratio);
    println!("symmetry_max_dev = {:.6}", report.symmetry_max_dev);
    println!("monotonicity_violations = {}", report.monotonicity_violations);
    println!("distributivity_violations = {}", report.distributivity_violations);
    Ok(())
}

fn cmd_report(a: ReportArgs, seed_override: Option<u64>) -> Result<(), CliError> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            parse_config(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    if let Some(workers) = a.workers {
        if workers == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        cfg.workers = workers;
    }
    if let Some(output) = a.output {
        cfg.output = output;
    }
    let report = run_pipeline(&cfg)?;
    fs::create_dir_all(&cfg.output)?;
    let text = report.render();
    fs::write(cfg.output.join("report.txt"), &text)?;
    fs::write(cfg.output.join("points.txt"), report.points_file())?;
    print!("{text}");
    for (stage, secs) in &report.timings {
        eprintln!("timing: {stage} {secs:.2}s");
    }
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs, seed: u64) -> Result<(), CliError> {
    let ds = load_dataset(&a.data)?;
    let grid = ds
        .grids
        .get(a.index)
        .ok_or_else(|| CliError::Config(format!("--index {} is out of range ({} grids)", a.index, ds.len())))?;
    let model = match &a.model {
        Some(path) => load_model(path)?,
        None => init_model(&Architecture {
            input_dim: grid.dim(),
            latent_dims: a.latent_dims,
            hidden_dims: a.hidden_dims,
            seed: derive_seed(seed, ARCH_LABEL),
        })?,
    };
    let report = grad_check(&model, grid, a.epsilon, derive_seed(seed, GRADCHECK_LABEL))?;
    println!("checked = {}", report.checked);
    println!("epsilon = {:e}", report.epsilon);
    println!("max_rel_err = {:.3e}", report.max_rel_err);
    println!("mean_rel_err = {:.3e}", report.mean_rel_err);
    if report.max_rel_err > a.tolerance {
        return Err(CliError::Numeric(format!(
            "max relative error {:.3e} exceeds tolerance {:.3e}",
            report.max_rel_err, a.tolerance
        )));
    }
    println!("within tolerance {:.3e}", a.tolerance);
    Ok(())
}
