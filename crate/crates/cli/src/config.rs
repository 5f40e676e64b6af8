//! Experiment configuration: a flat key-value text format with sections.
//!
//! See [`FORMAT_HELP`] for the full key list with defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use npc_core::codec::{Codec, DEFAULT_PRECISION_R, DEFAULT_PRECISION_Z, MAX_PRECISION_Z, MIN_PRECISION_Z};
use npc_core::data::Aggregation;
use npc_core::model::TrainConfig;
use npc_core::npc::Metric;

use crate::CliError;

/// The config file format, with every key at its default. Every key is
/// optional; lines starting with `#` are comments; unknown keys are
/// rejected.
pub const FORMAT_HELP: &str = "\
[data]
source = synth          # or a path to an .npcd file
classes = 4
per_class = 60
width = 8
height = 8

[split]
shots = 5               # comma-separated list of shot counts
test_size = 40
seed = 7
trials = 5

[model]
latent_dims = 4
hidden_dims = 24
epochs = 30
batch_size = 16
learning_rate = 0.002

[codec]
codec = bbans           # bbans | bitswap | nelbo
precision_z = 10
precision_r = 14
stats_draws = 25

[classify]
metric = ncd            # ncd | cdm | clm
aggregation = avg       # avg | min | max | concat | gs_avg
k = 2                   # omit to pick by channel count

[run]
workers = 1
output = npc-out";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    File(PathBuf),
    Synth {
        classes: u16,
        per_class: usize,
        width: u16,
        height: u16,
    },
}

/// Which compressor the pipeline's distance step uses. The two real codecs
/// discretize latents and run the coder; `Nelbo` reports the bound alone
/// and never builds bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecChoice {
    BbAns,
    BitSwap,
    Nelbo,
}

impl CodecChoice {
    pub fn name(self) -> &'static str {
        match self {
            CodecChoice::BbAns => "bbans",
            CodecChoice::BitSwap => "bitswap",
            CodecChoice::Nelbo => "nelbo",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "bbans" => CodecChoice::BbAns,
            "bitswap" => CodecChoice::BitSwap,
            "nelbo" => CodecChoice::Nelbo,
            _ => return None,
        })
    }

    /// The coding codec, when there is one.
    pub fn coding(self) -> Option<Codec> {
        match self {
            CodecChoice::BbAns => Some(Codec::BbAns),
            CodecChoice::BitSwap => Some(Codec::BitSwap),
            CodecChoice::Nelbo => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub shots: Vec<usize>,
    pub test_size: usize,
    pub seed: u64,
    pub trials: usize,
    pub latent_dims: Vec<usize>,
    pub hidden_dims: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub codec: CodecChoice,
    pub precision_z: u8,
    pub precision_r: u8,
    pub stats_draws: usize,
    pub metric: Metric,
    pub aggregation: Aggregation,
    pub k: Option<usize>,
    pub workers: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data: DataSource::Synth {
                classes: 4,
                per_class: 60,
                width: 8,
                height: 8,
            },
            shots: vec![5],
            test_size: 40,
            seed: 7,
            trials: 5,
            latent_dims: vec![4],
            hidden_dims: vec![24],
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.002,
            codec: CodecChoice::BbAns,
            precision_z: DEFAULT_PRECISION_Z,
            precision_r: DEFAULT_PRECISION_R,
            stats_draws: 25,
            metric: Metric::Ncd,
            aggregation: Aggregation::Avg,
            k: None,
            workers: 1,
            output: PathBuf::from("npc-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed,
            ..TrainConfig::default()
        }
    }

    /// Canonical rendering: parseable back into the same config, used as
    /// the report's config echo.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        s.push_str("[data]\n");
        match &self.data {
            DataSource::File(p) => {
                let _ = writeln!(s, "source = {}", p.display());
            }
            DataSource::Synth {
                classes,
                per_class,
                width,
                height,
            } => {
                s.push_str("source = synth\n");
                let _ = writeln!(s, "classes = {classes}");
                let _ = writeln!(s, "per_class = {per_class}");
                let _ = writeln!(s, "width = {width}");
                let _ = writeln!(s, "height = {height}");
            }
        }
        s.push_str("\n[split]\n");
        let shots: Vec<String> = self.shots.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "shots = {}", shots.join(","));
        let _ = writeln!(s, "test_size = {}", self.test_size);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "trials = {}", self.trials);
        s.push_str("\n[model]\n");
        let dims: Vec<String> = self.latent_dims.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "latent_dims = {}", dims.join(","));
        let hidden: Vec<String> = self.hidden_dims.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "hidden_dims = {}", hidden.join(","));
        let _ = writeln!(s, "epochs = {}", self.epochs);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "learning_rate = {}", self.learning_rate);
        s.push_str("\n[codec]\n");
        let _ = writeln!(s, "codec = {}", self.codec.name());
        let _ = writeln!(s, "precision_z = {}", self.precision_z);
        let _ = writeln!(s, "precision_r = {}", self.precision_r);
        let _ = writeln!(s, "stats_draws = {}", self.stats_draws);
        s.push_str("\n[classify]\n");
        let _ = writeln!(s, "metric = {}", self.metric.name());
        let _ = writeln!(s, "aggregation = {}", self.aggregation.name());
        if let Some(k) = self.k {
            let _ = writeln!(s, "k = {k}");
        }
        s.push_str("\n[run]\n");
        let _ = writeln!(s, "workers = {}", self.workers);
        let _ = writeln!(s, "output = {}", self.output.display());
        s
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Raw `section.key = value` pairs, rejecting duplicates and stray lines.
fn raw_pairs(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| bad(format!("line {}: unclosed section header", lineno + 1)))?;
            section = name.trim().to_string();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("line {}: expected key = value", lineno + 1)))?;
        if section.is_empty() {
            return Err(bad(format!("line {}: key outside any section", lineno + 1)));
        }
        let full = format!("{section}.{}", key.trim());
        if out.insert(full.clone(), value.trim().to_string()).is_some() {
            return Err(bad(format!("duplicate key {full}")));
        }
    }
    Ok(out)
}

struct Taker {
    pairs: BTreeMap<String, String>,
}

impl Taker {
    fn take(&mut self, key: &str) -> Option<String> {
        self.pairs.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| bad(format!("{key}: cannot parse {v:?}"))),
        }
    }

    fn parse_or<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn parse_list(&mut self, key: &str, default: &[usize]) -> Result<Vec<usize>, CliError> {
        match self.take(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|part| {
                    part.trim()
                        .parse::<usize>()
                        .map_err(|_| bad(format!("{key}: cannot parse {part:?}")))
                })
                .collect(),
        }
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let mut t = Taker {
        pairs: raw_pairs(text)?,
    };
    let defaults = ExperimentConfig::default();

    let data = match t.take("data.source").as_deref() {
        None | Some("synth") => DataSource::Synth {
            classes: t.parse_or("data.classes", 4u16)?,
            per_class: t.parse_or("data.per_class", 60usize)?,
            width: t.parse_or("data.width", 8u16)?,
            height: t.parse_or("data.height", 8u16)?,
        },
        Some(path) => DataSource::File(PathBuf::from(path)),
    };

    let cfg = ExperimentConfig {
        data,
        shots: t.parse_list("split.shots", &defaults.shots)?,
        test_size: t.parse_or("split.test_size", defaults.test_size)?,
        seed: t.parse_or("split.seed", defaults.seed)?,
        trials: t.parse_or("split.trials", defaults.trials)?,
        latent_dims: t.parse_list("model.latent_dims", &defaults.latent_dims)?,
        hidden_dims: t.parse_list("model.hidden_dims", &defaults.hidden_dims)?,
        epochs: t.parse_or("model.epochs", defaults.epochs)?,
        batch_size: t.parse_or("model.batch_size", defaults.batch_size)?,
        learning_rate: t.parse_or("model.learning_rate", defaults.learning_rate)?,
        codec: match t.take("codec.codec") {
            None => defaults.codec,
            Some(v) => CodecChoice::parse(&v)
                .ok_or_else(|| bad(format!("codec.codec: unknown codec {v:?}")))?,
        },
        precision_z: t.parse_or("codec.precision_z", defaults.precision_z)?,
        precision_r: t.parse_or("codec.precision_r", defaults.precision_r)?,
        stats_draws: t.parse_or("codec.stats_draws", defaults.stats_draws)?,
        metric: match t.take("classify.metric") {
            None => defaults.metric,
            Some(v) => Metric::parse(&v)
                .ok_or_else(|| bad(format!("classify.metric: unknown metric {v:?}")))?,
        },
        aggregation: match t.take("classify.aggregation") {
            None => defaults.aggregation,
            Some(v) => Aggregation::parse(&v)
                .ok_or_else(|| bad(format!("classify.aggregation: unknown aggregation {v:?}")))?,
        },
        k: t.parse("classify.k")?,
        workers: t.parse_or("run.workers", defaults.workers)?,
        output: t
            .take("run.output")
            .map(PathBuf::from)
            .unwrap_or(defaults.output),
    };

    if let Some(stray) = t.pairs.keys().next() {
        return Err(bad(format!("unknown key {stray}")));
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    if cfg.shots.is_empty() || cfg.shots.contains(&0) {
        return Err(bad("split.shots must list positive shot counts"));
    }
    if cfg.test_size == 0 {
        return Err(bad("split.test_size must be positive"));
    }
    if cfg.trials == 0 {
        return Err(bad("split.trials must be positive"));
    }
    if cfg.latent_dims.is_empty() || cfg.latent_dims.contains(&0) {
        return Err(bad("model.latent_dims must list positive widths"));
    }
    if cfg.hidden_dims.contains(&0) {
        return Err(bad("model.hidden_dims must list positive widths"));
    }
    if !(MIN_PRECISION_Z..=MAX_PRECISION_Z).contains(&cfg.precision_z) {
        return Err(bad(format!(
            "codec.precision_z must lie in [{MIN_PRECISION_Z}, {MAX_PRECISION_Z}]"
        )));
    }
    if cfg.precision_r == 0 || cfg.precision_r > 16 {
        return Err(bad("codec.precision_r must lie in [1, 16]"));
    }
    if cfg.stats_draws == 0 {
        return Err(bad("codec.stats_draws must be positive"));
    }
    if cfg.k == Some(0) {
        return Err(bad("classify.k must be positive when given"));
    }
    if cfg.workers == 0 {
        return Err(bad("run.workers must be at least 1"));
    }
    if let DataSource::Synth {
        classes, per_class, ..
    } = cfg.data
    {
        if classes == 0 || per_class == 0 {
            return Err(bad("data.classes and data.per_class must be positive"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_the_defaults() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn echo_roundtrips() {
        let text = "
[data]
source = synth
classes = 3
per_class = 20

[split]
shots = 1,5,10
test_size = 30
seed = 99
trials = 2

[model]
latent_dims = 6,3
epochs = 5

[codec]
codec = bitswap
precision_z = 8

[classify]
metric = cdm
aggregation = avg
k = 3

[run]
workers = 4
output = /tmp/run
";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.shots, vec![1, 5, 10]);
        assert_eq!(cfg.latent_dims, vec![6, 3]);
        assert_eq!(cfg.codec, CodecChoice::BitSwap);
        assert_eq!(cfg.metric, Metric::Cdm);
        assert_eq!(cfg.k, Some(3));

        let back = parse_config(&cfg.echo()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn file_source_is_a_path() {
        let cfg = parse_config("[data]\nsource = sets/train.npcd\n").unwrap();
        assert_eq!(
            cfg.data,
            DataSource::File(PathBuf::from("sets/train.npcd"))
        );
    }

    #[test]
    fn bad_inputs_are_config_errors() {
        let cases = [
            "[data]\nsource",                      // no equals
            "shots = 5",                           // key before any section
            "[split]\nshots = 5\nshots = 6",       // duplicate
            "[split]\nshots = a,b",                // unparseable list
            "[split]\nshots = 0",                  // zero shot count
            "[codec]\ncodec = lzw",                // unknown codec
            "[codec]\nprecision_z = 3",            // precision below range
            "[classify]\nmetric = manhattan",      // unknown metric
            "[run]\nworkers = 0",                  // zero workers
            "[run]\nworker = 1",                   // unknown key
            "[data\nsource = synth",               // unclosed section
        ];
        for text in cases {
            let err = parse_config(text).unwrap_err();
            assert!(
                matches!(err, CliError::Config(_)),
                "{text:?} gave {err:?}"
            );
            assert_eq!(err.exit_code(), 2, "{text:?}");
        }
    }

    #[test]
    fn codec_names_roundtrip() {
        for codec in [CodecChoice::BbAns, CodecChoice::BitSwap, CodecChoice::Nelbo] {
            assert_eq!(CodecChoice::parse(codec.name()), Some(codec));
        }
        assert_eq!(CodecChoice::parse("lzma"), None);
        assert!(CodecChoice::Nelbo.coding().is_none());
        assert_eq!(CodecChoice::BbAns.coding(), Some(Codec::BbAns));
    }
}
