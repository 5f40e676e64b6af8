//! Grids, datasets, few-shot splits, synthetic data, and the pixel-level
//! aggregations that pair two grids for joint compression.

mod io;
mod split;
mod synth;
mod transform;

pub use io::{load_dataset, save_dataset};
pub use split::split_few_shot;
pub use synth::synth_generate;
pub use transform::{aggregate, to_greyscale};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed dataset file: {0}")]
    MalformedFile(String),
    #[error("operation needs labels but the dataset has none")]
    UnlabeledInput,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("operation needs a 3-channel grid, got {0} channel(s)")]
    NotColor(u8),
}

/// A single image: row-major, channel-interleaved bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    width: u16,
    height: u16,
    channels: u8,
    data: Vec<u8>,
}

impl Grid {
    pub fn new(width: u16, height: u16, channels: u8, data: Vec<u8>) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::ShapeMismatch("zero-sized grid".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(DataError::ShapeMismatch(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expect = width as usize * height as usize * channels as usize;
        if data.len() != expect {
            return Err(DataError::ShapeMismatch(format!(
                "payload is {} bytes, dims want {expect}",
                data.len()
            )));
        }
        Ok(Grid { width, height, channels, data })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Total number of scalar values (width * height * channels).
    pub fn dim(&self) -> usize {
        self.data.len()
    }

    pub fn same_shape(&self, other: &Grid) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn get(&self, x: u16, y: u16, c: u8) -> u8 {
        let idx = (y as usize * self.width as usize + x as usize) * self.channels as usize
            + c as usize;
        self.data[idx]
    }
}

/// A collection of same-shaped grids, optionally labeled.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub grids: Vec<Grid>,
    pub labels: Option<Vec<u16>>,
    pub class_count: u16,
}

impl Dataset {
    pub fn unlabeled(grids: Vec<Grid>) -> Result<Self, DataError> {
        Self::check_shapes(&grids)?;
        Ok(Dataset { grids, labels: None, class_count: 0 })
    }

    pub fn labeled(grids: Vec<Grid>, labels: Vec<u16>, class_count: u16) -> Result<Self, DataError> {
        Self::check_shapes(&grids)?;
        if labels.len() != grids.len() {
            return Err(DataError::ShapeMismatch(format!(
                "{} labels for {} grids",
                labels.len(),
                grids.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(DataError::MalformedFile(format!(
                "label {bad} outside class count {class_count}"
            )));
        }
        Ok(Dataset { grids, labels: Some(labels), class_count })
    }

    fn check_shapes(grids: &[Grid]) -> Result<(), DataError> {
        if let Some(first) = grids.first() {
            if let Some(bad) = grids.iter().find(|g| !g.same_shape(first)) {
                return Err(DataError::ShapeMismatch(format!(
                    "mixed grid shapes: {}x{}x{} vs {}x{}x{}",
                    first.width, first.height, first.channels, bad.width, bad.height, bad.channels
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.grids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grids.is_empty()
    }
}

/// Few-shot split request: `shots` labeled items per class for the support
/// set, `test_size` test items total (drawn evenly per class), remainder
/// unlabeled.
#[derive(Debug, Clone, Copy)]
pub struct SplitSpec {
    pub shots: usize,
    pub test_size: usize,
    pub seed: u64,
}

/// How two grids are combined before compression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Aggregation {
    /// Elementwise floor((a + b) / 2).
    Avg,
    Min,
    Max,
    /// Keep both grids; the codec compresses them back to back.
    Concat,
    /// Greyscale both (3-channel only), then Avg.
    GsAvg,
}

impl Aggregation {
    pub fn name(self) -> &'static str {
        match self {
            Aggregation::Avg => "avg",
            Aggregation::Min => "min",
            Aggregation::Max => "max",
            Aggregation::Concat => "concat",
            Aggregation::GsAvg => "gs_avg",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "avg" => Aggregation::Avg,
            "min" => Aggregation::Min,
            "max" => Aggregation::Max,
            "concat" => Aggregation::Concat,
            "gs_avg" => Aggregation::GsAvg,
            _ => return None,
        })
    }
}

/// What a compressor actually receives: one grid, or an ordered pair that
/// gets compressed sequentially.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AggregateInput {
    Single(Grid),
    OrderedPair(Grid, Grid),
}

impl AggregateInput {
    /// Total scalar count across the contained grids.
    pub fn dim(&self) -> usize {
        match self {
            AggregateInput::Single(g) => g.dim(),
            AggregateInput::OrderedPair(a, b) => a.dim() + b.dim(),
        }
    }

    pub fn grids(&self) -> Vec<&Grid> {
        match self {
            AggregateInput::Single(g) => vec![g],
            AggregateInput::OrderedPair(a, b) => vec![a, b],
        }
    }
}
