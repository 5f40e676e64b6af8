//! Experiment orchestration for the npc toolkit: config files, the
//! end-to-end pipeline (train, compress, distances, kNN), and the
//! bitrate-versus-accuracy report.

pub mod config;
pub mod pipeline;

pub use config::{parse_config, CodecChoice, DataSource, ExperimentConfig};
pub use pipeline::{
    bitrate_accuracy_report, run_pipeline, spearman, CompressorPoint, RunReport, ShotResult,
};

use npc_core::codec::CodecError;
use npc_core::compressors::CompressorError;
use npc_core::data::DataError;
use npc_core::model::ModelError;
use npc_core::npc::NpcError;
use npc_core::rans::RansError;
use thiserror::Error;

/// Process exit codes: 0 success, 2 bad config, 3 bad data or files,
/// 4 numeric failure.
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Compressor(#[from] CompressorError),
    #[error(transparent)]
    Npc(#[from] NpcError),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) | CliError::Io(_) => EXIT_DATA,
            CliError::Model(e) => model_code(e),
            CliError::Codec(e) => codec_code(e),
            CliError::Compressor(e) => compressor_code(e),
            CliError::Npc(e) => npc_code(e),
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

fn model_code(e: &ModelError) -> i32 {
    match e {
        ModelError::InvalidArchitecture(_)
        | ModelError::InvalidParameter(_)
        | ModelError::LayerOutOfRange(_)
        | ModelError::IllConditionedEpsilon(_) => EXIT_CONFIG,
        ModelError::NonFinite { .. } => EXIT_NUMERIC,
        ModelError::ShapeMismatch(_)
        | ModelError::Io(_)
        | ModelError::MalformedFile(_)
        | ModelError::ChecksumMismatch => EXIT_DATA,
    }
}

fn rans_code(e: &RansError) -> i32 {
    match e {
        RansError::InvalidPrecision(_)
        | RansError::TooManySymbols { .. }
        | RansError::InvalidProbabilities => EXIT_CONFIG,
        RansError::CorruptStream => EXIT_DATA,
        RansError::SymbolOutOfRange(_) | RansError::LengthMismatch { .. } => EXIT_NUMERIC,
    }
}

fn codec_code(e: &CodecError) -> i32 {
    match e {
        CodecError::Rans(r) => rans_code(r),
        CodecError::Model(m) => model_code(m),
        CodecError::Data(_) => EXIT_DATA,
        CodecError::Io(_) => EXIT_DATA,
        CodecError::InvalidPrecision(_) | CodecError::InvalidArgument(_) => EXIT_CONFIG,
        CodecError::BinsMismatch
        | CodecError::HashMismatch(_)
        | CodecError::ShapeMismatch(_)
        | CodecError::MalformedFile(_)
        | CodecError::ChecksumMismatch => EXIT_DATA,
    }
}

fn compressor_code(e: &CompressorError) -> i32 {
    match e {
        CompressorError::Codec(c) => codec_code(c),
        CompressorError::Data(_) => EXIT_DATA,
        CompressorError::Model(m) => model_code(m),
        CompressorError::UnsupportedCodec(_) => EXIT_CONFIG,
        CompressorError::InsufficientSamples { .. } => EXIT_DATA,
    }
}

fn npc_code(e: &NpcError) -> i32 {
    match e {
        NpcError::ZeroLength => EXIT_NUMERIC,
        NpcError::TestItem { source, .. }
        | NpcError::SupportItem { source, .. }
        | NpcError::Pair { source, .. } => compressor_code(source),
        NpcError::Data(_) => EXIT_DATA,
        NpcError::Model(m) => model_code(m),
        NpcError::InvalidArgument(_) => EXIT_CONFIG,
        NpcError::MalformedFile(_) | NpcError::Io(_) => EXIT_DATA,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_family() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Data(DataError::MalformedFile("x".into())).exit_code(),
            3
        );
        assert_eq!(
            CliError::Model(ModelError::NonFinite {
                context: "x".into()
            })
            .exit_code(),
            4
        );
        assert_eq!(CliError::Numeric("x".into()).exit_code(), 4);
        assert_eq!(
            CliError::Codec(CodecError::Rans(RansError::CorruptStream)).exit_code(),
            3
        );
        assert_eq!(
            CliError::Npc(NpcError::Pair {
                row: 0,
                col: 0,
                source: CompressorError::UnsupportedCodec("x".into()),
            })
            .exit_code(),
            2
        );
    }
}
