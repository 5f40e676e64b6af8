//! Compressed-record serialization.
//!
//! Layout: magic "NPCZ", format version, codec tag, model and bin
//! fingerprints, reservoir seed, borrowed-bit count, grid shape, pair
//! flag, then the serialized bitstream. Little-endian throughout.

use super::{Codec, CodecError, CompressionRecord};
use crate::rans::Bitstream;
use std::fs;
use std::path::Path;

const MAGIC: &[u8; 4] = b"NPCZ";
const VERSION: u8 = 1;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Reader { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.bytes.len() - self.pos < n {
            return Err(CodecError::MalformedFile("unexpected end of file".into()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

pub fn save_record(path: &Path, record: &CompressionRecord) -> Result<(), CodecError> {
    fs::write(path, record_to_bytes(record))?;
    Ok(())
}

pub fn load_record(path: &Path) -> Result<CompressionRecord, CodecError> {
    record_from_bytes(&fs::read(path)?)
}

pub(crate) fn record_to_bytes(record: &CompressionRecord) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(record.codec.tag());
    out.extend_from_slice(&record.model_hash);
    out.extend_from_slice(&record.bins_hash);
    out.extend_from_slice(&record.reservoir_seed.to_le_bytes());
    out.extend_from_slice(&record.n_extra.to_le_bytes());
    out.extend_from_slice(&record.width.to_le_bytes());
    out.extend_from_slice(&record.height.to_le_bytes());
    out.push(record.channels);
    out.push(record.pair as u8);
    out.extend_from_slice(&record.stream.to_bytes());
    out
}

pub(crate) fn record_from_bytes(bytes: &[u8]) -> Result<CompressionRecord, CodecError> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err(CodecError::MalformedFile("bad record magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CodecError::MalformedFile(format!("record version {version}")));
    }
    let tag = r.u8()?;
    let codec = Codec::from_tag(tag)
        .ok_or_else(|| CodecError::MalformedFile(format!("unknown codec tag {tag}")))?;
    let mut model_hash = [0u8; 8];
    model_hash.copy_from_slice(r.take(8)?);
    let mut bins_hash = [0u8; 8];
    bins_hash.copy_from_slice(r.take(8)?);
    let reservoir_seed = r.u64()?;
    let n_extra = r.u32()?;
    let width = r.u16()?;
    let height = r.u16()?;
    let channels = r.u8()?;
    let pair = match r.u8()? {
        0 => false,
        1 => true,
        v => return Err(CodecError::MalformedFile(format!("pair flag {v}"))),
    };
    if width == 0 || height == 0 || channels == 0 {
        return Err(CodecError::MalformedFile("empty grid shape".into()));
    }
    let (stream, used) = Bitstream::from_bytes(&bytes[bytes.len() - r.remaining()..])?;
    if used != r.remaining() {
        return Err(CodecError::MalformedFile("trailing bytes after stream".into()));
    }
    Ok(CompressionRecord {
        stream,
        n_extra,
        model_hash,
        bins_hash,
        codec,
        reservoir_seed,
        width,
        height,
        channels,
        pair,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn record() -> CompressionRecord {
        CompressionRecord {
            stream: Bitstream { words: vec![7, 2049, 65535], final_state: 0xDEAD_BEEF },
            n_extra: 96,
            model_hash: [1, 2, 3, 4, 5, 6, 7, 8],
            bins_hash: [9, 10, 11, 12, 13, 14, 15, 16],
            codec: Codec::BitSwap,
            reservoir_seed: 42,
            width: 8,
            height: 8,
            channels: 1,
            pair: true,
        }
    }

    #[test]
    fn roundtrips_through_bytes_and_files() {
        let rec = record();
        let bytes = record_to_bytes(&rec);
        let back = record_from_bytes(&bytes).unwrap();
        assert_eq!(back.stream, rec.stream);
        assert_eq!(back.n_extra, rec.n_extra);
        assert_eq!(back.model_hash, rec.model_hash);
        assert_eq!(back.bins_hash, rec.bins_hash);
        assert_eq!(back.codec, rec.codec);
        assert_eq!(back.reservoir_seed, rec.reservoir_seed);
        assert_eq!((back.width, back.height, back.channels, back.pair), (8, 8, 1, true));

        let dir = tempdir().unwrap();
        let path = dir.path().join("grid.npcz");
        save_record(&path, &rec).unwrap();
        assert_eq!(load_record(&path).unwrap().stream, rec.stream);
    }

    #[test]
    fn header_bytes_are_laid_out_as_documented() {
        let rec = record();
        let bytes = record_to_bytes(&rec);
        assert_eq!(&bytes[0..4], b"NPCZ");
        assert_eq!(bytes[4], 1);
        assert_eq!(bytes[5], 1); // bitswap tag
        assert_eq!(&bytes[6..14], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert_eq!(&bytes[14..22], &[9, 10, 11, 12, 13, 14, 15, 16]);
        assert_eq!(u64::from_le_bytes(bytes[22..30].try_into().unwrap()), 42);
        assert_eq!(u32::from_le_bytes(bytes[30..34].try_into().unwrap()), 96);
        assert_eq!(u16::from_le_bytes(bytes[34..36].try_into().unwrap()), 8);
        assert_eq!(u16::from_le_bytes(bytes[36..38].try_into().unwrap()), 8);
        assert_eq!(bytes[38], 1);
        assert_eq!(bytes[39], 1);
        // stream: final_state, word count, words
        assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 0xDEAD_BEEF);
        assert_eq!(u32::from_le_bytes(bytes[44..48].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 48 + 6);
    }

    #[test]
    fn malformed_records_are_rejected() {
        let rec = record();
        let good = record_to_bytes(&rec);

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(record_from_bytes(&bad_magic), Err(CodecError::MalformedFile(_))));

        let mut bad_codec = good.clone();
        bad_codec[5] = 9;
        assert!(matches!(record_from_bytes(&bad_codec), Err(CodecError::MalformedFile(_))));

        assert!(record_from_bytes(&good[..20]).is_err());

        let mut trailing = good.clone();
        trailing.push(0);
        assert!(matches!(record_from_bytes(&trailing), Err(CodecError::MalformedFile(_))));

        let mut zero_shape = good;
        zero_shape[34] = 0;
        zero_shape[35] = 0;
        assert!(matches!(record_from_bytes(&zero_shape), Err(CodecError::MalformedFile(_))));
    }
}
