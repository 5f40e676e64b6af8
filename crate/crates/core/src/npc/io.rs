//! Distance-matrix file format.
//!
//! NPCX layout: magic "NPCX", test and support counts as u32, three
//! length-prefixed name strings (metric, aggregation, compressor), then
//! the entries as little-endian f64, row-major. Cached singles are a
//! compute-time artifact and are not serialized.

use std::fs;
use std::path::Path;

use crate::data::Aggregation;

use super::{DistanceMatrix, Metric, NpcError};

const MAGIC: &[u8; 4] = b"NPCX";

pub fn save_matrix(path: &Path, m: &DistanceMatrix) -> Result<(), NpcError> {
    fs::write(path, matrix_to_bytes(m))?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DistanceMatrix, NpcError> {
    matrix_from_bytes(&fs::read(path)?)
}

fn matrix_to_bytes(m: &DistanceMatrix) -> Vec<u8> {
    assert_eq!(m.values.len(), m.test_count * m.support_count);
    let mut out = Vec::with_capacity(32 + 8 * m.values.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(m.test_count as u32).to_le_bytes());
    out.extend_from_slice(&(m.support_count as u32).to_le_bytes());
    for name in [m.metric.name(), m.aggregation.name(), m.compressor.as_str()] {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
    }
    for v in &m.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NpcError> {
        if self.pos + n > self.bytes.len() {
            return Err(NpcError::MalformedFile("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, NpcError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, NpcError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String, NpcError> {
        let len = self.u32()? as usize;
        if len > 256 {
            return Err(NpcError::MalformedFile(format!(
                "name string of {len} bytes"
            )));
        }
        String::from_utf8(self.take(len)?.to_vec())
            .map_err(|_| NpcError::MalformedFile("name string is not utf-8".into()))
    }
}

fn matrix_from_bytes(bytes: &[u8]) -> Result<DistanceMatrix, NpcError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(NpcError::MalformedFile("bad magic".into()));
    }
    let test_count = r.u32()? as usize;
    let support_count = r.u32()? as usize;

    let metric_name = r.string()?;
    let metric = Metric::parse(&metric_name)
        .ok_or_else(|| NpcError::MalformedFile(format!("unknown metric {metric_name:?}")))?;
    let aggregation_name = r.string()?;
    let aggregation = Aggregation::parse(&aggregation_name).ok_or_else(|| {
        NpcError::MalformedFile(format!("unknown aggregation {aggregation_name:?}"))
    })?;
    let compressor = r.string()?;

    let count = test_count
        .checked_mul(support_count)
        .ok_or_else(|| NpcError::MalformedFile("matrix dimensions overflow".into()))?;
    let mut values = Vec::with_capacity(count.min(bytes.len() / 8));
    for _ in 0..count {
        values.push(r.f64()?);
    }
    if r.pos != bytes.len() {
        return Err(NpcError::MalformedFile("trailing bytes".into()));
    }

    Ok(DistanceMatrix {
        values,
        test_count,
        support_count,
        metric,
        aggregation,
        compressor,
        test_singles: Vec::new(),
        support_singles: Vec::new(),
    })
}
