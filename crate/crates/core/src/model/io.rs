//! Model file format, little-endian throughout.
//!
//! magic "NPCM", version u8 = 1, input_dim u32, latent layer count u32 and
//! dims, hidden layer count u32 and dims, seed u64, parameter count u32,
//! parameters as f64 in declaration order, trailing CRC32 over everything
//! before it.

use super::{init_model, Architecture, LatentModel, ModelError};
use crate::hash::{self, Fingerprint};
use std::io::Read;
use std::path::Path;

const MAGIC: &[u8; 4] = b"NPCM";
const VERSION: u8 = 1;

pub fn save_model(path: &Path, model: &LatentModel) -> Result<(), ModelError> {
    std::fs::write(path, write_model(model))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<LatentModel, ModelError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_model(&bytes)
}

/// First 8 bytes of the digest over the serialized model, CRC trailer
/// included; embedded in bitstream headers to pin compressor identity.
pub(crate) fn fingerprint_of(model: &LatentModel) -> Fingerprint {
    hash::fingerprint(&write_model(model))
}

pub(crate) fn write_model(model: &LatentModel) -> Vec<u8> {
    let arch = model.arch();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(arch.input_dim as u32).to_le_bytes());
    out.extend_from_slice(&(arch.latent_dims.len() as u32).to_le_bytes());
    for &m in &arch.latent_dims {
        out.extend_from_slice(&(m as u32).to_le_bytes());
    }
    out.extend_from_slice(&(arch.hidden_dims.len() as u32).to_le_bytes());
    for &h in &arch.hidden_dims {
        out.extend_from_slice(&(h as u32).to_le_bytes());
    }
    out.extend_from_slice(&arch.seed.to_le_bytes());
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = hash::crc32(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub(crate) fn read_model(bytes: &[u8]) -> Result<LatentModel, ModelError> {
    let mut r = Cursor { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(ModelError::MalformedFile("bad magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(ModelError::MalformedFile(format!("unsupported version {version}")));
    }
    let input_dim = r.u32()? as usize;
    let layer_count = r.u32()? as usize;
    let latent_dims: Vec<usize> = (0..layer_count)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<_, _>>()?;
    let hidden_count = r.u32()? as usize;
    let hidden_dims: Vec<usize> = (0..hidden_count)
        .map(|_| r.u32().map(|v| v as usize))
        .collect::<Result<_, _>>()?;
    let seed = r.u64()?;
    let declared = r.u32()? as usize;
    let arch = Architecture { input_dim, latent_dims, hidden_dims, seed };
    let mut model =
        init_model(&arch).map_err(|e| ModelError::MalformedFile(format!("bad architecture: {e}")))?;
    if declared != model.param_count() {
        return Err(ModelError::MalformedFile(format!(
            "file declares {declared} parameters, architecture wants {}",
            model.param_count()
        )));
    }
    let mut params = Vec::with_capacity(declared);
    for _ in 0..declared {
        params.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
    }
    let body_end = r.pos;
    let stored_crc = r.u32()?;
    if r.pos != bytes.len() {
        return Err(ModelError::MalformedFile(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if hash::crc32(&bytes[..body_end]) != stored_crc {
        return Err(ModelError::ChecksumMismatch);
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(ModelError::MalformedFile("non-finite parameter".into()));
    }
    model.set_params(&params)?;
    Ok(model)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.pos + n > self.bytes.len() {
            return Err(ModelError::MalformedFile("truncated file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
