//! Dataset file format, little-endian throughout.
//!
//! magic "NPCD", version u8 = 1, width u16, height u16, channels u8,
//! count u32, has_labels u8, class_count u16, then count*w*h*c payload
//! bytes, then count u16 labels when has_labels = 1.

use super::{DataError, Dataset, Grid};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"NPCD";
const VERSION: u8 = 1;

pub fn save_dataset(path: &Path, ds: &Dataset) -> Result<(), DataError> {
    let mut out = Vec::new();
    write_dataset(&mut out, ds)?;
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, DataError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    read_dataset(&bytes)
}

pub(crate) fn write_dataset<W: Write>(out: &mut W, ds: &Dataset) -> Result<(), DataError> {
    let (w, h, c) = match ds.grids.first() {
        Some(g) => (g.width(), g.height(), g.channels()),
        None => {
            return Err(DataError::InsufficientData("cannot serialize an empty dataset".into()))
        }
    };
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    out.write_all(&w.to_le_bytes())?;
    out.write_all(&h.to_le_bytes())?;
    out.write_all(&[c])?;
    out.write_all(&(ds.grids.len() as u32).to_le_bytes())?;
    out.write_all(&[ds.labels.is_some() as u8])?;
    out.write_all(&ds.class_count.to_le_bytes())?;
    for g in &ds.grids {
        out.write_all(g.data())?;
    }
    if let Some(labels) = &ds.labels {
        for &l in labels {
            out.write_all(&l.to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_dataset(bytes: &[u8]) -> Result<Dataset, DataError> {
    let mut r = Cursor { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(DataError::MalformedFile("bad magic".into()));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(DataError::MalformedFile(format!("unsupported version {version}")));
    }
    let width = r.u16()?;
    let height = r.u16()?;
    let channels = r.u8()?;
    let count = r.u32()? as usize;
    let has_labels = r.u8()?;
    if has_labels > 1 {
        return Err(DataError::MalformedFile(format!("has_labels flag is {has_labels}")));
    }
    let class_count = r.u16()?;
    let item_len = width as usize * height as usize * channels as usize;
    let mut grids = Vec::with_capacity(count);
    for _ in 0..count {
        let data = r.take(item_len)?.to_vec();
        grids.push(Grid::new(width, height, channels, data).map_err(|e| {
            DataError::MalformedFile(format!("bad grid in payload: {e}"))
        })?);
    }
    let labels = if has_labels == 1 {
        let mut labels = Vec::with_capacity(count);
        for _ in 0..count {
            labels.push(r.u16()?);
        }
        Some(labels)
    } else {
        None
    };
    if r.pos != bytes.len() {
        return Err(DataError::MalformedFile(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    match labels {
        Some(labels) => Dataset::labeled(grids, labels, class_count)
            .map_err(|e| DataError::MalformedFile(e.to_string())),
        None => Dataset::unlabeled(grids).map_err(|e| DataError::MalformedFile(e.to_string())),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.pos + n > self.bytes.len() {
            return Err(DataError::MalformedFile("truncated file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, DataError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
