//! IDX image/label file codec (the MNIST container format).
//!
//! Images use magic `0x00000803` followed by three big-endian u32 dimensions
//! (count, rows, cols) and raw u8 pixels; labels use magic `0x00000801`, one
//! u32 count, and raw u8 labels. Parse errors carry the byte offset at which
//! reading failed.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, thiserror::Error)]
pub enum IdxError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic 0x{found:08x} at offset {offset}, expected 0x{expected:08x}")]
    BadMagic { found: u32, expected: u32, offset: usize },
    #[error("file truncated: needed {needed} bytes at offset {offset}, only {available} left")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("{extra} trailing bytes at offset {offset}")]
    TrailingBytes { offset: usize, extra: usize },
    #[error("image dimensions {count}x{rows}x{cols} are degenerate")]
    DegenerateDims { count: u32, rows: u32, cols: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IdxError> {
        let available = self.bytes.len() - self.offset;
        if available < n {
            return Err(IdxError::Truncated { offset: self.offset, needed: n, available });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32_be(&mut self) -> Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn finish(self) -> Result<(), IdxError> {
        let extra = self.bytes.len() - self.offset;
        if extra != 0 {
            return Err(IdxError::TrailingBytes { offset: self.offset, extra });
        }
        Ok(())
    }
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic = cur.u32_be()?;
    if magic != IMAGE_MAGIC {
        return Err(IdxError::BadMagic { found: magic, expected: IMAGE_MAGIC, offset: 0 });
    }
    let count = cur.u32_be()?;
    let rows = cur.u32_be()?;
    let cols = cur.u32_be()?;
    if count == 0 || rows == 0 || cols == 0 {
        return Err(IdxError::DegenerateDims { count, rows, cols });
    }
    let pixels = cur.take(count as usize * rows as usize * cols as usize)?.to_vec();
    cur.finish()?;
    Ok(IdxImages { count: count as usize, rows: rows as usize, cols: cols as usize, pixels })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut cur = Cursor { bytes, offset: 0 };
    let magic = cur.u32_be()?;
    if magic != LABEL_MAGIC {
        return Err(IdxError::BadMagic { found: magic, expected: LABEL_MAGIC, offset: 0 });
    }
    let count = cur.u32_be()?;
    let labels = cur.take(count as usize)?.to_vec();
    cur.finish()?;
    Ok(labels)
}

pub fn read_images(path: &Path) -> Result<IdxImages, IdxError> {
    parse_images(&std::fs::read(path)?)
}

pub fn read_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    parse_labels(&std::fs::read(path)?)
}

pub fn write_images(path: &Path, images: &IdxImages) -> Result<(), IdxError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&IMAGE_MAGIC.to_be_bytes())?;
    w.write_all(&(images.count as u32).to_be_bytes())?;
    w.write_all(&(images.rows as u32).to_be_bytes())?;
    w.write_all(&(images.cols as u32).to_be_bytes())?;
    w.write_all(&images.pixels)?;
    w.flush()?;
    Ok(())
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<(), IdxError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&LABEL_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)?;
    w.flush()?;
    Ok(())
}
