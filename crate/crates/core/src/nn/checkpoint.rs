//! Checkpoint codec.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            b"NCPK1"
//! training_seed    u64
//! classes          u32
//! input_shape      u32 count, then count u32 extents
//! boundaries       u32 count, then count u32 layer indices
//! head_index       u32
//! layer_count      u32
//! layers           tagged records, see below
//! ```
//!
//! Layer tags: 0 linear (in, out, weights, bias), 1 conv (oc, ic, kh, kw,
//! stride, pad, weights, bias), 2 batch norm (features, eps, momentum, gamma,
//! beta, running mean, running var), 3 relu, 4 flatten. Weight buffers are
//! raw f64 in row-major order; running statistics are part of the record so a
//! reloaded net evaluates identically.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Layer, Network};
use crate::tensor::Tensor;

const MAGIC: &[u8; 5] = b"NCPK1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: Vec<u8>, expected: Vec<u8> },
    #[error("unknown layer tag {0}")]
    BadLayerTag(u8),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

struct W<T: Write>(T);

impl<T: Write> W<T> {
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn tensor(&mut self, t: &Tensor) -> io::Result<()> {
        for &v in t.data() {
            self.f64(v)?;
        }
        Ok(())
    }
}

struct R<T: Read>(T);

impl<T: Read> R<T> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], CheckpointError> {
        let mut buf = [0u8; N];
        self.0.read_exact(&mut buf)?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize, CheckpointError> {
        Ok(self.u32()? as usize)
    }
    fn tensor(&mut self, shape: &[usize]) -> Result<Tensor, CheckpointError> {
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(self.f64()?);
        }
        Tensor::from_vec(shape, data)
            .map_err(|e| CheckpointError::Malformed(e.to_string()))
    }
}

/// Writes the network and its training seed to `path`.
pub fn save_checkpoint(net: &Network, training_seed: u64, path: &Path) -> Result<(), CheckpointError> {
    let mut w = W(BufWriter::new(File::create(path)?));
    w.0.write_all(MAGIC)?;
    w.u64(training_seed)?;
    w.u32(net.classes as u32)?;
    w.u32(net.input_shape.len() as u32)?;
    for &d in &net.input_shape {
        w.u32(d as u32)?;
    }
    w.u32(net.block_boundaries.len() as u32)?;
    for &b in &net.block_boundaries {
        w.u32(b as u32)?;
    }
    w.u32(net.head_index as u32)?;
    w.u32(net.layers.len() as u32)?;
    for layer in &net.layers {
        match layer {
            Layer::Linear { w: wt, b } => {
                w.0.write_all(&[0])?;
                w.u32(wt.shape()[0] as u32)?;
                w.u32(wt.shape()[1] as u32)?;
                w.tensor(wt)?;
                w.tensor(b)?;
            }
            Layer::Conv { w: wt, b, stride, pad } => {
                w.0.write_all(&[1])?;
                for &d in wt.shape() {
                    w.u32(d as u32)?;
                }
                w.u32(*stride as u32)?;
                w.u32(*pad as u32)?;
                w.tensor(wt)?;
                w.tensor(b)?;
            }
            Layer::BatchNorm { gamma, beta, running_mean, running_var, eps, momentum } => {
                w.0.write_all(&[2])?;
                w.u32(gamma.len() as u32)?;
                w.f64(*eps)?;
                w.f64(*momentum)?;
                w.tensor(gamma)?;
                w.tensor(beta)?;
                w.tensor(running_mean)?;
                w.tensor(running_var)?;
            }
            Layer::Relu => w.0.write_all(&[3])?,
            Layer::Flatten => w.0.write_all(&[4])?,
        }
    }
    w.0.flush()?;
    Ok(())
}

/// Reads a checkpoint back; returns the network and the training seed it was
/// saved with.
pub fn load_checkpoint(path: &Path) -> Result<(Network, u64), CheckpointError> {
    let mut r = R(BufReader::new(File::open(path)?));
    let magic: [u8; 5] = r.bytes()?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic {
            found: magic.to_vec(),
            expected: MAGIC.to_vec(),
        });
    }
    let seed = r.u64()?;
    let classes = r.usize()?;
    let shape_len = r.usize()?;
    let mut input_shape = Vec::with_capacity(shape_len);
    for _ in 0..shape_len {
        input_shape.push(r.usize()?);
    }
    let boundary_len = r.usize()?;
    let mut block_boundaries = Vec::with_capacity(boundary_len);
    for _ in 0..boundary_len {
        block_boundaries.push(r.usize()?);
    }
    let head_index = r.usize()?;
    let layer_count = r.usize()?;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let tag = r.u8()?;
        let layer = match tag {
            0 => {
                let fan_in = r.usize()?;
                let fan_out = r.usize()?;
                let w = r.tensor(&[fan_in, fan_out])?;
                let b = r.tensor(&[fan_out])?;
                Layer::Linear { w, b }
            }
            1 => {
                let oc = r.usize()?;
                let ic = r.usize()?;
                let kh = r.usize()?;
                let kw = r.usize()?;
                let stride = r.usize()?;
                let pad = r.usize()?;
                let w = r.tensor(&[oc, ic, kh, kw])?;
                let b = r.tensor(&[oc])?;
                Layer::Conv { w, b, stride, pad }
            }
            2 => {
                let f = r.usize()?;
                let eps = r.f64()?;
                let momentum = r.f64()?;
                let gamma = r.tensor(&[f])?;
                let beta = r.tensor(&[f])?;
                let running_mean = r.tensor(&[f])?;
                let running_var = r.tensor(&[f])?;
                Layer::BatchNorm { gamma, beta, running_mean, running_var, eps, momentum }
            }
            3 => Layer::Relu,
            4 => Layer::Flatten,
            t => return Err(CheckpointError::BadLayerTag(t)),
        };
        layers.push(layer);
    }
    if head_index >= layers.len() {
        return Err(CheckpointError::Malformed(format!(
            "head index {head_index} out of range for {} layers",
            layers.len()
        )));
    }
    if block_boundaries.iter().any(|&b| b >= layers.len()) {
        return Err(CheckpointError::Malformed("block boundary out of range".into()));
    }
    if classes == 0 {
        return Err(CheckpointError::Malformed("zero classes".into()));
    }
    Ok((
        Network { layers, block_boundaries, head_index, input_shape, classes },
        seed,
    ))
}
