//! Binary checkpoint format, little-endian, no padding:
//!
//! ```text
//! magic  "PCNET1\0\0"                       8 bytes
//! u32 L, u32 input_dim, u32 width, u32 num_classes
//! L times:
//!   u8 kind (0 = input, 1 = residual, 2 = output)
//!   4 tensors (w1, b1, w2, b2), each: u32 rank, u32 extents[rank], f64 data[]
//! ```

use std::fs;
use std::path::Path;

use super::Network;
use crate::error::{Error, Result};
use crate::nn::{BlockKind, BlockParams};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"PCNET1\0\0";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(net: &Network) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + net.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, net.depth());
    put_u32(&mut out, net.input_dim());
    put_u32(&mut out, net.width());
    put_u32(&mut out, net.num_classes());
    for block in net.blocks() {
        out.push(block.kind().code());
        for t in block.tensors() {
            put_u32(&mut out, t.shape().len());
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| {
                Error::CorruptCheckpoint(format!("truncated at byte {} (need {n} more)", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()?;
        if !(1..=2).contains(&rank) {
            return Err(Error::CorruptCheckpoint(format!("tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::CorruptCheckpoint("tensor extent overflow".into()))?;
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or_else(|| Error::CorruptCheckpoint("tensor size overflow".into()))?,
        )?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, data).map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Network> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::CorruptCheckpoint("bad magic".into()));
    }
    let depth = r.u32()?;
    let input_dim = r.u32()?;
    let width = r.u32()?;
    let num_classes = r.u32()?;
    if depth < 3 {
        return Err(Error::CorruptCheckpoint(format!("depth {depth}")));
    }
    let mut blocks = Vec::with_capacity(depth.min(1024));
    for l in 1..=depth {
        let code = r.u8()?;
        let kind = BlockKind::from_code(code)
            .ok_or_else(|| Error::CorruptCheckpoint(format!("block {l}: kind byte {code}")))?;
        let (w1, b1, w2, b2) = (r.tensor()?, r.tensor()?, r.tensor()?, r.tensor()?);
        let block = BlockParams::new(kind, w1, b1, w2, b2)
            .map_err(|e| Error::CorruptCheckpoint(format!("block {l}: {e}")))?;
        blocks.push(block);
    }
    if r.pos != bytes.len() {
        return Err(Error::CorruptCheckpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let net = Network::from_blocks(blocks).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
    if (net.input_dim(), net.width(), net.num_classes()) != (input_dim, width, num_classes) {
        return Err(Error::CorruptCheckpoint(
            "header dimensions disagree with block shapes".into(),
        ));
    }
    Ok(net)
}

pub fn save_checkpoint(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(net))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Network> {
    decode_checkpoint(&fs::read(path)?)
}
