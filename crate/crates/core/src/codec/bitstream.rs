//! Container layout (all integers big-endian):
//!
//! | field            | size                      |
//! |------------------|---------------------------|
//! | magic `DTAC`     | 4 bytes                   |
//! | version (1)      | u8                        |
//! | width, height    | u32, u32                  |
//! | block size       | u8 (8 or 16)              |
//! | QP field width   | u8 (always 6)             |
//! | QP map           | B fields of 6 bits, MSB first, zero-padded to a byte |
//! | block bit counts | B x u32                   |
//! | payload bit count| u64 (sum of block counts) |
//! | payload          | bit-packed block codes, zero-padded to a byte |
//!
//! `B` is the number of blocks in raster order. Header bytes are not counted
//! against a rate-control budget; the payload is.

use crate::error::{Error, Result};
use crate::grid::BlockGeometry;

use super::entropy::{BitReader, BitWriter};

pub const MAGIC: &[u8; 4] = b"DTAC";
pub const VERSION: u8 = 1;
pub const QP_FIELD_BITS: u8 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub width: usize,
    pub height: usize,
    pub cu_size: usize,
    pub qps: Vec<u8>,
    pub block_bits: Vec<u64>,
    pub payload: Vec<u8>,
}

impl Bitstream {
    pub fn geometry(&self) -> Result<BlockGeometry> {
        BlockGeometry::new(self.width, self.height, self.cu_size)
    }

    pub fn payload_bits(&self) -> u64 {
        self.block_bits.iter().sum()
    }

    /// Bit offset of each block's code within the payload.
    pub fn block_offsets(&self) -> Vec<u64> {
        let mut off = 0;
        self.block_bits
            .iter()
            .map(|&b| {
                let o = off;
                off += b;
                o
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + self.payload.len() + 4 * self.block_bits.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(self.width as u32).to_be_bytes());
        out.extend_from_slice(&(self.height as u32).to_be_bytes());
        out.push(self.cu_size as u8);
        out.push(QP_FIELD_BITS);
        let mut qw = BitWriter::new();
        for &q in &self.qps {
            qw.write_bits(u64::from(q), u32::from(QP_FIELD_BITS));
        }
        out.extend_from_slice(&qw.into_bytes());
        for &b in &self.block_bits {
            out.extend_from_slice(&(b as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.payload_bits().to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(Error::Bitstream("bad magic".into()));
        }
        let version = cur.u8()?;
        if version != VERSION {
            return Err(Error::Bitstream(format!("unsupported version {version}")));
        }
        let width = cur.u32()? as usize;
        let height = cur.u32()? as usize;
        let cu_size = cur.u8()? as usize;
        if !super::dct::SUPPORTED_SIZES.contains(&cu_size) {
            return Err(Error::Bitstream(format!("unsupported block size {cu_size}")));
        }
        if cur.u8()? != QP_FIELD_BITS {
            return Err(Error::Bitstream("unexpected QP field width".into()));
        }
        let geom = BlockGeometry::new(width, height, cu_size).map_err(|e| Error::Bitstream(e.to_string()))?;
        let nb = geom.len();
        let qp_bytes = (nb * QP_FIELD_BITS as usize).div_ceil(8);
        let qraw = cur.take(qp_bytes)?;
        let mut qr = BitReader::new(qraw, (nb * QP_FIELD_BITS as usize) as u64);
        let mut qps = Vec::with_capacity(nb);
        for _ in 0..nb {
            let q = qr.read_bits(u32::from(QP_FIELD_BITS))? as u8;
            if q > 51 {
                return Err(Error::Bitstream(format!("QP {q} out of range")));
            }
            qps.push(q);
        }
        let mut block_bits = Vec::with_capacity(nb);
        for _ in 0..nb {
            block_bits.push(u64::from(cur.u32()?));
        }
        let total = cur.u64()?;
        if total != block_bits.iter().sum::<u64>() {
            return Err(Error::Bitstream("payload length disagrees with block lengths".into()));
        }
        let payload = cur.take(total.div_ceil(8) as usize)?.to_vec();
        if cur.pos != bytes.len() {
            return Err(Error::Bitstream("trailing bytes after payload".into()));
        }
        Ok(Bitstream {
            width,
            height,
            cu_size,
            qps,
            block_bits,
            payload,
        })
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Bitstream("truncated stream".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }
}
