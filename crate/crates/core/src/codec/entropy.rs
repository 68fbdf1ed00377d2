//! Bit I/O, exp-Golomb codes and run/level block coding.
//!
//! A block of zig-zag ordered levels is coded as `ue(count of nonzero
//! levels)` followed by one `(ue(run of zeros), se(level))` pair per nonzero
//! level. An all-zero block therefore costs a single bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn bit_len(&self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn write_bit(&mut self, bit: bool) {
        let off = (self.bits % 8) as u32;
        if off == 0 {
            self.bytes.push(0);
        }
        if bit {
            *self.bytes.last_mut().unwrap() |= 0x80 >> off;
        }
        self.bits += 1;
    }

    /// Writes the low `n` bits of `value`, most significant first.
    pub fn write_bits(&mut self, value: u64, n: u32) {
        for i in (0..n).rev() {
            self.write_bit((value >> i) & 1 == 1);
        }
    }

    pub fn write_ue(&mut self, v: u32) {
        let x = u64::from(v) + 1;
        let len = 64 - x.leading_zeros();
        self.write_bits(0, len - 1);
        self.write_bits(x, len);
    }

    pub fn write_se(&mut self, v: i32) {
        let mapped = if v > 0 { 2 * v as i64 - 1 } else { -2 * v as i64 };
        self.write_ue(mapped as u32);
    }

    pub fn append(&mut self, other: &BitWriter) {
        if self.bits.is_multiple_of(8) {
            self.bytes.extend_from_slice(&other.bytes);
            self.bits += other.bits;
            return;
        }
        let mut r = BitReader::new(&other.bytes, other.bits);
        while let Ok(b) = r.read_bit() {
            self.write_bit(b);
        }
    }

    /// Finished bytes, zero-padded to a byte boundary.
    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
    pos: u64,
    end: u64,
}

impl<'a> BitReader<'a> {
    pub fn new(bytes: &'a [u8], bit_len: u64) -> Self {
        BitReader {
            bytes,
            pos: 0,
            end: bit_len.min(bytes.len() as u64 * 8),
        }
    }

    /// Reader over `[start, start + len)` bits of `bytes`.
    pub fn window(bytes: &'a [u8], start: u64, len: u64) -> Self {
        BitReader {
            bytes,
            pos: start,
            end: (start + len).min(bytes.len() as u64 * 8),
        }
    }

    pub fn position(&self) -> u64 {
        self.pos
    }

    pub fn remaining(&self) -> u64 {
        self.end - self.pos
    }

    #[inline]
    pub fn read_bit(&mut self) -> Result<bool> {
        if self.pos >= self.end {
            return Err(Error::Bitstream("read past end of payload".into()));
        }
        let byte = self.bytes[(self.pos / 8) as usize];
        let bit = (byte >> (7 - (self.pos % 8))) & 1 == 1;
        self.pos += 1;
        Ok(bit)
    }

    pub fn read_bits(&mut self, n: u32) -> Result<u64> {
        let mut v = 0u64;
        for _ in 0..n {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Ok(v)
    }

    pub fn read_ue(&mut self) -> Result<u32> {
        let mut zeros = 0u32;
        while !self.read_bit()? {
            zeros += 1;
            if zeros > 32 {
                return Err(Error::Bitstream("exp-Golomb prefix too long".into()));
            }
        }
        let rest = self.read_bits(zeros)?;
        let v = ((1u64 << zeros) | rest) - 1;
        u32::try_from(v).map_err(|_| Error::Bitstream("exp-Golomb value overflow".into()))
    }

    pub fn read_se(&mut self) -> Result<i32> {
        let k = i64::from(self.read_ue()?);
        let v = if k % 2 == 1 { (k + 1) / 2 } else { -(k / 2) };
        i32::try_from(v).map_err(|_| Error::Bitstream("signed exp-Golomb overflow".into()))
    }
}

/// Length in bits of `ue(k)`: `2 floor(log2(k + 1)) + 1`.
pub fn ue_len(k: u32) -> u32 {
    let x = u64::from(k) + 1;
    2 * (63 - x.leading_zeros()) + 1
}

/// Codes one block of zig-zag ordered levels; returns the bits written.
pub fn write_levels(w: &mut BitWriter, levels: &[i32]) -> u64 {
    let start = w.bit_len();
    let nnz = levels.iter().filter(|&&l| l != 0).count();
    w.write_ue(nnz as u32);
    let mut run = 0u32;
    for &l in levels {
        if l == 0 {
            run += 1;
        } else {
            w.write_ue(run);
            w.write_se(l);
            run = 0;
        }
    }
    w.bit_len() - start
}

/// Inverse of [`write_levels`] for a block of `n` coefficients.
pub fn read_levels(r: &mut BitReader<'_>, n: usize) -> Result<Vec<i32>> {
    let nnz = r.read_ue()? as usize;
    if nnz > n {
        return Err(Error::Bitstream(format!(
            "{nnz} nonzero levels in a {n}-coefficient block"
        )));
    }
    let mut out = vec![0; n];
    let mut pos = 0usize;
    for _ in 0..nnz {
        let run = r.read_ue()? as usize;
        pos = pos
            .checked_add(run)
            .filter(|&p| p < n)
            .ok_or_else(|| Error::Bitstream("zero run past end of block".into()))?;
        let level = r.read_se()?;
        if level == 0 {
            return Err(Error::Bitstream("zero level in run/level pair".into()));
        }
        out[pos] = level;
        pos += 1;
    }
    Ok(out)
}

/// Standalone block coding: `(bit count, payload bytes)`.
pub fn entropy_code(levels: &[i32]) -> (u64, Vec<u8>) {
    let mut w = BitWriter::new();
    let bits = write_levels(&mut w, levels);
    (bits, w.into_bytes())
}

/// Decodes a standalone payload that must be consumed exactly.
pub fn entropy_decode(payload: &[u8], bits: u64, n: usize) -> Result<Vec<i32>> {
    let mut r = BitReader::new(payload, bits);
    let levels = read_levels(&mut r, n)?;
    if r.remaining() != 0 {
        return Err(Error::Bitstream("trailing bits after block".into()));
    }
    Ok(levels)
}
