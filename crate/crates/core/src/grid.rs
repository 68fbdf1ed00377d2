//! Raster block layout shared by allocation and coding.

use crate::error::{Error, Result};

/// Partition of a `width x height` picture into `cu_size` squares in raster
/// order. Edge blocks may be partial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGeometry {
    pub width: usize,
    pub height: usize,
    pub cu_size: usize,
    pub cols: usize,
    pub rows: usize,
}

impl BlockGeometry {
    pub fn new(width: usize, height: usize, cu_size: usize) -> Result<Self> {
        if cu_size < 1 {
            return Err(Error::InvalidArgument("block size must be at least 1".into()));
        }
        if width == 0 || height == 0 {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "zero dimension",
            });
        }
        Ok(BlockGeometry {
            width,
            height,
            cu_size,
            cols: width.div_ceil(cu_size),
            rows: height.div_ceil(cu_size),
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cols * self.rows
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Top-left pixel corner of block `k` in raster order.
    #[inline]
    pub fn origin(&self, k: usize) -> (usize, usize) {
        ((k % self.cols) * self.cu_size, (k / self.cols) * self.cu_size)
    }

    /// Width and height of block `k` clipped to the picture.
    #[inline]
    pub fn extent(&self, k: usize) -> (usize, usize) {
        let (x, y) = self.origin(k);
        ((self.width - x).min(self.cu_size), (self.height - y).min(self.cu_size))
    }

    #[inline]
    pub fn pixels(&self, k: usize) -> usize {
        let (w, h) = self.extent(k);
        w * h
    }

    pub fn pixel_counts(&self) -> Vec<usize> {
        (0..self.len()).map(|k| self.pixels(k)).collect()
    }

    /// Picture dimensions rounded up to whole blocks.
    pub fn padded_dims(&self) -> (usize, usize) {
        (self.cols * self.cu_size, self.rows * self.cu_size)
    }
}
