//! Orthonormal 2-D DCT-II on square blocks.

use crate::error::{Error, Result};

pub const SUPPORTED_SIZES: [usize; 2] = [8, 16];

/// Cached basis `C[k][n] = s_k cos(pi (2n + 1) k / 2N)` for one block size.
#[derive(Debug, Clone)]
pub struct Dct {
    n: usize,
    basis: Vec<f64>,
}

impl Dct {
    pub fn new(n: usize) -> Result<Self> {
        if !SUPPORTED_SIZES.contains(&n) {
            return Err(Error::InvalidArgument(format!("unsupported block size {n}")));
        }
        let mut basis = vec![0.0; n * n];
        let nf = n as f64;
        for k in 0..n {
            let s = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
            for i in 0..n {
                basis[k * n + i] = s * (std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2.0 * nf)).cos();
            }
        }
        Ok(Dct { n, basis })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// `C x C^T`
    pub fn forward(&self, block: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(block.len(), n * n);
        // rows
        let mut tmp = vec![0.0; n * n];
        for r in 0..n {
            let row = &block[r * n..(r + 1) * n];
            for k in 0..n {
                let b = &self.basis[k * n..(k + 1) * n];
                tmp[r * n + k] = row.iter().zip(b).map(|(x, c)| x * c).sum();
            }
        }
        // columns
        let mut out = vec![0.0; n * n];
        for c in 0..n {
            for k in 0..n {
                let b = &self.basis[k * n..(k + 1) * n];
                let mut acc = 0.0;
                for r in 0..n {
                    acc += tmp[r * n + c] * b[r];
                }
                out[k * n + c] = acc;
            }
        }
        out
    }

    /// `C^T X C`
    pub fn inverse(&self, coeffs: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(coeffs.len(), n * n);
        let mut tmp = vec![0.0; n * n];
        for k in 0..n {
            for c in 0..n {
                let v = coeffs[k * n + c];
                if v == 0.0 {
                    continue;
                }
                let b = &self.basis[k * n..(k + 1) * n];
                for r in 0..n {
                    tmp[r * n + c] += v * b[r];
                }
            }
        }
        let mut out = vec![0.0; n * n];
        for r in 0..n {
            for k in 0..n {
                let v = tmp[r * n + k];
                if v == 0.0 {
                    continue;
                }
                let b = &self.basis[k * n..(k + 1) * n];
                for (o, c) in out[r * n..(r + 1) * n].iter_mut().zip(b) {
                    *o += v * c;
                }
            }
        }
        out
    }
}

pub fn dct2(block: &[f64], n: usize) -> Result<Vec<f64>> {
    check_len(block, n)?;
    Ok(Dct::new(n)?.forward(block))
}

pub fn idct2(coeffs: &[f64], n: usize) -> Result<Vec<f64>> {
    check_len(coeffs, n)?;
    Ok(Dct::new(n)?.inverse(coeffs))
}

fn check_len(v: &[f64], n: usize) -> Result<()> {
    if v.len() != n * n {
        return Err(Error::InvalidArgument(format!(
            "{} samples for a {n}x{n} block",
            v.len()
        )));
    }
    Ok(())
}

/// Zig-zag scan order: `order[s]` is the raster index of scan position `s`.
pub fn zigzag(n: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(n * n);
    for d in 0..(2 * n - 1) {
        let lo = d.saturating_sub(n - 1);
        let hi = d.min(n - 1);
        if d % 2 == 0 {
            // up-right: row decreasing
            for r in (lo..=hi).rev() {
                order.push(r * n + (d - r));
            }
        } else {
            for r in lo..=hi {
                order.push(r * n + (d - r));
            }
        }
    }
    order
}
