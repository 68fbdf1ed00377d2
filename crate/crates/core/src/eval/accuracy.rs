//! Rate-control accuracy: deviation of achieved from reference rate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyStats {
    /// Mean of `|bpp_ref - bpp_achieved|` over images.
    pub delta_bpp: f64,
    /// Population standard deviation of the same absolute deviations.
    pub sigma_bpp: f64,
    pub count: usize,
}

pub fn delta_bpp(reference_bits: &[f64], achieved_bits: &[f64], pixels: &[usize]) -> Result<AccuracyStats> {
    if reference_bits.len() != achieved_bits.len() || reference_bits.len() != pixels.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} reference, {} achieved, {} pixel counts",
            reference_bits.len(),
            achieved_bits.len(),
            pixels.len()
        )));
    }
    if reference_bits.is_empty() {
        return Err(Error::InvalidArgument("no images".into()));
    }
    let devs: Vec<f64> = reference_bits
        .iter()
        .zip(achieved_bits)
        .zip(pixels)
        .map(|((&r, &a), &n)| ((r - a) / n as f64).abs())
        .collect();
    let n = devs.len() as f64;
    let mean = devs.iter().sum::<f64>() / n;
    let var = devs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n;
    Ok(AccuracyStats {
        delta_bpp: mean,
        sigma_bpp: var.sqrt(),
        count: devs.len(),
    })
}
