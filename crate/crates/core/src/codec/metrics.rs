//! PSNR and importance-weighted PSNR.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::importance::ImportanceMap;

const PEAK_SQ: f64 = 255.0 * 255.0;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Dimensions {
            width: b.width(),
            height: b.height(),
            reason: "images differ in size",
        });
    }
    Ok(())
}

fn psnr_of_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK_SQ / mse).log10()
    }
}

/// `10 log10(255^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(psnr_of_mse(sse / a.pixels() as f64))
}

/// PSNR of the MSE weighted per pixel by `weights`, renormalised to mean 1.
/// Constant or all-zero weights reduce to plain PSNR exactly.
pub fn weighted_psnr_with(a: &Image, b: &Image, weights: &[f64]) -> Result<f64> {
    check_dims(a, b)?;
    if weights.len() != a.pixels() {
        return Err(Error::InvalidArgument("weight plane size mismatch".into()));
    }
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) || weights.iter().all(|&w| w == weights[0]) {
        return psnr(a, b);
    }
    let scale = a.pixels() as f64 / wsum;
    let wsse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .zip(weights)
        .map(|((&x, &y), &w)| {
            let d = f64::from(x) - f64::from(y);
            w * scale * d * d
        })
        .sum();
    Ok(psnr_of_mse(wsse / a.pixels() as f64))
}

/// Weighted PSNR with the importance map upsampled to picture size.
pub fn weighted_psnr(a: &Image, b: &Image, map: &ImportanceMap) -> Result<f64> {
    weighted_psnr_with(a, b, &map.resample(a.width(), a.height()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_is_infinite() {
        let a = Image::filled(4, 4, 3).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn unit_mse() {
        let a = Image::filled(4, 4, 10).unwrap();
        let b = Image::filled(4, 4, 11).unwrap();
        let p = psnr(&a, &b).unwrap();
        assert!((p - 48.1308).abs() < 1e-4);
        assert_eq!(p, 20.0 * 255f64.log10());
    }

    #[test]
    fn uniform_weights_equal_plain() {
        let a = Image::from_fn(8, 8, |x, y| (x * 9 + y) as u8).unwrap();
        let b = Image::from_fn(8, 8, |x, y| (x * 9 + y + (x % 3)) as u8).unwrap();
        let p = psnr(&a, &b).unwrap();
        assert_eq!(weighted_psnr_with(&a, &b, &[0.37; 64]).unwrap(), p);
        let flat = ImportanceMap::flat(3, 3).unwrap();
        assert_eq!(weighted_psnr(&a, &b, &flat).unwrap(), p);
    }

    #[test]
    fn weights_steer_the_error() {
        let a = Image::filled(2, 1, 100).unwrap();
        let b = Image::new(2, 1, vec![100, 110]).unwrap();
        let hi = weighted_psnr_with(&a, &b, &[1.0, 0.0]).unwrap();
        let lo = weighted_psnr_with(&a, &b, &[0.0, 1.0]).unwrap();
        assert_eq!(hi, f64::INFINITY);
        assert!(lo < psnr(&a, &b).unwrap());
    }

    #[test]
    fn size_mismatch() {
        let a = Image::filled(4, 4, 0).unwrap();
        let b = Image::filled(4, 5, 0).unwrap();
        assert!(psnr(&a, &b).is_err());
    }
}
