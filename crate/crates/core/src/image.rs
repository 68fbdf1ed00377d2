//! Luma planes, PGM/PNG I/O and aspect-preserving rescaling.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Smallest side accepted by the feature pipeline.
pub const MIN_PIPELINE_SIDE: usize = 16;

/// An 8-bit grayscale plane stored row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Image")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "zero dimension",
            });
        }
        if data.len() != width * height {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "sample count does not match width*height",
            });
        }
        Ok(Image { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Result<Self> {
        Image::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image::new(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn ensure_pipeline_size(&self) -> Result<()> {
        if self.width < MIN_PIPELINE_SIDE || self.height < MIN_PIPELINE_SIDE {
            return Err(Error::Dimensions {
                width: self.width,
                height: self.height,
                reason: "feature pipeline needs both sides >= 16",
            });
        }
        Ok(())
    }
}

/// BT.601 luma of an RGB triple, rounded to nearest.
pub fn luma_from_rgb(r: u8, g: u8, b: u8) -> u8 {
    let y = 0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b);
    y.round().clamp(0.0, 255.0) as u8
}

/// Loads a PGM (P5 or P2) or, with the `png` feature, a PNG file as luma.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        return decode_pgm(&bytes);
    }
    if bytes.starts_with(b"\x89PNG") {
        return decode_png(&bytes);
    }
    Err(Error::UnsupportedFormat(format!(
        "{}: not a PGM or PNG file",
        path.display()
    )))
}

#[cfg(feature = "png")]
fn decode_png(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
        .map_err(|e| Error::MalformedImage(e.to_string()))?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let data = rgb.pixels().map(|p| luma_from_rgb(p[0], p[1], p[2])).collect();
    Image::new(w, h, data)
}

#[cfg(not(feature = "png"))]
fn decode_png(_bytes: &[u8]) -> Result<Image> {
    Err(Error::UnsupportedFormat("built without png support".into()))
}

struct HeaderTokens<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderTokens<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedImage("bad PGM header field".into()))
    }
}

/// Parses a binary (P5) or ASCII (P2) PGM with maxval up to 255.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let binary = match bytes.get(..2) {
        Some(b"P5") => true,
        Some(b"P2") => false,
        _ => return Err(Error::UnsupportedFormat("missing PGM magic".into())),
    };
    let mut tok = HeaderTokens { bytes, pos: 2 };
    let width = tok.number()?;
    let height = tok.number()?;
    let maxval = tok.number()?;
    if width == 0 || height == 0 {
        return Err(Error::Dimensions {
            width,
            height,
            reason: "zero dimension",
        });
    }
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat(format!("PGM maxval {maxval}")));
    }
    let n = width * height;
    let rescale = |v: usize| -> u8 {
        if maxval == 255 {
            v as u8
        } else {
            ((v * 255 + maxval / 2) / maxval) as u8
        }
    };
    let data: Vec<u8> = if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = tok.pos + 1;
        let raster = bytes
            .get(start..start + n)
            .ok_or_else(|| Error::MalformedImage("truncated PGM raster".into()))?;
        raster.iter().map(|&v| rescale(v as usize)).collect()
    } else {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let v = tok.number()?;
            if v > maxval {
                return Err(Error::MalformedImage("sample exceeds maxval".into()));
            }
            out.push(rescale(v));
        }
        out
    };
    Image::new(width, height, data)
}

pub fn encode_pgm(img: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(img)).map_err(|e| Error::io(path, e))
}

/// Geometry of one feature layer relative to the original image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaleInfo {
    pub layer: usize,
    /// Spatial dimension of the layer, `C_1` halved once per preceding pool.
    pub layer_dim: f64,
    /// `layer_dim / max(W, H)`.
    pub scale: f64,
    pub width: usize,
    pub height: usize,
}

impl ScaleInfo {
    pub fn new(layer: usize, layer_dim: f64, src_width: usize, src_height: usize) -> Self {
        let scale = layer_dim / src_width.max(src_height) as f64;
        ScaleInfo {
            layer,
            layer_dim,
            scale,
            width: ((src_width as f64 * scale).round() as usize).max(1),
            height: ((src_height as f64 * scale).round() as usize).max(1),
        }
    }
}

/// Bilinear resample with half-pixel centres to an explicit size.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    if out_w == img.width && out_h == img.height {
        return Ok(img.clone());
    }
    let src: Vec<f64> = img.data.iter().map(|&v| f64::from(v)).collect();
    let out = resample_plane(&src, img.width, img.height, out_w, out_h);
    Image::new(
        out_w,
        out_h,
        out.into_iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect(),
    )
}

/// Bilinear resample of a real-valued plane (half-pixel centres, edge clamp).
pub fn resample_plane(src: &[f64], w: usize, h: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    let sx = w as f64 / out_w as f64;
    let sy = h as f64 / out_h as f64;
    let axis = |o: usize, s: f64, n: usize| -> (usize, usize, f64) {
        let u = ((o as f64 + 0.5) * s - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = u.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, u - i0 as f64)
    };
    let xs: Vec<_> = (0..out_w).map(|x| axis(x, sx, w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = axis(y, sy, h);
        for &(x0, x1, fx) in &xs {
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Scales the longer side to `c1` keeping the aspect ratio. No padding is added.
pub fn rescale_keep_aspect(img: &Image, c1: usize) -> Result<(Image, ScaleInfo)> {
    if c1 < MIN_PIPELINE_SIDE {
        return Err(Error::InvalidArgument(format!(
            "input layer dimension {c1} below {MIN_PIPELINE_SIDE}"
        )));
    }
    let info = ScaleInfo::new(1, c1 as f64, img.width, img.height);
    let out = resize_bilinear(img, info.width, info.height)?;
    Ok((out, info))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_constant_pgm() {
        let mut bytes = b"P5\n# comment\n4 4\n255\n".to_vec();
        bytes.extend_from_slice(&[128; 16]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!((img.width(), img.height()), (4, 4));
        assert!(img.data().iter().all(|&v| v == 128));
    }

    #[test]
    fn ascii_pgm_with_small_maxval() {
        let img = decode_pgm(b"P2 2 1 15 0 15").unwrap();
        assert_eq!(img.data(), &[0, 255]);
    }

    #[test]
    fn pgm_errors() {
        assert!(matches!(decode_pgm(b"P5\n0 4\n255\n"), Err(Error::Dimensions { .. })));
        assert!(matches!(
            decode_pgm(b"P5\n4 4\n255\n\0\0"),
            Err(Error::MalformedImage(_))
        ));
        assert!(matches!(
            decode_pgm(b"P6\n1 1\n255\n\0\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
    }

    #[test]
    fn bt601_luma() {
        assert_eq!(luma_from_rgb(255, 255, 255), 255);
        assert_eq!(luma_from_rgb(255, 0, 0), 76);
        assert_eq!(luma_from_rgb(0, 0, 0), 0);
    }

    #[test]
    fn rescale_500x375() {
        let img = Image::filled(500, 375, 9).unwrap();
        let (out, info) = rescale_keep_aspect(&img, 416).unwrap();
        assert!((info.scale - 0.832).abs() < 1e-12);
        assert_eq!((out.width(), out.height()), (416, 312));
        assert!(out.data().iter().all(|&v| v == 9));
    }

    #[test]
    fn rescale_identity() {
        let img = Image::from_fn(416, 416, |x, y| ((x * 7 + y * 3) % 256) as u8).unwrap();
        let (out, info) = rescale_keep_aspect(&img, 416).unwrap();
        assert_eq!(info.scale, 1.0);
        assert_eq!(out, img);
    }

    #[test]
    fn rescale_rejects_small_target() {
        let img = Image::filled(32, 32, 0).unwrap();
        assert!(rescale_keep_aspect(&img, 8).is_err());
    }

    #[test]
    fn pgm_roundtrip_through_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        let img = Image::from_fn(17, 5, |x, y| (x * 13 + y) as u8).unwrap();
        save_pgm(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }

    #[cfg(feature = "png")]
    #[test]
    fn png_is_converted_to_bt601_luma() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        let mut buf = image::RgbImage::new(2, 1);
        buf.put_pixel(0, 0, image::Rgb([255, 0, 0]));
        buf.put_pixel(1, 0, image::Rgb([255, 255, 255]));
        buf.save(&p).unwrap();
        assert_eq!(load_image(&p).unwrap().data(), &[76, 255]);
    }

    #[test]
    fn unknown_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        fs::write(&p, b"hello").unwrap();
        assert!(matches!(load_image(&p), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(
            load_image(dir.path().join("missing.pgm")),
            Err(Error::Io { .. })
        ));
    }
}
