//! Transform-only intra codec.
//!
//! Blocks are level-shifted by 128, transformed with an orthonormal DCT,
//! quantised with the block's QP and run/level coded. There is no
//! prediction, so blocks decode independently once the header is parsed.

pub mod bitstream;
pub mod dct;
pub mod entropy;
pub mod metrics;
pub mod quant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::BlockGeometry;
use crate::image::Image;
use crate::rate_control::{clip_qp, BlockRecord, RateControlSession};

pub use bitstream::Bitstream;
pub use metrics::{psnr, weighted_psnr, weighted_psnr_with};

use dct::{zigzag, Dct};
use entropy::{read_levels, write_levels, BitReader, BitWriter};

/// Where block QPs come from.
pub enum QpSource<'a> {
    Fixed(i32),
    /// One QP per block in raster order.
    Map(&'a [i32]),
    RateControl(&'a mut RateControlSession),
}

#[derive(Debug, Clone)]
pub struct EncodeOutput {
    pub bitstream: Bitstream,
    pub recon: Image,
    /// Filled in rate-control mode.
    pub records: Option<Vec<BlockRecord>>,
}

impl EncodeOutput {
    pub fn total_bits(&self) -> u64 {
        self.bitstream.payload_bits()
    }

    pub fn bpp(&self) -> f64 {
        self.total_bits() as f64 / (self.recon.pixels()) as f64
    }
}

struct BlockCoder {
    dct: Dct,
    scan: Vec<usize>,
}

impl BlockCoder {
    fn new(n: usize) -> Result<Self> {
        Ok(BlockCoder {
            dct: Dct::new(n)?,
            scan: zigzag(n),
        })
    }

    fn n(&self) -> usize {
        self.dct.size()
    }

    /// Gathers block `k` of `img` with edge replication, level-shifted.
    fn gather(&self, img: &Image, geom: &BlockGeometry, k: usize) -> Vec<f64> {
        let n = self.n();
        let (x0, y0) = geom.origin(k);
        let mut out = Vec::with_capacity(n * n);
        for dy in 0..n {
            let y = (y0 + dy).min(img.height() - 1);
            for dx in 0..n {
                let x = (x0 + dx).min(img.width() - 1);
                out.push(f64::from(img.get(x, y)) - 128.0);
            }
        }
        out
    }

    fn levels(&self, samples: &[f64], qp: i32) -> Vec<i32> {
        let raster = quant::quantize(&self.dct.forward(samples), qp);
        self.scan.iter().map(|&r| raster[r]).collect()
    }

    fn reconstruct(&self, scanned: &[i32], qp: i32) -> Vec<u8> {
        let mut raster = vec![0; scanned.len()];
        for (s, &r) in self.scan.iter().enumerate() {
            raster[r] = scanned[s];
        }
        self.dct
            .inverse(&quant::dequantize(&raster, qp))
            .into_iter()
            .map(|v| (v + 128.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    fn code(&self, img: &Image, geom: &BlockGeometry, k: usize, qp: i32) -> (BitWriter, Vec<u8>) {
        let levels = self.levels(&self.gather(img, geom, k), qp);
        let mut w = BitWriter::new();
        write_levels(&mut w, &levels);
        (w, self.reconstruct(&levels, qp))
    }
}

fn paste(recon: &mut Image, geom: &BlockGeometry, k: usize, block: &[u8]) {
    let n = geom.cu_size;
    let (x0, y0) = geom.origin(k);
    let (bw, bh) = geom.extent(k);
    for dy in 0..bh {
        for dx in 0..bw {
            recon.set(x0 + dx, y0 + dy, block[dy * n + dx]);
        }
    }
}

fn check_qp(qp: i32) -> Result<i32> {
    if qp != clip_qp(qp) {
        return Err(Error::InvalidArgument(format!("QP {qp} outside [0, 51]")));
    }
    Ok(qp)
}

/// Encodes `img` with `cu_size` blocks.
///
/// With [`QpSource::RateControl`] each block queries the session for its QP,
/// is coded, and commits its exact payload bit count before the next block.
pub fn encode_image(img: &Image, cu_size: usize, source: QpSource<'_>) -> Result<EncodeOutput> {
    let coder = BlockCoder::new(cu_size)?;
    let geom = BlockGeometry::new(img.width(), img.height(), cu_size)?;
    let nb = geom.len();
    let mut recon = Image::filled(img.width(), img.height(), 0)?;

    let (qps, coded, records): (Vec<i32>, Vec<(BitWriter, Vec<u8>)>, _) = match source {
        QpSource::Fixed(qp) => {
            let qp = check_qp(qp)?;
            let coded = (0..nb).into_par_iter().map(|k| coder.code(img, &geom, k, qp)).collect();
            (vec![qp; nb], coded, None)
        }
        QpSource::Map(map) => {
            if map.len() != nb {
                return Err(Error::InvalidArgument(format!("{} QPs for {nb} blocks", map.len())));
            }
            for &q in map {
                check_qp(q)?;
            }
            let coded = (0..nb)
                .into_par_iter()
                .map(|k| coder.code(img, &geom, k, map[k]))
                .collect();
            (map.to_vec(), coded, None)
        }
        QpSource::RateControl(session) => {
            if *session.geometry() != geom {
                return Err(Error::RateControl("session geometry does not match the image".into()));
            }
            let mut qps = Vec::with_capacity(nb);
            let mut coded = Vec::with_capacity(nb);
            for _ in 0..nb {
                let (k, qp) = session.next_qp()?;
                let c = coder.code(img, &geom, k, qp);
                session.commit(c.0.bit_len())?;
                qps.push(qp);
                coded.push(c);
            }
            (qps, coded, Some(session.records().to_vec()))
        }
    };

    let mut payload = BitWriter::new();
    let mut block_bits = Vec::with_capacity(nb);
    for (k, (w, block)) in coded.iter().enumerate() {
        payload.append(w);
        block_bits.push(w.bit_len());
        paste(&mut recon, &geom, k, block);
    }
    let bitstream = Bitstream {
        width: img.width(),
        height: img.height(),
        cu_size,
        qps: qps.iter().map(|&q| q as u8).collect(),
        block_bits,
        payload: payload.into_bytes(),
    };
    Ok(EncodeOutput {
        bitstream,
        recon,
        records,
    })
}

/// Decodes every block independently and crops to the picture size.
pub fn decode(bs: &Bitstream) -> Result<Image> {
    let geom = bs.geometry()?;
    if bs.qps.len() != geom.len() || bs.block_bits.len() != geom.len() {
        return Err(Error::Bitstream("block table size does not match geometry".into()));
    }
    if bs.payload.len() as u64 * 8 < bs.payload_bits() {
        return Err(Error::Bitstream("payload shorter than its declared length".into()));
    }
    let coder = BlockCoder::new(bs.cu_size)?;
    let n = bs.cu_size * bs.cu_size;
    let offsets = bs.block_offsets();
    let blocks: Vec<Vec<u8>> = (0..geom.len())
        .into_par_iter()
        .map(|k| {
            let mut r = BitReader::window(&bs.payload, offsets[k], bs.block_bits[k]);
            let levels = read_levels(&mut r, n)?;
            if r.remaining() != 0 {
                return Err(Error::Bitstream(format!("block {k}: trailing bits")));
            }
            Ok(coder.reconstruct(&levels, i32::from(bs.qps[k])))
        })
        .collect::<Result<_>>()?;
    let mut recon = Image::filled(bs.width, bs.height, 0)?;
    for (k, b) in blocks.iter().enumerate() {
        paste(&mut recon, &geom, k, b);
    }
    Ok(recon)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| ((x * 31 + y * 17 + (x * y) % 23) % 256) as u8).unwrap()
    }

    #[test]
    fn fixed_qp_roundtrip_and_padding() {
        let img = textured(37, 21);
        for cu in [8, 16] {
            let out = encode_image(&img, cu, QpSource::Fixed(22)).unwrap();
            let bs = Bitstream::from_bytes(&out.bitstream.to_bytes()).unwrap();
            assert_eq!(bs, out.bitstream);
            assert_eq!(decode(&bs).unwrap(), out.recon);
            assert_eq!((out.recon.width(), out.recon.height()), (37, 21));
        }
    }

    #[test]
    fn qp4_on_flat_block_is_lossless() {
        let img = Image::filled(16, 16, 200).unwrap();
        let out = encode_image(&img, 16, QpSource::Fixed(4)).unwrap();
        assert_eq!(out.recon, img);
    }

    #[test]
    fn coarsest_qp_is_cheapest() {
        let img = textured(64, 64);
        let b51 = encode_image(&img, 16, QpSource::Fixed(51)).unwrap().total_bits();
        for qp in [0, 10, 22, 37, 50] {
            assert!(encode_image(&img, 16, QpSource::Fixed(qp)).unwrap().total_bits() >= b51);
        }
    }

    #[test]
    fn invalid_inputs() {
        let img = textured(32, 32);
        assert!(encode_image(&img, 16, QpSource::Fixed(52)).is_err());
        assert!(encode_image(&img, 12, QpSource::Fixed(30)).is_err());
        assert!(encode_image(&img, 16, QpSource::Map(&[30, 30])).is_err());
    }

    #[test]
    fn qp_map_mode() {
        let img = textured(32, 32);
        let map = [10, 20, 30, 40];
        let out = encode_image(&img, 16, QpSource::Map(&map)).unwrap();
        assert_eq!(out.bitstream.qps, vec![10, 20, 30, 40]);
        assert_eq!(decode(&out.bitstream).unwrap(), out.recon);
    }

    #[test]
    fn corrupted_streams_are_rejected() {
        let img = textured(32, 32);
        let bytes = encode_image(&img, 8, QpSource::Fixed(20)).unwrap().bitstream.to_bytes();
        assert!(Bitstream::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Bitstream::from_bytes(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Bitstream::from_bytes(&extra).is_err());
    }
}
