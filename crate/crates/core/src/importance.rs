//! Object importance maps from one layer of filter responses.
//!
//! Responses are clamped to `[0, 1]`, each filter is weighted by one minus
//! its mean clamped response, the weighted responses are combined per pixel
//! with an l2 norm and the result is min-max normalised to `[0, 1]`.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::features::{run_stack, FeatureTensor, FilterBank};
use crate::grid::BlockGeometry;
use crate::image::{resample_plane, Image};

/// Clamps every response to `[0, 1]`.
pub fn clamp_unit(t: &FeatureTensor) -> FeatureTensor {
    let maps = t
        .channels()
        .iter()
        .map(|m| m.iter().map(|&v| v.clamp(0.0, 1.0)).collect())
        .collect();
    FeatureTensor::new(t.layer, t.width(), t.height(), maps).expect("same shape as input")
}

/// One minus the mean of an already clamped channel.
pub fn filter_weight(channel: &[f64]) -> Result<f64> {
    if channel.is_empty() {
        return Err(Error::InvalidArgument("filter weight of an empty map".into()));
    }
    let mean = channel.iter().sum::<f64>() / channel.len() as f64;
    Ok(1.0 - mean)
}

/// Per-filter informativeness weights of one layer, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterWeights(pub Vec<f64>);

impl FilterWeights {
    pub fn from_clamped(t: &FeatureTensor) -> Result<Self> {
        t.channels()
            .iter()
            .map(|c| filter_weight(c))
            .collect::<Result<Vec<_>>>()
            .map(FilterWeights)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Normalised per-pixel importance at layer resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceMap {
    pub layer: usize,
    width: usize,
    height: usize,
    /// Un-normalised l2 magnitudes, kept for diagnostics.
    raw: Vec<f64>,
    values: Vec<f64>,
    degenerate: bool,
}

impl ImportanceMap {
    /// Builds a map from raw magnitudes, normalising min-max to `[0, 1]`.
    /// A constant input yields a constant map of ones.
    pub fn from_raw(layer: usize, width: usize, height: usize, raw: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || raw.len() != width * height {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "importance plane size mismatch",
            });
        }
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite importance value".into()));
        }
        let (lo, hi) = raw.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        let degenerate = hi <= lo;
        let values = if degenerate {
            vec![1.0; raw.len()]
        } else {
            let span = hi - lo;
            raw.iter().map(|&v| ((v - lo) / span).clamp(0.0, 1.0)).collect()
        };
        Ok(ImportanceMap {
            layer,
            width,
            height,
            raw,
            values,
            degenerate,
        })
    }

    /// Constant map: every pixel equally important.
    pub fn flat(width: usize, height: usize) -> Result<Self> {
        ImportanceMap::from_raw(0, width, height, vec![0.0; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Bilinear upsample of the normalised map to `w x h`.
    pub fn resample(&self, w: usize, h: usize) -> Vec<f64> {
        if (w, h) == (self.width, self.height) {
            return self.values.clone();
        }
        resample_plane(&self.values, self.width, self.height, w, h)
    }

    /// The map scaled to 0..=255 for viewing.
    pub fn to_image(&self) -> Image {
        let data = self.values.iter().map(|&v| (v * 255.0).round() as u8).collect();
        Image::new(self.width, self.height, data).expect("map dimensions are nonzero")
    }
}

/// Weighted l2 fusion of clamped channels followed by min-max normalisation.
pub fn fuse(clamped: &FeatureTensor, weights: &FilterWeights) -> Result<ImportanceMap> {
    if weights.len() != clamped.num_channels() {
        return Err(Error::ChannelMismatch {
            expected: clamped.num_channels(),
            got: weights.len(),
        });
    }
    let n = clamped.width() * clamped.height();
    let mut sq = vec![0.0; n];
    for (ch, &alpha) in clamped.channels().iter().zip(&weights.0) {
        if alpha == 0.0 {
            continue;
        }
        for (acc, &v) in sq.iter_mut().zip(ch) {
            let t = alpha * v;
            *acc += t * t;
        }
    }
    let raw = sq.into_iter().map(f64::sqrt).collect();
    ImportanceMap::from_raw(clamped.layer, clamped.width(), clamped.height(), raw)
}

/// Clamp, weight and fuse in one go.
pub fn importance_map(t: &FeatureTensor) -> Result<ImportanceMap> {
    let clamped = clamp_unit(t);
    let weights = FilterWeights::from_clamped(&clamped)?;
    fuse(&clamped, &weights)
}

/// Runs the feature stack to `layer` and builds that layer's importance map.
///
/// A constant image has no structure to rank, but zero padding would still
/// light up its border; it gets the degenerate all-ones map instead.
pub fn importance_from_image(img: &Image, bank: &FilterBank, layer: usize, input_dim: usize) -> Result<ImportanceMap> {
    let (t, _) = run_stack(img, bank, layer, input_dim)?;
    if img.data().windows(2).all(|p| p[0] == p[1]) {
        let mut map = ImportanceMap::flat(t.width(), t.height())?;
        map.layer = layer;
        return Ok(map);
    }
    importance_map(&t)
}

/// Block-wise share of total importance, one entry per block in raster order.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockImportanceGrid {
    pub geometry: BlockGeometry,
    values: Vec<f64>,
}

impl BlockImportanceGrid {
    pub fn new(geometry: BlockGeometry, values: Vec<f64>) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(Error::InvalidArgument(format!(
                "{} importance values for {} blocks",
                values.len(),
                geometry.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "block importance must be finite and >= 0".into(),
            ));
        }
        Ok(BlockImportanceGrid { geometry, values })
    }

    /// Importance proportional to block area, i.e. equal importance per pixel.
    pub fn flat(geometry: BlockGeometry) -> Self {
        let total = (geometry.width * geometry.height) as f64;
        let values = (0..geometry.len()).map(|k| geometry.pixels(k) as f64 / total).collect();
        BlockImportanceGrid { geometry, values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV with columns `i,j,importance`; `(i, j)` is the block's top-left pixel.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("i,j,importance\n");
        for (k, v) in self.values.iter().enumerate() {
            let (x, y) = self.geometry.origin(k);
            let _ = writeln!(s, "{x},{y},{v:.12}");
        }
        s
    }
}

/// Overlap weights between unit map cells and block intervals along one axis.
///
/// Map cell `m` covers `[m, m+1)` in map units; block `b` covers
/// `[b*cu*ratio, min((b+1)*cu, len)*ratio)` where `ratio = map_len / len`.
fn axis_overlaps(map_len: usize, img_len: usize, cu: usize, blocks: usize) -> Vec<Vec<(usize, f64)>> {
    let ratio = map_len as f64 / img_len as f64;
    (0..blocks)
        .map(|b| {
            let lo = (b * cu) as f64 * ratio;
            let hi = if b + 1 == blocks {
                map_len as f64
            } else {
                ((b + 1) * cu) as f64 * ratio
            };
            let first = lo.floor() as usize;
            let last = (hi.ceil() as usize).min(map_len);
            (first..last)
                .filter_map(|m| {
                    let ov = (hi.min((m + 1) as f64) - lo.max(m as f64)).max(0.0);
                    (ov > 0.0).then_some((m, ov))
                })
                .collect()
        })
        .collect()
}

/// Sums a `map_w x map_h` plane over each block footprint with area weights
/// and normalises to a unit total. An all-zero plane gives `1/B` per block.
pub fn block_importance_plane(
    plane: &[f64],
    map_w: usize,
    map_h: usize,
    geometry: &BlockGeometry,
) -> Result<BlockImportanceGrid> {
    if plane.len() != map_w * map_h || map_w == 0 || map_h == 0 {
        return Err(Error::Dimensions {
            width: map_w,
            height: map_h,
            reason: "importance plane size mismatch",
        });
    }
    let xs = axis_overlaps(map_w, geometry.width, geometry.cu_size, geometry.cols);
    let ys = axis_overlaps(map_h, geometry.height, geometry.cu_size, geometry.rows);
    let mut sums = vec![0.0; geometry.len()];
    for (by, yrow) in ys.iter().enumerate() {
        for (bx, xcol) in xs.iter().enumerate() {
            let mut acc = 0.0;
            for &(my, wy) in yrow {
                let row = &plane[my * map_w..(my + 1) * map_w];
                let mut racc = 0.0;
                for &(mx, wx) in xcol {
                    racc += wx * row[mx];
                }
                acc += wy * racc;
            }
            sums[by * geometry.cols + bx] = acc;
        }
    }
    let total: f64 = sums.iter().sum();
    let values = if total > 0.0 {
        sums.iter().map(|s| s / total).collect()
    } else {
        vec![1.0 / geometry.len() as f64; geometry.len()]
    };
    BlockImportanceGrid::new(*geometry, values)
}

/// Block importance of a normalised map over the picture's block grid.
///
/// Map blocks are the coding blocks scaled by the map/picture size ratio,
/// generally non-integer; straddling map pixels contribute by overlap area.
pub fn block_importance(map: &ImportanceMap, geometry: &BlockGeometry) -> Result<BlockImportanceGrid> {
    block_importance_plane(&map.values, map.width, map.height, geometry)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor(w: usize, h: usize, chans: Vec<Vec<f64>>) -> FeatureTensor {
        FeatureTensor::new(1, w, h, chans).unwrap()
    }

    #[test]
    fn clamp_examples() {
        let t = tensor(3, 1, vec![vec![1.5, -0.3, 0.4]]);
        assert_eq!(clamp_unit(&t).channel(0), &[1.0, 0.0, 0.4]);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(filter_weight(&[1.0; 9]).unwrap(), 0.0);
        assert_eq!(filter_weight(&[0.0; 9]).unwrap(), 1.0);
        assert_eq!(filter_weight(&[0.0, 1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(filter_weight(&[]).is_err());
    }

    #[test]
    fn single_channel_fuse_is_minmax_of_input() {
        let m = vec![0.2, 0.4, 0.6, 1.0];
        let map = fuse(&tensor(2, 2, vec![m.clone()]), &FilterWeights(vec![1.0])).unwrap();
        assert_eq!(map.raw(), &m[..]);
        let expect = [0.0, 0.25, 0.5, 1.0];
        for (a, b) in map.values().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn two_identical_channels() {
        let m = vec![0.1, 0.5, 0.9, 0.3];
        let alpha = 0.7;
        let map = fuse(
            &tensor(2, 2, vec![m.clone(), m.clone()]),
            &FilterWeights(vec![alpha; 2]),
        )
        .unwrap();
        for (o, v) in map.raw().iter().zip(&m) {
            let oracle = (2.0 * (alpha * v) * (alpha * v)).sqrt();
            assert!((o - oracle).abs() < 1e-15);
            assert!((o - 2f64.sqrt() * alpha * v).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_weights_degenerate_to_uniform() {
        let map = fuse(&tensor(2, 2, vec![vec![0.3, 0.9, 0.1, 0.0]]), &FilterWeights(vec![0.0])).unwrap();
        assert!(map.is_degenerate());
        assert!(map.values().iter().all(|&v| v == 1.0));
        let g = BlockGeometry::new(32, 32, 16).unwrap();
        let grid = block_importance(&map, &g).unwrap();
        assert!(grid.values().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn fuse_dimension_mismatch() {
        let t = tensor(2, 2, vec![vec![0.0; 4]]);
        assert!(fuse(&t, &FilterWeights(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn uniform_map_gives_equal_blocks() {
        let g = BlockGeometry::new(64, 48, 16).unwrap();
        let grid = block_importance_plane(&vec![0.5; 26 * 19], 26, 19, &g).unwrap();
        for v in grid.values() {
            assert!((v - 1.0 / 12.0).abs() < 1e-12, "{v}");
        }
    }

    #[test]
    fn all_mass_in_one_block() {
        let g = BlockGeometry::new(32, 32, 16).unwrap();
        let mut plane = vec![0.0; 64];
        plane[8 * 6 + 6] = 1.0; // map pixel (6,6) lies in image block (1,1)
        let grid = block_importance_plane(&plane, 8, 8, &g).unwrap();
        assert_eq!(grid.values(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn zero_plane_falls_back_to_uniform() {
        let g = BlockGeometry::new(48, 16, 16).unwrap();
        let grid = block_importance_plane(&[0.0; 9], 3, 3, &g).unwrap();
        assert_eq!(grid.values(), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn ramp_split_against_supersampled_oracle() {
        // 5-wide map over a 2-block, 32-pixel-wide picture: block edge at map x = 2.5.
        let g = BlockGeometry::new(32, 16, 16).unwrap();
        let (mw, mh) = (5, 2);
        let plane: Vec<f64> = (0..mw * mh).map(|i| (i % mw) as f64 + 1.0).collect();
        let grid = block_importance_plane(&plane, mw, mh, &g).unwrap();
        // oracle: assign each image pixel the map cell it falls in (pixel-centre
        // sampling on a 1000x finer grid) and accumulate per block
        let sub = 1000;
        let mut acc = [0.0; 2];
        for sx in 0..32 * sub {
            let ix = (sx as f64 + 0.5) / sub as f64;
            let mx = ((ix * mw as f64 / 32.0) as usize).min(mw - 1);
            let b = (ix / 16.0) as usize;
            for my in 0..mh {
                acc[b] += plane[my * mw + mx];
            }
        }
        let tot = acc[0] + acc[1];
        for (g, a) in grid.values().iter().zip(acc) {
            assert!((g - a / tot).abs() < 1e-9);
        }
        // closed form: left covers cells 0,1 and half of 2
        let left = (1.0 + 2.0 + 1.5) * 2.0;
        assert!((grid.values()[0] - left / 30.0).abs() < 1e-15);
    }

    #[test]
    fn flat_grid_is_area_proportional() {
        let g = BlockGeometry::new(40, 16, 16).unwrap();
        let grid = BlockImportanceGrid::flat(g);
        assert_eq!(grid.values(), &[0.4, 0.4, 0.2]);
    }

    #[test]
    fn csv_export() {
        let g = BlockGeometry::new(32, 16, 16).unwrap();
        let csv = BlockImportanceGrid::flat(g).to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "i,j,importance");
        assert!(lines[2].starts_with("16,0,0.5"));
    }
}
