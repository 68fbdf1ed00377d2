//! Convolution / max-pool feature stack.
//!
//! Each layer cross-correlates its input with a set of 3x3 filters (zero
//! padding of one pixel, same-size output), applies a leaky activation and
//! optionally a 2x2 stride-2 max-pool before the next layer consumes it.
//!
//! # Filter bank file
//!
//! Banks are JSON documents:
//!
//! ```json
//! { "layers": [
//!     { "slope": 0.1, "pool": true,
//!       "filters": [ [ [k00, k01, k02, k10, k11, k12, k20, k21, k22] ] ] }
//! ] }
//! ```
//!
//! `filters[n][c]` is the row-major 3x3 kernel of filter `n` applied to input
//! channel `c`. The first layer sees one channel (luma scaled to `[0, 1]`);
//! layer `l + 1` sees as many channels as layer `l` has filters. `slope`
//! defaults to 0.1 and `pool` to `false` when omitted.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{rescale_keep_aspect, Image, ScaleInfo};

pub type Kernel = [f64; 9];

pub const DEFAULT_SLOPE: f64 = 0.1;

/// Stack of same-sized real-valued response maps, one per filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    pub layer: usize,
    width: usize,
    height: usize,
    channels: Vec<Vec<f64>>,
}

impl FeatureTensor {
    pub fn new(layer: usize, width: usize, height: usize, channels: Vec<Vec<f64>>) -> Result<Self> {
        if width == 0 || height == 0 || channels.is_empty() {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "empty feature tensor",
            });
        }
        if channels.iter().any(|c| c.len() != width * height) {
            return Err(Error::Dimensions {
                width,
                height,
                reason: "channel size does not match tensor dimensions",
            });
        }
        Ok(FeatureTensor {
            layer,
            width,
            height,
            channels,
        })
    }

    /// Single-channel tensor holding the image scaled to `[0, 1]`.
    pub fn from_image(img: &Image) -> Self {
        let plane = img.data().iter().map(|&v| f64::from(v) / 255.0).collect();
        FeatureTensor {
            layer: 0,
            width: img.width(),
            height: img.height(),
            channels: vec![plane],
        }
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
    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, n: usize) -> &[f64] {
        &self.channels[n]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }
}

/// One filter: a 3x3 kernel per input channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Filter {
    pub kernels: Vec<Kernel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    #[serde(default = "default_slope")]
    pub slope: f64,
    #[serde(default)]
    pub pool: bool,
    pub filters: Vec<Filter>,
}

fn default_slope() -> f64 {
    DEFAULT_SLOPE
}

impl LayerSpec {
    pub fn input_channels(&self) -> usize {
        self.filters.first().map_or(0, |f| f.kernels.len())
    }

    fn validate(&self, idx: usize, expected_inputs: usize) -> Result<()> {
        if self.filters.is_empty() {
            return Err(Error::FilterBank(format!("layer {idx} has no filters")));
        }
        if !(0.0..1.0).contains(&self.slope) {
            return Err(Error::FilterBank(format!(
                "layer {idx} slope {} outside [0, 1)",
                self.slope
            )));
        }
        for (n, f) in self.filters.iter().enumerate() {
            if f.kernels.len() != expected_inputs {
                return Err(Error::FilterBank(format!(
                    "layer {idx} filter {n}: {} kernels for {expected_inputs} input channels",
                    f.kernels.len()
                )));
            }
            if f.kernels.iter().flatten().any(|k| !k.is_finite()) {
                return Err(Error::FilterBank(format!(
                    "layer {idx} filter {n}: non-finite coefficient"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterBank {
    pub layers: Vec<LayerSpec>,
}

impl FilterBank {
    pub fn new(layers: Vec<LayerSpec>) -> Result<Self> {
        let bank = FilterBank { layers };
        bank.validate()?;
        Ok(bank)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::FilterBank("bank has no layers".into()));
        }
        let mut inputs = 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.validate(i + 1, inputs)?;
            inputs = layer.filters.len();
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bank: FilterBank = serde_json::from_str(text).map_err(|e| Error::FilterBank(e.to_string()))?;
        bank.validate()?;
        Ok(bank)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("filter bank serialises")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FilterBank::from_json(&text)
    }

    /// Number of pools applied before layer `layer` (1-based) runs.
    pub fn pools_before(&self, layer: usize) -> usize {
        self.layers[..layer.saturating_sub(1).min(self.layers.len())]
            .iter()
            .filter(|l| l.pool)
            .count()
    }

    /// The built-in seven-layer bank.
    ///
    /// Layer 1 holds 16 hand-designed detectors on luma: eight oriented
    /// edges (Sobel and diagonal, both polarities), on/off centre-surround
    /// Laplacians, two line detectors, a Gaussian and a box filter. Layers
    /// 2..=7 each hold 16 filters that pool responses spatially: filter `n`
    /// blurs its own channel, adds half of the next channel and inhibits the
    /// channel half-way round the bank. Pools follow layers 1, 2 and 5, which
    /// puts layers 1, 3 and 7 at 1, 1/4 and 1/8 of the input resolution.
    pub fn default_bank() -> Self {
        let first: Vec<Filter> = base_kernels()
            .into_iter()
            .map(|k| Filter { kernels: vec![k] })
            .collect();
        let width = first.len();
        let mut layers = vec![LayerSpec {
            slope: DEFAULT_SLOPE,
            pool: true,
            filters: first,
        }];
        for l in 2..=7 {
            let filters = (0..width)
                .map(|n| {
                    let mut kernels = vec![[0.0; 9]; width];
                    kernels[n] = scaled(&GAUSSIAN, 1.0);
                    kernels[(n + 1) % width] = scaled(&GAUSSIAN, 0.5);
                    kernels[(n + width / 2) % width] = scaled(&GAUSSIAN, -0.25);
                    Filter { kernels }
                })
                .collect();
            layers.push(LayerSpec {
                slope: DEFAULT_SLOPE,
                pool: matches!(l, 2 | 5),
                filters,
            });
        }
        FilterBank { layers }
    }
}

const GAUSSIAN: Kernel = [
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    4.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
    2.0 / 16.0,
    1.0 / 16.0,
];

fn scaled(k: &Kernel, s: f64) -> Kernel {
    k.map(|v| v * s)
}

fn base_kernels() -> Vec<Kernel> {
    let sobel_x = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
    let sobel_y = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
    let diag_a = [0.0, 1.0, 2.0, -1.0, 0.0, 1.0, -2.0, -1.0, 0.0];
    let diag_b = [-2.0, -1.0, 0.0, -1.0, 0.0, 1.0, 0.0, 1.0, 2.0];
    let lap4 = [0.0, -1.0, 0.0, -1.0, 4.0, -1.0, 0.0, -1.0, 0.0];
    let lap8 = [-1.0, -1.0, -1.0, -1.0, 8.0, -1.0, -1.0, -1.0, -1.0];
    let line_h = [-1.0, -1.0, -1.0, 2.0, 2.0, 2.0, -1.0, -1.0, -1.0];
    let line_v = [-1.0, 2.0, -1.0, -1.0, 2.0, -1.0, -1.0, 2.0, -1.0];
    let boxf = [1.0 / 9.0; 9];
    let mut out = Vec::with_capacity(16);
    for k in [sobel_x, sobel_y, diag_a, diag_b] {
        out.push(scaled(&k, 0.5));
        out.push(scaled(&k, -0.5));
    }
    out.push(lap4);
    out.push(scaled(&lap4, -1.0));
    out.push(scaled(&lap8, 0.5));
    out.push(scaled(&lap8, -0.5));
    out.push(scaled(&line_h, 0.5));
    out.push(scaled(&line_v, 0.5));
    out.push(GAUSSIAN);
    out.push(boxf);
    out
}

#[inline]
pub fn leaky(t: f64, slope: f64) -> f64 {
    if t >= 0.0 {
        t
    } else {
        slope * t
    }
}

fn correlate_into(out: &mut [f64], plane: &[f64], w: usize, h: usize, k: &Kernel) {
    for y in 0..h {
        for dy in 0..3 {
            let sy = y as isize + dy as isize - 1;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            let row = &plane[sy as usize * w..(sy as usize + 1) * w];
            let orow = &mut out[y * w..(y + 1) * w];
            let (k0, k1, k2) = (k[dy * 3], k[dy * 3 + 1], k[dy * 3 + 2]);
            if k0 == 0.0 && k1 == 0.0 && k2 == 0.0 {
                continue;
            }
            for x in 0..w {
                let mut acc = k1 * row[x];
                if x > 0 {
                    acc += k0 * row[x - 1];
                }
                if x + 1 < w {
                    acc += k2 * row[x + 1];
                }
                orow[x] += acc;
            }
        }
    }
}

/// Pre-activation cross-correlation of `input` with every filter in `spec`.
pub fn cross_correlate(input: &FeatureTensor, spec: &LayerSpec) -> Result<Vec<Vec<f64>>> {
    let expected = spec.input_channels();
    if expected != input.num_channels() {
        return Err(Error::ChannelMismatch {
            expected,
            got: input.num_channels(),
        });
    }
    let (w, h) = (input.width, input.height);
    Ok(spec
        .filters
        .par_iter()
        .map(|f| {
            let mut out = vec![0.0; w * h];
            for (plane, k) in input.channels.iter().zip(&f.kernels) {
                correlate_into(&mut out, plane, w, h, k);
            }
            out
        })
        .collect())
}

/// Convolution layer: same-size cross-correlation followed by leaky activation.
pub fn conv_layer(input: &FeatureTensor, spec: &LayerSpec, layer: usize) -> Result<FeatureTensor> {
    let mut maps = cross_correlate(input, spec)?;
    for m in &mut maps {
        for v in m.iter_mut() {
            *v = leaky(*v, spec.slope);
        }
    }
    FeatureTensor::new(layer, input.width, input.height, maps)
}

/// 2x2 stride-2 max-pool; an odd trailing row or column is dropped.
pub fn max_pool(input: &FeatureTensor) -> Result<FeatureTensor> {
    let (w, h) = (input.width, input.height);
    if w < 2 || h < 2 {
        return Err(Error::Dimensions {
            width: w,
            height: h,
            reason: "max-pool needs at least one 2x2 window",
        });
    }
    let (ow, oh) = (w / 2, h / 2);
    let maps = input
        .channels
        .iter()
        .map(|m| {
            let mut out = Vec::with_capacity(ow * oh);
            for y in 0..oh {
                let r0 = &m[2 * y * w..];
                let r1 = &m[(2 * y + 1) * w..];
                for x in 0..ow {
                    out.push(r0[2 * x].max(r0[2 * x + 1]).max(r1[2 * x]).max(r1[2 * x + 1]));
                }
            }
            out
        })
        .collect();
    FeatureTensor::new(input.layer, ow, oh, maps)
}

/// Runs rescale, then conv (and pool where flagged) up to `stop_layer`.
///
/// The returned tensor is the activated output of `stop_layer`'s convolution,
/// taken before that layer's own pool. Its `ScaleInfo` carries the layer's
/// dimension `C_l = c1 / 2^pools` and the actual map size.
pub fn run_stack(img: &Image, bank: &FilterBank, stop_layer: usize, c1: usize) -> Result<(FeatureTensor, ScaleInfo)> {
    if stop_layer == 0 || stop_layer > bank.depth() {
        return Err(Error::LayerOutOfRange {
            layer: stop_layer,
            depth: bank.depth(),
        });
    }
    img.ensure_pipeline_size()?;
    let (scaled, _) = rescale_keep_aspect(img, c1)?;
    let mut t = FeatureTensor::from_image(&scaled);
    for (idx, spec) in bank.layers.iter().enumerate().take(stop_layer) {
        let l = idx + 1;
        if l > 1 && bank.layers[idx - 1].pool {
            t = max_pool(&t)?;
        }
        t = conv_layer(&t, spec, l)?;
    }
    let pools = bank.pools_before(stop_layer);
    let layer_dim = c1 as f64 / (1u64 << pools) as f64;
    let mut info = ScaleInfo::new(stop_layer, layer_dim, img.width(), img.height());
    info.width = t.width();
    info.height = t.height();
    Ok((t, info))
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: Kernel = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];

    fn single(k: Kernel, slope: f64) -> LayerSpec {
        LayerSpec {
            slope,
            pool: false,
            filters: vec![Filter { kernels: vec![k] }],
        }
    }

    fn ramp(w: usize, h: usize) -> FeatureTensor {
        let plane = (0..w * h).map(|i| (i % 7) as f64 * 0.3 - 0.5).collect();
        FeatureTensor::new(0, w, h, vec![plane]).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_nonnegative_input() {
        let plane: Vec<f64> = (0..35).map(|i| i as f64 * 0.1).collect();
        let t = FeatureTensor::new(0, 7, 5, vec![plane.clone()]).unwrap();
        let out = conv_layer(&t, &single(IDENTITY, 0.1), 1).unwrap();
        assert_eq!(out.channel(0), &plane[..]);
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let out = conv_layer(&ramp(8, 8), &single([0.0; 9], 0.1), 1).unwrap();
        assert!(out.channel(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_input_interior_is_value_times_kernel_sum() {
        let k = [0.1, 0.2, 0.3, 0.0, 0.5, 0.1, 0.2, 0.0, 0.4];
        let ksum: f64 = k.iter().sum();
        let t = FeatureTensor::new(0, 6, 6, vec![vec![0.7; 36]]).unwrap();
        let out = conv_layer(&t, &single(k, 0.1), 1).unwrap();
        for y in 1..5 {
            for x in 1..5 {
                assert!((out.channel(0)[y * 6 + x] - 0.7 * ksum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn leaky_negative_side() {
        assert_eq!(leaky(-2.0, 0.1), -0.2);
        assert_eq!(leaky(3.0, 0.1), 3.0);
        let t = FeatureTensor::new(0, 2, 2, vec![vec![-1.0; 4]]).unwrap();
        let out = conv_layer(&t, &single(IDENTITY, 0.25), 1).unwrap();
        assert!(out.channel(0).iter().all(|&v| v == -0.25));
    }

    #[test]
    fn channel_mismatch_is_reported() {
        let spec = LayerSpec {
            slope: 0.1,
            pool: false,
            filters: vec![Filter {
                kernels: vec![IDENTITY, IDENTITY],
            }],
        };
        assert!(matches!(
            conv_layer(&ramp(4, 4), &spec, 1),
            Err(Error::ChannelMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn pool_cases() {
        let t = FeatureTensor::new(0, 2, 2, vec![vec![1.0, 2.0, 3.0, 4.0]]).unwrap();
        assert_eq!(max_pool(&t).unwrap().channel(0), &[4.0]);
        let c = FeatureTensor::new(0, 6, 4, vec![vec![2.5; 24]]).unwrap();
        let p = max_pool(&c).unwrap();
        assert_eq!((p.width(), p.height()), (3, 2));
        assert!(p.channel(0).iter().all(|&v| v == 2.5));
        let five = ramp(5, 5);
        let p = max_pool(&five).unwrap();
        assert_eq!((p.width(), p.height()), (2, 2));
        // windowed brute force
        for oy in 0..2 {
            for ox in 0..2 {
                let mut m = f64::NEG_INFINITY;
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    m = m.max(five.channel(0)[(2 * oy + dy) * 5 + 2 * ox + dx]);
                }
                assert_eq!(p.channel(0)[oy * 2 + ox], m);
            }
        }
        let tiny = FeatureTensor::new(0, 1, 4, vec![vec![0.0; 4]]).unwrap();
        assert!(max_pool(&tiny).is_err());
    }

    #[test]
    fn default_bank_is_valid_and_roundtrips_json() {
        let bank = FilterBank::default_bank();
        bank.validate().unwrap();
        assert_eq!(bank.depth(), 7);
        assert_eq!(bank.pools_before(1), 0);
        assert_eq!(bank.pools_before(3), 2);
        assert_eq!(bank.pools_before(7), 3);
        let back = FilterBank::from_json(&bank.to_json()).unwrap();
        assert_eq!(back, bank);
    }

    #[test]
    fn bank_json_defaults_and_errors() {
        let b = FilterBank::from_json(r#"{"layers":[{"filters":[[[0,0,0,0,1,0,0,0,0]]]}]}"#).unwrap();
        assert_eq!(b.layers[0].slope, DEFAULT_SLOPE);
        assert!(!b.layers[0].pool);
        assert!(FilterBank::from_json(r#"{"layers":[{"filters":[[[0,0,0,0,1,0,0,0]]]}]}"#).is_err());
        assert!(FilterBank::from_json(r#"{"layers":[{"slope":1.0,"filters":[[[0,0,0,0,1,0,0,0,0]]]}]}"#).is_err());
        assert!(FilterBank::from_json(r#"{"layers":[{"filters":[]}]}"#).is_err());
        assert!(FilterBank::from_json(r#"{"layers":[]}"#).is_err());
        // second layer must see one kernel per first-layer filter
        let bad = r#"{"layers":[{"filters":[[[0,0,0,0,1,0,0,0,0]],[[0,0,0,0,1,0,0,0,0]]]},
                                {"filters":[[[0,0,0,0,1,0,0,0,0]]]}]}"#;
        assert!(FilterBank::from_json(bad).is_err());
    }

    #[test]
    fn run_stack_dimensions() {
        let img = Image::from_fn(416, 416, |x, y| ((x ^ y) & 0xff) as u8).unwrap();
        let bank = FilterBank::default_bank();
        let (t1, s1) = run_stack(&img, &bank, 1, 416).unwrap();
        assert_eq!((t1.width(), t1.height(), t1.num_channels()), (416, 416, 16));
        assert_eq!(s1.scale, 1.0);
        let (t3, s3) = run_stack(&img, &bank, 3, 416).unwrap();
        assert_eq!((t3.width(), t3.height()), (104, 104));
        assert_eq!(s3.layer_dim, 104.0);
        assert!((s3.scale - 0.25).abs() < 1e-15);
        let (t7, _) = run_stack(&img, &bank, 7, 416).unwrap();
        assert_eq!((t7.width(), t7.height()), (52, 52));
        assert!(matches!(
            run_stack(&img, &bank, 8, 416),
            Err(Error::LayerOutOfRange { .. })
        ));
        assert!(matches!(
            run_stack(&img, &bank, 0, 416),
            Err(Error::LayerOutOfRange { .. })
        ));
    }

    #[test]
    fn identity_bank_returns_rescaled_image() {
        let bank = FilterBank::new(vec![single(IDENTITY, 0.1)]).unwrap();
        let img = Image::from_fn(40, 30, |x, y| (x * 5 + y * 2) as u8).unwrap();
        let (t, info) = run_stack(&img, &bank, 1, 40).unwrap();
        assert_eq!((info.width, info.height), (40, 30));
        let expect: Vec<f64> = img.data().iter().map(|&v| f64::from(v) / 255.0).collect();
        assert_eq!(t.channel(0), &expect[..]);
    }
}
