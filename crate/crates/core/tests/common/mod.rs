//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use detalloc_core::features::Filter;
use detalloc_core::{BlockGeometry, BlockImportanceGrid, Image, LayerSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut impl Rng, w: usize, h: usize) -> Image {
    let data = (0..w * h).map(|_| rng.gen()).collect();
    Image::new(w, h, data).unwrap()
}

/// Piecewise-smooth image: a few random rectangles plus noise, so the codec
/// sees both flat and busy blocks.
pub fn structured_image(rng: &mut impl Rng, w: usize, h: usize) -> Image {
    let mut plane = vec![rng.gen_range(0.0..255.0); w * h];
    for _ in 0..rng.gen_range(1..6) {
        let (x0, y0) = (rng.gen_range(0..w), rng.gen_range(0..h));
        let (x1, y1) = (rng.gen_range(x0..=w), rng.gen_range(y0..=h));
        let v = rng.gen_range(0.0..255.0);
        for y in y0..y1 {
            for x in x0..x1 {
                plane[y * w + x] = v;
            }
        }
    }
    let amp: f64 = rng.gen_range(0.0..40.0);
    let data = plane
        .iter()
        .map(|&v| (v + rng.gen_range(-amp..=amp)).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::new(w, h, data).unwrap()
}

pub fn random_plane(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_layer(rng: &mut impl Rng, inputs: usize, filters: usize, pool: bool) -> LayerSpec {
    LayerSpec {
        slope: 0.1,
        pool,
        filters: (0..filters)
            .map(|_| Filter {
                kernels: (0..inputs)
                    .map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0)))
                    .collect(),
            })
            .collect(),
    }
}

/// Direct evaluation of same-size 3x3 cross-correlation with zero padding,
/// summed over input channels, before activation.
pub fn conv_oracle(input: &[Vec<f64>], w: usize, h: usize, spec: &LayerSpec) -> Vec<Vec<f64>> {
    spec.filters
        .iter()
        .map(|f| {
            let mut out = vec![0.0; w * h];
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0;
                    for (c, k) in f.kernels.iter().enumerate() {
                        for u in -1..=1isize {
                            for v in -1..=1isize {
                                let (sx, sy) = (x + v, y + u);
                                if sx < 0 || sy < 0 || sx >= w as isize || sy >= h as isize {
                                    continue;
                                }
                                acc += k[((u + 1) * 3 + (v + 1)) as usize] * input[c][(sy as usize) * w + sx as usize];
                            }
                        }
                    }
                    out[y as usize * w + x as usize] = acc;
                }
            }
            out
        })
        .collect()
}

pub fn leaky_oracle(v: f64, slope: f64) -> f64 {
    if v < 0.0 {
        slope * v
    } else {
        v
    }
}

/// 2x2 window maxima; trailing odd row/column dropped.
pub fn pool_oracle(plane: &[f64], w: usize, h: usize) -> (Vec<f64>, usize, usize) {
    let (ow, oh) = (w / 2, h / 2);
    let mut out = Vec::new();
    for y in 0..oh {
        for x in 0..ow {
            let vals = [
                plane[2 * y * w + 2 * x],
                plane[2 * y * w + 2 * x + 1],
                plane[(2 * y + 1) * w + 2 * x],
                plane[(2 * y + 1) * w + 2 * x + 1],
            ];
            out.push(vals.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
    }
    (out, ow, oh)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Random geometry with partial edge blocks allowed.
pub fn random_geometry(rng: &mut impl Rng) -> BlockGeometry {
    let cu = if rng.gen_bool(0.5) { 8 } else { 16 };
    BlockGeometry::new(rng.gen_range(16..200), rng.gen_range(16..200), cu).unwrap()
}

/// Random non-negative block importance summing to one, with some zero blocks.
pub fn random_grid(rng: &mut impl Rng) -> BlockImportanceGrid {
    let geom = random_geometry(rng);
    let zero_frac: f64 = rng.gen_range(0.0..0.5);
    let mut v: Vec<f64> = (0..geom.len())
        .map(|_| {
            if rng.gen_bool(zero_frac) {
                0.0
            } else {
                rng.gen_range(0.0..1.0)
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[0] = 1.0;
    }
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    BlockImportanceGrid::new(geom, v).unwrap()
}

/// Lagrange interpolation of `ys` over `xs` at `x`.
pub fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..xs.len() {
        let mut l = 1.0;
        for j in 0..xs.len() {
            if i != j {
                l *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += ys[i] * l;
    }
    acc
}

/// BD-rate of two 4-point `(rate, quality)` curves by dense composite
/// Simpson integration of the interpolating cubics of log-rate over quality.
pub fn bd_rate_oracle(anchor: &[(f64, f64)], test: &[(f64, f64)]) -> f64 {
    let split = |c: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) {
        (c.iter().map(|p| p.1).collect(), c.iter().map(|p| p.0.ln()).collect())
    };
    let (qa, ra) = split(anchor);
    let (qt, rt) = split(test);
    let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
    let lo = fold(&qa, f64::min, f64::INFINITY).max(fold(&qt, f64::min, f64::INFINITY));
    let hi = fold(&qa, f64::max, f64::NEG_INFINITY).min(fold(&qt, f64::max, f64::NEG_INFINITY));
    let n = 20_000;
    let h = (hi - lo) / n as f64;
    let mut s = 0.0;
    for k in 0..=n {
        let q = lo + k as f64 * h;
        let d = lagrange(&qt, &rt, q) - lagrange(&qa, &ra, q);
        let c = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        s += c * d;
    }
    let mean = s * h / 3.0 / (hi - lo);
    100.0 * (mean.exp() - 1.0)
}

/// Random monotone 4-point curve pair with overlapping quality ranges.
pub fn random_curve_pair(rng: &mut impl Rng) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let mk = |rng: &mut dyn rand::RngCore, q0: f64| {
        let mut rate: f64 = 1000.0 * (1.0 + rand::Rng::gen_range(rng, 0.0..3.0));
        let mut q = q0;
        (0..4)
            .map(|_| {
                let p = (rate, q);
                rate *= rand::Rng::gen_range(rng, 1.3..2.2);
                q += rand::Rng::gen_range(rng, 1.5..4.0);
                p
            })
            .collect::<Vec<_>>()
    };
    let q0 = rng.gen_range(28.0..34.0);
    let a = mk(rng, q0);
    let q1 = q0 + rng.gen_range(-1.5..1.5);
    let b = mk(rng, q1);
    (a, b)
}

/// Mean and population std of `|ref - ach| / pixels`.
pub fn delta_bpp_oracle(r: &[f64], a: &[f64], n: &[usize]) -> (f64, f64) {
    let d: Vec<f64> = (0..r.len()).map(|i| ((r[i] - a[i]) / n[i] as f64).abs()).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / d.len() as f64;
    (mean, var.sqrt())
}

pub fn corpus_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}
