//! Bjøntegaard-delta rate and quality differences between RD curves.
//!
//! The rate difference fits `ln(rate)` as a function of quality for each
//! curve, integrates both fits over the common quality interval and reports
//! `100 * (exp(mean difference) - 1)`. Negative values mean the test curve
//! needs fewer bits for the same quality.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const MIN_POINTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdPoint {
    pub rate: f64,
    pub quality: f64,
}

/// At least four points with strictly increasing rate and non-decreasing
/// quality.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(mut points: Vec<RdPoint>) -> Result<Self> {
        if points.len() < MIN_POINTS {
            return Err(Error::Curve(format!(
                "{} points, need at least {MIN_POINTS}",
                points.len()
            )));
        }
        if points
            .iter()
            .any(|p| !(p.rate > 0.0) || !p.rate.is_finite() || !p.quality.is_finite())
        {
            return Err(Error::Curve("rates must be positive and values finite".into()));
        }
        points.sort_by(|a, b| a.rate.total_cmp(&b.rate));
        for w in points.windows(2) {
            if w[1].rate <= w[0].rate {
                return Err(Error::Curve("duplicate rate".into()));
            }
            if w[1].quality < w[0].quality {
                return Err(Error::Curve("quality decreases with rate".into()));
            }
        }
        Ok(RdCurve { points })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        RdCurve::new(pairs.iter().map(|&(rate, quality)| RdPoint { rate, quality }).collect())
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    fn quality_range(&self) -> (f64, f64) {
        (self.points[0].quality, self.points[self.points.len() - 1].quality)
    }

    fn log_rate_range(&self) -> (f64, f64) {
        (self.points[0].rate.ln(), self.points[self.points.len() - 1].rate.ln())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BdMethod {
    /// Least-squares cubic polynomial over the whole curve.
    #[default]
    Cubic,
    /// Monotone piecewise-cubic Hermite interpolation.
    Pchip,
}

impl std::str::FromStr for BdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cubic" => Ok(BdMethod::Cubic),
            "pchip" => Ok(BdMethod::Pchip),
            other => Err(Error::InvalidArgument(format!("unknown BD method {other:?}"))),
        }
    }
}

/// Cubic polynomial in a normalised variable `t = (x - shift) / scale`.
struct Cubic {
    coef: [f64; 4],
    shift: f64,
    scale: f64,
}

impl Cubic {
    fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let mut distinct: Vec<f64> = xs.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 4 {
            return Err(Error::Curve(
                "degenerate fit: fewer than four distinct abscissae".into(),
            ));
        }
        let lo = distinct[0];
        let hi = distinct[distinct.len() - 1];
        let shift = 0.5 * (lo + hi);
        let scale = 0.5 * (hi - lo);
        let n = xs.len();
        let v = DMatrix::from_fn(n, 4, |r, c| ((xs[r] - shift) / scale).powi(c as i32));
        let y = DVector::from_column_slice(ys);
        let svd = v.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > smax * 1e-12) {
            return Err(Error::Curve("degenerate fit: ill-conditioned".into()));
        }
        let sol = svd
            .solve(&y, 0.0)
            .map_err(|e| Error::Curve(format!("degenerate fit: {e}")))?;
        Ok(Cubic {
            coef: [sol[0], sol[1], sol[2], sol[3]],
            shift,
            scale,
        })
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let prim = |x: f64| {
            let t = (x - self.shift) / self.scale;
            self.coef[0] * t
                + self.coef[1] * t * t / 2.0
                + self.coef[2] * t.powi(3) / 3.0
                + self.coef[3] * t.powi(4) / 4.0
        };
        self.scale * (prim(b) - prim(a))
    }
}

/// Fritsch-Carlson monotone cubic Hermite interpolant.
struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Pchip {
    fn new(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let n = xs.len();
        for w in xs.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Curve("degenerate fit: abscissae not strictly increasing".into()));
            }
        }
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut ds = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                ds[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
            let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
            if d.signum() != d0.signum() {
                0.0
            } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
                3.0 * d0
            } else {
                d
            }
        };
        ds[0] = end(h[0], h[1], delta[0], delta[1]);
        ds[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Ok(Pchip {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            ds,
        })
    }

    /// Integral of the segment-`i` Hermite cubic from its left end to `x`.
    fn partial(&self, i: usize, x: f64) -> f64 {
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1, d0, d1) = (self.ys[i], self.ys[i + 1], self.ds[i], self.ds[i + 1]);
        // integrals of the Hermite basis from 0 to t
        let t2 = t * t;
        let t3 = t2 * t;
        let t4 = t3 * t;
        let h00 = t4 / 2.0 - t3 + t;
        let h10 = t4 / 4.0 - 2.0 * t3 / 3.0 + t2 / 2.0;
        let h01 = -t4 / 2.0 + t3;
        let h11 = t4 / 4.0 - t3 / 3.0;
        h * (y0 * h00 + h * d0 * h10 + y1 * h01 + h * d1 * h11)
    }

    fn integral(&self, a: f64, b: f64) -> f64 {
        let prim = |x: f64| {
            let mut acc = 0.0;
            for i in 0..self.xs.len() - 1 {
                if x >= self.xs[i + 1] {
                    acc += self.partial(i, self.xs[i + 1]);
                } else {
                    acc += self.partial(i, x.max(self.xs[i]));
                    break;
                }
            }
            acc
        };
        prim(b) - prim(a)
    }
}

fn integrate(method: BdMethod, xs: &[f64], ys: &[f64], a: f64, b: f64) -> Result<f64> {
    match method {
        BdMethod::Cubic => Ok(Cubic::fit(xs, ys)?.integral(a, b)),
        BdMethod::Pchip => Ok(Pchip::new(xs, ys)?.integral(a, b)),
    }
}

fn overlap((a0, a1): (f64, f64), (b0, b1): (f64, f64)) -> Result<(f64, f64)> {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if !(hi > lo) {
        return Err(Error::Curve("curves do not overlap".into()));
    }
    Ok((lo, hi))
}

/// Average rate difference of `test` against `anchor` at equal quality, in percent.
pub fn bd_rate(anchor: &RdCurve, test: &RdCurve, method: BdMethod) -> Result<f64> {
    let (lo, hi) = overlap(anchor.quality_range(), test.quality_range())?;
    let side = |c: &RdCurve| -> Result<f64> {
        let q: Vec<f64> = c.points.iter().map(|p| p.quality).collect();
        let r: Vec<f64> = c.points.iter().map(|p| p.rate.ln()).collect();
        integrate(method, &q, &r, lo, hi)
    };
    let diff = (side(test)? - side(anchor)?) / (hi - lo);
    Ok(100.0 * (diff.exp() - 1.0))
}

/// Average quality difference of `test` against `anchor` at equal rate.
pub fn bd_quality(anchor: &RdCurve, test: &RdCurve, method: BdMethod) -> Result<f64> {
    let (lo, hi) = overlap(anchor.log_rate_range(), test.log_rate_range())?;
    let side = |c: &RdCurve| -> Result<f64> {
        let r: Vec<f64> = c.points.iter().map(|p| p.rate.ln()).collect();
        let q: Vec<f64> = c.points.iter().map(|p| p.quality).collect();
        integrate(method, &r, &q, lo, hi)
    };
    Ok((side(test)? - side(anchor)?) / (hi - lo))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor() -> RdCurve {
        RdCurve::from_pairs(&[(100.0, 30.0), (180.0, 33.0), (320.0, 36.5), (600.0, 40.0)]).unwrap()
    }

    fn scaled(c: &RdCurve, f: f64) -> RdCurve {
        RdCurve::new(
            c.points()
                .iter()
                .map(|p| RdPoint {
                    rate: p.rate * f,
                    quality: p.quality,
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identity_is_zero() {
        for m in [BdMethod::Cubic, BdMethod::Pchip] {
            assert_eq!(bd_rate(&anchor(), &anchor(), m).unwrap(), 0.0);
            assert_eq!(bd_quality(&anchor(), &anchor(), m).unwrap(), 0.0);
        }
    }

    #[test]
    fn constant_rate_ratio() {
        for m in [BdMethod::Cubic, BdMethod::Pchip] {
            let v = bd_rate(&anchor(), &scaled(&anchor(), 1.1), m).unwrap();
            assert!((v - 10.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn pchip_and_cubic_agree_on_smooth_curves() {
        let a = anchor();
        let t = RdCurve::from_pairs(&[(90.0, 30.2), (170.0, 33.4), (300.0, 36.6), (580.0, 40.3)]).unwrap();
        let c = bd_rate(&a, &t, BdMethod::Cubic).unwrap();
        let p = bd_rate(&a, &t, BdMethod::Pchip).unwrap();
        assert!(c < 0.0 && p < 0.0);
        assert!((c - p).abs() < 1.5, "{c} vs {p}");
    }

    #[test]
    fn curve_validation() {
        assert!(RdCurve::from_pairs(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(RdCurve::from_pairs(&[(1.0, 1.0), (1.0, 2.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
        assert!(RdCurve::from_pairs(&[(1.0, 5.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
        assert!(RdCurve::from_pairs(&[(0.0, 1.0), (2.0, 2.0), (3.0, 3.0), (4.0, 4.0)]).is_err());
        // unsorted input is accepted and sorted
        let c = RdCurve::from_pairs(&[(4.0, 4.0), (1.0, 1.0), (3.0, 3.0), (2.0, 2.0)]).unwrap();
        assert_eq!(c.points()[0].rate, 1.0);
    }

    #[test]
    fn no_overlap_and_degenerate() {
        let a = anchor();
        let far = RdCurve::from_pairs(&[(1.0, 50.0), (2.0, 51.0), (3.0, 52.0), (4.0, 53.0)]).unwrap();
        assert!(bd_rate(&a, &far, BdMethod::Cubic).is_err());
        let flat = RdCurve::from_pairs(&[(100.0, 30.0), (200.0, 30.0), (300.0, 40.0), (400.0, 40.0)]).unwrap();
        assert!(bd_rate(&a, &flat, BdMethod::Cubic).is_err());
        assert!(bd_rate(&a, &flat, BdMethod::Pchip).is_err());
    }

    #[test]
    fn method_parse() {
        assert_eq!("pchip".parse::<BdMethod>().unwrap(), BdMethod::Pchip);
        assert!("linear".parse::<BdMethod>().is_err());
    }
}
