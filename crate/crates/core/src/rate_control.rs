//! Block-level bit allocation and rate control.
//!
//! Starting from block importance `I` and a picture budget `T_bits`:
//!
//! 1. coarse bpp per block, `I * T_bits / N_pixels`;
//! 2. slice QP from the picture's average bpp, preliminary block QPs from
//!    the coarse bpp bounded to `QP_s +/- 3`, preliminary bpp by inverting the
//!    model, and `+1` on blocks with zero importance;
//! 3. final importance and block weights from the preliminary bpp;
//! 4. sequential coding: each block's target is the remaining budget plus a
//!    sliding-window correction towards the preliminary estimate, scaled by
//!    the block weight, and is turned into an actual QP bounded to
//!    `QP_s +/- 2` (or `[QP_s, QP_s + 4]` for blocks whose preliminary QP
//!    reached `QP_s + 3`).

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::grid::BlockGeometry;
use crate::importance::BlockImportanceGrid;

pub const QP_MIN: i32 = 0;
pub const QP_MAX: i32 = 51;

#[inline]
pub fn clip_qp(qp: i32) -> i32 {
    qp.clamp(QP_MIN, QP_MAX)
}

/// `lambda = a * bpp^b`, `QP = round(c1 * ln(lambda) + c2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RLambdaModel {
    pub a: f64,
    pub b: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for RLambdaModel {
    fn default() -> Self {
        RLambdaModel {
            a: 3.2003,
            b: -1.367,
            c1: 4.2005,
            c2: 13.7122,
        }
    }
}

impl RLambdaModel {
    pub fn new(a: f64, b: f64, c1: f64, c2: f64) -> Result<Self> {
        let m = RLambdaModel { a, b, c1, c2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::InvalidArgument(format!("model a = {} must be > 0", self.a)));
        }
        if !(self.b < 0.0 && self.b.is_finite()) {
            return Err(Error::InvalidArgument(format!("model b = {} must be < 0", self.b)));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite() && self.c2.is_finite()) {
            return Err(Error::InvalidArgument("model c1 must be > 0 and c2 finite".into()));
        }
        Ok(())
    }

    /// Fits `a` and `b` to observed `(bpp, qp)` pairs, keeping `c1` and `c2`.
    ///
    /// `QP = c1 * (ln a + b ln bpp) + c2` is linear in `ln bpp`; an ordinary
    /// least-squares line through the samples gives slope `c1 * b` and
    /// intercept `c1 * ln a + c2`.
    pub fn fit(samples: &[(f64, f64)], c1: f64, c2: f64) -> Result<Self> {
        let pts: Vec<(f64, f64)> = samples
            .iter()
            .filter(|(bpp, _)| *bpp > 0.0)
            .map(|&(bpp, qp)| (bpp.ln(), qp))
            .collect();
        if pts.len() < 2 {
            return Err(Error::InvalidArgument(
                "model fit needs two positive-rate samples".into(),
            ));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx <= 0.0 {
            return Err(Error::InvalidArgument("model fit needs distinct rates".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        RLambdaModel::new(((intercept - c2) / c1).exp(), slope / c1, c1, c2)
    }

    pub fn lambda_of_bpp(&self, bpp: f64) -> Result<f64> {
        if !(bpp > 0.0) {
            return Err(Error::RateControl(format!(
                "lambda of non-positive rate {bpp}; use the zero-importance path"
            )));
        }
        Ok(self.a * bpp.powf(self.b))
    }

    pub fn qp_of_lambda(&self, lambda: f64) -> Result<i32> {
        if !(lambda > 0.0) {
            return Err(Error::RateControl(format!("QP of non-positive lambda {lambda}")));
        }
        let qp = (self.c1 * lambda.ln() + self.c2).round();
        Ok(qp.clamp(QP_MIN as f64, QP_MAX as f64) as i32)
    }

    pub fn lambda_of_qp(&self, qp: i32) -> f64 {
        ((f64::from(qp) - self.c2) / self.c1).exp()
    }

    /// Rate implied by an integer QP through the unrounded lambda.
    pub fn bpp_of_qp(&self, qp: i32) -> f64 {
        (self.lambda_of_qp(qp) / self.a).powf(1.0 / self.b)
    }

    pub fn qp_of_bpp(&self, bpp: f64) -> Result<i32> {
        self.qp_of_lambda(self.lambda_of_bpp(bpp)?)
    }
}

/// Tunables of the allocation rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateControlParams {
    /// Sliding window `SW` in blocks.
    pub sliding_window: usize,
    /// Preliminary QPs are bounded to `QP_s +/- prelim_band`.
    pub prelim_band: i32,
    /// Actual QPs are bounded to `QP_s +/- actual_band`, or to
    /// `[QP_s, QP_s + 2 * actual_band]` when the preliminary QP reached
    /// `QP_s + prelim_band`.
    pub actual_band: i32,
}

impl Default for RateControlParams {
    fn default() -> Self {
        RateControlParams {
            sliding_window: 4,
            prelim_band: 3,
            actual_band: 2,
        }
    }
}

impl RateControlParams {
    pub fn validate(&self) -> Result<()> {
        if self.sliding_window < 1 {
            return Err(Error::InvalidArgument("sliding window must be >= 1".into()));
        }
        if self.prelim_band < 0 || self.actual_band < 0 {
            return Err(Error::InvalidArgument("QP bands must be non-negative".into()));
        }
        Ok(())
    }

    /// Inclusive `[lo, hi]` band an actual QP must land in.
    pub fn actual_band_for(&self, qp_s: i32, qp_p: i32) -> (i32, i32) {
        if qp_p >= qp_s + self.prelim_band {
            (qp_s, qp_s + 2 * self.actual_band)
        } else {
            (qp_s - self.actual_band, qp_s + self.actual_band)
        }
    }
}

/// `I * T_bits / N_pixels` per block.
pub fn coarse_bpp(importance: &[f64], t_bits: f64, n_pixels: &[usize]) -> Vec<f64> {
    importance
        .iter()
        .zip(n_pixels)
        .map(|(&i, &n)| i * t_bits / n as f64)
        .collect()
}

/// Slice QP from the picture's average rate.
pub fn picture_qp(model: &RLambdaModel, t_bits: f64, total_pixels: usize) -> Result<i32> {
    if !(t_bits > 0.0) {
        return Err(Error::RateControl(format!("picture budget {t_bits} must be > 0")));
    }
    Ok(clip_qp(model.qp_of_bpp(t_bits / total_pixels as f64)?))
}

/// Preliminary `(QP_p, bpp_p)` per block.
///
/// A zero coarse rate maps to the top of the band (its lambda is unbounded).
/// The zero-importance increment is applied last and does not update `bpp_p`.
pub fn preliminary_qp(
    model: &RLambdaModel,
    params: &RateControlParams,
    bpp_coarse: &[f64],
    qp_s: i32,
    importance: &[f64],
) -> Result<Vec<(i32, f64)>> {
    let (lo, hi) = (qp_s - params.prelim_band, qp_s + params.prelim_band);
    bpp_coarse
        .iter()
        .zip(importance)
        .map(|(&bpp, &imp)| {
            let mut qp = if bpp > 0.0 {
                clip_qp(model.qp_of_bpp(bpp)?.clamp(lo, hi))
            } else {
                clip_qp(hi)
            };
            let bpp_p = model.bpp_of_qp(qp);
            if imp == 0.0 {
                qp = clip_qp(qp + 1);
            }
            Ok((qp, bpp_p))
        })
        .collect()
}

fn normalise(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / v.len() as f64; v.len()]
    }
}

/// `bpp_p / sum(bpp_p)`; uniform when every rate is zero.
pub fn final_importance(bpp_p: &[f64]) -> Vec<f64> {
    normalise(bpp_p)
}

/// `I_F / sum(I_F)`.
pub fn block_weights(final_importance: &[f64]) -> Vec<f64> {
    normalise(final_importance)
}

/// Preliminary bits of block `cursor` and every block after it in raster order.
pub fn remaining_bits_estimate(bpp_p: &[f64], n_pixels: &[usize], cursor: usize) -> f64 {
    bpp_p[cursor..]
        .iter()
        .zip(&n_pixels[cursor..])
        .map(|(&b, &n)| b * n as f64)
        .sum()
}

/// Sequential budget state for one picture.
#[derive(Debug, Clone, PartialEq)]
pub struct RateControlState {
    pub t_bits: f64,
    /// Bits left before coding the block at `cursor`.
    pub l_bits: f64,
    /// Blocks left, including the one at `cursor`.
    pub l_blk: usize,
    pub total_blocks: usize,
    pub sliding_window: usize,
    pub qp_s: i32,
    pub cursor: usize,
}

impl RateControlState {
    pub fn new(t_bits: f64, total_blocks: usize, sliding_window: usize, qp_s: i32) -> Result<Self> {
        if sliding_window < 1 {
            return Err(Error::InvalidArgument("sliding window must be >= 1".into()));
        }
        if !(QP_MIN..=QP_MAX).contains(&qp_s) {
            return Err(Error::InvalidArgument(format!("slice QP {qp_s} outside [0, 51]")));
        }
        Ok(RateControlState {
            t_bits,
            l_bits: t_bits,
            l_blk: total_blocks,
            total_blocks,
            sliding_window,
            qp_s,
            cursor: 0,
        })
    }

    /// Records `bits_actual` for the current block and advances the cursor.
    pub fn commit_block(&mut self, bits_actual: f64) -> Result<()> {
        if self.l_blk == 0 {
            return Err(Error::RateControl("commit after the last block".into()));
        }
        self.l_bits -= bits_actual;
        self.l_blk -= 1;
        self.cursor += 1;
        Ok(())
    }
}

/// `{L_bits + L_blk (L_bits - L_est) / SW} * w`, floored at zero.
pub fn target_bits_block(state: &RateControlState, weight: f64, l_bits_est: f64) -> Result<f64> {
    if state.l_blk < 1 {
        return Err(Error::RateControl("no blocks remaining".into()));
    }
    let correction = state.l_blk as f64 * (state.l_bits - l_bits_est) / state.sliding_window as f64;
    Ok(((state.l_bits + correction) * weight).max(0.0))
}

/// Actual block QP from its target bits, bounded to the active band.
pub fn actual_qp(
    model: &RLambdaModel,
    params: &RateControlParams,
    t_bits_blk: f64,
    n_pixels: usize,
    qp_s: i32,
    qp_p: i32,
) -> Result<i32> {
    if n_pixels < 1 {
        return Err(Error::InvalidArgument("block without pixels".into()));
    }
    let (lo, hi) = params.actual_band_for(qp_s, qp_p);
    let qp = if t_bits_blk > 0.0 {
        model.qp_of_bpp(t_bits_blk / n_pixels as f64)?.clamp(lo, hi)
    } else {
        hi
    };
    Ok(clip_qp(qp))
}

/// Everything known about one block during a rate-controlled encode.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    /// Top-left pixel corner.
    pub i: usize,
    pub j: usize,
    pub n_pixels: usize,
    pub importance: f64,
    pub bpp_coarse: f64,
    pub qp_p: i32,
    pub bpp_p: f64,
    pub final_importance: f64,
    pub weight: f64,
    pub target_bits: f64,
    pub qp_a: i32,
    pub bits_actual: u64,
}

/// One picture's rate-control loop: `next_qp` then `commit` per block.
#[derive(Debug, Clone)]
pub struct RateControlSession {
    model: RLambdaModel,
    params: RateControlParams,
    geometry: BlockGeometry,
    state: RateControlState,
    records: Vec<BlockRecord>,
    /// `est_suffix[k]` = preliminary bits of blocks `k..`.
    est_suffix: Vec<f64>,
    /// `weight_suffix[k]` = sum of weights of blocks `k..`.
    weight_suffix: Vec<f64>,
    pending: bool,
}

impl RateControlSession {
    pub fn new(
        model: RLambdaModel,
        params: RateControlParams,
        grid: &BlockImportanceGrid,
        t_bits: f64,
    ) -> Result<Self> {
        model.validate()?;
        params.validate()?;
        let geometry = grid.geometry;
        let n_pixels = geometry.pixel_counts();
        let total_pixels = geometry.width * geometry.height;
        let qp_s = picture_qp(&model, t_bits, total_pixels)?;
        let importance = grid.values();
        let coarse = coarse_bpp(importance, t_bits, &n_pixels);
        let prelim = preliminary_qp(&model, &params, &coarse, qp_s, importance)?;
        let bpp_p: Vec<f64> = prelim.iter().map(|p| p.1).collect();
        let fin = final_importance(&bpp_p);
        let weights = block_weights(&fin);

        let nb = geometry.len();
        let mut est_suffix = vec![0.0; nb + 1];
        let mut weight_suffix = vec![0.0; nb + 1];
        for k in (0..nb).rev() {
            est_suffix[k] = est_suffix[k + 1] + bpp_p[k] * n_pixels[k] as f64;
            weight_suffix[k] = weight_suffix[k + 1] + weights[k];
        }
        let records = (0..nb)
            .map(|k| {
                let (i, j) = geometry.origin(k);
                BlockRecord {
                    i,
                    j,
                    n_pixels: n_pixels[k],
                    importance: importance[k],
                    bpp_coarse: coarse[k],
                    qp_p: prelim[k].0,
                    bpp_p: prelim[k].1,
                    final_importance: fin[k],
                    weight: weights[k],
                    target_bits: 0.0,
                    qp_a: prelim[k].0,
                    bits_actual: 0,
                }
            })
            .collect();
        Ok(RateControlSession {
            model,
            params,
            geometry,
            state: RateControlState::new(t_bits, nb, params.sliding_window, qp_s)?,
            records,
            est_suffix,
            weight_suffix,
            pending: false,
        })
    }

    pub fn geometry(&self) -> &BlockGeometry {
        &self.geometry
    }

    pub fn state(&self) -> &RateControlState {
        &self.state
    }

    pub fn slice_qp(&self) -> i32 {
        self.state.qp_s
    }

    pub fn records(&self) -> &[BlockRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<BlockRecord> {
        self.records
    }

    pub fn is_finished(&self) -> bool {
        self.state.l_blk == 0
    }

    /// Preliminary bits of the current block and all later ones.
    pub fn remaining_estimate(&self) -> f64 {
        self.est_suffix[self.state.cursor]
    }

    /// Computes target bits and QP for the block at the cursor.
    ///
    /// The block weight is renormalised over the blocks not yet coded, so the
    /// remaining budget is always distributed in full over what is left.
    pub fn next_qp(&mut self) -> Result<(usize, i32)> {
        let k = self.state.cursor;
        if self.state.l_blk == 0 {
            return Err(Error::RateControl("all blocks already coded".into()));
        }
        let rem_weight = self.weight_suffix[k];
        let w = if rem_weight > 0.0 {
            self.records[k].weight / rem_weight
        } else {
            1.0 / self.state.l_blk as f64
        };
        let target = target_bits_block(&self.state, w, self.est_suffix[k])?;
        let rec = &mut self.records[k];
        let qp = actual_qp(
            &self.model,
            &self.params,
            target,
            rec.n_pixels,
            self.state.qp_s,
            rec.qp_p,
        )?;
        rec.target_bits = target;
        rec.qp_a = qp;
        self.pending = true;
        Ok((k, qp))
    }

    pub fn commit(&mut self, bits_actual: u64) -> Result<()> {
        if !self.pending {
            return Err(Error::RateControl("commit without a pending block".into()));
        }
        let k = self.state.cursor;
        self.state.commit_block(bits_actual as f64)?;
        self.records[k].bits_actual = bits_actual;
        self.pending = false;
        Ok(())
    }

    pub fn total_bits(&self) -> u64 {
        self.records.iter().map(|r| r.bits_actual).sum()
    }
}

/// Per-block CSV: `i,j,I,QP_p,T_bits_blk,QP_a,bits_actual`.
pub fn records_to_csv(records: &[BlockRecord]) -> String {
    let mut s = String::from("i,j,I,QP_p,T_bits_blk,QP_a,bits_actual\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{:.12},{},{:.3},{},{}",
            r.i, r.j, r.importance, r.qp_p, r.target_bits, r.qp_a, r.bits_actual
        );
    }
    s
}
