//! Corpus sweeps: fixed-QP anchors, then uniform and importance-guided
//! rate control at the anchors' bit counts.

use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::codec::{encode_image, psnr, weighted_psnr_with, EncodeOutput, QpSource};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::features::FilterBank;
use crate::grid::BlockGeometry;
use crate::image::{load_image, Image};
use crate::importance::{block_importance, importance_from_image, BlockImportanceGrid, ImportanceMap};
use crate::rate_control::{RLambdaModel, RateControlParams, RateControlSession};

use super::accuracy::{delta_bpp, AccuracyStats};
use super::bd::{bd_quality, bd_rate, BdMethod, RdCurve, RdPoint};

/// Quality values are capped here when building curves so lossless points
/// (infinite PSNR) stay usable.
pub const QUALITY_CAP_DB: f64 = 100.0;

#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub name: String,
    pub image: Image,
}

/// Loads every `.pgm` (and `.png`) file in `dir`, sorted by file name.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<Vec<CorpusImage>> {
    let dir = dir.as_ref();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no PGM/PNG images in {}",
            dir.display()
        )));
    }
    paths
        .into_iter()
        .map(|p| {
            Ok(CorpusImage {
                name: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                image: load_image(&p)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// Fixed QP.
    Anchor,
    /// Rate control with equal importance per pixel.
    UniformRc,
    /// Rate control guided by the importance map of a layer.
    GuidedRc(usize),
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Anchor => f.write_str("anchor"),
            Mode::UniformRc => f.write_str("uniform-rc"),
            Mode::GuidedRc(l) => write!(f, "guided-rc-l{l}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Psnr,
    /// Importance-weighted PSNR, the detection-accuracy proxy.
    WeightedPsnr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunPoint {
    pub image: usize,
    pub mode: Mode,
    /// Index into the anchor QP list this point belongs to.
    pub point: usize,
    pub anchor_qp: i32,
    /// Budget handed to rate control; `None` for anchors.
    pub target_bits: Option<f64>,
    pub bits: u64,
    pub pixels: usize,
    pub psnr: f64,
    pub wpsnr: f64,
}

impl RunPoint {
    pub fn bpp(&self) -> f64 {
        self.bits as f64 / self.pixels as f64
    }

    pub fn quality(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Psnr => self.psnr,
            Metric::WeightedPsnr => self.wpsnr,
        }
        .min(QUALITY_CAP_DB)
    }
}

/// Encodes `img` under rate control with the given block importance.
pub fn encode_rate_controlled(
    img: &Image,
    grid: &BlockImportanceGrid,
    t_bits: f64,
    model: RLambdaModel,
    params: RateControlParams,
    cu_size: usize,
) -> Result<EncodeOutput> {
    let mut session = RateControlSession::new(model, params, grid, t_bits)?;
    encode_image(img, cu_size, QpSource::RateControl(&mut session))
}

struct Prepared {
    geometry: BlockGeometry,
    proxy_weights: Vec<f64>,
    guided: Vec<(usize, BlockImportanceGrid)>,
    anchors: Vec<RunPoint>,
}

#[allow(clippy::too_many_arguments)]
fn measure(
    img: &Image,
    weights: &[f64],
    out: &EncodeOutput,
    image: usize,
    mode: Mode,
    point: usize,
    anchor_qp: i32,
    target_bits: Option<f64>,
) -> Result<RunPoint> {
    Ok(RunPoint {
        image,
        mode,
        point,
        anchor_qp,
        target_bits,
        bits: out.total_bits(),
        pixels: img.pixels(),
        psnr: psnr(img, &out.recon)?,
        wpsnr: weighted_psnr_with(img, &out.recon, weights)?,
    })
}

fn prepare(idx: usize, img: &Image, cfg: &RunConfig, bank: &FilterBank) -> Result<Prepared> {
    let geometry = BlockGeometry::new(img.width(), img.height(), cfg.cu_size)?;
    let mut maps: Vec<(usize, ImportanceMap)> = Vec::new();
    for &l in cfg.layers.iter().chain(std::iter::once(&cfg.proxy_layer)) {
        if !maps.iter().any(|(ml, _)| *ml == l) {
            maps.push((l, importance_from_image(img, bank, l, cfg.input_dim)?));
        }
    }
    let proxy = &maps
        .iter()
        .find(|(l, _)| *l == cfg.proxy_layer)
        .expect("proxy map computed")
        .1;
    let proxy_weights = proxy.resample(img.width(), img.height());
    let guided = cfg
        .layers
        .iter()
        .map(|&l| {
            let map = &maps.iter().find(|(ml, _)| *ml == l).expect("layer map computed").1;
            Ok((l, block_importance(map, &geometry)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let anchors = cfg
        .anchor_qps
        .iter()
        .enumerate()
        .map(|(p, &qp)| {
            let out = encode_image(img, cfg.cu_size, QpSource::Fixed(qp))?;
            measure(img, &proxy_weights, &out, idx, Mode::Anchor, p, qp, None)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Prepared {
        geometry,
        proxy_weights,
        guided,
        anchors,
    })
}

fn rc_runs(idx: usize, img: &Image, prep: &Prepared, cfg: &RunConfig, model: &RateModel) -> Result<Vec<RunPoint>> {
    let flat = BlockImportanceGrid::flat(prep.geometry);
    let mut out = Vec::new();
    for a in &prep.anchors {
        let t = a.bits as f64;
        let model = model.for_bpp(t / img.pixels() as f64);
        let mut grids: Vec<(Mode, &BlockImportanceGrid)> = vec![(Mode::UniformRc, &flat)];
        grids.extend(prep.guided.iter().map(|(l, g)| (Mode::GuidedRc(*l), g)));
        for (mode, grid) in grids {
            let enc = encode_rate_controlled(img, grid, t, model, cfg.params, cfg.cu_size)?;
            out.push(measure(
                img,
                &prep.proxy_weights,
                &enc,
                idx,
                mode,
                a.point,
                a.anchor_qp,
                Some(t),
            )?);
        }
    }
    Ok(out)
}

/// Where the rate model used by rate-controlled encodes comes from.
///
/// When a fit is impossible the next coarser source is used: image, then
/// corpus, then the configured constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Calibration {
    /// Configured constants as-is.
    None,
    /// One `a`, `b` fit over every anchor encode in the corpus.
    Corpus,
    /// `a`, `b` fit to each image's own anchor encodes.
    Image,
    /// Per target: `a`, `b` through the two anchors of the image that bracket
    /// the target rate (the outermost pair outside the anchor range).
    Local,
}

impl FromStr for Calibration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "false" => Ok(Calibration::None),
            "corpus" => Ok(Calibration::Corpus),
            "image" | "true" => Ok(Calibration::Image),
            "local" => Ok(Calibration::Local),
            other => Err(Error::Config(format!("calibrate: unknown mode {other:?}"))),
        }
    }
}

impl fmt::Display for Calibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Calibration::None => "none",
            Calibration::Corpus => "corpus",
            Calibration::Image => "image",
            Calibration::Local => "local",
        })
    }
}

/// Fits the R-lambda rate model to `(bpp, QP)` pairs of anchor encodes.
pub fn calibrate_model(anchors: &[RunPoint], base: &RLambdaModel) -> Result<RLambdaModel> {
    let samples: Vec<(f64, f64)> = anchors
        .iter()
        .filter(|p| p.mode == Mode::Anchor)
        .map(|p| (p.bpp(), f64::from(p.anchor_qp)))
        .collect();
    RLambdaModel::fit(&samples, base.c1, base.c2)
}

/// Rate model through the two `(bpp, QP)` samples adjacent to `bpp` in rate
/// order. Targets outside the sampled range use the nearest end pair.
pub fn local_model(samples: &[(f64, f64)], bpp: f64, base: &RLambdaModel) -> Result<RLambdaModel> {
    let mut pts: Vec<(f64, f64)> = samples.iter().copied().filter(|p| p.0 > 0.0).collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    pts.dedup_by(|x, y| x.0 == y.0);
    if pts.len() < 3 {
        return RLambdaModel::fit(&pts, base.c1, base.c2);
    }
    let k = pts.partition_point(|p| p.0 < bpp).clamp(1, pts.len() - 1);
    RLambdaModel::fit(&pts[k - 1..=k], base.c1, base.c2)
}

/// Where each rate-controlled encode of one image takes its model from.
#[derive(Debug, Clone)]
pub enum RateModel {
    Fixed(RLambdaModel),
    /// [`local_model`] over these `(bpp, QP)` samples, else `fallback`.
    Local {
        samples: Vec<(f64, f64)>,
        fallback: RLambdaModel,
    },
}

impl RateModel {
    pub fn for_bpp(&self, bpp: f64) -> RLambdaModel {
        match self {
            RateModel::Fixed(m) => *m,
            RateModel::Local { samples, fallback } => local_model(samples, bpp, fallback).unwrap_or(*fallback),
        }
    }
}

/// Fixed-QP `(bpp, QP)` samples of `img` at `qps`.
pub fn anchor_samples(img: &Image, cu_size: usize, qps: &[i32]) -> Result<Vec<(f64, f64)>> {
    qps.iter()
        .map(|&qp| Ok((encode_image(img, cu_size, QpSource::Fixed(qp))?.bpp(), f64::from(qp))))
        .collect()
}

/// Fits the rate model to fixed-QP encodes of `images` at `qps`, falling back
/// to `base` when the fit is impossible.
pub fn anchor_model(images: &[&Image], cu_size: usize, qps: &[i32], base: &RLambdaModel) -> Result<RLambdaModel> {
    let mut samples = Vec::with_capacity(images.len() * qps.len());
    for img in images {
        samples.extend(anchor_samples(img, cu_size, qps)?);
    }
    Ok(RLambdaModel::fit(&samples, base.c1, base.c2).unwrap_or(*base))
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub images: Vec<String>,
    pub pixels: Vec<usize>,
    pub layers: Vec<usize>,
    pub proxy_layer: usize,
    pub anchor_qps: Vec<i32>,
    /// Rate model used for each image's rate-controlled encodes; under
    /// [`Calibration::Local`] the whole-image fit, which is only a fallback.
    pub models: Vec<RLambdaModel>,
    pub calibration: Calibration,
    pub points: Vec<RunPoint>,
}

/// Runs anchors and both rate-control modes over the corpus.
pub fn sweep(corpus: &[CorpusImage], cfg: &RunConfig, bank: &FilterBank) -> Result<SweepReport> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty corpus".into()));
    }
    cfg.validate(bank)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| {
        let prepared = corpus
            .par_iter()
            .enumerate()
            .map(|(i, c)| prepare(i, &c.image, cfg, bank))
            .collect::<Result<Vec<_>>>()?;
        let anchors: Vec<RunPoint> = prepared.iter().flat_map(|p| p.anchors.clone()).collect();
        // A fit that is impossible (e.g. equal anchor rates) falls back to the
        // next coarser model.
        let corpus_model = || calibrate_model(&anchors, &cfg.model).unwrap_or(cfg.model);
        let models = match cfg.calibrate {
            Calibration::None => vec![cfg.model; corpus.len()],
            Calibration::Corpus => vec![corpus_model(); corpus.len()],
            Calibration::Image | Calibration::Local => prepared
                .iter()
                .map(|p| calibrate_model(&p.anchors, &cfg.model).unwrap_or_else(|_| corpus_model()))
                .collect(),
        };
        let rate_models: Vec<RateModel> = prepared
            .iter()
            .zip(&models)
            .map(|(p, &m)| match cfg.calibrate {
                Calibration::Local => RateModel::Local {
                    samples: p.anchors.iter().map(|a| (a.bpp(), f64::from(a.anchor_qp))).collect(),
                    fallback: m,
                },
                _ => RateModel::Fixed(m),
            })
            .collect();
        let rc = corpus
            .par_iter()
            .zip(prepared.par_iter())
            .enumerate()
            .map(|(i, (c, p))| rc_runs(i, &c.image, p, cfg, &rate_models[i]))
            .collect::<Result<Vec<_>>>()?;
        let mut points = anchors;
        points.extend(rc.into_iter().flatten());
        Ok(SweepReport {
            images: corpus.iter().map(|c| c.name.clone()).collect(),
            pixels: corpus.iter().map(|c| c.image.pixels()).collect(),
            layers: cfg.layers.clone(),
            proxy_layer: cfg.proxy_layer,
            anchor_qps: cfg.anchor_qps.clone(),
            models,
            calibration: cfg.calibrate,
            points,
        })
    })
}

/// One row of the comparison table.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub reference: Mode,
    pub test: Mode,
    /// Rate accuracy of `test` against anchor bits; only for anchor rows.
    pub accuracy: Option<AccuracyStats>,
    pub bd_psnr_pooled: Option<f64>,
    pub bd_wpsnr_pooled: Option<f64>,
    /// Mean of per-image BD-rates and the number of images it covers.
    pub bd_psnr_per_image: Option<(f64, usize)>,
    pub bd_wpsnr_per_image: Option<(f64, usize)>,
}

impl SweepReport {
    pub fn modes(&self) -> Vec<Mode> {
        let mut m = vec![Mode::Anchor, Mode::UniformRc];
        m.extend(self.layers.iter().map(|&l| Mode::GuidedRc(l)));
        m
    }

    pub fn points_for(&self, image: usize, mode: Mode) -> Vec<&RunPoint> {
        let mut v: Vec<_> = self
            .points
            .iter()
            .filter(|p| p.image == image && p.mode == mode)
            .collect();
        v.sort_by_key(|p| p.point);
        v
    }

    pub fn curve(&self, image: usize, mode: Mode, metric: Metric) -> Result<RdCurve> {
        RdCurve::new(
            self.points_for(image, mode)
                .iter()
                .map(|p| RdPoint {
                    rate: p.bpp(),
                    quality: p.quality(metric),
                })
                .collect(),
        )
    }

    /// Corpus curve: per anchor QP, total bits over total pixels against
    /// mean quality.
    pub fn pooled_curve(&self, mode: Mode, metric: Metric) -> Result<RdCurve> {
        let total_px: usize = self.pixels.iter().sum();
        let n = self.images.len() as f64;
        let pts = (0..self.anchor_qps.len())
            .map(|k| {
                let sel: Vec<_> = self.points.iter().filter(|p| p.mode == mode && p.point == k).collect();
                RdPoint {
                    rate: sel.iter().map(|p| p.bits as f64).sum::<f64>() / total_px as f64,
                    quality: sel.iter().map(|p| p.quality(metric)).sum::<f64>() / n,
                }
            })
            .collect();
        RdCurve::new(pts)
    }

    /// Paired `(target, achieved)` bits of a rate-controlled mode.
    fn paired(&self, mode: Mode) -> Vec<(f64, f64, usize)> {
        self.points
            .iter()
            .filter(|p| p.mode == mode)
            .filter_map(|p| p.target_bits.map(|t| (t, p.bits as f64, p.pixels)))
            .collect()
    }

    pub fn accuracy(&self, mode: Mode) -> Result<AccuracyStats> {
        let pairs = self.paired(mode);
        let (r, a, n): (Vec<f64>, Vec<f64>, Vec<usize>) =
            pairs
                .into_iter()
                .fold((vec![], vec![], vec![]), |(mut r, mut a, mut n), (t, b, px)| {
                    r.push(t);
                    a.push(b);
                    n.push(px);
                    (r, a, n)
                });
        delta_bpp(&r, &a, &n)
    }

    /// Mean of `|bits - target| / target` over all encodes of `mode`.
    pub fn mean_budget_error(&self, mode: Mode) -> f64 {
        let pairs = self.paired(mode);
        pairs.iter().map(|(t, b, _)| (b - t).abs() / t).sum::<f64>() / pairs.len().max(1) as f64
    }

    pub fn bd_rate_per_image(&self, reference: Mode, test: Mode, metric: Metric, method: BdMethod) -> Vec<Option<f64>> {
        (0..self.images.len())
            .map(|i| {
                let a = self.curve(i, reference, metric).ok()?;
                let t = self.curve(i, test, metric).ok()?;
                bd_rate(&a, &t, method).ok()
            })
            .collect()
    }

    pub fn bd_quality_per_image(
        &self,
        reference: Mode,
        test: Mode,
        metric: Metric,
        method: BdMethod,
    ) -> Vec<Option<f64>> {
        (0..self.images.len())
            .map(|i| {
                let a = self.curve(i, reference, metric).ok()?;
                let t = self.curve(i, test, metric).ok()?;
                bd_quality(&a, &t, method).ok()
            })
            .collect()
    }

    fn compare(&self, reference: Mode, test: Mode, method: BdMethod) -> Comparison {
        let pooled = |m: Metric| -> Option<f64> {
            bd_rate(
                &self.pooled_curve(reference, m).ok()?,
                &self.pooled_curve(test, m).ok()?,
                method,
            )
            .ok()
        };
        let per_image = |m: Metric| -> Option<(f64, usize)> {
            let v: Vec<f64> = self
                .bd_rate_per_image(reference, test, m, method)
                .into_iter()
                .flatten()
                .collect();
            (!v.is_empty()).then(|| (v.iter().sum::<f64>() / v.len() as f64, v.len()))
        };
        Comparison {
            reference,
            test,
            accuracy: (reference == Mode::Anchor).then(|| self.accuracy(test).ok()).flatten(),
            bd_psnr_pooled: pooled(Metric::Psnr),
            bd_wpsnr_pooled: pooled(Metric::WeightedPsnr),
            bd_psnr_per_image: per_image(Metric::Psnr),
            bd_wpsnr_per_image: per_image(Metric::WeightedPsnr),
        }
    }

    /// Anchor vs. uniform RC, anchor vs. each guided layer, uniform RC vs.
    /// each guided layer.
    pub fn comparisons(&self, method: BdMethod) -> Vec<Comparison> {
        let mut rows = vec![self.compare(Mode::Anchor, Mode::UniformRc, method)];
        for &l in &self.layers {
            rows.push(self.compare(Mode::Anchor, Mode::GuidedRc(l), method));
        }
        for &l in &self.layers {
            rows.push(self.compare(Mode::UniformRc, Mode::GuidedRc(l), method));
        }
        rows
    }

    /// Per-encode CSV.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("image,mode,anchor_qp,target_bits,bits,bpp,psnr,wpsnr\n");
        for p in &self.points {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{:.4},{:.4}",
                self.images[p.image],
                p.mode,
                p.anchor_qp,
                p.target_bits.map_or(String::new(), |t| format!("{t:.0}")),
                p.bits,
                p.bpp(),
                p.psnr,
                p.wpsnr
            );
        }
        s
    }

    /// Human-readable summary with the comparison table.
    pub fn summary(&self, method: BdMethod) -> String {
        let fmt_pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:+.2}%"));
        let fmt_avg = |v: Option<(f64, usize)>| v.map_or("n/a".to_string(), |(v, n)| format!("{v:+.2}% ({n})"));
        let mut s = String::new();
        let _ = writeln!(
            s,
            "images: {}  anchor QPs: {:?}  layers: {:?}  wPSNR proxy layer: {}",
            self.images.len(),
            self.anchor_qps,
            self.layers,
            self.proxy_layer
        );
        let _ = writeln!(s, "rate model calibration: {}", self.calibration);
        if self.calibration == Calibration::Local {
            let _ = writeln!(s, "  (per-target pairs; whole-image fits below)");
        }
        for (name, m) in self.images.iter().zip(&self.models) {
            let _ = writeln!(
                s,
                "  {name:<16} a={:.4} b={:.4} c1={:.4} c2={:.4}",
                m.a, m.b, m.c1, m.c2
            );
        }
        let _ = writeln!(
            s,
            "wPSNR is an importance-weighted PSNR used as a detection-accuracy proxy."
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<32} {:>9} {:>9} {:>11} {:>11} {:>16} {:>16}",
            "comparison", "dbpp", "sigma", "BD-PSNR", "BD-wPSNR", "BD-PSNR/img", "BD-wPSNR/img"
        );
        for c in self.comparisons(method) {
            let (d, sd) = c.accuracy.map_or(("-".to_string(), "-".to_string()), |a| {
                (format!("{:.4}", a.delta_bpp), format!("{:.4}", a.sigma_bpp))
            });
            let _ = writeln!(
                s,
                "{:<32} {:>9} {:>9} {:>11} {:>11} {:>16} {:>16}",
                format!("{} vs. {}", c.reference, c.test),
                d,
                sd,
                fmt_pct(c.bd_psnr_pooled),
                fmt_pct(c.bd_wpsnr_pooled),
                fmt_avg(c.bd_psnr_per_image),
                fmt_avg(c.bd_wpsnr_per_image)
            );
        }
        let _ = writeln!(s);
        for m in self.modes().into_iter().skip(1) {
            let _ = writeln!(
                s,
                "mean |bits - target| / target, {m}: {:.4}",
                self.mean_budget_error(m)
            );
        }
        s
    }
}
