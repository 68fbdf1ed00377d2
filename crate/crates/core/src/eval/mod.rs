//! Evaluation: BD metrics, rate accuracy and corpus sweeps.

pub mod accuracy;
pub mod bd;
pub mod sweep;

pub use accuracy::{delta_bpp, AccuracyStats};
pub use bd::{bd_quality, bd_rate, BdMethod, RdCurve, RdPoint};
pub use sweep::{
    anchor_model, anchor_samples, calibrate_model, encode_rate_controlled, load_corpus, local_model, sweep,
    Calibration, CorpusImage, Metric, Mode, RateModel, RunPoint, SweepReport,
};
