//! Object-importance driven bit allocation for intra image coding.
//!
//! The crate is organised bottom-up:
//!
//! * [`image`] loads and rescales luma planes.
//! * [`features`] runs a small convolution / max-pool stack over an image.
//! * [`importance`] turns one layer of filter responses into a normalised
//!   importance map and a block-wise importance grid.
//! * [`rate_control`] maps block importance and a picture bit budget to
//!   per-block QPs with sequential budget feedback.
//! * [`codec`] is a transform-only intra codec used to close the loop.
//! * [`eval`] holds Bjøntegaard-delta, rate accuracy statistics and corpus
//!   sweeps.

pub mod codec;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod image;
pub mod importance;
pub mod rate_control;

pub use crate::codec::{decode, encode_image, psnr, weighted_psnr, Bitstream, EncodeOutput, QpSource};
pub use crate::config::RunConfig;
pub use crate::error::{Error, Result};
pub use crate::features::{FeatureTensor, FilterBank, LayerSpec};
pub use crate::grid::BlockGeometry;
pub use crate::image::{Image, ScaleInfo};
pub use crate::importance::{BlockImportanceGrid, ImportanceMap};
pub use crate::rate_control::{BlockRecord, RLambdaModel, RateControlParams, RateControlSession};
