//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Recognised keys:
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `bank` | filter bank JSON path (empty = built-in bank) | built-in |
//! | `layer` | feature layer for importance | 3 |
//! | `layers` | comma-separated layers compared by `sweep` | 1,3,7 |
//! | `proxy_layer` | layer whose map weights wPSNR | 3 |
//! | `input_dim` | longer side after rescale (`C_1`) | 416 |
//! | `cu_size` | coding block size (8 or 16) | 16 |
//! | `model_a`, `model_b`, `model_c1`, `model_c2` | R-lambda constants | 3.2003, -1.367, 4.2005, 13.7122 |
//! | `calibrate` | `none`, `corpus` (one fit over all anchors), `image` (per-image fit) or `local` (per-image, through the two anchors around each target) | local |
//! | `sliding_window` | SW in blocks | 4 |
//! | `prelim_band` | preliminary QP band half-width | 3 |
//! | `actual_band` | actual QP band half-width | 2 |
//! | `anchor_qps` | fixed QPs for anchor encodes | 22,27,32,37 |
//! | `bd_method` | `cubic` or `pchip` | cubic |
//! | `budget_tolerance` | max relative budget miss accepted by `encode` | 0.10 |
//! | `corpus` | directory of PGM images | none |
//! | `output` | output directory | none |
//! | `jobs` | worker threads for `sweep` (0 = all cores) | 0 |

use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::bd::BdMethod;
use crate::eval::sweep::Calibration;
use crate::features::FilterBank;
use crate::rate_control::{RLambdaModel, RateControlParams};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub bank: Option<PathBuf>,
    pub layer: usize,
    pub layers: Vec<usize>,
    pub proxy_layer: usize,
    pub input_dim: usize,
    pub cu_size: usize,
    pub model: RLambdaModel,
    pub calibrate: Calibration,
    pub params: RateControlParams,
    pub anchor_qps: Vec<i32>,
    pub bd_method: BdMethod,
    pub budget_tolerance: f64,
    pub corpus: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub jobs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bank: None,
            layer: 3,
            layers: vec![1, 3, 7],
            proxy_layer: 3,
            input_dim: 416,
            cu_size: 16,
            model: RLambdaModel::default(),
            calibrate: Calibration::Local,
            params: RateControlParams::default(),
            anchor_qps: vec![22, 27, 32, 37],
            bd_method: BdMethod::Cubic,
            budget_tolerance: 0.10,
            corpus: None,
            output: None,
            jobs: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl RunConfig {
    pub fn from_str_config(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_str_config(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "bank" => self.bank = (!value.is_empty()).then(|| PathBuf::from(value)),
            "layer" => self.layer = parse(key, value)?,
            "layers" => self.layers = parse_list(key, value)?,
            "proxy_layer" => self.proxy_layer = parse(key, value)?,
            "input_dim" => self.input_dim = parse(key, value)?,
            "cu_size" => self.cu_size = parse(key, value)?,
            "model_a" => self.model.a = parse(key, value)?,
            "model_b" => self.model.b = parse(key, value)?,
            "model_c1" => self.model.c1 = parse(key, value)?,
            "model_c2" => self.model.c2 = parse(key, value)?,
            "calibrate" => self.calibrate = value.parse()?,
            "sliding_window" => self.params.sliding_window = parse(key, value)?,
            "prelim_band" => self.params.prelim_band = parse(key, value)?,
            "actual_band" => self.params.actual_band = parse(key, value)?,
            "anchor_qps" => self.anchor_qps = parse_list(key, value)?,
            "bd_method" => self.bd_method = value.parse()?,
            "budget_tolerance" => self.budget_tolerance = parse(key, value)?,
            "corpus" => self.corpus = Some(PathBuf::from(value)),
            "output" => self.output = Some(PathBuf::from(value)),
            "jobs" => self.jobs = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn load_bank(&self) -> Result<FilterBank> {
        match &self.bank {
            Some(p) => FilterBank::load(p),
            None => Ok(FilterBank::default_bank()),
        }
    }

    /// Checks value ranges and that layers fit `bank`.
    pub fn validate(&self, bank: &FilterBank) -> Result<()> {
        self.model.validate()?;
        self.params.validate()?;
        if !crate::codec::dct::SUPPORTED_SIZES.contains(&self.cu_size) {
            return Err(Error::Config(format!("cu_size {} must be 8 or 16", self.cu_size)));
        }
        if self.input_dim < crate::image::MIN_PIPELINE_SIDE {
            return Err(Error::Config(format!("input_dim {} below 16", self.input_dim)));
        }
        for &l in self.layers.iter().chain([&self.layer, &self.proxy_layer]) {
            if l == 0 || l > bank.depth() {
                return Err(Error::LayerOutOfRange {
                    layer: l,
                    depth: bank.depth(),
                });
            }
        }
        if self.anchor_qps.is_empty() || self.anchor_qps.iter().any(|q| !(0..=51).contains(q)) {
            return Err(Error::Config("anchor_qps must be non-empty and within [0, 51]".into()));
        }
        if !(self.budget_tolerance >= 0.0) {
            return Err(Error::Config("budget_tolerance must be >= 0".into()));
        }
        if let Some(c) = &self.corpus {
            if !c.is_dir() {
                return Err(Error::Config(format!("corpus {} is not a directory", c.display())));
            }
        }
        Ok(())
    }
}
