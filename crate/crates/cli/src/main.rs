//! `detalloc`: importance maps, importance-guided encoding, decoding, corpus
//! sweeps and BD reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use detalloc_core::eval::{
    anchor_model, anchor_samples, bd_quality, bd_rate, load_corpus, local_model, sweep, BdMethod, Calibration, Metric,
    RdCurve,
};
use detalloc_core::image::{load_image, save_pgm};
use detalloc_core::importance::{block_importance, importance_from_image};
use detalloc_core::rate_control::records_to_csv;
use detalloc_core::{
    decode, encode_image, psnr, Bitstream, BlockGeometry, BlockImportanceGrid, FilterBank, Image, QpSource,
    RLambdaModel, RateControlSession, RunConfig,
};

#[derive(Parser)]
#[command(
    name = "detalloc",
    version,
    about = "Object-importance guided bit allocation for intra images"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the importance map (PGM) and block importance grid (CSV) of an image.
    Importance {
        image: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Encode an image at a fixed QP or under rate control.
    Encode(EncodeArgs),
    /// Decode a bitstream to a PGM.
    Decode {
        bitstream: PathBuf,
        /// Output PGM path.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Anchor, uniform-RC and guided-RC encodes over a corpus with a BD report.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Directory of PGM/PNG images.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Worker threads (0 = all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// BD-rate between two `rate,quality` curve CSV files.
    Bdrate {
        anchor: PathBuf,
        test: PathBuf,
        /// `cubic` or `pchip`.
        #[arg(long)]
        method: Option<BdMethod>,
    },
}

/// Settings shared by the pipeline commands. Flags override the config file.
#[derive(Args, Default)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Filter bank JSON.
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Feature layer used for importance.
    #[arg(long)]
    layer: Option<usize>,
    /// Coding block size (8 or 16).
    #[arg(long)]
    cu_size: Option<usize>,
    /// Longer image side fed to the feature stack.
    #[arg(long)]
    input_dim: Option<usize>,
    /// Output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Any config key, as `key=value`; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct EncodeArgs {
    image: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Fixed QP for every block; importance is not computed.
    #[arg(long, conflicts_with_all = ["target_bits", "target_bpp"])]
    qp: Option<i32>,
    /// Rate-control budget in payload bits.
    #[arg(long, conflicts_with = "target_bpp")]
    target_bits: Option<f64>,
    /// Rate-control budget in bits per pixel.
    #[arg(long)]
    target_bpp: Option<f64>,
    /// Equal importance per pixel instead of the feature map.
    #[arg(long)]
    uniform: bool,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(b) = &self.bank {
            cfg.bank = Some(b.clone());
        }
        if let Some(l) = self.layer {
            cfg.layer = l;
        }
        if let Some(c) = self.cu_size {
            cfg.cu_size = c;
        }
        if let Some(d) = self.input_dim {
            cfg.input_dim = d;
        }
        if let Some(o) = &self.output {
            cfg.output = Some(o.clone());
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .with_context(|| format!("--set {kv:?}: expected key=value"))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }
}

fn prepare(common: &Common) -> Result<(RunConfig, FilterBank, PathBuf)> {
    let cfg = common.config()?;
    let bank = cfg.load_bank()?;
    cfg.validate(&bank)?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    Ok((cfg, bank, out))
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map_or_else(|| "image".into(), |s| s.to_string_lossy().into_owned())
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn cmd_importance(image: &Path, common: &Common) -> Result<()> {
    let (cfg, bank, out) = prepare(common)?;
    let img = load_image(image)?;
    let map = importance_from_image(&img, &bank, cfg.layer, cfg.input_dim)?;
    let grid = block_importance(&map, &BlockGeometry::new(img.width(), img.height(), cfg.cu_size)?)?;
    let name = format!("{}_l{}", stem(image), cfg.layer);
    let map_path = out.join(format!("{name}_importance.pgm"));
    let csv_path = out.join(format!("{name}_blocks.csv"));
    save_pgm(&map.to_image(), &map_path)?;
    write(&csv_path, grid.to_csv())?;
    println!(
        "layer {} map {}x{}{} -> {}, {} blocks -> {}",
        cfg.layer,
        map.width(),
        map.height(),
        if map.is_degenerate() { " (uniform)" } else { "" },
        map_path.display(),
        grid.len(),
        csv_path.display()
    );
    Ok(())
}

/// Rate model for encoding `img` at `bpp` according to the calibration setting.
fn encode_model(img: &Image, cfg: &RunConfig, bpp: f64) -> Result<RLambdaModel> {
    Ok(match cfg.calibrate {
        Calibration::None => cfg.model,
        Calibration::Local => {
            let samples = anchor_samples(img, cfg.cu_size, &cfg.anchor_qps)?;
            let fallback = RLambdaModel::fit(&samples, cfg.model.c1, cfg.model.c2).unwrap_or(cfg.model);
            local_model(&samples, bpp, &fallback).unwrap_or(fallback)
        }
        Calibration::Image => anchor_model(&[img], cfg.cu_size, &cfg.anchor_qps, &cfg.model)?,
        Calibration::Corpus => {
            let dir = cfg
                .corpus
                .as_ref()
                .context("calibrate = corpus needs a corpus directory")?;
            let corpus = load_corpus(dir)?;
            let images: Vec<&Image> = corpus.iter().map(|c| &c.image).collect();
            anchor_model(&images, cfg.cu_size, &cfg.anchor_qps, &cfg.model)?
        }
    })
}

fn cmd_encode(args: &EncodeArgs) -> Result<()> {
    let (cfg, bank, out) = prepare(&args.common)?;
    let img = load_image(&args.image)?;
    let name = stem(&args.image);
    let geom = BlockGeometry::new(img.width(), img.height(), cfg.cu_size)?;

    let (enc, budget) = if let Some(qp) = args.qp {
        (encode_image(&img, cfg.cu_size, QpSource::Fixed(qp))?, None)
    } else {
        let t_bits = match (args.target_bits, args.target_bpp) {
            (Some(b), _) => b,
            (None, Some(bpp)) => bpp * img.pixels() as f64,
            (None, None) => bail!("encode needs --qp, --target-bits or --target-bpp"),
        };
        ensure!(t_bits > 0.0, "target must be positive");
        let grid = if args.uniform {
            BlockImportanceGrid::flat(geom)
        } else {
            block_importance(&importance_from_image(&img, &bank, cfg.layer, cfg.input_dim)?, &geom)?
        };
        let model = encode_model(&img, &cfg, t_bits / img.pixels() as f64)?;
        let mut session = RateControlSession::new(model, cfg.params, &grid, t_bits)?;
        let enc = encode_image(&img, cfg.cu_size, QpSource::RateControl(&mut session))?;
        (enc, Some((t_bits, session.slice_qp())))
    };

    let bs_path = out.join(format!("{name}.dtac"));
    let recon_path = out.join(format!("{name}_recon.pgm"));
    let csv_path = out.join(format!("{name}_blocks.csv"));
    write(&bs_path, enc.bitstream.to_bytes())?;
    save_pgm(&enc.recon, &recon_path)?;
    let csv = match &enc.records {
        Some(r) => records_to_csv(r),
        None => {
            let mut s = String::from("i,j,QP,bits_actual\n");
            for k in 0..geom.len() {
                let (i, j) = geom.origin(k);
                let _ = writeln!(s, "{i},{j},{},{}", enc.bitstream.qps[k], enc.bitstream.block_bits[k]);
            }
            s
        }
    };
    write(&csv_path, csv)?;

    let bits = enc.total_bits();
    println!(
        "{} bits ({:.4} bpp), PSNR {:.3} dB -> {}, {}, {}",
        bits,
        enc.bpp(),
        psnr(&img, &enc.recon)?,
        bs_path.display(),
        recon_path.display(),
        csv_path.display()
    );

    if let (Some((t, qp_s)), Some(records)) = (budget, &enc.records) {
        for r in records {
            let (lo, hi) = cfg.params.actual_band_for(qp_s, r.qp_p);
            ensure!(
                r.qp_a >= lo.max(0) && r.qp_a <= hi.min(51),
                "block ({}, {}): QP_a {} outside [{lo}, {hi}]",
                r.i,
                r.j,
                r.qp_a
            );
        }
        let err = (bits as f64 - t).abs() / t;
        println!("target {t:.0} bits, slice QP {qp_s}, relative error {err:.4}");
        ensure!(
            err <= cfg.budget_tolerance,
            "budget missed: {bits} bits vs target {t:.0} ({:.1}% > {:.1}%)",
            100.0 * err,
            100.0 * cfg.budget_tolerance
        );
    }
    Ok(())
}

fn cmd_decode(path: &Path, output: &Path) -> Result<()> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let bs = Bitstream::from_bytes(&bytes)?;
    let img = decode(&bs)?;
    save_pgm(&img, output)?;
    println!(
        "{}x{}, {} payload bits -> {}",
        img.width(),
        img.height(),
        bs.payload_bits(),
        output.display()
    );
    Ok(())
}

fn cmd_sweep(common: &Common, corpus: Option<&PathBuf>, jobs: Option<usize>) -> Result<()> {
    let mut cfg = common.config()?;
    if let Some(c) = corpus {
        cfg.corpus = Some(c.clone());
    }
    if let Some(j) = jobs {
        cfg.jobs = j;
    }
    let dir = cfg
        .corpus
        .clone()
        .context("sweep needs --corpus or a corpus config key")?;
    let bank = cfg.load_bank()?;
    cfg.validate(&bank)?;
    let out = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let images = load_corpus(&dir)?;
    let report = sweep(&images, &cfg, &bank)?;
    write(&out.join("sweep.csv"), report.to_csv())?;
    let summary = report.summary(cfg.bd_method);
    write(&out.join("summary.txt"), &summary)?;
    let curves = out.join("curves");
    fs::create_dir_all(&curves)?;
    for mode in report.modes() {
        for (metric, tag) in [(Metric::Psnr, "psnr"), (Metric::WeightedPsnr, "wpsnr")] {
            let c = report.pooled_curve(mode, metric)?;
            let mut s = String::from("rate,quality\n");
            for p in c.points() {
                let _ = writeln!(s, "{},{}", p.rate, p.quality);
            }
            write(&curves.join(format!("{mode}_{tag}.csv")), s)?;
        }
    }
    print!("{summary}");
    println!("wrote {}", out.display());
    Ok(())
}

fn read_curve(path: &Path) -> Result<RdCurve> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let (Some(r), Some(q)) = (it.next(), it.next()) else {
            bail!("{}:{}: expected rate,quality", path.display(), n + 1);
        };
        match (r.parse::<f64>(), q.parse::<f64>()) {
            (Ok(r), Ok(q)) => pairs.push((r, q)),
            _ if pairs.is_empty() => continue,
            _ => bail!("{}:{}: cannot parse {line:?}", path.display(), n + 1),
        }
    }
    RdCurve::from_pairs(&pairs).with_context(|| format!("curve {}", path.display()))
}

fn cmd_bdrate(anchor: &Path, test: &Path, method: BdMethod) -> Result<()> {
    let (a, t) = (read_curve(anchor)?, read_curve(test)?);
    println!("BD-rate: {:+.2}%", bd_rate(&a, &t, method)?);
    println!("BD-quality: {:+.4}", bd_quality(&a, &t, method)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Importance { image, common } => cmd_importance(&image, &common),
        Command::Encode(args) => cmd_encode(&args),
        Command::Decode { bitstream, output } => cmd_decode(&bitstream, &output),
        Command::Sweep { common, corpus, jobs } => cmd_sweep(&common, corpus.as_ref(), jobs),
        Command::Bdrate { anchor, test, method } => cmd_bdrate(&anchor, &test, method.unwrap_or_default()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
