use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use srnerv_core::checkpoint::{load_checkpoint, save_checkpoint};
use srnerv_core::codec::{decode_video, encode_bitstream, estimate_rate, quantize_store};
use srnerv_core::media::{load_video, save_video, synth_video, SynthKind, SynthSpec};
use srnerv_core::metrics::{bd_rate, bpp, psnr, read_rd_csv, ssim_video};
use srnerv_core::model::{count_params, match_budget, render_video};
use srnerv_core::train::{fit, prune_global, qat_finetune};

use crate::error::{CliError, Result};
use crate::settings;
use crate::{CompressArgs, DecompressArgs, EvalArgs, FitArgs, Global, SynthArgs, SynthKnobs};

pub fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// `<path>.<suffix>` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

fn out_or(g: &Global, default: &str) -> PathBuf {
    g.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

pub fn synth_spec(
    g: &Global,
    kind: SynthKind,
    (t, h, w): (usize, usize, usize),
    k: &SynthKnobs,
) -> Result<SynthSpec> {
    let mut spec = SynthSpec::new(kind, t, h, w, g.seed.unwrap_or(0));
    if let Some(s) = k.square_size {
        spec.square_size = s;
    }
    if let Some(c) = k.cell_size {
        spec.cell_size = c;
    }
    if let Some(i) = k.scene_interval {
        spec.scene_interval = i;
    }
    if let Some(p) = k.pan_speed {
        spec.pan_speed = p;
    }
    spec.validate().map_err(CliError::Usage)?;
    Ok(spec)
}

pub fn synth(g: &Global, a: &SynthArgs) -> Result<()> {
    let spec = synth_spec(g, a.kind, (a.frames, a.height, a.width), &a.knobs)?;
    let out = out_or(g, "synth.rgb");
    save_video(&synth_video(&spec), &out)?;
    println!(
        "wrote {} ({} x {} x {})",
        out.display(),
        a.frames,
        a.height,
        a.width
    );
    Ok(())
}

pub fn fit_cmd(g: &Global, a: &FitArgs) -> Result<()> {
    let video = load_video(&a.video)?;
    let mut kv = settings::load(g.config.as_deref(), &g.set)?;
    let mut mcfg = settings::model(&mut kv, video.dims())?;
    let tcfg = settings::train(&mut kv, g.seed)?;
    kv.finish()?;
    if let Some(n) = a.params {
        mcfg = match_budget(n, &mcfg)?;
    }
    log::info!(
        "fitting {} parameters for {} steps",
        count_params(&mcfg).total,
        tcfg.fit_steps(video.frames())
    );
    let (store, log) = fit::<f32>(&video, &mcfg, &tcfg)?;
    let out = out_or(g, "model.ckpt");
    write(&out, save_checkpoint(&store))?;
    let log_path = a.log.clone().unwrap_or_else(|| sibling(&out, "log.csv"));
    write(&log_path, log.to_csv())?;
    let p = psnr(&video, &render_video(&store)?)?;
    println!(
        "channels,params,psnr\n{},{},{p}",
        mcfg.channels,
        count_params(&mcfg).total
    );
    Ok(())
}

/// Quantized-model report row.
pub struct Report {
    pub bpp: f64,
    pub file_bits: u64,
    pub sm_bits: f64,
    pub cm_bits: f64,
    pub other_bits: f64,
    pub estimated_bits: f64,
    pub psnr: f64,
}

impl Report {
    pub const HEADER: &'static str = "bpp,file_bits,sm_bits,cm_bits,other_bits,estimated_bits,psnr";

    pub fn row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.bpp,
            self.file_bits,
            self.sm_bits,
            self.cm_bits,
            self.other_bits,
            self.estimated_bits,
            self.psnr
        )
    }
}

/// Prunes, fine-tunes and encodes a fitted store; returns the stream and
/// its report.
pub fn compress_store(
    mut store: srnerv_core::ParameterStore32,
    video: &srnerv_core::media::VideoTensor,
    tcfg: &srnerv_core::train::TrainConfig,
) -> Result<(Vec<u8>, Report)> {
    let pruned = prune_global(&mut store, tcfg.prune_fraction);
    log::info!("pruned {pruned} weights");
    qat_finetune(&mut store, video, tcfg)?;
    let rate = estimate_rate(&quantize_store(&store, tcfg.qat_bits));
    let bytes = encode_bitstream(&store, tcfg.qat_bits);
    let decoded = decode_video::<f32>(&bytes)?;
    let (t, h, w) = video.dims();
    let file_bits = bytes.len() as u64 * 8;
    let report = Report {
        bpp: bpp(file_bits, t, h, w),
        file_bits,
        sm_bits: rate.sm_bits,
        cm_bits: rate.cm_bits,
        other_bits: rate.other_bits,
        estimated_bits: rate.total_bits,
        psnr: psnr(video, &decoded)?,
    };
    Ok((bytes, report))
}

pub fn compress(g: &Global, a: &CompressArgs) -> Result<()> {
    let store = load_checkpoint::<f32>(&read(&a.checkpoint)?)?;
    let video = load_video(&a.video)?;
    let mut kv = settings::load(g.config.as_deref(), &g.set)?;
    // model keys may share the file; the checkpoint decides the model
    let _ = settings::model(&mut kv, video.dims());
    let mut tcfg = settings::train(&mut kv, g.seed)?;
    kv.finish()?;
    if let Some(p) = a.prune {
        tcfg.prune_fraction = p;
        tcfg.validate()?;
    }
    let c = store.config();
    if (c.frames, c.height, c.width) != video.dims() {
        return Err(CliError::Usage(format!(
            "checkpoint renders {:?} but the video is {:?}",
            (c.frames, c.height, c.width),
            video.dims()
        )));
    }
    let (bytes, report) = compress_store(store, &video, &tcfg)?;
    let out = out_or(g, "model.srnv");
    write(&out, &bytes)?;
    let text = format!("{}\n{}\n", Report::HEADER, report.row());
    write(
        &a.report
            .clone()
            .unwrap_or_else(|| sibling(&out, "report.csv")),
        &text,
    )?;
    print!("{text}");
    Ok(())
}

pub fn decompress(g: &Global, a: &DecompressArgs) -> Result<()> {
    let video = decode_video::<f32>(&read(&a.bitstream)?)?;
    let out = out_or(g, "decoded.rgb");
    save_video(&video, &out)?;
    println!("wrote {}", out.display());
    if let Some(r) = &a.reference {
        let reference = load_video(r)?;
        println!("psnr\n{}", psnr(&reference, &video)?);
    }
    Ok(())
}

pub fn eval(g: &Global, a: &EvalArgs) -> Result<()> {
    let mut text = String::new();
    if a.rd {
        let load = |p: &Path| -> Result<_> {
            let s = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Ok(read_rd_csv(&s)?)
        };
        let v = bd_rate(&load(&a.reference)?, &load(&a.test)?)?;
        writeln!(text, "bd_rate\n{v}").unwrap();
    } else {
        let r = load_video(&a.reference)?;
        let t = load_video(&a.test)?;
        writeln!(text, "psnr,ssim\n{},{}", psnr(&r, &t)?, ssim_video(&r, &t)?).unwrap();
    }
    if let Some(out) = &g.out {
        write(out, &text)?;
    }
    print!("{text}");
    Ok(())
}
