//! Rate-distortion sweep over parameter budgets and share modes.

use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use srnerv_core::media::{load_video, synth_video, VideoTensor};
use srnerv_core::metrics::{bd_rate, write_rd_csv, RDPoint};
use srnerv_core::model::{count_params, match_budget, ModelConfig, ShareMode};
use srnerv_core::train::{fit, TrainConfig};

use crate::commands::{compress_store, synth_spec, write, Report};
use crate::error::{CliError, Result};
use crate::settings;
use crate::{Global, SweepArgs};

/// Smallest curve the BD-rate summary accepts.
const MIN_BD_POINTS: usize = 4;

struct Cell {
    mode: ShareMode,
    budget: usize,
}

struct Outcome {
    config: ModelConfig,
    bytes: Vec<u8>,
    fit_log: String,
    report: Report,
}

fn run_cell(
    video: &VideoTensor,
    template: &ModelConfig,
    tcfg: &TrainConfig,
    mode: ShareMode,
    budget: usize,
) -> Result<Outcome> {
    let mut t = template.clone();
    t.share_mode = mode;
    let config = match_budget(budget, &t)?;
    let (store, log) = fit::<f32>(video, &config, tcfg)?;
    let (bytes, report) = compress_store(store, video, tcfg)?;
    Ok(Outcome {
        config,
        bytes,
        fit_log: log.to_csv(),
        report,
    })
}

fn input_video(g: &Global, a: &SweepArgs) -> Result<VideoTensor> {
    match (&a.input, a.synth) {
        (Some(path), None) => Ok(load_video(path)?),
        (None, Some(kind)) => {
            let spec = synth_spec(g, kind, (a.frames, a.height, a.width), &a.knobs)?;
            Ok(synth_video(&spec))
        }
        _ => Err(CliError::Usage(
            "give exactly one of --input or --synth".into(),
        )),
    }
}

pub fn sweep(g: &Global, a: &SweepArgs) -> Result<()> {
    if a.budgets.len() < MIN_BD_POINTS && !a.no_bdrate {
        return Err(CliError::Usage(format!(
            "BD-rate needs at least {MIN_BD_POINTS} budgets (got {}); pass --no-bdrate to skip it",
            a.budgets.len()
        )));
    }
    let video = input_video(g, a)?;
    let mut kv = settings::load(g.config.as_deref(), &g.set)?;
    let template = settings::model(&mut kv, video.dims())?;
    let tcfg = settings::train(&mut kv, g.seed)?;
    kv.finish()?;
    let dir = g.out.clone().unwrap_or_else(|| "sweep".into());

    let modes = a.modes.clone();
    // aliased modes all train the unshared model once per budget
    let run_modes = if a.alias_modes {
        vec![ShareMode::None]
    } else {
        modes.clone()
    };
    let cells: Vec<Cell> = run_modes
        .iter()
        .flat_map(|&mode| a.budgets.iter().map(move |&budget| Cell { mode, budget }))
        .collect();
    let results: Vec<Mutex<Option<Result<Outcome>>>> =
        cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let jobs = g.jobs.max(1).min(cells.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                log::info!("cell {} budget {}", cell.mode, cell.budget);
                let r = run_cell(&video, &template, &tcfg, cell.mode, cell.budget);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    let results: Vec<Result<Outcome>> = results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every cell ran"))
        .collect();

    let mut table = format!("mode,budget,channels,params,{},status\n", Report::HEADER);
    let mut curves: Vec<(ShareMode, Option<Vec<RDPoint>>)> = Vec::new();
    let mut divergence = None;
    for &mode in &modes {
        let mut points = Vec::new();
        let mut complete = true;
        for (k, &budget) in a.budgets.iter().enumerate() {
            let row = if a.alias_modes {
                0
            } else {
                run_modes.iter().position(|m| *m == mode).unwrap()
            };
            let src = row * a.budgets.len() + k;
            match &results[src] {
                Ok(o) => {
                    let stem = format!("{mode}_{budget}");
                    write(&dir.join(format!("{stem}.srnv")), &o.bytes)?;
                    write(&dir.join(format!("{stem}.log.csv")), &o.fit_log)?;
                    writeln!(
                        table,
                        "{mode},{budget},{},{},{},ok",
                        o.config.channels,
                        count_params(&o.config).total,
                        o.report.row()
                    )
                    .unwrap();
                    points.push(RDPoint::new(o.report.bpp, o.report.psnr));
                }
                Err(e) => {
                    log::error!("cell {mode} budget {budget} failed: {e}");
                    if matches!(e, CliError::Diverged(_)) {
                        divergence.get_or_insert_with(|| e.to_string());
                    }
                    let msg = e.to_string().replace([',', '\n'], ";");
                    writeln!(table, "{mode},{budget},,,,,,,,,,failed: {msg}").unwrap();
                    complete = false;
                }
            }
        }
        write(&dir.join(format!("rd_{mode}.csv")), write_rd_csv(&points))?;
        curves.push((mode, complete.then_some(points)));
    }
    write(&dir.join("cells.csv"), &table)?;

    if !a.no_bdrate {
        let anchor = curves
            .iter()
            .find(|(m, _)| *m == ShareMode::None)
            .and_then(|(_, c)| c.clone());
        let mut summary = String::from("mode,bd_rate_vs_none,status\n");
        for (mode, curve) in &curves {
            let line = match (&anchor, curve) {
                (None, _) => format!("{mode},,no complete none-mode anchor"),
                (_, None) => format!("{mode},,incomplete curve"),
                (Some(an), Some(c)) => match bd_rate(an, c) {
                    Ok(v) => format!("{mode},{v},ok"),
                    Err(e) => format!("{mode},,{}", e.to_string().replace(',', ";")),
                },
            };
            summary.push_str(&line);
            summary.push('\n');
        }
        write(&dir.join("bdrate.csv"), &summary)?;
        print!("{summary}");
    }
    if results.iter().all(|r| r.is_err()) {
        return Err(divergence.map_or_else(
            || CliError::Usage("every sweep cell failed".into()),
            CliError::Diverged,
        ));
    }
    Ok(())
}
