//! Layered `key = value` settings: config file first, then `--set` flags.

use std::path::Path;

use srnerv_core::kv::KeyValues;
use srnerv_core::model::ModelConfig;
use srnerv_core::train::TrainConfig;

use crate::error::{CliError, Result};

pub fn load(config: Option<&Path>, sets: &[String]) -> Result<KeyValues> {
    let mut kv = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            KeyValues::parse(&text)?
        }
        None => KeyValues::default(),
    };
    for s in sets {
        let Some((k, v)) = s.split_once('=') else {
            return Err(CliError::Usage(format!(
                "--set expects key=value, got `{s}`"
            )));
        };
        kv.set(k.trim(), v.trim());
    }
    Ok(kv)
}

/// Model settings for a `frames x height x width` video. The grid's spatial
/// extents follow from the output size unless given explicitly.
pub fn model(kv: &mut KeyValues, dims: (usize, usize, usize)) -> Result<ModelConfig> {
    let (t, h, w) = dims;
    for (key, actual) in [("frames", t), ("height", h), ("width", w)] {
        if let Some(given) = kv.take::<usize>(key)? {
            if given != actual {
                return Err(CliError::Usage(format!(
                    "config {key} = {given} but the video has {actual}"
                )));
            }
        }
    }
    let explicit_t = kv.contains("grid_t");
    let explicit_h = kv.contains("grid_h");
    let explicit_w = kv.contains("grid_w");
    let mut cfg = ModelConfig::from_kv(kv, &ModelConfig::default())?;
    cfg.frames = t;
    cfg.height = h;
    cfg.width = w;
    if cfg.stages > 12 {
        return Err(CliError::Usage(format!(
            "stages = {} exceeds 12",
            cfg.stages
        )));
    }
    let factor = 1usize << cfg.stages;
    for (explicit, size, grid, name) in [
        (explicit_h, h, &mut cfg.grid_h, "height"),
        (explicit_w, w, &mut cfg.grid_w, "width"),
    ] {
        if !explicit {
            if size % factor != 0 {
                return Err(CliError::Usage(format!(
                    "{name} {size} is not divisible by 2^{}",
                    cfg.stages
                )));
            }
            *grid = size / factor;
        }
    }
    if !explicit_t {
        cfg.grid_t = cfg.grid_t.min(t);
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn train(kv: &mut KeyValues, seed: Option<u64>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::from_kv(kv, &TrainConfig::default())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}
