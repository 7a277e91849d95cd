use super::config::ModelConfig;
use super::store::{channel_sets, spatial_sets};
use super::ModelError;

/// Distinct stored scalars by partition. Masked entries are still counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamCounts {
    pub sm_params: usize,
    pub cm_params: usize,
    pub other_params: usize,
    pub total: usize,
}

/// Scalars in one spatial-mixing set: depthwise kernel and bias plus the
/// pre-norm affine.
pub fn spatial_set_size(cfg: &ModelConfig) -> usize {
    let c = cfg.channels;
    c * cfg.kernel * cfg.kernel + c + 2 * c
}

/// Scalars in one channel-mixing set: norm affine, expand and contract maps.
pub fn channel_set_size(cfg: &ModelConfig) -> usize {
    let (c, h) = (cfg.channels, cfg.hidden());
    2 * c + (c * h + h) + (h * c + c)
}

pub fn count_params(cfg: &ModelConfig) -> ParamCounts {
    let sm = spatial_sets(cfg) * spatial_set_size(cfg);
    let cm = channel_sets(cfg) * channel_set_size(cfg);
    let grid = cfg.grid_t * cfg.grid_h * cfg.grid_w * cfg.grid_c;
    let stem = cfg.grid_c * cfg.channels + cfg.channels;
    let head = 3 * cfg.channels + 3;
    let other = grid + stem + head;
    ParamCounts {
        sm_params: sm,
        cm_params: cm,
        other_params: other,
        total: sm + cm + other,
    }
}

/// Largest channel width searched by [`match_budget`].
pub const MAX_CHANNELS: usize = 2048;

/// Picks the channel width whose total count is nearest `target`, keeping
/// every other field of `template`. Ties go to the smaller width.
pub fn match_budget(target: usize, template: &ModelConfig) -> Result<ModelConfig, ModelError> {
    let mut best: Option<(usize, usize)> = None;
    for c in 1..=MAX_CHANNELS {
        let mut cfg = template.clone();
        cfg.channels = c;
        let total = count_params(&cfg).total;
        if best.is_none_or(|(_, t)| total.abs_diff(target) < t.abs_diff(target)) {
            best = Some((c, total));
        }
        // totals grow with c, so once past the target nothing gets closer
        if total > target {
            break;
        }
    }
    let (c, nearest) = best.expect("search range is non-empty");
    if nearest.abs_diff(target) as f64 > 0.2 * target as f64 {
        return Err(ModelError::Budget { target, nearest });
    }
    let mut cfg = template.clone();
    cfg.channels = c;
    Ok(cfg)
}
