use srnerv_core::model::{tensor_specs, ModelConfig, Param, ParameterStore, ShareMode};
use srnerv_core::Scalar;

use crate::Lcg;

/// Fills every tensor with random values so that no branch is a no-op.
pub fn randomize<S: Scalar>(store: &mut ParameterStore<S>, seed: u64, scale: f64) {
    let mut r = Lcg(seed);
    for p in store.params_mut() {
        for v in p.value.data_mut() {
            *v = S::lit(r.uniform() * scale);
        }
    }
}

/// Name in a store of `mode` holding the tensor used at position `name` of
/// an unshared layout, e.g. `cm[2,1].expand.weight` -> `cm[*,1].expand.weight`.
pub fn shared_name(name: &str, mode: ShareMode) -> String {
    let share = (name.starts_with("sm[") && mode.shares_spatial())
        || (name.starts_with("cm[") && mode.shares_channel());
    if !share {
        return name.to_string();
    }
    let open = name.find('[').unwrap();
    let comma = name.find(',').unwrap();
    format!("{}*{}", &name[..open + 1], &name[comma..])
}

/// Unshared (`none`) store whose tensors replicate the shared ones of `src`.
pub fn replicate<S: Scalar>(src: &ParameterStore<S>) -> ParameterStore<S> {
    let mut cfg = src.config().clone();
    let mode = cfg.share_mode;
    cfg.share_mode = ShareMode::None;
    let params = tensor_specs(&cfg)
        .into_iter()
        .map(|(name, kind, _)| {
            let from = src.find(&shared_name(&name, mode)).expect("source tensor");
            Param {
                name,
                kind,
                value: from.value.clone(),
                mask: from.mask.clone(),
            }
        })
        .collect();
    ParameterStore::from_params(&cfg, params).unwrap()
}

/// Tiny generator config for finite-difference checks.
pub fn tiny_config(r: &mut Lcg, mode: ShareMode) -> ModelConfig {
    let stages = 1 + r.below(2);
    let blocks = 1 + r.below(2);
    // two channels make the layer norm output +-1 up to eps
    let channels = 3 + r.below(2);
    let gt = 1 + r.below(2);
    let frames = gt + r.below(3);
    let grid = (gt, 1 + r.below(2), 1 + r.below(2), 2);
    let mut cfg = ModelConfig::dyadic(stages, blocks, channels, grid, frames, mode);
    cfg.ffn_ratio = 1 + r.below(2);
    cfg
}

/// Config with `M <= 4`, `L <= 3`, `C <= 16`.
pub fn random_config(r: &mut Lcg, mode: ShareMode) -> ModelConfig {
    let stages = 1 + r.below(4);
    let blocks = 1 + r.below(3);
    let channels = 1 + r.below(16);
    let gt = 1 + r.below(3);
    let frames = gt + r.below(3);
    let grid = (gt, 2, 1 + r.below(2), 2 + r.below(3));
    let mut cfg = ModelConfig::dyadic(stages, blocks, channels, grid, frames, mode);
    cfg.kernel = [1, 3, 5][r.below(3)];
    cfg.ffn_ratio = 1 + r.below(4);
    cfg
}

/// Renders every frame of a shared store and of its replicated unshared
/// twin; `Err` names the first frame that differs in any bit.
pub fn tied_mismatch(store: &ParameterStore<f32>) -> Result<(), String> {
    let none = replicate(store);
    for t in 0..store.config().frames {
        let a = srnerv_core::model::generate(store, t).map_err(|e| e.to_string())?;
        let b = srnerv_core::model::generate(&none, t).map_err(|e| e.to_string())?;
        if a.data()
            .iter()
            .zip(b.data())
            .any(|(x, y)| x.to_bits() != y.to_bits())
        {
            return Err(format!("frame {t} differs for {:?}", store.config()));
        }
    }
    Ok(())
}

/// Parameter count written out term by term: `[sm, cm, other]`.
pub fn count_by_hand(cfg: &ModelConfig) -> [usize; 3] {
    let (m, l, c, k, r) = (
        cfg.stages,
        cfg.blocks,
        cfg.channels,
        cfg.kernel,
        cfg.ffn_ratio,
    );
    let sm_set = c * k * k + c + c + c;
    let cm_set = c + c + c * (r * c) + r * c + (r * c) * c + c;
    let sm_sets = if cfg.share_mode == ShareMode::Full {
        l
    } else {
        m * l
    };
    let cm_sets = if cfg.share_mode == ShareMode::None {
        m * l
    } else {
        l
    };
    let grid = cfg.grid_t * cfg.grid_h * cfg.grid_w * cfg.grid_c;
    let other = grid + cfg.grid_c * c + c + 3 * c + 3;
    [sm_sets * sm_set, cm_sets * cm_set, other]
}
