use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{ModelConfig, ShareMode};
use super::ModelError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Standard deviation of the truncated-normal init for mixing weights.
pub const WEIGHT_INIT_STD: f64 = 0.02;
/// Standard deviation of the truncated-normal init for the feature grid.
pub const GRID_INIT_STD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Grid,
    StemWeight,
    StemBias,
    NormGain,
    NormBias,
    DepthwiseKernel,
    DepthwiseBias,
    ExpandWeight,
    ExpandBias,
    ContractWeight,
    ContractBias,
    HeadWeight,
    HeadBias,
}

impl ParamKind {
    /// Whether global magnitude pruning may mask this tensor.
    pub fn prunable(self) -> bool {
        matches!(
            self,
            ParamKind::StemWeight
                | ParamKind::DepthwiseKernel
                | ParamKind::ExpandWeight
                | ParamKind::ContractWeight
        )
    }
}

/// Rate-accounting partition a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    SpatialMixing,
    ChannelMixing,
    Other,
}

impl Partition {
    pub fn of_name(name: &str) -> Self {
        if name.starts_with("sm[") {
            Partition::SpatialMixing
        } else if name.starts_with("cm[") {
            Partition::ChannelMixing
        } else {
            Partition::Other
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor<S>,
    /// `true` marks a pruned entry, which is held at exactly zero.
    pub mask: Option<Vec<bool>>,
}

impl<S: Scalar> Param<S> {
    pub fn partition(&self) -> Partition {
        Partition::of_name(&self.name)
    }

    /// Zeroes every masked entry.
    pub fn apply_mask(&mut self) {
        if let Some(mask) = &self.mask {
            for (v, &m) in self.value.data_mut().iter_mut().zip(mask) {
                if m {
                    *v = S::zero();
                }
            }
        }
    }
}

/// Indices of one spatial-mixing set: pre-norm affine, depthwise kernel and bias.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpatialSet {
    pub norm_gain: usize,
    pub norm_bias: usize,
    pub kernel: usize,
    pub bias: usize,
}

/// Indices of one channel-mixing set: pre-norm affine and the two FFN maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSet {
    pub norm_gain: usize,
    pub norm_bias: usize,
    pub expand_w: usize,
    pub expand_b: usize,
    pub contract_w: usize,
    pub contract_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub grid: usize,
    pub stem_w: usize,
    pub stem_b: usize,
    pub spatial: Vec<SpatialSet>,
    pub channel: Vec<ChannelSet>,
    pub head_w: usize,
    pub head_b: usize,
}

/// Number of distinct spatial-mixing sets stored for a config.
pub fn spatial_sets(cfg: &ModelConfig) -> usize {
    if cfg.share_mode.shares_spatial() {
        cfg.blocks
    } else {
        cfg.stages * cfg.blocks
    }
}

/// Number of distinct channel-mixing sets stored for a config.
pub fn channel_sets(cfg: &ModelConfig) -> usize {
    if cfg.share_mode.shares_channel() {
        cfg.blocks
    } else {
        cfg.stages * cfg.blocks
    }
}

/// Stored spatial set used at `stage` (0-based), block `pos`.
pub fn spatial_index(cfg: &ModelConfig, stage: usize, pos: usize) -> usize {
    match cfg.share_mode {
        ShareMode::Full => pos,
        ShareMode::None | ShareMode::Hybrid => stage * cfg.blocks + pos,
    }
}

/// Stored channel set used at `stage` (0-based), block `pos`.
pub fn channel_index(cfg: &ModelConfig, stage: usize, pos: usize) -> usize {
    match cfg.share_mode {
        ShareMode::Full | ShareMode::Hybrid => pos,
        ShareMode::None => stage * cfg.blocks + pos,
    }
}

fn set_label(shared: bool, set: usize, blocks: usize) -> String {
    if shared {
        format!("*,{set}")
    } else {
        format!("{},{}", set / blocks, set % blocks)
    }
}

/// Canonical tensor names, kinds and shapes for a config, in storage order.
pub fn tensor_specs(cfg: &ModelConfig) -> Vec<(String, ParamKind, Vec<usize>)> {
    let (c, hid, k) = (cfg.channels, cfg.hidden(), cfg.kernel);
    let mut v = vec![
        (
            "grid".to_string(),
            ParamKind::Grid,
            vec![cfg.grid_t, cfg.grid_h, cfg.grid_w, cfg.grid_c],
        ),
        (
            "stem.weight".into(),
            ParamKind::StemWeight,
            vec![c, cfg.grid_c],
        ),
        ("stem.bias".into(), ParamKind::StemBias, vec![c]),
    ];
    let sm_shared = cfg.share_mode.shares_spatial();
    for s in 0..spatial_sets(cfg) {
        let l = set_label(sm_shared, s, cfg.blocks);
        v.push((format!("sm[{l}].norm.gain"), ParamKind::NormGain, vec![c]));
        v.push((format!("sm[{l}].norm.bias"), ParamKind::NormBias, vec![c]));
        v.push((
            format!("sm[{l}].dw.kernel"),
            ParamKind::DepthwiseKernel,
            vec![k, k, c],
        ));
        v.push((
            format!("sm[{l}].dw.bias"),
            ParamKind::DepthwiseBias,
            vec![c],
        ));
    }
    let cm_shared = cfg.share_mode.shares_channel();
    for s in 0..channel_sets(cfg) {
        let l = set_label(cm_shared, s, cfg.blocks);
        v.push((format!("cm[{l}].norm.gain"), ParamKind::NormGain, vec![c]));
        v.push((format!("cm[{l}].norm.bias"), ParamKind::NormBias, vec![c]));
        v.push((
            format!("cm[{l}].expand.weight"),
            ParamKind::ExpandWeight,
            vec![hid, c],
        ));
        v.push((
            format!("cm[{l}].expand.bias"),
            ParamKind::ExpandBias,
            vec![hid],
        ));
        v.push((
            format!("cm[{l}].contract.weight"),
            ParamKind::ContractWeight,
            vec![c, hid],
        ));
        v.push((
            format!("cm[{l}].contract.bias"),
            ParamKind::ContractBias,
            vec![c],
        ));
    }
    v.push(("head.weight".into(), ParamKind::HeadWeight, vec![3, c]));
    v.push(("head.bias".into(), ParamKind::HeadBias, vec![3]));
    v
}

pub fn layout(cfg: &ModelConfig) -> Layout {
    let ns = spatial_sets(cfg);
    let nc = channel_sets(cfg);
    let sm0 = 3;
    let cm0 = sm0 + 4 * ns;
    let head = cm0 + 6 * nc;
    Layout {
        grid: 0,
        stem_w: 1,
        stem_b: 2,
        spatial: (0..ns)
            .map(|s| {
                let b = sm0 + 4 * s;
                SpatialSet {
                    norm_gain: b,
                    norm_bias: b + 1,
                    kernel: b + 2,
                    bias: b + 3,
                }
            })
            .collect(),
        channel: (0..nc)
            .map(|s| {
                let b = cm0 + 6 * s;
                ChannelSet {
                    norm_gain: b,
                    norm_bias: b + 1,
                    expand_w: b + 2,
                    expand_b: b + 3,
                    contract_w: b + 4,
                    contract_b: b + 5,
                }
            })
            .collect(),
        head_w: head,
        head_b: head + 1,
    }
}

/// All learnable tensors of one generator, with shared sets stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore<S> {
    config: ModelConfig,
    layout: Layout,
    params: Vec<Param<S>>,
}

fn trunc_normal(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}

impl<S: Scalar> ParameterStore<S> {
    /// Allocates and initializes every tensor for `config`.
    ///
    /// Depthwise kernels and biases, contract maps and all biases start at
    /// zero, so every block is an exact pass-through at step 0.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = tensor_specs(config)
            .into_iter()
            .map(|(name, kind, shape)| {
                let value = match kind {
                    ParamKind::Grid => {
                        Tensor::from_fn(&shape, |_| S::lit(trunc_normal(&mut rng, GRID_INIT_STD)))
                    }
                    ParamKind::StemWeight | ParamKind::ExpandWeight | ParamKind::HeadWeight => {
                        Tensor::from_fn(&shape, |_| S::lit(trunc_normal(&mut rng, WEIGHT_INIT_STD)))
                    }
                    ParamKind::NormGain => Tensor::full(&shape, S::one()),
                    _ => Tensor::zeros(&shape),
                };
                Param {
                    name,
                    kind,
                    value,
                    mask: None,
                }
            })
            .collect();
        Ok(Self {
            config: config.clone(),
            layout: layout(config),
            params,
        })
    }

    /// Assembles a store from externally decoded tensors (checkpoints and
    /// bitstreams). Names and shapes must match the config's layout.
    pub fn from_params(config: &ModelConfig, params: Vec<Param<S>>) -> Result<Self, ModelError> {
        config.validate()?;
        let specs = tensor_specs(config);
        if specs.len() != params.len() {
            return Err(ModelError::Layout(format!(
                "expected {} tensors, got {}",
                specs.len(),
                params.len()
            )));
        }
        let mut params = params;
        for ((name, kind, shape), p) in specs.into_iter().zip(params.iter_mut()) {
            if p.name != name || p.value.shape() != shape.as_slice() {
                return Err(ModelError::Layout(format!(
                    "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
            if let Some(m) = &p.mask {
                if m.len() != p.value.len() {
                    return Err(ModelError::Layout(format!(
                        "mask length mismatch on `{name}`"
                    )));
                }
            }
            p.kind = kind;
            p.apply_mask();
        }
        Ok(Self {
            config: config.clone(),
            layout: layout(config),
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[Param<S>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<S>] {
        &mut self.params
    }

    pub fn param(&self, index: usize) -> &Param<S> {
        &self.params[index]
    }

    pub fn param_mut(&mut self, index: usize) -> &mut Param<S> {
        &mut self.params[index]
    }

    pub fn find(&self, name: &str) -> Option<&Param<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn find_mut(&mut self, name: &str) -> Option<&mut Param<S>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total stored scalars, masked entries included.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn has_masks(&self) -> bool {
        self.params.iter().any(|p| p.mask.is_some())
    }

    pub fn cast<T: Scalar>(&self) -> ParameterStore<T> {
        ParameterStore {
            config: self.config.clone(),
            layout: self.layout.clone(),
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    value: p.value.cast(),
                    mask: p.mask.clone(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(mode: ShareMode) -> ModelConfig {
        ModelConfig::dyadic(3, 2, 8, (2, 2, 2, 4), 2, mode)
    }

    #[test]
    fn set_counts_per_mode() {
        let s = ParameterStore::<f32>::build(&cfg(ShareMode::Hybrid), 1).unwrap();
        assert_eq!(s.layout().spatial.len(), 6);
        assert_eq!(s.layout().channel.len(), 2);
        let s = ParameterStore::<f32>::build(&cfg(ShareMode::Full), 1).unwrap();
        assert_eq!(s.layout().spatial.len(), 2);
        assert_eq!(s.layout().channel.len(), 2);
        let s = ParameterStore::<f32>::build(&cfg(ShareMode::None), 1).unwrap();
        assert_eq!(s.layout().spatial.len(), 6);
        assert_eq!(s.layout().channel.len(), 6);
    }

    #[test]
    fn layout_indices_match_names() {
        for mode in ShareMode::ALL {
            let s = ParameterStore::<f32>::build(&cfg(mode), 3).unwrap();
            let l = s.layout();
            assert_eq!(s.param(l.grid).kind, ParamKind::Grid);
            assert_eq!(s.param(l.head_b).name, "head.bias");
            for set in &l.spatial {
                assert_eq!(s.param(set.kernel).kind, ParamKind::DepthwiseKernel);
                assert!(s.param(set.kernel).name.starts_with("sm["));
            }
            for set in &l.channel {
                assert_eq!(s.param(set.contract_w).kind, ParamKind::ContractWeight);
                assert!(s
                    .param(set.contract_w)
                    .value
                    .data()
                    .iter()
                    .all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = ParameterStore::<f32>::build(&cfg(ShareMode::Hybrid), 42).unwrap();
        let b = ParameterStore::<f32>::build(&cfg(ShareMode::Hybrid), 42).unwrap();
        assert_eq!(a, b);
        let c = ParameterStore::<f32>::build(&cfg(ShareMode::Hybrid), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn init_is_truncated() {
        let s = ParameterStore::<f64>::build(&cfg(ShareMode::None), 9).unwrap();
        for p in s.params() {
            let bound = match p.kind {
                ParamKind::Grid => 2.0 * GRID_INIT_STD,
                ParamKind::NormGain => 1.0,
                _ => 2.0 * WEIGHT_INIT_STD,
            };
            assert!(p.value.max_abs() <= bound, "{}", p.name);
        }
    }

    #[test]
    fn bad_geometry_is_a_config_error() {
        let mut c = cfg(ShareMode::Hybrid);
        c.width = 15;
        assert!(matches!(
            ParameterStore::<f32>::build(&c, 0),
            Err(ModelError::Config(_))
        ));
    }
}
