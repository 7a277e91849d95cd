use super::config::ModelConfig;
use super::store::{channel_index, spatial_index, ChannelSet, ParameterStore, SpatialSet};
use super::ModelError;
use crate::media::VideoTensor;
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

/// Epsilon of every channel layer norm in the generator.
pub const NORM_EPS: f64 = 1e-6;

/// How store tensors enter a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binding {
    /// Leaves receive gradients.
    Trainable,
    /// Leaves are constants.
    Frozen,
    /// Leaves receive gradients and are fake-quantized to `bits` on use.
    FakeQuant { bits: u32 },
}

/// Store tensors recorded on a graph: one leaf per stored tensor, plus the
/// handle actually consumed by the forward pass.
pub struct BoundParams {
    pub leaves: Vec<Var>,
    pub used: Vec<Var>,
}

pub fn bind<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    binding: Binding,
) -> BoundParams {
    let mut leaves = Vec::with_capacity(store.params().len());
    let mut used = Vec::with_capacity(store.params().len());
    for p in store.params() {
        let leaf = match binding {
            Binding::Frozen => g.constant(p.value.clone()),
            _ => g.param(p.value.clone()),
        };
        leaves.push(leaf);
        used.push(match binding {
            Binding::FakeQuant { bits } => g.fake_quant(leaf, bits),
            _ => leaf,
        });
    }
    BoundParams { leaves, used }
}

#[derive(Debug, Clone, Copy)]
pub struct SpatialVars {
    pub norm_gain: Var,
    pub norm_bias: Var,
    pub kernel: Var,
    pub bias: Var,
}

impl SpatialVars {
    pub fn select(set: &SpatialSet, vars: &[Var]) -> Self {
        Self {
            norm_gain: vars[set.norm_gain],
            norm_bias: vars[set.norm_bias],
            kernel: vars[set.kernel],
            bias: vars[set.bias],
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ChannelVars {
    pub norm_gain: Var,
    pub norm_bias: Var,
    pub expand_w: Var,
    pub expand_b: Var,
    pub contract_w: Var,
    pub contract_b: Var,
}

impl ChannelVars {
    pub fn select(set: &ChannelSet, vars: &[Var]) -> Self {
        Self {
            norm_gain: vars[set.norm_gain],
            norm_bias: vars[set.norm_bias],
            expand_w: vars[set.expand_w],
            expand_b: vars[set.expand_b],
            contract_w: vars[set.contract_w],
            contract_b: vars[set.contract_b],
        }
    }
}

/// Spatial-mixing branch: channel norm then depthwise convolution.
pub fn spatial_mixing<S: Scalar>(
    g: &mut Graph<S>,
    h: Var,
    sm: &SpatialVars,
) -> Result<Var, ModelError> {
    let n = g.layer_norm(h, sm.norm_gain, sm.norm_bias, NORM_EPS)?;
    Ok(g.depthwise_conv2d(n, sm.kernel, sm.bias)?)
}

/// Channel-mixing branch: norm, expand, GELU, contract.
pub fn channel_mixing<S: Scalar>(
    g: &mut Graph<S>,
    y: Var,
    cm: &ChannelVars,
) -> Result<Var, ModelError> {
    let n = g.layer_norm(y, cm.norm_gain, cm.norm_bias, NORM_EPS)?;
    let e = g.pointwise_linear(n, cm.expand_w, cm.expand_b)?;
    let a = g.gelu(e);
    Ok(g.pointwise_linear(a, cm.contract_w, cm.contract_b)?)
}

/// One block: `y = f_sm(h) + h`, then `z = f_cm(y) + y`.
pub fn srnerv_block<S: Scalar>(
    g: &mut Graph<S>,
    h: Var,
    sm: &SpatialVars,
    cm: &ChannelVars,
) -> Result<Var, ModelError> {
    let s = spatial_mixing(g, h, sm)?;
    let y = g.add(s, h)?;
    let c = channel_mixing(g, y, cm)?;
    Ok(g.add(c, y)?)
}

/// Normalized temporal position of frame `t` on the grid's time axis:
/// `(lo, hi, w)` with the grid sampled at `(1 - w) * lo + w * hi`.
pub fn grid_position(cfg: &ModelConfig, t: usize) -> Result<(usize, usize, f64), ModelError> {
    if t >= cfg.frames {
        return Err(ModelError::FrameOutOfRange {
            t,
            frames: cfg.frames,
        });
    }
    if cfg.frames == 1 || cfg.grid_t == 1 {
        return Ok((0, 0, 0.0));
    }
    // exact integer arithmetic for the node test: pos = t (gT - 1) / (T - 1)
    let num = t * (cfg.grid_t - 1);
    let den = cfg.frames - 1;
    let lo = num / den;
    let rem = num % den;
    let hi = (lo + 1).min(cfg.grid_t - 1);
    Ok((lo, hi, rem as f64 / den as f64))
}

/// Temporally interpolated grid slice `[grid_h, grid_w, grid_c]` for frame `t`.
pub fn base_grid<S: Scalar>(
    g: &mut Graph<S>,
    grid: Var,
    cfg: &ModelConfig,
    t: usize,
) -> Result<Var, ModelError> {
    let (lo, hi, w) = grid_position(cfg, t)?;
    Ok(g.lerp_slices(grid, lo, hi, S::lit(w))?)
}

/// Full generation of frame `t` on `g`, returning the `[H, W, 3]` output.
pub fn forward_frame<S: Scalar>(
    g: &mut Graph<S>,
    store: &ParameterStore<S>,
    vars: &[Var],
    t: usize,
) -> Result<Var, ModelError> {
    let cfg = store.config();
    let lay = store.layout();
    let base = base_grid(g, vars[lay.grid], cfg, t)?;
    let mut x = g.pointwise_linear(base, vars[lay.stem_w], vars[lay.stem_b])?;
    for stage in 0..cfg.stages {
        x = g.bilinear_upsample2(x)?;
        for pos in 0..cfg.blocks {
            let sm = SpatialVars::select(&lay.spatial[spatial_index(cfg, stage, pos)], vars);
            let cm = ChannelVars::select(&lay.channel[channel_index(cfg, stage, pos)], vars);
            x = srnerv_block(g, x, &sm, &cm)?;
        }
    }
    let out = g.pointwise_linear(x, vars[lay.head_w], vars[lay.head_b])?;
    Ok(g.sigmoid(out))
}

/// Renders frame `t` from a store without recording gradients.
pub fn generate<S: Scalar>(store: &ParameterStore<S>, t: usize) -> Result<Tensor<S>, ModelError> {
    let mut g = Graph::new();
    let bound = bind(&mut g, store, Binding::Frozen);
    let out = forward_frame(&mut g, store, &bound.used, t)?;
    Ok(g.value(out).clone())
}

/// Renders every frame into a video.
pub fn render_video<S: Scalar>(store: &ParameterStore<S>) -> Result<VideoTensor, ModelError> {
    let cfg = store.config();
    let mut video = VideoTensor::zeros(cfg.frames, cfg.height, cfg.width);
    for t in 0..cfg.frames {
        let frame = generate(store, t)?;
        video.set_frame(t, &frame);
    }
    Ok(video)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShareMode;
    use crate::tensor::kernels;

    fn tiny(mode: ShareMode) -> ModelConfig {
        ModelConfig::dyadic(2, 2, 6, (3, 2, 3, 4), 5, mode)
    }

    fn randomize<S: Scalar>(store: &mut ParameterStore<S>, seed: u64) {
        let mut s = seed;
        for p in store.params_mut() {
            for v in p.value.data_mut() {
                s = s
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                *v = S::lit(((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 0.6);
            }
        }
    }

    #[test]
    fn output_shape_is_dyadic() {
        let cfg = tiny(ShareMode::Hybrid);
        let store = ParameterStore::<f32>::build(&cfg, 0).unwrap();
        for t in 0..cfg.frames {
            assert_eq!(generate(&store, t).unwrap().shape(), &[8, 12, 3]);
        }
        assert!(matches!(
            generate(&store, 5),
            Err(ModelError::FrameOutOfRange { t: 5, frames: 5 })
        ));
    }

    #[test]
    fn grid_positions() {
        let mut cfg = tiny(ShareMode::Hybrid);
        cfg.grid_t = 5;
        for t in 0..5 {
            assert_eq!(grid_position(&cfg, t).unwrap(), (t, (t + 1).min(4), 0.0));
        }
        cfg.grid_t = 3; // frames 0..4 map to 0, 0.5, 1, 1.5, 2
        assert_eq!(grid_position(&cfg, 1).unwrap(), (0, 1, 0.5));
        assert_eq!(grid_position(&cfg, 3).unwrap(), (1, 2, 0.5));
        cfg.grid_t = 1;
        assert_eq!(grid_position(&cfg, 4).unwrap(), (0, 0, 0.0));
    }

    #[test]
    fn base_grid_matches_lerp_oracle() {
        let mut cfg = ModelConfig::dyadic(1, 1, 4, (4, 2, 2, 3), 7, ShareMode::Hybrid);
        cfg.validate().unwrap();
        let store = ParameterStore::<f64>::build(&cfg, 5).unwrap();
        let grid = &store.param(store.layout().grid).value;
        for t in 0..7 {
            let mut g = Graph::new();
            let gv = g.constant(grid.clone());
            let out = base_grid(&mut g, gv, &cfg, t).unwrap();
            let pos = t as f64 * 3.0 / 6.0;
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(3);
            let w = pos - lo as f64;
            let step = 2 * 2 * 3;
            for i in 0..step {
                let e = (1.0 - w) * grid.data()[lo * step + i] + w * grid.data()[hi * step + i];
                assert!((g.value(out).data()[i] - e).abs() < 1e-15);
            }
        }
        cfg.frames = 4;
        cfg.grid_t = 4;
        let store = ParameterStore::<f64>::build(&cfg, 5).unwrap();
        let grid = &store.param(store.layout().grid).value;
        let mut g = Graph::new();
        let gv = g.constant(grid.clone());
        let out = base_grid(&mut g, gv, &cfg, 2).unwrap();
        assert_eq!(g.value(out), &grid.slice0(2).unwrap());
    }

    #[test]
    fn fresh_blocks_pass_through() {
        let cfg = tiny(ShareMode::Hybrid);
        let store = ParameterStore::<f32>::build(&cfg, 1).unwrap();
        let lay = store.layout();
        let mut g = Graph::new();
        let b = bind(&mut g, &store, Binding::Frozen);
        let h = g.constant(Tensor::from_fn(&[4, 4, 6], |i| (i as f32 * 0.37).sin()));
        let sm = SpatialVars::select(&lay.spatial[0], &b.used);
        let cm = ChannelVars::select(&lay.channel[0], &b.used);
        let z = srnerv_block(&mut g, h, &sm, &cm).unwrap();
        assert_eq!(g.value(z), g.value(h));

        // so the whole generator is head(upsample^M(stem(grid)))
        let p = |i: usize| store.param(i).value.clone();
        for t in 0..cfg.frames {
            let (lo, hi, w) = grid_position(&cfg, t).unwrap();
            let grid = p(lay.grid);
            let base = if w == 0.0 {
                grid.slice0(lo).unwrap()
            } else {
                let (a, bb) = (grid.slice0(lo).unwrap(), grid.slice0(hi).unwrap());
                let w = w as f32;
                Tensor::new(
                    a.shape().to_vec(),
                    a.data()
                        .iter()
                        .zip(bb.data())
                        .map(|(x, y)| (1.0 - w) * x + w * y)
                        .collect(),
                )
                .unwrap()
            };
            let mut x = kernels::pointwise_linear(&base, &p(lay.stem_w), &p(lay.stem_b)).unwrap();
            for _ in 0..cfg.stages {
                x = kernels::bilinear_upsample2(&x).unwrap();
            }
            let y = kernels::sigmoid(
                &kernels::pointwise_linear(&x, &p(lay.head_w), &p(lay.head_b)).unwrap(),
            );
            assert_eq!(generate(&store, t).unwrap(), y);
        }
    }

    #[test]
    fn block_equals_composition_of_primitives() {
        let cfg = tiny(ShareMode::Hybrid);
        let mut store = ParameterStore::<f64>::build(&cfg, 2).unwrap();
        randomize(&mut store, 17);
        let lay = store.layout().clone();
        let h = Tensor::from_fn(&[4, 6, 6], |i| (i as f64 * 0.13).cos());
        let p = |i: usize| store.param(i).value.clone();
        let (s, c) = (lay.spatial[1], lay.channel[1]);
        let n = kernels::layer_norm(&h, &p(s.norm_gain), &p(s.norm_bias), NORM_EPS).unwrap();
        let f_sm = kernels::depthwise_conv2d(&n, &p(s.kernel), &p(s.bias)).unwrap();
        let y = Tensor::new(
            h.shape().to_vec(),
            f_sm.data()
                .iter()
                .zip(h.data())
                .map(|(a, b)| a + b)
                .collect(),
        )
        .unwrap();
        let n2 = kernels::layer_norm(&y, &p(c.norm_gain), &p(c.norm_bias), NORM_EPS).unwrap();
        let e = kernels::pointwise_linear(&n2, &p(c.expand_w), &p(c.expand_b)).unwrap();
        let a = kernels::gelu(&e);
        let f_cm = kernels::pointwise_linear(&a, &p(c.contract_w), &p(c.contract_b)).unwrap();
        let z: Vec<f64> = f_cm
            .data()
            .iter()
            .zip(y.data())
            .map(|(a, b)| a + b)
            .collect();

        let mut g = Graph::new();
        let b = bind(&mut g, &store, Binding::Frozen);
        let hv = g.constant(h.clone());
        let out = srnerv_block(
            &mut g,
            hv,
            &SpatialVars::select(&s, &b.used),
            &ChannelVars::select(&c, &b.used),
        )
        .unwrap();
        assert_eq!(g.value(out).data(), z.as_slice());
    }

    #[test]
    fn zeroed_channel_branch_leaves_spatial_residual() {
        let cfg = tiny(ShareMode::Hybrid);
        let mut store = ParameterStore::<f64>::build(&cfg, 4).unwrap();
        randomize(&mut store, 3);
        let c = store.layout().channel[0];
        for i in [c.contract_w, c.contract_b] {
            store.param_mut(i).value.data_mut().fill(0.0);
        }
        let s = store.layout().spatial[0];
        let h = Tensor::from_fn(&[4, 4, 6], |i| (i as f64 * 0.71).sin());
        let mut g = Graph::new();
        let b = bind(&mut g, &store, Binding::Frozen);
        let hv = g.constant(h.clone());
        let sm = SpatialVars::select(&s, &b.used);
        let z = srnerv_block(&mut g, hv, &sm, &ChannelVars::select(&c, &b.used)).unwrap();
        let f = spatial_mixing(&mut g, hv, &sm).unwrap();
        let diff: Vec<f64> = g
            .value(z)
            .data()
            .iter()
            .zip(h.data())
            .map(|(a, b)| a - b)
            .collect();
        for (d, e) in diff.iter().zip(g.value(f).data()) {
            assert!((d - e).abs() < 1e-14);
        }
    }
}
