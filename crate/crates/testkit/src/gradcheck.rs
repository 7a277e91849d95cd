//! Central finite differences against the tape gradients.

use srnerv_core::model::{forward_frame, ParameterStore, ShareMode};
use srnerv_core::tensor::{Graph, Tensor, Var};
use srnerv_core::train::loss_graph;
use srnerv_core::Scalar;

use crate::models::{randomize, tiny_config};
use crate::Lcg;

/// Small enough that truncation stays below 1e-6 relative even next to a
/// near-degenerate layer norm, large enough for f64 roundoff.
pub const FD_STEP: f64 = 1e-6;

/// `sum(out * R)` for a fixed pseudo-random `R`, so gradients are not all
/// equal.
pub fn project<S: Scalar>(g: &mut Graph<S>, out: Var) -> Var {
    let shape = g.value(out).shape().to_vec();
    let mut r = Lcg(0x5eed);
    let w = Tensor::from_fn(&shape, |_| S::lit(0.5 + r.uniform()));
    let w = g.constant(w);
    let prod = g.mul(out, w).unwrap();
    g.sum(prod)
}

/// Differentiable function of several tensors, buildable at any precision.
pub trait Case {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, xs: &[Var]) -> Var;
}

fn eval_f64(case: &impl Case, inputs: &[Tensor<f64>]) -> f64 {
    let mut g = Graph::<f64>::new();
    let xs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = case.build(&mut g, &xs);
    let l = project(&mut g, out);
    g.value(l).item().unwrap()
}

/// Largest norm-wise relative error between the analytic gradients at
/// precision `S` and central differences of the f64 function.
pub fn grad_error<S: Scalar>(case: &impl Case, inputs: &[Tensor<f64>]) -> f64 {
    // evaluate both sides on values representable at S
    let inputs: Vec<Tensor<f64>> = inputs.iter().map(|t| t.cast::<S>().cast::<f64>()).collect();
    let mut g = Graph::<S>::new();
    let xs: Vec<Var> = inputs.iter().map(|t| g.param(t.cast())).collect();
    let out = case.build(&mut g, &xs);
    let l = project(&mut g, out);
    g.backward(l).unwrap();
    let mut worst: f64 = 0.0;
    for (i, x) in xs.iter().enumerate() {
        let analytic = g.grad(*x).unwrap().cast::<f64>();
        let mut num = vec![0.0; inputs[i].len()];
        for (j, n) in num.iter_mut().enumerate() {
            let base = inputs[i].data()[j];
            let h = FD_STEP * base.abs().max(1.0);
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] = base + h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] = base - h;
            *n = (eval_f64(case, &plus) - eval_f64(case, &minus)) / (2.0 * h);
        }
        let diff: f64 = analytic
            .data()
            .iter()
            .zip(&num)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = analytic.data().iter().map(|a| a * a).sum::<f64>().sqrt();
        let nn = num.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / na.max(nn).max(1e-6));
    }
    worst
}

#[derive(Debug, Clone, Copy)]
pub enum Op {
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    AddScalar,
    Abs,
    Mean,
    Sigmoid,
    Gelu,
    LayerNorm,
    Depthwise,
    Pointwise,
    Upsample,
    Blur,
    Lerp(usize, usize, f64),
    Loss(f64),
}

impl Case for Op {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, x: &[Var]) -> Var {
        match *self {
            Op::Add => g.add(x[0], x[1]).unwrap(),
            Op::Sub => g.sub(x[0], x[1]).unwrap(),
            Op::Mul => g.mul(x[0], x[1]).unwrap(),
            Op::Div => g.div(x[0], x[1]).unwrap(),
            Op::Scale => g.scale(x[0], S::lit(-1.7)),
            Op::AddScalar => {
                let y = g.add_scalar(x[0], S::lit(0.3));
                g.mul(y, y).unwrap()
            }
            Op::Abs => g.abs(x[0]),
            Op::Mean => {
                let m = g.mean(x[0]);
                let y = g.mul(x[0], x[0]).unwrap();
                let s = g.sum(y);
                g.mul(m, s).unwrap()
            }
            Op::Sigmoid => g.sigmoid(x[0]),
            Op::Gelu => g.gelu(x[0]),
            Op::LayerNorm => g.layer_norm(x[0], x[1], x[2], 1e-6).unwrap(),
            Op::Depthwise => g.depthwise_conv2d(x[0], x[1], x[2]).unwrap(),
            Op::Pointwise => g.pointwise_linear(x[0], x[1], x[2]).unwrap(),
            Op::Upsample => g.bilinear_upsample2(x[0]).unwrap(),
            Op::Blur => g.gaussian_blur(x[0], 1.5, 5).unwrap(),
            Op::Lerp(lo, hi, w) => g.lerp_slices(x[0], lo, hi, S::lit(w)).unwrap(),
            Op::Loss(lambda) => loss_graph(g, x[0], x[1], lambda).unwrap(),
        }
    }
}

fn away_from_zero(t: &mut Tensor<f64>, margin: f64) {
    for v in t.data_mut() {
        if v.abs() < margin {
            *v = if *v < 0.0 { -margin } else { margin };
        }
    }
}

/// Random inputs for `op`, at most `8 x 8 x 4` except where the op needs more.
pub fn instance(op: Op, r: &mut Lcg) -> Vec<Tensor<f64>> {
    let h = 1 + r.below(8);
    let w = 1 + r.below(8);
    let c = 1 + r.below(4);
    let x = r.tensor(&[h, w, c], 1.0);
    match op {
        Op::Add | Op::Sub | Op::Mul => vec![x, r.tensor(&[h, w, c], 1.0)],
        Op::Div => {
            let mut d = r.tensor(&[h, w, c], 1.0);
            away_from_zero(&mut d, 0.5);
            vec![x, d]
        }
        Op::Abs => {
            let mut x = x;
            away_from_zero(&mut x, 0.05);
            vec![x]
        }
        Op::LayerNorm => {
            // with two channels the normalized output is +-1 up to eps, so
            // the input gradient is pure rounding noise
            let c = 3 + r.below(2);
            vec![
                r.tensor(&[h, w, c], 1.0),
                r.tensor(&[c], 1.0),
                r.tensor(&[c], 0.5),
            ]
        }
        Op::Depthwise => {
            let k = [1, 3, 5][r.below(3)];
            vec![x, r.tensor(&[k, k, c], 0.5), r.tensor(&[c], 0.5)]
        }
        Op::Pointwise => {
            let out = 1 + r.below(4);
            vec![x, r.tensor(&[out, c], 0.5), r.tensor(&[out], 0.5)]
        }
        Op::Upsample => {
            let (h, w) = (1 + r.below(4), 1 + r.below(4));
            vec![r.tensor(&[h, w, c], 1.0)]
        }
        Op::Lerp(..) => vec![r.tensor(&[3, h, w, c], 1.0)],
        Op::Loss(_) => {
            // SSIM needs the full window
            let (h, w) = (11 + r.below(2), 11 + r.below(2));
            let a = Tensor::from_fn(&[h, w, 3], |_| 0.5 + 0.4 * r.uniform());
            let mut b = Tensor::from_fn(&[h, w, 3], |_| 0.5 + 0.4 * r.uniform());
            // keep |a - b| clear of the L1 kink
            for (y, x) in b.data_mut().iter_mut().zip(a.data()) {
                if (*y - x).abs() < 1e-3 {
                    *y = x + 1e-3;
                }
            }
            vec![a, b]
        }
        _ => vec![x],
    }
}

/// Every differentiable op, with random lerp endpoints.
pub fn ops(r: &mut Lcg) -> Vec<Op> {
    let w = r.uniform().abs();
    vec![
        Op::Add,
        Op::Sub,
        Op::Mul,
        Op::Div,
        Op::Scale,
        Op::AddScalar,
        Op::Abs,
        Op::Mean,
        Op::Sigmoid,
        Op::Gelu,
        Op::LayerNorm,
        Op::Depthwise,
        Op::Pointwise,
        Op::Upsample,
        Op::Blur,
        Op::Lerp(r.below(3), r.below(3), w),
        Op::Loss(0.0),
        Op::Loss(0.3),
    ]
}

/// Rendering one frame, with every stored tensor as an input.
pub struct Generate {
    pub store: ParameterStore<f64>,
    pub t: usize,
}

impl Case for Generate {
    fn build<S: Scalar>(&self, g: &mut Graph<S>, xs: &[Var]) -> Var {
        forward_frame(g, &self.store.cast::<S>(), xs, self.t).unwrap()
    }
}

pub fn generate_instance(seed: u64) -> (Generate, Vec<Tensor<f64>>) {
    let mut r = Lcg(seed);
    let mode = ShareMode::ALL[r.below(3)];
    let cfg = tiny_config(&mut r, mode);
    let mut store = ParameterStore::<f64>::build(&cfg, seed).unwrap();
    // zero-initialized branches would hide their gradients
    randomize(&mut store, seed ^ 0xabc, 0.6);
    let t = r.below(cfg.frames);
    let inputs = store.params().iter().map(|p| p.value.clone()).collect();
    (Generate { store, t }, inputs)
}

/// Tolerances: 1e-4 with f64 gradients, 1e-3 with f32.
pub const TOL_F64: f64 = 1e-4;
pub const TOL_F32: f64 = 1e-3;

/// Checks every op on one random instance at both precisions.
pub fn check_ops(seed: u64) -> Result<(), String> {
    let mut r = Lcg(seed);
    for op in ops(&mut r) {
        let inputs = instance(op, &mut r);
        let e64 = grad_error::<f64>(&op, &inputs);
        let e32 = grad_error::<f32>(&op, &inputs);
        if !(e64 < TOL_F64 && e32 < TOL_F32) {
            return Err(format!("{op:?} seed {seed}: f64 {e64:.2e} f32 {e32:.2e}"));
        }
    }
    Ok(())
}

/// Checks a random tiny generator at both precisions.
pub fn check_generate(seed: u64) -> Result<(), String> {
    let (case, inputs) = generate_instance(seed);
    let e64 = grad_error::<f64>(&case, &inputs);
    let e32 = grad_error::<f32>(&case, &inputs);
    if e64 < TOL_F64 && e32 < TOL_F32 {
        Ok(())
    } else {
        Err(format!("generate seed {seed}: f64 {e64:.2e} f32 {e32:.2e}"))
    }
}
