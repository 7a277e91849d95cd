use crate::model::ParameterStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `lr_min + (lr_max - lr_min) * (1 + cos(pi * step / total)) / 2`.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let frac = step.min(total) as f64 / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per stored tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<S> {
    pub m: Vec<Vec<S>>,
    pub v: Vec<Vec<S>>,
    pub step: u64,
}

impl<S: Scalar> OptimizerState<S> {
    pub fn new(store: &ParameterStore<S>) -> Self {
        let zeros = || {
            store
                .params()
                .iter()
                .map(|p| vec![S::zero(); p.value.len()])
                .collect()
        };
        Self {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One bias-corrected Adam update. Masked entries are left untouched.
pub fn adam_step<S: Scalar>(
    store: &mut ParameterStore<S>,
    grads: &[Tensor<S>],
    opt: &mut OptimizerState<S>,
    lr: f64,
    hp: AdamParams,
) {
    assert_eq!(grads.len(), store.params().len(), "one gradient per tensor");
    opt.step += 1;
    let t = opt.step as i32;
    let bc1 = 1.0 - hp.beta1.powi(t);
    let bc2 = 1.0 - hp.beta2.powi(t);
    let (b1, b2) = (S::lit(hp.beta1), S::lit(hp.beta2));
    let (one_b1, one_b2) = (S::lit(1.0 - hp.beta1), S::lit(1.0 - hp.beta2));
    for (i, (p, g)) in store.params_mut().iter_mut().zip(grads).enumerate() {
        assert_eq!(p.value.shape(), g.shape(), "gradient shape of `{}`", p.name);
        let mask = p.mask.as_deref();
        let (m, v) = (&mut opt.m[i], &mut opt.v[i]);
        for (j, (w, &gj)) in p.value.data_mut().iter_mut().zip(g.data()).enumerate() {
            if mask.is_some_and(|mk| mk[j]) {
                continue;
            }
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            let mhat = m[j].f64() / bc1;
            let vhat = v[j].f64() / bc2;
            *w -= S::lit(lr * mhat / (vhat.sqrt() + hp.eps));
        }
    }
}
