use crate::kv::{KeyValues, KvError};

use super::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Passes over the frames. Steps per epoch are `ceil(T / batch)`.
    pub epochs: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Weight of the `1 - SSIM` term.
    pub ssim_weight: f64,
    pub prune_fraction: f64,
    pub qat_bits: u32,
    /// QAT length as a fraction of the main schedule.
    pub qat_epoch_fraction: f64,
    /// Frames per step.
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr_max: 2e-3,
            lr_min: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            ssim_weight: 0.3,
            prune_fraction: 0.15,
            qat_bits: 6,
            qat_epoch_fraction: 0.1,
            batch: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return bad(format!(
                "prune_fraction {} outside [0, 1)",
                self.prune_fraction
            ));
        }
        if !(2..=8).contains(&self.qat_bits) {
            return bad(format!("qat_bits {} outside [2, 8]", self.qat_bits));
        }
        if !(self.ssim_weight >= 0.0) {
            return bad(format!("ssim_weight {} must be >= 0", self.ssim_weight));
        }
        if self.batch == 0 {
            return bad("batch must be >= 1".into());
        }
        if !(self.lr_max >= 0.0 && self.lr_min >= 0.0 && self.lr_max.is_finite()) {
            return bad("learning rates must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)".into());
        }
        if !(self.eps > 0.0) {
            return bad("adam eps must be > 0".into());
        }
        if !(self.qat_epoch_fraction >= 0.0 && self.qat_epoch_fraction.is_finite()) {
            return bad("qat_epoch_fraction must be >= 0".into());
        }
        Ok(())
    }

    /// Optimizer steps of the main schedule on `frames` frames.
    pub fn fit_steps(&self, frames: usize) -> usize {
        self.epochs * frames.div_ceil(self.batch)
    }

    pub fn qat_steps(&self, frames: usize) -> usize {
        (self.qat_epoch_fraction * self.fit_steps(frames) as f64).round() as usize
    }

    /// Consumes training keys from `kv` over `base`.
    pub fn from_kv(kv: &mut KeyValues, base: &TrainConfig) -> Result<Self, KvError> {
        let b = base;
        Ok(Self {
            epochs: kv.take_or("epochs", b.epochs)?,
            lr_max: kv.take_or("lr_max", b.lr_max)?,
            lr_min: kv.take_or("lr_min", b.lr_min)?,
            beta1: kv.take_or("beta1", b.beta1)?,
            beta2: kv.take_or("beta2", b.beta2)?,
            eps: kv.take_or("eps", b.eps)?,
            ssim_weight: kv.take_or("ssim_weight", b.ssim_weight)?,
            prune_fraction: kv.take_or("prune_fraction", b.prune_fraction)?,
            qat_bits: kv.take_or("qat_bits", b.qat_bits)?,
            qat_epoch_fraction: kv.take_or("qat_epoch_fraction", b.qat_epoch_fraction)?,
            batch: kv.take_or("batch", b.batch)?,
            seed: kv.take_or("seed", b.seed)?,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "epochs = {}\nlr_max = {}\nlr_min = {}\nbeta1 = {}\nbeta2 = {}\neps = {}\n\
             ssim_weight = {}\nprune_fraction = {}\nqat_bits = {}\nqat_epoch_fraction = {}\n\
             batch = {}\nseed = {}\n",
            self.epochs,
            self.lr_max,
            self.lr_min,
            self.beta1,
            self.beta2,
            self.eps,
            self.ssim_weight,
            self.prune_fraction,
            self.qat_bits,
            self.qat_epoch_fraction,
            self.batch,
            self.seed
        )
    }
}
