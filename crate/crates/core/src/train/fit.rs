use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::loss::loss_graph;
use super::optim::{adam_step, cosine_lr, AdamParams, OptimizerState};
use super::prune::prune_global;
use super::TrainError;
use crate::media::VideoTensor;
use crate::metrics::psnr_from_mse;
use crate::model::{bind, forward_frame, Binding, ModelConfig, ParameterStore};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    /// PSNR of the step's batch before the update.
    pub psnr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<LogRecord>,
}

impl TrainLog {
    /// `step,lr,loss,psnr` with a header row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,lr,loss,psnr\n");
        for r in &self.records {
            writeln!(s, "{},{},{},{}", r.step, r.lr, r.loss, r.psnr).unwrap();
        }
        s
    }

    pub fn last(&self) -> Option<&LogRecord> {
        self.records.last()
    }
}

/// Frame batches in step order: every epoch visits each frame once in a
/// seeded random order, split into chunks of `batch`.
pub struct FrameSchedule {
    rng: ChaCha8Rng,
    frames: usize,
    batch: usize,
    pending: Vec<Vec<usize>>,
}

impl FrameSchedule {
    pub fn new(frames: usize, batch: usize, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            frames,
            batch,
            pending: Vec::new(),
        }
    }
}

impl Iterator for FrameSchedule {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pending.is_empty() {
            let mut order: Vec<usize> = (0..self.frames).collect();
            order.shuffle(&mut self.rng);
            self.pending = order
                .chunks(self.batch)
                .rev()
                .map(<[usize]>::to_vec)
                .collect();
        }
        self.pending.pop()
    }
}

/// Loss, batch PSNR and one gradient per stored tensor for a batch of frames.
pub fn batch_gradients<S: Scalar>(
    store: &ParameterStore<S>,
    targets: &[Tensor<S>],
    batch: &[usize],
    binding: Binding,
    lambda: f64,
) -> Result<(f64, f64, Vec<Tensor<S>>), TrainError> {
    let mut g = Graph::new();
    let bound = bind(&mut g, store, binding);
    let mut total = None;
    let mut sq = 0.0;
    let mut count = 0usize;
    for &t in batch {
        let pred = forward_frame(&mut g, store, &bound.used, t)?;
        let target = g.constant(targets[t].clone());
        let l = loss_graph(&mut g, pred, target, lambda)?;
        for (p, q) in g.value(pred).data().iter().zip(targets[t].data()) {
            sq += (p.f64() - q.f64()).powi(2);
        }
        count += targets[t].len();
        total = Some(match total {
            None => l,
            Some(acc) => g.add(acc, l)?,
        });
    }
    let total = total.expect("non-empty batch");
    let loss = g.scale(total, S::lit(1.0 / batch.len() as f64));
    let value = g.value(loss).item().unwrap().f64();
    g.backward(loss)?;
    let grads = bound
        .leaves
        .iter()
        .map(|&v| g.grad(v).expect("leaf requires grad"))
        .collect();
    Ok((value, psnr_from_mse(sq / count as f64), grads))
}

fn frame_targets<S: Scalar>(video: &VideoTensor) -> Vec<Tensor<S>> {
    (0..video.frames()).map(|t| video.frame(t)).collect()
}

fn check_dims(video: &VideoTensor, cfg: &ModelConfig) -> Result<(), TrainError> {
    let want = (cfg.frames, cfg.height, cfg.width);
    if video.dims() != want {
        return Err(TrainError::Shape(format!(
            "video is {:?} but the model renders {want:?}",
            video.dims()
        )));
    }
    Ok(())
}

/// Runs `steps` optimizer steps with learning rate `lr(step)`.
fn run_steps<S: Scalar>(
    store: &mut ParameterStore<S>,
    video: &VideoTensor,
    tcfg: &TrainConfig,
    steps: usize,
    seed: u64,
    binding: Binding,
    lr: impl Fn(usize) -> f64,
) -> Result<TrainLog, TrainError> {
    check_dims(video, store.config())?;
    let targets = frame_targets::<S>(video);
    let hp = AdamParams {
        beta1: tcfg.beta1,
        beta2: tcfg.beta2,
        eps: tcfg.eps,
    };
    let mut opt = OptimizerState::new(store);
    let mut log = TrainLog::default();
    let schedule = FrameSchedule::new(video.frames(), tcfg.batch, seed);
    for (step, batch) in schedule.take(steps).enumerate() {
        let rate = lr(step);
        let (loss, psnr, grads) =
            batch_gradients(store, &targets, &batch, binding, tcfg.ssim_weight)?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step, loss });
        }
        adam_step(store, &grads, &mut opt, rate, hp);
        if let Some(p) = store.params().iter().find(|p| !p.value.is_finite()) {
            log::error!("non-finite values in `{}` after step {step}", p.name);
            return Err(TrainError::Diverged {
                step,
                loss: f64::NAN,
            });
        }
        log::trace!("step {step} lr {rate:.3e} loss {loss:.6} psnr {psnr:.3}");
        log.records.push(LogRecord {
            step,
            lr: rate,
            loss,
            psnr,
        });
    }
    Ok(log)
}

/// Trains `store` in place on the main cosine schedule.
pub fn fit_store<S: Scalar>(
    store: &mut ParameterStore<S>,
    video: &VideoTensor,
    tcfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    tcfg.validate()?;
    let total = tcfg.fit_steps(video.frames());
    run_steps(
        store,
        video,
        tcfg,
        total,
        tcfg.seed,
        Binding::Trainable,
        |s| cosine_lr(s, total, tcfg.lr_max, tcfg.lr_min),
    )
}

/// Initializes a store from `tcfg.seed` and fits it to `video`.
pub fn fit<S: Scalar>(
    video: &VideoTensor,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<(ParameterStore<S>, TrainLog), TrainError> {
    tcfg.validate()?;
    check_dims(video, mcfg)?;
    let mut store = ParameterStore::build(mcfg, tcfg.seed)?;
    let log = fit_store(&mut store, video, tcfg)?;
    Ok((store, log))
}

/// Continues training with every tensor fake-quantized to `qat_bits`, for
/// `qat_epoch_fraction` of the main schedule at a constant `lr_max / 10`.
/// Adam restarts from zero moments.
pub fn qat_finetune<S: Scalar>(
    store: &mut ParameterStore<S>,
    video: &VideoTensor,
    tcfg: &TrainConfig,
) -> Result<TrainLog, TrainError> {
    tcfg.validate()?;
    let steps = tcfg.qat_steps(video.frames());
    let lr = tcfg.lr_max / 10.0;
    let binding = Binding::FakeQuant {
        bits: tcfg.qat_bits,
    };
    run_steps(
        store,
        video,
        tcfg,
        steps,
        tcfg.seed.wrapping_add(1),
        binding,
        |_| lr,
    )
}

/// Outcome of fit, prune and QAT.
#[derive(Debug, Clone)]
pub struct PipelineOutput<S> {
    pub store: ParameterStore<S>,
    pub fit_log: TrainLog,
    pub qat_log: TrainLog,
    pub pruned: usize,
}

/// fit, then global pruning, then QAT.
pub fn run_pipeline<S: Scalar>(
    video: &VideoTensor,
    mcfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<PipelineOutput<S>, TrainError> {
    let (mut store, fit_log) = fit(video, mcfg, tcfg)?;
    let pruned = prune_global(&mut store, tcfg.prune_fraction);
    let qat_log = qat_finetune(&mut store, video, tcfg)?;
    Ok(PipelineOutput {
        store,
        fit_log,
        qat_log,
        pruned,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ShareMode;

    #[test]
    fn schedule_visits_every_frame_per_epoch() {
        let s: Vec<Vec<usize>> = FrameSchedule::new(5, 2, 1).take(6).collect();
        assert_eq!(
            s.iter().map(Vec::len).collect::<Vec<_>>(),
            [2, 2, 1, 2, 2, 1]
        );
        for epoch in s.chunks(3) {
            let mut seen: Vec<usize> = epoch.concat();
            seen.sort();
            assert_eq!(seen, [0, 1, 2, 3, 4]);
        }
        let again: Vec<Vec<usize>> = FrameSchedule::new(5, 2, 1).take(6).collect();
        assert_eq!(s, again);
    }

    fn tiny() -> (VideoTensor, ModelConfig) {
        let cfg = ModelConfig::dyadic(1, 1, 4, (2, 2, 2, 4), 2, ShareMode::Hybrid);
        let data = (0..2 * 4 * 4 * 3).map(|i| (i % 5) as f32 / 4.0).collect();
        (VideoTensor::new(2, 4, 4, data).unwrap(), cfg)
    }

    #[test]
    fn zero_steps_return_the_initial_store() {
        let (v, cfg) = tiny();
        let t = TrainConfig {
            epochs: 0,
            ssim_weight: 0.0,
            ..Default::default()
        };
        let (s, log) = fit::<f64>(&v, &cfg, &t).unwrap();
        assert_eq!(s, ParameterStore::build(&cfg, t.seed).unwrap());
        assert!(log.records.is_empty());
    }

    #[test]
    fn deterministic_and_logged() {
        let (v, cfg) = tiny();
        let t = TrainConfig {
            epochs: 3,
            ssim_weight: 0.0,
            seed: 5,
            ..Default::default()
        };
        let (a, la) = fit::<f32>(&v, &cfg, &t).unwrap();
        let (b, lb) = fit::<f32>(&v, &cfg, &t).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert_eq!(la.records.len(), 6);
        assert!(la.to_csv().starts_with("step,lr,loss,psnr\n0,0.002,"));
    }

    #[test]
    fn wrong_dims_are_rejected() {
        let (v, mut cfg) = tiny();
        cfg.frames = 3;
        cfg.grid_t = 2;
        assert!(matches!(
            fit::<f32>(&v, &cfg, &TrainConfig::default()),
            Err(TrainError::Shape(_))
        ));
    }

    #[test]
    fn divergence_is_reported() {
        let (v, cfg) = tiny();
        let t = TrainConfig {
            epochs: 2,
            lr_max: 1e300,
            ssim_weight: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            fit::<f32>(&v, &cfg, &t),
            Err(TrainError::Diverged { .. })
        ));
    }
}
