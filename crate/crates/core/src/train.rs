//! SGD training loop with momentum, warmup plus cosine decay, and resumable state.

use std::f64::consts::PI;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bbox::GroundTruth;
use crate::checkpoint::Checkpoint;
use crate::config::ModelConfig;
use crate::data::{batch_tensor, AugmentPolicy, Image, Sample, SynthConfig};
use crate::error::{Error, Result};
use crate::infer::evaluate_model;
use crate::loss::{total_loss, LossBreakdown, LossConfig};
use crate::model::HieraEdgeNet;
use crate::params::{apply_updates, Ctx, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Final learning rate as a fraction of `lr`.
    pub lr_final: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    pub augment: AugmentPolicy,
    pub loss: LossConfig,
    /// Evaluate on the validation split every this many epochs (0: only at the end).
    pub eval_every: usize,
}

impl TrainConfig {
    pub fn desk(num_classes: usize) -> Self {
        TrainConfig {
            model: ModelConfig::desk(num_classes),
            epochs: 30,
            batch_size: 16,
            lr: 0.02,
            lr_final: 0.05,
            momentum: 0.9,
            weight_decay: 5e-4,
            warmup_steps: 20,
            grad_clip: 10.0,
            seed: 0,
            augment: AugmentPolicy {
                mosaic: 0.3,
                blur: 0.2,
                max_blur_sigma: 1.0,
                color: 0.5,
                color_strength: 0.1,
                flip: 0.5,
            },
            loss: LossConfig::default(),
            eval_every: 5,
        }
    }

    /// 16 scenes, one full batch per step, 200 steps, no augmentation.
    pub fn overfit() -> Self {
        TrainConfig {
            epochs: 200,
            augment: AugmentPolicy::none(),
            eval_every: 0,
            ..Self::desk(3)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let mut bad = Vec::new();
        if self.batch_size == 0 {
            bad.push("batch_size must be >= 1".to_string());
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            bad.push(format!("lr {} must be finite and >= 0", self.lr));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            bad.push(format!("momentum {} outside [0, 1)", self.momentum));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Linear warmup to `lr`, then cosine decay to `lr * lr_final`.
    pub fn lr_at(&self, step: usize, total_steps: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let t = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let lo = self.lr * self.lr_final;
        lo + 0.5 * (self.lr - lo) * (1.0 + (PI * t).cos())
    }
}

/// Scene generator settings paired with [`TrainConfig::overfit`].
pub fn overfit_scenes(seed: u64) -> SynthConfig {
    SynthConfig {
        scenes: 16,
        classes: 3,
        seed,
        min_grains: 1,
        max_grains: 3,
        long_tail: 0.0,
        ..Default::default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's batches.
    pub loss: LossBreakdown,
    pub map50: Option<f64>,
}

/// Model, parameters and optimizer state.
pub struct Trainer {
    pub cfg: TrainConfig,
    pub model: HieraEdgeNet,
    pub store: ParamStore,
    velocity: Vec<Option<Vec<f64>>>,
    pub epoch: usize,
    pub step: usize,
    pub history: Vec<EpochLog>,
    pub best_map50: Option<f64>,
    /// Sample ids of the most recent batch, kept for failure reports.
    pub last_batch: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    train: TrainConfig,
    epoch: usize,
    step: usize,
    history: Vec<EpochLog>,
    best_map50: Option<f64>,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let model = HieraEdgeNet::new(&cfg.model, &mut store, cfg.seed)?;
        let n = store.len();
        Ok(Trainer {
            cfg,
            model,
            store,
            velocity: vec![None; n],
            epoch: 0,
            step: 0,
            history: Vec::new(),
            best_map50: None,
            last_batch: Vec::new(),
        })
    }

    pub fn checkpoint(&self) -> Result<Checkpoint> {
        let extra = self
            .store
            .iter()
            .zip(&self.velocity)
            .filter_map(|((_, p), v)| {
                let v = v.as_ref()?.clone();
                Some((format!("optim.{}", p.name), Tensor::from_vec(p.value.shape(), v).ok()?))
            })
            .collect();
        let meta = Meta {
            train: self.cfg.clone(),
            epoch: self.epoch,
            step: self.step,
            history: self.history.clone(),
            best_map50: self.best_map50,
        };
        Ok(Checkpoint::capture(&self.cfg.model, &self.store, extra, serde_json::to_value(meta)?))
    }

    /// Rebuilds the trainer saved in `ck`, ready to continue with the next epoch.
    pub fn resume(ck: &Checkpoint) -> Result<Self> {
        let meta: Meta = serde_json::from_value(ck.meta.clone())?;
        let mut t = Trainer::new(meta.train)?;
        ck.restore(&mut t.store)?;
        for (i, (_, p)) in t.store.iter().enumerate() {
            t.velocity[i] = ck.get(&format!("optim.{}", p.name)).map(Tensor::to_vec);
        }
        t.epoch = meta.epoch;
        t.step = meta.step;
        t.history = meta.history;
        t.best_map50 = meta.best_map50;
        Ok(t)
    }

    fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.cfg.batch_size).max(1)
    }

    /// Forward, loss and backward on one batch; updates parameters with `lr`.
    pub fn train_step(&mut self, batch: &[Sample], lr: f64) -> Result<LossBreakdown> {
        self.last_batch = batch.iter().map(|s| s.id.clone()).collect();
        let (h, w) = self.cfg.model.input_size;
        let resized: Vec<Sample> = batch.iter().map(|s| s.resized(h, w)).collect();
        let images: Vec<&Image> = resized.iter().map(|s| &s.image).collect();
        let gts: Vec<Vec<GroundTruth>> = resized.iter().map(|s| s.gts.clone()).collect();
        let x = batch_tensor(&images)?;
        let leaves = self.store.with_grad_leaves();
        let ctx = Ctx::new(&leaves, true);
        let head = self.model.forward(&ctx, &x)?;
        let out = total_loss(&head, &gts, &self.cfg.loss)?;
        let b = out.breakdown;
        if ![b.total, b.cls, b.iou, b.dfl].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "loss at step {} (epoch {}): {:?}; batch {:?}",
                self.step, self.epoch, b, self.last_batch
            )));
        }
        out.total.backward()?;
        let updates = ctx.take_updates();

        let ids = self.store.trainable_ids();
        let grads: Vec<Vec<f64>> = ids
            .iter()
            .map(|&id| leaves.get(id).grad().unwrap_or_else(|| vec![0.0; leaves.get(id).numel()]))
            .collect();
        let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !norm.is_finite() {
            return Err(Error::NonFinite(format!(
                "gradient norm at step {} (epoch {}); batch {:?}",
                self.step, self.epoch, self.last_batch
            )));
        }
        let clip = if self.cfg.grad_clip > 0.0 && norm > self.cfg.grad_clip {
            self.cfg.grad_clip / norm
        } else {
            1.0
        };
        for (&id, g) in ids.iter().zip(grads) {
            let p = self.store.get(id);
            let decay = if p.ndim() > 1 { self.cfg.weight_decay } else { 0.0 };
            let data = p.data();
            let v = self.velocity[id.index()].get_or_insert_with(|| vec![0.0; data.len()]);
            let mut next = Vec::with_capacity(data.len());
            for i in 0..data.len() {
                v[i] = self.cfg.momentum * v[i] + g[i] * clip + decay * data[i];
                next.push(data[i] - lr * v[i]);
            }
            let t = Tensor::from_vec(p.shape(), next)?;
            self.store.set(id, t)?;
        }
        apply_updates(&mut self.store, updates)?;
        self.step += 1;
        Ok(b)
    }

    /// One pass over `train` in a seeded order; evaluates on `val` when due.
    pub fn train_epoch(&mut self, train: &[&Sample], val: &[&Sample]) -> Result<EpochLog> {
        if train.is_empty() {
            return Err(Error::Usage("empty training set".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(self.epoch as u64 + 1);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);
        let spe = self.steps_per_epoch(train.len());
        let total_steps = spe * self.cfg.epochs;
        let mut sum = LossBreakdown::default();
        let mut lr = 0.0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| {
                    if self.cfg.augment.is_identity() {
                        train[i].clone()
                    } else {
                        self.cfg.augment.apply(train[i], train, &mut rng)
                    }
                })
                .collect();
            lr = self.cfg.lr_at(self.step, total_steps);
            let b = self.train_step(&batch, lr)?;
            sum.total += b.total;
            sum.cls += b.cls;
            sum.iou += b.iou;
            sum.dfl += b.dfl;
            sum.num_pos += b.num_pos;
            sum.clamped += b.clamped;
        }
        let k = spe as f64;
        let loss = LossBreakdown {
            total: sum.total / k,
            cls: sum.cls / k,
            iou: sum.iou / k,
            dfl: sum.dfl / k,
            ..sum
        };
        self.epoch += 1;
        let due = !val.is_empty()
            && (self.epoch == self.cfg.epochs || (self.cfg.eval_every > 0 && self.epoch.is_multiple_of(self.cfg.eval_every)));
        let map50 = if due {
            Some(evaluate_model(&self.model, &self.store, val, self.cfg.batch_size)?.map50)
        } else {
            None
        };
        if let Some(m) = map50 {
            if self.best_map50.is_none_or(|b| m > b) {
                self.best_map50 = Some(m);
            }
        }
        let log = EpochLog {
            epoch: self.epoch,
            lr,
            loss,
            map50,
        };
        info!(
            "epoch {:>4} lr {:.5} loss {:.4} (cls {:.4} iou {:.4} dfl {:.4}, {} pos){}",
            log.epoch,
            lr,
            loss.total,
            loss.cls,
            loss.iou,
            loss.dfl,
            loss.num_pos,
            map50.map(|m| format!(" map50 {m:.4}")).unwrap_or_default()
        );
        self.history.push(log.clone());
        Ok(log)
    }

    pub fn finished(&self) -> bool {
        self.epoch >= self.cfg.epochs
    }
}

/// CSV header matching [`csv_row`].
pub const CSV_HEADER: &str = "epoch,lr,total,cls,iou,dfl,num_pos,clamped,map50";

pub fn csv_row(l: &EpochLog) -> String {
    format!(
        "{},{:.8},{:.10},{:.10},{:.10},{:.10},{},{},{}",
        l.epoch,
        l.lr,
        l.loss.total,
        l.loss.cls,
        l.loss.iou,
        l.loss.dfl,
        l.loss.num_pos,
        l.loss.clamped,
        l.map50.map(|m| format!("{m:.6}")).unwrap_or_default()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_shape() {
        let c = TrainConfig::desk(3);
        assert!((c.lr_at(0, 100) - c.lr / 20.0).abs() < 1e-15);
        assert!((c.lr_at(19, 100) - c.lr).abs() < 1e-15);
        assert!((c.lr_at(100, 100) - c.lr * c.lr_final).abs() < 1e-15);
        assert!(c.lr_at(50, 100) < c.lr && c.lr_at(50, 100) > c.lr * c.lr_final);
    }
}
