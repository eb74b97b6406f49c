use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::network::{
    backward, draw_noise, forward, loss, normalization_correction, predictions, receiver_backward,
    transmitter_backward, update_running_stats, Batch, BnMode,
};
use super::ota::{from_wirtinger, ota_grad_f1, ota_grad_f2, to_wirtinger};
use super::state::{NetState, Params, PhaseMode, PhaseParams};
use super::{TrainConfig, TrainMode, STREAM_EVAL, STREAM_FEEDBACK, STREAM_FORWARD};
use crate::channel::ChannelRealization;
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Floor applied to the trainable transmit power after every step.
pub const P_TX_FLOOR: f64 = 1e-12;

/// Adaptive-moment gradient descent over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(lr: f64, len: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// One row of the metric trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_accuracy: f64,
    #[serde(rename = "P_Tx")]
    pub p_tx: f64,
    #[serde(rename = "max|v|")]
    pub max_abs_v: f64,
}

pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: NetState,
    pub trace: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn final_accuracy(&self) -> f64 {
        self.trace.last().map_or(0.0, |m| m.test_accuracy)
    }
}

/// Stateful training loop for one channel realization.
pub struct Trainer<'a> {
    pub cfg: TrainConfig,
    pub p_max: f64,
    pub sigma2: f64,
    pub ch: &'a ChannelRealization<f64>,
    pub state: NetState,
    adam: Adam,
    forward_rng: ChaCha12Rng,
    feedback_rng: ChaCha12Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &TrainConfig, ch: &'a ChannelRealization<f64>, p_max: f64, sigma2: f64) -> Result<Self> {
        cfg.validate()?;
        if cfg.mode == TrainMode::Distributed && cfg.phase_mode != PhaseMode::FixedLos {
            return Err(Error::InvalidConfig(
                "distributed training keeps the RIS frozen; use phase_mode fixed_los".into(),
            ));
        }
        let state = NetState::init(cfg, ch, p_max, sigma2)?;
        Ok(Self::with_state(cfg, ch, p_max, sigma2, state))
    }

    pub fn with_state(
        cfg: &TrainConfig,
        ch: &'a ChannelRealization<f64>,
        p_max: f64,
        sigma2: f64,
        state: NetState,
    ) -> Self {
        let len = state.params.pack().len();
        Trainer {
            cfg: cfg.clone(),
            p_max,
            sigma2,
            ch,
            adam: Adam::new(cfg.learning_rate, len),
            forward_rng: stream(cfg.seed, STREAM_FORWARD),
            feedback_rng: stream(cfg.seed, STREAM_FEEDBACK),
            state,
        }
    }

    /// Gradients for one batch under the configured training mode; returns
    /// the loss as well.
    pub fn gradients(&mut self, batch: &Batch) -> Result<(f64, Params)> {
        let n = self.state.n();
        let noise = draw_noise(&mut self.forward_rng, n, batch.len(), self.sigma2);
        let caches = forward(&self.state, &batch.images, self.ch, &noise, BnMode::Batch, 1.0)?;
        let l = loss(&caches.logits, &batch.labels, &self.state, &self.cfg, self.p_max);
        let grads = match self.cfg.mode {
            TrainMode::Centralized => {
                backward(&self.state, &caches, &batch.labels, self.ch, &self.cfg, self.p_max).grads
            }
            TrainMode::Distributed => {
                // receiver: local layers and the combiner from what it received
                let rx = receiver_backward(&self.state, &caches, &batch.labels);
                let d_y = to_wirtinger(&rx.g_y);
                let f2 = from_wirtinger(&ota_grad_f2(&d_y, &caches.r));
                // feedback over the reciprocal channel
                let cascade = &self.state.params.f2 * &caches.h;
                let fb_noise = draw_noise(&mut self.feedback_rng, n, batch.len(), self.sigma2);
                let fb = ota_grad_f1(&cascade, &d_y, &caches.x_out, &fb_noise);
                // transmitter: chain the received signal through its own layers
                let g_s = from_wirtinger(&fb.received);
                let tx = transmitter_backward(&self.state, &caches, &g_s, &self.cfg, self.p_max);
                let f1 = from_wirtinger(&fb.f1) + normalization_correction(&g_s, &caches);
                Params {
                    conv_w: tx.conv_w,
                    conv_b: tx.conv_b,
                    fc_w: tx.fc_w,
                    fc_b: tx.fc_b,
                    bn_gamma_re: tx.bn_gamma_re,
                    bn_gamma_im: tx.bn_gamma_im,
                    bn_beta_re: tx.bn_beta_re,
                    bn_beta_im: tx.bn_beta_im,
                    f1,
                    f2,
                    phases: PhaseParams::Frozen,
                    p_tx: tx.p_tx,
                    out_w: rx.out_w,
                    out_b: rx.out_b,
                }
            }
        };
        update_running_stats(&mut self.state, &caches);
        Ok((l, grads))
    }

    /// One optimizer step; returns the batch loss.
    pub fn step(&mut self, batch: &Batch) -> Result<f64> {
        let (l, grads) = self.gradients(batch)?;
        let mut flat = self.state.params.pack();
        self.adam.step(&mut flat, &grads.pack());
        self.state.params.unpack(&flat);
        self.state.params.p_tx = self.state.params.p_tx.max(P_TX_FLOOR);
        Ok(l)
    }

    /// Full run over `cfg.epochs`, evaluating on `test` after every epoch.
    pub fn run(mut self, train: &Dataset, test: &Dataset) -> Result<TrainOutcome> {
        let mut trace = Vec::with_capacity(self.cfg.epochs);
        let mut eval_rng = stream(self.cfg.seed, STREAM_EVAL);
        for epoch in 0..self.cfg.epochs {
            let order = train.batches(self.cfg.batch_size, self.cfg.batch_seed(), epoch as u64)?;
            let mut total = 0.0;
            for (bi, idx) in order.iter().enumerate() {
                let batch = Batch::from_dataset(train, idx);
                let l = self.step(&batch)?;
                if !l.is_finite() || !self.state.params.all_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        batch: bi,
                        loss: l,
                    });
                }
                total += l;
            }
            let acc = evaluate(
                &self.state,
                self.ch,
                test,
                self.cfg.batch_size,
                self.sigma2,
                &mut eval_rng,
            )?;
            let row = EpochMetrics {
                epoch: epoch + 1,
                train_loss: total / order.len() as f64,
                test_accuracy: acc,
                p_tx: self.state.params.p_tx,
                max_abs_v: self.state.max_abs_v(),
            };
            log::info!(
                "epoch {} loss {:.4} acc {:.4} P_Tx {:.4e}",
                row.epoch,
                row.train_loss,
                row.test_accuracy,
                row.p_tx
            );
            trace.push(row);
        }
        Ok(TrainOutcome {
            state: self.state,
            trace,
        })
    }
}

/// Test accuracy with running batch-norm statistics and fresh channel noise.
/// The last partial chunk transmits at a proportionally reduced power.
pub fn evaluate(
    state: &NetState,
    ch: &ChannelRealization<f64>,
    ds: &Dataset,
    batch_size: usize,
    sigma2: f64,
    rng: &mut ChaCha12Rng,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let idx: Vec<usize> = (0..ds.len()).collect();
    let mut correct = 0usize;
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = Batch::from_dataset(ds, chunk);
        let noise = draw_noise(rng, state.n(), chunk.len(), sigma2);
        let share = chunk.len() as f64 / batch_size as f64;
        let caches = forward(state, &batch.images, ch, &noise, BnMode::Running, share)?;
        correct += predictions(&caches.logits)
            .iter()
            .zip(&batch.labels)
            .filter(|(p, l)| p == l)
            .count();
    }
    Ok(correct as f64 / ds.len() as f64)
}

pub fn train_centralized(
    cfg: &TrainConfig,
    ch: &ChannelRealization<f64>,
    p_max: f64,
    sigma2: f64,
    train: &Dataset,
    test: &Dataset,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        mode: TrainMode::Centralized,
        ..cfg.clone()
    };
    Trainer::new(&cfg, ch, p_max, sigma2)?.run(train, test)
}

pub fn train_distributed(
    cfg: &TrainConfig,
    ch: &ChannelRealization<f64>,
    p_max: f64,
    sigma2: f64,
    train: &Dataset,
    test: &Dataset,
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        mode: TrainMode::Distributed,
        phase_mode: PhaseMode::FixedLos,
        ..cfg.clone()
    };
    Trainer::new(&cfg, ch, p_max, sigma2)?.run(train, test)
}
