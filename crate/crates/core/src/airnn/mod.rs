//! Trainable over-the-air network: a small complex-valued encoder whose output
//! is precoded, sent through the RIS channel, combined, and classified.
//!
//! ```text
//! 28×28 ─Conv(2, 3×3, stride 4, pad 1)→ 2×7×7 ─R2C→ 49ℂ ─ℂReLU→ ℂFC ─ℂBN→ ℂReLU
//!       ─PowerNorm→ F1 ─H(v) + n→ F2 ─C2R→ 98 ─FC→ logits
//! ```

pub mod checkpoint;
pub mod network;
pub mod ota;
pub mod state;
pub mod train;


use serde::{Deserialize, Serialize};

use crate::emulator::TargetLayer;
use crate::error::{Error, Result};
use crate::numerics::CVector;

pub use network::{backward, forward, loss, Batch, BnMode, Caches};
pub use ota::{ota_grad_f1, ota_grad_f2};
pub use state::{NetState, Params, PhaseMode, PhaseParams};
pub use train::{evaluate, train_centralized, train_distributed, EpochMetrics, TrainOutcome, Trainer};

pub const CONV_CHANNELS: usize = 2;
pub const CONV_KERNEL: usize = 3;
pub const CONV_STRIDE: usize = 4;
pub const CONV_PAD: usize = 1;
/// `⌊(28 + 2·1 − 3)/4⌋ + 1`.
pub const CONV_OUT: usize = (crate::data::SIDE + 2 * CONV_PAD - CONV_KERNEL) / CONV_STRIDE + 1;
/// Complex features after R2C; the transmission layer is `FEATURES × FEATURES`.
pub const FEATURES: usize = CONV_CHANNELS * CONV_OUT * CONV_OUT / 2;
pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_FORWARD: u64 = 1;
pub(crate) const STREAM_FEEDBACK: u64 = 2;
pub(crate) const STREAM_EVAL: u64 = 3;
const BATCH_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Centralized,
    Distributed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_p: f64,
    pub lambda_ris: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub classes: usize,
    pub learning_rate: f64,
    pub mode: TrainMode,
    pub phase_mode: PhaseMode,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_p: 100.0,
            lambda_ris: 100.0,
            epochs: 200,
            batch_size: 32,
            classes: 10,
            learning_rate: 1e-3,
            mode: TrainMode::Centralized,
            phase_mode: PhaseMode::Unit,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_p", self.lambda_p),
            ("lambda_ris", self.lambda_ris),
            ("learning_rate", self.learning_rate),
        ];
        for (name, x) in positive {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {x}")));
            }
        }
        if self.epochs == 0 || self.batch_size == 0 || self.classes == 0 {
            return Err(Error::InvalidConfig(
                "epochs, batch_size and classes must be positive".into(),
            ));
        }
        Ok(())
    }

    pub(crate) fn batch_seed(&self) -> u64 {
        self.seed ^ BATCH_SALT
    }
}

/// The digital layer realized by a state's transmission layer on an
/// ideal channel: `W = F2·F1`, no bias.
pub fn target_from_state(state: &NetState) -> TargetLayer<f64> {
    let w = &state.params.f2 * &state.params.f1;
    let n = w.nrows();
    TargetLayer {
        w,
        b: CVector::zeros(n),
    }
}
