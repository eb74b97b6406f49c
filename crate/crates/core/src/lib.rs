//! Over-the-air fully-connected layers through reconfigurable intelligent
//! surfaces: channel sampling, emulation of a digital layer by precoder,
//! combiner and RIS design, and end-to-end training of the physical layer.

pub mod airnn;
pub mod channel;
pub mod data;
pub mod dump;
pub mod emulator;
pub mod error;
pub mod experiment;
pub mod numerics;

pub use channel::{
    effective_channel, los_aligned_phases, rank_bound_check, sample_channel, ReflectionMode, RicianFactor, SystemConfig,
};
pub use emulator::{run_algorithm1, AlgorithmSettings, EmulationReport};
pub use error::{Error, Result};

pub type Complex64 = num_complex::Complex<f64>;
pub type ComplexMatrix = numerics::CMatrix<f64>;
pub type ComplexVector = numerics::CVector<f64>;
pub type ChannelRealization = channel::ChannelRealization<f64>;
pub type RisPhases = channel::RisPhases<f64>;
pub type TargetLayer = emulator::TargetLayer<f64>;
pub type TransmissionParams = emulator::TransmissionParams<f64>;
