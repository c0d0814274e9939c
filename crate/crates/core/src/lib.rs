//! Hierarchical symbolic dynamic filtering of streaming, non-stationary scalar
//! time series.
//!
//! A stream is cut into slow-time epochs, each epoch is quantized into symbols
//! and summarized as D-Markov transition counts, and an online classifier
//! assigns every epoch to a known class or opens a new one. Each class is a
//! probabilistic finite state automaton learned from the epochs assigned to it.
//! An offline revision pass merges classes whose automata are too close.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the `*64` aliases
//! below fix the scalar to `f64`.

pub mod classifier;
pub mod error;
pub mod experiment;
pub mod likelihood;
pub mod revision;
pub mod scalar;
pub mod scoring;
pub mod simulators;
pub mod symbolic;

pub use classifier::{
    crp_gamma, likelihood_rate, run_stream, score_and_assign, AssignmentRecord, ClassRegistry,
    ConcentrationMode, CrpMode, HsdfConfig, SamplingMode, StreamOutcome,
};
pub use error::{HsdfError, Result};
pub use likelihood::{
    kl_divergence, log_predictive, log_predictive_stirling, log_predictive_stirling_corrected, verify_kl_equivalence,
    LogLikelihood,
};
pub use revision::{pfsa_distance, revise, DistanceReport, EtaRule, Revision};
pub use scalar::Real;
pub use simulators::{make_stream, LabeledStream, RegimeSpec, Snr, StreamConfig};
pub use symbolic::{CountMatrix, EpochBuffer, Partition, PfsaModel, SymbolString};

pub type Partition64 = Partition<f64>;
pub type PfsaModel64 = PfsaModel<f64>;
pub type HsdfConfig64 = HsdfConfig<f64>;
pub type ClassRegistry64 = ClassRegistry<f64>;
pub type AssignmentRecord64 = AssignmentRecord<f64>;
pub type LogLikelihood64 = LogLikelihood<f64>;
pub type RegimeSpec64 = RegimeSpec<f64>;
pub type LabeledStream64 = LabeledStream<f64>;

pub type Partition32 = Partition<f32>;
pub type PfsaModel32 = PfsaModel<f32>;
pub type HsdfConfig32 = HsdfConfig<f32>;
