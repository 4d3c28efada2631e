//! Spread of the output SNR in noisy compressed sensing.
//!
//! Sensing-matrix ensembles, sparse signals, SNR definitions, closed-form
//! distributions and coefficients of variation, and the Monte Carlo
//! experiments that check them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod ensembles;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod random;
pub mod signals;
pub mod snr;
pub mod stats;

pub use analytic::{analytic_cv, GammaParams};
pub use ensembles::{draw_matrix, MatrixEnsemble, SensingMatrix};
pub use error::{Error, Result};
pub use experiments::{ExperimentConfig, SupportPlan, SupportSource};
pub use linalg::Matrix;
pub use random::{RandomStream, StreamId};
pub use signals::{MagnitudeKind, MagnitudeModel, SparseSignal};
pub use snr::{NoiseSpec, SnrContext, SnrValue};
pub use stats::SnrStats;
