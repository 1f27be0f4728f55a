//! Keystroke-dynamics verification benchmark engine.
//!
//! The pipeline runs raw keystroke events through feature extraction, a
//! seeded comparison plan, a verifier that turns session pairs into
//! similarity scores, and finally the verification and fairness metric
//! suites. Every stage hands off through plain files so any stage can be
//! swapped for an external tool.

pub mod dataset;
pub mod error;
pub mod fairness;
pub mod features;
pub mod metrics;
pub mod pipeline;
pub mod protocol;
pub mod rng;
pub mod synth;
pub(crate) mod textio;
pub mod verifier;

pub use error::{KvcError, Result};
