//! Q-learning with neural function approximation on offline datasets,
//! comparing semi-gradient (TD) and true residual-gradient (RG) updates and
//! diagnosing whether a trained network sits in a good or bad value regime.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod env;
pub mod error;
pub mod evaluation;
pub mod gradients;
pub mod optimizer;
pub mod oracle;
pub mod plot;
pub mod qnet;
pub mod regime;
pub mod trainer;

pub use checkpoint::Checkpoint;
pub use config::ExperimentConfig;
pub use dataset::Dataset;
pub use env::{ActionId, EnvKind, Environment, StateVec, Transition};
pub use error::{Error, Result};
pub use gradients::GradientMode;
pub use qnet::{NetShape, ParamVec, QNetwork};
pub use regime::{RegimeReport, Verdict};
