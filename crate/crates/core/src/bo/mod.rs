//! Acquisition functions, the ask/tell loop and kernel pre-training.

pub mod acquisition;
pub mod cache;
pub mod pretrain;
pub mod session;

pub use acquisition::{acquisition_value, beta_schedule, AcquisitionKind, AcquisitionSpec};
pub use pretrain::{pretrain_kernel, PretrainConfig, Provenance};
pub use session::{run_bo, BoSession, Goal, SessionConfig, Suggestion, TraceRecord};
