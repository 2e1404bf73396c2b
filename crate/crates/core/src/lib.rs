//! Bayesian optimisation with pre-trained (re-weighted) free kernels.
//!
//! The crate is `no_std` with `alloc`. File formats, the CLI and the HTTP
//! service live in the `mkbo` companion crate.
#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;

#[cfg(any(feature = "std", test))]
extern crate std;

pub mod bo;
pub mod dataset;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod mixture;
pub mod oracle;
pub mod sim;
pub mod svm;

pub use dataset::{LabeledDataset, UnitBoxMap};
pub use error::{BoError, DatasetError, GpError, KernelError, SvmError};
pub use gp::{GpModel, Posterior};
pub use kernel::{gram, m_inner, Anchor, KernelKind, KernelSpec, PreparedPoint, ReweightSet};
