//! Pre-training a covariance function from auxiliary data.

use alloc::vec::Vec;

use crate::dataset::LabeledDataset;
use crate::error::{BoError, SvmError};
use crate::kernel::KernelSpec;
use crate::svm::{loo_mse_select, train_svr, SvmConfig};

/// Coefficients at or below this magnitude are dropped from the anchors.
pub const ANCHOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PretrainConfig {
    pub c_grid: Vec<f64>,
    pub scale_grid: Vec<f64>,
    pub epsilon: f64,
    pub normalize: bool,
    /// Scale of the GP kernel; defaults to the SVM's selected scale.
    #[cfg_attr(feature = "serde", serde(default))]
    pub gp_scale: Option<f64>,
}

/// How a pre-trained kernel was obtained.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Provenance {
    pub c: f64,
    pub sigma: Option<f64>,
    pub loo_mse: f64,
    pub support_vectors: usize,
    pub trainings: usize,
}

/// Select `(C, sigma)` by LOO-MSE, train a `q = 1` ε-SVR on `aux`, and
/// re-weight `base` by its non-zero dual coefficients.
pub fn pretrain_kernel(
    aux: &LabeledDataset,
    base: &KernelSpec,
    config: &PretrainConfig,
) -> Result<(KernelSpec, Provenance), BoError> {
    if aux.len() < 3 {
        return Err(SvmError::TooFewSamples {
            needed: 3,
            got: aux.len(),
        }
        .into());
    }
    let sel = loo_mse_select(aux, base, &config.c_grid, &config.scale_grid, config.epsilon)?;
    let svm_spec = match sel.sigma {
        Some(s) => base.with_scale(s)?,
        None => base.clone(),
    };
    let model = train_svr(aux, &svm_spec, &SvmConfig::regression(1, sel.c, config.epsilon))?;
    let anchors = model.support_vectors(ANCHOR_TOLERANCE);
    if anchors.is_empty() {
        return Err(BoError::ZeroKernel);
    }
    let support_vectors = anchors.len();
    let gp_base = match config.gp_scale {
        Some(s) => base.with_scale(s)?,
        None => svm_spec,
    };
    let mut spec = gp_base.reweight(anchors)?;
    if config.normalize {
        spec = spec.normalize();
    }
    Ok((
        spec,
        Provenance {
            c: sel.c,
            sigma: sel.sigma,
            loo_mse: sel.loo_mse,
            support_vectors,
            trainings: sel.trainings,
        },
    ))
}
