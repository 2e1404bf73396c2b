//! Covariance construction for each kernel strategy.
//!
//! Pre-training and the mixture fit depend only on the auxiliary data, so
//! a [`KernelFactory`] runs each at most once and shares the result across
//! methods and repetitions.

use std::sync::OnceLock;

use mkbo_core::bo::{pretrain_kernel, PretrainConfig, Provenance};
use mkbo_core::dataset::AffineMap;
use mkbo_core::mixture::{mixture_kernel_fit, weight_grid, MixtureFit};
use mkbo_core::{BoError, KernelSpec, LabeledDataset, UnitBoxMap};
use serde::{Deserialize, Serialize};

use crate::config::{HyperGrids, MixtureGrids, PretrainGrids, Strategy};
use crate::error::Error;

/// What the session needs besides the candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltKernel {
    pub spec: KernelSpec,
    /// Scale grid for per-iteration marginal-likelihood selection.
    pub scale_grid: Option<Vec<f64>>,
    pub provenance: KernelProvenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProvenance {
    pub strategy: Strategy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pretrain: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureFit>,
    /// Mean inner-kernel diagonal over the candidates, which scales the
    /// outer sigma grid of the composite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_diagonal: Option<f64>,
}

/// Auxiliary data in BO coordinates: inputs through the search-space map,
/// targets min-max scaled to `[0, 1]`.
pub fn prepare_aux(raw: &LabeledDataset, map: &UnitBoxMap) -> Result<LabeledDataset, Error> {
    let y = AffineMap::fit(raw.ys().iter().copied()).ok_or(mkbo_core::DatasetError::Empty)?;
    if let Some(n) = raw.dimension() {
        if n != map.x.len() {
            return Err(Error::Config(format!(
                "aux dataset has dimension {n}, search space has {}",
                map.x.len()
            )));
        }
    }
    Ok(LabeledDataset::from_rows(
        raw.rows().map(|(x, v)| (map.forward_x(x), y.forward(v))),
    )?)
}

pub struct KernelFactory {
    aux: Option<LabeledDataset>,
    hypers: HyperGrids,
    pretrain: PretrainGrids,
    mixture: MixtureGrids,
    pretrained: OnceLock<Result<(KernelSpec, Provenance), String>>,
    mixed: OnceLock<Result<(KernelSpec, MixtureFit), String>>,
}

impl KernelFactory {
    pub fn new(
        aux: Option<LabeledDataset>,
        hypers: HyperGrids,
        pretrain: PretrainGrids,
        mixture: MixtureGrids,
    ) -> Self {
        Self {
            aux,
            hypers,
            pretrain,
            mixture,
            pretrained: OnceLock::new(),
            mixed: OnceLock::new(),
        }
    }

    pub fn hypers(&self) -> &HyperGrids {
        &self.hypers
    }

    fn aux(&self, strategy: Strategy) -> Result<&LabeledDataset, Error> {
        self.aux
            .as_ref()
            .ok_or_else(|| Error::Config(format!("strategy {} needs an aux dataset", strategy.name())))
    }

    /// Re-weighted spec before any normalisation.
    fn pretrained(&self, strategy: Strategy) -> Result<(KernelSpec, Provenance), Error> {
        let aux = self.aux(strategy)?;
        let r = self.pretrained.get_or_init(|| {
            let cfg = PretrainConfig {
                c_grid: self.pretrain.c_grid.clone(),
                scale_grid: self.hypers.sigma_grid.clone(),
                epsilon: self.pretrain.epsilon,
                normalize: false,
                gp_scale: None,
            };
            let base = KernelSpec::se(self.hypers.sigma_grid[0]).map_err(|e| e.to_string())?;
            pretrain_kernel(aux, &base, &cfg).map_err(|e| e.to_string())
        });
        r.clone()
            .map_err(|m| Error::Bo(BoError::Config(format!("pre-training failed: {m}"))))
    }

    fn mixed(&self, strategy: Strategy) -> Result<(KernelSpec, MixtureFit), Error> {
        let aux = self.aux(strategy)?;
        let r = self.mixed.get_or_init(|| {
            mixture_kernel_fit(
                aux,
                &weight_grid(&self.mixture.levels),
                &self.hypers.sigma_grid,
                &self.mixture.noise_grid,
            )
            .map_err(|e| e.to_string())
        });
        r.clone()
            .map_err(|m| Error::Bo(BoError::Config(format!("mixture fit failed: {m}"))))
    }

    pub fn build(&self, strategy: Strategy, candidates: &[Vec<f64>]) -> Result<BuiltKernel, Error> {
        let mut provenance = KernelProvenance {
            strategy,
            pretrain: None,
            mixture: None,
            inner_diagonal: None,
        };
        let (spec, scale_grid) = match strategy {
            Strategy::PlainSe => (
                KernelSpec::se(self.hypers.sigma_grid[0])?,
                Some(self.hypers.sigma_grid.clone()),
            ),
            Strategy::Mixture => {
                let (spec, fit) = self.mixed(strategy)?;
                provenance.mixture = Some(fit);
                (spec, None)
            }
            Strategy::Reweighted => {
                let (spec, prov) = self.pretrained(strategy)?;
                provenance.pretrain = Some(prov);
                let spec = if self.pretrain.normalize {
                    spec.normalize()
                } else {
                    spec
                };
                (spec, None)
            }
            Strategy::ReweightedComposite => {
                let (inner, prov) = self.pretrained(strategy)?;
                provenance.pretrain = Some(prov);
                let mut sum = 0.0;
                for x in candidates {
                    sum += inner.eval2(x, x)?;
                }
                let mean = sum / candidates.len().max(1) as f64;
                if !(mean > 0.0 && mean.is_finite()) {
                    return Err(BoError::ZeroKernel.into());
                }
                provenance.inner_diagonal = Some(mean);
                let grid: Vec<f64> = self.hypers.sigma_grid.iter().map(|s| s * mean).collect();
                (KernelSpec::composite(grid[0], inner)?, Some(grid))
            }
        };
        Ok(BuiltKernel {
            spec,
            scale_grid,
            provenance,
        })
    }
}
