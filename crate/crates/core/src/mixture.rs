//! Kernel-mixture baseline `v1 SE + v2 Matern12 + v3 Matern32` fitted by
//! leave-one-out GP regression on auxiliary data.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dataset::LabeledDataset;
use crate::error::{GpError, KernelError, SvmError};
use crate::gp::GpSolve;
use crate::kernel::{gram, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureFit {
    pub weights: [f64; 3],
    /// Shared scale: SE sigma `s`, Matérn length `sqrt(s)`.
    pub scale: f64,
    pub noise: f64,
    pub loo_mse: f64,
    pub evaluations: usize,
}

/// The three components at shared scale `s`.
pub fn mixture_components(s: f64) -> Result<[KernelSpec; 3], KernelError> {
    let l = libm::sqrt(s);
    Ok([KernelSpec::se(s)?, KernelSpec::matern12(l)?, KernelSpec::matern32(l)?])
}

/// Every combination of `levels` per weight except the all-zero one, in
/// lexicographic order.
pub fn weight_grid(levels: &[f64]) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    for &a in levels {
        for &b in levels {
            for &c in levels {
                if a != 0.0 || b != 0.0 || c != 0.0 {
                    out.push([a, b, c]);
                }
            }
        }
    }
    out
}

/// Exact-refit LOO-MSE of GP regression with Gram `k` and noise `nu2`.
pub fn gp_loo_mse(k: &DMatrix<f64>, y: &[f64], nu2: f64) -> Result<f64, GpError> {
    let n = y.len();
    let mut sub = DMatrix::zeros(n - 1, n - 1);
    let mut ys = Vec::with_capacity(n - 1);
    let mut kx = Vec::with_capacity(n - 1);
    let mut sse = 0.0;
    for held in 0..n {
        let keep: Vec<usize> = (0..n).filter(|&i| i != held).collect();
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                sub[(a, b)] = k[(i, j)];
            }
        }
        ys.clear();
        ys.extend(keep.iter().map(|&i| y[i]));
        kx.clear();
        kx.extend(keep.iter().map(|&i| k[(held, i)]));
        let solve = GpSolve::new(&sub, &ys, nu2)?;
        let mu = solve.posterior(&kx, k[(held, held)]).mean;
        sse += (mu - y[held]) * (mu - y[held]);
    }
    Ok(sse / n as f64)
}

/// Grid search over weights x scales x noises. Ties keep the earliest grid
/// point in (weights, ascending scale, ascending noise) order.
pub fn mixture_kernel_fit(
    aux: &LabeledDataset,
    weights: &[[f64; 3]],
    scale_grid: &[f64],
    noise_grid: &[f64],
) -> Result<(KernelSpec, MixtureFit), SvmError> {
    let n = aux.len();
    if n < 3 {
        return Err(SvmError::TooFewSamples { needed: 3, got: n });
    }
    if aux.xs().iter().all(|x| x == &aux.xs()[0]) {
        return Err(SvmError::DegenerateInputs);
    }
    if weights.is_empty() {
        return Err(SvmError::EmptyGrid("weights"));
    }
    if scale_grid.is_empty() {
        return Err(SvmError::EmptyGrid("sigma"));
    }
    if noise_grid.is_empty() {
        return Err(SvmError::EmptyGrid("noise"));
    }
    for w in weights {
        if w.iter().any(|v| !(*v >= 0.0)) || w.iter().all(|v| *v == 0.0) {
            return Err(SvmError::Config(alloc::format!("invalid mixture weights {w:?}")));
        }
    }
    let mut scales = scale_grid.to_vec();
    scales.sort_by(f64::total_cmp);
    let mut noises = noise_grid.to_vec();
    noises.sort_by(f64::total_cmp);

    let grams: Vec<[DMatrix<f64>; 3]> = scales
        .iter()
        .map(|&s| {
            let [a, b, c] = mixture_components(s)?;
            Ok([
                gram(&a, aux.xs(), 0.0)?,
                gram(&b, aux.xs(), 0.0)?,
                gram(&c, aux.xs(), 0.0)?,
            ])
        })
        .collect::<Result<_, KernelError>>()?;

    let mut best: Option<MixtureFit> = None;
    let mut evaluations = 0;
    for w in weights {
        for (si, &s) in scales.iter().enumerate() {
            let g = &grams[si];
            let k = &g[0] * w[0] + &g[1] * w[1] + &g[2] * w[2];
            for &nu in &noises {
                evaluations += 1;
                let Ok(mse) = gp_loo_mse(&k, aux.ys(), nu) else {
                    continue;
                };
                if best.is_none_or(|b| mse < b.loo_mse) {
                    best = Some(MixtureFit {
                        weights: *w,
                        scale: s,
                        noise: nu,
                        loo_mse: mse,
                        evaluations: 0,
                    });
                }
            }
        }
    }
    let mut fit = best.ok_or(SvmError::Config("no mixture grid point could be factorised".into()))?;
    fit.evaluations = evaluations;
    let spec = KernelSpec::mixture(fit.weights, mixture_components(fit.scale)?)?;
    Ok((spec, fit))
}
