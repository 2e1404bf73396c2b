//! Zero-mean GP regression with grid-searched hyperparameters.

use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::dataset::LabeledDataset;
use crate::error::GpError;
use crate::kernel::{gram, KernelSpec, PreparedPoint, DEFAULT_JITTER};

/// Largest jitter tried before a factorisation is declared ill-conditioned.
pub const MAX_JITTER: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Posterior mean and variance at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        libm::sqrt(self.variance)
    }
}

/// Cholesky factor of `K + (nu^2 + jitter) I` and the weights
/// `alpha = (K + nu^2 I)^-1 y`.
#[derive(Debug, Clone)]
pub struct GpSolve {
    l: DMatrix<f64>,
    alpha: DVector<f64>,
    y: DVector<f64>,
    jitter: f64,
    escalations: u32,
}

impl GpSolve {
    /// Factorise, doubling the jitter from `DEFAULT_JITTER` up to
    /// `MAX_JITTER` until the Cholesky factorisation succeeds.
    pub fn new(gram: &DMatrix<f64>, y: &[f64], noise: f64) -> Result<Self, GpError> {
        if !(noise >= 0.0) {
            return Err(GpError::NegativeNoise(noise));
        }
        let n = gram.nrows();
        assert_eq!(n, y.len());
        let mut jitter = DEFAULT_JITTER;
        let mut escalations = 0;
        loop {
            let mut a = gram.clone();
            for i in 0..n {
                a[(i, i)] += noise + jitter;
            }
            if let Some(chol) = Cholesky::<f64, Dyn>::new(a) {
                let yv = DVector::from_column_slice(y);
                let alpha = chol.solve(&yv);
                if alpha.iter().all(|v| v.is_finite()) {
                    return Ok(Self {
                        l: chol.unpack(),
                        alpha,
                        y: yv,
                        jitter,
                        escalations,
                    });
                }
            }
            if jitter * 2.0 > MAX_JITTER {
                return Err(GpError::IllConditioned {
                    condition: condition_estimate(gram, noise + jitter),
                    jitter,
                });
            }
            jitter *= 2.0;
            escalations += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn escalations(&self) -> u32 {
        self.escalations
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Posterior from the cross-covariances `k` to the training inputs and
    /// the prior variance `kxx`.
    pub fn posterior(&self, k: &[f64], kxx: f64) -> Posterior {
        let kv = DVector::from_column_slice(k);
        let mean = kv.dot(&self.alpha);
        let v = self
            .l
            .solve_lower_triangular(&kv)
            .expect("Cholesky factor has a positive diagonal");
        let raw = kxx - v.dot(&v);
        if raw < -1e-8 {
            log::warn!("posterior variance {raw:e} clamped to 0");
        }
        Posterior {
            mean,
            variance: raw.max(0.0),
        }
    }

    /// Negative log marginal likelihood.
    pub fn nlml(&self) -> Result<f64, GpError> {
        let n = self.y.len();
        if n == 0 {
            return Err(GpError::NoData);
        }
        let logdet: f64 = (0..n).map(|i| libm::log(self.l[(i, i)])).sum();
        Ok(0.5 * self.y.dot(&self.alpha) + logdet + 0.5 * n as f64 * LN_2PI)
    }
}

fn condition_estimate(gram: &DMatrix<f64>, shift: f64) -> f64 {
    let mut a = gram.clone();
    for i in 0..a.nrows() {
        a[(i, i)] += shift;
    }
    let eig = a.symmetric_eigenvalues();
    let max = eig.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// A GP conditioned on data. `N = 0` gives the prior.
#[derive(Debug, Clone)]
pub struct GpModel {
    spec: KernelSpec,
    noise: f64,
    data: LabeledDataset,
    prepared: Vec<PreparedPoint>,
    solve: GpSolve,
}

impl GpModel {
    pub fn fit(spec: KernelSpec, data: LabeledDataset, noise: f64) -> Result<Self, GpError> {
        let g = gram(&spec, data.xs(), 0.0)?;
        let solve = GpSolve::new(&g, data.ys(), noise)?;
        let prepared = data
            .xs()
            .iter()
            .map(|x| spec.prepare(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec,
            noise,
            data,
            prepared,
            solve,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn data(&self) -> &LabeledDataset {
        &self.data
    }

    pub fn solve(&self) -> &GpSolve {
        &self.solve
    }

    pub fn posterior(&self, x: &[f64]) -> Result<Posterior, GpError> {
        let px = self.spec.prepare(x)?;
        let k = self
            .prepared
            .iter()
            .map(|p| self.spec.eval_prepared(&[&px, p]))
            .collect::<Result<Vec<_>, _>>()?;
        let kxx = self.spec.eval_prepared(&[&px, &px])?;
        Ok(self.solve.posterior(&k, kxx))
    }

    pub fn nlml(&self) -> Result<f64, GpError> {
        self.solve.nlml()
    }
}

/// Result of a marginal-likelihood grid search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperSelection {
    pub noise: f64,
    pub sigma: Option<f64>,
    pub nlml: f64,
    pub evaluations: usize,
    pub escalations: u32,
}

/// Grid search over `noise_grid x scale_grid`. `gram_for(sigma)` supplies
/// the noise-free Gram for a scale (`None` when the kernel scale is fixed).
/// Ties go to the smaller noise, then the smaller scale.
pub fn select_hypers_with<F>(
    ys: &[f64],
    noise_grid: &[f64],
    scale_grid: Option<&[f64]>,
    mut gram_for: F,
) -> Result<(HyperSelection, GpSolve), GpError>
where
    F: FnMut(Option<f64>) -> Result<DMatrix<f64>, GpError>,
{
    if ys.is_empty() {
        return Err(GpError::NoData);
    }
    if noise_grid.is_empty() {
        return Err(GpError::EmptyGrid("noise"));
    }
    let scales: Vec<Option<f64>> = match scale_grid {
        Some([]) => return Err(GpError::EmptyGrid("sigma")),
        Some(s) => {
            let mut s = s.to_vec();
            s.sort_by(f64::total_cmp);
            s.into_iter().map(Some).collect()
        }
        None => alloc::vec![None],
    };
    let mut noises = noise_grid.to_vec();
    noises.sort_by(f64::total_cmp);
    for &nu in &noises {
        if !(nu >= 0.0) {
            return Err(GpError::NegativeNoise(nu));
        }
    }

    // table[s][n]: evaluated per scale so each Gram is built once
    let mut table: Vec<Vec<Option<(f64, GpSolve)>>> = Vec::with_capacity(scales.len());
    let mut evaluations = 0;
    for &s in &scales {
        let g = gram_for(s)?;
        let mut row = Vec::with_capacity(noises.len());
        for &nu in &noises {
            evaluations += 1;
            row.push(
                GpSolve::new(&g, ys, nu)
                    .ok()
                    .and_then(|solve| solve.nlml().ok().filter(|v| v.is_finite()).map(|v| (v, solve))),
            );
        }
        table.push(row);
    }

    let mut best: Option<(usize, usize, f64)> = None;
    for ni in 0..noises.len() {
        for si in 0..scales.len() {
            if let Some((v, _)) = &table[si][ni] {
                if best.is_none_or(|(_, _, b)| *v < b) {
                    best = Some((ni, si, *v));
                }
            }
        }
    }
    let (ni, si, v) = best.ok_or(GpError::NoFeasibleHypers)?;
    let (_, solve) = table[si][ni].take().expect("selected entry exists");
    Ok((
        HyperSelection {
            noise: noises[ni],
            sigma: scales[si],
            nlml: v,
            evaluations,
            escalations: solve.escalations(),
        },
        solve,
    ))
}

/// Marginal-likelihood selection for a kernel template. With a scale grid
/// the template's scale is replaced by each grid value.
pub fn select_hypers_ml(
    template: &KernelSpec,
    data: &LabeledDataset,
    noise_grid: &[f64],
    scale_grid: Option<&[f64]>,
) -> Result<HyperSelection, GpError> {
    let (sel, _) = select_hypers_with(data.ys(), noise_grid, scale_grid, |s| {
        let spec = match s {
            Some(v) => template.with_scale(v)?,
            None => template.clone(),
        };
        Ok(gram(&spec, data.xs(), 0.0)?)
    })?;
    Ok(sel)
}
