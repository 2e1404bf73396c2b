//! Explicit truncated feature maps for the free kernels.
//!
//! A free kernel with scalar function `h(s) = sum_j kappa_j s^j` has
//! feature map `theta(x)` = all monomials of `x` and weights
//! `tau_k = sqrt(kappa_|k| * multinomial(|k|; k))`, so that
//! `K_m(x_1..x_m) = <<tau^2, theta(x_1), .., theta(x_m)>>`.
//!
//! This is a ground-truth oracle for tests. The basis size is
//! `C(n + D, D)` and grows quickly; it is not meant for production use.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::KernelError;
use crate::kernel::{KernelKind, KernelSpec, LayerRef, ReweightSet};

/// Monomial exponents of total degree at most `degree_cap`, in graded
/// lexicographic order: by total degree, then by descending power of
/// `x_1`, then `x_2`, and so on. For `n = 2, D = 2`:
/// `1, x1, x2, x1^2, x1 x2, x2^2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MonomialBasis {
    n: usize,
    degree_cap: u32,
    exponents: Vec<Vec<u32>>,
}

impl MonomialBasis {
    pub fn new(n: usize, degree_cap: u32) -> Self {
        let mut exponents = Vec::new();
        for d in 0..=degree_cap {
            let mut cur = vec![0u32; n];
            push_degree(&mut exponents, &mut cur, 0, d);
        }
        Self {
            n,
            degree_cap,
            exponents,
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn degree_cap(&self) -> u32 {
        self.degree_cap
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }
}

fn push_degree(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, remaining: u32) {
    let n = cur.len();
    if n == 0 {
        if remaining == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == n - 1 {
        cur[pos] = remaining;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=remaining).rev() {
        cur[pos] = k;
        push_degree(out, cur, pos + 1, remaining - k);
    }
    cur[pos] = 0;
}

/// `theta(x)`: each monomial evaluated at `x`.
pub fn monomial_features(x: &[f64], basis: &MonomialBasis) -> Result<Vec<f64>, KernelError> {
    if x.len() != basis.n {
        return Err(KernelError::DimensionMismatch {
            index: 0,
            expected: basis.n,
            found: x.len(),
        });
    }
    Ok(basis
        .exponents
        .iter()
        .map(|k| k.iter().zip(x).map(|(&e, &v)| libm::pow(v, e as f64)).product())
        .collect())
}

/// Taylor coefficients `kappa_0..=kappa_D` of a free kind's scalar function.
pub fn taylor_coefficients(kind: &KernelKind, degree_cap: u32) -> Result<Vec<f64>, KernelError> {
    let d = degree_cap as usize;
    match *kind {
        KernelKind::Linear => Ok((0..=d).map(|j| if j == 1 { 1.0 } else { 0.0 }).collect()),
        KernelKind::Polynomial { degree } => Ok((0..=d)
            .map(|j| {
                if j as u32 <= degree {
                    binomial(degree, j as u32)
                } else {
                    0.0
                }
            })
            .collect()),
        KernelKind::Exponential { sigma } => {
            let mut out = Vec::with_capacity(d + 1);
            let mut c = 1.0;
            for j in 0..=d {
                if j > 0 {
                    c /= sigma * j as f64;
                }
                out.push(c);
            }
            Ok(out)
        }
        ref other => Err(KernelError::IllegalReweightBase { kind: other.name() }),
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

fn multinomial(k: &[u32]) -> f64 {
    let mut total = 0u32;
    let mut c = 1.0;
    for &e in k {
        for i in 1..=e {
            total += 1;
            c = c * total as f64 / i as f64;
        }
    }
    c
}

/// `tau`: per-monomial feature weights of a free kind.
pub fn feature_weights(kind: &KernelKind, basis: &MonomialBasis) -> Result<Vec<f64>, KernelError> {
    let kappa = taylor_coefficients(kind, basis.degree_cap)?;
    Ok(basis
        .exponents
        .iter()
        .map(|k| {
            let deg: u32 = k.iter().sum();
            libm::sqrt(kappa[deg as usize] * multinomial(k))
        })
        .collect())
}

/// `<<w^2, theta(x_1), .., theta(x_m)>>` for arbitrary weights `w`.
pub fn weighted_eval(weights: &[f64], points: &[&[f64]], basis: &MonomialBasis) -> Result<f64, KernelError> {
    let mut acc: Vec<f64> = weights.iter().map(|w| w * w).collect();
    for (index, p) in points.iter().enumerate() {
        let f = monomial_features(p, basis).map_err(|_| KernelError::DimensionMismatch {
            index,
            expected: basis.n,
            found: p.len(),
        })?;
        for (a, v) in acc.iter_mut().zip(f) {
            *a *= v;
        }
    }
    Ok(acc.iter().sum())
}

/// Kernel value reconstructed from the truncated feature expansion.
pub fn oracle_kernel_eval(kind: &KernelKind, points: &[&[f64]], basis: &MonomialBasis) -> Result<f64, KernelError> {
    if points.is_empty() {
        return Err(KernelError::IllegalArity {
            kind: kind.name(),
            arity: 0,
        });
    }
    let tau = feature_weights(kind, basis)?;
    weighted_eval(&tau, points, basis)
}

/// Upper bound on `|h(s) - sum_{j<=D} kappa_j s^j|`, the error of the
/// truncated expansion at m-semi-inner-product `s`.
pub fn truncation_tail_bound(kind: &KernelKind, s: f64, degree_cap: u32) -> Result<f64, KernelError> {
    let s = s.abs();
    match *kind {
        KernelKind::Exponential { sigma } => {
            let kappa = taylor_coefficients(kind, degree_cap)?;
            let head: f64 = kappa.iter().enumerate().map(|(j, c)| c * libm::pow(s, j as f64)).sum();
            Ok((libm::exp(s / sigma) - head).max(0.0))
        }
        KernelKind::Linear | KernelKind::Polynomial { .. } => {
            let full = match *kind {
                KernelKind::Polynomial { degree } => degree,
                _ => 1,
            };
            let kappa = taylor_coefficients(kind, full.max(degree_cap))?;
            Ok(kappa
                .iter()
                .enumerate()
                .skip(degree_cap as usize + 1)
                .map(|(j, c)| c * libm::pow(s, j as f64))
                .sum())
        }
        ref other => Err(KernelError::IllegalReweightBase { kind: other.name() }),
    }
}

/// One re-weighting step on explicit weights: `w' = sum_i alpha_i w theta(x_i)`.
pub fn reweighted_weights(weights: &[f64], set: &ReweightSet, basis: &MonomialBasis) -> Result<Vec<f64>, KernelError> {
    let mut sum = vec![0.0; basis.len()];
    for (index, a) in set.anchors().iter().enumerate() {
        let f = monomial_features(&a.x, basis).map_err(|_| KernelError::DimensionMismatch {
            index,
            expected: basis.n,
            found: a.x.len(),
        })?;
        for (s, v) in sum.iter_mut().zip(f) {
            *s += a.alpha * v;
        }
    }
    Ok(sum.iter().zip(weights).map(|(s, w)| s * w).collect())
}

/// Implied weights of a (possibly repeatedly) re-weighted free spec.
/// Normalised specs and non-free bases have no finite monomial expansion
/// here and are rejected.
pub fn implied_weight_vector(spec: &KernelSpec, basis: &MonomialBasis) -> Result<Vec<f64>, KernelError> {
    let mut w = feature_weights(spec.kind(), basis)?;
    for layer in spec.layers() {
        match layer {
            LayerRef::Reweight(set) => w = reweighted_weights(&w, set, basis)?,
            LayerRef::Normalize => return Err(KernelError::IllegalReweightBase { kind: "normalized" }),
        }
    }
    Ok(w)
}
