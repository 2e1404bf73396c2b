//! p-norm SVM duals over 2q-kernels.
//!
//! Regression solves
//!
//! ```text
//! min (1/2q) sum a_i1..a_i2q K(x_i1..x_i2q) + eps sum |a_i| - sum y_i a_i
//!     s.t. -C/N <= a_i <= C/N,  sum a_i = 0
//! ```
//!
//! and classification the same without the `eps` term and with
//! `0 <= y_i a_i <= C/N`. The prediction is
//! `g(x) = sum a_i2..a_i2q K(x, x_i2, .., x_i2q) + b`.
//!
//! `q = 1` goes through SMO; `q >= 2` through proximal gradient descent
//! with the degree-2q term contracted from a cached tensor when it fits.

mod pgd;
mod select;
mod smo;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::dataset::LabeledDataset;
use crate::error::SvmError;
use crate::kernel::{gram, Anchor, KernelSpec, PreparedPoint, ReweightSet};

pub use select::{loo_mse_select, loo_mse_select_with_gram, LooSelection};

/// Upper bound on `N^(2q-1)` for the higher-order solvers.
pub const MAX_TENSOR_WORK: f64 = 1e7;
/// Largest `N^(2q)` tensor kept in memory.
pub const MAX_CACHED_TENSOR: usize = 4_000_000;
pub const MAX_ITERATIONS: usize = 100_000;
/// SMO stops when the maximal KKT violation falls below this.
pub const SMO_TOLERANCE: f64 = 1e-6;
/// Proximal gradient stops when the gradient mapping falls below this.
pub const PGD_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvmConfig {
    pub q: u32,
    pub c: f64,
    pub epsilon: f64,
    pub task: Task,
}

impl SvmConfig {
    pub fn regression(q: u32, c: f64, epsilon: f64) -> Self {
        Self {
            q,
            c,
            epsilon,
            task: Task::Regression,
        }
    }

    pub fn classification(q: u32, c: f64) -> Self {
        Self {
            q,
            c,
            epsilon: 0.0,
            task: Task::Classification,
        }
    }

    fn validate(&self) -> Result<(), SvmError> {
        if self.q < 1 {
            return Err(SvmError::Config(format!("q must be >= 1, got {}", self.q)));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(SvmError::Config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(SvmError::Config(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Per-run solver diagnostics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverReport {
    pub iterations: usize,
    pub converged: bool,
    /// Solver objective before the first step and after every accepted step.
    pub objective_history: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SvmModel {
    anchors: Vec<Anchor>,
    b: f64,
    spec: KernelSpec,
    config: SvmConfig,
    report: SolverReport,
}

impl SvmModel {
    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.anchors.iter().map(|a| a.alpha).collect()
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn config(&self) -> &SvmConfig {
        &self.config
    }

    pub fn report(&self) -> &SolverReport {
        &self.report
    }

    /// Anchors whose coefficient magnitude exceeds `tol`.
    pub fn support_vectors(&self, tol: f64) -> ReweightSet {
        ReweightSet::new(self.anchors.iter().filter(|a| a.alpha.abs() > tol).cloned().collect())
            .expect("anchors share the training dimension")
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, SvmError> {
        let sv: Vec<&Anchor> = self.anchors.iter().filter(|a| a.alpha != 0.0).collect();
        let px = self.spec.prepare(x)?;
        let prepared = sv
            .iter()
            .map(|a| self.spec.prepare(&a.x))
            .collect::<Result<Vec<_>, _>>()?;
        let alphas: Vec<f64> = sv.iter().map(|a| a.alpha).collect();
        let order = 2 * self.config.q as usize;
        Ok(contract_at(&self.spec, &px, &prepared, &alphas, order)? + self.b)
    }
}

/// `sum a_j2..a_jm K(p, x_j2, .., x_jm)` over all (m-1)-tuples.
fn contract_at(
    spec: &KernelSpec,
    p: &PreparedPoint,
    points: &[PreparedPoint],
    alphas: &[f64],
    order: usize,
) -> Result<f64, SvmError> {
    let n = points.len();
    if n == 0 {
        return Ok(0.0);
    }
    let rest = order - 1;
    let mut idx = vec![0usize; rest];
    let mut refs: Vec<&PreparedPoint> = Vec::with_capacity(order);
    let mut total = 0.0;
    loop {
        refs.clear();
        refs.push(p);
        let mut w = 1.0;
        for &j in &idx {
            refs.push(&points[j]);
            w *= alphas[j];
        }
        if w != 0.0 {
            total += w * spec.eval_prepared(&refs)?;
        }
        if !advance(&mut idx, n) {
            break;
        }
    }
    Ok(total)
}

fn advance(idx: &mut [usize], n: usize) -> bool {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < n {
            return true;
        }
        idx[k] = 0;
    }
    false
}

/// The degree-2q term, as a map `alpha -> h` with `h_i = dS/da_i`.
enum PolyTerm<'a> {
    Tensor {
        n: usize,
        order: usize,
        data: Vec<f64>,
    },
    OnTheFly {
        spec: &'a KernelSpec,
        points: Vec<PreparedPoint>,
        order: usize,
    },
}

impl PolyTerm<'_> {
    fn h(&self, alpha: &[f64]) -> Vec<f64> {
        match self {
            PolyTerm::Tensor { n, order, data } => {
                let mut cur = data.clone();
                for _ in 1..*order {
                    let next_len = cur.len() / n;
                    let mut next = vec![0.0; next_len];
                    for (k, out) in next.iter_mut().enumerate() {
                        let row = &cur[k * n..(k + 1) * n];
                        *out = row.iter().zip(alpha).map(|(a, b)| a * b).sum();
                    }
                    cur = next;
                }
                cur
            }
            PolyTerm::OnTheFly { spec, points, order } => points
                .iter()
                .map(|p| contract_at(spec, p, points, alpha, *order).expect("kernel checked at build"))
                .collect(),
        }
    }
}

fn build_poly<'a>(spec: &'a KernelSpec, xs: &[Vec<f64>], order: usize) -> Result<PolyTerm<'a>, SvmError> {
    let n = xs.len();
    let points = xs.iter().map(|x| spec.prepare(x)).collect::<Result<Vec<_>, _>>()?;
    // surface arity errors before solving
    let probe: Vec<&PreparedPoint> = (0..order).map(|_| &points[0]).collect();
    spec.eval_prepared(&probe)?;
    let size = libm::pow(n as f64, order as f64);
    if size <= MAX_CACHED_TENSOR as f64 {
        let total = n.pow(order as u32);
        let mut data = Vec::with_capacity(total);
        let mut idx = vec![0usize; order];
        let mut refs: Vec<&PreparedPoint> = Vec::with_capacity(order);
        loop {
            refs.clear();
            refs.extend(idx.iter().map(|&j| &points[j]));
            data.push(spec.eval_prepared(&refs)?);
            if !advance(&mut idx, n) {
                break;
            }
        }
        Ok(PolyTerm::Tensor { n, order, data })
    } else {
        Ok(PolyTerm::OnTheFly { spec, points, order })
    }
}

fn check_data(data: &LabeledDataset, config: &SvmConfig) -> Result<(), SvmError> {
    config.validate()?;
    if data.len() < 2 {
        return Err(SvmError::TooFewSamples {
            needed: 2,
            got: data.len(),
        });
    }
    if config.q >= 2 {
        let work = libm::pow(data.len() as f64, (2 * config.q - 1) as f64);
        if work > MAX_TENSOR_WORK {
            return Err(SvmError::Intractable { work });
        }
    }
    Ok(())
}

fn bounds(data: &LabeledDataset, config: &SvmConfig) -> Result<(Vec<f64>, Vec<f64>), SvmError> {
    let u = config.c / data.len() as f64;
    match config.task {
        Task::Regression => Ok((vec![-u; data.len()], vec![u; data.len()])),
        Task::Classification => {
            let mut lo = Vec::with_capacity(data.len());
            let mut hi = Vec::with_capacity(data.len());
            for (row, &y) in data.ys().iter().enumerate() {
                if y == 1.0 {
                    lo.push(0.0);
                    hi.push(u);
                } else if y == -1.0 {
                    lo.push(-u);
                    hi.push(0.0);
                } else {
                    return Err(SvmError::BadLabel(row));
                }
            }
            if !data.ys().contains(&1.0) || !data.ys().contains(&-1.0) {
                return Err(SvmError::SingleClass);
            }
            Ok((lo, hi))
        }
    }
}

/// Bias from the KKT conditions: the mean over interior support vectors,
/// or the midpoint of the feasible interval when there are none.
fn bias(alpha: &[f64], h: &[f64], y: &[f64], lo: &[f64], hi: &[f64], eps: f64) -> f64 {
    let u = hi.iter().chain(lo).fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * u.max(f64::MIN_POSITIVE);
    let sgn = |a: f64| if a > 0.0 { 1.0 } else { -1.0 };
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..alpha.len() {
        let a = alpha[i];
        if a.abs() > tol && a > lo[i] + tol && a < hi[i] - tol {
            sum += y[i] - h[i] - eps * sgn(a);
            count += 1;
        }
    }
    if count > 0 {
        return sum / count as f64;
    }
    let mut lower = f64::NEG_INFINITY;
    let mut upper = f64::INFINITY;
    for i in 0..alpha.len() {
        let a = alpha[i];
        if a < hi[i] - tol {
            let e = if a >= -tol { eps } else { -eps };
            lower = lower.max(y[i] - h[i] - e);
        }
        if a > lo[i] + tol {
            let e = if a > tol { eps } else { -eps };
            upper = upper.min(y[i] - h[i] - e);
        }
    }
    match (lower.is_finite(), upper.is_finite()) {
        (true, true) => 0.5 * (lower + upper),
        (true, false) => lower,
        (false, true) => upper,
        (false, false) => 0.0,
    }
}

/// Dual objective `(1/2q) a'h + eps |a|_1 - y'a` given `h` for `alpha`.
pub fn dual_objective(alpha: &[f64], h: &[f64], y: &[f64], q: u32, eps: f64) -> f64 {
    let poly: f64 = alpha.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() / (2.0 * q as f64);
    let l1: f64 = alpha.iter().map(|a| a.abs()).sum();
    let lin: f64 = alpha.iter().zip(y).map(|(a, b)| a * b).sum();
    poly + eps * l1 - lin
}

/// Train with a precomputed `q = 1` Gram matrix. `warm` must be feasible
/// for the box and the equality constraint.
pub(crate) fn solve_q1(
    k: &DMatrix<f64>,
    y: &[f64],
    lo: &[f64],
    hi: &[f64],
    eps: f64,
    task: Task,
    warm: Option<&[f64]>,
) -> (Vec<f64>, f64, SolverReport) {
    let n = y.len();
    let upper = hi.iter().chain(lo).fold(0.0f64, |m, v| m.max(v.abs()));
    let (alpha, report): (Vec<f64>, SolverReport) = match task {
        Task::Regression => {
            let s: Vec<f64> = (0..2 * n).map(|a| if a < n { 1.0 } else { -1.0 }).collect();
            let p: Vec<f64> = (0..2 * n)
                .map(|a| if a < n { eps - y[a] } else { eps + y[a - n] })
                .collect();
            let diag: Vec<f64> = (0..2 * n).map(|a| k[(a % n, a % n)]).collect();
            let prob = smo::SmoProblem {
                kernel: |a: usize, b: usize| k[(a % n, b % n)],
                diag: &diag,
                p: &p,
                s: &s,
                upper,
                init: warm.map(|a| {
                    let pos = a.iter().map(|v| v.max(0.0));
                    pos.chain(a.iter().map(|v| (-v).max(0.0))).collect()
                }),
                tol: SMO_TOLERANCE,
                max_iter: MAX_ITERATIONS,
            };
            let (beta, report) = smo::solve(&prob);
            ((0..n).map(|i| beta[i] - beta[i + n]).collect(), report)
        }
        Task::Classification => {
            let p = vec![-1.0; n];
            let diag: Vec<f64> = (0..n).map(|i| k[(i, i)]).collect();
            let prob = smo::SmoProblem {
                kernel: |a: usize, b: usize| k[(a, b)],
                diag: &diag,
                p: &p,
                s: y,
                upper,
                init: warm.map(|a| a.iter().zip(y).map(|(v, s)| v * s).collect()),
                tol: SMO_TOLERANCE,
                max_iter: MAX_ITERATIONS,
            };
            let (beta, report) = smo::solve(&prob);
            (beta.iter().zip(y).map(|(b, s)| b * s).collect(), report)
        }
    };
    let h: Vec<f64> = (0..n).map(|i| (0..n).map(|j| k[(i, j)] * alpha[j]).sum()).collect();
    let b = bias(&alpha, &h, y, lo, hi, eps);
    (alpha, b, report)
}

/// Train a p-norm SVM for `config.task`.
pub fn train(data: &LabeledDataset, spec: &KernelSpec, config: &SvmConfig) -> Result<SvmModel, SvmError> {
    check_data(data, config)?;
    let (lo, hi) = bounds(data, config)?;
    let eps = match config.task {
        Task::Regression => config.epsilon,
        Task::Classification => 0.0,
    };
    let y = data.ys();
    let (alpha, b, report) = if config.q == 1 {
        let k = gram(spec, data.xs(), 0.0)?;
        solve_q1(&k, y, &lo, &hi, eps, config.task, None)
    } else {
        let order = 2 * config.q as usize;
        let poly = build_poly(spec, data.xs(), order)?;
        let q = config.q as f64;
        let prob = pgd::PgdProblem {
            smooth: |a: &[f64]| {
                let h = poly.h(a);
                a.iter().zip(&h).map(|(x, v)| x * v).sum::<f64>() / (2.0 * q)
                    - a.iter().zip(y).map(|(x, v)| x * v).sum::<f64>()
            },
            grad: |a: &[f64]| poly.h(a).iter().zip(y).map(|(v, t)| v - t).collect(),
            eps,
            lo: &lo,
            hi: &hi,
            tol: PGD_TOLERANCE,
            max_iter: MAX_ITERATIONS,
        };
        let (alpha, report) = pgd::solve(&prob);
        let h = poly.h(&alpha);
        let b = bias(&alpha, &h, y, &lo, &hi, eps);
        (alpha, b, report)
    };
    if !report.converged {
        log::warn!(
            "SVM solver stopped after {} iterations without converging",
            report.iterations
        );
    }
    let anchors = data
        .xs()
        .iter()
        .zip(alpha)
        .map(|(x, alpha)| Anchor { x: x.clone(), alpha })
        .collect();
    Ok(SvmModel {
        anchors,
        b,
        spec: spec.clone(),
        config: *config,
        report,
    })
}

pub fn train_svr(data: &LabeledDataset, spec: &KernelSpec, config: &SvmConfig) -> Result<SvmModel, SvmError> {
    if config.task != Task::Regression {
        return Err(SvmError::Config("train_svr needs a regression config".into()));
    }
    train(data, spec, config)
}

pub fn train_svc(data: &LabeledDataset, spec: &KernelSpec, config: &SvmConfig) -> Result<SvmModel, SvmError> {
    if config.task != Task::Classification {
        return Err(SvmError::Config("train_svc needs a classification config".into()));
    }
    train(data, spec, config)
}
