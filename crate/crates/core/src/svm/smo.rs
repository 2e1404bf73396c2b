//! Sequential minimal optimisation for
//!
//! ```text
//! min 1/2 b'Qb + p'b   s.t.  s'b = 0,  0 <= b <= u,   Q_ab = s_a s_b K_ab
//! ```
//!
//! with second-order working-set selection.

use alloc::vec;
use alloc::vec::Vec;

use super::SolverReport;

const TAU: f64 = 1e-12;

pub(crate) struct SmoProblem<'a, F: Fn(usize, usize) -> f64> {
    /// `K` entry between the points behind variables `a` and `b`.
    pub kernel: F,
    pub diag: &'a [f64],
    pub p: &'a [f64],
    pub s: &'a [f64],
    pub upper: f64,
    /// Feasible starting point; zero when absent.
    pub init: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
}

pub(crate) fn solve<F: Fn(usize, usize) -> f64>(prob: &SmoProblem<'_, F>) -> (Vec<f64>, SolverReport) {
    let l = prob.p.len();
    let u = prob.upper;
    let s = prob.s;
    let q = |a: usize, b: usize| s[a] * s[b] * (prob.kernel)(a, b);
    let mut beta = prob.init.clone().unwrap_or_else(|| vec![0.0; l]);
    let mut grad = prob.p.to_vec();
    for (a, &ba) in beta.iter().enumerate() {
        if ba != 0.0 {
            for (t, g) in grad.iter_mut().enumerate() {
                *g += q(a, t) * ba;
            }
        }
    }
    let objective = |beta: &[f64], grad: &[f64]| -> f64 {
        beta.iter()
            .zip(grad)
            .zip(prob.p)
            .map(|((b, g), p)| 0.5 * b * (g + p))
            .sum()
    };
    let mut history = vec![objective(&beta, &grad)];
    let mut iterations = 0;
    let mut converged = false;
    let mut qi = vec![0.0; l];
    let mut qj = vec![0.0; l];

    while iterations < prob.max_iter {
        let Some((i, j)) = select(prob, &beta, &grad, &mut qi, &q) else {
            converged = true;
            break;
        };
        for t in 0..l {
            qj[t] = q(j, t);
        }
        let (old_i, old_j) = (beta[i], beta[j]);
        let (ai, aj) = step(&beta, &grad, i, j, s, prob.diag, qi[j], u);
        beta[i] = ai;
        beta[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for t in 0..l {
            grad[t] += qi[t] * di + qj[t] * dj;
        }
        iterations += 1;
        history.push(objective(&beta, &grad));
    }
    (
        beta,
        SolverReport {
            iterations,
            converged,
            objective_history: history,
        },
    )
}

fn select<F: Fn(usize, usize) -> f64>(
    prob: &SmoProblem<'_, F>,
    beta: &[f64],
    grad: &[f64],
    qi: &mut [f64],
    q: &impl Fn(usize, usize) -> f64,
) -> Option<(usize, usize)> {
    let l = beta.len();
    let u = prob.upper;
    let s = prob.s;
    let mut gmax = f64::NEG_INFINITY;
    let mut imax = None;
    for t in 0..l {
        let (ok, v) = if s[t] > 0.0 {
            (beta[t] < u, -grad[t])
        } else {
            (beta[t] > 0.0, grad[t])
        };
        if ok && v >= gmax {
            gmax = v;
            imax = Some(t);
        }
    }
    let i = imax?;
    for t in 0..l {
        qi[t] = q(i, t);
    }
    let mut gmax2 = f64::NEG_INFINITY;
    let mut best = None;
    let mut best_obj = f64::INFINITY;
    for t in 0..l {
        let (ok, v, sign) = if s[t] > 0.0 {
            (beta[t] > 0.0, grad[t], -1.0)
        } else {
            (beta[t] < u, -grad[t], 1.0)
        };
        if !ok {
            continue;
        }
        gmax2 = gmax2.max(v);
        let diff = gmax + v;
        if diff > 0.0 {
            let quad = prob.diag[i] + prob.diag[t] + 2.0 * sign * s[i] * qi[t];
            let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
            if obj <= best_obj {
                best_obj = obj;
                best = Some(t);
            }
        }
    }
    if gmax + gmax2 < prob.tol {
        return None;
    }
    best.map(|j| (i, j))
}

#[allow(clippy::too_many_arguments)]
fn step(beta: &[f64], grad: &[f64], i: usize, j: usize, s: &[f64], diag: &[f64], qij: f64, u: f64) -> (f64, f64) {
    let (mut ai, mut aj) = (beta[i], beta[j]);
    if s[i] != s[j] {
        let quad = (diag[i] + diag[j] + 2.0 * qij).max(TAU);
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = ai - aj;
        ai += delta;
        aj += delta;
        if diff > 0.0 {
            if aj < 0.0 {
                aj = 0.0;
                ai = diff;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = -diff;
        }
        if diff > 0.0 {
            if ai > u {
                ai = u;
                aj = u - diff;
            }
        } else if aj > u {
            aj = u;
            ai = u + diff;
        }
    } else {
        let quad = (diag[i] + diag[j] - 2.0 * qij).max(TAU);
        let delta = (grad[i] - grad[j]) / quad;
        let sum = ai + aj;
        ai -= delta;
        aj += delta;
        if sum > u {
            if ai > u {
                ai = u;
                aj = sum - u;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = sum;
        }
        if sum > u {
            if aj > u {
                aj = u;
                ai = sum - u;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = sum;
        }
    }
    (ai, aj)
}
