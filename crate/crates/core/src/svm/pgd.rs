//! Proximal gradient descent for the higher-order duals:
//!
//! ```text
//! min S(a) + eps |a|_1   s.t.  lo <= a <= hi,  sum a = 0
//! ```
//!
//! where `S` is smooth and convex. The proximal step is solved exactly:
//! soft-threshold, clip to the box, and bisect on the multiplier of the
//! sum constraint.

use alloc::vec;
use alloc::vec::Vec;

use super::SolverReport;

pub(crate) struct PgdProblem<'a, S, G>
where
    S: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    pub smooth: S,
    pub grad: G,
    pub eps: f64,
    pub lo: &'a [f64],
    pub hi: &'a [f64],
    pub tol: f64,
    pub max_iter: usize,
}

/// `argmin_z 1/2 |z - v|^2 + t |z|_1` over the box with `sum z = 0`.
pub(crate) fn prox(v: &[f64], thresh: f64, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let at = |mu: f64, i: usize| {
        let w = v[i] - mu;
        let soft = if w > thresh {
            w - thresh
        } else if w < -thresh {
            w + thresh
        } else {
            0.0
        };
        soft.clamp(lo[i], hi[i])
    };
    let sum = |mu: f64| (0..v.len()).map(|i| at(mu, i)).sum::<f64>();
    let span = lo.iter().chain(hi).fold(0.0f64, |m, b| m.max(b.abs()));
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut a = -(vmax + thresh + span + 1.0);
    let mut b = -a;
    // sum(mu) is non-increasing: sum(a) >= 0 >= sum(b)
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if sum(mid) > 0.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let za: Vec<f64> = (0..v.len()).map(|i| at(a, i)).collect();
    let zb: Vec<f64> = (0..v.len()).map(|i| at(b, i)).collect();
    let sa: f64 = za.iter().sum();
    let sb: f64 = zb.iter().sum();
    // interpolate between the bracketing solutions; the map is linear there
    let mut z = if sa - sb > 0.0 {
        let w = sa / (sa - sb);
        za.iter().zip(&zb).map(|(x, y)| x + w * (y - x)).collect()
    } else {
        za
    };
    // spread any residual over the coordinates with room to move
    let resid: f64 = z.iter().sum();
    if resid != 0.0 {
        let free: Vec<usize> = (0..z.len())
            .filter(|&i| {
                let t = z[i] - resid;
                t >= lo[i] && t <= hi[i]
            })
            .collect();
        if let Some(&i) = free.first() {
            z[i] -= resid;
        }
    }
    z
}

pub(crate) fn solve<S, G>(prob: &PgdProblem<'_, S, G>) -> (Vec<f64>, SolverReport)
where
    S: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    let n = prob.lo.len();
    let l1 = |a: &[f64]| prob.eps * a.iter().map(|v| v.abs()).sum::<f64>();
    let mut alpha = vec![0.0; n];
    let mut s_val = (prob.smooth)(&alpha);
    let mut history = vec![s_val + l1(&alpha)];
    let mut step = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < prob.max_iter {
        let g = (prob.grad)(&alpha);
        let (next, next_s, mapping) = loop {
            let v: Vec<f64> = alpha.iter().zip(&g).map(|(a, d)| a - step * d).collect();
            let z = prox(&v, step * prob.eps, prob.lo, prob.hi);
            let zs = (prob.smooth)(&z);
            let d: Vec<f64> = z.iter().zip(&alpha).map(|(a, b)| a - b).collect();
            let lin: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            let sq: f64 = d.iter().map(|v| v * v).sum();
            if zs <= s_val + lin + sq / (2.0 * step) + 1e-15 * s_val.abs().max(1.0) || step < 1e-20 {
                let mapping = d.iter().fold(0.0f64, |m, v| m.max(v.abs())) / step;
                break (z, zs, mapping);
            }
            step *= 0.5;
        };
        let f_next = next_s + l1(&next);
        let f_prev = *history.last().expect("non-empty");
        if f_next > f_prev {
            // numerical floor: keep the current iterate
            converged = mapping < prob.tol;
            break;
        }
        alpha = next;
        s_val = next_s;
        history.push(f_next);
        iterations += 1;
        if mapping < prob.tol {
            converged = true;
            break;
        }
        step *= 1.5;
    }
    (
        alpha,
        SolverReport {
            iterations,
            converged,
            objective_history: history,
        },
    )
}
