//! Leave-one-out hyperparameter selection for `q = 1` regression.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{solve_q1, Task};
use crate::dataset::LabeledDataset;
use crate::error::SvmError;
use crate::kernel::{gram, KernelSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LooSelection {
    pub c: f64,
    /// `None` when the kernel has no scale to select.
    pub sigma: Option<f64>,
    pub loo_mse: f64,
    pub trainings: usize,
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Exact-refit LOO over `c_grid x scale_grid`. `gram_for(scale)` returns
/// the full-data Gram matrix; each held-out fit uses its minor. Ties go to
/// the smaller scale, then the smaller C. C is visited in ascending order and
/// each fold warm-starts from its solution at the previous C, which stays
/// feasible because the box only grows.
pub fn loo_mse_select_with_gram<F>(
    data: &LabeledDataset,
    c_grid: &[f64],
    scale_grid: Option<&[f64]>,
    epsilon: f64,
    mut gram_for: F,
) -> Result<LooSelection, SvmError>
where
    F: FnMut(Option<f64>) -> Result<DMatrix<f64>, SvmError>,
{
    let n = data.len();
    if n < 3 {
        return Err(SvmError::TooFewSamples { needed: 3, got: n });
    }
    if data.xs().iter().all(|x| x == &data.xs()[0]) {
        return Err(SvmError::DegenerateInputs);
    }
    if c_grid.is_empty() {
        return Err(SvmError::EmptyGrid("C"));
    }
    if let Some(&c) = c_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
        return Err(SvmError::Config(alloc::format!("C must be positive, got {c}")));
    }
    let scales: Vec<Option<f64>> = match scale_grid {
        Some([]) => return Err(SvmError::EmptyGrid("sigma")),
        Some(s) => sorted(s).into_iter().map(Some).collect(),
        None => alloc::vec![None],
    };
    let cs = sorted(c_grid);
    let y = data.ys();
    let mut best: Option<(f64, Option<f64>, f64)> = None;
    let mut trainings = 0;
    let mut sub = DMatrix::zeros(n - 1, n - 1);
    let mut ysub = Vec::with_capacity(n - 1);
    for &s in &scales {
        let k = gram_for(s)?;
        let mut warm: Vec<Option<Vec<f64>>> = alloc::vec![None; n];
        for &c in &cs {
            let u = c / (n - 1) as f64;
            let lo = alloc::vec![-u; n - 1];
            let hi = alloc::vec![u; n - 1];
            let mut sse = 0.0;
            for held in 0..n {
                let keep: Vec<usize> = (0..n).filter(|&i| i != held).collect();
                for (a, &i) in keep.iter().enumerate() {
                    for (b, &j) in keep.iter().enumerate() {
                        sub[(a, b)] = k[(i, j)];
                    }
                }
                ysub.clear();
                ysub.extend(keep.iter().map(|&i| y[i]));
                let (alpha, b, _) = solve_q1(&sub, &ysub, &lo, &hi, epsilon, Task::Regression, warm[held].as_deref());
                let pred: f64 = keep.iter().zip(&alpha).map(|(&j, a)| a * k[(held, j)]).sum::<f64>() + b;
                warm[held] = Some(alpha);
                sse += (pred - y[held]) * (pred - y[held]);
                trainings += 1;
            }
            let mse = sse / n as f64;
            if best.is_none_or(|(m, _, _)| mse < m) {
                best = Some((mse, s, c));
            }
        }
    }
    let (loo_mse, sigma, c) = best.expect("grids are non-empty");
    Ok(LooSelection {
        c,
        sigma,
        loo_mse,
        trainings,
    })
}

/// LOO-MSE selection of `(C, sigma)` for an ε-SVR with the template's base
/// kernel. The scale grid is ignored for kernels without a scale.
pub fn loo_mse_select(
    data: &LabeledDataset,
    template: &KernelSpec,
    c_grid: &[f64],
    scale_grid: &[f64],
    epsilon: f64,
) -> Result<LooSelection, SvmError> {
    let scaled = template.scale().is_some();
    let grid = if scaled { Some(scale_grid) } else { None };
    loo_mse_select_with_gram(data, c_grid, grid, epsilon, |s| {
        let spec = match s {
            Some(v) => template.with_scale(v)?,
            None => template.clone(),
        };
        Ok(gram(&spec, data.xs(), 0.0)?)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn three() -> LabeledDataset {
        LabeledDataset::new(vec![vec![0.0], vec![0.5], vec![1.0]], vec![0.1, 0.7, 0.2]).unwrap()
    }

    #[test]
    fn singleton_grid_returned() {
        let s = loo_mse_select(&three(), &KernelSpec::se(1.0).unwrap(), &[3.0], &[0.2], 0.01).unwrap();
        assert_eq!((s.c, s.sigma), (3.0, Some(0.2)));
        assert!(s.loo_mse.is_finite());
    }

    #[test]
    fn training_count() {
        let s = loo_mse_select(
            &three(),
            &KernelSpec::se(1.0).unwrap(),
            &[1.0, 10.0],
            &[0.1, 0.2, 0.4],
            0.01,
        )
        .unwrap();
        assert_eq!(s.trainings, 3 * 6);
        let s = loo_mse_select(&three(), &KernelSpec::linear(), &[1.0, 10.0], &[0.1, 0.2, 0.4], 0.01).unwrap();
        assert_eq!((s.trainings, s.sigma), (3 * 2, None));
    }

    #[test]
    fn errors() {
        let se = KernelSpec::se(1.0).unwrap();
        assert!(matches!(
            loo_mse_select(&three(), &se, &[], &[0.1], 0.0),
            Err(SvmError::EmptyGrid("C"))
        ));
        assert!(matches!(
            loo_mse_select(&three(), &se, &[1.0], &[], 0.0),
            Err(SvmError::EmptyGrid("sigma"))
        ));
        let same = LabeledDataset::new(vec![vec![0.3]; 4], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(
            loo_mse_select(&same, &se, &[1.0], &[0.1], 0.0).unwrap_err(),
            SvmError::DegenerateInputs
        );
        let two = LabeledDataset::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            loo_mse_select(&two, &se, &[1.0], &[0.1], 0.0),
            Err(SvmError::TooFewSamples { .. })
        ));
    }
}
