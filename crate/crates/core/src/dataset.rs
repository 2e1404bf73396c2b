//! Labelled datasets, unit-box normalisation and candidate grids.

use alloc::vec::Vec;

use crate::error::DatasetError;

/// Ordered `(x, y)` rows sharing one input dimension.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LabeledDataset {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self, DatasetError> {
        if xs.len() != ys.len() {
            return Err(DatasetError::DimensionMismatch {
                row: xs.len().min(ys.len()),
                expected: xs.len(),
                found: ys.len(),
            });
        }
        let mut out = Self::default();
        for (x, y) in xs.into_iter().zip(ys) {
            out.push(x, y)?;
        }
        Ok(out)
    }

    pub fn from_rows<I>(rows: I) -> Result<Self, DatasetError>
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        let mut out = Self::default();
        for (x, y) in rows {
            out.push(x, y)?;
        }
        Ok(out)
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<(), DatasetError> {
        let row = self.ys.len();
        if let Some(n) = self.dimension() {
            if x.len() != n {
                return Err(DatasetError::DimensionMismatch {
                    row,
                    expected: n,
                    found: x.len(),
                });
            }
        }
        if !y.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row });
        }
        self.xs.push(x);
        self.ys.push(y);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.xs.first().map(|x| x.len())
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.xs.iter().map(|x| x.as_slice()).zip(self.ys.iter().copied())
    }

    /// Copy without row `i`.
    pub fn without(&self, i: usize) -> Self {
        let mut xs = self.xs.clone();
        let mut ys = self.ys.clone();
        xs.remove(i);
        ys.remove(i);
        Self { xs, ys }
    }

    /// Copy with every target mapped through `f`.
    pub fn map_targets(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|&y| f(y)).collect(),
        }
    }
}

/// Affine map of one column onto `[0, 1]`. Constant columns map to 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AffineMap {
    pub min: f64,
    pub max: f64,
}

impl AffineMap {
    pub fn fit(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let mut it = values.into_iter();
        let first = it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Some(Self { min, max })
    }

    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    pub fn forward(&self, v: f64) -> f64 {
        if self.is_constant() {
            0.5
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, u: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + u * (self.max - self.min)
        }
    }
}

/// Per-column maps taking a dataset into the unit box.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct UnitBoxMap {
    pub x: Vec<AffineMap>,
    pub y: AffineMap,
}

impl UnitBoxMap {
    /// Map with explicit input bounds and an identity-like target map.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Self {
        Self {
            x: bounds.iter().map(|&(min, max)| AffineMap { min, max }).collect(),
            y: AffineMap { min: 0.0, max: 1.0 },
        }
    }

    pub fn forward_x(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.x).map(|(v, m)| m.forward(*v)).collect()
    }

    pub fn inverse_x(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.x).map(|(v, m)| m.inverse(*v)).collect()
    }

    pub fn apply(&self, data: &LabeledDataset) -> LabeledDataset {
        LabeledDataset {
            xs: data.xs.iter().map(|x| self.forward_x(x)).collect(),
            ys: data.ys.iter().map(|&y| self.y.forward(y)).collect(),
        }
    }

    pub fn invert(&self, data: &LabeledDataset) -> LabeledDataset {
        LabeledDataset {
            xs: data.xs.iter().map(|x| self.inverse_x(x)).collect(),
            ys: data.ys.iter().map(|&y| self.y.inverse(y)).collect(),
        }
    }

    /// Indices of constant input columns, followed by `n` if the target
    /// column is constant.
    pub fn constant_columns(&self) -> Vec<usize> {
        let mut out: Vec<usize> = (0..self.x.len()).filter(|&i| self.x[i].is_constant()).collect();
        if self.y.is_constant() {
            out.push(self.x.len());
        }
        out
    }
}

/// Fit column min/max and map every column into `[0, 1]`.
pub fn normalize_unit_box(data: &LabeledDataset) -> Result<(LabeledDataset, UnitBoxMap), DatasetError> {
    let n = data.dimension().ok_or(DatasetError::Empty)?;
    let x = (0..n)
        .map(|j| AffineMap::fit(data.xs.iter().map(|r| r[j])).expect("non-empty"))
        .collect();
    let y = AffineMap::fit(data.ys.iter().copied()).expect("non-empty");
    let map = UnitBoxMap { x, y };
    Ok((map.apply(data), map))
}

/// Tensor grid with `resolution[d]` evenly spaced points per dimension,
/// endpoints included. The last dimension varies fastest.
pub fn uniform_grid(bounds: &[(f64, f64)], resolution: &[usize]) -> Vec<Vec<f64>> {
    assert_eq!(bounds.len(), resolution.len());
    if bounds.is_empty() || resolution.contains(&0) {
        return Vec::new();
    }
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .zip(resolution)
        .map(|(&(lo, hi), &r)| {
            if r == 1 {
                alloc::vec![(lo + hi) / 2.0]
            } else {
                (0..r).map(|i| lo + (hi - lo) * i as f64 / (r - 1) as f64).collect()
            }
        })
        .collect();
    let total: usize = resolution.iter().product();
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut p = alloc::vec![0.0; bounds.len()];
        for d in (0..bounds.len()).rev() {
            p[d] = axes[d][idx % resolution[d]];
            idx /= resolution[d];
        }
        out.push(p);
    }
    out
}
