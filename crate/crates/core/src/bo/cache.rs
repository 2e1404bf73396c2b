//! Incremental kernel values between the history and the candidate grid.
//!
//! For every scale in use the cache keeps the candidates' prepared points
//! and diagonals, one column of cross-covariances per history point and
//! the history Gram matrix. A history point is evaluated against the grid
//! exactly once per scale.
//!
//! Composite kernels cache their inner kernel only and apply the outer
//! transform on read, so an outer-scale grid costs nothing extra.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::KernelError;
use crate::kernel::{composite_value, KernelKind, KernelSpec, PreparedPoint};

struct Table {
    spec: KernelSpec,
    cand: Vec<PreparedPoint>,
    diag: Vec<f64>,
    hist: Vec<PreparedPoint>,
    hist_diag: Vec<f64>,
    /// `cols[h][c] = K(history h, candidate c)`.
    cols: Vec<Vec<f64>>,
    /// Lower triangle: `gram[h][h'] = K(history h, history h')`, `h' <= h`.
    gram: Vec<Vec<f64>>,
}

impl Table {
    fn new(spec: KernelSpec, candidates: &[Vec<f64>]) -> Result<Self, KernelError> {
        let cand = candidates
            .iter()
            .map(|x| spec.prepare(x))
            .collect::<Result<Vec<_>, _>>()?;
        let diag = cand
            .iter()
            .map(|p| spec.eval_prepared(&[p, p]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            spec,
            cand,
            diag,
            hist: Vec::new(),
            hist_diag: Vec::new(),
            cols: Vec::new(),
            gram: Vec::new(),
        })
    }

    fn sync(&mut self, xs: &[Vec<f64>], idx: &[Option<usize>]) -> Result<(), KernelError> {
        debug_assert!(self.hist.len() <= xs.len());
        for h in self.hist.len()..xs.len() {
            let p = self.spec.prepare(&xs[h])?;
            let col = match idx[h] {
                Some(c) => {
                    // symmetric: reuse the candidate's own column if any
                    // history point already sits on it
                    match (0..h).find(|&k| idx[k] == Some(c)) {
                        Some(k) => self.cols[k].clone(),
                        None => self.column(&p)?,
                    }
                }
                None => self.column(&p)?,
            };
            let d = match idx[h] {
                Some(c) => self.diag[c],
                None => self.spec.eval_prepared(&[&p, &p])?,
            };
            let mut row = Vec::with_capacity(h + 1);
            for k in 0..h {
                let v = match idx[k] {
                    Some(c) => col[c],
                    None => match idx[h] {
                        Some(c) => self.cols[k][c],
                        None => self.spec.eval_prepared(&[&p, &self.hist[k]])?,
                    },
                };
                row.push(v);
            }
            row.push(d);
            self.hist.push(p);
            self.hist_diag.push(d);
            self.cols.push(col);
            self.gram.push(row);
        }
        Ok(())
    }

    fn column(&self, p: &PreparedPoint) -> Result<Vec<f64>, KernelError> {
        self.cand.iter().map(|c| self.spec.eval_prepared(&[p, c])).collect()
    }

    fn point_values(&self, x: &[f64]) -> Result<(Vec<f64>, f64), KernelError> {
        let p = self.spec.prepare(x)?;
        let k = self
            .hist
            .iter()
            .map(|h| self.spec.eval_prepared(&[&p, h]))
            .collect::<Result<Vec<_>, _>>()?;
        let d = self.spec.eval_prepared(&[&p, &p])?;
        Ok((k, d))
    }
}

/// Read-only view of the kernel values for one scale.
pub struct KernelView<'a> {
    table: &'a Table,
    outer: Option<f64>,
}

impl KernelView<'_> {
    fn map(&self, kab: f64, da: f64, db: f64) -> f64 {
        match self.outer {
            Some(s) => composite_value(s, da, db, kab),
            None => kab,
        }
    }

    pub fn history_len(&self) -> usize {
        self.table.hist.len()
    }

    pub fn gram(&self) -> DMatrix<f64> {
        let t = self.table;
        let n = t.hist.len();
        DMatrix::from_fn(n, n, |i, j| {
            let (a, b) = if i >= j { (i, j) } else { (j, i) };
            self.map(t.gram[a][b], t.hist_diag[a], t.hist_diag[b])
        })
    }

    /// Cross-covariances to the history and prior variance of candidate `c`.
    pub fn candidate(&self, c: usize, k: &mut Vec<f64>) -> f64 {
        let t = self.table;
        k.clear();
        let dc = t.diag[c];
        k.extend(
            t.cols
                .iter()
                .zip(&t.hist_diag)
                .map(|(col, &dh)| self.map(col[c], dh, dc)),
        );
        self.map(dc, dc, dc)
    }

    /// Same for an arbitrary point.
    pub fn point(&self, x: &[f64]) -> Result<(Vec<f64>, f64), KernelError> {
        let t = self.table;
        let (k, d) = t.point_values(x)?;
        let out = k.iter().zip(&t.hist_diag).map(|(&v, &dh)| self.map(v, dh, d)).collect();
        Ok((out, self.map(d, d, d)))
    }
}

pub struct KernelCache {
    template: KernelSpec,
    candidates: Vec<Vec<f64>>,
    tables: BTreeMap<u64, Table>,
}

impl KernelCache {
    pub fn new(template: KernelSpec, candidates: Vec<Vec<f64>>) -> Self {
        Self {
            template,
            candidates,
            tables: BTreeMap::new(),
        }
    }

    pub fn template(&self) -> &KernelSpec {
        &self.template
    }

    pub fn candidates(&self) -> &[Vec<f64>] {
        &self.candidates
    }

    /// Bring the table for `scale` up to date with the history and view it.
    pub fn view(
        &mut self,
        scale: Option<f64>,
        xs: &[Vec<f64>],
        idx: &[Option<usize>],
    ) -> Result<KernelView<'_>, KernelError> {
        let (key, outer) = match (&self.template.kind(), scale) {
            (KernelKind::Composite { .. }, s) => (u64::MAX, s.or(self.template.scale())),
            (_, Some(s)) => (s.to_bits(), None),
            (_, None) => (u64::MAX, None),
        };
        if !self.tables.contains_key(&key) {
            let spec = match (self.template.kind(), scale) {
                (KernelKind::Composite { inner, .. }, _) => (**inner).clone(),
                (_, Some(s)) => self.template.with_scale(s)?,
                (_, None) => self.template.clone(),
            };
            self.tables.insert(key, Table::new(spec, &self.candidates)?);
        }
        let table = self.tables.get_mut(&key).expect("inserted above");
        table.sync(xs, idx)?;
        Ok(KernelView { table: &*table, outer })
    }
}
