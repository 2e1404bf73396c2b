//! Free-kernel families evaluated at any arity.
//!
//! A [`KernelSpec`] is a base kernel plus an ordered stack of layers. Each
//! layer is either a re-weighting by a set of anchors,
//!
//! ```text
//! K_m^E(x, x', ...) = sum_{i,j} a_i a_j K_{m+2}(x_i, x_j, x, x', ...)
//! ```
//!
//! or a normalisation that divides every argument by the square root of the
//! 2-kernel diagonal of the stack beneath it. Layers apply in list order, so
//! the first entry is innermost.
//!
//! The free kinds (linear, polynomial, exponential, squared exponential) are
//! functions of the m-semi-inner-product of their arguments times per-point
//! factors. Evaluation exploits that: the arguments are folded into a single
//! elementwise product, and every anchor pair of a re-weighting layer is
//! pre-multiplied once when the layer is built.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::KernelError;

/// Default diagonal jitter for Gram matrices that are about to be factorised.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// `<1, a ⊙ a' ⊙ ...>`: the sum over coordinates of the product of all vectors.
pub fn m_inner(vectors: &[&[f64]]) -> Result<f64, KernelError> {
    let Some(first) = vectors.first() else {
        return Err(KernelError::IllegalArity {
            kind: "m-semi-inner-product",
            arity: 0,
        });
    };
    let n = first.len();
    for (index, v) in vectors.iter().enumerate() {
        if v.len() != n {
            return Err(KernelError::DimensionMismatch {
                index,
                expected: n,
                found: v.len(),
            });
        }
    }
    Ok((0..n).map(|k| vectors.iter().map(|v| v[k]).product::<f64>()).sum())
}

/// One anchor of a re-weighting set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Anchor {
    pub x: Vec<f64>,
    pub alpha: f64,
}

/// Anchor points and their dual coefficients.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct ReweightSet {
    anchors: Vec<Anchor>,
}

impl ReweightSet {
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, KernelError> {
        if let Some(first) = anchors.first() {
            let n = first.x.len();
            for (index, a) in anchors.iter().enumerate() {
                if a.x.len() != n {
                    return Err(KernelError::DimensionMismatch {
                        index,
                        expected: n,
                        found: a.x.len(),
                    });
                }
                if !a.alpha.is_finite() || a.x.iter().any(|v| !v.is_finite()) {
                    return Err(KernelError::InvalidHyperparameter {
                        name: "anchor",
                        value: a.alpha,
                    });
                }
            }
        }
        Ok(Self { anchors })
    }

    pub fn from_pairs<I>(pairs: I) -> Result<Self, KernelError>
    where
        I: IntoIterator<Item = (Vec<f64>, f64)>,
    {
        Self::new(pairs.into_iter().map(|(x, alpha)| Anchor { x, alpha }).collect())
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Input dimension, or `None` for the empty set.
    pub fn dimension(&self) -> Option<usize> {
        self.anchors.first().map(|a| a.x.len())
    }
}

/// Base kernel family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "type", rename_all = "kebab-case"))]
pub enum KernelKind {
    Linear,
    Polynomial {
        degree: u32,
    },
    Exponential {
        sigma: f64,
    },
    /// The normalised exponential kernel. Only this reading is consistent
    /// with the 2-kernel `exp(-|x - x'|^2 / 2 sigma)`:
    /// `exp((2 <<x, ...>>_m - sum_i |x_i|^2) / 2 sigma)`.
    #[cfg_attr(feature = "serde", serde(rename = "se"))]
    SquaredExponential {
        sigma: f64,
    },
    Matern12 {
        length: f64,
    },
    Matern32 {
        length: f64,
    },
    Mixture {
        weights: [f64; 3],
        components: Box<[KernelSpec; 3]>,
    },
    /// SE kernel on the feature-space distance of an inner 2-kernel `k`:
    /// `exp(-(k(x,x) + k(x',x') - 2 k(x,x')) / 2 sigma)`.
    Composite {
        sigma: f64,
        inner: Box<KernelSpec>,
    },
}

impl KernelKind {
    pub fn name(&self) -> &'static str {
        match self {
            KernelKind::Linear => "linear",
            KernelKind::Polynomial { .. } => "polynomial",
            KernelKind::Exponential { .. } => "exponential",
            KernelKind::SquaredExponential { .. } => "se",
            KernelKind::Matern12 { .. } => "matern12",
            KernelKind::Matern32 { .. } => "matern32",
            KernelKind::Mixture { .. } => "mixture",
            KernelKind::Composite { .. } => "composite",
        }
    }

    /// Kinds defined at every arity (the m-semi-inner-product families).
    pub fn is_free(&self) -> bool {
        matches!(
            self,
            KernelKind::Linear
                | KernelKind::Polynomial { .. }
                | KernelKind::Exponential { .. }
                | KernelKind::SquaredExponential { .. }
        )
    }

    fn validate(&self) -> Result<(), KernelError> {
        let positive = |name, value: f64| {
            if value > 0.0 && value.is_finite() {
                Ok(())
            } else {
                Err(KernelError::InvalidHyperparameter { name, value })
            }
        };
        match self {
            KernelKind::Linear => Ok(()),
            KernelKind::Polynomial { degree } => {
                if *degree >= 1 {
                    Ok(())
                } else {
                    Err(KernelError::InvalidHyperparameter {
                        name: "degree",
                        value: 0.0,
                    })
                }
            }
            KernelKind::Exponential { sigma }
            | KernelKind::SquaredExponential { sigma }
            | KernelKind::Composite { sigma, .. } => positive("sigma", *sigma),
            KernelKind::Matern12 { length } | KernelKind::Matern32 { length } => positive("length", *length),
            KernelKind::Mixture { weights, .. } => {
                for &w in weights {
                    if !(w >= 0.0 && w.is_finite()) {
                        return Err(KernelError::InvalidHyperparameter {
                            name: "mixture weight",
                            value: w,
                        });
                    }
                }
                if weights.iter().all(|&w| w == 0.0) {
                    return Err(KernelError::InvalidHyperparameter {
                        name: "mixture weight",
                        value: 0.0,
                    });
                }
                Ok(())
            }
        }
    }

    /// Scalar function of the m-semi-inner-product, with `offset` added to
    /// the exponent of the exponential families (and applied as a factor
    /// otherwise).
    #[inline]
    fn h(&self, s: f64, offset: f64) -> f64 {
        match *self {
            KernelKind::Linear => s * libm::exp(offset),
            KernelKind::Polynomial { degree } => libm::pow(1.0 + s, degree as f64) * libm::exp(offset),
            KernelKind::Exponential { sigma } | KernelKind::SquaredExponential { sigma } => {
                libm::exp(s / sigma + offset)
            }
            _ => unreachable!("h() is only defined for free kinds"),
        }
    }

    /// Per-point log factor folded into the exponent (SE only).
    fn point_offset(&self, x: &[f64]) -> f64 {
        match *self {
            KernelKind::SquaredExponential { sigma } => -x.iter().map(|v| v * v).sum::<f64>() / (2.0 * sigma),
            _ => 0.0,
        }
    }
}

/// Pre-multiplied anchor pairs of one re-weighting layer.
#[derive(Debug, Clone, PartialEq)]
struct PairTable {
    dim: usize,
    /// `(2 - [i == j]) a_i a_j s_i s_j` with `s` the normalisation scales
    /// of the anchors under the stack beneath this layer.
    weights: Vec<f64>,
    /// Sum of the anchors' exponent offsets.
    offsets: Vec<f64>,
    /// `x_i ⊙ x_j`, `dim` entries per pair.
    products: Vec<f64>,
}

impl PairTable {
    fn len(&self) -> usize {
        self.weights.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Layer {
    Reweight { set: ReweightSet, table: PairTable },
    Normalize,
}

/// Description of a kernel: base family plus re-weighting and
/// normalisation layers. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "wire::SpecWire", into = "wire::SpecWire"))]
pub struct KernelSpec {
    kind: KernelKind,
    layers: Vec<Layer>,
}

/// A point with its per-point factors under a particular spec.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPoint {
    x: Vec<f64>,
    scale: f64,
    offset: f64,
}

impl PreparedPoint {
    pub fn x(&self) -> &[f64] {
        &self.x
    }
}

/// Layer summary for callers that need to inspect a spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerRef<'a> {
    Reweight(&'a ReweightSet),
    Normalize,
}

impl KernelSpec {
    pub fn new(kind: KernelKind) -> Result<Self, KernelError> {
        kind.validate()?;
        if let KernelKind::Mixture { components, .. } = &kind {
            for c in components.iter() {
                c.check_arity(2)?;
            }
        }
        if let KernelKind::Composite { inner, .. } = &kind {
            inner.check_arity(2)?;
        }
        Ok(Self {
            kind,
            layers: Vec::new(),
        })
    }

    pub fn linear() -> Self {
        Self {
            kind: KernelKind::Linear,
            layers: Vec::new(),
        }
    }

    pub fn polynomial(degree: u32) -> Result<Self, KernelError> {
        Self::new(KernelKind::Polynomial { degree })
    }

    pub fn exponential(sigma: f64) -> Result<Self, KernelError> {
        Self::new(KernelKind::Exponential { sigma })
    }

    pub fn se(sigma: f64) -> Result<Self, KernelError> {
        Self::new(KernelKind::SquaredExponential { sigma })
    }

    pub fn matern12(length: f64) -> Result<Self, KernelError> {
        Self::new(KernelKind::Matern12 { length })
    }

    pub fn matern32(length: f64) -> Result<Self, KernelError> {
        Self::new(KernelKind::Matern32 { length })
    }

    pub fn mixture(weights: [f64; 3], components: [KernelSpec; 3]) -> Result<Self, KernelError> {
        Self::new(KernelKind::Mixture {
            weights,
            components: Box::new(components),
        })
    }

    pub fn composite(sigma: f64, inner: KernelSpec) -> Result<Self, KernelError> {
        Self::new(KernelKind::Composite {
            sigma,
            inner: Box::new(inner),
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerRef<'_>> {
        self.layers.iter().map(|l| match l {
            Layer::Reweight { set, .. } => LayerRef::Reweight(set),
            Layer::Normalize => LayerRef::Normalize,
        })
    }

    /// Whether the outermost layer is a normalisation.
    pub fn is_normalized(&self) -> bool {
        matches!(self.layers.last(), Some(Layer::Normalize))
    }

    pub fn reweight_sets(&self) -> impl Iterator<Item = &ReweightSet> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Reweight { set, .. } => Some(set),
            Layer::Normalize => None,
        })
    }

    /// Input dimension pinned by the anchors, if any.
    pub fn input_dimension(&self) -> Option<usize> {
        self.reweight_sets().find_map(|s| s.dimension())
    }

    /// Outermost scale hyperparameter: sigma for exponential, SE and
    /// composite kinds, the length for Matérn kinds.
    pub fn scale(&self) -> Option<f64> {
        match self.kind {
            KernelKind::Exponential { sigma }
            | KernelKind::SquaredExponential { sigma }
            | KernelKind::Composite { sigma, .. } => Some(sigma),
            KernelKind::Matern12 { length } | KernelKind::Matern32 { length } => Some(length),
            _ => None,
        }
    }

    /// Copy of this spec with the scale replaced; re-weighting layers are
    /// rebuilt against the new base.
    pub fn with_scale(&self, value: f64) -> Result<Self, KernelError> {
        let kind = match &self.kind {
            KernelKind::Exponential { .. } => KernelKind::Exponential { sigma: value },
            KernelKind::SquaredExponential { .. } => KernelKind::SquaredExponential { sigma: value },
            KernelKind::Composite { inner, .. } => KernelKind::Composite {
                sigma: value,
                inner: inner.clone(),
            },
            KernelKind::Matern12 { .. } => KernelKind::Matern12 { length: value },
            KernelKind::Matern32 { .. } => KernelKind::Matern32 { length: value },
            other => return Err(KernelError::NoScale { kind: other.name() }),
        };
        let mut spec = Self::new(kind)?;
        for layer in &self.layers {
            spec = match layer {
                Layer::Reweight { set, .. } => spec.reweight(set.clone())?,
                Layer::Normalize => spec.normalize(),
            };
        }
        Ok(spec)
    }

    /// Wrap in a normalisation layer. Normalising an already normalised
    /// spec is the identity.
    pub fn normalize(mut self) -> Self {
        if !self.is_normalized() {
            self.layers.push(Layer::Normalize);
        }
        self
    }

    /// Append a re-weighting layer built from `set`.
    pub fn reweight(mut self, set: ReweightSet) -> Result<Self, KernelError> {
        if !self.kind.is_free() {
            return Err(KernelError::IllegalReweightBase { kind: self.kind.name() });
        }
        let dim = match (self.input_dimension(), set.dimension()) {
            (Some(have), Some(new)) if have != new => {
                return Err(KernelError::DimensionMismatch {
                    index: 0,
                    expected: have,
                    found: new,
                })
            }
            (_, Some(new)) => new,
            (Some(have), None) => have,
            (None, None) => 0,
        };
        let prepared = set
            .anchors()
            .iter()
            .map(|a| self.prepare(&a.x))
            .collect::<Result<Vec<_>, _>>()?;
        let m = prepared.len();
        let pairs = m * (m + 1) / 2;
        let mut table = PairTable {
            dim,
            weights: Vec::with_capacity(pairs),
            offsets: Vec::with_capacity(pairs),
            products: Vec::with_capacity(pairs * dim),
        };
        let anchors = set.anchors();
        for i in 0..m {
            for j in i..m {
                let mult = if i == j { 1.0 } else { 2.0 };
                table
                    .weights
                    .push(mult * anchors[i].alpha * anchors[j].alpha * prepared[i].scale * prepared[j].scale);
                table.offsets.push(prepared[i].offset + prepared[j].offset);
                table
                    .products
                    .extend(anchors[i].x.iter().zip(&anchors[j].x).map(|(a, b)| a * b));
            }
        }
        self.layers.push(Layer::Reweight { set, table });
        Ok(self)
    }

    fn check_arity(&self, arity: usize) -> Result<(), KernelError> {
        if arity == 0 || (!self.kind.is_free() && arity != 2) {
            return Err(KernelError::IllegalArity {
                kind: self.kind.name(),
                arity,
            });
        }
        Ok(())
    }

    fn check_dim(&self, index: usize, x: &[f64]) -> Result<(), KernelError> {
        if let Some(n) = self.input_dimension() {
            if x.len() != n {
                return Err(KernelError::DimensionMismatch {
                    index,
                    expected: n,
                    found: x.len(),
                });
            }
        }
        Ok(())
    }

    /// Compute the per-point factors of `x` under this spec. Fails if a
    /// normalisation layer meets a non-positive diagonal.
    pub fn prepare(&self, x: &[f64]) -> Result<PreparedPoint, KernelError> {
        self.check_dim(0, x)?;
        let offset = self.kind.point_offset(x);
        let mut scale = 1.0;
        let sq: Vec<f64> = x.iter().map(|v| v * v).collect();
        for depth in 0..self.layers.len() {
            if let Layer::Normalize = self.layers[depth] {
                let diag = if self.kind.is_free() {
                    scale * scale * self.accumulate(depth, &sq, 2.0 * offset)
                } else {
                    scale * scale * self.base_pair(x, x)?
                };
                if !(diag > 0.0 && diag.is_finite()) {
                    return Err(KernelError::NonPositiveDiagonal {
                        point: x.to_vec(),
                        value: diag,
                    });
                }
                scale /= libm::sqrt(diag);
            }
        }
        Ok(PreparedPoint {
            x: x.to_vec(),
            scale,
            offset,
        })
    }

    /// Evaluate at arity `points.len()`.
    pub fn eval(&self, points: &[&[f64]]) -> Result<f64, KernelError> {
        self.check_arity(points.len())?;
        let n = points[0].len();
        for (index, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(KernelError::DimensionMismatch {
                    index,
                    expected: n,
                    found: p.len(),
                });
            }
            self.check_dim(index, p)?;
        }
        let prepared = points.iter().map(|p| self.prepare(p)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&PreparedPoint> = prepared.iter().collect();
        self.eval_prepared(&refs)
    }

    /// 2-kernel shorthand.
    pub fn eval2(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
        self.eval(&[a, b])
    }

    /// Evaluate on points already prepared under this spec.
    pub fn eval_prepared(&self, points: &[&PreparedPoint]) -> Result<f64, KernelError> {
        self.check_arity(points.len())?;
        let scale: f64 = points.iter().map(|p| p.scale).product();
        if self.kind.is_free() {
            let n = points[0].x.len();
            let mut prod = vec![1.0; n];
            let mut offset = 0.0;
            for p in points {
                for (acc, v) in prod.iter_mut().zip(&p.x) {
                    *acc *= v;
                }
                offset += p.offset;
            }
            Ok(scale * self.accumulate(self.layers.len(), &prod, offset))
        } else {
            Ok(scale * self.base_pair(&points[0].x, &points[1].x)?)
        }
    }

    /// Sum over the re-weighting layers below `depth` for a folded
    /// elementwise product `prod` and accumulated exponent `offset`.
    fn accumulate(&self, depth: usize, prod: &[f64], offset: f64) -> f64 {
        // skip normalisation layers: their factors are folded into scales
        let mut d = depth;
        while d > 0 && matches!(self.layers[d - 1], Layer::Normalize) {
            d -= 1;
        }
        if d == 0 {
            return self.kind.h(prod.iter().sum(), offset);
        }
        let Layer::Reweight { table, .. } = &self.layers[d - 1] else {
            unreachable!()
        };
        let below = d - 1;
        let innermost = self.layers[..below].iter().all(|l| matches!(l, Layer::Normalize));
        let dim = table.dim;
        let mut total = 0.0;
        if innermost {
            for k in 0..table.len() {
                let v = &table.products[k * dim..(k + 1) * dim];
                let s: f64 = v.iter().zip(prod).map(|(a, b)| a * b).sum();
                total += table.weights[k] * self.kind.h(s, offset + table.offsets[k]);
            }
        } else {
            let mut buf = vec![0.0; dim];
            for k in 0..table.len() {
                let v = &table.products[k * dim..(k + 1) * dim];
                for ((b, a), p) in buf.iter_mut().zip(v).zip(prod) {
                    *b = a * p;
                }
                total += table.weights[k] * self.accumulate(below, &buf, offset + table.offsets[k]);
            }
        }
        total
    }

    /// Unscaled 2-kernel of the non-free kinds.
    fn base_pair(&self, a: &[f64], b: &[f64]) -> Result<f64, KernelError> {
        if a.len() != b.len() {
            return Err(KernelError::DimensionMismatch {
                index: 1,
                expected: a.len(),
                found: b.len(),
            });
        }
        let dist = || libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
        Ok(match &self.kind {
            KernelKind::Matern12 { length } => libm::exp(-dist() / length),
            KernelKind::Matern32 { length } => {
                let r = libm::sqrt(3.0) * dist() / length;
                (1.0 + r) * libm::exp(-r)
            }
            KernelKind::Mixture { weights, components } => {
                let mut total = 0.0;
                for (w, c) in weights.iter().zip(components.iter()) {
                    if *w != 0.0 {
                        total += w * c.eval2(a, b)?;
                    }
                }
                total
            }
            KernelKind::Composite { sigma, inner } => {
                let pa = inner.prepare(a)?;
                let pb = inner.prepare(b)?;
                let kaa = inner.eval_prepared(&[&pa, &pa])?;
                let kbb = inner.eval_prepared(&[&pb, &pb])?;
                let kab = inner.eval_prepared(&[&pa, &pb])?;
                composite_value(*sigma, kaa, kbb, kab)
            }
            KernelKind::Linear
            | KernelKind::Polynomial { .. }
            | KernelKind::Exponential { .. }
            | KernelKind::SquaredExponential { .. } => {
                let pa = PreparedPoint {
                    x: a.to_vec(),
                    scale: 1.0,
                    offset: self.kind.point_offset(a),
                };
                let pb = PreparedPoint {
                    x: b.to_vec(),
                    scale: 1.0,
                    offset: self.kind.point_offset(b),
                };
                let prod: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
                self.kind.h(prod.iter().sum(), pa.offset + pb.offset)
            }
        })
    }
}

/// Outer SE applied to the feature-space squared distance of an inner kernel.
pub fn composite_value(sigma: f64, kaa: f64, kbb: f64, kab: f64) -> f64 {
    let d2 = (kaa + kbb - 2.0 * kab).max(0.0);
    libm::exp(-d2 / (2.0 * sigma))
}

/// Gram matrix `G[i][j] = K(X_i, X_j) + jitter [i == j]`, built from the
/// upper triangle and mirrored.
pub fn gram(spec: &KernelSpec, xs: &[Vec<f64>], jitter: f64) -> Result<DMatrix<f64>, KernelError> {
    let prepared = xs.iter().map(|x| spec.prepare(x)).collect::<Result<Vec<_>, _>>()?;
    let n = xs.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = spec.eval_prepared(&[&prepared[i], &prepared[j]])?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        g[(i, i)] += jitter;
    }
    Ok(g)
}

#[cfg(feature = "serde")]
mod wire {
    use super::*;

    #[derive(serde::Serialize, serde::Deserialize)]
    #[serde(rename_all = "kebab-case")]
    pub enum LayerWire {
        Reweight(ReweightSet),
        Normalize,
    }

    #[derive(serde::Serialize, serde::Deserialize)]
    pub struct SpecWire {
        pub kind: KernelKind,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        pub layers: Vec<LayerWire>,
    }

    impl TryFrom<SpecWire> for KernelSpec {
        type Error = KernelError;

        fn try_from(w: SpecWire) -> Result<Self, Self::Error> {
            let mut spec = KernelSpec::new(w.kind)?;
            for layer in w.layers {
                spec = match layer {
                    LayerWire::Reweight(set) => spec.reweight(ReweightSet::new(set.anchors)?)?,
                    LayerWire::Normalize => spec.normalize(),
                };
            }
            Ok(spec)
        }
    }

    impl From<KernelSpec> for SpecWire {
        fn from(s: KernelSpec) -> Self {
            SpecWire {
                kind: s.kind,
                layers: s
                    .layers
                    .into_iter()
                    .map(|l| match l {
                        Layer::Reweight { set, .. } => LayerWire::Reweight(set),
                        Layer::Normalize => LayerWire::Normalize,
                    })
                    .collect(),
            }
        }
    }
}
