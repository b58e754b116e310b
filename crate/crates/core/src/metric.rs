//! Metric families on a single chart, with closed-form first and second
//! coordinate derivatives, plus Christoffel symbols, curvature and index.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::hyperbolicity::AlphaBetaPair;

const DET_FLOOR: f64 = 1e-12;
const COND_CEILING: f64 = 1e12;

/// Metric value with coordinate derivatives. `dg[k]` is `∂_k g`,
/// `ddg[k][l]` is `∂_k ∂_l g` (empty when only first order was requested).
#[derive(Debug, Clone)]
pub struct MetricJet {
    pub g: DMatrix<f64>,
    pub dg: Vec<DMatrix<f64>>,
    pub ddg: Vec<Vec<DMatrix<f64>>>,
}

impl MetricJet {
    pub fn constant(g: DMatrix<f64>, order: usize) -> Self {
        let n = g.nrows();
        MetricJet {
            dg: vec![DMatrix::zeros(n, n); n],
            ddg: if order >= 2 {
                vec![vec![DMatrix::zeros(n, n); n]; n]
            } else {
                Vec::new()
            },
            g,
        }
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn order(&self) -> usize {
        if self.ddg.is_empty() {
            1
        } else {
            2
        }
    }

    /// `self + eps * other`, truncated to the lower of the two orders.
    pub fn axpy(&self, eps: f64, other: &MetricJet) -> MetricJet {
        let order = self.order().min(other.order());
        MetricJet {
            g: &self.g + &other.g * eps,
            dg: self
                .dg
                .iter()
                .zip(&other.dg)
                .map(|(a, b)| a + b * eps)
                .collect(),
            ddg: if order >= 2 {
                self.ddg
                    .iter()
                    .zip(&other.ddg)
                    .map(|(ra, rb)| ra.iter().zip(rb).map(|(a, b)| a + b * eps).collect())
                    .collect()
            } else {
                Vec::new()
            },
        }
    }

    fn symmetrize(mut self) -> Self {
        let half = |m: &DMatrix<f64>| (m + m.transpose()) * 0.5;
        self.g = half(&self.g);
        for d in self.dg.iter_mut() {
            *d = half(d);
        }
        for row in self.ddg.iter_mut() {
            for d in row.iter_mut() {
                *d = half(d);
            }
        }
        self
    }
}

/// Symmetric (0,2)-tensor field with coordinate derivatives, used as an
/// additive perturbation of a metric.
pub trait TensorField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn jet(&self, x: &[f64], order: usize) -> MetricJet;
}

/// Built-in families. Coordinates are listed in the order the chart uses.
#[derive(Debug, Clone)]
pub enum MetricKind {
    FlatEuclidean {
        n: usize,
    },
    /// `diag(-1, 1, ..., 1)`; coordinate 0 is time.
    Minkowski {
        n: usize,
    },
    /// `(θ, φ) ↦ diag(1, sin²θ)`
    RoundSphereChart,
    /// `(s, θ, φ) ↦ diag(-1, 1, sin²θ)`
    LorentzCylinder,
    /// Block-diagonal product `g₁ ⊕ g₂`.
    SplitProduct {
        first: Arc<MetricFamily>,
        second: Arc<MetricFamily>,
    },
    /// `g₀(x) + 2 δ(x) dx ds − β(x) ds²` on `(x, s)`; `δ` may be empty (static).
    StandardStationary {
        base: Arc<MetricFamily>,
        beta: ScalarField,
        delta: Vec<ScalarField>,
    },
    GAlphaBeta(Arc<AlphaBetaPair>),
    /// `ψ · g_base`
    ConformalRescale {
        psi: ScalarField,
        base: Arc<MetricFamily>,
    },
    /// `g_base + ε h`
    Perturbed {
        base: Arc<MetricFamily>,
        h: Arc<dyn TensorField>,
        eps: f64,
    },
}

#[derive(Debug, Clone)]
pub struct MetricFamily {
    pub kind: MetricKind,
    pub domain: BoxDomain,
}

/// Christoffel symbols `Γ^i_{jk}` stored as `gamma[(i*n + j)*n + k]`.
#[derive(Debug, Clone)]
pub struct ChristoffelData {
    pub point: Vec<f64>,
    pub n: usize,
    pub gamma: Vec<f64>,
}

impl ChristoffelData {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.gamma[(i * self.n + j) * self.n + k]
    }

    /// `Γ(v, w)^i = Γ^i_{jk} v^j w^k`
    pub fn contract(&self, v: &[f64], w: &[f64]) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += self.gamma[(i * n + j) * n + k] * v[j] * w[k];
                }
            }
            s
        })
    }

    /// Matrix of `w ↦ Γ(v, w)`.
    pub fn along(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, k| {
            (0..n).map(|j| self.gamma[(i * n + j) * n + k] * v[j]).sum()
        })
    }
}

/// Riemann tensor `R^i_{jkl}` stored as `riemann[((i*n + j)*n + k)*n + l]`,
/// with `R(∂_k, ∂_l)∂_j = R^i_{jkl} ∂_i` and `R(X,Y) = [∇_X, ∇_Y] − ∇_{[X,Y]}`.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    pub point: Vec<f64>,
    pub n: usize,
    pub riemann: Vec<f64>,
}

impl CurvatureData {
    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.n;
        self.riemann[((i * n + j) * n + k) * n + l]
    }

    /// `R(x, y) z`
    pub fn apply(&self, x: &[f64], y: &[f64], z: &[f64]) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        s += self.get(i, j, k, l) * z[j] * x[k] * y[l];
                    }
                }
            }
            s
        })
    }

    /// Matrix of the Jacobi operator `w ↦ R(v, w) v`.
    pub fn jacobi_operator(&self, v: &[f64]) -> DMatrix<f64> {
        let n = self.n;
        DMatrix::from_fn(n, n, |i, l| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += self.get(i, j, k, l) * v[j] * v[k];
                }
            }
            s
        })
    }

    /// `R_{ijkl} = g_{im} R^m_{jkl}`
    pub fn lowered(&self, g: &DMatrix<f64>) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        out[((i * n + j) * n + k) * n + l] =
                            (0..n).map(|m| g[(i, m)] * self.get(m, j, k, l)).sum();
                    }
                }
            }
        }
        out
    }
}

impl MetricFamily {
    pub fn flat(n: usize) -> Self {
        MetricFamily {
            kind: MetricKind::FlatEuclidean { n },
            domain: BoxDomain::cube(n, 100.0),
        }
    }

    pub fn minkowski(n: usize) -> Self {
        MetricFamily {
            kind: MetricKind::Minkowski { n },
            domain: BoxDomain::cube(n, 100.0),
        }
    }

    pub fn round_sphere() -> Self {
        let pi = std::f64::consts::PI;
        MetricFamily {
            kind: MetricKind::RoundSphereChart,
            domain: BoxDomain::new(vec![0.05, -4.0 * pi], vec![pi - 0.05, 4.0 * pi])
                .with_period(1, 2.0 * pi),
        }
    }

    pub fn lorentz_cylinder() -> Self {
        let pi = std::f64::consts::PI;
        MetricFamily {
            kind: MetricKind::LorentzCylinder,
            domain: BoxDomain::new(
                vec![-100.0, 0.05, -4.0 * pi],
                vec![100.0, pi - 0.05, 4.0 * pi],
            )
            .with_period(2, 2.0 * pi),
        }
    }

    pub fn split_product(first: MetricFamily, second: MetricFamily) -> Self {
        let mut lo = first.domain.lo.clone();
        let mut hi = first.domain.hi.clone();
        let mut periods = first.domain.periods.clone();
        periods.resize(first.dim(), None);
        lo.extend_from_slice(&second.domain.lo);
        hi.extend_from_slice(&second.domain.hi);
        let mut p2 = second.domain.periods.clone();
        p2.resize(second.dim(), None);
        periods.extend(p2);
        MetricFamily {
            kind: MetricKind::SplitProduct {
                first: Arc::new(first),
                second: Arc::new(second),
            },
            domain: BoxDomain { lo, hi, periods },
        }
    }

    /// Standard stationary metric over `base`, with the time axis `s` limited
    /// to `[-s_max, s_max]`.
    pub fn stationary(
        base: MetricFamily,
        beta: ScalarField,
        delta: Vec<ScalarField>,
        s_max: f64,
    ) -> Self {
        let mut domain = base.domain.clone();
        domain.periods.resize(base.dim(), None);
        domain.lo.push(-s_max);
        domain.hi.push(s_max);
        domain.periods.push(None);
        MetricFamily {
            kind: MetricKind::StandardStationary {
                base: Arc::new(base),
                beta,
                delta,
            },
            domain,
        }
    }

    pub fn conformal(psi: ScalarField, base: MetricFamily) -> Self {
        let domain = base.domain.clone();
        MetricFamily {
            kind: MetricKind::ConformalRescale {
                psi,
                base: Arc::new(base),
            },
            domain,
        }
    }

    pub fn perturbed(base: MetricFamily, h: Arc<dyn TensorField>, eps: f64) -> Self {
        let domain = base.domain.clone();
        MetricFamily {
            kind: MetricKind::Perturbed {
                base: Arc::new(base),
                h,
                eps,
            },
            domain,
        }
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            MetricKind::FlatEuclidean { n } | MetricKind::Minkowski { n } => *n,
            MetricKind::RoundSphereChart => 2,
            MetricKind::LorentzCylinder => 3,
            MetricKind::SplitProduct { first, second } => first.dim() + second.dim(),
            MetricKind::StandardStationary { base, .. } => base.dim() + 1,
            MetricKind::GAlphaBeta(pair) => pair.dim(),
            MetricKind::ConformalRescale { base, .. } | MetricKind::Perturbed { base, .. } => {
                base.dim()
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.kind {
            MetricKind::FlatEuclidean { .. } => "flat-euclidean",
            MetricKind::Minkowski { .. } => "minkowski",
            MetricKind::RoundSphereChart => "round-sphere-chart",
            MetricKind::LorentzCylinder => "lorentz-cylinder",
            MetricKind::SplitProduct { .. } => "split-product",
            MetricKind::StandardStationary { .. } => "standard-stationary",
            MetricKind::GAlphaBeta(_) => "g-alpha-beta",
            MetricKind::ConformalRescale { .. } => "conformal-rescale",
            MetricKind::Perturbed { .. } => "perturbed",
        }
    }

    /// Whether the metric is constant on the chart, so that all Christoffel
    /// symbols vanish identically.
    pub fn is_constant(&self) -> bool {
        match &self.kind {
            MetricKind::FlatEuclidean { .. } | MetricKind::Minkowski { .. } => true,
            MetricKind::SplitProduct { first, second } => {
                first.is_constant() && second.is_constant()
            }
            MetricKind::ConformalRescale {
                psi: ScalarField::Constant(_),
                base,
            } => base.is_constant(),
            _ => false,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.domain.contains(x) {
            return Err(Error::PointOutsideDomain { point: x.to_vec() });
        }
        Ok(())
    }

    /// Metric matrix at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x)?;
        Ok(self.raw_jet(x, 0).symmetrize().g)
    }

    /// Metric with derivatives of order 1 or 2.
    pub fn derivatives(&self, x: &[f64], order: usize) -> Result<MetricJet> {
        if !(1..=2).contains(&order) {
            return Err(Error::OrderUnsupported {
                family: self.kind_name().to_string(),
                order,
            });
        }
        self.check(x)?;
        Ok(self.raw_jet(x, order).symmetrize())
    }

    /// Jet without domain checks or symmetrization. `order == 0` still fills
    /// `dg` where that is free, callers must not rely on it.
    fn raw_jet(&self, x: &[f64], order: usize) -> MetricJet {
        let n = self.dim();
        match &self.kind {
            MetricKind::FlatEuclidean { n } => {
                MetricJet::constant(DMatrix::identity(*n, *n), order)
            }
            MetricKind::Minkowski { n } => {
                let mut g = DMatrix::identity(*n, *n);
                g[(0, 0)] = -1.0;
                MetricJet::constant(g, order)
            }
            MetricKind::RoundSphereChart => sphere_jet(x[0], 0, 1, 2, &[1.0, 0.0], order),
            MetricKind::LorentzCylinder => {
                let mut j = sphere_jet(x[1], 1, 2, 3, &[-1.0, 1.0, 0.0], order);
                j.g[(0, 0)] = -1.0;
                j
            }
            MetricKind::SplitProduct { first, second } => {
                let n1 = first.dim();
                let a = first.raw_jet(&x[..n1], order);
                let b = second.raw_jet(&x[n1..], order);
                let mut out = MetricJet::constant(DMatrix::zeros(n, n), order);
                out.g.view_mut((0, 0), (n1, n1)).copy_from(&a.g);
                out.g.view_mut((n1, n1), (n - n1, n - n1)).copy_from(&b.g);
                if order >= 1 {
                    for k in 0..n1 {
                        out.dg[k].view_mut((0, 0), (n1, n1)).copy_from(&a.dg[k]);
                    }
                    for k in n1..n {
                        out.dg[k]
                            .view_mut((n1, n1), (n - n1, n - n1))
                            .copy_from(&b.dg[k - n1]);
                    }
                }
                if order >= 2 {
                    for k in 0..n1 {
                        for l in 0..n1 {
                            out.ddg[k][l]
                                .view_mut((0, 0), (n1, n1))
                                .copy_from(&a.ddg[k][l]);
                        }
                    }
                    for k in n1..n {
                        for l in n1..n {
                            out.ddg[k][l]
                                .view_mut((n1, n1), (n - n1, n - n1))
                                .copy_from(&b.ddg[k - n1][l - n1]);
                        }
                    }
                }
                out
            }
            MetricKind::StandardStationary { base, beta, delta } => {
                let n0 = base.dim();
                let xs = &x[..n0];
                let a = base.raw_jet(xs, order);
                let mut out = MetricJet::constant(DMatrix::zeros(n, n), order);
                out.g.view_mut((0, 0), (n0, n0)).copy_from(&a.g);
                let bj = beta.jet(xs);
                out.g[(n0, n0)] = -bj.value;
                let dj: Vec<_> = delta.iter().map(|d| d.jet(xs)).collect();
                for (i, d) in dj.iter().enumerate() {
                    out.g[(i, n0)] = d.value;
                    out.g[(n0, i)] = d.value;
                }
                if order >= 1 {
                    for k in 0..n0 {
                        out.dg[k].view_mut((0, 0), (n0, n0)).copy_from(&a.dg[k]);
                        out.dg[k][(n0, n0)] = -bj.grad[k];
                        for (i, d) in dj.iter().enumerate() {
                            out.dg[k][(i, n0)] = d.grad[k];
                            out.dg[k][(n0, i)] = d.grad[k];
                        }
                    }
                }
                if order >= 2 {
                    for k in 0..n0 {
                        for l in 0..n0 {
                            out.ddg[k][l]
                                .view_mut((0, 0), (n0, n0))
                                .copy_from(&a.ddg[k][l]);
                            out.ddg[k][l][(n0, n0)] = -bj.hess[(k, l)];
                            for (i, d) in dj.iter().enumerate() {
                                out.ddg[k][l][(i, n0)] = d.hess[(k, l)];
                                out.ddg[k][l][(n0, i)] = d.hess[(k, l)];
                            }
                        }
                    }
                }
                out
            }
            MetricKind::GAlphaBeta(pair) => pair.metric_jet(x, order),
            MetricKind::ConformalRescale { psi, base } => {
                let b = base.raw_jet(x, order);
                let p = psi.jet(x);
                let mut out = MetricJet {
                    g: &b.g * p.value,
                    dg: Vec::new(),
                    ddg: Vec::new(),
                };
                if order >= 1 || !b.dg.is_empty() {
                    out.dg = (0..n)
                        .map(|k| &b.g * p.grad[k] + &b.dg[k] * p.value)
                        .collect();
                }
                if order >= 2 {
                    out.ddg = (0..n)
                        .map(|k| {
                            (0..n)
                                .map(|l| {
                                    &b.g * p.hess[(k, l)]
                                        + &b.dg[l] * p.grad[k]
                                        + &b.dg[k] * p.grad[l]
                                        + &b.ddg[k][l] * p.value
                                })
                                .collect()
                        })
                        .collect();
                }
                out
            }
            MetricKind::Perturbed { base, h, eps } => {
                let order = order.max(1);
                base.raw_jet(x, order).axpy(*eps, &h.jet(x, order))
            }
        }
    }

    /// Christoffel symbols of the Levi-Civita connection relative to the flat
    /// coordinate connection.
    pub fn christoffel(&self, x: &[f64]) -> Result<ChristoffelData> {
        let jet = self.derivatives(x, 1)?;
        let ginv = checked_inverse(&jet.g, x)?;
        Ok(christoffel_from(&jet, &ginv, x))
    }

    pub fn curvature(&self, x: &[f64]) -> Result<CurvatureData> {
        let jet = self.derivatives(x, 2)?;
        let ginv = checked_inverse(&jet.g, x)?;
        Ok(curvature_from(&jet, &ginv, x).1)
    }

    /// Christoffel symbols and curvature from a single jet evaluation.
    pub fn connection_and_curvature(&self, x: &[f64]) -> Result<(ChristoffelData, CurvatureData)> {
        let jet = self.derivatives(x, 2)?;
        let ginv = checked_inverse(&jet.g, x)?;
        Ok(curvature_from(&jet, &ginv, x))
    }

    /// Number of negative eigenvalues of `g_x`.
    pub fn index(&self, x: &[f64]) -> Result<usize> {
        let g = self.eval(x)?;
        checked_inverse(&g, x)?;
        Ok(g.symmetric_eigen()
            .eigenvalues
            .iter()
            .filter(|e| **e < 0.0)
            .count())
    }

    /// `g_x(v, w)`
    pub fn inner(&self, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
        let g = self.eval(x)?;
        Ok(bilinear(&g, v, w))
    }
}

pub fn bilinear(g: &DMatrix<f64>, v: &[f64], w: &[f64]) -> f64 {
    let n = g.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += v[i] * g[(i, j)] * w[j];
        }
    }
    s
}

/// Jet of `diag(c_0, .., sin²θ at slot, ..)` where the angle sits at
/// coordinate `angle_axis` and the `sin²` entry on diagonal slot `slot`.
fn sphere_jet(
    theta: f64,
    angle_axis: usize,
    slot: usize,
    n: usize,
    diag: &[f64],
    order: usize,
) -> MetricJet {
    let mut g = DMatrix::zeros(n, n);
    for (i, d) in diag.iter().enumerate() {
        g[(i, i)] = *d;
    }
    let (s, c) = theta.sin_cos();
    g[(slot, slot)] = s * s;
    let mut j = MetricJet::constant(g, order);
    j.dg[angle_axis][(slot, slot)] = 2.0 * s * c;
    if order >= 2 {
        j.ddg[angle_axis][angle_axis][(slot, slot)] = 2.0 * (c * c - s * s);
    }
    j
}

pub(crate) fn checked_inverse(g: &DMatrix<f64>, x: &[f64]) -> Result<DMatrix<f64>> {
    let lu = g.clone().lu();
    let det = lu.determinant();
    let degenerate = |cond: f64| Error::DegenerateMetric {
        point: x.to_vec(),
        det,
        cond,
    };
    if !det.is_finite() || det.abs() <= DET_FLOOR {
        return Err(degenerate(f64::INFINITY));
    }
    let inv = lu.try_inverse().ok_or_else(|| degenerate(f64::INFINITY))?;
    let cond = inf_norm(g) * inf_norm(&inv);
    if !cond.is_finite() || cond >= COND_CEILING {
        return Err(degenerate(cond));
    }
    Ok(inv)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// First-kind symbols `S_{ljk} = ½(∂_j g_{lk} + ∂_k g_{lj} − ∂_l g_{jk})`.
fn first_kind(jet: &MetricJet) -> Vec<f64> {
    let n = jet.dim();
    let mut s = vec![0.0; n * n * n];
    for l in 0..n {
        for j in 0..n {
            for k in j..n {
                let v = 0.5 * (jet.dg[j][(l, k)] + jet.dg[k][(l, j)] - jet.dg[l][(j, k)]);
                s[(l * n + j) * n + k] = v;
                s[(l * n + k) * n + j] = v;
            }
        }
    }
    s
}

fn christoffel_from(jet: &MetricJet, ginv: &DMatrix<f64>, x: &[f64]) -> ChristoffelData {
    let n = jet.dim();
    let s = first_kind(jet);
    let mut gamma = vec![0.0; n * n * n];
    for j in 0..n {
        for k in j..n {
            for i in 0..n {
                let v: f64 = (0..n).map(|l| ginv[(i, l)] * s[(l * n + j) * n + k]).sum();
                gamma[(i * n + j) * n + k] = v;
                gamma[(i * n + k) * n + j] = v;
            }
        }
    }
    ChristoffelData {
        point: x.to_vec(),
        n,
        gamma,
    }
}

fn curvature_from(
    jet: &MetricJet,
    ginv: &DMatrix<f64>,
    x: &[f64],
) -> (ChristoffelData, CurvatureData) {
    let n = jet.dim();
    let gam = christoffel_from(jet, ginv, x);
    // dgam[m][(i, j, k)] = ∂_m Γ^i_{jk}
    let idx = |i: usize, j: usize, k: usize| (i * n + j) * n + k;
    let mut dgam = vec![vec![0.0; n * n * n]; n];
    for (m, dgm) in dgam.iter_mut().enumerate() {
        // ∂_m S_{ljk}
        let mut ds = vec![0.0; n * n * n];
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    ds[idx(l, j, k)] = 0.5
                        * (jet.ddg[m][j][(l, k)] + jet.ddg[m][k][(l, j)] - jet.ddg[m][l][(j, k)]);
                }
            }
        }
        // −g^{ip} ∂_m g_{pq} Γ^q_{jk} + g^{il} ∂_m S_{ljk}
        let w = ginv * &jet.dg[m];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let mut v = 0.0;
                    for q in 0..n {
                        v -= w[(i, q)] * gam.get(q, j, k);
                        v += ginv[(i, q)] * ds[idx(q, j, k)];
                    }
                    dgm[idx(i, j, k)] = v;
                }
            }
        }
    }
    let mut riemann = vec![0.0; n * n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in (k + 1)..n {
                    let mut v = dgam[k][idx(i, l, j)] - dgam[l][idx(i, k, j)];
                    for m in 0..n {
                        v += gam.get(i, k, m) * gam.get(m, l, j)
                            - gam.get(i, l, m) * gam.get(m, k, j);
                    }
                    riemann[((i * n + j) * n + k) * n + l] = v;
                    riemann[((i * n + j) * n + l) * n + k] = -v;
                }
            }
        }
    }
    (
        gam,
        CurvatureData {
            point: x.to_vec(),
            n,
            riemann,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::AlphaField;
    use crate::hyperbolicity::SigmaModel;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn catalog() -> Vec<MetricFamily> {
        let stationary_beta = ScalarField::Quadratic {
            c0: 1.0,
            weights: vec![4.0 * PI * PI, 0.5],
            center: vec![0.0, 0.1],
        };
        let pair = AlphaBetaPair::new(
            SigmaModel::Circle,
            AlphaField::ScaledIdentity {
                dim: 1,
                factor: ScalarField::Cosine {
                    c0: 2.0,
                    amp: 1.0,
                    freqs: vec![1.0, 0.0],
                    phase: 0.0,
                },
            },
            ScalarField::Quadratic {
                c0: 1.0,
                weights: vec![0.0, 1.0],
                center: vec![0.0, 0.0],
            },
            vec![0.0],
        )
        .unwrap();
        vec![
            MetricFamily::flat(3),
            MetricFamily::minkowski(4),
            MetricFamily::round_sphere(),
            MetricFamily::lorentz_cylinder(),
            MetricFamily::split_product(MetricFamily::round_sphere(), MetricFamily::minkowski(1)),
            MetricFamily::stationary(
                MetricFamily::flat(2).with_domain(BoxDomain::cube(2, 1.0)),
                stationary_beta,
                vec![
                    ScalarField::Cosine {
                        c0: 0.0,
                        amp: 0.2,
                        freqs: vec![1.0, 2.0],
                        phase: 0.3,
                    },
                    ScalarField::Constant(0.1),
                ],
                5.0,
            ),
            MetricFamily::stationary(
                MetricFamily::round_sphere(),
                ScalarField::Constant(2.0),
                Vec::new(),
                5.0,
            ),
            pair.build()
                .unwrap()
                .with_domain(BoxDomain::new(vec![-3.0, -2.0], vec![3.0, 2.0])),
            MetricFamily::conformal(
                ScalarField::Cosine {
                    c0: 1.0,
                    amp: 0.3,
                    freqs: vec![0.0, 0.7, 1.1],
                    phase: 0.2,
                },
                MetricFamily::lorentz_cylinder(),
            ),
            MetricFamily::conformal(
                ScalarField::ExpQuadratic {
                    c0: 1.0,
                    weights: vec![0.2, -0.1],
                    center: vec![1.0, 0.0],
                },
                MetricFamily::round_sphere(),
            ),
        ]
    }

    fn sample(f: &MetricFamily, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut x = f.domain.sample(rng, 0.0);
        // keep unbounded axes in a moderate range
        for (k, v) in x.iter_mut().enumerate() {
            if f.domain.hi[k] - f.domain.lo[k] > 20.0 {
                *v = v.rem_euclid(6.0) - 3.0;
            }
        }
        x
    }

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn spec_metric_values() {
        let g = MetricFamily::flat(2).eval(&[0.3, 0.7]).unwrap();
        assert_eq!(g, DMatrix::identity(2, 2));
        let g = MetricFamily::minkowski(3).eval(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(
            g,
            DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, 1.0, 1.0]))
        );
        let g = MetricFamily::round_sphere().eval(&[PI / 2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g, DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn spec_derivative_values() {
        let j = MetricFamily::flat(2).derivatives(&[0.1, 0.2], 1).unwrap();
        assert!(j.dg.iter().all(|d| d.iter().all(|v| *v == 0.0)));
        let j = MetricFamily::round_sphere()
            .derivatives(&[PI / 3.0, 0.0], 1)
            .unwrap();
        assert_abs_diff_eq!(j.dg[0][(1, 1)], 3f64.sqrt() / 2.0, epsilon = 1e-14);
        let conf = MetricFamily::conformal(
            ScalarField::Quadratic {
                c0: 1.0,
                weights: vec![1.0],
                center: vec![0.0],
            },
            MetricFamily::flat(2),
        );
        let j = conf.derivatives(&[1.0, 0.0], 1).unwrap();
        assert_abs_diff_eq!(j.dg[0], DMatrix::identity(2, 2) * 2.0, epsilon = 1e-14);
        assert!(matches!(
            conf.derivatives(&[1.0, 0.0], 3),
            Err(Error::OrderUnsupported { order: 3, .. })
        ));
    }

    #[test]
    fn outside_domain_is_rejected() {
        let s = MetricFamily::round_sphere();
        assert!(matches!(
            s.eval(&[0.0, 0.0]),
            Err(Error::PointOutsideDomain { .. })
        ));
        assert!(matches!(
            s.eval(&[1.0]),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn spec_christoffel_values() {
        let c = MetricFamily::flat(3).christoffel(&[0.1, 0.2, 0.3]).unwrap();
        assert!(c.gamma.iter().all(|v| *v == 0.0));
        let c = MetricFamily::round_sphere()
            .christoffel(&[PI / 4.0, 0.0])
            .unwrap();
        assert_abs_diff_eq!(c.get(0, 1, 1), -0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(c.get(1, 0, 1), 1.0, epsilon = 1e-14);
        assert_eq!(c.get(1, 0, 1), c.get(1, 1, 0));
        let c = MetricFamily::conformal(ScalarField::Constant(2.0), MetricFamily::minkowski(3))
            .christoffel(&[0.0, 0.4, 0.1])
            .unwrap();
        assert!(c.gamma.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn degenerate_metric_is_reported() {
        let m = MetricFamily::conformal(ScalarField::Constant(1e-7), MetricFamily::flat(2));
        assert!(matches!(
            m.christoffel(&[0.0, 0.0]),
            Err(Error::DegenerateMetric { .. })
        ));
        assert!(matches!(
            m.index(&[0.0, 0.0]),
            Err(Error::DegenerateMetric { .. })
        ));
    }

    #[test]
    fn spec_curvature_values() {
        let r = MetricFamily::minkowski(3)
            .curvature(&[0.0, 0.0, 0.0])
            .unwrap();
        assert!(r.riemann.iter().all(|v| *v == 0.0));
        let r = MetricFamily::flat(2).curvature(&[0.5, 0.5]).unwrap();
        assert!(r.riemann.iter().all(|v| *v == 0.0));
        let s = MetricFamily::round_sphere();
        let x = [PI / 2.0, 0.0];
        let r = s.curvature(&x).unwrap();
        let g = s.eval(&x).unwrap();
        let (e0, e1) = ([1.0, 0.0], [0.0, 1.0]);
        // K = g(R(X,Y)Y, X) / (g(X,X)g(Y,Y) − g(X,Y)²)
        let num = bilinear(&g, r.apply(&e0, &e1, &e1).as_slice(), &e0);
        assert_abs_diff_eq!(num, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sphere_curvature_matches_christoffel_differences() {
        let s = MetricFamily::round_sphere();
        let x = [1.1, 0.3];
        let r = s.curvature(&x).unwrap();
        let h = 1e-5;
        let n = 2;
        let c0 = s.christoffel(&x).unwrap();
        let dgam = |m: usize| {
            let mut xp = x;
            let mut xm = x;
            xp[m] += h;
            xm[m] -= h;
            let (cp, cm) = (s.christoffel(&xp).unwrap(), s.christoffel(&xm).unwrap());
            cp.gamma
                .iter()
                .zip(&cm.gamma)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>()
        };
        let d = [dgam(0), dgam(1)];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut v = d[k][(i * n + l) * n + j] - d[l][(i * n + k) * n + j];
                        for m in 0..n {
                            v += c0.get(i, k, m) * c0.get(m, l, j)
                                - c0.get(i, l, m) * c0.get(m, k, j);
                        }
                        assert!((v - r.get(i, j, k, l)).abs() < 1e-5);
                    }
                }
            }
        }
    }

    #[test]
    fn spec_index_values() {
        assert_eq!(MetricFamily::flat(3).index(&[0.0; 3]).unwrap(), 0);
        assert_eq!(MetricFamily::minkowski(4).index(&[0.0; 4]).unwrap(), 1);
        assert_eq!(
            MetricFamily::lorentz_cylinder()
                .index(&[0.0, 1.0, 0.0])
                .unwrap(),
            1
        );
    }

    #[test]
    fn analytic_derivatives_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for f in catalog() {
            let n = f.dim();
            for _ in 0..100 {
                let x = sample(&f, &mut rng);
                let j = f.derivatives(&x, 2).unwrap();
                let h = 1e-5;
                for k in 0..n {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[k] += h;
                    xm[k] -= h;
                    let (jp, jm) = (
                        f.derivatives(&xp, 2).unwrap(),
                        f.derivatives(&xm, 2).unwrap(),
                    );
                    for a in 0..n {
                        for b in 0..n {
                            let fd = (jp.g[(a, b)] - jm.g[(a, b)]) / (2.0 * h);
                            assert!(
                                rel_close(fd, j.dg[k][(a, b)], 1e-6),
                                "{} dg {k} ({a},{b}) fd {fd} an {}",
                                f.kind_name(),
                                j.dg[k][(a, b)]
                            );
                            for l in 0..n {
                                let fd2 = (jp.dg[l][(a, b)] - jm.dg[l][(a, b)]) / (2.0 * h);
                                assert!(
                                    rel_close(fd2, j.ddg[k][l][(a, b)], 1e-4),
                                    "{} ddg",
                                    f.kind_name()
                                );
                                assert_eq!(j.ddg[k][l][(a, b)], j.ddg[k][l][(b, a)]);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn christoffel_matches_finite_difference_koszul() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for f in catalog() {
            let n = f.dim();
            for _ in 0..20 {
                let x = sample(&f, &mut rng);
                let c = f.christoffel(&x).unwrap();
                let h = 1e-6;
                let dg: Vec<DMatrix<f64>> = (0..n)
                    .map(|k| {
                        let mut xp = x.clone();
                        let mut xm = x.clone();
                        xp[k] += h;
                        xm[k] -= h;
                        (f.eval(&xp).unwrap() - f.eval(&xm).unwrap()) / (2.0 * h)
                    })
                    .collect();
                let g = f.eval(&x).unwrap();
                for j in 0..n {
                    for k in 0..n {
                        let rhs = DVector::from_fn(n, |l, _| {
                            0.5 * (dg[j][(l, k)] + dg[k][(l, j)] - dg[l][(j, k)])
                        });
                        let sol = g.clone().lu().solve(&rhs).unwrap();
                        for i in 0..n {
                            assert!(
                                (sol[i] - c.get(i, j, k)).abs() <= 1e-6 * (1.0 + sol[i].abs()),
                                "{}",
                                f.kind_name()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn index_is_constant_and_curvature_has_its_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for f in catalog() {
            let n = f.dim();
            let x0 = sample(&f, &mut rng);
            let nu = f.index(&x0).unwrap();
            for _ in 0..100 {
                let x = sample(&f, &mut rng);
                assert_eq!(f.index(&x).unwrap(), nu, "{}", f.kind_name());
            }
            for _ in 0..10 {
                let x = sample(&f, &mut rng);
                let r = f.curvature(&x).unwrap();
                let low = r.lowered(&f.eval(&x).unwrap());
                let at =
                    |i: usize, j: usize, k: usize, l: usize| low[((i * n + j) * n + k) * n + l];
                let scale = 1.0 + low.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                for i in 0..n {
                    for j in 0..n {
                        for k in 0..n {
                            for l in 0..n {
                                assert!((at(i, j, k, l) + at(i, j, l, k)).abs() <= 1e-10 * scale);
                                assert!(
                                    (at(i, j, k, l) + at(j, i, k, l)).abs() <= 1e-8 * scale,
                                    "{} R_{i}{j}{k}{l}",
                                    f.kind_name()
                                );
                                let cyc = r.get(i, j, k, l) + r.get(i, k, l, j) + r.get(i, l, j, k);
                                assert!(cyc.abs() <= 1e-8 * scale);
                            }
                        }
                    }
                }
            }
        }
    }
}
