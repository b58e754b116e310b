//! Compactly supported metric perturbations (tube bumps, conformal, split,
//! stationary), the transversality pairing against endpoint-vanishing fields,
//! the surjectivity verdict and degeneracy-breaking sweeps.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{cutoff_sq, ScalarField, ScalarJet};
use crate::geodesic::{self, chart_sine, DiscretizedCurve, Periodicity, ShootOptions};
use crate::hermite;
use crate::index_form::{self, PathBasis, GAUSS2};
use crate::jacobi::{self, FieldAlong};
use crate::metric::{bilinear, MetricFamily, MetricJet, TensorField};

/// Sub-panels per partition interval in the pairing quadrature.
const PAIRING_PANELS: usize = 4;

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationClass {
    General,
    Conformal,
    Split,
    Stationary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct PerturbationMeta {
    pub description: String,
    pub interval: Option<(f64, f64)>,
    pub tube_radius: Option<f64>,
    /// Curve parameters where the tensor restricted to the curve has a kink;
    /// the pairing quadrature splits there.
    pub breakpoints: Vec<f64>,
}

/// A symmetric (0,2)-tensor field vanishing with its derivatives outside an
/// axis-aligned box (periodic axes wrap).
#[derive(Debug, Clone)]
pub struct PerturbationField {
    pub class: PerturbationClass,
    pub support_lo: Vec<f64>,
    pub support_hi: Vec<f64>,
    pub tensor: Arc<dyn TensorField>,
    pub meta: PerturbationMeta,
    pub periods: Vec<Option<f64>>,
}

fn zero_jet(n: usize, order: usize) -> MetricJet {
    MetricJet::constant(DMatrix::zeros(n, n), order)
}

impl PerturbationField {
    pub fn new(
        class: PerturbationClass,
        support: (Vec<f64>, Vec<f64>),
        tensor: Arc<dyn TensorField>,
        meta: PerturbationMeta,
    ) -> Self {
        let n = tensor.dim();
        PerturbationField {
            class,
            support_lo: support.0,
            support_hi: support.1,
            tensor,
            meta,
            periods: vec![None; n],
        }
    }

    pub fn with_periods(mut self, periods: Vec<Option<f64>>) -> Self {
        self.periods = periods;
        self
    }

    pub fn in_support(&self, y: &[f64]) -> bool {
        y.iter().enumerate().all(|(k, &v)| {
            let (lo, hi) = (self.support_lo[k], self.support_hi[k]);
            let v = match self.periods.get(k).copied().flatten() {
                Some(p) => {
                    let mid = 0.5 * (lo + hi);
                    v - p * ((v - mid) / p).round()
                }
                None => v,
            };
            v >= lo && v <= hi
        })
    }

    pub fn value(&self, y: &[f64]) -> DMatrix<f64> {
        self.jet(y, 1).g
    }

    /// `Σ cᵢ hᵢ`; the class is kept when all terms share it.
    pub fn combine(terms: &[(f64, &PerturbationField)]) -> PerturbationField {
        let first = terms[0].1;
        let n = first.tensor.dim();
        let class = if terms.iter().all(|(_, h)| h.class == first.class) {
            first.class
        } else {
            PerturbationClass::General
        };
        let lo = (0..n)
            .map(|k| {
                terms
                    .iter()
                    .map(|(_, h)| h.support_lo[k])
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let hi = (0..n)
            .map(|k| {
                terms
                    .iter()
                    .map(|(_, h)| h.support_hi[k])
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .collect();
        let mut breakpoints: Vec<f64> = terms
            .iter()
            .flat_map(|(_, h)| h.meta.breakpoints.clone())
            .collect();
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breakpoints.dedup();
        PerturbationField {
            class,
            support_lo: lo,
            support_hi: hi,
            tensor: Arc::new(Combination {
                n,
                terms: terms
                    .iter()
                    .map(|(c, h)| (*c, Arc::new((*h).clone()) as Arc<dyn TensorField>))
                    .collect(),
            }),
            meta: PerturbationMeta {
                description: "linear combination".into(),
                breakpoints,
                ..Default::default()
            },
            periods: first.periods.clone(),
        }
    }
}

impl TensorField for PerturbationField {
    fn dim(&self) -> usize {
        self.tensor.dim()
    }

    fn jet(&self, x: &[f64], order: usize) -> MetricJet {
        if !self.in_support(x) {
            return zero_jet(self.dim(), order);
        }
        self.tensor.jet(x, order)
    }
}

#[derive(Debug)]
struct Combination {
    n: usize,
    terms: Vec<(f64, Arc<dyn TensorField>)>,
}

impl TensorField for Combination {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64], order: usize) -> MetricJet {
        self.terms
            .iter()
            .fold(zero_jet(self.n, order), |acc, (c, t)| {
                acc.axpy(*c, &t.jet(x, order))
            })
    }
}

/// Builds a jet of size `n` from scalar-entry jets over the leading `n0`
/// coordinates; derivatives along the trailing coordinates vanish.
fn jet_from_entries(
    n: usize,
    n0: usize,
    order: usize,
    entry: impl Fn(usize, usize) -> Option<ScalarJet>,
) -> MetricJet {
    let mut out = zero_jet(n, order);
    for i in 0..n {
        for j in i..n {
            let Some(s) = entry(i, j) else { continue };
            out.g[(i, j)] = s.value;
            out.g[(j, i)] = s.value;
            for k in 0..n0 {
                out.dg[k][(i, j)] = s.grad[k];
                out.dg[k][(j, i)] = s.grad[k];
                if order >= 2 {
                    for l in 0..n0 {
                        out.ddg[k][l][(i, j)] = s.hess[(k, l)];
                        out.ddg[k][l][(j, i)] = s.hess[(k, l)];
                    }
                }
            }
        }
    }
    out
}

/// `Σ sₖ(x) Sₖ` with scalar coefficient fields and constant symmetric `Sₖ`.
#[derive(Debug, Clone)]
pub struct BumpSum {
    pub n: usize,
    pub terms: Vec<(ScalarField, DMatrix<f64>)>,
}

impl TensorField for BumpSum {
    fn dim(&self) -> usize {
        self.n
    }

    fn jet(&self, x: &[f64], order: usize) -> MetricJet {
        let mut out = zero_jet(self.n, order);
        for (s, m) in &self.terms {
            let j = s.jet(x);
            out.g += m * j.value;
            for k in 0..self.n {
                out.dg[k] += m * j.grad[k];
                if order >= 2 {
                    for l in 0..self.n {
                        out.ddg[k][l] += m * j.hess[(k, l)];
                    }
                }
            }
        }
        out
    }
}

/// Random compactly supported tensor: `count` bumps with centres within
/// `spread` of `center` and random symmetric coefficient matrices.
pub fn random_bump_sum<R: Rng>(
    rng: &mut R,
    center: &[f64],
    spread: f64,
    count: usize,
) -> PerturbationField {
    let n = center.len();
    let mut terms = Vec::new();
    let mut lo = vec![f64::INFINITY; n];
    let mut hi = vec![f64::NEG_INFINITY; n];
    for _ in 0..count {
        let c: Vec<f64> = center
            .iter()
            .map(|x| x + rng.gen_range(-spread..spread))
            .collect();
        let radius = rng.gen_range(0.5..1.5) * spread.max(0.1);
        let mut s = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        s = (&s + s.transpose()) * 0.5;
        for k in 0..n {
            lo[k] = lo[k].min(c[k] - radius);
            hi[k] = hi[k].max(c[k] + radius);
        }
        terms.push((
            ScalarField::Bump {
                amp: 1.0,
                radius,
                center: c,
            },
            s,
        ));
    }
    PerturbationField::new(
        PerturbationClass::General,
        (lo, hi),
        Arc::new(BumpSum { n, terms }),
        PerturbationMeta {
            description: format!("random sum of {count} bumps"),
            ..Default::default()
        },
    )
}

/// `ψ · g₀`
#[derive(Debug, Clone)]
pub struct ConformalTensor {
    pub psi: ScalarField,
    pub base: MetricFamily,
}

impl TensorField for ConformalTensor {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn jet(&self, x: &[f64], order: usize) -> MetricJet {
        let n = self.dim();
        let Ok(b) = self.base.derivatives(x, order) else {
            return zero_jet(n, order);
        };
        let s = self.psi.jet(x);
        let mut out = zero_jet(n, order);
        out.g = &b.g * s.value;
        for k in 0..n {
            out.dg[k] = &b.g * s.grad[k] + &b.dg[k] * s.value;
            if order >= 2 {
                for l in 0..n {
                    out.ddg[k][l] = &b.g * s.hess[(k, l)]
                        + &b.dg[l] * s.grad[k]
                        + &b.dg[k] * s.grad[l]
                        + &b.ddg[k][l] * s.value;
                }
            }
        }
        out
    }
}

pub fn conformal_field(psi: ScalarField, base: &MetricFamily) -> PerturbationField {
    let support = psi
        .support()
        .map(|(mut lo, mut hi)| {
            lo.resize(base.dim(), f64::NEG_INFINITY);
            hi.resize(base.dim(), f64::INFINITY);
            (lo, hi)
        })
        .unwrap_or_else(|| (base.domain.lo.clone(), base.domain.hi.clone()));
    PerturbationField::new(
        PerturbationClass::Conformal,
        support,
        Arc::new(ConformalTensor {
            psi,
            base: base.clone(),
        }),
        PerturbationMeta {
            description: "conformal".into(),
            ..Default::default()
        },
    )
}

/// Components of a stationary variation on `(x, s)`: `𝔥` (upper triangle,
/// row-major), the covector `g₀(ρ, ·)` and `ζ`, all independent of `s`.
#[derive(Debug, Clone)]
pub struct StationaryComponents {
    pub n0: usize,
    pub frak_h: Vec<ScalarField>,
    pub rho: Vec<ScalarField>,
    pub zeta: ScalarField,
}

impl StationaryComponents {
    pub fn zero(n0: usize) -> Self {
        StationaryComponents {
            n0,
            frak_h: vec![ScalarField::Constant(0.0); n0 * (n0 + 1) / 2],
            rho: vec![ScalarField::Constant(0.0); n0],
            zeta: ScalarField::Constant(0.0),
        }
    }

    fn tri(&self, i: usize, j: usize) -> usize {
        // row-major upper triangle, i <= j
        i * self.n0 - i * (i + 1) / 2 + j
    }
}

impl TensorField for StationaryComponents {
    fn dim(&self) -> usize {
        self.n0 + 1
    }

    fn jet(&self, x: &[f64], order: usize) -> MetricJet {
        let n0 = self.n0;
        let xs = &x[..n0];
        jet_from_entries(n0 + 1, n0, order, |i, j| {
            Some(if j < n0 {
                self.frak_h[self.tri(i, j)].jet(xs)
            } else if i < n0 {
                self.rho[i].jet(xs)
            } else {
                self.zeta.jet(xs)
            })
        })
    }
}

/// Stationary perturbation supported in `x ∈ [x_lo, x_hi]`, any `s`.
pub fn stationary_field(
    comp: StationaryComponents,
    x_lo: Vec<f64>,
    x_hi: Vec<f64>,
) -> PerturbationField {
    let (mut lo, mut hi) = (x_lo, x_hi);
    lo.push(f64::NEG_INFINITY);
    hi.push(f64::INFINITY);
    PerturbationField::new(
        PerturbationClass::Stationary,
        (lo, hi),
        Arc::new(comp),
        PerturbationMeta {
            description: "stationary (s-independent)".into(),
            ..Default::default()
        },
    )
}

/// Random stationary variation with bump components around `x0`.
pub fn random_stationary<R: Rng>(
    rng: &mut R,
    x0: &[f64],
) -> (StationaryComponents, PerturbationField) {
    let n0 = x0.len();
    let bump = |rng: &mut R| {
        let c: Vec<f64> = x0.iter().map(|x| x + rng.gen_range(-0.4..0.4)).collect();
        ScalarField::Bump {
            amp: rng.gen_range(-1.0..1.0),
            radius: rng.gen_range(0.5..1.0),
            center: c,
        }
    };
    let comp = StationaryComponents {
        n0,
        frak_h: (0..n0 * (n0 + 1) / 2).map(|_| bump(rng)).collect(),
        rho: (0..n0).map(|_| bump(rng)).collect(),
        zeta: bump(rng),
    };
    let field = stationary_field(
        comp.clone(),
        x0.iter().map(|x| x - 1.4).collect(),
        x0.iter().map(|x| x + 1.4).collect(),
    );
    (comp, field)
}

/// Prescribed derivative `K_t` along the curve, zero outside `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KProfile {
    Zero,
    /// `amp · sin²(π(t−a)/(b−a)) · γ̇♭ ⊗ γ̇♭` with the chart lowering.
    SinSquared {
        amp: f64,
    },
    /// Block-diagonal version on a product chart split after `n1` coordinates.
    SplitSinSquared {
        n1: usize,
        amp1: f64,
        amp2: f64,
    },
}

impl KProfile {
    pub fn matrix(&self, t: f64, a: f64, b: f64, xd: &DVector<f64>) -> DMatrix<f64> {
        let n = xd.len();
        if t <= a || t >= b {
            return DMatrix::zeros(n, n);
        }
        let w = (PI * (t - a) / (b - a)).sin().powi(2);
        match self {
            KProfile::Zero => DMatrix::zeros(n, n),
            KProfile::SinSquared { amp } => xd * xd.transpose() * (amp * w),
            KProfile::SplitSinSquared { n1, amp1, amp2 } => {
                let mut k = DMatrix::zeros(n, n);
                let x1 = xd.rows(0, *n1);
                let x2 = xd.rows(*n1, n - n1);
                k.view_mut((0, 0), (*n1, *n1))
                    .copy_from(&(x1 * x1.transpose() * (amp1 * w)));
                k.view_mut((*n1, *n1), (n - n1, n - n1))
                    .copy_from(&(x2 * x2.transpose() * (amp2 * w)));
                k
            }
        }
    }
}

const CHEB_DEGREE: usize = 24;

/// Least-squares Chebyshev expansion of a field on `[lo, hi]`.
#[derive(Debug, Clone)]
struct ChebyshevFit {
    lo: f64,
    hi: f64,
    coeffs: DMatrix<f64>,
}

impl ChebyshevFit {
    fn basis(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let k = self.coeffs.ncols();
        let x = (2.0 * t - self.lo - self.hi) / (self.hi - self.lo);
        let mut p = DVector::zeros(k);
        let mut d = DVector::zeros(k);
        p[0] = 1.0;
        if k > 1 {
            p[1] = x;
            d[1] = 1.0;
        }
        for j in 2..k {
            p[j] = 2.0 * x * p[j - 1] - p[j - 2];
            d[j] = 2.0 * p[j - 1] + 2.0 * x * d[j - 1] - d[j - 2];
        }
        (p, d * (2.0 / (self.hi - self.lo)))
    }

    fn fit(v: &dyn FieldAlong, lo: f64, hi: f64, degree: usize) -> Self {
        let k = degree + 1;
        let samples = 4 * k;
        let mut fit = ChebyshevFit {
            lo,
            hi,
            coeffs: DMatrix::zeros(v.value(lo).len(), k),
        };
        let ts: Vec<f64> = (0..samples)
            .map(|i| {
                let c = (PI * (i as f64 + 0.5) / samples as f64).cos();
                0.5 * (lo + hi) + 0.5 * (hi - lo) * c
            })
            .collect();
        let a = DMatrix::from_rows(
            &ts.iter()
                .map(|&t| fit.basis(t).0.transpose())
                .collect::<Vec<_>>(),
        );
        let b = DMatrix::from_rows(
            &ts.iter()
                .map(|&t| v.value(t).transpose())
                .collect::<Vec<_>>(),
        );
        let sol = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .expect("svd with both factors");
        fit.coeffs = sol.transpose();
        fit
    }

    fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let (p, d) = self.basis(t.clamp(self.lo, self.hi));
        (&self.coeffs * p, &self.coeffs * d)
    }
}

/// Tube realization of a tensor with `h(γ(t)) = 0` and `∂_{V_t} h = K_t` on
/// `I = (a, b)`: tube coordinates `y = γ(t) + λ V_t + E z` with `E` a fixed
/// complement of `(γ̇, V)` at the centre of `I`, and
/// `h(y) = χ(λ² + |z|²) · λ · K_t`.
#[derive(Debug, Clone)]
pub struct TubeBump {
    a: f64,
    b: f64,
    t_lo: f64,
    t_hi: f64,
    m: usize,
    positions: Vec<DVector<f64>>,
    velocities: Vec<DVector<f64>>,
    accelerations: Vec<DVector<f64>>,
    field: ChebyshevFit,
    frame: DMatrix<f64>,
    radius: f64,
    profile: KProfile,
    domain: crate::domain::BoxDomain,
    seeds: Vec<(f64, DVector<f64>)>,
}

impl TubeBump {
    fn center(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let (i, s) = hermite::locate(t, self.m);
        hermite::quintic(
            s,
            1.0 / self.m as f64,
            &self.positions[i],
            &self.velocities[i],
            &self.accelerations[i],
            &self.positions[i + 1],
            &self.velocities[i + 1],
            &self.accelerations[i + 1],
        )
    }

    fn tube_map(&self, u: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let n = u.len();
        let t = u[0];
        let lam = u[1];
        let (x, xd) = self.center(t);
        let (v, vd) = self.field.eval(t);
        let z = u.rows(2, n - 2);
        let y = &x + &v * lam + &self.frame * z;
        let mut jac = DMatrix::zeros(n, n);
        jac.set_column(0, &(&xd + &vd * lam));
        jac.set_column(1, &v);
        for k in 0..n - 2 {
            jac.set_column(2 + k, &self.frame.column(k));
        }
        (y, jac)
    }

    /// Tube coordinates of `y` and the inverse Jacobian there, starting
    /// Newton from `start` or from the nearest seed point.
    fn invert(
        &self,
        y: &[f64],
        start: Option<&DVector<f64>>,
    ) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = y.len();
        let mut u = match start {
            Some(u) => u.clone(),
            None => {
                let (t0, _) = self
                    .seeds
                    .iter()
                    .min_by(|p, q| {
                        self.domain
                            .distance(p.1.as_slice(), y)
                            .partial_cmp(&self.domain.distance(q.1.as_slice(), y))
                            .unwrap()
                    })
                    .unwrap();
                let mut u = DVector::zeros(n);
                u[0] = *t0;
                u
            }
        };
        let scale = 1.0 + y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for _ in 0..50 {
            let (f, jac) = self.tube_map(&u);
            let jinv = jac.try_inverse()?;
            let r = DVector::from_vec(self.domain.displacement(f.as_slice(), y));
            let du = &jinv * &r;
            if r.norm() <= 1e-14 * scale {
                // one more update so neighbouring evaluations agree to rounding
                u += du;
                let jinv = self.tube_map(&u).1.try_inverse()?;
                return Some((u, jinv));
            }
            u += &du;
            u[0] = u[0].clamp(self.t_lo, self.t_hi);
            if !u.iter().all(|v| v.is_finite()) {
                return None;
            }
        }
        let (f, jac) = self.tube_map(&u);
        let r = DVector::from_vec(self.domain.displacement(f.as_slice(), y));
        if r.norm() <= 1e-12 * scale {
            return Some((u, jac.try_inverse()?));
        }
        None
    }

    fn first_order(
        &self,
        y: &[f64],
        start: Option<&DVector<f64>>,
    ) -> (DMatrix<f64>, Vec<DMatrix<f64>>, Option<DVector<f64>>) {
        let n = y.len();
        let Some((u, jinv)) = self.invert(y, start) else {
            return (DMatrix::zeros(n, n), vec![DMatrix::zeros(n, n); n], None);
        };
        let zero = (
            DMatrix::zeros(n, n),
            vec![DMatrix::zeros(n, n); n],
            Some(u.clone()),
        );
        let t = u[0];
        if t <= self.a || t >= self.b {
            return zero;
        }
        let lam = u[1];
        let r2 = self.radius * self.radius;
        let rho2 = u.rows(1, n - 1).norm_squared();
        let q = rho2 / r2;
        if q >= 1.0 {
            return zero;
        }
        let (c, dc, _) = cutoff_sq(q);
        let k_at = |t: f64| self.profile.matrix(t, self.a, self.b, &self.center(t).1);
        let k = k_at(t);
        let dt = 1e-6;
        let dk = (k_at(t + dt) - k_at(t - dt)) / (2.0 * dt);
        let h = &k * (c * lam);
        let mut du = Vec::with_capacity(n);
        du.push(&dk * (c * lam));
        du.push(&k * (c + lam * dc * 2.0 * lam / r2));
        for j in 2..n {
            du.push(&k * (lam * dc * 2.0 * u[j] / r2));
        }
        let dh = (0..n)
            .map(|i| {
                let mut acc = DMatrix::zeros(n, n);
                for (uu, d) in du.iter().enumerate() {
                    acc += d * jinv[(uu, i)];
                }
                acc
            })
            .collect();
        (h, dh, Some(u))
    }
}

impl TensorField for TubeBump {
    fn dim(&self) -> usize {
        self.positions[0].len()
    }

    fn jet(&self, x: &[f64], order: usize) -> MetricJet {
        let n = x.len();
        let (g, dg, u) = self.first_order(x, None);
        let mut out = MetricJet {
            g,
            dg,
            ddg: Vec::new(),
        };
        if order >= 2 {
            // second derivatives by central differences of the analytic first ones
            let delta = 1e-4;
            let mut ddg = vec![vec![DMatrix::zeros(n, n); n]; n];
            for k in 0..n {
                let mut yp = x.to_vec();
                let mut ym = x.to_vec();
                yp[k] += delta;
                ym[k] -= delta;
                let (_, dp, _) = self.first_order(&yp, u.as_ref());
                let (_, dm, _) = self.first_order(&ym, u.as_ref());
                for l in 0..n {
                    ddg[k][l] = (&dp[l] - &dm[l]) / (2.0 * delta);
                }
            }
            for k in 0..n {
                for l in k + 1..n {
                    let avg = (&ddg[k][l] + &ddg[l][k]) * 0.5;
                    ddg[k][l] = avg.clone();
                    ddg[l][k] = avg;
                }
            }
            out.ddg = ddg;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpSpec {
    pub interval: (f64, f64),
    pub profile: KProfile,
    pub tube_radius: f64,
    /// For closed geodesics: passes `t + rT` over the tube are expected.
    pub periodicity: Option<Periodicity>,
}

/// Orthonormal complement of the columns of `a` in the chart inner product.
fn complement(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let q = a.clone().qr().q();
    let proj = DMatrix::identity(n, n) - &q * q.transpose();
    let eig = proj.symmetric_eigen();
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i] > 0.5)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Tube bump along `γ(I)` with `h(γ(t)) = 0` and `∂_{V_t} h = K_t`.
pub fn bump_tensor(
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
    spec: &BumpSpec,
) -> Result<PerturbationField> {
    bump_tensor_with_class(curve, v, spec, PerturbationClass::General)
}

fn bump_tensor_with_class(
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
    spec: &BumpSpec,
    class: PerturbationClass,
) -> Result<PerturbationField> {
    let (a, b) = spec.interval;
    let n = curve.dim();
    if !(0.0 <= a && a < b && b <= 1.0) || spec.tube_radius <= 0.0 || n < 2 {
        return Err(Error::InvalidParameters(format!(
            "bump interval ({a}, {b}) or radius {}",
            spec.tube_radius
        )));
    }
    let samples = 200;
    let ts: Vec<f64> = (0..=samples)
        .map(|k| a + (b - a) * k as f64 / samples as f64)
        .collect();
    for &t in &ts {
        let (_, xd) = curve.eval(t);
        if chart_sine(&v.value(t), &xd) <= 1e-3 {
            return Err(Error::VParallel { t });
        }
    }
    let tc = 0.5 * (a + b);
    let (_, xdc) = curve.eval(tc);
    let frame = complement(&DMatrix::from_columns(&[xdc, v.value(tc)]));
    let vmax = ts.iter().map(|&t| v.value(t).norm()).fold(0.0, f64::max);
    let reach = spec.tube_radius * (vmax + 1.0);
    let speed_min = ts
        .iter()
        .map(|&t| curve.eval(t).1.norm())
        .fold(f64::INFINITY, f64::min);
    let guard = 2.0 * reach / speed_min.max(1e-12) + curve.h();
    let t_lo = (a - guard).max(0.0);
    let t_hi = (b + guard).min(1.0);
    // a smooth fit of V keeps the tube map free of grid-node kinks
    let field = ChebyshevFit::fit(v, t_lo, t_hi, CHEB_DEGREE);
    let bump = TubeBump {
        a,
        b,
        t_lo,
        t_hi,
        m: curve.m,
        positions: curve.positions.clone(),
        velocities: curve.velocities.clone(),
        accelerations: curve.accelerations.clone(),
        field,
        frame,
        radius: spec.tube_radius,
        profile: spec.profile.clone(),
        domain: curve.domain.clone(),
        seeds: ts
            .iter()
            .step_by(4)
            .map(|&t| (t, curve.eval(t).0))
            .collect(),
    };
    for &t in &ts {
        let (_, jac) = bump.tube_map(&{
            let mut u = DVector::zeros(n);
            u[0] = t;
            u
        });
        let scale = jac.column(0).norm() * jac.column(1).norm();
        if jac.determinant().abs() <= 1e-3 * scale {
            return Err(Error::VParallel { t });
        }
    }
    // the rest of the curve must stay clear of the tube
    let centers: Vec<DVector<f64>> = ts.iter().map(|&t| curve.eval(t).0).collect();
    let iterate_of_tube = |s: f64| match spec.periodicity {
        Some(p) => (1..=p.k_star as i64 + 1)
            .flat_map(|r| [s - r as f64 * p.period, s + r as f64 * p.period])
            .any(|u| u >= t_lo - 1e-9 && u <= t_hi + 1e-9),
        None => false,
    };
    let fine = 4 * curve.m;
    for k in 0..=fine {
        let s = k as f64 / fine as f64;
        if (s >= t_lo && s <= t_hi) || iterate_of_tube(s) {
            continue;
        }
        let y = curve.eval(s).0;
        let d = centers
            .iter()
            .map(|c| curve.domain.distance(c.as_slice(), y.as_slice()))
            .fold(f64::INFINITY, f64::min);
        if d <= 2.0 * reach {
            return Err(Error::TubeIntersectsCurve { t: s });
        }
    }
    let step = (b - a) / samples as f64;
    let vel_max = ts
        .iter()
        .map(|&t| curve.eval(t).1.norm())
        .fold(0.0, f64::max);
    let margin = reach + vel_max * step + 1e-9;
    let lo: Vec<f64> = (0..n)
        .map(|k| centers.iter().map(|c| c[k]).fold(f64::INFINITY, f64::min) - margin)
        .collect();
    let hi: Vec<f64> = (0..n)
        .map(|k| {
            centers
                .iter()
                .map(|c| c[k])
                .fold(f64::NEG_INFINITY, f64::max)
                + margin
        })
        .collect();
    let mut breakpoints = vec![a, b];
    if let Some(p) = spec.periodicity {
        for r in 1..=p.k_star {
            for e in [a, b] {
                let s = e + r as f64 * p.period;
                if s < 1.0 {
                    breakpoints.push(s);
                }
            }
        }
    }
    breakpoints.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(PerturbationField::new(
        class,
        (lo, hi),
        Arc::new(bump),
        PerturbationMeta {
            description: format!("tube bump on [{a}, {b}]"),
            interval: Some((a, b)),
            tube_radius: Some(spec.tube_radius),
            breakpoints,
        },
    )
    .with_periods(curve.domain.periods.clone()))
}

/// Block-diagonal tube bump on a product chart `ℝ^{n1} × ℝ^{n−n1}`.
pub fn split_bump(
    curve: &DiscretizedCurve,
    n1: usize,
    v: &dyn FieldAlong,
    interval: (f64, f64),
    amps: (f64, f64),
    tube_radius: f64,
) -> Result<PerturbationField> {
    let n = curve.dim();
    if n1 == 0 || n1 >= n {
        return Err(Error::InvalidParameters(format!(
            "split {n1} of dimension {n}"
        )));
    }
    for k in 0..=100 {
        let t = interval.0 + (interval.1 - interval.0) * k as f64 / 100.0;
        let xd = curve.eval(t).1;
        if xd.rows(0, n1).norm() <= 1e-12 && xd.rows(n1, n - n1).norm() <= 1e-12 {
            return Err(Error::BothVelocitiesVanish { t });
        }
    }
    let spec = BumpSpec {
        interval,
        profile: KProfile::SplitSinSquared {
            n1,
            amp1: amps.0,
            amp2: amps.1,
        },
        tube_radius,
        periodicity: None,
    };
    bump_tensor_with_class(curve, v, &spec, PerturbationClass::Split)
}

/// `½ ∫_I K_t(γ̇, γ̇) dt` by adaptive-free high-order quadrature, as an
/// independent check of the pairing identity.
pub fn half_profile_integral(
    curve: &DiscretizedCurve,
    interval: (f64, f64),
    profile: &KProfile,
) -> f64 {
    let (a, b) = interval;
    let panels = 2000;
    let h = (b - a) / panels as f64;
    let mut acc = 0.0;
    for p in 0..panels {
        for (s, w) in GAUSS3 {
            let t = a + (p as f64 + s) * h;
            let xd = curve.eval(t).1;
            let k = profile.matrix(t, a, b, &xd);
            acc += w * h * (xd.transpose() * k * &xd)[(0, 0)];
        }
    }
    0.5 * acc
}

fn partition(curve: &DiscretizedCurve, breakpoints: &[f64]) -> Vec<f64> {
    let mut pts = curve.grid();
    pts.extend(breakpoints.iter().copied().filter(|t| *t > 0.0 && *t < 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts
}

fn panel_nodes(pts: &[f64]) -> impl Iterator<Item = (f64, f64, f64, f64)> + '_ {
    pts.windows(2).flat_map(|w| {
        let len = (w[1] - w[0]) / PAIRING_PANELS as f64;
        (0..PAIRING_PANELS)
            .flat_map(move |p| GAUSS3.map(|(s, wt)| (w[0] + p as f64 * len, len, s, wt)))
    })
}

/// Coordinate derivative of a field along the curve; exact from the
/// covariant derivative when the field carries one.
fn coordinate_derivative(
    metric: &MetricFamily,
    x: &DVector<f64>,
    xd: &DVector<f64>,
    v: &dyn FieldAlong,
    val: &DVector<f64>,
    t: f64,
) -> Result<DVector<f64>> {
    match v.covariant(t) {
        Some(dv) => Ok(dv
            - metric
                .christoffel(x.as_slice())?
                .contract(xd.as_slice(), val.as_slice())),
        None => Ok(v.derivative(t)),
    }
}

fn check_grid(curve: &DiscretizedCurve, v: &dyn FieldAlong) -> Result<()> {
    match v.grid() {
        Some(m) if m != curve.m => Err(Error::GridMismatch),
        _ => Ok(()),
    }
}

/// `∫ h(γ̇, V̇) + ½ ∂h(V)(γ̇, γ̇) dt`: the mixed second derivative of the
/// action written with the flat chart connection.
/// Composite three-point Gauss on the grid refined at the perturbation's
/// breakpoints, each interval split into a few panels.
pub fn transversality_pairing(
    h: &PerturbationField,
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
) -> Result<f64> {
    check_grid(curve, v)?;
    let pts = partition(curve, &h.meta.breakpoints);
    let mut acc = 0.0;
    for (t0, len, s, wt) in panel_nodes(&pts) {
        {
            let t = t0 + s * len;
            let (x, xd) = curve.eval(t);
            if !h.in_support(x.as_slice()) {
                continue;
            }
            let val = v.value(t);
            let vd = coordinate_derivative(metric, &x, &xd, v, &val, t)?;
            let jet = h.jet(x.as_slice(), 1);
            let mut f = (xd.transpose() * &jet.g * vd)[(0, 0)];
            for (k, dk) in jet.dg.iter().enumerate() {
                f += 0.5 * val[k] * (xd.transpose() * dk * &xd)[(0, 0)];
            }
            acc += wt * len * f;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixedDerivativeReport {
    pub analytic: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Compares the pairing with the mixed central difference
/// `∂²/∂ε∂δ F(g + εh, γ + δV)` of the chart action (values of `h` only).
pub fn pairing_is_mixed_derivative_check(
    h: &PerturbationField,
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
    eps: f64,
) -> Result<MixedDerivativeReport> {
    let analytic = transversality_pairing(h, metric, curve, v)?;
    let pts = partition(curve, &h.meta.breakpoints);
    let action = |e: f64, d: f64| -> Result<f64> {
        let mut acc = 0.0;
        for (t0, len, s, wt) in panel_nodes(&pts) {
            {
                let t = t0 + s * len;
                let (x, xd) = curve.eval(t);
                let val = v.value(t);
                let vd = coordinate_derivative(metric, &x, &xd, v, &val, t)?;
                let y = &x + &val * d;
                let u = &xd + vd * d;
                let g = metric.eval(y.as_slice())? + h.value(y.as_slice()) * e;
                acc += 0.5 * wt * len * bilinear(&g, u.as_slice(), u.as_slice());
            }
        }
        Ok(acc)
    };
    let fd = (action(eps, eps)? - action(eps, -eps)? - action(-eps, eps)? + action(-eps, -eps)?)
        / (4.0 * eps * eps);
    let denom = analytic.abs().max(fd.abs());
    Ok(MixedDerivativeReport {
        analytic,
        finite_difference: fd,
        relative_error: if denom < 1e-12 {
            0.0
        } else {
            (analytic - fd).abs() / denom
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalPairing {
    /// `∫ ψ g₀(γ̇, 𝐃V) + ½ V(ψ) g₀(γ̇, γ̇) dt` with the Levi-Civita connection of `g₀`.
    pub direct: f64,
    /// `½ g₀(γ̇, γ̇) ∫ V(ψ) dt`
    pub closed_form: f64,
    /// `max |g₀(γ̇, 𝐃V)|` along the curve, relative.
    pub jacobi_defect: f64,
}

impl ConformalPairing {
    pub fn agree(&self, tol: f64) -> bool {
        (self.direct - self.closed_form).abs() <= tol
    }
}

pub fn conformal_pairing(
    psi: &ScalarField,
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
) -> Result<ConformalPairing> {
    check_grid(curve, v)?;
    let pts = partition(curve, &[]);
    let (mut direct, mut vpsi, mut defect, mut scale) = (0.0, 0.0, 0.0f64, 0.0f64);
    for w in pts.windows(2) {
        let len = w[1] - w[0];
        for (s, wt) in GAUSS2 {
            let t = w[0] + s * len;
            let (x, xd) = curve.eval(t);
            let val = v.value(t);
            let dv = match v.covariant(t) {
                Some(dv) => dv,
                None => {
                    v.derivative(t)
                        + metric
                            .christoffel(x.as_slice())?
                            .contract(xd.as_slice(), val.as_slice())
                }
            };
            let g = metric.eval(x.as_slice())?;
            let jet = psi.jet(x.as_slice());
            let gdv = bilinear(&g, xd.as_slice(), dv.as_slice());
            let dpsi = jet.grad.dot(&val);
            direct += wt
                * len
                * (jet.value * gdv + 0.5 * dpsi * bilinear(&g, xd.as_slice(), xd.as_slice()));
            vpsi += wt * len * dpsi;
            defect = defect.max(gdv.abs());
            scale = scale.max(xd.norm() * dv.norm());
        }
    }
    let jacobi_defect = defect / scale.max(1e-300);
    if jacobi_defect > 1e-6 {
        return Err(Error::NotJacobi {
            defect: jacobi_defect,
        });
    }
    Ok(ConformalPairing {
        direct,
        closed_form: 0.5 * curve.energy * vpsi,
        jacobi_defect,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryPairing {
    pub pairing: f64,
    /// `ξ(1) − ξ(0)`
    pub xi_end_difference: Vec<f64>,
    /// `∫₀¹ ξ dt`
    pub xi_integral: Vec<f64>,
    /// `ṡ g₀(ρ(x₀), ξ(1) − ξ(0))`
    pub rho_term: f64,
    /// `ṡ ζ(x₀) (σ(1) − σ(0))`
    pub sigma_term: f64,
    /// `½ ṡ² dζ(x₀)(∫ ξ dt)`
    pub zeta_term: f64,
}

/// Pairing of a stationary variation with a field `V = (ξ, σ)` along a
/// vertical geodesic, split into the terms it reduces to. For fields
/// vanishing at both ends only the `ζ` term survives.
pub fn stationary_family_pairing(
    comp: &StationaryComponents,
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
) -> Result<StationaryPairing> {
    let n0 = comp.n0;
    if curve.dim() != n0 + 1 {
        return Err(Error::DimensionMismatch {
            expected: n0 + 1,
            got: curve.dim(),
        });
    }
    let x0 = curve.positions[0].rows(0, n0).into_owned();
    let vertical = curve
        .positions
        .iter()
        .zip(&curve.velocities)
        .all(|(p, u)| (p.rows(0, n0) - &x0).norm() <= 1e-10 && u.rows(0, n0).norm() <= 1e-10);
    if !vertical {
        return Err(Error::NotVertical);
    }
    let s_dot = curve.velocities[0][n0];
    let lo: Vec<f64> = vec![f64::NEG_INFINITY; n0];
    let hi: Vec<f64> = vec![f64::INFINITY; n0];
    let field = stationary_field(comp.clone(), lo, hi);
    let pairing = transversality_pairing(&field, metric, curve, v)?;
    let full_diff = v.value(1.0) - v.value(0.0);
    let diff = full_diff.rows(0, n0).into_owned();
    let mut integral = DVector::zeros(n0);
    let h = curve.h();
    for i in 0..curve.m {
        for (s, w) in GAUSS2 {
            integral += v.value((i as f64 + s) * h).rows(0, n0) * (w * h);
        }
    }
    let xs = x0.as_slice();
    let rho_term = s_dot
        * (0..n0)
            .map(|a| comp.rho[a].value(xs) * diff[a])
            .sum::<f64>();
    let sigma_term = s_dot * comp.zeta.value(xs) * full_diff[n0];
    let zeta_term = 0.5 * s_dot * s_dot * comp.zeta.jet(xs).grad.dot(&integral);
    Ok(StationaryPairing {
        pairing,
        xi_end_difference: diff.as_slice().to_vec(),
        xi_integral: integral.as_slice().to_vec(),
        rho_term,
        sigma_term,
        zeta_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowVerdict {
    Certified,
    Obstructed,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictMatrix {
    /// `pairings[i][j]` pairs kernel field `i` with candidate `j`.
    pub pairings: Vec<Vec<f64>>,
    pub rows: Vec<RowVerdict>,
    pub transversal: bool,
    pub quadrature_tol: f64,
}

/// A kernel field is certified when some candidate pairs with it above
/// `10 · quadrature_tol`, obstructed when every pairing is below
/// `quadrature_tol`.
pub fn surjectivity_criterion(
    kernel_fields: &[&dyn FieldAlong],
    candidates: &[PerturbationField],
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    quadrature_tol: f64,
) -> Result<VerdictMatrix> {
    if kernel_fields.is_empty() {
        return Err(Error::EmptyKernel);
    }
    let mut pairings = Vec::new();
    let mut rows = Vec::new();
    for v in kernel_fields {
        let row: Vec<f64> = candidates
            .iter()
            .map(|h| transversality_pairing(h, metric, curve, *v))
            .collect::<Result<_>>()?;
        let best = row.iter().map(|p| p.abs()).fold(0.0, f64::max);
        rows.push(if best > 10.0 * quadrature_tol {
            RowVerdict::Certified
        } else if best <= quadrature_tol {
            RowVerdict::Obstructed
        } else {
            RowVerdict::Inconclusive
        });
        pairings.push(row);
    }
    Ok(VerdictMatrix {
        transversal: rows.iter().all(|r| *r == RowVerdict::Certified),
        pairings,
        rows,
        quadrature_tol,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub m: usize,
    pub kernel_tol: f64,
    pub shoot_tol: f64,
    pub allow_equal: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            m: 64,
            kernel_tol: index_form::DEFAULT_KERNEL_TOL,
            shoot_tol: 1e-10,
            allow_equal: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eps: f64,
    pub kernel_dimension: Option<usize>,
    pub min_abs_eigenvalue: Option<f64>,
    pub reshoot_residual: Option<f64>,
    /// The re-shot geodesic has conjugate endpoints.
    pub singular_endpoint: bool,
    pub error: Option<String>,
}

const SCAN_POINTS: usize = 16;
const SCAN_REACH: f64 = 2.0;
const DEFAULT_SCAN_RADIUS: f64 = 0.1;

/// Degenerate direction of the shooting problem: `w` spans the (near) null
/// space of the endpoint Jacobian, `u` its cokernel; `step` is the velocity
/// offset per scan point.
#[derive(Debug, Clone)]
pub struct NullDirection {
    pub w: DVector<f64>,
    pub u: DVector<f64>,
    pub step: f64,
}

/// `None` when the shooting matrix of `curve` is not singular.
pub fn null_direction(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    radius: f64,
) -> Result<Option<NullDirection>> {
    let a = jacobi::shooting_matrix(metric, curve)?;
    let svd = a.svd(true, true);
    let sv = &svd.singular_values;
    let i = sv.imin();
    if sv[i] > geodesic::SINGULAR_REL * sv.max() {
        return Ok(None);
    }
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let w = vt.row(i).transpose();
    let n = w.len();
    let reach = jacobi::jacobi_solve(metric, curve, &vec![0.0; n], w.as_slice())?.max_norm();
    Ok(Some(NullDirection {
        u: u.column(i).into_owned(),
        step: SCAN_REACH * radius / (SCAN_POINTS as f64 * reach),
        w,
    }))
}

fn reshoot(
    metric: &MetricFamily,
    p: &[f64],
    q: &[f64],
    v0: &[f64],
    null: Option<&NullDirection>,
    opts: ShootOptions,
) -> Result<(DiscretizedCurve, bool)> {
    let finish = |r: Result<DiscretizedCurve>| match r {
        Ok(c) => Ok((c, false)),
        Err(Error::SingularEndpointJacobian { velocity, .. }) => Ok((
            geodesic::integrate_geodesic(metric, p, &velocity, opts.m)?,
            true,
        )),
        Err(e) => Err(e),
    };
    let plain = || finish(geodesic::shoot_bvp(metric, p, q, v0, opts));
    let Some(nd) = null else { return plain() };
    let v0 = DVector::from_column_slice(v0);
    let residual = |s: f64| -> Option<DVector<f64>> {
        let v = &v0 + &nd.w * s;
        let c = geodesic::integrate_geodesic(metric, p, v.as_slice(), opts.m).ok()?;
        Some(DVector::from_vec(
            metric.domain.displacement(q, c.end().as_slice()),
        ))
    };
    let g = |s: f64| residual(s).map(|r| nd.u.dot(&r));
    let Some(r0) = residual(0.0) else {
        return plain();
    };
    // the old geodesic survives the perturbation
    if r0.norm() <= opts.tol {
        return plain();
    }
    let g0 = nd.u.dot(&r0);
    let mut prev = [(0.0, g0); 2];
    let mut alive = [true; 2];
    for k in 1..=SCAN_POINTS {
        for (side, sign) in [1.0, -1.0].into_iter().enumerate() {
            if !alive[side] {
                continue;
            }
            let s = sign * k as f64 * nd.step;
            let Some(gs) = g(s) else {
                alive[side] = false;
                continue;
            };
            let (mut a, mut ga) = prev[side];
            prev[side] = (s, gs);
            if ga.signum() == gs.signum() {
                continue;
            }
            // Illinois regula falsi; Newton polishes the result.
            let (mut b, mut gb) = (s, gs);
            let mut mid = s;
            for _ in 0..12 {
                mid = (a * gb - b * ga) / (gb - ga);
                if (b - a).abs() <= 1e-6 * nd.step {
                    break;
                }
                let Some(gm) = g(mid) else { break };
                if gm == 0.0 {
                    break;
                }
                if gm.signum() == gb.signum() {
                    ga *= 0.5;
                } else {
                    (a, ga) = (b, gb);
                }
                (b, gb) = (mid, gm);
            }
            let v = &v0 + &nd.w * mid;
            if let Ok(out) = finish(geodesic::shoot_bvp(metric, p, q, v.as_slice(), opts)) {
                return Ok(out);
            }
        }
    }
    plain()
}

#[allow(clippy::too_many_arguments)]
fn sweep_row(
    metric: &MetricFamily,
    p: &[f64],
    q: &[f64],
    v_guess: &[f64],
    h: &PerturbationField,
    eps: f64,
    null: Option<&NullDirection>,
    opts: &SweepOptions,
) -> Result<SweepRow> {
    let pert = if eps == 0.0 {
        metric.clone()
    } else {
        MetricFamily::perturbed(metric.clone(), Arc::new(h.clone()), eps)
    };
    let shoot = ShootOptions {
        m: opts.m,
        tol: opts.shoot_tol,
        allow_equal: opts.allow_equal,
    };
    let (curve, singular) =
        reshoot(&pert, p, q, v_guess, null, shoot).map_err(|e| Error::ReshootFailed {
            eps,
            reason: e.to_string(),
        })?;
    let fine =
        geodesic::integrate_geodesic(&pert, p, curve.initial_velocity().as_slice(), 2 * opts.m)?;
    let n = pert.dim();
    let gr = MetricFamily::flat(n);
    let coarse = index_form::assemble_index_form(&pert, &gr, &curve, PathBasis::new(opts.m, n))?;
    let refined =
        index_form::assemble_index_form(&pert, &gr, &fine, PathBasis::new(2 * opts.m, n))?;
    let k = index_form::refined_kernel(&coarse, &refined, opts.kernel_tol)?;
    Ok(SweepRow {
        eps,
        kernel_dimension: Some(k.dimension),
        min_abs_eigenvalue: Some(k.min_abs_eigenvalue),
        reshoot_residual: Some(pert.domain.distance(curve.end().as_slice(), q)),
        singular_endpoint: singular,
        error: None,
    })
}

/// Re-shoots the endpoints of `curve` for `g + εh` from its initial velocity
/// for every `ε` and reports
/// the refinement-tested kernel of the new index form. Failures are recorded
/// per row.
///
/// On a degenerate curve the perturbed geodesic generally sits a finite
/// distance away along the kernel direction, where plain Newton from the
/// old velocity cannot reach it. The re-shoot then scans offsets along the
/// null direction of the shooting matrix out to twice the tube radius
/// (in units of a unit-max kernel field), brackets a sign change of the
/// degenerate residual component, bisects, and polishes with Newton. The
/// root nearest the original velocity wins; plain Newton from the old
/// velocity is the fallback.
pub fn break_degeneracy_sweep(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    h: &PerturbationField,
    eps_list: &[f64],
    opts: &SweepOptions,
) -> Vec<SweepRow> {
    let (p, q, v_guess) = (
        curve.start().as_slice(),
        curve.end().as_slice(),
        curve.initial_velocity().as_slice(),
    );
    let radius = h.meta.tube_radius.unwrap_or(DEFAULT_SCAN_RADIUS);
    let null = null_direction(metric, curve, radius).ok().flatten();
    eps_list
        .iter()
        .map(|&eps| {
            sweep_row(metric, p, q, v_guess, h, eps, null.as_ref(), opts).unwrap_or_else(|e| {
                SweepRow {
                    eps,
                    kernel_dimension: None,
                    min_abs_eigenvalue: None,
                    reshoot_residual: None,
                    singular_endpoint: false,
                    error: Some(e.to_string()),
                }
            })
        })
        .collect()
}

/// Least-squares slope of `min|λ|` against `|ε|` over the nonzero rows.
pub fn sweep_slope(rows: &[SweepRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.eps != 0.0)
        .filter_map(|r| r.min_abs_eigenvalue.map(|l| (r.eps.abs(), l)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::integrate_geodesic;
    use crate::jacobi::{jacobi_solve, AnalyticField, JacobiSolution};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn equator(length: f64, m: usize) -> (MetricFamily, DiscretizedCurve) {
        let s = MetricFamily::round_sphere();
        let c = integrate_geodesic(&s, &[PI / 2.0, 0.0], &[0.0, length], m).unwrap();
        (s, c)
    }

    fn sine_jacobi(metric: &MetricFamily, curve: &DiscretizedCurve) -> JacobiSolution {
        jacobi_solve(metric, curve, &[0.0, 0.0], &[1.0, 0.0]).unwrap()
    }

    fn bump_spec(a: f64, b: f64, amp: f64) -> BumpSpec {
        BumpSpec {
            interval: (a, b),
            profile: KProfile::SinSquared { amp },
            tube_radius: 0.1,
            periodicity: None,
        }
    }

    #[test]
    fn tube_bump_vanishes_on_the_curve_with_prescribed_derivative() {
        let (s, c) = equator(PI, 64);
        let j = sine_jacobi(&s, &c);
        let h = bump_tensor(&c, &j, &bump_spec(0.3, 0.7, 1.0)).unwrap();
        for t in [0.35, 0.5, 0.62] {
            let (x, xd) = c.eval(t);
            let jet = h.jet(x.as_slice(), 1);
            assert!(jet.g.norm() <= 1e-12);
            let v = j.value(t);
            let mut dv = DMatrix::zeros(2, 2);
            for k in 0..2 {
                dv += &jet.dg[k] * v[k];
            }
            let k = KProfile::SinSquared { amp: 1.0 }.matrix(t, 0.3, 0.7, &xd);
            assert!((dv - k).norm() <= 1e-7);
        }
        // far from the tube
        assert!(h.value(&[1.0, 1.5]).norm() == 0.0);
    }

    #[test]
    fn pairing_equals_half_the_profile_integral() {
        let (s, c) = equator(PI, 64);
        let j = sine_jacobi(&s, &c);
        let spec = bump_spec(0.3, 0.7, 1.0);
        let h = bump_tensor(&c, &j, &spec).unwrap();
        let p = transversality_pairing(&h, &s, &c, &j).unwrap();
        let exact = half_profile_integral(&c, spec.interval, &spec.profile);
        // ½ |γ̇|⁴ · 0.4 · ½
        assert_abs_diff_eq!(exact, 0.1 * PI.powi(4), epsilon = 1e-9);
        assert!((p - exact).abs() <= 1e-6 * exact, "{p} vs {exact}");
    }

    #[test]
    fn pairing_is_the_mixed_derivative_of_the_action() {
        let (s, c) = equator(0.8 * PI, 64);
        let j = sine_jacobi(&s, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..3 {
            let h = random_bump_sum(&mut rng, &[PI / 2.0, 0.4 * PI], 0.6, 4);
            let r = pairing_is_mixed_derivative_check(&h, &s, &c, &j, 1e-4).unwrap();
            assert!(r.analytic.abs() > 1e-3);
            assert!(r.relative_error <= 1e-4, "{r:?}");
        }
        let tube = bump_tensor(&c, &j, &bump_spec(0.2, 0.6, 1.5)).unwrap();
        let r = pairing_is_mixed_derivative_check(&tube, &s, &c, &j, 1e-3).unwrap();
        assert!(r.relative_error <= 1e-3, "{r:?}");
    }

    #[test]
    fn pairing_is_linear_in_the_perturbation() {
        let (s, c) = equator(PI, 64);
        let j = sine_jacobi(&s, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h1 = random_bump_sum(&mut rng, &[PI / 2.0, 1.0], 0.5, 3);
        let h2 = bump_tensor(&c, &j, &bump_spec(0.4, 0.8, 2.0)).unwrap();
        let combo = PerturbationField::combine(&[(2.0, &h1), (-0.5, &h2)]);
        let p1 = transversality_pairing(&h1, &s, &c, &j).unwrap();
        let p2 = transversality_pairing(&h2, &s, &c, &j).unwrap();
        let pc = transversality_pairing(&combo, &s, &c, &j).unwrap();
        assert_abs_diff_eq!(pc, 2.0 * p1 - 0.5 * p2, epsilon = 1e-9);
    }

    #[test]
    fn bump_construction_errors() {
        let (s, c) = equator(PI, 64);
        let tangent = AnalyticField::new(|_t: f64| DVector::from_vec(vec![0.0, 1.0]));
        assert!(matches!(
            bump_tensor(&c, &tangent, &bump_spec(0.3, 0.7, 1.0)),
            Err(Error::VParallel { .. })
        ));
        let (s3, c3) = equator(3.0 * PI, 96);
        let j3 = sine_jacobi(&s3, &c3);
        assert!(matches!(
            bump_tensor(&c3, &j3, &bump_spec(0.1, 0.3, 1.0)),
            Err(Error::TubeIntersectsCurve { .. })
        ));
        let j = sine_jacobi(&s, &c);
        let coarse = integrate_geodesic(&s, &[PI / 2.0, 0.0], &[0.0, PI], 32).unwrap();
        let h = bump_tensor(&c, &j, &bump_spec(0.3, 0.7, 1.0)).unwrap();
        assert!(matches!(
            transversality_pairing(&h, &s, &coarse, &j),
            Err(Error::GridMismatch)
        ));
    }

    #[test]
    fn conformal_pairing_reduces_to_the_energy_term() {
        let (s, c) = equator(PI, 64);
        let j = sine_jacobi(&s, &c);
        let psi = ScalarField::Cosine {
            c0: 1.0,
            amp: -0.3,
            freqs: vec![1.0, 0.0],
            phase: 0.0,
        };
        let cp = conformal_pairing(&psi, &s, &c, &j).unwrap();
        // V(ψ) = 0.3 sin θ · sin(πt)/π on the equator
        assert_abs_diff_eq!(
            cp.closed_form,
            0.5 * PI * PI * 0.3 * 2.0 / (PI * PI),
            epsilon = 1e-6
        );
        assert!(cp.agree(1e-8), "{cp:?}");
        let general = transversality_pairing(&conformal_field(psi, &s), &s, &c, &j).unwrap();
        assert_abs_diff_eq!(general, cp.direct, epsilon = 1e-6);
    }

    #[test]
    fn conformal_pairing_vanishes_on_lightlike_geodesics() {
        let l = MetricFamily::lorentz_cylinder();
        let c = integrate_geodesic(&l, &[0.0, PI / 2.0, 0.0], &[PI, 0.0, PI], 64).unwrap();
        let j = jacobi_solve(&l, &c, &[0.0; 3], &[0.0, 1.0, 0.0]).unwrap();
        assert!(j.value(1.0).norm() <= 1e-8);
        let psi = ScalarField::Cosine {
            c0: 1.0,
            amp: 0.3,
            freqs: vec![0.0, 0.8, 1.0],
            phase: 0.2,
        };
        let cp = conformal_pairing(&psi, &l, &c, &j).unwrap();
        assert!(cp.closed_form.abs() <= 1e-10);
        assert!(cp.direct.abs() <= 1e-8, "{cp:?}");
    }

    #[test]
    fn conformal_pairing_rejects_non_jacobi_fields() {
        let (s, c) = equator(PI, 64);
        let v = AnalyticField::new(|t: f64| DVector::from_vec(vec![0.0, (PI * t).sin()]));
        assert!(matches!(
            conformal_pairing(&ScalarField::Constant(1.0), &s, &c, &v),
            Err(Error::NotJacobi { .. })
        ));
    }

    #[test]
    fn split_bump_pairs_to_the_sum_of_factor_integrals() {
        let f = MetricFamily::flat(4);
        let c = integrate_geodesic(&f, &[0.0; 4], &[1.0, 0.5, -0.3, 0.8], 64).unwrap();
        let v = AnalyticField::new(|t: f64| {
            DVector::from_vec(vec![0.0, (PI * t).sin(), (PI * t).sin(), 0.0])
        });
        let h = split_bump(&c, 2, &v, (0.2, 0.7), (1.0, 3.0), 0.05).unwrap();
        assert_eq!(h.class, PerturbationClass::Split);
        let p = transversality_pairing(&h, &f, &c, &v).unwrap();
        // ½ Σ ampᵢ |ẋᵢ|⁴ ∫ sin²
        let exact = 0.5 * (1.25f64.powi(2) + 3.0 * 0.73f64.powi(2)) * 0.25;
        assert!((p - exact).abs() <= 1e-6 * exact, "{p} vs {exact}");
        let still = integrate_geodesic(&f, &[0.0; 4], &[0.0; 4], 16).unwrap();
        assert!(matches!(
            split_bump(&still, 2, &v, (0.2, 0.7), (1.0, 1.0), 0.05),
            Err(Error::BothVelocitiesVanish { .. })
        ));
    }

    fn counterexample() -> (MetricFamily, DiscretizedCurve) {
        let beta = ScalarField::Quadratic {
            c0: 1.0,
            weights: vec![4.0 * PI * PI],
            center: vec![0.0],
        };
        let g = MetricFamily::stationary(MetricFamily::flat(1), beta, vec![], 10.0);
        let c = integrate_geodesic(&g, &[0.0, 0.0], &[0.0, 1.0], 64).unwrap();
        (g, c)
    }

    #[test]
    fn stationary_pairing_splits_into_end_and_zeta_terms() {
        let (g, c) = counterexample();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = AnalyticField::new(|t: f64| DVector::from_vec(vec![t * t + 0.3, (2.0 * t).cos()]));
        for _ in 0..3 {
            let (comp, _) = random_stationary(&mut rng, &[0.0]);
            let sp = stationary_family_pairing(&comp, &g, &c, &v).unwrap();
            assert_abs_diff_eq!(
                sp.pairing,
                sp.rho_term + sp.sigma_term + sp.zeta_term,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn stationary_pairing_vanishes_on_the_sine_kernel() {
        let (g, c) = counterexample();
        let j = jacobi_solve(&g, &c, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!(j.value(1.0).norm() <= 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..3 {
            let (comp, field) = random_stationary(&mut rng, &[0.0]);
            let sp = stationary_family_pairing(&comp, &g, &c, &j).unwrap();
            assert!(sp.pairing.abs() <= 1e-9, "{sp:?}");
            assert!(transversality_pairing(&field, &g, &c, &j).unwrap().abs() <= 1e-9);
        }
        let tilted = integrate_geodesic(&g, &[0.0, 0.0], &[0.1, 1.0], 64).unwrap();
        assert!(matches!(
            stationary_family_pairing(&StationaryComponents::zero(1), &g, &tilted, &j),
            Err(Error::NotVertical)
        ));
    }

    #[test]
    fn surjectivity_verdicts() {
        let (s, c) = equator(PI, 64);
        let j = sine_jacobi(&s, &c);
        let bump = bump_tensor(&c, &j, &bump_spec(0.3, 0.7, 1.0)).unwrap();
        let null = bump_tensor(
            &c,
            &j,
            &BumpSpec {
                profile: KProfile::Zero,
                ..bump_spec(0.3, 0.7, 1.0)
            },
        )
        .unwrap();
        let v = surjectivity_criterion(&[&j], &[null.clone(), bump], &s, &c, 1e-6).unwrap();
        assert!(v.transversal);
        assert_eq!(v.rows, vec![RowVerdict::Certified]);
        let v = surjectivity_criterion(&[&j], &[null], &s, &c, 1e-6).unwrap();
        assert_eq!(v.rows, vec![RowVerdict::Obstructed]);
        assert!(!v.transversal);
        assert!(matches!(
            surjectivity_criterion(&[], &[], &s, &c, 1e-6),
            Err(Error::EmptyKernel)
        ));
    }

    #[test]
    fn sweep_breaks_the_sphere_degeneracy() {
        let (s, c) = equator(PI, 64);
        let j = sine_jacobi(&s, &c);
        let h = bump_tensor(&c, &j, &bump_spec(0.3, 0.7, 1.0)).unwrap();
        let rows =
            break_degeneracy_sweep(&s, &c, &h, &[0.0, 0.01, -0.01], &SweepOptions::default());
        assert_eq!(rows[0].kernel_dimension, Some(1));
        for r in &rows[1..] {
            assert_eq!(r.kernel_dimension, Some(0), "{r:?}");
            assert!(r.reshoot_residual.unwrap() <= 1e-9);
        }
    }

    #[test]
    fn exact_stationary_variation_keeps_the_kernel() {
        // ρ dx ds with ρ(0) = 0 leaves the reduced ξ-equation untouched
        let (g, c) = counterexample();
        let mut comp = StationaryComponents::zero(1);
        comp.rho[0] = ScalarField::Sum(vec![
            ScalarField::Bump {
                amp: 1.0,
                radius: 0.5,
                center: vec![0.1],
            },
            ScalarField::Bump {
                amp: -1.0,
                radius: 0.5,
                center: vec![-0.1],
            },
        ]);
        let h = stationary_field(comp, vec![-0.6], vec![0.6]);
        let rows =
            break_degeneracy_sweep(&g, &c, &h, &[0.0, 0.02, -0.02], &SweepOptions::default());
        let base = rows[0].min_abs_eigenvalue.unwrap();
        for r in &rows {
            assert_eq!(r.kernel_dimension, Some(1), "{r:?}");
            assert!(
                (r.min_abs_eigenvalue.unwrap() - base).abs() <= 1e-6,
                "{r:?}"
            );
        }
    }
}
