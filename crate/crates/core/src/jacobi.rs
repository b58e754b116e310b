//! Jacobi fields along geodesics: integration, conjugate points, parallel
//! locus, iterate sums on periodic geodesics, the reduced stationary system and
//! the conformal null comparison.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geodesic::{self, DiscretizedCurve};
use crate::hermite;
use crate::metric::MetricFamily;

/// A vector field along a curve parameterized by `[0, 1]` (or a subinterval).
pub trait FieldAlong {
    fn value(&self, t: f64) -> DVector<f64>;
    /// Coordinate derivative `dV/dt`.
    fn derivative(&self, t: f64) -> DVector<f64>;
    /// Covariant derivative, when the field carries it.
    fn covariant(&self, _t: f64) -> Option<DVector<f64>> {
        None
    }
    /// Step count of the grid the field is tied to, if any.
    fn grid(&self) -> Option<usize> {
        None
    }
}

/// Closed-form field; the derivative defaults to a central difference.
pub struct AnalyticField<F: Fn(f64) -> DVector<f64>> {
    f: F,
    df: Option<Box<dyn Fn(f64) -> DVector<f64>>>,
}

impl<F: Fn(f64) -> DVector<f64>> AnalyticField<F> {
    pub fn new(f: F) -> Self {
        AnalyticField { f, df: None }
    }

    pub fn with_derivative(f: F, df: impl Fn(f64) -> DVector<f64> + 'static) -> Self {
        AnalyticField {
            f,
            df: Some(Box::new(df)),
        }
    }
}

impl<F: Fn(f64) -> DVector<f64>> FieldAlong for AnalyticField<F> {
    fn value(&self, t: f64) -> DVector<f64> {
        (self.f)(t)
    }

    fn derivative(&self, t: f64) -> DVector<f64> {
        match &self.df {
            Some(df) => df(t),
            None => {
                let h = 1e-6;
                ((self.f)(t + h) - (self.f)(t - h)) / (2.0 * h)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JacobiSolution {
    pub m: usize,
    pub j: Vec<DVector<f64>>,
    pub dj: Vec<DVector<f64>>,
    pub j_dot: Vec<DVector<f64>>,
    pub dj_dot: Vec<DVector<f64>>,
    pub initial: (DVector<f64>, DVector<f64>),
}

impl JacobiSolution {
    pub fn scaled(&self, c: f64) -> JacobiSolution {
        let sc = |v: &Vec<DVector<f64>>| v.iter().map(|x| x * c).collect();
        JacobiSolution {
            m: self.m,
            j: sc(&self.j),
            dj: sc(&self.dj),
            j_dot: sc(&self.j_dot),
            dj_dot: sc(&self.dj_dot),
            initial: (&self.initial.0 * c, &self.initial.1 * c),
        }
    }

    pub fn max_norm(&self) -> f64 {
        self.j.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

impl FieldAlong for JacobiSolution {
    fn value(&self, t: f64) -> DVector<f64> {
        let (i, s) = hermite::locate(t, self.m);
        hermite::cubic(
            s,
            1.0 / self.m as f64,
            &self.j[i],
            &self.j_dot[i],
            &self.j[i + 1],
            &self.j_dot[i + 1],
        )
        .0
    }

    fn derivative(&self, t: f64) -> DVector<f64> {
        let (i, s) = hermite::locate(t, self.m);
        hermite::cubic(
            s,
            1.0 / self.m as f64,
            &self.j[i],
            &self.j_dot[i],
            &self.j[i + 1],
            &self.j_dot[i + 1],
        )
        .1
    }

    fn covariant(&self, t: f64) -> Option<DVector<f64>> {
        let (i, s) = hermite::locate(t, self.m);
        Some(
            hermite::cubic(
                s,
                1.0 / self.m as f64,
                &self.dj[i],
                &self.dj_dot[i],
                &self.dj[i + 1],
                &self.dj_dot[i + 1],
            )
            .0,
        )
    }

    fn grid(&self) -> Option<usize> {
        Some(self.m)
    }
}

/// Right side of the coupled system for `k` Jacobi fields stored as columns.
/// Returns `(ẋ, v̇, J̇, (DJ)˙)`.
#[allow(clippy::type_complexity)]
fn coupled_rhs(
    metric: &MetricFamily,
    x: &DVector<f64>,
    v: &DVector<f64>,
    j: &DMatrix<f64>,
    dj: &DMatrix<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let (gam, curv) = metric.connection_and_curvature(x.as_slice())?;
    let c = gam.along(v.as_slice());
    let mop = curv.jacobi_operator(v.as_slice());
    let a = -gam.contract(v.as_slice(), v.as_slice());
    let jd = dj - &c * j;
    let djd = &mop * j - &c * dj;
    Ok((v.clone(), a, jd, djd))
}

type Coupled = (DVector<f64>, DVector<f64>, DMatrix<f64>, DMatrix<f64>);

fn coupled_step(metric: &MetricFamily, s: &Coupled, h: f64) -> Result<Coupled> {
    let (x, v, j, dj) = s;
    let k1 = coupled_rhs(metric, x, v, j, dj)?;
    let add = |k: &Coupled, c: f64| -> Coupled {
        (x + &k.0 * c, v + &k.1 * c, j + &k.2 * c, dj + &k.3 * c)
    };
    let s2 = add(&k1, 0.5 * h);
    let k2 = coupled_rhs(metric, &s2.0, &s2.1, &s2.2, &s2.3)?;
    let s3 = add(&k2, 0.5 * h);
    let k3 = coupled_rhs(metric, &s3.0, &s3.1, &s3.2, &s3.3)?;
    let s4 = add(&k3, h);
    let k4 = coupled_rhs(metric, &s4.0, &s4.1, &s4.2, &s4.3)?;
    let w = h / 6.0;
    Ok((
        x + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * w,
        v + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * w,
        j + (&k1.2 + &k2.2 * 2.0 + &k3.2 * 2.0 + &k4.2) * w,
        dj + (&k1.3 + &k2.3 * 2.0 + &k3.3 * 2.0 + &k4.3) * w,
    ))
}

/// Jacobi fields with initial data given column-wise, integrated cell by cell
/// from the stored curve nodes with the curve's own step size.
#[derive(Debug, Clone)]
pub struct JacobiFlow<'a> {
    metric: &'a MetricFamily,
    curve: &'a DiscretizedCurve,
    pub j: Vec<DMatrix<f64>>,
    pub dj: Vec<DMatrix<f64>>,
    pub j_dot: Vec<DMatrix<f64>>,
    pub dj_dot: Vec<DMatrix<f64>>,
    /// RK4 substeps used in each cell.
    pub substeps: Vec<usize>,
}

const JACOBI_TOL: f64 = 1e-12;
const MAX_SUBSTEPS: usize = 1024;
const JACOBI_START: usize = 4;

fn advance(metric: &MetricFamily, start: &Coupled, dt: f64, k: usize) -> Result<Coupled> {
    let h = dt / k as f64;
    let mut s = start.clone();
    for _ in 0..k {
        s = coupled_step(metric, &s, h)?;
    }
    Ok(s)
}

/// One cell, doubling the substep count until the Jacobi part settles.
fn advance_adaptive(
    metric: &MetricFamily,
    start: &Coupled,
    dt: f64,
    k0: usize,
) -> Result<(Coupled, usize)> {
    let mut k = k0;
    let mut a = advance(metric, start, dt, k)?;
    let mut prev = f64::INFINITY;
    while k < MAX_SUBSTEPS {
        let b = advance(metric, start, dt, 2 * k)?;
        k *= 2;
        let scale = 1.0f64.max(b.2.amax()).max(b.3.amax());
        let d = (&b.2 - &a.2).amax().max((&b.3 - &a.3).amax());
        a = b;
        // stop at the tolerance, or once a small error stops shrinking at
        // RK4 rates (coefficients with kinks or finite-difference noise)
        if d <= JACOBI_TOL * scale || (d <= 1e-8 * scale && d > prev / 8.0) {
            break;
        }
        prev = d;
    }
    Ok((a, k))
}

impl<'a> JacobiFlow<'a> {
    pub fn new(
        metric: &'a MetricFamily,
        curve: &'a DiscretizedCurve,
        j0: DMatrix<f64>,
        dj0: DMatrix<f64>,
    ) -> Result<Self> {
        let n = metric.dim();
        if curve.dim() != n || j0.nrows() != n || dj0.nrows() != n || j0.ncols() != dj0.ncols() {
            return Err(Error::GridMismatch);
        }
        let mut substeps = Vec::with_capacity(curve.m);
        let mut j = Vec::with_capacity(curve.m + 1);
        let mut dj = Vec::with_capacity(curve.m + 1);
        let mut j_dot = Vec::with_capacity(curve.m + 1);
        let mut dj_dot = Vec::with_capacity(curve.m + 1);
        let mut state: Coupled = (
            curve.positions[0].clone(),
            curve.velocities[0].clone(),
            j0,
            dj0,
        );
        for i in 0..=curve.m {
            state.0 = curve.positions[i].clone();
            state.1 = curve.velocities[i].clone();
            let (_, _, jd, djd) = coupled_rhs(metric, &state.0, &state.1, &state.2, &state.3)?;
            j.push(state.2.clone());
            dj.push(state.3.clone());
            j_dot.push(jd);
            dj_dot.push(djd);
            if i < curve.m {
                let (next, k) = advance_adaptive(metric, &state, curve.h(), JACOBI_START)?;
                state = next;
                substeps.push(k);
            }
        }
        Ok(JacobiFlow {
            metric,
            curve,
            j,
            dj,
            j_dot,
            dj_dot,
            substeps,
        })
    }

    /// `(J(t), DJ(t))` by integrating from the nearest node at or below `t`.
    pub fn state_at(&self, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let m = self.curve.m;
        let t = t.clamp(0.0, 1.0);
        let (i, s) = hermite::locate(t, m);
        if s == 0.0 {
            return Ok((self.j[i].clone(), self.dj[i].clone()));
        }
        let dt = s * self.curve.h();
        let k = ((self.substeps[i] as f64 * s).ceil() as usize).max(2);
        let state: Coupled = (
            self.curve.positions[i].clone(),
            self.curve.velocities[i].clone(),
            self.j[i].clone(),
            self.dj[i].clone(),
        );
        let out = advance(self.metric, &state, dt, k)?;
        Ok((out.2, out.3))
    }

    pub fn column(&self, c: usize) -> JacobiSolution {
        let col = |v: &Vec<DMatrix<f64>>| {
            v.iter()
                .map(|m| m.column(c).into_owned())
                .collect::<Vec<_>>()
        };
        let j = col(&self.j);
        let dj = col(&self.dj);
        JacobiSolution {
            m: self.curve.m,
            initial: (j[0].clone(), dj[0].clone()),
            j,
            dj,
            j_dot: col(&self.j_dot),
            dj_dot: col(&self.dj_dot),
        }
    }
}

/// Jacobi field with `J(0) = j0`, `DJ(0) = dj0`.
pub fn jacobi_solve(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    j0: &[f64],
    dj0: &[f64],
) -> Result<JacobiSolution> {
    let flow = JacobiFlow::new(
        metric,
        curve,
        DMatrix::from_column_slice(j0.len(), 1, j0),
        DMatrix::from_column_slice(dj0.len(), 1, dj0),
    )?;
    Ok(flow.column(0))
}

/// Flow of the fields with `J(0) = 0`, `DJ(0) = e_i`.
pub fn endpoint_flow<'a>(
    metric: &'a MetricFamily,
    curve: &'a DiscretizedCurve,
) -> Result<JacobiFlow<'a>> {
    let n = metric.dim();
    JacobiFlow::new(metric, curve, DMatrix::zeros(n, n), DMatrix::identity(n, n))
}

/// `A(t)` with `A(t) w = J_w(t)`, `J_w(0) = 0`, `DJ_w(0) = w`.
pub fn endpoint_matrix(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    t: f64,
) -> Result<DMatrix<f64>> {
    Ok(endpoint_flow(metric, curve)?.state_at(t)?.0)
}

/// `J(1)` for `J(0) = 0, 𝐃J(0) = I` at the curve's own substep count, without
/// refinement. Cheap enough for Newton steps and the conditioning test.
pub fn shooting_matrix(metric: &MetricFamily, curve: &DiscretizedCurve) -> Result<DMatrix<f64>> {
    let n = metric.dim();
    if curve.dim() != n {
        return Err(Error::GridMismatch);
    }
    let (mut j, mut dj) = (DMatrix::zeros(n, n), DMatrix::identity(n, n));
    for i in 0..curve.m {
        let start: Coupled = (
            curve.positions[i].clone(),
            curve.velocities[i].clone(),
            j,
            dj,
        );
        let end = advance(metric, &start, curve.h(), curve.substeps.max(JACOBI_START))?;
        j = end.2;
        dj = end.3;
    }
    Ok(j)
}

/// Largest one-cell defect of the stored solution against a re-integration
/// at twice the resolution, divided by the cell width.
pub fn jacobi_residual(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    sol: &JacobiSolution,
) -> Result<f64> {
    if sol.m != curve.m {
        return Err(Error::GridMismatch);
    }
    let mut worst = 0.0f64;
    for i in 0..curve.m {
        let state: Coupled = (
            curve.positions[i].clone(),
            curve.velocities[i].clone(),
            DMatrix::from_column_slice(sol.j[i].len(), 1, sol.j[i].as_slice()),
            DMatrix::from_column_slice(sol.dj[i].len(), 1, sol.dj[i].as_slice()),
        );
        let (state, _) = advance_adaptive(metric, &state, curve.h(), 2 * JACOBI_START)?;
        let d = (state.2.column(0) - &sol.j[i + 1]).norm()
            + (state.3.column(0) - &sol.dj[i + 1]).norm();
        worst = worst.max(d / curve.h());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateEvent {
    pub t: f64,
    pub multiplicity: usize,
    pub kernel_directions: Vec<Vec<f64>>,
    /// `σ_min / σ_max` of `A(t)` at the refined parameter.
    pub sigma_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConjugateReport {
    pub events: Vec<ConjugateEvent>,
}

fn sigma_rel(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let mx = sv.max();
    if mx <= 0.0 {
        0.0
    } else {
        sv.min() / mx
    }
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // include the bracket ends, where boundary minima sit
    [a, mid, b]
        .into_iter()
        .min_by(|x, y| f(*x).partial_cmp(&f(*y)).unwrap())
        .unwrap()
}

/// Conjugate points of `γ(0)` along the curve, refined to parameter
/// tolerance `1e-10` by bisection on a signed singular projection (golden
/// section on `σ_min/σ_max` when no sign change brackets the minimum).
pub fn conjugate_points(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    kernel_tol: f64,
) -> Result<ConjugateReport> {
    let flow = endpoint_flow(metric, curve)?;
    let m = curve.m;
    let first = 2;
    let sig: Vec<f64> = (0..=m)
        .map(|i| {
            if i < first {
                1.0
            } else {
                sigma_rel(&flow.j[i])
            }
        })
        .collect();
    let mut events: Vec<ConjugateEvent> = Vec::new();
    let eval = |t: f64| flow.state_at(t).map(|s| s.0);
    for i in first..=m {
        let left = sig[i - 1];
        let right = if i < m { sig[i + 1] } else { f64::INFINITY };
        if !(sig[i] <= left && sig[i] <= right && sig[i] < 0.25) {
            continue;
        }
        let lo = (i - 1).max(first - 1) as f64 / m as f64;
        let hi = ((i + 1).min(m)) as f64 / m as f64;
        let ti = i as f64 / m as f64;
        let svd = flow.j[i].clone().svd(true, true);
        let k = svd.singular_values.imin();
        let u = svd.u.as_ref().unwrap().column(k).into_owned();
        let w = svd.v_t.as_ref().unwrap().row(k).transpose();
        let signed = |t: f64| -> Result<f64> { Ok((u.transpose() * eval(t)? * &w)[(0, 0)]) };
        let (fl, fi, fh) = (signed(lo)?, signed(ti)?, signed(hi)?);
        let bracket = if fl * fi < 0.0 {
            Some((lo, ti, fl))
        } else if fi * fh < 0.0 {
            Some((ti, hi, fi))
        } else {
            None
        };
        let t_star = match bracket {
            Some((mut a, mut b, mut fa)) => {
                while b - a > 1e-10 {
                    let c = 0.5 * (a + b);
                    let fc = signed(c)?;
                    if fc == 0.0 {
                        a = c;
                        b = c;
                        break;
                    }
                    if fa * fc < 0.0 {
                        b = c;
                    } else {
                        a = c;
                        fa = fc;
                    }
                }
                0.5 * (a + b)
            }
            None => {
                let f = |t: f64| eval(t).map(|a| sigma_rel(&a)).unwrap_or(f64::INFINITY);
                golden_min(&f, lo, hi, 1e-10)
            }
        };
        let a = eval(t_star)?;
        let svd = a.svd(false, true);
        let mx = svd.singular_values.max();
        let mut dirs = Vec::new();
        let mut smallest: f64 = 1.0;
        for (r, s) in svd.singular_values.iter().enumerate() {
            let rel = if mx > 0.0 { s / mx } else { 0.0 };
            smallest = smallest.min(rel);
            if rel < kernel_tol {
                dirs.push(svd.v_t.as_ref().unwrap().row(r).iter().copied().collect());
            }
        }
        if dirs.is_empty() {
            continue;
        }
        if events
            .iter()
            .any(|e| (e.t - t_star).abs() <= 2.0 / m as f64)
        {
            continue;
        }
        events.push(ConjugateEvent {
            t: t_star,
            multiplicity: dirs.len(),
            kernel_directions: dirs,
            sigma_rel: smallest,
        });
    }
    Ok(ConjugateReport { events })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParallelLocus {
    Finite(Vec<f64>),
    EverywhereParallel,
}

/// Parameters where `J` is parallel to `γ̇` (including zeros of `J`), from
/// the chart wedge norm `‖J ∧ γ̇‖` relative to `max ‖J‖ · ‖γ̇‖`.
pub fn parallel_locus(curve: &DiscretizedCurve, field: &dyn FieldAlong, tol: f64) -> ParallelLocus {
    let samples = 4 * curve.m;
    let ts: Vec<f64> = (0..=samples).map(|k| k as f64 / samples as f64).collect();
    let scale = ts
        .iter()
        .map(|&t| field.value(t).norm())
        .fold(0.0, f64::max);
    let rel = |t: f64| {
        let (_, v) = curve.eval(t);
        let j = field.value(t);
        let (a, b, c) = (j.dot(&j), v.dot(&v), j.dot(&v));
        (a * b - c * c).max(0.0).sqrt() / (scale * v.norm()).max(1e-300)
    };
    let vals: Vec<f64> = ts.iter().map(|&t| rel(t)).collect();
    if scale == 0.0 || vals.iter().all(|v| *v <= tol) {
        return ParallelLocus::EverywhereParallel;
    }
    let mut out: Vec<f64> = Vec::new();
    for k in 0..=samples {
        let l = if k > 0 { vals[k - 1] } else { f64::INFINITY };
        let r = if k < samples {
            vals[k + 1]
        } else {
            f64::INFINITY
        };
        if !(vals[k] <= l && vals[k] <= r && vals[k] < 0.25) {
            continue;
        }
        let a = ts[k.saturating_sub(1)];
        let b = ts[(k + 1).min(samples)];
        let t = golden_min(&rel, a, b, 1e-12);
        if rel(t) <= tol && !out.iter().any(|u| (u - t).abs() < 1.0 / samples as f64) {
            let t = if t < 1e-8 {
                0.0
            } else if t > 1.0 - 1e-8 {
                1.0
            } else {
                t
            };
            out.push(t);
        }
    }
    ParallelLocus::Finite(out)
}

/// Field sampled on increasing parameters, with value and derivative, read by
/// cubic Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub ts: Vec<f64>,
    pub values: Vec<DVector<f64>>,
    pub derivs: Vec<DVector<f64>>,
    pub covariants: Option<Vec<DVector<f64>>>,
}

impl SampledField {
    fn cell(&self, t: f64) -> (usize, f64, f64) {
        let n = self.ts.len();
        let k = match self.ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(k) => k.min(n - 2),
            Err(k) => k.clamp(1, n - 1) - 1,
        };
        let h = self.ts[k + 1] - self.ts[k];
        (k, ((t - self.ts[k]) / h).clamp(0.0, 1.0), h)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.ts[0], *self.ts.last().unwrap())
    }
}

impl FieldAlong for SampledField {
    fn value(&self, t: f64) -> DVector<f64> {
        let (k, s, h) = self.cell(t);
        hermite::cubic(
            s,
            h,
            &self.values[k],
            &self.derivs[k],
            &self.values[k + 1],
            &self.derivs[k + 1],
        )
        .0
    }

    fn derivative(&self, t: f64) -> DVector<f64> {
        let (k, s, h) = self.cell(t);
        hermite::cubic(
            s,
            h,
            &self.values[k],
            &self.derivs[k],
            &self.values[k + 1],
            &self.derivs[k + 1],
        )
        .1
    }
}

/// Sums of a field over the iterates of a closed geodesic traversed with
/// period `T`, where `1 = k*·T + t*`:
/// `W¹_t = Σ_{r=0..k*} V_{t+rT}` on `[0, t*]` and `W²_t = Σ_{r=0..k*−1} V_{t+rT}`
/// on `[t*, T]`. Sampled at the grid nodes of each interval and its ends.
pub fn iterate_sum_fields(
    v: &dyn FieldAlong,
    m: usize,
    period: f64,
    k_star: usize,
    t_star: f64,
) -> Result<(SampledField, SampledField)> {
    if !(period > 0.0 && period < 1.0 && k_star >= 1)
        || (k_star as f64 * period + t_star - 1.0).abs() > 1e-9
    {
        return Err(Error::NotPeriodic);
    }
    let nodes = |a: f64, b: f64| {
        let mut ts = vec![a];
        for i in 0..=m {
            let t = i as f64 / m as f64;
            if t > a + 1e-12 && t < b - 1e-12 {
                ts.push(t);
            }
        }
        ts.push(b);
        ts
    };
    let build = |ts: Vec<f64>, count: usize| {
        let sum = |t: f64, f: &dyn Fn(f64) -> DVector<f64>| {
            (0..count)
                .map(|r| f((t + r as f64 * period).min(1.0)))
                .fold(DVector::zeros(v.value(0.0).len()), |a, b| a + b)
        };
        let values = ts.iter().map(|&t| sum(t, &|s| v.value(s))).collect();
        let derivs = ts.iter().map(|&t| sum(t, &|s| v.derivative(s))).collect();
        let covariants = v.covariant(0.0).map(|_| {
            ts.iter()
                .map(|&t| sum(t, &|s| v.covariant(s).unwrap()))
                .collect()
        });
        SampledField {
            ts,
            values,
            derivs,
            covariants,
        }
    };
    if t_star <= 1e-12 {
        let w2 = build(nodes(0.0, period), k_star);
        let w1 = build(vec![0.0, 0.0], k_star + 1);
        return Ok((w1, w2));
    }
    Ok((
        build(nodes(0.0, t_star), k_star + 1),
        build(nodes(t_star, period), k_star),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryJacobi {
    pub xi: Vec<DVector<f64>>,
    pub sigma: Vec<f64>,
}

/// `½ g₀⁻¹ H^β(x₀)`, after checking that `x₀` is critical for `β`.
fn reduced_operator(
    g0: &MetricFamily,
    beta: &ScalarField,
    x0: &[f64],
    s_dot: f64,
) -> Result<DMatrix<f64>> {
    let jet = beta.jet(x0);
    let gn = jet.grad.norm();
    if gn > 1e-10 {
        return Err(Error::NotCriticalPoint { grad_norm: gn });
    }
    let ginv = g0
        .eval(x0)?
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameters("singular base metric".into()))?;
    Ok(ginv * jet.hess * (0.5 * s_dot * s_dot))
}

/// Integrates `ξ'' + ½ṡ² H^β(x₀) ξ = 0`, `σ'' = 0` on `[0, 1]` with the
/// Hessian frozen at the critical point `x₀`.
#[allow(clippy::too_many_arguments)]
pub fn stationary_jacobi(
    g0: &MetricFamily,
    beta: &ScalarField,
    x0: &[f64],
    xi0: &[f64],
    dxi0: &[f64],
    sigma0: f64,
    dsigma0: f64,
    s_dot: f64,
    m: usize,
) -> Result<StationaryJacobi> {
    let k = reduced_operator(g0, beta, x0, s_dot)?;
    let mut xi = DVector::from_column_slice(xi0);
    let mut eta = DVector::from_column_slice(dxi0);
    let sub = 16;
    let h = 1.0 / (m * sub) as f64;
    let mut out = vec![xi.clone()];
    for _ in 0..m {
        for _ in 0..sub {
            let f = |x: &DVector<f64>| -(&k * x);
            let (a1, b1) = (eta.clone(), f(&xi));
            let (a2, b2) = (&eta + &b1 * (0.5 * h), f(&(&xi + &a1 * (0.5 * h))));
            let (a3, b3) = (&eta + &b2 * (0.5 * h), f(&(&xi + &a2 * (0.5 * h))));
            let (a4, b4) = (&eta + &b3 * h, f(&(&xi + &a3 * h)));
            xi += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
            eta += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
        }
        out.push(xi.clone());
    }
    let sigma = (0..=m)
        .map(|i| sigma0 + dsigma0 * i as f64 / m as f64)
        .collect();
    Ok(StationaryJacobi { xi: out, sigma })
}

/// `ξ'(0) ↦ ξ(1)` for `ξ(0) = 0` in the reduced stationary system.
pub fn reduced_endpoint_map(
    g0: &MetricFamily,
    beta: &ScalarField,
    x0: &[f64],
    s_dot: f64,
    m: usize,
) -> Result<DMatrix<f64>> {
    let n0 = x0.len();
    let mut a = DMatrix::zeros(n0, n0);
    for c in 0..n0 {
        let mut e = vec![0.0; n0];
        e[c] = 1.0;
        let sol = stationary_jacobi(g0, beta, x0, &vec![0.0; n0], &e, 0.0, 0.0, s_dot, m)?;
        a.set_column(c, &sol.xi[m]);
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformalComparison {
    pub base_events: Vec<f64>,
    pub rescaled_events: Vec<f64>,
    pub matched_points: Vec<(Vec<f64>, Vec<f64>)>,
    pub max_mismatch: f64,
    /// Distance between the endpoints of the two runs.
    pub endpoint_mismatch: f64,
    /// `∫₀¹ ψ(γ(t)) dt`, the ratio of the two affine parameter lengths.
    pub lambda: f64,
}

/// Conjugate image points of a null geodesic of `base` and of its
/// reparameterization as a null geodesic of `ψ·base`, computed independently.
pub fn conformal_conjugate_compare(
    base: &MetricFamily,
    psi: &ScalarField,
    x0: &[f64],
    v0: &[f64],
    m: usize,
    kernel_tol: f64,
) -> Result<ConformalComparison> {
    let energy = base.inner(x0, v0, v0)?;
    if energy.abs() > 1e-10 {
        return Err(Error::NotLightlike { energy });
    }
    let c0 = geodesic::integrate_geodesic(base, x0, v0, m)?;
    // dt̃/dt ∝ ψ(γ(t)); normalise so both runs cover the same image on [0, 1]
    let (gx, gw) = (
        [0.5 - 0.5 / 3f64.sqrt(), 0.5 + 0.5 / 3f64.sqrt()],
        [0.5, 0.5],
    );
    let mut lambda = 0.0;
    for i in 0..m {
        for (x, w) in gx.iter().zip(gw) {
            let t = (i as f64 + x) / m as f64;
            lambda += w / m as f64 * psi.value(c0.eval(t).0.as_slice());
        }
    }
    let v1: Vec<f64> = v0.iter().map(|v| v * lambda / psi.value(x0)).collect();
    let rescaled = MetricFamily::conformal(psi.clone(), base.clone());
    let c1 = geodesic::integrate_geodesic(&rescaled, x0, &v1, m)?;
    let r0 = conjugate_points(base, &c0, kernel_tol)?;
    let r1 = conjugate_points(&rescaled, &c1, kernel_tol)?;
    let mut matched = Vec::new();
    let mut worst = 0.0f64;
    for (a, b) in r0.events.iter().zip(&r1.events) {
        let pa = c0.eval(a.t).0;
        let pb = c1.eval(b.t).0;
        worst = worst.max(base.domain.distance(pa.as_slice(), pb.as_slice()));
        matched.push((pa.as_slice().to_vec(), pb.as_slice().to_vec()));
    }
    if r0.events.len() != r1.events.len() {
        worst = f64::INFINITY;
    }
    Ok(ConformalComparison {
        base_events: r0.events.iter().map(|e| e.t).collect(),
        rescaled_events: r1.events.iter().map(|e| e.t).collect(),
        matched_points: matched,
        max_mismatch: worst,
        endpoint_mismatch: base
            .domain
            .distance(c0.end().as_slice(), c1.end().as_slice()),
        lambda,
    })
}
