//! Geodesic integration, two-point shooting and self-intersection analysis.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::hermite;
use crate::jacobi::{self, FieldAlong};
use crate::metric::{bilinear, MetricFamily};

pub const MIN_STEPS: usize = 16;
const MAX_SUBSTEPS: usize = 1024;
const ACCEPT_TOL: f64 = 1e-9;
const ENERGY_TOL: f64 = 1e-8;
const NEWTON_MAX_ITER: usize = 50;
/// Relative singular value of the endpoint matrix below which shooting
/// reports a conjugate endpoint.
pub const SINGULAR_REL: f64 = 1e-6;

/// Geodesic sampled on `t_i = i/m`, produced by `m · substeps` classical
/// Runge-Kutta steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedCurve {
    pub m: usize,
    pub substeps: usize,
    pub positions: Vec<DVector<f64>>,
    pub velocities: Vec<DVector<f64>>,
    pub accelerations: Vec<DVector<f64>>,
    pub energy: f64,
    pub domain: BoxDomain,
}

impl DiscretizedCurve {
    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn h(&self) -> f64 {
        1.0 / self.m as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        (0..=self.m).map(|i| i as f64 / self.m as f64).collect()
    }

    pub fn start(&self) -> &DVector<f64> {
        &self.positions[0]
    }

    pub fn end(&self) -> &DVector<f64> {
        &self.positions[self.m]
    }

    pub fn initial_velocity(&self) -> &DVector<f64> {
        &self.velocities[0]
    }

    /// Position and velocity at `t`, quintic in position and cubic in velocity.
    pub fn eval(&self, t: f64) -> (DVector<f64>, DVector<f64>) {
        let (i, s) = hermite::locate(t, self.m);
        let h = self.h();
        let (x, _) = hermite::quintic(
            s,
            h,
            &self.positions[i],
            &self.velocities[i],
            &self.accelerations[i],
            &self.positions[i + 1],
            &self.velocities[i + 1],
            &self.accelerations[i + 1],
        );
        let (v, _) = hermite::cubic(
            s,
            h,
            &self.velocities[i],
            &self.accelerations[i],
            &self.velocities[i + 1],
            &self.accelerations[i + 1],
        );
        (x, v)
    }

    pub fn max_energy_drift(&self, metric: &MetricFamily) -> Result<f64> {
        let mut worst = 0.0f64;
        for (x, v) in self.positions.iter().zip(&self.velocities) {
            let e = metric.inner(x.as_slice(), v.as_slice(), v.as_slice())?;
            worst = worst.max((e - self.energy).abs());
        }
        Ok(worst)
    }
}

/// Causal character of a geodesic by the sign of its energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CausalCharacter {
    Spacelike,
    Timelike,
    Lightlike,
}

impl CausalCharacter {
    pub fn of_energy(e: f64) -> Self {
        if e.abs() <= 1e-10 {
            CausalCharacter::Lightlike
        } else if e > 0.0 {
            CausalCharacter::Spacelike
        } else {
            CausalCharacter::Timelike
        }
    }
}

pub(crate) fn acceleration(
    metric: &MetricFamily,
    x: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let c = metric.christoffel(x.as_slice())?;
    Ok(-c.contract(v.as_slice(), v.as_slice()))
}

fn out_of_domain(e: Error, t: f64) -> Error {
    match e {
        Error::PointOutsideDomain { .. } => Error::LeftDomain { t },
        other => other,
    }
}

/// One classical Runge-Kutta step of `ẍ = −Γ(ẋ, ẋ)`.
pub(crate) fn rk4_step(
    metric: &MetricFamily,
    x: &DVector<f64>,
    v: &DVector<f64>,
    h: f64,
    t: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let f = |x: &DVector<f64>, v: &DVector<f64>| {
        acceleration(metric, x, v).map_err(|e| out_of_domain(e, t))
    };
    let a1 = f(x, v)?;
    let (x2, v2) = (x + v * (0.5 * h), v + &a1 * (0.5 * h));
    let a2 = f(&x2, &v2)?;
    let (x3, v3) = (x + &v2 * (0.5 * h), v + &a2 * (0.5 * h));
    let a3 = f(&x3, &v3)?;
    let (x4, v4) = (x + &v3 * h, v + &a3 * h);
    let a4 = f(&x4, &v4)?;
    let xn = x + (v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (h / 6.0);
    let vn = v + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
    if !metric.domain.contains(xn.as_slice()) {
        return Err(Error::LeftDomain { t: t + h });
    }
    Ok((xn, vn))
}

/// Integrates with a fixed number of Runge-Kutta steps per grid cell, without
/// any acceptance test.
pub fn integrate_geodesic_fixed(
    metric: &MetricFamily,
    x0: &[f64],
    v0: &[f64],
    m: usize,
    substeps: usize,
) -> Result<DiscretizedCurve> {
    if m < MIN_STEPS {
        return Err(Error::StepCountTooSmall { m });
    }
    let n = metric.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: x0.len().min(v0.len()),
        });
    }
    if !metric.domain.contains(x0) {
        return Err(Error::PointOutsideDomain { point: x0.to_vec() });
    }
    let substeps = substeps.max(1);
    let h = 1.0 / (m * substeps) as f64;
    let mut x = DVector::from_column_slice(x0);
    let mut v = DVector::from_column_slice(v0);
    let energy = metric.inner(x0, v0, v0)?;
    let mut positions = Vec::with_capacity(m + 1);
    let mut velocities = Vec::with_capacity(m + 1);
    let mut accelerations = Vec::with_capacity(m + 1);
    positions.push(x.clone());
    velocities.push(v.clone());
    accelerations.push(acceleration(metric, &x, &v)?);
    for i in 0..m {
        for k in 0..substeps {
            let t = (i * substeps + k) as f64 * h;
            let (xn, vn) = rk4_step(metric, &x, &v, h, t)?;
            x = xn;
            v = vn;
        }
        accelerations.push(
            acceleration(metric, &x, &v)
                .map_err(|e| out_of_domain(e, (i + 1) as f64 / m as f64))?,
        );
        positions.push(x.clone());
        velocities.push(v.clone());
    }
    Ok(DiscretizedCurve {
        m,
        substeps,
        positions,
        velocities,
        accelerations,
        energy,
        domain: metric.domain.clone(),
    })
}

fn max_node_gap(a: &DiscretizedCurve, b: &DiscretizedCurve) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..=a.m {
        worst = worst
            .max((&a.positions[i] - &b.positions[i]).amax())
            .max((&a.velocities[i] - &b.velocities[i]).amax());
    }
    worst
}

/// Integrates the geodesic equation on the grid `i/m`, doubling the number of
/// Runge-Kutta substeps per cell until two successive resolutions agree and
/// the energy is conserved.
pub fn integrate_geodesic(
    metric: &MetricFamily,
    x0: &[f64],
    v0: &[f64],
    m: usize,
) -> Result<DiscretizedCurve> {
    let mut coarse = integrate_geodesic_fixed(metric, x0, v0, m, 1)?;
    let mut s = 1;
    loop {
        s *= 2;
        let fine = integrate_geodesic_fixed(metric, x0, v0, m, s)?;
        let scale = 1.0 + fine.velocities.iter().map(|v| v.amax()).fold(0.0, f64::max);
        let gap = max_node_gap(&coarse, &fine);
        if gap <= ACCEPT_TOL * scale {
            let drift = fine.max_energy_drift(metric)?;
            if drift <= ENERGY_TOL * fine.energy.abs().max(1.0) {
                return Ok(fine);
            }
        }
        if s >= MAX_SUBSTEPS {
            return Err(Error::IntegrationNotAccepted { error: gap });
        }
        coarse = fine;
    }
}

/// Largest one-cell defect `(‖Δx‖ + ‖Δv‖)/h` between the stored nodes and a
/// re-integration of each cell at twice the resolution.
pub fn geodesic_residual(metric: &MetricFamily, curve: &DiscretizedCurve) -> Result<f64> {
    let sub = 2 * curve.substeps;
    let h = 1.0 / (curve.m * sub) as f64;
    let mut worst = 0.0f64;
    for i in 0..curve.m {
        let (mut x, mut v) = (curve.positions[i].clone(), curve.velocities[i].clone());
        for k in 0..sub {
            let (xn, vn) = rk4_step(metric, &x, &v, h, i as f64 * curve.h() + k as f64 * h)?;
            x = xn;
            v = vn;
        }
        let d = (&x - &curve.positions[i + 1]).norm() + (&v - &curve.velocities[i + 1]).norm();
        worst = worst.max(d / curve.h());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy)]
pub struct ShootOptions {
    pub m: usize,
    pub tol: f64,
    pub allow_equal: bool,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            m: 64,
            tol: 1e-10,
            allow_equal: false,
        }
    }
}

/// Newton iteration on `v ↦ γ_v(1)` with the Jacobi endpoint matrix as
/// derivative. Steps use a truncated pseudo-inverse, so the iteration can
/// still converge onto a conjugate endpoint, which is then reported as
/// [`Error::SingularEndpointJacobian`] carrying the converged velocity.
pub fn shoot_bvp(
    metric: &MetricFamily,
    p: &[f64],
    q: &[f64],
    v_guess: &[f64],
    opts: ShootOptions,
) -> Result<DiscretizedCurve> {
    if opts.tol < 1e-12 {
        return Err(Error::InvalidParameters(format!(
            "shooting tolerance {} below 1e-12",
            opts.tol
        )));
    }
    if metric.domain.distance(p, q) == 0.0 && !opts.allow_equal {
        return Err(Error::EqualEndpoints);
    }
    let mut v = DVector::from_column_slice(v_guess);
    let residual_of =
        |c: &DiscretizedCurve| DVector::from_vec(metric.domain.displacement(q, c.end().as_slice()));
    let mut curve = integrate_geodesic(metric, p, v.as_slice(), opts.m)?;
    let mut r = residual_of(&curve);
    for _ in 0..NEWTON_MAX_ITER {
        let a = jacobi::shooting_matrix(metric, &curve)?;
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let rel = if smax > 0.0 { smin / smax } else { 0.0 };
        if r.norm() <= opts.tol {
            if rel <= SINGULAR_REL {
                return Err(Error::SingularEndpointJacobian {
                    velocity: v.as_slice().to_vec(),
                    sigma_rel: rel,
                    residual: r.norm(),
                });
            }
            return Ok(curve);
        }
        let step = svd
            .pseudo_inverse(1e-10 * smax)
            .map_err(|e| Error::InvalidParameters(e.to_string()))?
            * &r;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = &v - &step * lambda;
            match integrate_geodesic(metric, p, trial.as_slice(), opts.m) {
                Ok(c) => {
                    let rt = residual_of(&c);
                    if rt.norm() < r.norm() || rt.norm() <= opts.tol {
                        v = trial;
                        curve = c;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                Err(Error::LeftDomain { .. }) => {}
                Err(e) => return Err(e),
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if r.norm() <= opts.tol {
        let a = jacobi::shooting_matrix(metric, &curve)?;
        let sv = a.singular_values();
        let rel = sv.min() / sv.max();
        if rel <= SINGULAR_REL {
            return Err(Error::SingularEndpointJacobian {
                velocity: v.as_slice().to_vec(),
                sigma_rel: rel,
                residual: r.norm(),
            });
        }
        return Ok(curve);
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: r.norm(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Periodicity {
    pub period: f64,
    pub t_star: f64,
    pub k_star: usize,
}

impl Periodicity {
    pub fn from_period(period: f64) -> Self {
        let k = (1.0 / period).floor().max(1.0) as usize;
        Periodicity {
            period,
            t_star: (1.0 - k as f64 * period).max(0.0),
            k_star: k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionReport {
    pub pairs: Vec<(f64, f64)>,
    pub periodic: Option<Periodicity>,
}

fn segment_distance(
    a0: &DVector<f64>,
    a1: &DVector<f64>,
    b0: &DVector<f64>,
    b1: &DVector<f64>,
) -> f64 {
    // closest points of two segments by clamped projection
    let d1 = a1 - a0;
    let d2 = b1 - b0;
    let r = a0 - b0;
    let (aa, ee, ff) = (d1.dot(&d1), d2.dot(&d2), d2.dot(&r));
    let (s, t);
    if aa <= 1e-300 && ee <= 1e-300 {
        return r.norm();
    }
    if aa <= 1e-300 {
        s = 0.0;
        t = (ff / ee).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if ee <= 1e-300 {
            t = 0.0;
            s = (-c / aa).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = aa * ee - b * b;
            let mut ss = if denom > 1e-300 {
                ((b * ff - c * ee) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut tt = (b * ss + ff) / ee;
            if tt < 0.0 {
                tt = 0.0;
                ss = (-c / aa).clamp(0.0, 1.0);
            } else if tt > 1.0 {
                tt = 1.0;
                ss = ((b - c) / aa).clamp(0.0, 1.0);
            }
            s = ss;
            t = tt;
        }
    }
    (a0 + d1 * s - (b0 + d2 * t)).norm()
}

/// Gauss-Newton on `‖γ(s) − γ(t)‖²` starting from `(s, t)`, with periodic
/// axes unwrapped.
fn refine_pair(curve: &DiscretizedCurve, mut s: f64, mut t: f64) -> (f64, f64, f64) {
    let gap = |s: f64, t: f64| {
        let (xs, _) = curve.eval(s);
        let (xt, _) = curve.eval(t);
        DVector::from_vec(curve.domain.displacement(xs.as_slice(), xt.as_slice()))
    };
    let mut d = gap(s, t);
    for _ in 0..30 {
        let (_, vs) = curve.eval(s);
        let (_, vt) = curve.eval(t);
        let mut jac = DMatrix::zeros(d.len(), 2);
        jac.set_column(0, &(-&vs));
        jac.set_column(1, &vt);
        let svd = jac.svd(true, true);
        let smax = svd.singular_values.max();
        let step = match svd.pseudo_inverse(1e-8 * smax.max(1e-300)) {
            Ok(p) => p * &d,
            Err(_) => break,
        };
        let (sn, tn) = ((s - step[0]).clamp(0.0, 1.0), (t - step[1]).clamp(0.0, 1.0));
        let dn = gap(sn, tn);
        if dn.norm() >= d.norm() {
            break;
        }
        s = sn;
        t = tn;
        d = dn;
        if d.norm() < 1e-14 {
            break;
        }
    }
    (s, t, d.norm())
}

/// Self-intersections `γ(s) = γ(t)` with `|s − t| > 2/m`, and periodicity
/// when positions and velocities both match.
pub fn self_intersections(curve: &DiscretizedCurve, spatial_tol: f64) -> IntersectionReport {
    let m = curve.m;
    let min_gap = 2.0 / m as f64;
    let speed = curve
        .velocities
        .iter()
        .map(|v| v.norm())
        .fold(0.0, f64::max);
    let slack = spatial_tol + speed * curve.h();
    let wrap = |a: &DVector<f64>, b: &DVector<f64>| {
        // end point of segment b expressed near a
        a + DVector::from_vec(curve.domain.displacement(a.as_slice(), b.as_slice()))
    };
    let mut found: Vec<(f64, f64)> = Vec::new();
    let mut periodic = None;
    for i in 0..m {
        let a0 = &curve.positions[i];
        let a1 = wrap(a0, &curve.positions[i + 1]);
        for j in (i + 1)..m {
            if (j as f64 - i as f64 - 1.0) / m as f64 <= min_gap - 1e-12 {
                continue;
            }
            let b0 = wrap(a0, &curve.positions[j]);
            let b1 = wrap(&b0, &curve.positions[j + 1]);
            if segment_distance(a0, &a1, &b0, &b1) > slack {
                continue;
            }
            let (s, t, d) = refine_pair(
                curve,
                (i as f64 + 0.5) / m as f64,
                (j as f64 + 0.5) / m as f64,
            );
            if d > spatial_tol || (t - s).abs() <= min_gap {
                continue;
            }
            let (s, t) = if s < t { (s, t) } else { (t, s) };
            if found
                .iter()
                .any(|(a, b)| (a - s).abs() <= min_gap && (b - t).abs() <= min_gap)
            {
                continue;
            }
            found.push((s, t));
            let (_, vs) = curve.eval(s);
            let (_, vt) = curve.eval(t);
            if (&vs - &vt).norm() <= 10.0 * spatial_tol * (1.0 + vs.norm()) {
                let candidate = Periodicity::from_period(t - s);
                periodic = match periodic {
                    Some(p @ Periodicity { period, .. }) if period <= t - s + min_gap => Some(p),
                    _ => Some(candidate),
                };
            }
        }
    }
    found.sort_by(|a, b| a.partial_cmp(b).unwrap());
    IntersectionReport {
        pairs: found,
        periodic,
    }
}

/// Parameter interval on which a bump perturbation can be placed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupportInterval {
    pub a: f64,
    pub b: f64,
    /// Which field the interval was built for: 0 for the field itself, 1 or 2
    /// for the iterate sums of a periodic geodesic.
    pub field: u8,
}

impl SupportInterval {
    pub fn center(&self) -> f64 {
        0.5 * (self.a + self.b)
    }
}

pub const MAX_HALF_WIDTH: f64 = 0.2;

/// Sine of the angle between `u` and `w` in the chart inner product, zero when
/// either vanishes.
pub fn chart_sine(u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let (nu, nw) = (u.norm(), w.norm());
    if nu <= 1e-300 || nw <= 1e-300 {
        return 0.0;
    }
    let c = u.dot(w) / (nu * nw);
    (1.0 - c * c).max(0.0).sqrt()
}

fn wedge(u: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let (a, b, c) = (u.dot(u), w.dot(w), u.dot(w));
    (a * b - c * c).max(0.0).sqrt()
}

/// Interval `I ⊂ (0, 1)` where `V` is transverse to `γ̇` and `γ(I)` stays
/// `spatial_tol` away from the rest of the curve. Centered at the maximum of
/// `‖V ∧ γ̇‖`, half-width at most [`MAX_HALF_WIDTH`], shrunk until admissible.
pub fn support_interval(
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
    tol: f64,
    spatial_tol: f64,
) -> Result<SupportInterval> {
    let report = self_intersections(curve, spatial_tol);
    if let Some(per) = report.periodic {
        let (w1, w2) = jacobi::iterate_sum_fields(v, curve.m, per.period, per.k_star, per.t_star)?;
        let mut last = Error::NoIntervalFound;
        for (tag, w, lo, hi) in [
            (1u8, &w1, 0.0, per.t_star),
            (2u8, &w2, per.t_star, per.period),
        ] {
            match interval_for(curve, w, tol, spatial_tol, lo, hi, Some(per.period)) {
                Ok((a, b)) => return Ok(SupportInterval { a, b, field: tag }),
                Err(e) => last = e,
            }
        }
        return Err(last);
    }
    let (a, b) = interval_for(curve, v, tol, spatial_tol, 0.0, 1.0, None)?;
    Ok(SupportInterval { a, b, field: 0 })
}

fn interval_for(
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
    tol: f64,
    spatial_tol: f64,
    lo: f64,
    hi: f64,
    period: Option<f64>,
) -> Result<(f64, f64)> {
    let samples = (((hi - lo) * curve.m as f64).ceil() as usize * 4).max(16);
    let ts: Vec<f64> = (0..=samples)
        .map(|k| lo + (hi - lo) * k as f64 / samples as f64)
        .collect();
    let vals: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let (_, vel) = curve.eval(t);
            let vt = v.value(t);
            (wedge(&vt, &vel), chart_sine(&vt, &vel))
        })
        .collect();
    let peak = vals.iter().map(|p| p.0).fold(0.0, f64::max);
    let scale = ts
        .iter()
        .map(|&t| v.value(t).norm() * curve.eval(t).1.norm())
        .fold(0.0, f64::max);
    if peak <= tol * scale.max(1e-300) || peak == 0.0 {
        return Err(Error::NoIntervalFound);
    }
    let k_best = vals
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    let center = ts[k_best];
    let mut half = MAX_HALF_WIDTH.min(0.5 * (hi - lo));
    let min_half = 1.0 / curve.m as f64;
    while half >= min_half {
        let a = (center - half).max(lo + 1e-9);
        let b = (center + half).min(hi - 1e-9);
        if b - a >= min_half && admissible(curve, v, tol, spatial_tol, a, b, period) {
            return Ok((a, b));
        }
        half *= 0.8;
    }
    Err(Error::NoIntervalFound)
}

fn admissible(
    curve: &DiscretizedCurve,
    v: &dyn FieldAlong,
    tol: f64,
    spatial_tol: f64,
    a: f64,
    b: f64,
    period: Option<f64>,
) -> bool {
    let k = ((b - a) * curve.m as f64 * 4.0).ceil().max(8.0) as usize;
    let inside: Vec<DVector<f64>> = (0..=k)
        .map(|r| {
            let t = a + (b - a) * r as f64 / k as f64;
            let (x, vel) = curve.eval(t);
            if chart_sine(&v.value(t), &vel) <= tol {
                return DVector::from_element(1, f64::NAN);
            }
            x
        })
        .collect();
    if inside.iter().any(|x| x[0].is_nan()) {
        return false;
    }
    // curve points outside I, away from its ends (and their periodic images)
    let guard = 2.0 / curve.m as f64 + spatial_tol;
    let near = |t: f64| {
        let mut ds = vec![(t - a).abs().min((t - b).abs())];
        if t >= a && t <= b {
            return true;
        }
        if let Some(p) = period {
            let u = (t - a).rem_euclid(p);
            if u <= b - a {
                return true;
            }
            ds.push((u - (b - a)).abs().min((p - u).abs()));
        }
        ds.iter().any(|d| *d <= guard)
    };
    let samples = curve.m * 4;
    for r in 0..=samples {
        let t = r as f64 / samples as f64;
        if near(t) {
            continue;
        }
        let (x, _) = curve.eval(t);
        if inside
            .iter()
            .any(|y| curve.domain.distance(x.as_slice(), y.as_slice()) <= spatial_tol)
        {
            return false;
        }
    }
    true
}

/// Bilinear form of the metric along the curve at node `i`.
pub fn energy_at(metric: &MetricFamily, curve: &DiscretizedCurve, i: usize) -> Result<f64> {
    let g = metric.eval(curve.positions[i].as_slice())?;
    Ok(bilinear(
        &g,
        curve.velocities[i].as_slice(),
        curve.velocities[i].as_slice(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::ScalarField;
    use crate::jacobi::AnalyticField;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn flat_line() {
        let c = integrate_geodesic(&MetricFamily::flat(2), &[0.0, 0.0], &[1.0, 2.0], 64).unwrap();
        assert_eq!(c.energy, 5.0);
        for (i, x) in c.positions.iter().enumerate() {
            let t = i as f64 / 64.0;
            assert_abs_diff_eq!(x[0], t, epsilon = 1e-14);
            assert_abs_diff_eq!(x[1], 2.0 * t, epsilon = 1e-14);
        }
    }

    #[test]
    fn sphere_equator() {
        let s = MetricFamily::round_sphere();
        let c = integrate_geodesic(&s, &[PI / 2.0, 0.0], &[0.0, 1.0], 256).unwrap();
        assert_abs_diff_eq!(c.energy, 1.0, epsilon = 1e-15);
        for (i, x) in c.positions.iter().enumerate() {
            assert_abs_diff_eq!(x[0], PI / 2.0, epsilon = 1e-12);
            assert_abs_diff_eq!(x[1], i as f64 / 256.0, epsilon = 1e-12);
        }
        assert!(geodesic_residual(&s, &c).unwrap() <= 1e-8);
    }

    #[test]
    fn minkowski_null_line_keeps_zero_energy() {
        let mk = MetricFamily::minkowski(3);
        let c = integrate_geodesic(&mk, &[0.0; 3], &[1.0, 1.0, 0.0], 64).unwrap();
        assert_eq!(c.energy, 0.0);
        assert_eq!(
            CausalCharacter::of_energy(c.energy),
            CausalCharacter::Lightlike
        );
        assert!(c.max_energy_drift(&mk).unwrap() == 0.0);
    }

    #[test]
    fn integration_errors() {
        let s = MetricFamily::round_sphere();
        assert!(matches!(
            integrate_geodesic(&s, &[PI / 2.0, 0.0], &[0.0, 1.0], 8),
            Err(Error::StepCountTooSmall { m: 8 })
        ));
        assert!(matches!(
            integrate_geodesic(&s, &[PI / 2.0, 0.0], &[3.0, 0.0], 64),
            Err(Error::LeftDomain { .. })
        ));
    }

    #[test]
    fn inclined_great_circle_converges_at_fourth_order() {
        // x0 on the equator, v0 = (a, b): closed form on the unit sphere
        let s = MetricFamily::round_sphere();
        let (a, b): (f64, f64) = (0.3, 1.0);
        let speed = (a * a + b * b).sqrt();
        let exact = {
            // unit vectors in R^3
            let p = [1.0, 0.0, 0.0];
            let d = [0.0, b / speed, -a / speed];
            let (c, sn) = (speed.cos(), speed.sin());
            let x = [
                p[0] * c + d[0] * sn,
                p[1] * c + d[1] * sn,
                p[2] * c + d[2] * sn,
            ];
            [x[2].acos(), x[1].atan2(x[0])]
        };
        let err = |k: usize| {
            let c = integrate_geodesic_fixed(&s, &[PI / 2.0, 0.0], &[a, b], 16, k).unwrap();
            let e = c.end();
            ((e[0] - exact[0]).powi(2) + (e[1] - exact[1]).powi(2)).sqrt()
        };
        let ratio = err(2) / err(4);
        assert!((12.0..=20.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn shooting_examples() {
        let flat = MetricFamily::flat(2);
        let c = shoot_bvp(
            &flat,
            &[0.0, 0.0],
            &[1.0, 1.0],
            &[0.9, 1.2],
            ShootOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(c.initial_velocity()[0], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(c.initial_velocity()[1], 1.0, epsilon = 1e-10);

        let s = MetricFamily::round_sphere();
        let c = shoot_bvp(
            &s,
            &[PI / 2.0, 0.0],
            &[PI / 2.0, 1.0],
            &[0.0, 0.9],
            ShootOptions::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(c.initial_velocity()[0], 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.initial_velocity()[1], 1.0, epsilon = 1e-9);

        let r = shoot_bvp(
            &s,
            &[PI / 2.0, 0.0],
            &[PI / 2.0, PI],
            &[0.0, 3.0],
            ShootOptions::default(),
        );
        match r {
            Err(Error::SingularEndpointJacobian {
                velocity,
                sigma_rel,
                ..
            }) => {
                assert!(sigma_rel <= SINGULAR_REL);
                assert!(velocity[1] > 0.0);
            }
            other => panic!("expected a conjugate endpoint, got {other:?}"),
        }
    }

    #[test]
    fn shooting_rejects_equal_endpoints_and_is_deterministic() {
        let s = MetricFamily::round_sphere();
        assert!(matches!(
            shoot_bvp(
                &s,
                &[1.0, 0.0],
                &[1.0, 0.0],
                &[0.0, 1.0],
                ShootOptions::default()
            ),
            Err(Error::EqualEndpoints)
        ));
        let p = [1.2, 0.1];
        let q = [1.5, 1.3];
        let a = shoot_bvp(&s, &p, &q, &[0.2, 1.0], ShootOptions::default()).unwrap();
        let b = shoot_bvp(&s, &p, &q, &[0.2, 1.0], ShootOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn straight_segment_has_no_intersections() {
        let c = integrate_geodesic(&MetricFamily::flat(2), &[0.0, 0.0], &[1.0, 0.5], 64).unwrap();
        let r = self_intersections(&c, 1e-6);
        assert!(r.pairs.is_empty() && r.periodic.is_none());
    }

    #[test]
    fn wrapped_equator_is_periodic() {
        let s = MetricFamily::round_sphere();
        let c = integrate_geodesic(&s, &[PI / 2.0, 0.0], &[0.0, 3.0 * PI], 96).unwrap();
        let r = self_intersections(&c, 1e-6);
        let p = r.periodic.expect("periodic");
        assert_abs_diff_eq!(p.period, 2.0 / 3.0, epsilon = 1e-6);
        assert_eq!(p.k_star, 1);
        assert_abs_diff_eq!(p.t_star, 1.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn crossing_curve_matches_brute_force_scan() {
        // a perturbed flat metric bends a straight line into a loop-free curve;
        // a curve on a conformally flat metric that crosses itself once
        let psi = ScalarField::Bump {
            amp: 3.0,
            radius: 0.6,
            center: vec![0.5, 0.0],
        };
        let metric = MetricFamily::conformal(
            ScalarField::Sum(vec![ScalarField::Constant(1.0), psi]),
            MetricFamily::flat(2),
        );
        let c = integrate_geodesic(&metric, &[0.0, 0.0], &[1.0, 0.3], 128).unwrap();
        let fast = self_intersections(&c, 1e-6);
        let c2 = integrate_geodesic(&metric, &[0.0, 0.0], &[1.0, 0.3], 256).unwrap();
        assert_eq!(fast.pairs.len(), self_intersections(&c2, 1e-6).pairs.len());
        // brute force over dense samples
        let n = 2000;
        let pts: Vec<_> = (0..=n).map(|k| c.eval(k as f64 / n as f64).0).collect();
        let mut close = 0;
        for i in 0..=n {
            for j in (i + 40)..=n {
                if (&pts[i] - &pts[j]).norm() < 1e-3 {
                    close += 1;
                }
            }
        }
        assert_eq!(close > 0, !fast.pairs.is_empty());
    }

    #[test]
    fn support_interval_examples() {
        let c = integrate_geodesic(&MetricFamily::flat(2), &[0.0, 0.0], &[1.0, 0.0], 64).unwrap();
        let v = AnalyticField::new(|t| DVector::from_vec(vec![0.0, (PI * t).sin()]));
        let i = support_interval(&c, &v, 1e-3, 1e-3).unwrap();
        assert_abs_diff_eq!(i.center(), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(i.b - i.a, 2.0 * MAX_HALF_WIDTH, epsilon = 1e-9);

        let tangent = AnalyticField::new(|_| DVector::from_vec(vec![1.0, 0.0]));
        assert!(matches!(
            support_interval(&c, &tangent, 1e-3, 1e-3),
            Err(Error::NoIntervalFound)
        ));

        let s = MetricFamily::round_sphere();
        let c = integrate_geodesic(&s, &[PI / 2.0, 0.0], &[0.0, 1.9 * PI], 128).unwrap();
        let v = AnalyticField::new(|t| DVector::from_vec(vec![(1.9 * PI * t).sin(), 0.0]));
        let i = support_interval(&c, &v, 1e-2, 1e-3).unwrap();
        for k in 0..=50 {
            let t = i.a + (i.b - i.a) * k as f64 / 50.0;
            assert!((1.9 * PI * t).sin().abs() > 1e-2);
        }
    }
}
