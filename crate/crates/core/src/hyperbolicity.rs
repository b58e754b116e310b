//! Product metrics `g⁰(α·,·) − β ds²` on `Σ × ℝ`: construction, the least
//! eigenvalue of `α`, sampled seminorms and the Cauchy-surface criterion.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::BoxDomain;
use crate::error::{Error, Result};
use crate::fields::{AlphaField, ScalarField};
use crate::metric::{MetricFamily, MetricJet, MetricKind};

use std::f64::consts::PI;
use std::sync::Arc;

/// The spatial factor. Both built-ins are flat in their chart, so `g⁰` is the
/// identity matrix and `α` is given directly in an orthonormal frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaModel {
    Euclidean {
        dim: usize,
    },
    /// Unit-speed circle of length 2π, chart coordinate periodic.
    Circle,
}

impl SigmaModel {
    pub fn dim(&self) -> usize {
        match self {
            SigmaModel::Euclidean { dim } => *dim,
            SigmaModel::Circle => 1,
        }
    }

    pub fn is_compact(&self) -> bool {
        matches!(self, SigmaModel::Circle)
    }

    /// Riemannian distance from `base` to `x`.
    pub fn distance(&self, base: &[f64], x: &[f64]) -> f64 {
        match self {
            SigmaModel::Euclidean { .. } => base
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
            SigmaModel::Circle => {
                let d = (x[0] - base[0]).rem_euclid(2.0 * PI);
                d.min(2.0 * PI - d)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AlphaBetaPair {
    pub sigma: SigmaModel,
    pub alpha: AlphaField,
    pub beta: ScalarField,
    pub base_point: Vec<f64>,
    /// Chart box on `(x, s)`.
    pub domain: BoxDomain,
}

impl AlphaBetaPair {
    pub fn new(
        sigma: SigmaModel,
        alpha: AlphaField,
        beta: ScalarField,
        base_point: Vec<f64>,
    ) -> Result<Self> {
        let k = sigma.dim();
        if alpha.dim() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: alpha.dim(),
            });
        }
        if base_point.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: base_point.len(),
            });
        }
        let mut domain = match sigma {
            SigmaModel::Euclidean { dim } => BoxDomain::cube(dim + 1, 10.0),
            SigmaModel::Circle => BoxDomain::new(vec![-4.0 * PI, -10.0], vec![4.0 * PI, 10.0])
                .with_period(0, 2.0 * PI),
        };
        domain.periods.resize(k + 1, None);
        Ok(AlphaBetaPair {
            sigma,
            alpha,
            beta,
            base_point,
            domain,
        })
    }

    pub fn with_domain(mut self, domain: BoxDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn sigma_dim(&self) -> usize {
        self.sigma.dim()
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim() + 1
    }

    pub fn d0(&self, x: &[f64]) -> f64 {
        self.sigma
            .distance(&self.base_point, &x[..self.sigma_dim()])
    }

    pub(crate) fn metric_jet(&self, x: &[f64], order: usize) -> MetricJet {
        let k = self.sigma_dim();
        let n = k + 1;
        let a = self.alpha.jet(x);
        let b = self.beta.jet(x);
        let mut out = MetricJet::constant(DMatrix::zeros(n, n), order);
        out.g.view_mut((0, 0), (k, k)).copy_from(&a.value);
        out.g[(k, k)] = -b.value;
        for c in 0..n {
            out.dg[c].view_mut((0, 0), (k, k)).copy_from(&a.d1[c]);
            out.dg[c][(k, k)] = -b.grad[c];
        }
        if order >= 2 {
            for c in 0..n {
                for e in 0..n {
                    out.ddg[c][e]
                        .view_mut((0, 0), (k, k))
                        .copy_from(&a.d2[c][e]);
                    out.ddg[c][e][(k, k)] = -b.hess[(c, e)];
                }
            }
        }
        out
    }

    /// Checks positivity of `α` and `β` on a sample of the domain and returns
    /// the Lorentzian metric.
    pub fn build(&self) -> Result<MetricFamily> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut pts: Vec<Vec<f64>> = (0..200)
            .map(|_| self.domain.sample(&mut rng, 0.0))
            .collect();
        pts.push(self.domain.lo.clone());
        pts.push(self.domain.hi.clone());
        for x in &pts {
            self.check_positive(x)?;
        }
        Ok(MetricFamily {
            kind: MetricKind::GAlphaBeta(Arc::new(self.clone())),
            domain: self.domain.clone(),
        })
    }

    fn check_positive(&self, x: &[f64]) -> Result<()> {
        if self.beta.value(x) <= 0.0 {
            return Err(Error::BetaNotPositive { point: x.to_vec() });
        }
        self.lambda_min(x).map(|_| ())
    }

    /// Smallest eigenvalue of `α` at `x = (σ, s)`.
    pub fn lambda_min(&self, x: &[f64]) -> Result<f64> {
        let a = self.alpha.jet(x).value;
        let lam = SymmetricEigen::new(a).eigenvalues.min();
        if lam <= 0.0 {
            return Err(Error::AlphaNotPositive { point: x.to_vec() });
        }
        Ok(lam)
    }

    /// `‖α⁻¹‖⁻¹`, equal to [`lambda_min`](Self::lambda_min) for positive `α`.
    pub fn lambda_min_via_inverse(&self, x: &[f64]) -> Result<f64> {
        let a = self.alpha.jet(x).value;
        let inv = a
            .try_inverse()
            .ok_or_else(|| Error::AlphaNotPositive { point: x.to_vec() })?;
        let sv = inv.singular_values();
        Ok(1.0 / sv.max())
    }

    /// `√(β / (λ(α)(1 + d₀²)))`
    pub fn ratio(&self, x: &[f64]) -> Result<f64> {
        let b = self.beta.value(x);
        if b <= 0.0 {
            return Err(Error::BetaNotPositive { point: x.to_vec() });
        }
        let d = self.d0(x);
        Ok((b / (self.lambda_min(x)? * (1.0 + d * d))).sqrt())
    }
}

/// Sampling grid over `Σ × [−n_max, n_max]`. Σ-axes are sampled on
/// `[c − r, c + r]` around the base point (the whole circle for compact Σ).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SampleGrid {
    pub sigma_points: usize,
    pub s_points: usize,
    pub sigma_radius: f64,
}

impl SampleGrid {
    /// Grid whose nodes contain all nodes of `self`.
    pub fn refined(&self) -> Self {
        SampleGrid {
            sigma_points: 2 * (self.sigma_points.max(2) - 1) + 1,
            s_points: 2 * (self.s_points.max(2) - 1) + 1,
            sigma_radius: self.sigma_radius,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![0.5 * (a + b)];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn sigma_nodes(pair: &AlphaBetaPair, grid: &SampleGrid, radius: f64) -> Vec<Vec<f64>> {
    let k = pair.sigma_dim();
    let axes: Vec<Vec<f64>> = (0..k)
        .map(|a| {
            let c = pair.base_point[a];
            match pair.sigma {
                SigmaModel::Circle => linspace(c - PI, c + PI, grid.sigma_points),
                SigmaModel::Euclidean { .. } => linspace(c - radius, c + radius, grid.sigma_points),
            }
        })
        .collect();
    let mut out = vec![Vec::new()];
    for ax in &axes {
        out = out
            .into_iter()
            .flat_map(|p| {
                ax.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(*v);
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripRow {
    pub n: usize,
    pub sup_ratio: f64,
    /// Supremum over the inner half of the Σ sample; equal to `sup_ratio` for compact Σ.
    pub sup_ratio_inner: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub strips: Vec<StripRow>,
    /// `inf λ(α)(1 + d₀²)` over the sample.
    pub eps: f64,
    /// `sup β` over the sample.
    pub b: f64,
    pub unbounded_trend: bool,
    /// The sufficient condition held on every sampled strip.
    pub criterion_satisfied_on_sample: bool,
}

/// Growth factor of the sampled supremum between the inner half and the full
/// Σ sample above which the supremum is flagged as unbounded.
pub const TREND_FACTOR: f64 = 2.0;

pub fn hyperbolicity_check(
    pair: &AlphaBetaPair,
    grid: &SampleGrid,
    n_max: usize,
) -> Result<HyperbolicityReport> {
    let outer = sigma_nodes(pair, grid, grid.sigma_radius);
    let k = pair.sigma_dim();
    let mut eps = f64::INFINITY;
    let mut b = 0.0f64;
    let mut strips = Vec::with_capacity(n_max);
    let mut flagged = false;
    for n in 1..=n_max {
        let mut sup = 0.0f64;
        let mut sup_inner = 0.0f64;
        for s in linspace(-(n as f64), n as f64, grid.s_points) {
            for p in &outer {
                let mut x = p.clone();
                x.push(s);
                let r = pair.ratio(&x)?;
                let d = pair.d0(&x);
                eps = eps.min(pair.lambda_min(&x)? * (1.0 + d * d));
                b = b.max(pair.beta.value(&x));
                sup = sup.max(r);
                let inner = pair.sigma.is_compact()
                    || (0..k).all(|a| {
                        (x[a] - pair.base_point[a]).abs() <= 0.5 * grid.sigma_radius + 1e-12
                    });
                if inner {
                    sup_inner = sup_inner.max(r);
                }
            }
        }
        if !pair.sigma.is_compact() && (!sup.is_finite() || sup > TREND_FACTOR * sup_inner) {
            flagged = true;
        }
        strips.push(StripRow {
            n,
            sup_ratio: sup,
            sup_ratio_inner: sup_inner,
        });
    }
    Ok(HyperbolicityReport {
        strips,
        eps,
        b,
        unbounded_trend: flagged,
        criterion_satisfied_on_sample: !flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seminorms {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub d0: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Seminorms {
    pub fn max(&self) -> f64 {
        [self.c0, self.c1, self.c2, self.d0, self.d1, self.d2]
            .into_iter()
            .fold(0.0, f64::max)
    }
}

/// Sampled suprema over `Σ × [−s_max, s_max]`. `C0` uses the operator norm,
/// `C1`, `C2` the Frobenius norm of the derivative arrays, `D1` the gradient
/// norm and `D2` the spectral norm of the Hessian.
pub fn seminorms(pair: &AlphaBetaPair, grid: &SampleGrid, s_max: f64) -> Seminorms {
    let nodes = sigma_nodes(pair, grid, grid.sigma_radius);
    let mut out = Seminorms {
        c0: 0.0,
        c1: 0.0,
        c2: 0.0,
        d0: 0.0,
        d1: 0.0,
        d2: 0.0,
    };
    for s in linspace(-s_max, s_max, grid.s_points) {
        for p in &nodes {
            let mut x = p.clone();
            x.push(s);
            let d = pair.d0(&x);
            let a = pair.alpha.jet(&x);
            let op = a.value.singular_values().max();
            out.c0 = out.c0.max(op * (1.0 + d * d));
            let c1: f64 = a.d1.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt();
            let c2: f64 =
                a.d2.iter()
                    .flat_map(|r| r.iter())
                    .map(|m| m.norm_squared())
                    .sum::<f64>()
                    .sqrt();
            out.c1 = out.c1.max(c1);
            out.c2 = out.c2.max(c2);
            let bj = pair.beta.jet(&x);
            out.d0 = out.d0.max(bj.value.abs());
            out.d1 = out.d1.max(bj.grad.norm());
            let h = SymmetricEigen::new(bj.hess.clone()).eigenvalues;
            out.d2 = out.d2.max(h.amax());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub samples: usize,
    pub violations: usize,
    /// Largest `|λ(A) − λ(B)| − ‖A − B‖` seen; nonpositive when no violation.
    pub worst_slack: f64,
}

impl LipschitzReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Smallest absolute eigenvalue of a symmetric matrix.
pub fn least_abs_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.amin()
}

pub fn least_eigenvalue(a: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(a.clone()).eigenvalues.min()
}

fn random_symmetric<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

/// Draws random symmetric pairs and checks `|λ_*(A) − λ_*(B)| ≤ ‖A − B‖`
/// for the least absolute eigenvalue, and the same bound for the least
/// eigenvalue on positive definite pairs.
pub fn lambda_lipschitz_property(samples: usize, seed: u64) -> LipschitzReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..samples {
        let n = rng.gen_range(1..=5);
        let a = random_symmetric(&mut rng, n);
        let scale = if rng.gen_bool(0.5) { 1e-3 } else { 1.0 };
        let b = &a + random_symmetric(&mut rng, n) * scale;
        let op = (&a - &b).singular_values().max();
        let slack = (least_abs_eigenvalue(&a) - least_abs_eigenvalue(&b)).abs() - op;
        worst = worst.max(slack);
        if slack > 1e-12 * (1.0 + op) {
            violations += 1;
        }
        let shift = DMatrix::identity(n, n) * (n as f64 + 0.1);
        let (pa, pb) = (&a + &shift, &b + &shift);
        let slack = (least_eigenvalue(&pa) - least_eigenvalue(&pb)).abs() - op;
        worst = worst.max(slack);
        if slack > 1e-12 * (1.0 + op) {
            violations += 1;
        }
    }
    LipschitzReport {
        samples,
        violations,
        worst_slack: worst,
    }
}
