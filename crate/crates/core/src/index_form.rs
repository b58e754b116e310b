//! Finite-element discretization of the index form on endpoint-vanishing
//! fields, its kernel, the isomorphism-plus-compact split, and the second
//! variation of a static metric along a vertical geodesic.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geodesic::{self, DiscretizedCurve};
use crate::jacobi::{self, JacobiSolution};
use crate::metric::{bilinear, MetricFamily};

/// Largest geodesic residual accepted by the assembly.
pub const GEODESIC_ACCEPT: f64 = 1e-6;
pub const DEFAULT_KERNEL_TOL: f64 = 1e-2;
/// Admissible `|λ_m| / |λ_2m|` for a discretized kernel eigenvalue.
pub const REFINEMENT_RATIO: (f64, f64) = (3.0, 5.0);

pub(crate) const GAUSS2: [(f64, f64); 2] = [
    (0.211_324_865_405_187_1, 0.5),
    (0.788_675_134_594_812_9, 0.5),
];
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Piecewise-linear hats at the interior nodes, one per coordinate direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathBasis {
    pub m: usize,
    pub n: usize,
}

impl PathBasis {
    pub fn new(m: usize, n: usize) -> Self {
        PathBasis { m, n }
    }

    pub fn dim(&self) -> usize {
        self.n * (self.m - 1)
    }

    /// Position of the hat at interior node `node` (1..m-1), direction `a`.
    pub fn index(&self, node: usize, a: usize) -> usize {
        (node - 1) * self.n + a
    }

    /// Node values of a coefficient vector, zero at both ends.
    pub fn nodes(&self, c: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..=self.m)
            .map(|i| {
                if i == 0 || i == self.m {
                    DVector::zeros(self.n)
                } else {
                    DVector::from_fn(self.n, |a, _| c[self.index(i, a)])
                }
            })
            .collect()
    }

    pub fn coefficients(&self, nodes: &[DVector<f64>]) -> DVector<f64> {
        let mut c = DVector::zeros(self.dim());
        for i in 1..self.m {
            for a in 0..self.n {
                c[self.index(i, a)] = nodes[i][a];
            }
        }
        c
    }
}

/// `a` is the index form, `g` the auxiliary Riemannian inner product,
/// `a = phi_part + e_part` with `phi_part` the isomorphism part.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexFormMatrix {
    pub basis: PathBasis,
    pub a: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub phi_part: DMatrix<f64>,
    pub e_part: DMatrix<f64>,
}

fn symmetric(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Adds `block` at hats `(k, l)`, skipping boundary nodes.
fn scatter(target: &mut DMatrix<f64>, basis: &PathBasis, k: usize, l: usize, block: &DMatrix<f64>) {
    if k == 0 || l == 0 || k == basis.m || l == basis.m {
        return;
    }
    let (r, c) = (basis.index(k, 0), basis.index(l, 0));
    let mut view = target.view_mut((r, c), (basis.n, basis.n));
    view += block;
}

/// Index form `∫ g(𝐃V, 𝐃W) + g(R(γ̇,V)γ̇, W) dt` on the hat basis, with
/// two-point Gauss quadrature per cell. `gr` is the auxiliary Riemannian
/// metric defining `G = ∫ gR(𝐃ᴿV, 𝐃ᴿW)` and `phi_part = ∫ g(𝐃ᴿV, 𝐃ᴿW)`.
pub fn assemble_index_form(
    metric: &MetricFamily,
    gr: &MetricFamily,
    curve: &DiscretizedCurve,
    basis: PathBasis,
) -> Result<IndexFormMatrix> {
    let n = metric.dim();
    if basis.m != curve.m || basis.n != n || curve.dim() != n || gr.dim() != n {
        return Err(Error::GridMismatch);
    }
    let residual = geodesic::geodesic_residual(metric, curve)?;
    if residual > GEODESIC_ACCEPT {
        return Err(Error::NotAGeodesic { residual });
    }
    let dim = basis.dim();
    let (mut a, mut g, mut phi, mut ep) = (
        DMatrix::zeros(dim, dim),
        DMatrix::zeros(dim, dim),
        DMatrix::zeros(dim, dim),
        DMatrix::zeros(dim, dim),
    );
    let m = curve.m;
    let h = curve.h();
    let id = DMatrix::<f64>::identity(n, n);
    for e in 0..m {
        for (s, w) in GAUSS2 {
            let t = (e as f64 + s) * h;
            let (x, v) = curve.eval(t);
            let (gam, curv) = metric.connection_and_curvature(x.as_slice())?;
            let gx = metric.eval(x.as_slice())?;
            let c = gam.along(v.as_slice());
            let gm = (&gx * curv.jacobi_operator(v.as_slice())).transpose();
            let grx = gr.eval(x.as_slice())?;
            let cr = gr.christoffel(x.as_slice())?.along(v.as_slice());
            let phis = [(1.0 - s, -1.0 / h), (s, 1.0 / h)];
            let nodes = [e, e + 1];
            let d: Vec<DMatrix<f64>> = phis.iter().map(|(p, dp)| &id * *dp + &c * *p).collect();
            let dr: Vec<DMatrix<f64>> = phis.iter().map(|(p, dp)| &id * *dp + &cr * *p).collect();
            let wh = w * h;
            for k in 0..2 {
                for l in 0..2 {
                    let blk_a =
                        (d[k].transpose() * &gx * &d[l] + &gm * (phis[k].0 * phis[l].0)) * wh;
                    let blk_g = dr[k].transpose() * &grx * &dr[l] * wh;
                    let blk_p = dr[k].transpose() * &gx * &dr[l] * wh;
                    // compact remainder from its own integrand, not as a - phi
                    let blk_e = (d[k].transpose() * &gx * &d[l] - dr[k].transpose() * &gx * &dr[l]
                        + &gm * (phis[k].0 * phis[l].0))
                        * wh;
                    scatter(&mut a, &basis, nodes[k], nodes[l], &blk_a);
                    scatter(&mut g, &basis, nodes[k], nodes[l], &blk_g);
                    scatter(&mut phi, &basis, nodes[k], nodes[l], &blk_p);
                    scatter(&mut ep, &basis, nodes[k], nodes[l], &blk_e);
                }
            }
        }
    }
    let a = symmetric(a);
    let phi_part = symmetric(phi);
    let e_part = symmetric(ep);
    Ok(IndexFormMatrix {
        basis,
        a,
        g: symmetric(g),
        phi_part,
        e_part,
    })
}

/// Eigenpairs of `A v = λ G v`, sorted by `|λ|`, eigenvectors `G`-normalized.
pub fn generalized_eigen(a: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Vec<(f64, DVector<f64>)>> {
    let chol = g.clone().cholesky().ok_or_else(|| {
        Error::InvalidParameters("auxiliary inner product is not positive definite".into())
    })?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameters("singular Cholesky factor".into()))?;
    let c = symmetric(&linv * a * linv.transpose());
    let eig = c.symmetric_eigen();
    let back = linv.transpose();
    let mut pairs: Vec<(f64, DVector<f64>)> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, lam)| (*lam, &back * eig.eigenvectors.column(i)))
        .collect();
    pairs.sort_by(|x, y| x.0.abs().partial_cmp(&y.0.abs()).unwrap());
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelField {
    pub eigenvalue: f64,
    /// Node values on the grid, scaled to unit maximum norm.
    pub nodes: Vec<Vec<f64>>,
    /// `|λ_m| / |λ_2m|` when a refined assembly was supplied.
    pub refinement_ratio: Option<f64>,
}

impl KernelField {
    pub fn node_vectors(&self) -> Vec<DVector<f64>> {
        self.nodes
            .iter()
            .map(|v| DVector::from_column_slice(v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelReport {
    pub dimension: usize,
    pub fields: Vec<KernelField>,
    pub min_abs_eigenvalue: f64,
    /// Smallest few `|λ|`, ascending.
    pub smallest: Vec<f64>,
}

fn kernel_field(basis: &PathBasis, lam: f64, v: &DVector<f64>, ratio: Option<f64>) -> KernelField {
    let nodes = basis.nodes(v);
    let scale = nodes
        .iter()
        .map(|x| x.norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    // fix the sign so the largest node component is positive
    let pivot = nodes
        .iter()
        .flat_map(|x| x.iter().copied())
        .fold(0.0f64, |acc, c| if c.abs() > acc.abs() { c } else { acc });
    let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
    KernelField {
        eigenvalue: lam,
        nodes: nodes
            .iter()
            .map(|x| (x * (sign / scale)).as_slice().to_vec())
            .collect(),
        refinement_ratio: ratio,
    }
}

/// Eigenvectors with `|λ| < kernel_tol` (no refinement test).
pub fn kernel(ifm: &IndexFormMatrix, kernel_tol: f64) -> Result<KernelReport> {
    let pairs = generalized_eigen(&ifm.a, &ifm.g)?;
    let fields: Vec<KernelField> = pairs
        .iter()
        .filter(|(l, _)| l.abs() < kernel_tol)
        .map(|(l, v)| kernel_field(&ifm.basis, *l, v, None))
        .collect();
    Ok(KernelReport {
        dimension: fields.len(),
        fields,
        min_abs_eigenvalue: pairs.first().map(|p| p.0.abs()).unwrap_or(f64::INFINITY),
        smallest: pairs.iter().take(6).map(|p| p.0.abs()).collect(),
    })
}

/// Kernel declared only when `|λ| < kernel_tol` on the coarse grid and the
/// matching eigenvalue of the grid-doubled assembly is smaller by a factor in
/// [`REFINEMENT_RATIO`].
pub fn refined_kernel(
    coarse: &IndexFormMatrix,
    fine: &IndexFormMatrix,
    kernel_tol: f64,
) -> Result<KernelReport> {
    if fine.basis.m != 2 * coarse.basis.m || fine.basis.n != coarse.basis.n {
        return Err(Error::GridMismatch);
    }
    let pc = generalized_eigen(&coarse.a, &coarse.g)?;
    let pf = generalized_eigen(&fine.a, &fine.g)?;
    let mut fields = Vec::new();
    for (k, (l, v)) in pc.iter().enumerate() {
        if l.abs() >= kernel_tol {
            break;
        }
        let ratio = l.abs() / pf[k].0.abs().max(1e-300);
        if ratio >= REFINEMENT_RATIO.0 && ratio <= REFINEMENT_RATIO.1 {
            fields.push(kernel_field(&coarse.basis, *l, v, Some(ratio)));
        }
    }
    Ok(KernelReport {
        dimension: fields.len(),
        fields,
        min_abs_eigenvalue: pc.first().map(|p| p.0.abs()).unwrap_or(f64::INFINITY),
        smallest: pc.iter().take(6).map(|p| p.0.abs()).collect(),
    })
}

/// The Jacobi field with `J(0) = 0` closest (least squares over the interior
/// nodes) to a discretized field, and the cosine similarity of the two node
/// vectors.
pub fn jacobi_reconstruction(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    nodes: &[DVector<f64>],
) -> Result<(JacobiSolution, f64)> {
    if nodes.len() != curve.m + 1 {
        return Err(Error::GridMismatch);
    }
    let n = metric.dim();
    let flow = jacobi::endpoint_flow(metric, curve)?;
    let rows = n * (curve.m - 1);
    let mut big = DMatrix::zeros(rows, n);
    let mut rhs = DVector::zeros(rows);
    for i in 1..curve.m {
        big.view_mut(((i - 1) * n, 0), (n, n)).copy_from(&flow.j[i]);
        rhs.rows_mut((i - 1) * n, n).copy_from(&nodes[i]);
    }
    let w = big
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::InvalidParameters(e.to_string()))?;
    let sol = jacobi::jacobi_solve(metric, curve, &vec![0.0; n], w.as_slice())?;
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (a, b) in nodes.iter().zip(&sol.j) {
        dot += a.dot(b);
        na += a.norm_squared();
        nb += b.norm_squared();
    }
    Ok((sol, dot / (na.sqrt() * nb.sqrt()).max(1e-300)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FredholmReport {
    pub split_residual: f64,
    pub e_part_max: f64,
    /// `G`-singular values of `e_part`, descending.
    pub singular_values: Vec<f64>,
    /// Slope of `log σ_k` against `log k` over `k ≤ dim/2`.
    pub decay_exponent: Option<f64>,
    /// `max_{k ≤ dim/2} k σ_k`.
    pub fitted_c: Option<f64>,
    /// `σ_k ≤ C/k` on the fitted range.
    pub bound_holds: bool,
}

pub fn fredholm_split_check(ifm: &IndexFormMatrix) -> Result<FredholmReport> {
    let split_residual = (&ifm.a - &ifm.phi_part - &ifm.e_part).amax();
    let e_part_max = ifm.e_part.amax();
    if e_part_max == 0.0 {
        return Ok(FredholmReport {
            split_residual,
            e_part_max,
            singular_values: vec![0.0; ifm.basis.dim()],
            decay_exponent: None,
            fitted_c: None,
            bound_holds: true,
        });
    }
    let l = ifm
        .g
        .clone()
        .cholesky()
        .ok_or_else(|| {
            Error::InvalidParameters("auxiliary inner product is not positive definite".into())
        })?
        .l();
    let linv = l
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameters("singular Cholesky factor".into()))?;
    let mut sv: Vec<f64> = (&linv * &ifm.e_part * linv.transpose())
        .singular_values()
        .iter()
        .copied()
        .collect();
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let half = (sv.len() / 2).max(1);
    let floor = sv[0] * 1e-12;
    let pts: Vec<(f64, f64)> = sv[..half]
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > floor)
        .map(|(k, s)| (((k + 1) as f64).ln(), s.ln()))
        .collect();
    let decay_exponent = if pts.len() >= 2 {
        let np = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / np;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / np;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    let c = sv[..half]
        .iter()
        .enumerate()
        .map(|(k, s)| (k + 1) as f64 * s)
        .fold(0.0, f64::max);
    let bound_holds = sv[..half]
        .iter()
        .enumerate()
        .all(|(k, s)| *s <= c / (k + 1) as f64 * (1.0 + 1e-12));
    Ok(FredholmReport {
        split_residual,
        e_part_max,
        singular_values: sv,
        decay_exponent,
        fitted_c: Some(c),
        bound_holds,
    })
}

/// Second variation of `g₀ ⊕ (−β ds²)` along the vertical geodesic
/// `t ↦ (x₀, s₀ + ṡ t)` on hats for `(ξ, σ)`, node-major with `σ` last.
/// `G` uses `g₀ ⊕ ds²`.
pub fn stationary_index_form(
    g0: &MetricFamily,
    beta: &ScalarField,
    x0: &[f64],
    s_dot: f64,
    m: usize,
) -> Result<IndexFormMatrix> {
    let n0 = x0.len();
    if g0.dim() != n0 {
        return Err(Error::DimensionMismatch {
            expected: g0.dim(),
            got: n0,
        });
    }
    let jet = beta.jet(x0);
    let grad_norm = jet.grad.norm();
    if grad_norm > 1e-10 {
        return Err(Error::NotCriticalPoint { grad_norm });
    }
    let basis = PathBasis::new(m, n0 + 1);
    let n = n0 + 1;
    let g0x = g0.eval(x0)?;
    // derivative-derivative coefficient matrices, constant along the curve
    let mut kin_a = DMatrix::zeros(n, n);
    kin_a.view_mut((0, 0), (n0, n0)).copy_from(&g0x);
    kin_a[(n0, n0)] = -jet.value;
    let mut kin_g = kin_a.clone();
    kin_g[(n0, n0)] = 1.0;
    // value-value (ξ, ξ̄) and value-derivative (ξ, σ̄') couplings
    let mut pot = DMatrix::zeros(n, n);
    pot.view_mut((0, 0), (n0, n0))
        .copy_from(&(&jet.hess * (-0.5 * s_dot * s_dot)));
    let mut cross = DMatrix::zeros(n, n);
    for a in 0..n0 {
        // −σ̄' ṡ dβ(ξ): row = ξ-direction of V, column = σ of W
        cross[(a, n0)] = -s_dot * jet.grad[a];
    }
    let dim = basis.dim();
    let (mut a, mut g, mut phi, mut ep) = (
        DMatrix::zeros(dim, dim),
        DMatrix::zeros(dim, dim),
        DMatrix::zeros(dim, dim),
        DMatrix::zeros(dim, dim),
    );
    let h = 1.0 / m as f64;
    for e in 0..m {
        for (s, w) in GAUSS2 {
            let phis = [(1.0 - s, -1.0 / h), (s, 1.0 / h)];
            let nodes = [e, e + 1];
            let wh = w * h;
            for k in 0..2 {
                for l in 0..2 {
                    let (pk, dk) = phis[k];
                    let (pl, dl) = phis[l];
                    let blk_a = (&kin_a * (dk * dl)
                        + &pot * (pk * pl)
                        + &cross * (pk * dl)
                        + cross.transpose() * (dk * pl))
                        * wh;
                    let blk_e =
                        (&pot * (pk * pl) + &cross * (pk * dl) + cross.transpose() * (dk * pl))
                            * wh;
                    scatter(&mut a, &basis, nodes[k], nodes[l], &blk_a);
                    scatter(&mut ep, &basis, nodes[k], nodes[l], &blk_e);
                    scatter(
                        &mut g,
                        &basis,
                        nodes[k],
                        nodes[l],
                        &(&kin_g * (dk * dl * wh)),
                    );
                    scatter(
                        &mut phi,
                        &basis,
                        nodes[k],
                        nodes[l],
                        &(&kin_a * (dk * dl * wh)),
                    );
                }
            }
        }
    }
    let a = symmetric(a);
    let phi_part = symmetric(phi);
    let e_part = symmetric(ep);
    Ok(IndexFormMatrix {
        basis,
        a,
        g: symmetric(g),
        phi_part,
        e_part,
    })
}

/// Action `½∫ g(γ̇ + εV̇, γ̇ + εV̇)` along `γ + εV` in the chart, with `V`
/// piecewise linear through `nodes`; three-point Gauss per cell.
pub fn action_along(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    nodes: &[DVector<f64>],
    eps: f64,
) -> Result<f64> {
    let m = curve.m;
    let h = curve.h();
    let mut total = 0.0;
    for e in 0..m {
        let dv = (&nodes[e + 1] - &nodes[e]) / h;
        for (s, w) in GAUSS3 {
            let t = (e as f64 + s) * h;
            let (x, v) = curve.eval(t);
            let val = &nodes[e] * (1.0 - s) + &nodes[e + 1] * s;
            let y = x + val * eps;
            let u = v + &dv * eps;
            let g = metric.eval(y.as_slice())?;
            total += 0.5 * w * h * bilinear(&g, u.as_slice(), u.as_slice());
        }
    }
    Ok(total)
}

/// Central second difference of the action in `ε`.
pub fn second_variation_fd(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    nodes: &[DVector<f64>],
    eps: f64,
) -> Result<f64> {
    let fp = action_along(metric, curve, nodes, eps)?;
    let f0 = action_along(metric, curve, nodes, 0.0)?;
    let fm = action_along(metric, curve, nodes, -eps)?;
    Ok((fp - 2.0 * f0 + fm) / (eps * eps))
}
