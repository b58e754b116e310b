//! Scalar and operator-valued coefficient families with closed-form jets.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone)]
pub struct ScalarJet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl ScalarJet {
    pub fn zero(n: usize) -> Self {
        ScalarJet {
            value: 0.0,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        ScalarJet {
            value: c,
            ..ScalarJet::zero(n)
        }
    }
}

/// Quintic smoothstep `6u^5 - 15u^4 + 10u^3` on `[0, 1]`, clamped outside.
/// Returns value, first and second derivative.
pub fn smoothstep5(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0, 0.0)
    } else {
        let u2 = u * u;
        let u3 = u2 * u;
        (
            u3 * (10.0 - 15.0 * u + 6.0 * u2),
            30.0 * u2 * (1.0 - u) * (1.0 - u),
            60.0 * u * (1.0 - u) * (1.0 - 2.0 * u),
        )
    }
}

/// C² cutoff in the squared radius: `1 - smoothstep5(q)` with `q = |y|²/r²`.
/// Equal to 1 at the centre, 0 for `q >= 1`.
pub fn cutoff_sq(q: f64) -> (f64, f64, f64) {
    let (s, ds, dds) = smoothstep5(q);
    (1.0 - s, -ds, -dds)
}

/// Something that can produce a scalar jet at a point; used for fields built
/// at run time (tube bumps) rather than from a closed-form catalog entry.
pub trait ScalarSource: Send + Sync + fmt::Debug {
    fn jet(&self, x: &[f64]) -> ScalarJet;
}

/// Scalar coefficient families. Weights and centres apply to the leading
/// coordinates; trailing coordinates are ignored.
#[derive(Debug, Clone)]
pub enum ScalarField {
    Constant(f64),
    /// `c0 + Σ w_i (x_i - c_i)²`
    Quadratic {
        c0: f64,
        weights: Vec<f64>,
        center: Vec<f64>,
    },
    /// `c0 · exp(Σ w_i (x_i - c_i)²)`
    ExpQuadratic {
        c0: f64,
        weights: Vec<f64>,
        center: Vec<f64>,
    },
    /// `c0 + amp · cos(k·x + phase)`
    Cosine {
        c0: f64,
        amp: f64,
        freqs: Vec<f64>,
        phase: f64,
    },
    /// Compactly supported `amp · cutoff(|x - c|²/r²)`.
    Bump {
        amp: f64,
        radius: f64,
        center: Vec<f64>,
    },
    Sum(Vec<ScalarField>),
    Custom(Arc<dyn ScalarSource>),
}

impl ScalarField {
    pub fn jet(&self, x: &[f64]) -> ScalarJet {
        let n = x.len();
        match self {
            ScalarField::Constant(c) => ScalarJet::constant(n, *c),
            ScalarField::Quadratic {
                c0,
                weights,
                center,
            } => {
                let mut j = ScalarJet::constant(n, *c0);
                for (i, (w, c)) in weights.iter().zip(center).enumerate().take(n) {
                    let d = x[i] - c;
                    j.value += w * d * d;
                    j.grad[i] += 2.0 * w * d;
                    j.hess[(i, i)] += 2.0 * w;
                }
                j
            }
            ScalarField::ExpQuadratic {
                c0,
                weights,
                center,
            } => {
                let mut e = 0.0;
                let mut de = DVector::zeros(n);
                for (i, (w, c)) in weights.iter().zip(center).enumerate().take(n) {
                    let d = x[i] - c;
                    e += w * d * d;
                    de[i] = 2.0 * w * d;
                }
                let v = c0 * e.exp();
                let mut hess = &de * de.transpose() * v;
                for (i, w) in weights.iter().enumerate().take(n) {
                    hess[(i, i)] += 2.0 * w * v;
                }
                ScalarJet {
                    value: v,
                    grad: de * v,
                    hess,
                }
            }
            ScalarField::Cosine {
                c0,
                amp,
                freqs,
                phase,
            } => {
                let mut k = DVector::zeros(n);
                for (i, f) in freqs.iter().enumerate().take(n) {
                    k[i] = *f;
                }
                let arg = (0..n).map(|i| k[i] * x[i]).sum::<f64>() + phase;
                let (s, c) = arg.sin_cos();
                ScalarJet {
                    value: c0 + amp * c,
                    grad: &k * (-amp * s),
                    hess: &k * k.transpose() * (-amp * c),
                }
            }
            ScalarField::Bump {
                amp,
                radius,
                center,
            } => {
                let r2 = radius * radius;
                let mut d = DVector::zeros(n);
                for (i, c) in center.iter().enumerate().take(n) {
                    d[i] = x[i] - c;
                }
                let q = d.norm_squared() / r2;
                if q >= 1.0 {
                    return ScalarJet::zero(n);
                }
                let (c, dc, ddc) = cutoff_sq(q);
                let dq = &d * (2.0 / r2);
                let mut hess = &dq * dq.transpose() * ddc;
                for i in 0..center.len().min(n) {
                    hess[(i, i)] += dc * 2.0 / r2;
                }
                ScalarJet {
                    value: amp * c,
                    grad: dq * (amp * dc),
                    hess: hess * *amp,
                }
            }
            ScalarField::Sum(terms) => {
                let mut acc = ScalarJet::zero(n);
                for t in terms {
                    let j = t.jet(x);
                    acc.value += j.value;
                    acc.grad += j.grad;
                    acc.hess += j.hess;
                }
                acc
            }
            ScalarField::Custom(src) => src.jet(x),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.jet(x).value
    }

    /// Axis-aligned box outside of which the field vanishes identically, when
    /// it is compactly supported.
    pub fn support(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        match self {
            ScalarField::Bump { radius, center, .. } => Some((
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            )),
            _ => None,
        }
    }
}

/// Jet of a matrix-valued field: value plus first and second partials in every
/// chart coordinate.
#[derive(Debug, Clone)]
pub struct MatrixJet {
    pub value: DMatrix<f64>,
    pub d1: Vec<DMatrix<f64>>,
    pub d2: Vec<Vec<DMatrix<f64>>>,
}

impl MatrixJet {
    pub fn zeros(rows: usize, n: usize) -> Self {
        MatrixJet {
            value: DMatrix::zeros(rows, rows),
            d1: vec![DMatrix::zeros(rows, rows); n],
            d2: vec![vec![DMatrix::zeros(rows, rows); n]; n],
        }
    }

    pub fn scaled_constant(m: &DMatrix<f64>, s: &ScalarJet) -> Self {
        let n = s.grad.len();
        MatrixJet {
            value: m * s.value,
            d1: (0..n).map(|k| m * s.grad[k]).collect(),
            d2: (0..n)
                .map(|k| (0..n).map(|l| m * s.hess[(k, l)]).collect())
                .collect(),
        }
    }
}

/// Symmetric positive operator families on the spatial factor of a product
/// `Σ × ℝ`, in a frame orthonormal for the base metric.
#[derive(Debug, Clone)]
pub enum AlphaField {
    /// `f(x, s) · Id`
    ScaledIdentity {
        dim: usize,
        factor: ScalarField,
    },
    Constant(DMatrix<f64>),
    Diagonal(Vec<ScalarField>),
}

impl AlphaField {
    pub fn dim(&self) -> usize {
        match self {
            AlphaField::ScaledIdentity { dim, .. } => *dim,
            AlphaField::Constant(m) => m.nrows(),
            AlphaField::Diagonal(v) => v.len(),
        }
    }

    pub fn jet(&self, x: &[f64]) -> MatrixJet {
        let n = x.len();
        match self {
            AlphaField::ScaledIdentity { dim, factor } => {
                MatrixJet::scaled_constant(&DMatrix::identity(*dim, *dim), &factor.jet(x))
            }
            AlphaField::Constant(m) => MatrixJet {
                value: m.clone(),
                ..MatrixJet::zeros(m.nrows(), n)
            },
            AlphaField::Diagonal(fields) => {
                let k = fields.len();
                let mut out = MatrixJet::zeros(k, n);
                for (i, f) in fields.iter().enumerate() {
                    let j = f.jet(x);
                    out.value[(i, i)] = j.value;
                    for a in 0..n {
                        out.d1[a][(i, i)] = j.grad[a];
                        for b in 0..n {
                            out.d2[a][b][(i, i)] = j.hess[(a, b)];
                        }
                    }
                }
                out
            }
        }
    }
}
