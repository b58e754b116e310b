//! Piecewise Hermite interpolation on the uniform grid `t_i = i/m`.

use nalgebra::DVector;

/// Element index and local coordinate `s ∈ [0, 1]` of `t` on a grid of `m` cells.
pub fn locate(t: f64, m: usize) -> (usize, f64) {
    let u = (t * m as f64).clamp(0.0, m as f64);
    let i = (u.floor() as usize).min(m - 1);
    (i, u - i as f64)
}

/// Cubic Hermite from values `y` and derivatives `d` at both ends of a cell of
/// width `h`. Returns the interpolant and its derivative.
pub fn cubic(
    s: f64,
    h: f64,
    y0: &DVector<f64>,
    d0: &DVector<f64>,
    y1: &DVector<f64>,
    d1: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let s2 = s * s;
    let s3 = s2 * s;
    let (h00, h10, h01, h11) = (
        2.0 * s3 - 3.0 * s2 + 1.0,
        s3 - 2.0 * s2 + s,
        3.0 * s2 - 2.0 * s3,
        s3 - s2,
    );
    let (g00, g10, g01, g11) = (
        6.0 * s2 - 6.0 * s,
        3.0 * s2 - 4.0 * s + 1.0,
        6.0 * s - 6.0 * s2,
        3.0 * s2 - 2.0 * s,
    );
    (
        y0 * h00 + d0 * (h * h10) + y1 * h01 + d1 * (h * h11),
        (y0 * g00 + y1 * g01) / h + d0 * g10 + d1 * g11,
    )
}

/// Quintic Hermite from values, first and second derivatives at both ends.
/// Returns the interpolant and its derivative.
#[allow(clippy::too_many_arguments)]
pub fn quintic(
    s: f64,
    h: f64,
    y0: &DVector<f64>,
    d0: &DVector<f64>,
    a0: &DVector<f64>,
    y1: &DVector<f64>,
    d1: &DVector<f64>,
    a1: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let b0 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let b1 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let b2 = 0.5 * s2 - 1.5 * s3 + 1.5 * s4 - 0.5 * s5;
    let b3 = 0.5 * s3 - s4 + 0.5 * s5;
    let b4 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let b5 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let c0 = -30.0 * s2 + 60.0 * s3 - 30.0 * s4;
    let c1 = 1.0 - 18.0 * s2 + 32.0 * s3 - 15.0 * s4;
    let c2 = s - 4.5 * s2 + 6.0 * s3 - 2.5 * s4;
    let c3 = 1.5 * s2 - 4.0 * s3 + 2.5 * s4;
    let c4 = -12.0 * s2 + 28.0 * s3 - 15.0 * s4;
    let c5 = 30.0 * s2 - 60.0 * s3 + 30.0 * s4;
    let hh = h * h;
    (
        y0 * b0 + d0 * (h * b1) + a0 * (hh * b2) + a1 * (hh * b3) + d1 * (h * b4) + y1 * b5,
        (y0 * c0 + y1 * c5) / h + d0 * c1 + d1 * c4 + (a0 * c2 + a1 * c3) * h,
    )
}
