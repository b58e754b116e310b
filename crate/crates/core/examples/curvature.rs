// Christoffel symbols and sectional curvature from the built-in metric
// catalogue.

use geolab::{metric::bilinear, MetricFamily, ScalarField};

fn sectional(metric: &MetricFamily, x: &[f64], u: &[f64], v: &[f64]) -> Result<f64, geolab::Error> {
    let g = metric.eval(x)?;
    let r = metric.curvature(x)?.apply(u, v, v);
    let num = bilinear(&g, r.as_slice(), u);
    let den = bilinear(&g, u, u) * bilinear(&g, v, v) - bilinear(&g, u, v).powi(2);
    Ok(num / den)
}

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sphere = MetricFamily::round_sphere();
    let x = [1.0, 0.3];
    let gam = sphere.christoffel(&x)?;
    println!("sphere at {x:?}");
    println!(
        "  Γ^θ_φφ = {:+.6}  (expect -sinθ cosθ = {:+.6})",
        gam.get(0, 1, 1),
        -x[0].sin() * x[0].cos()
    );
    println!(
        "  Γ^φ_θφ = {:+.6}  (expect cotθ = {:+.6})",
        gam.get(1, 0, 1),
        1.0 / x[0].tan()
    );
    let k = sectional(&sphere, &x, &[1.0, 0.0], &[0.0, 1.0])?;
    println!("  sectional curvature {k:.10}");
    assert!((k - 1.0).abs() < 1e-8);

    // e^{2u} scaling of the plane: K = -e^{-2u} Δu, here u = x²+y² so K = -4e^{-2u}
    let psi = ScalarField::ExpQuadratic {
        c0: 1.0,
        weights: vec![2.0, 2.0],
        center: vec![0.0, 0.0],
    };
    let conf = MetricFamily::conformal(psi, MetricFamily::flat(2));
    let y = [0.3, -0.2];
    let u: f64 = y.iter().map(|t| t * t).sum();
    let k = sectional(&conf, &y, &[1.0, 0.0], &[0.0, 1.0])?;
    println!(
        "conformal plane at {y:?}: K = {k:.8}, closed form {:.8}",
        -4.0 * (-2.0 * u).exp()
    );
    assert!((k + 4.0 * (-2.0 * u).exp()).abs() < 1e-6);

    let cyl = MetricFamily::lorentz_cylinder();
    println!("lorentz cylinder index {}", cyl.index(&[0.0, 1.0, 0.0])?);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
