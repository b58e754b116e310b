// Conjugate points from the Jacobi endpoint map: the half equator of the
// sphere, and a null geodesic of the Lorentzian cylinder compared with its
// conformal rescaling.

use std::f64::consts::PI;

use geolab::geodesic::integrate_geodesic;
use geolab::jacobi::{conformal_conjugate_compare, conjugate_points, jacobi_solve, FieldAlong};
use geolab::{MetricFamily, ScalarField};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sphere = MetricFamily::round_sphere();
    let c = integrate_geodesic(&sphere, &[PI / 2.0, 0.0], &[0.0, 2.0 * PI], 128)?;
    let r = conjugate_points(&sphere, &c, 1e-6)?;
    for e in &r.events {
        println!(
            "full equator: conjugate at t = {:.10} (multiplicity {})",
            e.t, e.multiplicity
        );
    }

    let j = jacobi_solve(&sphere, &c, &[0.0, 0.0], &[1.0, 0.0])?;
    println!(
        "J(0.5) = {:?}  (sin 2πt / 2π vanishes at t = 1/2)",
        j.value(0.5).as_slice()
    );

    let cyl = MetricFamily::lorentz_cylinder();
    for (k, phase) in [0.0, 0.7, 1.9].into_iter().enumerate() {
        let psi = ScalarField::Cosine {
            c0: 1.5,
            amp: 0.4,
            freqs: vec![0.3, 1.0, 0.5],
            phase,
        };
        let cmp = conformal_conjugate_compare(
            &cyl,
            &psi,
            &[0.0, PI / 2.0, 0.0],
            &[PI, 0.0, PI],
            64,
            1e-6,
        )?;
        println!(
            "psi #{k}: conjugate image mismatch {:.2e}",
            cmp.max_mismatch
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
