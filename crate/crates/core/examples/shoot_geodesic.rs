// Two-point boundary value problems by shooting, energy conservation and
// fourth-order convergence of the integrator.

use std::f64::consts::PI;

use geolab::geodesic::{integrate_geodesic, integrate_geodesic_fixed, shoot_bvp, ShootOptions};
use geolab::MetricFamily;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sphere = MetricFamily::round_sphere();
    let opts = ShootOptions {
        m: 64,
        tol: 1e-10,
        allow_equal: false,
    };
    let c = shoot_bvp(&sphere, &[PI / 2.0, 0.0], &[1.2, 1.8], &[-0.3, 1.8], opts)?;
    println!("sphere arc: v0 = {:?}", c.initial_velocity().as_slice());
    println!(
        "  energy {:.12}, drift {:.2e}",
        c.energy,
        c.max_energy_drift(&sphere)?
    );

    let mink = MetricFamily::minkowski(2);
    let c = shoot_bvp(&mink, &[0.0, 0.0], &[2.0, 0.5], &[1.0, 0.0], opts)?;
    println!(
        "minkowski: v0 = {:?}, energy {:.6} ({:?})",
        c.initial_velocity().as_slice(),
        c.energy,
        geolab::geodesic::CausalCharacter::of_energy(c.energy)
    );

    // step halving with fixed steps: successive differences fall by ~16
    let end = |m: usize| -> Result<f64, geolab::Error> {
        let c = integrate_geodesic_fixed(&sphere, &[PI / 2.0 - 0.2, 0.0], &[0.2, 2.0], m, 1)?;
        Ok(c.end()[0])
    };
    let (a, b, d) = (end(16)?, end(32)?, end(64)?);
    println!("  convergence ratio {:.2}", (a - b).abs() / (b - d).abs());

    let adaptive = integrate_geodesic(&sphere, &[PI / 2.0, 0.0], &[0.0, 2.0], 32)?;
    println!("  adaptive substeps {}", adaptive.substeps);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
