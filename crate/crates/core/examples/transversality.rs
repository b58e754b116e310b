// Perturbation classes against the kernel of a degenerate geodesic: the
// tube bump and its pairing, the surjectivity verdict, and the sweep that
// removes the degeneracy.

use std::f64::consts::PI;

use geolab::geodesic::integrate_geodesic;
use geolab::jacobi::{jacobi_solve, FieldAlong};
use geolab::perturbation::{
    break_degeneracy_sweep, bump_tensor, conformal_field, half_profile_integral,
    surjectivity_criterion, sweep_slope, transversality_pairing, BumpSpec, KProfile, SweepOptions,
};
use geolab::{MetricFamily, ScalarField};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sphere = MetricFamily::round_sphere();
    let c = integrate_geodesic(&sphere, &[PI / 2.0, 0.0], &[0.0, PI], 64)?;
    let v = jacobi_solve(&sphere, &c, &[0.0, 0.0], &[PI, 0.0])?;

    let spec = BumpSpec {
        interval: (0.3, 0.7),
        profile: KProfile::SinSquared { amp: 0.03 },
        tube_radius: 0.1,
        periodicity: None,
    };
    let h = bump_tensor(&c, &v, &spec)?;
    let p = transversality_pairing(&h, &sphere, &c, &v)?;
    let q = half_profile_integral(&c, spec.interval, &spec.profile);
    println!("bump pairing {p:.10}, half profile integral {q:.10}");

    let conf = conformal_field(
        ScalarField::Cosine {
            c0: 1.0,
            amp: -0.3,
            freqs: vec![1.0, 0.0],
            phase: 0.0,
        },
        &sphere,
    );
    let fields: [&dyn FieldAlong; 1] = [&v];
    let verdict = surjectivity_criterion(&fields, &[h.clone(), conf], &sphere, &c, 1e-6)?;
    println!("pairings {:?} -> {:?}", verdict.pairings[0], verdict.rows);

    let eps = [0.0, 0.005, 0.01, 0.02];
    let rows = break_degeneracy_sweep(&sphere, &c, &h, &eps, &SweepOptions::default());
    for r in &rows {
        println!(
            "eps {:+.3}: kernel {:?}, min|λ| {:?}",
            r.eps, r.kernel_dimension, r.min_abs_eigenvalue
        );
    }
    println!("fitted slope {:?}", sweep_slope(&rows));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
