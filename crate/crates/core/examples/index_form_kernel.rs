// Finite-element index form: the kernel on the half equator, its O(m⁻²)
// eigenvalue, the Jacobi reconstruction and the Fredholm split.

use std::f64::consts::PI;

use geolab::geodesic::integrate_geodesic;
use geolab::index_form::{
    assemble_index_form, fredholm_split_check, jacobi_reconstruction, kernel, refined_kernel,
    PathBasis,
};
use geolab::MetricFamily;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let sphere = MetricFamily::round_sphere();
    let flat = MetricFamily::flat(2);
    let mut prev = None;
    for m in [32, 64, 128] {
        let c = integrate_geodesic(&sphere, &[PI / 2.0, 0.0], &[0.0, PI], m)?;
        let a = assemble_index_form(&sphere, &flat, &c, PathBasis::new(m, 2))?;
        let k = kernel(&a, 1e-2)?;
        let ratio = prev.map(|p: f64| p / k.min_abs_eigenvalue);
        println!(
            "m = {m:3}: kernel dim {}, min|λ| {:.3e}, ratio {:?}",
            k.dimension, k.min_abs_eigenvalue, ratio
        );
        prev = Some(k.min_abs_eigenvalue);
    }

    let c = integrate_geodesic(&sphere, &[PI / 2.0, 0.0], &[0.0, PI], 64)?;
    let fine = integrate_geodesic(&sphere, &[PI / 2.0, 0.0], &[0.0, PI], 128)?;
    let a = assemble_index_form(&sphere, &flat, &c, PathBasis::new(64, 2))?;
    let b = assemble_index_form(&sphere, &flat, &fine, PathBasis::new(128, 2))?;
    let k = refined_kernel(&a, &b, 1e-2)?;
    let (_, cosine) = jacobi_reconstruction(&sphere, &c, &k.fields[0].node_vectors())?;
    println!(
        "refined kernel dim {}, Jacobi reconstruction cosine {cosine:.8}",
        k.dimension
    );

    let f = fredholm_split_check(&a)?;
    println!(
        "Fredholm split residual {:.1e}, decay exponent {:?}",
        f.split_residual, f.decay_exponent
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
