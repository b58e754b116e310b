// The vertical geodesic of `dx² − (1 + 4π²x²) ds²` is degenerate, and no
// stationary variation can see its kernel; an s-dependent bump can.

use geolab::pipeline::counterexample;

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let r = counterexample(128, 0, 20)?;
    println!("kernel dimension       {}", r.kernel_dimension);
    println!("kernel eigenvalue      {:.3e}", r.kernel_eigenvalue);
    println!("m -> 2m ratio          {:?}", r.refinement_ratio);
    println!("cosine to (sin 2πt, 0) {:.8}", r.sine_cosine);
    println!(
        "max stationary pairing {:.2e} over {} draws",
        r.max_stationary_pairing(),
        r.stationary_pairings.len()
    );
    println!(
        "general bump pairing   {:.8} (expected {:.8})",
        r.general_pairing, r.general_expected
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
