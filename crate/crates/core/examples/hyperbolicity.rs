// Sampled global-hyperbolicity criterion for `α ⊕ −β ds²` product metrics.

use std::f64::consts::PI;

use geolab::hyperbolicity::{
    hyperbolicity_check, lambda_lipschitz_property, AlphaBetaPair, SampleGrid, SigmaModel,
};
use geolab::{AlphaField, ScalarField};

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let circle = AlphaBetaPair::new(
        SigmaModel::Circle,
        AlphaField::ScaledIdentity {
            dim: 1,
            factor: ScalarField::Cosine {
                c0: 2.0,
                amp: 1.0,
                freqs: vec![1.0],
                phase: 0.0,
            },
        },
        ScalarField::Quadratic {
            c0: 1.0,
            weights: vec![0.0, 1.0],
            center: vec![0.0, 0.0],
        },
        vec![0.0],
    )?;
    let grid = SampleGrid {
        sigma_points: 33,
        s_points: 9,
        sigma_radius: PI,
    };
    let r = hyperbolicity_check(&circle, &grid, 4)?;
    println!(
        "compact base: satisfied = {}, unbounded = {}",
        r.criterion_satisfied_on_sample, r.unbounded_trend
    );

    let line = AlphaBetaPair::new(
        SigmaModel::Euclidean { dim: 1 },
        AlphaField::ScaledIdentity {
            dim: 1,
            factor: ScalarField::Constant(1.0),
        },
        ScalarField::ExpQuadratic {
            c0: 1.0,
            weights: vec![1.0],
            center: vec![0.0],
        },
        vec![0.0],
    )?;
    let grid = SampleGrid {
        sigma_points: 41,
        s_points: 5,
        sigma_radius: 4.0,
    };
    let r = hyperbolicity_check(&line, &grid, 3)?;
    for s in &r.strips {
        println!("  strip n = {}: sup ratio {:.3e}", s.n, s.sup_ratio);
    }
    println!(
        "exp(d²) beta: satisfied = {}, unbounded = {}",
        r.criterion_satisfied_on_sample, r.unbounded_trend
    );

    let lip = lambda_lipschitz_property(200, 1);
    println!(
        "least-eigenvalue Lipschitz bound: {} violations in {} pairs",
        lip.violations, lip.samples
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
