//! Every example runs to completion.

macro_rules! example {
    ($module:ident, $file:literal, $test:ident) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }

        #[test]
        fn $test() {
            $module::run_example().expect(concat!($file, " should run"));
        }
    };
}

example!(curvature, "curvature.rs", curvature_example_runs);
example!(
    shoot_geodesic,
    "shoot_geodesic.rs",
    shoot_geodesic_example_runs
);
example!(
    conjugate_points,
    "conjugate_points.rs",
    conjugate_points_example_runs
);
example!(
    index_form_kernel,
    "index_form_kernel.rs",
    index_form_kernel_example_runs
);
example!(
    transversality,
    "transversality.rs",
    transversality_example_runs
);
example!(
    hyperbolicity,
    "hyperbolicity.rs",
    hyperbolicity_example_runs
);
example!(
    stationary_counterexample,
    "stationary_counterexample.rs",
    stationary_counterexample_example_runs
);
example!(run_scenario, "run_scenario.rs", run_scenario_example_runs);
