//! The scenario pipeline: shoot, conjugate points, index form, surjectivity
//! verdicts per perturbation class, degeneracy sweep and, for product
//! metrics, the hyperbolicity check. Stage failures are recorded in the
//! report; later stages that do not depend on the failed one still run.

use std::f64::consts::PI;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::ScalarField;
use crate::geodesic::{self, CausalCharacter, DiscretizedCurve, ShootOptions};
use crate::hyperbolicity::hyperbolicity_check;
use crate::index_form::{self, PathBasis};
use crate::jacobi::{self, FieldAlong, JacobiSolution};
use crate::metric::MetricFamily;
use crate::perturbation::{
    self, BumpSpec, KProfile, PerturbationClass, PerturbationField, RowVerdict, SweepOptions,
};
use crate::report::{
    CandidateInfo, ClassVerdict, GeodesicSummary, IndexFormSummary, RunReport, StageStatus,
    SweepSummary,
};
use crate::scenario::{MetricSpec, Scenario};

const SHOOT_TOL: f64 = 1e-10;
/// Relative singular-value threshold for conjugate multiplicity.
const CONJUGATE_TOL: f64 = 1e-6;
/// `‖V ∧ γ̇‖` threshold when choosing a bump interval.
const TRANSVERSE_TOL: f64 = 1e-3;

/// Command-line overrides applied on top of a scenario.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub m: Option<usize>,
    pub eps: Option<Vec<f64>>,
}

impl RunOptions {
    pub fn apply(&self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        if let Some(seed) = self.seed {
            s.perturbation.seed = seed;
        }
        if let Some(m) = self.m {
            s.grid.m = m;
        }
        if let Some(eps) = &self.eps {
            s.sweep.eps = eps.clone();
        }
        s
    }
}

/// Geodesic of a scenario: shooting when `q` is given (falling back to the
/// converged curve on conjugate endpoints), otherwise the initial-value
/// solution. Returns the curve and the singular-endpoint data if any.
pub fn scenario_geodesic(
    metric: &MetricFamily,
    scenario: &Scenario,
    m: usize,
) -> Result<(DiscretizedCurve, Option<f64>)> {
    let e = &scenario.endpoints;
    match &e.q {
        None => Ok((
            geodesic::integrate_geodesic(metric, &e.p, &e.v_guess, m)?,
            None,
        )),
        Some(q) => {
            let opts = ShootOptions {
                m,
                tol: SHOOT_TOL,
                allow_equal: e.allow_equal,
            };
            match geodesic::shoot_bvp(metric, &e.p, q, &e.v_guess, opts) {
                Ok(c) => Ok((c, None)),
                Err(Error::SingularEndpointJacobian {
                    velocity,
                    sigma_rel,
                    ..
                }) => Ok((
                    geodesic::integrate_geodesic(metric, &e.p, &velocity, m)?,
                    Some(sigma_rel),
                )),
                Err(e) => Err(e),
            }
        }
    }
}

/// Kernel of the index form with Jacobi reconstructions of each kernel field,
/// scaled to unit maximum norm.
pub struct KernelAnalysis {
    pub summary: IndexFormSummary,
    pub fields: Vec<JacobiSolution>,
}

pub fn analyze_kernel(
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    kernel_tol: f64,
) -> Result<KernelAnalysis> {
    let n = metric.dim();
    let m = curve.m;
    let fine = geodesic::integrate_geodesic(
        metric,
        curve.start().as_slice(),
        curve.initial_velocity().as_slice(),
        2 * m,
    )?;
    let gr = MetricFamily::flat(n);
    let coarse = index_form::assemble_index_form(metric, &gr, curve, PathBasis::new(m, n))?;
    let refined = index_form::assemble_index_form(metric, &gr, &fine, PathBasis::new(2 * m, n))?;
    let kernel = index_form::refined_kernel(&coarse, &refined, kernel_tol)?;
    let fredholm = index_form::fredholm_split_check(&coarse).ok();
    let mut fields = Vec::new();
    let mut cosines = Vec::new();
    for kf in &kernel.fields {
        let (sol, cos) = index_form::jacobi_reconstruction(metric, curve, &kf.node_vectors())?;
        let scale = sol.max_norm();
        fields.push(if scale > 0.0 {
            sol.scaled(1.0 / scale)
        } else {
            sol
        });
        cosines.push(cos);
    }
    Ok(KernelAnalysis {
        summary: IndexFormSummary {
            m,
            dimension: coarse.basis.dim(),
            kernel,
            fredholm,
            jacobi_cosines: cosines,
        },
        fields,
    })
}

fn bump_candidate(
    curve: &DiscretizedCurve,
    v: &JacobiSolution,
    scenario: &Scenario,
    class: PerturbationClass,
) -> Result<(PerturbationField, CandidateInfo)> {
    let p = &scenario.perturbation;
    let support = geodesic::support_interval(curve, v, TRANSVERSE_TOL, scenario.grid.spatial_tol)?;
    let interval = (support.a, support.b);
    let periodic = geodesic::self_intersections(curve, scenario.grid.spatial_tol).periodic;
    let field = match (support.field, periodic) {
        (0, _) | (_, None) => None,
        (tag, Some(per)) => {
            let (w1, w2) =
                jacobi::iterate_sum_fields(v, curve.m, per.period, per.k_star, per.t_star)?;
            Some(if tag == 1 { w1 } else { w2 })
        }
    };
    let prescribed: &dyn FieldAlong = match &field {
        Some(w) => w,
        None => v,
    };
    let h = match class {
        PerturbationClass::Split => {
            let n1 = scenario.metric.split_at().expect("validated split metric");
            perturbation::split_bump(
                curve,
                n1,
                prescribed,
                interval,
                (p.amp, p.amp),
                p.tube_radius,
            )?
        }
        _ => perturbation::bump_tensor(
            curve,
            prescribed,
            &BumpSpec {
                interval,
                profile: KProfile::SinSquared { amp: p.amp },
                tube_radius: p.tube_radius,
                periodicity: field.as_ref().and(periodic),
            },
        )?,
    };
    let info = CandidateInfo {
        description: h.meta.description.clone(),
        class,
        interval: Some(interval),
        support_field: Some(support.field),
    };
    Ok((h, info))
}

fn candidates(
    class: PerturbationClass,
    metric: &MetricFamily,
    curve: &DiscretizedCurve,
    kernel: &[JacobiSolution],
    scenario: &Scenario,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(PerturbationField, CandidateInfo)>> {
    let p = &scenario.perturbation;
    let info = |h: &PerturbationField| CandidateInfo {
        description: h.meta.description.clone(),
        class,
        interval: None,
        support_field: None,
    };
    let mid = curve.eval(0.5).0;
    let mut out = Vec::new();
    match class {
        PerturbationClass::General | PerturbationClass::Split => {
            for v in kernel {
                out.push(bump_candidate(curve, v, scenario, class)?);
            }
            if class == PerturbationClass::General {
                for _ in 0..p.random_candidates {
                    let h = perturbation::random_bump_sum(rng, mid.as_slice(), 0.5, 3);
                    out.push((h.clone(), info(&h)));
                }
            }
        }
        PerturbationClass::Conformal => {
            let psi = p
                .psi
                .as_ref()
                .map(|s| s.build())
                .unwrap_or(ScalarField::Bump {
                    amp: 1.0,
                    radius: 0.5,
                    center: mid.as_slice().to_vec(),
                });
            let h = perturbation::conformal_field(psi, metric);
            out.push((h.clone(), info(&h)));
        }
        PerturbationClass::Stationary => {
            let MetricSpec::Stationary { .. } = scenario.metric else {
                return Err(Error::InvalidParameters(
                    "stationary class needs a stationary metric".into(),
                ));
            };
            let n0 = metric.dim() - 1;
            let x0: Vec<f64> = curve.start().as_slice()[..n0].to_vec();
            for _ in 0..p.random_candidates.max(1) {
                let (_, h) = perturbation::random_stationary(rng, &x0);
                out.push((h.clone(), info(&h)));
            }
        }
    }
    Ok(out)
}

fn timed<T>(report: &mut RunReport, stage: &str, f: impl FnOnce(&mut RunReport) -> T) -> T {
    let t = Instant::now();
    let out = f(report);
    report
        .timing
        .stages
        .push((stage.to_string(), t.elapsed().as_secs_f64()));
    out
}

/// Last pipeline stage to run. `Hyperbolicity` runs that check alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Geodesic,
    Conjugate,
    IndexForm,
    Perturb,
    Sweep,
    Full,
    Hyperbolicity,
}

pub fn run_pipeline(scenario: &Scenario) -> Result<RunReport> {
    run_until(scenario, Stage::Full)
}

pub fn run_until(scenario: &Scenario, last: Stage) -> Result<RunReport> {
    scenario.validate()?;
    let only_hyperbolicity = last == Stage::Hyperbolicity;
    let wants = |s: Stage| !only_hyperbolicity && s <= last;
    let start = Instant::now();
    let mut report = RunReport::new(scenario.clone(), scenario.perturbation.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.perturbation.seed);
    let metric = scenario.metric.build()?;
    let m = scenario.grid.m;
    let grid = &scenario.grid;

    let curve = if !wants(Stage::Geodesic) {
        None
    } else {
        timed(&mut report, "shoot", |r| {
            match scenario_geodesic(&metric, scenario, m) {
                Ok((c, singular)) => {
                    let drift = c.max_energy_drift(&metric).unwrap_or(f64::NAN);
                    let residual = scenario
                        .endpoints
                        .q
                        .as_ref()
                        .map(|q| metric.domain.distance(c.end().as_slice(), q))
                        .unwrap_or(0.0);
                    r.geodesic = Some(GeodesicSummary {
                        m,
                        substeps: c.substeps,
                        energy: c.energy,
                        causal: CausalCharacter::of_energy(c.energy),
                        initial_velocity: c.initial_velocity().as_slice().to_vec(),
                        endpoint: c.end().as_slice().to_vec(),
                        endpoint_residual: residual,
                        energy_drift: drift,
                        conjugate_endpoints: singular.is_some(),
                        sigma_rel: singular,
                        periodic: geodesic::self_intersections(&c, grid.spatial_tol).periodic,
                    });
                    match singular {
                Some(s) => r.note(
                    "shoot",
                    StageStatus::Finding,
                    format!("endpoints are conjugate (relative sigma_min {s:e}); continuing on the converged curve"),
                ),
                None => r.note("shoot", StageStatus::Ok, "converged"),
            }
                    Some(c)
                }
                Err(e) => {
                    r.note("shoot", StageStatus::Failed, e.to_string());
                    None
                }
            }
        })
    };

    let mut kernel_fields: Vec<JacobiSolution> = Vec::new();
    if !wants(Stage::Conjugate) {
    } else if let Some(curve) = &curve {
        timed(
            &mut report,
            "conjugate",
            |r| match jacobi::conjugate_points(&metric, curve, CONJUGATE_TOL) {
                Ok(c) => {
                    r.note(
                        "conjugate",
                        StageStatus::Ok,
                        format!("{} event(s)", c.events.len()),
                    );
                    r.conjugate = Some(c);
                }
                Err(e) => r.note("conjugate", StageStatus::Failed, e.to_string()),
            },
        );
        if wants(Stage::IndexForm) {
            timed(&mut report, "index_form", |r| {
                match analyze_kernel(&metric, curve, grid.kernel_tol) {
                    Ok(k) => {
                        r.note(
                            "index_form",
                            StageStatus::Ok,
                            format!("kernel dimension {}", k.summary.kernel.dimension),
                        );
                        r.index_form = Some(k.summary);
                        kernel_fields = k.fields;
                    }
                    Err(e) => r.note("index_form", StageStatus::Failed, e.to_string()),
                }
            });
        }
    } else {
        for stage in ["conjugate", "index_form"] {
            report.note(stage, StageStatus::Skipped, "no geodesic");
        }
    }

    let mut sweep_candidate: Option<(PerturbationField, String)> = None;
    match (&curve, kernel_fields.is_empty()) {
        _ if !wants(Stage::Perturb) => {}
        (Some(curve), false) => timed(&mut report, "verdict", |r| {
            let refs: Vec<&dyn FieldAlong> =
                kernel_fields.iter().map(|j| j as &dyn FieldAlong).collect();
            for &class in &scenario.perturbation.classes {
                let cands =
                    match candidates(class, &metric, curve, &kernel_fields, scenario, &mut rng) {
                        Ok(c) => c,
                        Err(e) => {
                            r.verdicts.push(ClassVerdict {
                                class,
                                candidates: vec![],
                                matrix: None,
                                error: Some(e.to_string()),
                            });
                            continue;
                        }
                    };
                let fields: Vec<PerturbationField> = cands.iter().map(|c| c.0.clone()).collect();
                let result = perturbation::surjectivity_criterion(
                    &refs,
                    &fields,
                    &metric,
                    curve,
                    grid.quadrature_tol,
                );
                if let Ok(v) = &result {
                    if sweep_candidate.is_none()
                        && v.rows.iter().all(|r| *r == RowVerdict::Certified)
                    {
                        let best = (0..fields.len())
                            .max_by(|&a, &b| {
                                v.pairings[0][a]
                                    .abs()
                                    .partial_cmp(&v.pairings[0][b].abs())
                                    .unwrap()
                            })
                            .unwrap_or(0);
                        sweep_candidate =
                            Some((fields[best].clone(), cands[best].1.description.clone()));
                    }
                }
                r.verdicts.push(ClassVerdict {
                    class,
                    candidates: cands.into_iter().map(|c| c.1).collect(),
                    error: result.as_ref().err().map(|e| e.to_string()),
                    matrix: result.ok(),
                });
            }
            r.note(
                "verdict",
                StageStatus::Ok,
                format!("{} class(es)", r.verdicts.len()),
            );
        }),
        _ => report.note(
            "verdict",
            StageStatus::Skipped,
            "kernel is empty or unavailable",
        ),
    }

    match (&curve, &sweep_candidate, scenario.sweep.eps.is_empty()) {
        _ if !wants(Stage::Sweep) => {}
        (_, _, true) => report.note("sweep", StageStatus::Skipped, "no eps list"),
        (Some(curve), Some((h, name)), false) => timed(&mut report, "sweep", |r| {
            let opts = SweepOptions {
                m,
                kernel_tol: grid.kernel_tol,
                shoot_tol: SHOOT_TOL,
                allow_equal: scenario.endpoints.allow_equal,
            };
            let rows =
                perturbation::break_degeneracy_sweep(&metric, curve, h, &scenario.sweep.eps, &opts);
            let slope = perturbation::sweep_slope(&rows);
            r.note("sweep", StageStatus::Ok, format!("{} row(s)", rows.len()));
            r.sweep = Some(SweepSummary {
                candidate: name.clone(),
                rows,
                slope,
            });
        }),
        _ => report.note("sweep", StageStatus::Skipped, "no certified candidate"),
    }

    if last < Stage::Full {
    } else if let Some(hs) = &scenario.hyperbolicity {
        timed(&mut report, "hyperbolicity", |r| {
            let pair = scenario
                .metric
                .alpha_beta()
                .expect("validated g-alpha-beta metric");
            match hyperbolicity_check(&pair, &hs.grid(), hs.n_max) {
                Ok(h) => {
                    let msg = if h.criterion_satisfied_on_sample {
                        "criterion satisfied on the sample"
                    } else {
                        "supremum flagged unbounded"
                    };
                    r.note("hyperbolicity", StageStatus::Ok, msg);
                    r.hyperbolicity = Some(h);
                }
                Err(e) => r.note("hyperbolicity", StageStatus::Failed, e.to_string()),
            }
        });
    } else if only_hyperbolicity {
        report.note(
            "hyperbolicity",
            StageStatus::Skipped,
            "scenario has no hyperbolicity section",
        );
    }
    report.timing.total_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The degenerate vertical geodesic of `g₀ − β ds²` with
/// `β = 1 + 4π² |x|²` over flat `g₀`: the kernel of the index form, the
/// pairing against random stationary variations and against one general bump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub m: usize,
    pub seed: u64,
    pub kernel_dimension: usize,
    pub kernel_eigenvalue: f64,
    pub refinement_ratio: Option<f64>,
    /// Cosine between the kernel field and `(sin 2πt, 0)`.
    pub sine_cosine: f64,
    pub stationary_pairings: Vec<f64>,
    pub general_pairing: f64,
    pub general_expected: f64,
}

impl CounterexampleReport {
    pub fn max_stationary_pairing(&self) -> f64 {
        self.stationary_pairings
            .iter()
            .map(|p| p.abs())
            .fold(0.0, f64::max)
    }
}

pub fn counterexample_beta() -> ScalarField {
    ScalarField::Quadratic {
        c0: 1.0,
        weights: vec![4.0 * PI * PI],
        center: vec![0.0],
    }
}

pub fn counterexample(m: usize, seed: u64, samples: usize) -> Result<CounterexampleReport> {
    let g0 = MetricFamily::flat(1);
    let beta = counterexample_beta();
    let coarse = index_form::stationary_index_form(&g0, &beta, &[0.0], 1.0, m)?;
    let fine = index_form::stationary_index_form(&g0, &beta, &[0.0], 1.0, 2 * m)?;
    let kernel = index_form::refined_kernel(&coarse, &fine, 5e-3)?;
    let (eig, ratio, cos) = match kernel.fields.first() {
        Some(f) => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (i, v) in f.node_vectors().iter().enumerate() {
                let s = (2.0 * PI * i as f64 / m as f64).sin();
                dot += v[0] * s;
                na += v.norm_squared();
                nb += s * s;
            }
            (
                f.eigenvalue,
                f.refinement_ratio,
                (dot / (na * nb).sqrt()).abs(),
            )
        }
        None => (kernel.min_abs_eigenvalue, None, 0.0),
    };

    let metric = MetricFamily::stationary(g0, beta, vec![], 10.0);
    let curve = geodesic::integrate_geodesic(&metric, &[0.0, 0.0], &[0.0, 1.0], m)?;
    let v = jacobi::jacobi_solve(&metric, &curve, &[0.0, 0.0], &[2.0 * PI, 0.0])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stationary_pairings = (0..samples)
        .map(|_| {
            let (comp, _) = perturbation::random_stationary(&mut rng, &[0.0]);
            perturbation::stationary_family_pairing(&comp, &metric, &curve, &v).map(|p| p.pairing)
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = BumpSpec {
        interval: (0.05, 0.45),
        profile: KProfile::SinSquared { amp: 2.0 },
        tube_radius: 0.1,
        periodicity: None,
    };
    let h = perturbation::bump_tensor(&curve, &v, &spec)?;
    let general_pairing = perturbation::transversality_pairing(&h, &metric, &curve, &v)?;
    Ok(CounterexampleReport {
        m,
        seed,
        kernel_dimension: kernel.dimension,
        kernel_eigenvalue: eig,
        refinement_ratio: ratio,
        sine_cosine: cos,
        stationary_pairings,
        general_pairing,
        general_expected: perturbation::half_profile_integral(&curve, spec.interval, &spec.profile),
    })
}
