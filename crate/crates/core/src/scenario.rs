//! Scenario files: TOML declarations of a metric, endpoints, grid and
//! perturbation settings, validated before any numerics run.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{AlphaField, ScalarField};
use crate::hyperbolicity::{AlphaBetaPair, SampleGrid, SigmaModel};
use crate::metric::MetricFamily;
use crate::perturbation::PerturbationClass;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarSpec {
    Constant {
        value: f64,
    },
    Quadratic {
        c0: f64,
        weights: Vec<f64>,
        center: Vec<f64>,
    },
    ExpQuadratic {
        c0: f64,
        weights: Vec<f64>,
        center: Vec<f64>,
    },
    Cosine {
        c0: f64,
        amp: f64,
        freqs: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    Bump {
        amp: f64,
        radius: f64,
        center: Vec<f64>,
    },
    Sum {
        terms: Vec<ScalarSpec>,
    },
}

impl ScalarSpec {
    pub fn build(&self) -> ScalarField {
        match self {
            ScalarSpec::Constant { value } => ScalarField::Constant(*value),
            ScalarSpec::Quadratic {
                c0,
                weights,
                center,
            } => ScalarField::Quadratic {
                c0: *c0,
                weights: weights.clone(),
                center: center.clone(),
            },
            ScalarSpec::ExpQuadratic {
                c0,
                weights,
                center,
            } => ScalarField::ExpQuadratic {
                c0: *c0,
                weights: weights.clone(),
                center: center.clone(),
            },
            ScalarSpec::Cosine {
                c0,
                amp,
                freqs,
                phase,
            } => ScalarField::Cosine {
                c0: *c0,
                amp: *amp,
                freqs: freqs.clone(),
                phase: *phase,
            },
            ScalarSpec::Bump {
                amp,
                radius,
                center,
            } => ScalarField::Bump {
                amp: *amp,
                radius: *radius,
                center: center.clone(),
            },
            ScalarSpec::Sum { terms } => {
                ScalarField::Sum(terms.iter().map(|t| t.build()).collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaSpec {
    ScaledIdentity { factor: ScalarSpec },
    Constant { rows: Vec<Vec<f64>> },
    Diagonal { entries: Vec<ScalarSpec> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricSpec {
    Flat {
        dim: usize,
    },
    Minkowski {
        dim: usize,
    },
    RoundSphere,
    LorentzCylinder,
    SplitProduct {
        first: Box<MetricSpec>,
        second: Box<MetricSpec>,
    },
    Stationary {
        base: Box<MetricSpec>,
        beta: ScalarSpec,
        #[serde(default)]
        delta: Vec<ScalarSpec>,
        s_max: f64,
    },
    Conformal {
        psi: ScalarSpec,
        base: Box<MetricSpec>,
    },
    GAlphaBeta {
        sigma: SigmaModel,
        alpha: AlphaSpec,
        beta: ScalarSpec,
        base_point: Vec<f64>,
    },
}

impl MetricSpec {
    pub fn build(&self) -> Result<MetricFamily> {
        Ok(match self {
            MetricSpec::Flat { dim } => MetricFamily::flat(*dim),
            MetricSpec::Minkowski { dim } => MetricFamily::minkowski(*dim),
            MetricSpec::RoundSphere => MetricFamily::round_sphere(),
            MetricSpec::LorentzCylinder => MetricFamily::lorentz_cylinder(),
            MetricSpec::SplitProduct { first, second } => {
                MetricFamily::split_product(first.build()?, second.build()?)
            }
            MetricSpec::Stationary {
                base,
                beta,
                delta,
                s_max,
            } => MetricFamily::stationary(
                base.build()?,
                beta.build(),
                delta.iter().map(|d| d.build()).collect(),
                *s_max,
            ),
            MetricSpec::Conformal { psi, base } => {
                MetricFamily::conformal(psi.build(), base.build()?)
            }
            MetricSpec::GAlphaBeta { .. } => {
                self.alpha_beta().expect("g-alpha-beta spec").build()?
            }
        })
    }

    /// The product structure of a `g-alpha-beta` declaration.
    pub fn alpha_beta(&self) -> Option<AlphaBetaPair> {
        let MetricSpec::GAlphaBeta {
            sigma,
            alpha,
            beta,
            base_point,
        } = self
        else {
            return None;
        };
        let alpha = match alpha {
            AlphaSpec::ScaledIdentity { factor } => AlphaField::ScaledIdentity {
                dim: sigma.dim(),
                factor: factor.build(),
            },
            AlphaSpec::Constant { rows } => {
                let k = rows.len();
                AlphaField::Constant(DMatrix::from_fn(k, k, |i, j| {
                    rows[i].get(j).copied().unwrap_or(f64::NAN)
                }))
            }
            AlphaSpec::Diagonal { entries } => {
                AlphaField::Diagonal(entries.iter().map(|e| e.build()).collect())
            }
        };
        AlphaBetaPair::new(*sigma, alpha, beta.build(), base_point.clone()).ok()
    }

    /// Number of leading coordinates in the first factor of a split product.
    pub fn split_at(&self) -> Option<usize> {
        match self {
            MetricSpec::SplitProduct { first, .. } => first.build().ok().map(|m| m.dim()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Endpoints {
    pub p: Vec<f64>,
    /// Target endpoint. When absent the geodesic is the initial-value
    /// solution from `p` with `v_guess`.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
    pub v_guess: Vec<f64>,
    #[serde(default)]
    pub allow_equal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub m: usize,
    pub kernel_tol: f64,
    pub spatial_tol: f64,
    pub quadrature_tol: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            m: 64,
            kernel_tol: crate::index_form::DEFAULT_KERNEL_TOL,
            spatial_tol: 1e-6,
            quadrature_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSpec {
    /// Classes to run the surjectivity test for, each separately.
    pub classes: Vec<PerturbationClass>,
    /// Seeded random candidates added per class on top of the constructed ones.
    pub random_candidates: usize,
    pub seed: u64,
    pub tube_radius: f64,
    pub amp: f64,
    /// Conformal factor for the conformal class.
    pub psi: Option<ScalarSpec>,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec {
            classes: vec![PerturbationClass::General],
            random_candidates: 0,
            seed: 0,
            tube_radius: 0.1,
            amp: 1.0,
            psi: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperbolicitySpec {
    pub sigma_points: usize,
    pub s_points: usize,
    pub sigma_radius: f64,
    pub n_max: usize,
}

impl Default for HyperbolicitySpec {
    fn default() -> Self {
        HyperbolicitySpec {
            sigma_points: 41,
            s_points: 21,
            sigma_radius: 8.0,
            n_max: 4,
        }
    }
}

impl HyperbolicitySpec {
    pub fn grid(&self) -> SampleGrid {
        SampleGrid {
            sigma_points: self.sigma_points,
            s_points: self.s_points,
            sigma_radius: self.sigma_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub metric: MetricSpec,
    pub endpoints: Endpoints,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub hyperbolicity: Option<HyperbolicitySpec>,
    #[serde(default)]
    pub outputs: OutputSpec,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, column)
}

fn invalid(field: &str, message: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(Error::Parse {
                line: 1,
                column: 1,
                message: "empty scenario".into(),
            });
        }
        let sc: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| line_column(text, s.start))
                .unwrap_or((1, 1));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty"));
        }
        let metric = self
            .metric
            .build()
            .map_err(|e| invalid("metric", e.to_string()))?;
        if let MetricSpec::GAlphaBeta { .. } = self.metric {
            if self.metric.alpha_beta().is_none() {
                return Err(invalid(
                    "metric",
                    "alpha, sigma and base_point dimensions disagree",
                ));
            }
        }
        let n = metric.dim();
        let e = &self.endpoints;
        if e.p.len() != n {
            return Err(invalid("endpoints.p", format!("expected {n} coordinates")));
        }
        if e.v_guess.len() != n {
            return Err(invalid(
                "endpoints.v_guess",
                format!("expected {n} coordinates"),
            ));
        }
        if let Some(q) = &e.q {
            if q.len() != n {
                return Err(invalid("endpoints.q", format!("expected {n} coordinates")));
            }
            if metric.domain.distance(&e.p, q) == 0.0 && !e.allow_equal {
                return Err(invalid("endpoints", "p and q coincide; set allow_equal"));
            }
        }
        if !metric.domain.contains(&e.p) {
            return Err(invalid("endpoints.p", "outside the chart domain"));
        }
        let g = &self.grid;
        if g.m < crate::geodesic::MIN_STEPS {
            return Err(invalid(
                "grid.m",
                format!("must be at least {}", crate::geodesic::MIN_STEPS),
            ));
        }
        for (name, v) in [
            ("grid.kernel_tol", g.kernel_tol),
            ("grid.spatial_tol", g.spatial_tol),
            ("grid.quadrature_tol", g.quadrature_tol),
            ("perturbation.tube_radius", self.perturbation.tube_radius),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be positive"));
            }
        }
        // TOML integers are signed 64-bit
        if self.perturbation.seed > i64::MAX as u64 {
            return Err(invalid("perturbation.seed", "must not exceed 2^63 - 1"));
        }
        if self.sweep.eps.iter().any(|e| !e.is_finite()) {
            return Err(invalid("sweep.eps", "entries must be finite"));
        }
        if self.hyperbolicity.is_some() && self.metric.alpha_beta().is_none() {
            return Err(invalid("hyperbolicity", "requires a g-alpha-beta metric"));
        }
        if self
            .perturbation
            .classes
            .contains(&PerturbationClass::Split)
            && self.metric.split_at().is_none()
        {
            return Err(invalid(
                "perturbation.classes",
                "split class requires a split-product metric",
            ));
        }
        Ok(())
    }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text)
}

/// Scenario files (`*.toml`) in `dir`, sorted by file name.
pub fn list_scenarios(dir: &Path) -> Result<Vec<(String, std::path::PathBuf)>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == "toml") {
            let name = path
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            out.push((name, path));
        }
    }
    out.sort();
    Ok(out)
}

/// Directory of the scenarios shipped with the crate.
pub fn shipped_dir() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPHERE: &str = r#"
name = "s"
[metric]
kind = "round-sphere"
[endpoints]
p = [1.5707963267948966, 0.0]
q = [1.5707963267948966, 2.0]
v_guess = [0.0, 2.0]
"#;

    #[test]
    fn minimal_scenario_gets_defaults() {
        let s = Scenario::from_toml(SPHERE).unwrap();
        assert_eq!(s.grid.m, 64);
        assert_eq!(s.perturbation.classes, vec![PerturbationClass::General]);
        let back = Scenario::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn empty_and_malformed_files_are_parse_errors() {
        assert!(matches!(
            Scenario::from_toml(""),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad = SPHERE.replace("v_guess = [0.0, 2.0]", "v_guess = [0.0, 2.0");
        assert!(matches!(
            Scenario::from_toml(&bad),
            Err(Error::Parse { .. })
        ));
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = SPHERE.replace("[endpoints]", "[endpoints]\nspeed = 3");
        match Scenario::from_toml(&bad) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 6);
                assert!(message.contains("speed"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation_names_the_field() {
        let same = SPHERE.replace(
            "q = [1.5707963267948966, 2.0]",
            "q = [1.5707963267948966, 0.0]",
        );
        assert!(matches!(
            Scenario::from_toml(&same),
            Err(Error::Validation { field, .. }) if field == "endpoints"
        ));
        let allowed = same.replace("v_guess", "allow_equal = true\nv_guess");
        assert!(Scenario::from_toml(&allowed).is_ok());
        let short = SPHERE.replace("p = [1.5707963267948966, 0.0]", "p = [1.0]");
        assert!(matches!(
            Scenario::from_toml(&short),
            Err(Error::Validation { field, .. }) if field == "endpoints.p"
        ));
        let neg = format!("{SPHERE}\n[grid]\nkernel_tol = -1.0\n");
        assert!(matches!(
            Scenario::from_toml(&neg),
            Err(Error::Validation { field, .. }) if field == "grid.kernel_tol"
        ));
    }

    #[test]
    fn nested_metric_declarations_build() {
        let text = r#"
name = "st"
[metric]
kind = "stationary"
s_max = 10.0
base = { kind = "flat", dim = 1 }
beta = { kind = "quadratic", c0 = 1.0, weights = [39.47841760435743], center = [0.0] }
[endpoints]
p = [0.0, 0.0]
q = [0.0, 1.0]
v_guess = [0.0, 1.0]
"#;
        let s = Scenario::from_toml(text).unwrap();
        assert_eq!(s.metric.build().unwrap().dim(), 2);
    }
}
