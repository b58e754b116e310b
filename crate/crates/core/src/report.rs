//! Run reports: schema-versioned JSON and flat CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesic::{CausalCharacter, Periodicity};
use crate::hyperbolicity::HyperbolicityReport;
use crate::index_form::{FredholmReport, KernelReport};
use crate::jacobi::ConjugateReport;
use crate::perturbation::{PerturbationClass, SweepRow, VerdictMatrix};
use crate::scenario::Scenario;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeodesicSummary {
    pub m: usize,
    pub substeps: usize,
    pub energy: f64,
    pub causal: CausalCharacter,
    pub initial_velocity: Vec<f64>,
    pub endpoint: Vec<f64>,
    pub endpoint_residual: f64,
    pub energy_drift: f64,
    /// Shooting converged onto conjugate endpoints.
    pub conjugate_endpoints: bool,
    pub sigma_rel: Option<f64>,
    pub periodic: Option<Periodicity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexFormSummary {
    pub m: usize,
    pub dimension: usize,
    pub kernel: KernelReport,
    pub fredholm: Option<FredholmReport>,
    /// Cosine between each kernel field and its Jacobi reconstruction.
    pub jacobi_cosines: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInfo {
    pub description: String,
    pub class: PerturbationClass,
    pub interval: Option<(f64, f64)>,
    /// 0 for the kernel field itself, 1 or 2 for a periodic iterate sum.
    pub support_field: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassVerdict {
    pub class: PerturbationClass,
    pub candidates: Vec<CandidateInfo>,
    pub matrix: Option<VerdictMatrix>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub candidate: String,
    pub rows: Vec<SweepRow>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Ok,
    /// Completed with a recorded finding (e.g. conjugate endpoints).
    Finding,
    Skipped,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageNote {
    pub stage: String,
    pub status: StageStatus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Timing {
    pub stages: Vec<(String, f64)>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub artifact_version: String,
    pub seed: u64,
    pub scenario: Scenario,
    pub geodesic: Option<GeodesicSummary>,
    pub conjugate: Option<ConjugateReport>,
    pub index_form: Option<IndexFormSummary>,
    pub verdicts: Vec<ClassVerdict>,
    pub sweep: Option<SweepSummary>,
    pub hyperbolicity: Option<HyperbolicityReport>,
    pub stages: Vec<StageNote>,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        RunReport {
            schema_version: SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            scenario,
            geodesic: None,
            conjugate: None,
            index_form: None,
            verdicts: Vec::new(),
            sweep: None,
            hyperbolicity: None,
            stages: Vec::new(),
            timing: Timing::default(),
        }
    }

    pub fn note(&mut self, stage: &str, status: StageStatus, message: impl Into<String>) {
        self.stages.push(StageNote {
            stage: stage.into(),
            status,
            message: message.into(),
        });
    }

    pub fn stage(&self, stage: &str) -> Option<&StageNote> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn verdict(&self, class: PerturbationClass) -> Option<&ClassVerdict> {
        self.verdicts.iter().find(|v| v.class == class)
    }

    /// Copy with the timing fields cleared, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        RunReport {
            timing: Timing::default(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn verdict_csv(m: &VerdictMatrix) -> String {
    let mut s = String::from("kernel_index,candidate_index,pairing\n");
    for (i, row) in m.pairings.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            let _ = writeln!(s, "{i},{j},{}", fmt_f64(*p));
        }
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "eps,kernel_dimension,min_abs_eigenvalue,reshoot_residual,singular_endpoint,error\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            fmt_f64(r.eps),
            r.kernel_dimension
                .map(|d| d.to_string())
                .unwrap_or_default(),
            opt(r.min_abs_eigenvalue),
            opt(r.reshoot_residual),
            r.singular_endpoint,
            r.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        );
    }
    s
}

pub fn hyperbolicity_csv(h: &HyperbolicityReport) -> String {
    let mut s = String::from("n,sup_ratio,sup_ratio_inner\n");
    for r in &h.strips {
        let _ = writeln!(
            s,
            "{},{},{}",
            r.n,
            fmt_f64(r.sup_ratio),
            fmt_f64(r.sup_ratio_inner)
        );
    }
    s
}

pub fn conjugate_csv(c: &ConjugateReport) -> String {
    let mut s = String::from("t,multiplicity,sigma_rel\n");
    for e in &c.events {
        let _ = writeln!(
            s,
            "{},{},{}",
            fmt_f64(e.t),
            e.multiplicity,
            fmt_f64(e.sigma_rel)
        );
    }
    s
}

/// Whitespace-separated rows.
pub fn matrix_text(a: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| fmt_f64(a[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

fn write(dir: &Path, name: &str, body: &str, out: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    out.push(path);
    Ok(())
}

/// Writes `report.json`, or the CSV tables present in the report.
pub fn emit_report(report: &RunReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut out = Vec::new();
    match format {
        Format::Json => write(dir, "report.json", &report.to_json(), &mut out)?,
        Format::Csv => {
            if let Some(c) = &report.conjugate {
                write(dir, "conjugate.csv", &conjugate_csv(c), &mut out)?;
            }
            for v in &report.verdicts {
                if let Some(m) = &v.matrix {
                    let class = serde_json::to_value(v.class).expect("class serializes");
                    let name = format!("verdict-{}.csv", class.as_str().unwrap_or("class"));
                    write(dir, &name, &verdict_csv(m), &mut out)?;
                }
            }
            if let Some(s) = &report.sweep {
                write(dir, "sweep.csv", &sweep_csv(&s.rows), &mut out)?;
            }
            if let Some(h) = &report.hyperbolicity {
                write(dir, "hyperbolicity.csv", &hyperbolicity_csv(h), &mut out)?;
            }
        }
    }
    Ok(out)
}
