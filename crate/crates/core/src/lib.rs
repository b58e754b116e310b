//! Numerical laboratory for fixed-endpoint geodesics on semi-Riemannian
//! charts: shooting, Jacobi fields and conjugate points, a finite-element
//! index form, metric perturbations and their transversality pairing, and
//! a sampled global-hyperbolicity check for product metrics.

pub mod domain;
pub mod error;
pub mod fields;
pub mod geodesic;
pub mod hermite;
pub mod hyperbolicity;
pub mod index_form;
pub mod jacobi;
pub mod metric;
pub mod perturbation;
pub mod pipeline;
pub mod report;
pub mod scenario;

pub use domain::BoxDomain;
pub use error::{Error, Result};
pub use fields::{AlphaField, ScalarField, ScalarJet};
pub use metric::{ChristoffelData, CurvatureData, MetricFamily, MetricJet, MetricKind};
