//! Nonparametric and semiparametric estimation on derived datasets:
//! Kaplan-Meier, Aalen-Johansen cumulative incidence, log-rank test,
//! restricted mean survival time, and a two-arm Cox fit.
//!
//! All estimators are pure, single-threaded functions of their inputs;
//! callers may run arms or estimands concurrently.

mod cif;
mod cox;
mod km;
mod logrank;
mod rmst;

pub use cif::{cif_aalen_johansen, CifCurve};
pub use cox::{cox_fit, negative_log_partial_likelihood, CoxFit};
pub use km::{km_estimate, SurvivalCurve};
pub use logrank::{logrank_test, TestResult};
pub use rmst::{rmst, Rmst};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Day, DerivedAnalysisRecord, DerivedStatus, SubjectRecord};
use crate::error::{Error, Result};

/// Two-sided 97.5% standard normal quantile, for 95% intervals.
pub const Z_975: f64 = 1.959963984540054;

/// One analysis observation: exit time and how the subject exited.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Obs {
    pub time: Day,
    pub status: ObsStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObsStatus {
    Event(String),
    Censored,
    Competing(String),
}

impl Obs {
    pub fn event(time: Day, cause: &str) -> Self {
        Obs { time, status: ObsStatus::Event(cause.to_string()) }
    }

    pub fn censored(time: Day) -> Self {
        Obs { time, status: ObsStatus::Censored }
    }

    pub fn competing(time: Day, cause: &str) -> Self {
        Obs { time, status: ObsStatus::Competing(cause.to_string()) }
    }

    pub fn is_event(&self) -> bool {
        matches!(self.status, ObsStatus::Event(_))
    }

    pub fn is_competing(&self) -> bool {
        matches!(self.status, ObsStatus::Competing(_))
    }
}

impl From<&DerivedAnalysisRecord> for Obs {
    fn from(r: &DerivedAnalysisRecord) -> Self {
        let status = match &r.status {
            DerivedStatus::Event { cause } => ObsStatus::Event(cause.clone()),
            DerivedStatus::Censored { .. } => ObsStatus::Censored,
            DerivedStatus::Competing { cause } => ObsStatus::Competing(cause.clone()),
        };
        Obs { time: r.time_days, status }
    }
}

/// Group derived records into per-arm observation vectors, using the subject
/// list to resolve arms. Arms come out in deterministic order.
pub fn observations_by_arm(
    records: &[DerivedAnalysisRecord],
    subjects: &[SubjectRecord],
) -> Result<BTreeMap<String, Vec<Obs>>> {
    let arm_of: BTreeMap<&str, &str> = subjects
        .iter()
        .map(|s| (s.subject_id.as_str(), s.arm.as_str()))
        .collect();
    let mut out: BTreeMap<String, Vec<Obs>> = BTreeMap::new();
    for r in records {
        let arm = arm_of.get(r.subject_id.as_str()).ok_or_else(|| {
            Error::Data(format!("record subject {} not found in subject data", r.subject_id))
        })?;
        out.entry(arm.to_string()).or_default().push(Obs::from(r));
    }
    Ok(out)
}

/// Upper tail of the chi-squared distribution with 1 degree of freedom.
pub(crate) fn chi2_sf_1df(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    libm::erfc((x / 2.0).sqrt())
}

/// Standard normal survival function P(Z > z).
pub(crate) fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}

/// Pointwise interval for a survival probability on the log(-log) scale.
/// Degenerate estimates (0 or 1) collapse to themselves.
pub fn loglog_interval(s: f64, var: f64, z: f64) -> (f64, f64) {
    if !(s > 0.0 && s < 1.0) || var <= 0.0 {
        return (s, s);
    }
    let se_theta = var.sqrt() / (s * s.ln().abs());
    let lower = s.powf((z * se_theta).exp());
    let upper = s.powf((-z * se_theta).exp());
    (lower, upper)
}
