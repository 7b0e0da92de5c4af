//! Turns raw patient-level assessment timelines plus a declarative estimand
//! specification into derived time-to-event analysis datasets, estimates
//! treatment effects with nonparametric survival estimators, stress-tests
//! them with sensitivity analyses, and ships a trial simulator for studying
//! censoring-pattern phenomena under non-proportional hazards.
//!
//! The central idea is *occlusion*: any loss to further follow-up, or removal
//! of further collected data from analysis, without the event of interest.
//! Occlusion happens at the point the patient leaves the risk set, and that
//! point depends on the estimand. The derivation engine makes every such
//! decision explicit and auditable.

pub mod derive;
pub mod domain;
pub mod error;
pub mod estimators;
pub mod io;
pub mod report;
pub mod sensitivity;
pub mod sim;

pub use error::{Error, Result};
