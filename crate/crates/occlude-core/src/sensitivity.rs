//! Sensitivity analyses: interval re-dating of events and censorings,
//! target-time imputation, assessment-departure summaries, and dual
//! occlusion dating (trigger date vs actual withdrawal).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::derive::{derive_dataset_forced, DatasetAudit, DatingForce};
use crate::domain::{
    Continuity, DatingMode, Day, DerivedAnalysisRecord, EstimandSpec, Strategy, SubjectRecord,
};
use crate::error::{Error, Result};
use crate::estimators::{km_estimate, observations_by_arm, rmst};

// ---------------------------------------------------------------------------
// Interval re-dating
// ---------------------------------------------------------------------------

/// Re-date every record's time within its detection interval. Right restores
/// the detecting-assessment day, left dates at the day after the last prior
/// assessment, midpoint at the rounded middle of the interval. Records whose
/// times were observed exactly (no trace) are untouched. Status never
/// changes; only time_days moves.
pub fn redate(records: &[DerivedAnalysisRecord], mode: DatingMode) -> Vec<DerivedAnalysisRecord> {
    records
        .iter()
        .map(|r| {
            let mut out = r.clone();
            if let Some(trace) = r.trace {
                let day = trace.dated(mode);
                if day != r.time_days {
                    out.audit.push(format!(
                        "re-dated from day {} to day {day} ({mode:?} dating; interval ({}, {}])",
                        r.time_days,
                        trace.prior.unwrap_or(0),
                        trace.anchor
                    ));
                    if trace.prior.is_none() {
                        out.audit.push(
                            "no prior assessment: interval taken from day 0".to_string(),
                        );
                    }
                    out.time_days = day;
                }
            }
            out
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Target-time imputation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImputedSubjects {
    pub subjects: Vec<SubjectRecord>,
    pub notes: Vec<String>,
}

/// Replace every attended scheduled assessment's day with its protocol target
/// day. Unscheduled assessments are left unchanged (and noted); unattended
/// targets stay unattended. Errors if imputation breaks the strictly
/// increasing ordering of a stream (out-of-order attendance).
pub fn impute_target_times(subjects: &[SubjectRecord]) -> Result<ImputedSubjects> {
    let mut out = Vec::with_capacity(subjects.len());
    let mut notes = Vec::new();
    for s in subjects {
        let mut s2 = s.clone();
        for stream in &mut s2.streams {
            if stream.continuity != Continuity::DiscreteScheduled {
                continue;
            }
            for a in &mut stream.assessments {
                match a.target_index {
                    Some(idx) => {
                        let target = *stream.schedule.get(idx).ok_or_else(|| {
                            Error::Data(format!(
                                "subject {}: stream {}: target_index {idx} outside schedule",
                                s.subject_id, stream.component_id
                            ))
                        })?;
                        a.day = target;
                    }
                    None => notes.push(format!(
                        "subject {}: stream {}: unscheduled assessment at day {} left unchanged",
                        s.subject_id, stream.component_id, a.day
                    )),
                }
            }
            for w in stream.assessments.windows(2) {
                if w[1].day <= w[0].day {
                    return Err(Error::Data(format!(
                        "subject {}: stream {}: target-time imputation breaks assessment \
                         ordering (day {} then {})",
                        s.subject_id, stream.component_id, w[0].day, w[1].day
                    )));
                }
            }
        }
        out.push(s2);
    }
    Ok(ImputedSubjects { subjects: out, notes })
}

// ---------------------------------------------------------------------------
// Departure-from-target summaries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureStats {
    pub count: usize,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepartureRow {
    pub arm: String,
    pub component_id: String,
    pub stats: DepartureStats,
}

/// Linear-interpolation quantile (R type 7) of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p * (n - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[lo]
    }
}

fn stats_of(mut departures: Vec<f64>) -> DepartureStats {
    departures.sort_by(|a, b| a.total_cmp(b));
    let n = departures.len();
    let mean = departures.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        (departures.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    } else {
        0.0
    };
    DepartureStats {
        count: n,
        mean,
        sd,
        min: departures[0],
        q25: quantile(&departures, 0.25),
        median: quantile(&departures, 0.5),
        q75: quantile(&departures, 0.75),
        max: departures[n - 1],
    }
}

/// Distribution of signed (actual - target) days per arm and per stream, over
/// assessments that carry a target index. Rows come out sorted by
/// (arm, component_id).
pub fn departure_summary(subjects: &[SubjectRecord]) -> Vec<DepartureRow> {
    let mut groups: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for s in subjects {
        for stream in &s.streams {
            for a in &stream.assessments {
                if let Some(idx) = a.target_index {
                    if let Some(target) = stream.schedule.get(idx) {
                        groups
                            .entry((s.arm.clone(), stream.component_id.clone()))
                            .or_default()
                            .push((a.day - target) as f64);
                    }
                }
            }
        }
    }
    groups
        .into_iter()
        .map(|((arm, component_id), departures)| DepartureRow {
            arm,
            component_id,
            stats: stats_of(departures),
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Sensitivity report (shared by dual dating and re-dating comparisons)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmEstimates {
    pub n: usize,
    /// Kaplan-Meier survival at the landmark; None when the variant dataset
    /// contains competing statuses.
    pub km_at_landmark: Option<f64>,
    pub rmst: Option<f64>,
    pub rmst_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    pub audit: DatasetAudit,
    pub per_arm: BTreeMap<String, ArmEstimates>,
}

/// A subject whose exit differs from the primary variant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectDiff {
    pub variant: String,
    pub subject_id: String,
    pub primary_time: Day,
    pub primary_status: String,
    pub variant_time: Day,
    pub variant_status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub analysis_id: String,
    /// RMST horizon used for all variants (echoed prominently: it is part of
    /// the estimand).
    pub tau: Day,
    pub landmark: Day,
    /// Primary variant first; never empty.
    pub variants: Vec<VariantResult>,
    pub diffs: Vec<SubjectDiff>,
}

impl SensitivityReport {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }
}

fn status_label(r: &DerivedAnalysisRecord) -> String {
    match r.cause() {
        Some(cause) => format!("{}({})", r.status.kind(), cause),
        None => r.status.kind().to_string(),
    }
}

/// Largest tau usable across every arm of every variant dataset.
fn max_common_followup(
    variants: &[(String, Vec<DerivedAnalysisRecord>)],
    subjects: &[SubjectRecord],
) -> Result<Day> {
    let mut tau = Day::MAX;
    for (_, records) in variants {
        for (_, obs) in observations_by_arm(records, subjects)? {
            let arm_max = obs.iter().map(|o| o.time).max().unwrap_or(0);
            tau = tau.min(arm_max);
        }
    }
    Ok(if tau == Day::MAX { 0 } else { tau })
}

fn variant_result(
    name: &str,
    records: &[DerivedAnalysisRecord],
    subjects: &[SubjectRecord],
    tau: Day,
    landmark: Day,
) -> Result<VariantResult> {
    let mut per_arm = BTreeMap::new();
    for (arm, obs) in observations_by_arm(records, subjects)? {
        let entry = match km_estimate(&obs) {
            Ok(curve) => {
                let r = rmst(&curve, tau.min(curve.max_followed)).ok();
                ArmEstimates {
                    n: obs.len(),
                    km_at_landmark: Some(curve.survival_at(landmark)),
                    rmst: r.map(|r| r.estimate),
                    rmst_se: r.map(|r| r.standard_error()),
                }
            }
            Err(Error::CompetingStatusPresent) => ArmEstimates {
                n: obs.len(),
                km_at_landmark: None,
                rmst: None,
                rmst_se: None,
            },
            Err(e) => return Err(e),
        };
        per_arm.insert(arm, entry);
    }
    Ok(VariantResult {
        name: name.to_string(),
        audit: DatasetAudit::summarize(records),
        per_arm,
    })
}

/// Assemble a report from named variant datasets; the first is the primary.
pub fn build_report(
    analysis_id: &str,
    variants: Vec<(String, Vec<DerivedAnalysisRecord>)>,
    subjects: &[SubjectRecord],
    tau: Option<Day>,
    landmark: Option<Day>,
) -> Result<SensitivityReport> {
    if variants.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tau = match tau {
        Some(t) => t,
        None => max_common_followup(&variants, subjects)?,
    };
    let landmark = landmark.unwrap_or(tau);

    let mut results = Vec::new();
    for (name, records) in &variants {
        results.push(variant_result(name, records, subjects, tau, landmark)?);
    }

    let (_, primary) = &variants[0];
    let by_id: BTreeMap<&str, &DerivedAnalysisRecord> =
        primary.iter().map(|r| (r.subject_id.as_str(), r)).collect();
    let mut diffs = Vec::new();
    for (name, records) in variants.iter().skip(1) {
        for r in records {
            if let Some(p) = by_id.get(r.subject_id.as_str()) {
                if p.time_days != r.time_days || p.status != r.status {
                    diffs.push(SubjectDiff {
                        variant: name.clone(),
                        subject_id: r.subject_id.clone(),
                        primary_time: p.time_days,
                        primary_status: status_label(p),
                        variant_time: r.time_days,
                        variant_status: status_label(r),
                    });
                }
            }
        }
    }

    Ok(SensitivityReport {
        analysis_id: analysis_id.to_string(),
        tau,
        landmark,
        variants: results,
        diffs,
    })
}

/// Derive the dataset twice, dating occlusion (1) at the intercurrent event,
/// discarding later information, and (2) at the actual withdrawal, and report
/// per-subject diffs plus KM/RMST deltas against the primary (as-specified)
/// derivation. With no hypothetical or while-prior-to-occlusion assignments
/// the variants are identical and reported as such.
pub fn dual_occlusion_dating(
    subjects: &[SubjectRecord],
    spec: &EstimandSpec,
    tau: Option<Day>,
    landmark: Option<Day>,
) -> Result<SensitivityReport> {
    let has_target = spec.strategy_table.iter().any(|a| {
        matches!(
            a.strategy,
            Strategy::Hypothetical | Strategy::WhilePriorToOcclusion
        )
    });
    let (primary, _) = derive_dataset_forced(subjects, spec, DatingForce::AsSpecified)?;
    let (trigger, _) = derive_dataset_forced(subjects, spec, DatingForce::ForceTrigger)?;
    let (withdrawal, _) = derive_dataset_forced(subjects, spec, DatingForce::ForceWithdrawal)?;
    let mut report = build_report(
        &format!("{}_dual_occlusion_dating", spec.estimand_id),
        vec![
            ("as_specified".to_string(), primary),
            ("trigger_date".to_string(), trigger),
            ("actual_withdrawal".to_string(), withdrawal),
        ],
        subjects,
        tau,
        landmark,
    )?;
    if !has_target {
        report.diffs.clear();
    }
    Ok(report)
}
