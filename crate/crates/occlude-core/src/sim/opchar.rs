//! Operating characteristics over a grid of administrative cutoffs: power,
//! mean estimates, and Monte-Carlo standard errors per cutoff, for studying
//! how censoring patterns and study termination move the results.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_cutoff, simulate_trial_uncut, CutoffRule, TrialScenario};
use crate::derive::derive_dataset;
use crate::domain::{Day, EstimandSpec};
use crate::error::{Error, Result};
use crate::estimators::{cox_fit, km_estimate, logrank_test, observations_by_arm, rmst, Z_975};

/// Analysis run at each cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    LogRank,
    Cox,
    Rmst { tau: Day },
}

impl Analysis {
    pub fn label(&self) -> String {
        match self {
            Analysis::LogRank => "log_rank".into(),
            Analysis::Cox => "cox".into(),
            Analysis::Rmst { tau } => format!("rmst_tau_{tau}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCharRow {
    pub cutoff_calendar_day: Day,
    pub n_reps: usize,
    /// Replicates where the analysis could not produce an estimate
    /// (e.g. monotone likelihood, tau beyond follow-up).
    pub n_failed: usize,
    /// Two-sided rejection fraction at alpha over successful replicates.
    pub rejection_rate: f64,
    pub rejection_mc_se: f64,
    /// Mean estimate: chi-square statistic (log-rank), hazard ratio (Cox),
    /// or restricted-mean difference (RMST).
    pub mean_estimate: f64,
    pub sd_estimate: f64,
    pub mean_mc_se: f64,
    /// Mean minus the scenario's analytic value; only defined for RMST,
    /// where the generative hazards give an exact restricted-mean difference.
    pub bias: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpCharTable {
    pub analysis: String,
    pub alpha: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub rows: Vec<OpCharRow>,
}

/// Minimal estimand for the scenario's single event process.
pub fn scenario_estimand(scenario: &TrialScenario) -> EstimandSpec {
    EstimandSpec::single_component("simulated", &scenario.event_stream, &scenario.event_cause)
}

/// Per-replicate analysis outcome at one cutoff.
#[derive(Debug, Clone, Copy)]
struct RepOutcome {
    estimate: f64,
    reject: bool,
}

fn analyze_once(
    scenario: &TrialScenario,
    spec: &EstimandSpec,
    subjects: &[crate::domain::SubjectRecord],
    analysis: Analysis,
    alpha: f64,
) -> Result<RepOutcome> {
    let (records, _) = derive_dataset(subjects, spec)?;
    let by_arm = observations_by_arm(&records, subjects)?;
    if by_arm.len() != 2 {
        return Err(Error::NotTwoArms { found: by_arm.len() });
    }
    // Arm order follows the scenario declaration (arm 0 = reference).
    let arm0 = &by_arm[&scenario.arms[0].name];
    let arm1 = &by_arm[&scenario.arms[1].name];

    match analysis {
        Analysis::LogRank => {
            let t = logrank_test(arm0, arm1)?;
            Ok(RepOutcome { estimate: t.statistic, reject: t.p_value < alpha })
        }
        Analysis::Cox => {
            let fit = cox_fit(arm0, arm1)?;
            Ok(RepOutcome { estimate: fit.hazard_ratio, reject: fit.p_value < alpha })
        }
        Analysis::Rmst { tau } => {
            let c0 = km_estimate(arm0)?;
            let c1 = km_estimate(arm1)?;
            let r0 = rmst(&c0, tau)?;
            let r1 = rmst(&c1, tau)?;
            let diff = r1.estimate - r0.estimate;
            let se = (r0.variance + r1.variance).sqrt();
            let reject = se > 0.0 && (diff / se).abs() > Z_975;
            Ok(RepOutcome { estimate: diff, reject })
        }
    }
}

/// Simulate `n_reps` trials and evaluate the analysis at every cutoff in the
/// grid. Replicates run concurrently under the seed-splitting contract;
/// aggregation is in fixed replicate order, so results are deterministic.
pub fn operating_characteristics(
    scenario: &TrialScenario,
    analysis: Analysis,
    cutoff_grid: &[Day],
    n_reps: usize,
    seed: u64,
) -> Result<OpCharTable> {
    if n_reps < 100 {
        return Err(Error::Scenario(format!(
            "operating characteristics need n_reps >= 100, got {n_reps}"
        )));
    }
    if cutoff_grid.is_empty() {
        return Err(Error::Scenario("cutoff grid must be nonempty".into()));
    }
    if scenario.arms.len() != 2 {
        return Err(Error::NotTwoArms { found: scenario.arms.len() });
    }
    scenario.validate()?;
    let alpha = 0.05;
    let spec = scenario_estimand(scenario);

    // outcomes[rep][cutoff_idx]
    let outcomes: Vec<Vec<Option<RepOutcome>>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let base = simulate_trial_uncut(scenario, seed, rep as u32)?;
            let mut per_cutoff = Vec::with_capacity(cutoff_grid.len());
            for &cut in cutoff_grid {
                let outcome = apply_cutoff(&base, &CutoffRule::CalendarDay(cut))
                    .and_then(|(subjects, _)| {
                        analyze_once(scenario, &spec, &subjects, analysis, alpha)
                    })
                    .ok();
                per_cutoff.push(outcome);
            }
            Ok(per_cutoff)
        })
        .collect::<Result<_>>()?;

    let true_value = match analysis {
        Analysis::Rmst { tau } => Some(
            scenario.arms[1].event.restricted_mean(tau as f64)
                - scenario.arms[0].event.restricted_mean(tau as f64),
        ),
        _ => None,
    };

    let mut rows = Vec::with_capacity(cutoff_grid.len());
    for (ci, &cut) in cutoff_grid.iter().enumerate() {
        let mut n_ok = 0usize;
        let mut n_reject = 0usize;
        let mut sum = 0.0_f64;
        for rep in &outcomes {
            if let Some(o) = rep[ci] {
                n_ok += 1;
                n_reject += o.reject as usize;
                sum += o.estimate;
            }
        }
        let mean = if n_ok > 0 { sum / n_ok as f64 } else { f64::NAN };
        let mut ss = 0.0_f64;
        for rep in &outcomes {
            if let Some(o) = rep[ci] {
                ss += (o.estimate - mean).powi(2);
            }
        }
        let sd = if n_ok > 1 { (ss / (n_ok - 1) as f64).sqrt() } else { 0.0 };
        let p = if n_ok > 0 { n_reject as f64 / n_ok as f64 } else { f64::NAN };
        rows.push(OpCharRow {
            cutoff_calendar_day: cut,
            n_reps: n_ok,
            n_failed: n_reps - n_ok,
            rejection_rate: p,
            rejection_mc_se: if n_ok > 0 { (p * (1.0 - p) / n_ok as f64).sqrt() } else { f64::NAN },
            mean_estimate: mean,
            sd_estimate: sd,
            mean_mc_se: if n_ok > 0 { sd / (n_ok as f64).sqrt() } else { f64::NAN },
            bias: true_value.map(|t| mean - t),
        });
    }

    Ok(OpCharTable { analysis: analysis.label(), alpha, n_reps, seed, rows })
}
