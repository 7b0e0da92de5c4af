//! Plain-text report rendering: aligned curve tables, analysis summaries,
//! validation findings, sensitivity comparisons, and operating-characteristic
//! tables. Text reports carry the estimand id, the strategy table, and the
//! censor-reason breakdown so occlusion decisions can be reconstructed
//! without reading code.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::derive::DatasetAudit;
use crate::domain::{Day, EstimandSpec, Finding, Violation};
use crate::error::Result;
use crate::estimators::{
    cif_aalen_johansen, cox_fit, km_estimate, logrank_test, loglog_interval, rmst, CifCurve,
    CoxFit, Obs, Rmst, SurvivalCurve, TestResult, Z_975,
};
use crate::sensitivity::SensitivityReport;
use crate::sim::OpCharTable;
use crate::Error;

// ---------------------------------------------------------------------------
// Curve tables
// ---------------------------------------------------------------------------

/// Plot-ready aligned table: time, at-risk, events, estimate, lower, upper.
/// Intervals are normal-approximation 95% on the log(-log) scale.
pub fn survival_curve_table(curve: &SurvivalCurve) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>7} {:>10} {:>10} {:>10}",
        "time", "at_risk", "events", "estimate", "lower", "upper"
    );
    let _ = writeln!(
        out,
        "{:>8} {:>8} {:>7} {:>10.6} {:>10.6} {:>10.6}",
        0, curve.n, 0, 1.0, 1.0, 1.0
    );
    for i in 0..curve.jump_times.len() {
        let (lo, hi) = loglog_interval(curve.estimates[i], curve.variance[i], Z_975);
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>7} {:>10.6} {:>10.6} {:>10.6}",
            curve.jump_times[i], curve.at_risk[i], curve.n_events[i], curve.estimates[i], lo, hi
        );
    }
    out
}

pub fn cif_table(curve: &CifCurve) -> String {
    let mut out = String::new();
    for (k, cause) in curve.causes.iter().enumerate() {
        let _ = writeln!(out, "cause: {cause}");
        let _ = writeln!(
            out,
            "{:>8} {:>8} {:>10} {:>10} {:>10}",
            "time", "at_risk", "incidence", "lower", "upper"
        );
        for j in 0..curve.jump_times.len() {
            let est = curve.incidence[k][j];
            let se = curve.variance[k][j].sqrt();
            let lo = (est - Z_975 * se).max(0.0);
            let hi = (est + Z_975 * se).min(1.0);
            let _ = writeln!(
                out,
                "{:>8} {:>8} {:>10.6} {:>10.6} {:>10.6}",
                curve.jump_times[j], curve.at_risk[j], est, lo, hi
            );
        }
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// Analysis report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmAnalysis {
    pub arm: String,
    pub n: usize,
    pub n_events: usize,
    pub curve: Option<SurvivalCurve>,
    pub rmst: Option<Rmst>,
}

/// Full analysis of one derived dataset: per-arm curves and RMST, two-arm
/// tests when exactly two arms are present, CIF when competing statuses are.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub estimand_id: String,
    /// RMST horizon. Required input for restricted means; echoed prominently
    /// because the choice is part of the estimand.
    pub tau: Option<Day>,
    pub arms: Vec<ArmAnalysis>,
    pub log_rank: Option<TestResult>,
    pub cox: Option<CoxFit>,
    pub cif: Option<CifPerArm>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CifPerArm {
    pub arms: Vec<(String, CifCurve)>,
}

/// Run the full analysis suite over per-arm observations. With competing
/// statuses present, KM/log-rank/Cox are skipped (with a note) and the
/// cumulative incidence function is reported instead.
pub fn analyze(
    estimand_id: &str,
    by_arm: &std::collections::BTreeMap<String, Vec<Obs>>,
    tau: Option<Day>,
) -> Result<AnalysisReport> {
    let competing = by_arm.values().flatten().any(Obs::is_competing);
    let mut notes = Vec::new();
    let mut arms = Vec::new();
    let mut tau_used = tau;

    if competing {
        notes.push(
            "dataset contains competing-risk statuses: Kaplan-Meier, log-rank, Cox, and RMST \
             are skipped; the cumulative incidence function is reported"
                .to_string(),
        );
    } else if tau.is_none() {
        // Default tau: largest horizon estimable in every arm.
        let t = by_arm
            .values()
            .map(|obs| obs.iter().map(|o| o.time).max().unwrap_or(0))
            .min()
            .unwrap_or(0);
        tau_used = Some(t);
        notes.push(format!(
            "tau not supplied: defaulting to the largest common follow-up, {t} days; \
             restricted means are only comparable at an explicit, shared horizon"
        ));
    }

    for (arm, obs) in by_arm {
        let n_events = obs.iter().filter(|o| o.is_event()).count();
        if competing {
            arms.push(ArmAnalysis { arm: arm.clone(), n: obs.len(), n_events, curve: None, rmst: None });
        } else {
            let curve = km_estimate(obs)?;
            let r = rmst(&curve, tau_used.unwrap_or(0).min(curve.max_followed))?;
            arms.push(ArmAnalysis {
                arm: arm.clone(),
                n: obs.len(),
                n_events,
                curve: Some(curve),
                rmst: Some(r),
            });
        }
    }

    let (mut log_rank, mut cox, mut cif) = (None, None, None);
    if competing {
        let mut per_arm = Vec::new();
        for (arm, obs) in by_arm {
            per_arm.push((arm.clone(), cif_aalen_johansen(obs)?));
        }
        cif = Some(CifPerArm { arms: per_arm });
    } else if by_arm.len() == 2 {
        let mut it = by_arm.values();
        let a0 = it.next().unwrap();
        let a1 = it.next().unwrap();
        log_rank = Some(logrank_test(a0, a1)?);
        match cox_fit(a0, a1) {
            Ok(fit) => cox = Some(fit),
            Err(Error::NonfiniteMle { direction }) => notes.push(format!(
                "Cox fit skipped: monotone partial likelihood, beta diverges to {direction}"
            )),
            Err(e) => notes.push(format!("Cox fit skipped: {e}")),
        }
    } else {
        notes.push(format!(
            "{} arm(s) present: two-arm tests skipped",
            by_arm.len()
        ));
    }

    Ok(AnalysisReport {
        estimand_id: estimand_id.to_string(),
        tau: tau_used,
        arms,
        log_rank,
        cox,
        cif,
        notes,
    })
}

pub fn analysis_text(report: &AnalysisReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "analysis report: estimand {}", report.estimand_id);
    if let Some(tau) = report.tau {
        let _ = writeln!(out, "restricted-mean horizon tau = {tau} days");
    }
    for note in &report.notes {
        let _ = writeln!(out, "note: {note}");
    }
    out.push('\n');
    for arm in &report.arms {
        let _ = writeln!(out, "arm {} (n = {}, events = {})", arm.arm, arm.n, arm.n_events);
        if let Some(r) = &arm.rmst {
            let _ = writeln!(
                out,
                "  rmst[0, {}] = {:.4} (se {:.4})",
                r.tau,
                r.estimate,
                r.standard_error()
            );
        }
        if let Some(curve) = &arm.curve {
            for line in survival_curve_table(curve).lines() {
                let _ = writeln!(out, "  {line}");
            }
        }
        out.push('\n');
    }
    if let Some(t) = &report.log_rank {
        let _ = writeln!(
            out,
            "log-rank: chi2 = {:.6} (df {}), p = {:.6}, O-E = [{:+.4}, {:+.4}]",
            t.statistic,
            t.degrees_of_freedom,
            t.p_value,
            t.observed_minus_expected[0],
            t.observed_minus_expected[1]
        );
    }
    if let Some(fit) = &report.cox {
        let _ = writeln!(
            out,
            "cox: hr = {:.6}, beta = {:+.6} (se {:.6}), p = {:.6}, iterations = {}",
            fit.hazard_ratio, fit.beta_hat, fit.standard_error, fit.p_value, fit.iterations
        );
    }
    if let Some(cif) = &report.cif {
        for (arm, curve) in &cif.arms {
            let _ = writeln!(out, "cumulative incidence, arm {arm}:");
            out.push_str(&cif_table(curve));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Derivation & validation reports
// ---------------------------------------------------------------------------

/// Per-estimand derivation summary: strategy table and exit breakdown.
pub fn derivation_text(spec: &EstimandSpec, audit: &DatasetAudit) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "derived dataset: estimand {}", spec.estimand_id);
    let _ = writeln!(out, "subjects: {}", audit.n_subjects);
    let _ = writeln!(out, "\ncomponents (priority order):");
    let mut comps = spec.components.clone();
    comps.sort_by_key(|c| c.priority);
    for c in &comps {
        let _ = writeln!(
            out,
            "  {:>2}. {} (causes: {})",
            c.priority,
            c.component_id,
            c.event_causes.join(", ")
        );
    }
    let _ = writeln!(out, "\nstrategy table:");
    if spec.strategy_table.is_empty() {
        let _ = writeln!(out, "  (empty: every intercurrent event type is unacknowledged)");
    }
    for a in &spec.strategy_table {
        let mut line = format!("  {} -> {}", a.ie_type, a.strategy.as_str());
        if let Some(h) = a.occlusion_handling {
            let _ = write!(
                line,
                " ({})",
                match h {
                    crate::domain::OcclusionHandling::Censor => "censor",
                    crate::domain::OcclusionHandling::CompetingRisk => "competing risk",
                }
            );
        }
        if let Some(o) = a.objectivity_override {
            let _ = write!(line, " [objectivity override: {o:?}]");
        }
        let _ = writeln!(out, "{line}");
    }
    let _ = writeln!(out, "\nexit breakdown:");
    for (k, v) in &audit.by_status {
        let _ = writeln!(out, "  {k:<12} {v}");
    }
    let _ = writeln!(out, "censor reasons:");
    if audit.by_censor_reason.is_empty() {
        let _ = writeln!(out, "  (none)");
    }
    for (k, v) in &audit.by_censor_reason {
        let _ = writeln!(out, "  {k:<26} {v}");
    }
    if !audit.by_cause.is_empty() {
        let _ = writeln!(out, "event/competing causes:");
        for (k, v) in &audit.by_cause {
            let _ = writeln!(out, "  {k:<26} {v}");
        }
    }
    out
}

pub fn findings_text(violations: &[Violation], findings: &[Finding]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "subject validation: {} violation(s)", violations.len());
    for v in violations {
        let _ = writeln!(out, "  {v}");
    }
    let _ = writeln!(out, "spec-vs-data findings: {}", findings.len());
    for f in findings {
        let _ = writeln!(out, "  {f}");
    }
    out
}

// ---------------------------------------------------------------------------
// Sensitivity & operating characteristics
// ---------------------------------------------------------------------------

pub fn sensitivity_text(report: &SensitivityReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "sensitivity analysis: {}", report.analysis_id);
    let _ = writeln!(
        out,
        "tau = {} days, landmark = {} days",
        report.tau, report.landmark
    );
    let _ = writeln!(
        out,
        "\n{:<20} {:<12} {:>8} {:>10} {:>10} {:>12} {:>12}",
        "variant", "arm", "n", "events", "censored", "km@landmark", "rmst"
    );
    for v in &report.variants {
        for (arm, est) in &v.per_arm {
            let events = *v.audit.by_status.get("event").unwrap_or(&0);
            let censored = *v.audit.by_status.get("censored").unwrap_or(&0);
            let km = est
                .km_at_landmark
                .map(|x| format!("{x:.4}"))
                .unwrap_or_else(|| "-".into());
            let rm = est.rmst.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<20} {:<12} {:>8} {:>10} {:>10} {:>12} {:>12}",
                v.name, arm, est.n, events, censored, km, rm
            );
        }
    }
    let _ = writeln!(out, "\nsubjects differing from the primary variant: {}", report.diffs.len());
    for d in &report.diffs {
        let _ = writeln!(
            out,
            "  [{}] {}: {} @ {} -> {} @ {}",
            d.variant, d.subject_id, d.primary_status, d.primary_time, d.variant_status, d.variant_time
        );
    }
    out
}

pub fn opchar_text(table: &OpCharTable) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "operating characteristics: {} (alpha = {}, reps = {}, seed = {})",
        table.analysis, table.alpha, table.n_reps, table.seed
    );
    let _ = writeln!(
        out,
        "{:>8} {:>7} {:>8} {:>9} {:>10} {:>12} {:>10} {:>12}",
        "cutoff", "n_ok", "reject", "mc_se", "mean_est", "sd_est", "mean_se", "bias"
    );
    for r in &table.rows {
        let bias = r.bias.map(|b| format!("{b:+.4}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:>8} {:>7} {:>8.4} {:>9.4} {:>10.4} {:>12.4} {:>10.4} {:>12}",
            r.cutoff_calendar_day,
            r.n_reps,
            r.rejection_rate,
            r.rejection_mc_se,
            r.mean_estimate,
            r.sd_estimate,
            r.mean_mc_se,
            bias
        );
    }
    out
}

pub fn opchar_csv(table: &OpCharTable) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "analysis",
        "cutoff_calendar_day",
        "n_reps",
        "n_failed",
        "rejection_rate",
        "rejection_mc_se",
        "mean_estimate",
        "sd_estimate",
        "mean_mc_se",
        "bias",
    ])?;
    for r in &table.rows {
        w.write_record([
            table.analysis.clone(),
            r.cutoff_calendar_day.to_string(),
            r.n_reps.to_string(),
            r.n_failed.to_string(),
            format!("{:.6}", r.rejection_rate),
            format!("{:.6}", r.rejection_mc_se),
            format!("{:.6}", r.mean_estimate),
            format!("{:.6}", r.sd_estimate),
            format!("{:.6}", r.mean_mc_se),
            r.bias.map(|b| format!("{b:.6}")).unwrap_or_default(),
        ])?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Csv(e.to_string()))?)
        .map_err(|e| Error::Csv(e.to_string()))
}
