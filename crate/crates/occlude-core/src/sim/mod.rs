//! Generative trial engine: piecewise-constant-hazard event times, staggered
//! accrual, discrete assessment schedules with jitter and missed visits,
//! withdrawal processes, and administrative cutoffs.
//!
//! Reproducibility contract: per-subject randomness comes from splitting the
//! master seed with the (replicate, subject) index as a counter-based stream,
//! so worker count and execution order cannot change results.

pub mod opchar;

pub use opchar::{operating_characteristics, Analysis, OpCharRow, OpCharTable};

use rand::distr::Open01;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Assessment, AssessmentOutcome, AssessmentStream, Continuity, Day, SubjectRecord,
    WithdrawalRecord, WithdrawalScope,
};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Hazards
// ---------------------------------------------------------------------------

/// One constant-rate segment of a piecewise hazard, open-ended to the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HazardSegment {
    pub start_day: Day,
    /// Events per day; must be >= 0.
    pub rate: f64,
}

/// Piecewise-constant hazard. Segments start at day 0 with strictly
/// increasing start days; an empty segment list means no hazard at all.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HazardSpec {
    pub segments: Vec<HazardSegment>,
}

impl HazardSpec {
    pub fn zero() -> Self {
        HazardSpec { segments: vec![] }
    }

    pub fn constant(rate: f64) -> Self {
        HazardSpec { segments: vec![HazardSegment { start_day: 0, rate }] }
    }

    /// Two-compartment delayed effect: `before` until the delay point tau,
    /// `after` from tau on.
    pub fn delayed(before: f64, after: f64, tau: Day) -> Self {
        HazardSpec {
            segments: vec![
                HazardSegment { start_day: 0, rate: before },
                HazardSegment { start_day: tau, rate: after },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(first) = self.segments.first() {
            if first.start_day != 0 {
                return Err(Error::Scenario("hazard segments must start at day 0".into()));
            }
        }
        for w in self.segments.windows(2) {
            if w[1].start_day <= w[0].start_day {
                return Err(Error::Scenario(
                    "hazard segment start days must be strictly increasing".into(),
                ));
            }
        }
        for s in &self.segments {
            if !(s.rate >= 0.0 && s.rate.is_finite()) {
                return Err(Error::Scenario(format!("hazard rate {} must be >= 0", s.rate)));
            }
        }
        Ok(())
    }

    /// Cumulative hazard at continuous time `t`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut h = 0.0;
        for (i, seg) in self.segments.iter().enumerate() {
            let a = seg.start_day as f64;
            if t <= a {
                break;
            }
            let b = self
                .segments
                .get(i + 1)
                .map(|s| s.start_day as f64)
                .unwrap_or(f64::INFINITY);
            h += seg.rate * (t.min(b) - a);
        }
        h
    }

    /// Survival function exp(-H(t)).
    pub fn survival(&self, t: f64) -> f64 {
        (-self.cumulative(t)).exp()
    }

    /// Exact restricted mean: integral of exp(-H) on [0, tau].
    pub fn restricted_mean(&self, tau: f64) -> f64 {
        let mut area = 0.0;
        let mut at = 0.0_f64;
        for (i, seg) in self.segments.iter().enumerate() {
            let a = seg.start_day as f64;
            if at < a {
                // No hazard declared before the first segment.
                area += (a.min(tau) - at).max(0.0);
                at = a;
            }
            if at >= tau {
                return area;
            }
            let b = self
                .segments
                .get(i + 1)
                .map(|s| s.start_day as f64)
                .unwrap_or(f64::INFINITY)
                .min(tau);
            if b <= at {
                continue;
            }
            let s_at = self.survival(at);
            area += if seg.rate > 0.0 {
                s_at * (1.0 - (-seg.rate * (b - at)).exp()) / seg.rate
            } else {
                s_at * (b - at)
            };
            at = b;
        }
        if at < tau {
            area += self.survival(at) * (tau - at);
        }
        area
    }

    /// Overlay a rate multiplier on [from, to); used for the informative
    /// withdrawal stress mode.
    fn overlaid(&self, from: Day, to: Day, multiplier: f64) -> HazardSpec {
        if self.segments.is_empty() || from >= to {
            return self.clone();
        }
        let rate_at = |d: Day| -> f64 {
            self.segments
                .iter()
                .rev()
                .find(|s| s.start_day <= d)
                .map(|s| s.rate)
                .unwrap_or(0.0)
        };
        let mut cuts: Vec<Day> = self.segments.iter().map(|s| s.start_day).collect();
        for d in [from.max(0), to] {
            if !cuts.contains(&d) {
                cuts.push(d);
            }
        }
        cuts.sort();
        let segments = cuts
            .into_iter()
            .map(|d| {
                let base = rate_at(d);
                let rate = if d >= from && d < to { base * multiplier } else { base };
                HazardSegment { start_day: d, rate }
            })
            .collect();
        HazardSpec { segments }
    }
}

/// Inverse-CDF sampling over the piecewise-constant cumulative hazard:
/// H(t) is piecewise linear, a standard exponential draw E maps to
/// H^{-1}(E). The continuous value is rounded up to an integer day. Returns
/// None when the total hazard never reaches E (e.g. all-zero rates).
pub fn sample_piecewise_exponential<R: Rng + ?Sized>(
    hazard: &HazardSpec,
    rng: &mut R,
) -> Option<Day> {
    let u: f64 = rng.sample(Open01);
    let target = -u.ln();
    let mut acc = 0.0_f64;
    for (i, seg) in hazard.segments.iter().enumerate() {
        let a = seg.start_day as f64;
        let b = hazard
            .segments
            .get(i + 1)
            .map(|s| s.start_day as f64)
            .unwrap_or(f64::INFINITY);
        // A zero-rate segment contributes no hazard even when open-ended.
        let seg_hazard = if seg.rate > 0.0 { seg.rate * (b - a) } else { 0.0 };
        if seg.rate > 0.0 && acc + seg_hazard >= target {
            let t = a + (target - acc) / seg.rate;
            return Some((t.ceil() as Day).max(1));
        }
        acc += seg_hazard;
    }
    None
}

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArmScenario {
    pub name: String,
    pub n: usize,
    pub event: HazardSpec,
    #[serde(default)]
    pub withdrawal: HazardSpec,
}

/// Accrual pattern in calendar days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Accrual {
    /// Uniform over [0, days].
    Uniform { days: Day },
    /// Explicit accrual days, cycled by subject index.
    Fixed { days: Vec<Day> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleScenario {
    pub period_days: Day,
    #[serde(default)]
    pub jitter_sd: f64,
    #[serde(default)]
    pub miss_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamScenario {
    pub component_id: String,
    /// None = continuously observed stream (e.g. survival).
    #[serde(default)]
    pub schedule: Option<ScheduleScenario>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffRule {
    CalendarDay(Day),
    EventCount(usize),
}

/// Ties the withdrawal hazard to latent event proximity: within `lead_days`
/// before the latent event the withdrawal rate is multiplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InformativeWithdrawal {
    pub lead_days: Day,
    pub rate_multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialScenario {
    pub arms: Vec<ArmScenario>,
    pub accrual: Accrual,
    pub streams: Vec<StreamScenario>,
    /// Stream on which the latent event manifests.
    pub event_stream: String,
    /// Cause recorded for detected events. The reserved cause "death" on a
    /// continuous stream is observed exactly and recorded as the death day.
    pub event_cause: String,
    pub cutoff: CutoffRule,
    /// Calendar generation horizon; must cover accrual and any cutoff.
    pub horizon_days: Day,
    /// Documentation of the non-proportional-hazards boundary, if any.
    #[serde(default)]
    pub delay_point_tau: Option<Day>,
    #[serde(default)]
    pub informative_withdrawal: Option<InformativeWithdrawal>,
}

impl TrialScenario {
    pub fn validate(&self) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Scenario("at least one arm required".into()));
        }
        for arm in &self.arms {
            if arm.n < 1 {
                return Err(Error::Scenario(format!("arm {}: n must be >= 1", arm.name)));
            }
            arm.event.validate()?;
            arm.withdrawal.validate()?;
        }
        for s in &self.streams {
            if let Some(sch) = &s.schedule {
                if sch.period_days < 1 {
                    return Err(Error::Scenario(format!(
                        "stream {}: period_days must be >= 1",
                        s.component_id
                    )));
                }
                if sch.jitter_sd < 0.0 {
                    return Err(Error::Scenario(format!(
                        "stream {}: jitter_sd must be >= 0",
                        s.component_id
                    )));
                }
                if !(0.0..1.0).contains(&sch.miss_probability) {
                    return Err(Error::Scenario(format!(
                        "stream {}: miss_probability must be in [0, 1)",
                        s.component_id
                    )));
                }
            }
        }
        if !self.streams.iter().any(|s| s.component_id == self.event_stream) {
            return Err(Error::Scenario(format!(
                "event_stream {} is not declared among streams",
                self.event_stream
            )));
        }
        if self.horizon_days < 1 {
            return Err(Error::Scenario("horizon_days must be >= 1".into()));
        }
        let max_accrual = match &self.accrual {
            Accrual::Uniform { days } => *days,
            Accrual::Fixed { days } => days.iter().copied().max().unwrap_or(0),
        };
        if max_accrual >= self.horizon_days {
            return Err(Error::Scenario(
                "horizon_days must exceed the latest accrual day".into(),
            ));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Subject generation
// ---------------------------------------------------------------------------

/// Standard normal draw via Box-Muller on two open-unit uniforms.
fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.sample(Open01);
    let u2: f64 = rng.sample(Open01);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn simulate_subject(
    scenario: &TrialScenario,
    arm: &ArmScenario,
    global_index: usize,
    seed: u64,
    rep: u32,
) -> SubjectRecord {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 32) | global_index as u64);

    let accrual = match &scenario.accrual {
        Accrual::Uniform { days } => {
            if *days > 0 {
                rng.random_range(0..=*days)
            } else {
                0
            }
        }
        Accrual::Fixed { days } => days[global_index % days.len()],
    };
    let gen_end = scenario.horizon_days - accrual;

    let latent_event = sample_piecewise_exponential(&arm.event, &mut rng);
    let withdrawal_hazard = match (scenario.informative_withdrawal, latent_event) {
        (Some(iw), Some(ev)) => {
            arm.withdrawal
                .overlaid((ev - iw.lead_days).max(0), ev, iw.rate_multiplier)
        }
        _ => arm.withdrawal.clone(),
    };
    let latent_withdrawal = sample_piecewise_exponential(&withdrawal_hazard, &mut rng);

    // Death is observed exactly while under follow-up; withdrawal before the
    // latent death leaves it unobserved.
    let continuous_event = scenario.event_cause == "death"
        && scenario
            .streams
            .iter()
            .any(|s| s.component_id == scenario.event_stream && s.schedule.is_none());
    let death_day = if continuous_event {
        match (latent_event, latent_withdrawal) {
            (Some(ev), w) if ev <= gen_end && w.is_none_or(|w| ev <= w) => Some(ev),
            _ => None,
        }
    } else {
        None
    };

    // Observation stops at death, withdrawal, or the generation horizon.
    let obs_end = [death_day, latent_withdrawal, Some(gen_end)]
        .into_iter()
        .flatten()
        .min()
        .unwrap_or(gen_end);

    let mut streams = Vec::with_capacity(scenario.streams.len());
    for stream_cfg in &scenario.streams {
        match &stream_cfg.schedule {
            None => {
                streams.push(AssessmentStream {
                    component_id: stream_cfg.component_id.clone(),
                    schedule: vec![],
                    assessments: vec![],
                    continuity: Continuity::Continuous,
                });
            }
            Some(sch) => {
                let is_event_stream = stream_cfg.component_id == scenario.event_stream;
                let mut schedule = Vec::new();
                let mut k = 1;
                while k * sch.period_days <= gen_end {
                    schedule.push(k * sch.period_days);
                    k += 1;
                }
                let mut assessments: Vec<Assessment> = Vec::new();
                let mut detected = false;
                let mut prev = 0;
                for (idx, &target) in schedule.iter().enumerate() {
                    if detected {
                        break;
                    }
                    // Jitter and miss draws are consumed for every visit so
                    // the stream of randomness does not depend on outcomes.
                    let jitter = (standard_normal(&mut rng) * sch.jitter_sd).round() as Day;
                    let missed = sch.miss_probability > 0.0
                        && rng.sample::<f64, _>(Open01) < sch.miss_probability;
                    if missed {
                        continue;
                    }
                    let day = (target + jitter).max(prev + 1);
                    if day > obs_end {
                        break;
                    }
                    let outcome = if is_event_stream
                        && latent_event.is_some_and(|ev| day >= ev)
                    {
                        detected = true;
                        AssessmentOutcome::Event(scenario.event_cause.clone())
                    } else {
                        AssessmentOutcome::Normal
                    };
                    assessments.push(Assessment { target_index: Some(idx), day, outcome });
                    prev = day;
                }
                streams.push(AssessmentStream {
                    component_id: stream_cfg.component_id.clone(),
                    schedule,
                    assessments,
                    continuity: Continuity::DiscreteScheduled,
                });
            }
        }
    }

    let mut withdrawals = Vec::new();
    if let Some(w) = latent_withdrawal {
        if w <= gen_end && death_day.is_none_or(|d| w < d) {
            withdrawals.push(WithdrawalRecord {
                withdrawal_day: w,
                scope: WithdrawalScope::All,
                linked_trigger: None,
            });
        }
    }

    SubjectRecord {
        subject_id: format!("{}-{:05}", arm.name, global_index),
        arm: arm.name.clone(),
        accrual_day: Some(accrual),
        streams,
        ie_occurrences: vec![],
        withdrawals,
        death_day,
        last_dose_day: None,
        cutoff_day: gen_end,
    }
}

/// Simulate at the generation horizon, before the scenario cutoff rule.
/// Deterministic for a given (scenario, seed, rep) regardless of worker
/// count; subjects come out in arm-then-index order.
pub fn simulate_trial_uncut(
    scenario: &TrialScenario,
    seed: u64,
    rep: u32,
) -> Result<Vec<SubjectRecord>> {
    scenario.validate()?;
    let mut jobs: Vec<(usize, &ArmScenario)> = Vec::new();
    let mut global = 0usize;
    for arm in &scenario.arms {
        for _ in 0..arm.n {
            jobs.push((global, arm));
            global += 1;
        }
    }
    Ok(jobs
        .par_iter()
        .map(|(idx, arm)| simulate_subject(scenario, arm, *idx, seed, rep))
        .collect())
}

/// Simulate one trial and apply the scenario's cutoff rule.
pub fn simulate_trial(scenario: &TrialScenario, seed: u64) -> Result<Vec<SubjectRecord>> {
    let subjects = simulate_trial_uncut(scenario, seed, 0)?;
    let (subjects, _) = apply_cutoff(&subjects, &scenario.cutoff)?;
    Ok(subjects)
}

// ---------------------------------------------------------------------------
// Cutoffs
// ---------------------------------------------------------------------------

fn truncate_subject(subject: &SubjectRecord, cutoff: Day) -> SubjectRecord {
    let mut s = subject.clone();
    s.cutoff_day = cutoff;
    for stream in &mut s.streams {
        stream.assessments.retain(|a| a.day <= cutoff);
    }
    s.ie_occurrences.retain(|ie| ie.detection_day <= cutoff);
    for ie in &mut s.ie_occurrences {
        // Adjudication past the cutoff is not yet observed.
        ie.identification_day = ie.identification_day.min(cutoff);
    }
    s.withdrawals.retain(|w| w.withdrawal_day <= cutoff);
    if s.death_day.is_some_and(|d| d > cutoff) {
        s.death_day = None;
    }
    s.last_dose_day = s.last_dose_day.map(|d| d.min(cutoff));
    s
}

/// Calendar day of every observed event (detected events and deaths).
fn observed_event_calendar_days(subjects: &[SubjectRecord]) -> Vec<Day> {
    let mut days = Vec::new();
    for s in subjects {
        let accrual = s.accrual_day.unwrap_or(0);
        if let Some(d) = s.death_day {
            days.push(accrual + d);
        }
        for stream in &s.streams {
            for a in &stream.assessments {
                if matches!(a.outcome, AssessmentOutcome::Event(_)) {
                    days.push(accrual + a.day);
                }
            }
        }
    }
    days.sort();
    days
}

/// Apply a cutoff rule, converting the calendar day to per-subject days via
/// accrual. EventCount(k) resolves to the calendar day of the k-th observed
/// event (the last one, with a note, when k exceeds the total). A calendar
/// day before some subject's accrual is rejected.
pub fn apply_cutoff(
    subjects: &[SubjectRecord],
    rule: &CutoffRule,
) -> Result<(Vec<SubjectRecord>, Vec<String>)> {
    let mut notes = Vec::new();
    let calendar_day = match rule {
        CutoffRule::CalendarDay(d) => *d,
        CutoffRule::EventCount(k) => {
            let days = observed_event_calendar_days(subjects);
            if days.is_empty() {
                return Err(Error::Scenario(
                    "event-count cutoff with no observed events".into(),
                ));
            }
            if *k == 0 {
                return Err(Error::Scenario("event-count cutoff requires k >= 1".into()));
            }
            if *k > days.len() {
                notes.push(format!(
                    "event count {k} exceeds total observed events {}; using the last event day",
                    days.len()
                ));
                *days.last().unwrap()
            } else {
                days[k - 1]
            }
        }
    };

    let mut out = Vec::with_capacity(subjects.len());
    for s in subjects {
        let accrual = s.accrual_day.unwrap_or(0);
        let subject_cutoff = calendar_day - accrual;
        if subject_cutoff < 0 {
            return Err(Error::CutoffBeforeAccrual {
                subject_id: s.subject_id.clone(),
                accrual_day: accrual,
                calendar_day,
            });
        }
        // Beyond the generated data the cutoff is an identity.
        out.push(truncate_subject(s, subject_cutoff.min(s.cutoff_day)));
    }
    Ok((out, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_subject;

    fn basic_scenario() -> TrialScenario {
        TrialScenario {
            arms: vec![
                ArmScenario {
                    name: "control".into(),
                    n: 30,
                    event: HazardSpec::constant(0.004),
                    withdrawal: HazardSpec::zero(),
                },
                ArmScenario {
                    name: "treatment".into(),
                    n: 30,
                    event: HazardSpec::constant(0.002),
                    withdrawal: HazardSpec::constant(0.0005),
                },
            ],
            accrual: Accrual::Uniform { days: 90 },
            streams: vec![
                StreamScenario { component_id: "survival".into(), schedule: None },
                StreamScenario {
                    component_id: "tumor".into(),
                    schedule: Some(ScheduleScenario {
                        period_days: 42,
                        jitter_sd: 3.0,
                        miss_probability: 0.05,
                    }),
                },
            ],
            event_stream: "survival".into(),
            event_cause: "death".into(),
            cutoff: CutoffRule::CalendarDay(540),
            horizon_days: 720,
            delay_point_tau: None,
            informative_withdrawal: None,
        }
    }

    #[test]
    fn constant_rate_mean_matches_closed_form() {
        let hazard = HazardSpec::constant(0.01);
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_piecewise_exponential(&hazard, &mut rng).unwrap() as f64)
            .sum::<f64>()
            / n as f64;
        // Rounding up to whole days adds about half a day to the 100-day mean.
        let expected = 100.5;
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "mean {mean} vs {expected}"
        );
    }

    #[test]
    fn zero_hazard_never_fires() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        assert_eq!(sample_piecewise_exponential(&HazardSpec::zero(), &mut rng), None);
        let flat = HazardSpec::constant(0.0);
        assert_eq!(sample_piecewise_exponential(&flat, &mut rng), None);
    }

    #[test]
    fn delayed_segment_draws_after_the_delay_point() {
        let hazard = HazardSpec::delayed(0.0, 0.05, 100);
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        for _ in 0..500 {
            let d = sample_piecewise_exponential(&hazard, &mut rng).unwrap();
            assert!(d > 100, "draw {d} not after the delay point");
        }
    }

    #[test]
    fn cumulative_and_restricted_mean_are_consistent() {
        let hazard = HazardSpec::delayed(0.01, 0.005, 50);
        assert!((hazard.cumulative(50.0) - 0.5).abs() < 1e-12);
        assert!((hazard.cumulative(70.0) - 0.6).abs() < 1e-12);
        // Riemann check of the restricted mean.
        let tau = 200.0;
        let steps = 200_000;
        let dx = tau / steps as f64;
        let riemann: f64 = (0..steps).map(|i| hazard.survival((i as f64 + 0.5) * dx) * dx).sum();
        assert!((hazard.restricted_mean(tau) - riemann).abs() < 1e-4);
    }

    #[test]
    fn simulated_subjects_are_valid() {
        let subjects = simulate_trial(&basic_scenario(), 99).unwrap();
        assert_eq!(subjects.len(), 60);
        for s in &subjects {
            let v = validate_subject(s);
            assert!(v.is_empty(), "subject {}: {:?}", s.subject_id, v);
        }
    }

    #[test]
    fn same_seed_is_reproducible_across_worker_counts() {
        let scenario = basic_scenario();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| simulate_trial(&scenario, 2024).unwrap())
        };
        let one = run(1);
        let eight = run(8);
        assert_eq!(one, eight);
        let again = run(8);
        assert_eq!(one, again);
    }

    #[test]
    fn different_seeds_differ() {
        let scenario = basic_scenario();
        let a = simulate_trial(&scenario, 1).unwrap();
        let b = simulate_trial(&scenario, 2).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn perfect_schedule_without_jitter_or_misses() {
        let mut scenario = basic_scenario();
        scenario.streams[1].schedule = Some(ScheduleScenario {
            period_days: 42,
            jitter_sd: 0.0,
            miss_probability: 0.0,
        });
        scenario.arms[1].withdrawal = HazardSpec::zero();
        let subjects = simulate_trial(&scenario, 5).unwrap();
        for s in subjects {
            let tumor = s.stream("tumor").unwrap();
            for a in &tumor.assessments {
                assert_eq!(a.day, tumor.schedule[a.target_index.unwrap()]);
            }
        }
    }

    #[test]
    fn latent_event_precedes_detection_by_about_half_a_period() {
        // Discrete q6w detection of a progression-like event.
        let mut scenario = basic_scenario();
        scenario.event_stream = "tumor".into();
        scenario.event_cause = "progression".into();
        scenario.arms[0].event = HazardSpec::constant(0.003);
        scenario.arms[1].event = HazardSpec::constant(0.003);
        scenario.arms[1].withdrawal = HazardSpec::zero();
        scenario.streams[1].schedule = Some(ScheduleScenario {
            period_days: 42,
            jitter_sd: 0.0,
            miss_probability: 0.0,
        });
        scenario.arms[0].n = 400;
        scenario.arms[1].n = 400;
        scenario.horizon_days = 2000;
        scenario.cutoff = CutoffRule::CalendarDay(2000);

        // Reconstruct latent days with the same seed-splitting contract.
        let subjects = simulate_trial(&scenario, 77).unwrap();
        let mut delays = Vec::new();
        for (idx, s) in subjects.iter().enumerate() {
            let mut rng = ChaCha12Rng::seed_from_u64(77);
            rng.set_stream(idx as u64);
            let _accrual: Day = rng.random_range(0..=90);
            let latent = sample_piecewise_exponential(&scenario.arms[idx / 400].event, &mut rng);
            let detected = s
                .stream("tumor")
                .unwrap()
                .assessments
                .iter()
                .find(|a| matches!(a.outcome, AssessmentOutcome::Event(_)))
                .map(|a| a.day);
            if let (Some(l), Some(d)) = (latent, detected) {
                assert!(l <= d, "latent {l} after detection {d}");
                delays.push((d - l) as f64);
            }
        }
        assert!(delays.len() > 300, "need events, got {}", delays.len());
        let mean = delays.iter().sum::<f64>() / delays.len() as f64;
        // Uniform offset over a 42-day period: expect about 21 days.
        assert!((19.0..24.0).contains(&mean), "mean detection delay {mean}");
    }

    #[test]
    fn calendar_cutoff_converts_to_subject_days() {
        let scenario = basic_scenario();
        let base = simulate_trial_uncut(&scenario, 3, 0).unwrap();
        let (cut, _) = apply_cutoff(&base, &CutoffRule::CalendarDay(400)).unwrap();
        for (b, c) in base.iter().zip(&cut) {
            let accrual = b.accrual_day.unwrap();
            assert_eq!(c.cutoff_day, (400 - accrual).min(b.cutoff_day));
            for stream in &c.streams {
                for a in &stream.assessments {
                    assert!(a.day <= c.cutoff_day);
                }
            }
        }
    }

    #[test]
    fn cutoff_before_accrual_is_rejected() {
        let scenario = basic_scenario();
        let base = simulate_trial_uncut(&scenario, 3, 0).unwrap();
        // Some subject accrues after day 10 with 90-day uniform accrual.
        let err = apply_cutoff(&base, &CutoffRule::CalendarDay(10)).unwrap_err();
        assert!(matches!(err, Error::CutoffBeforeAccrual { .. }));
    }

    #[test]
    fn cutoff_beyond_all_data_is_identity() {
        let scenario = basic_scenario();
        let base = simulate_trial_uncut(&scenario, 3, 0).unwrap();
        let (cut, _) = apply_cutoff(&base, &CutoffRule::CalendarDay(100_000)).unwrap();
        assert_eq!(base, cut);
    }

    #[test]
    fn event_count_cutoff_matches_sorted_event_days() {
        let scenario = basic_scenario();
        let base = simulate_trial_uncut(&scenario, 11, 0).unwrap();
        let days = observed_event_calendar_days(&base);
        assert!(days.len() >= 10);
        let (cut, notes) = apply_cutoff(&base, &CutoffRule::EventCount(10)).unwrap();
        assert!(notes.is_empty());
        let expected = days[9];
        for (b, c) in base.iter().zip(&cut) {
            assert_eq!(
                c.cutoff_day,
                (expected - b.accrual_day.unwrap()).min(b.cutoff_day)
            );
        }
        // k beyond the total falls back to the last event day, with a note.
        let (_, notes) = apply_cutoff(&base, &CutoffRule::EventCount(days.len() + 5)).unwrap();
        assert_eq!(notes.len(), 1);
    }

    #[test]
    fn zero_hazards_censor_everyone_at_cutoff() {
        let mut scenario = basic_scenario();
        scenario.arms[0].event = HazardSpec::zero();
        scenario.arms[1].event = HazardSpec::zero();
        scenario.arms[1].withdrawal = HazardSpec::zero();
        scenario.cutoff = CutoffRule::CalendarDay(450);
        let subjects = simulate_trial(&scenario, 8).unwrap();
        let spec = crate::domain::EstimandSpec::single_component("os", "survival", "death");
        let (records, audit) = crate::derive::derive_dataset(&subjects, &spec).unwrap();
        assert_eq!(audit.by_censor_reason.get("admin_cutoff"), Some(&records.len()));
    }

    #[test]
    fn informative_withdrawal_raises_withdrawal_rate_near_events() {
        let mut scenario = basic_scenario();
        scenario.arms[0].withdrawal = HazardSpec::constant(0.001);
        scenario.arms[1].withdrawal = HazardSpec::constant(0.001);
        scenario.informative_withdrawal =
            Some(InformativeWithdrawal { lead_days: 60, rate_multiplier: 25.0 });
        let with = simulate_trial(&scenario, 13).unwrap();
        scenario.informative_withdrawal = None;
        let without = simulate_trial(&scenario, 13).unwrap();
        let count = |subjects: &[SubjectRecord]| {
            subjects.iter().filter(|s| !s.withdrawals.is_empty()).count()
        };
        assert!(count(&with) > count(&without));
    }
}
