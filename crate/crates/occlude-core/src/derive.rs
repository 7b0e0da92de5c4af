//! The occlusion engine: converts a subject timeline plus an estimand spec
//! into a derived analysis record by applying risk-window, gap, and
//! strategy-dispatch rules, with a complete audit trail.
//!
//! The chronological scan competes three kinds of exits (events of interest,
//! strategy-driven occlusions, and the end of the composite risk window) and
//! resolves same-day ties by the estimand's tie order, by default event of
//! interest first, then intercurrent event, then window end.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    AssessmentOutcome, AssessmentStream, CensorReason, ComponentSpec, Continuity, DatingTrace,
    Day, DerivedAnalysisRecord, DerivedStatus, EstimandSpec, IntercurrentOccurrence,
    Objectivity, OcclusionBasis, OcclusionHandling, Strategy, StrategyAssignment, SubjectRecord,
    TieClass, UnscheduledAssumption, WithdrawalRecord,
};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Risk window
// ---------------------------------------------------------------------------

/// What determined the end of the composite risk window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowBasis {
    /// Last performed assessment of the first-ending component.
    LastOwnAssessment,
    /// Last assessment of any component before the first-ending component's
    /// first missed scheduled visit.
    LastCrossComponentAssessment,
    /// Administrative cutoff (or death, for continuous components).
    Cutoff,
    /// Withdrawal from a continuously observed component.
    ActualWithdrawal,
}

/// The interval over which the subject is at risk for the composite endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RiskWindow {
    pub end_day: Day,
    pub ending_component: String,
    pub basis: WindowBasis,
}

/// Day a component's assessments end for the given subject. Continuous
/// streams run to death or cutoff, bounded by withdrawal from the stream;
/// discrete streams end at their last performed assessment. A discrete
/// stream with no assessments returns day 0: at risk never established.
pub fn component_assessment_end(
    subject: &SubjectRecord,
    stream: &AssessmentStream,
    audit: &mut Vec<String>,
) -> Day {
    match stream.continuity {
        Continuity::Continuous => {
            let mut end = subject.death_day.unwrap_or(subject.cutoff_day).min(subject.cutoff_day);
            if let Some(w) = subject.withdrawal_for(&stream.component_id) {
                end = end.min(w.withdrawal_day);
            }
            end
        }
        Continuity::DiscreteScheduled => match stream.last_assessment_day() {
            Some(d) => d,
            None => {
                audit.push(format!(
                    "component {}: no assessments performed, at risk never established (day 0)",
                    stream.component_id
                ));
                0
            }
        },
    }
}

/// First scheduled target of the stream strictly after its last performed
/// assessment (the first visit that would have been missed had assessments
/// simply stopped).
fn first_missed_boundary(stream: &AssessmentStream) -> Option<Day> {
    let last = stream.last_assessment_day().unwrap_or(-1);
    stream.schedule.iter().copied().find(|t| *t > last)
}

/// Compute the composite risk window. The patient is at risk for the
/// composite only while at risk for every component; the discretely assessed
/// component whose assessments end first bounds the window, with the exact
/// end depending on whether unscheduled assessments are assumed common.
pub fn composite_risk_window(
    subject: &SubjectRecord,
    spec: &EstimandSpec,
    audit: &mut Vec<String>,
) -> RiskWindow {
    // Components present as streams, in priority order.
    let mut comps: Vec<(&ComponentSpec, &AssessmentStream)> = spec
        .components
        .iter()
        .filter_map(|c| subject.stream(&c.component_id).map(|s| (c, s)))
        .collect();
    comps.sort_by_key(|(c, _)| c.priority);

    // Components in the spec but absent from the subject mean the patient was
    // never at risk for that part of the composite.
    for c in &spec.components {
        if subject.stream(&c.component_id).is_none() {
            audit.push(format!(
                "component {} has no stream for this subject: at risk never established (day 0)",
                c.component_id
            ));
            return RiskWindow {
                end_day: 0,
                ending_component: c.component_id.clone(),
                basis: WindowBasis::LastOwnAssessment,
            };
        }
    }

    let discrete: Vec<&AssessmentStream> = comps
        .iter()
        .filter(|(_, s)| s.continuity == Continuity::DiscreteScheduled)
        .map(|(_, s)| *s)
        .collect();

    // End candidate from the first-ending discrete component.
    let mut end = subject.cutoff_day;
    let mut basis = WindowBasis::Cutoff;
    let mut ending = comps
        .first()
        .map(|(c, _)| c.component_id.clone())
        .unwrap_or_default();

    if let Some(c_star) = discrete
        .iter()
        .min_by_key(|s| {
            let mut scratch = Vec::new();
            component_assessment_end(subject, s, &mut scratch)
        })
        .copied()
    {
        let own_last = {
            let mut scratch = Vec::new();
            component_assessment_end(subject, c_star, &mut scratch)
        };
        let candidate = match spec.unscheduled_assumption {
            UnscheduledAssumption::Continuous => {
                audit.push(format!(
                    "unscheduled assessments assumed common: window bounded by last {} assessment (day {})",
                    c_star.component_id, own_last
                ));
                (own_last, WindowBasis::LastOwnAssessment)
            }
            UnscheduledAssumption::Discrete if c_star.assessments.is_empty() => {
                audit.push(format!(
                    "component {}: no assessments performed, at risk never established (day 0)",
                    c_star.component_id
                ));
                (0, WindowBasis::LastOwnAssessment)
            }
            UnscheduledAssumption::Discrete => match first_missed_boundary(c_star) {
                Some(boundary) => {
                    // Last assessment of ANY component strictly before the
                    // first missed scheduled visit of the first-ending one.
                    // A continuous component is assessed daily, so it keeps
                    // the patient assessable through the day before the
                    // boundary, capped by its own end (death, cutoff,
                    // withdrawal).
                    let mut best: Option<(Day, bool)> = None; // (day, is_own)
                    for (_, s) in &comps {
                        match s.continuity {
                            Continuity::DiscreteScheduled => {
                                for a in &s.assessments {
                                    if a.day < boundary && best.is_none_or(|(d, _)| a.day > d) {
                                        best =
                                            Some((a.day, s.component_id == c_star.component_id));
                                    }
                                }
                            }
                            Continuity::Continuous => {
                                let mut scratch = Vec::new();
                                let reach = component_assessment_end(subject, s, &mut scratch)
                                    .min(boundary - 1);
                                if reach >= 0 && best.is_none_or(|(d, _)| reach > d) {
                                    best = Some((reach, false));
                                }
                            }
                        }
                    }
                    let (day, is_own) = best.unwrap_or((0, true));
                    audit.push(format!(
                        "component {} ends assessments first; first missed scheduled visit day {boundary}; \
                         last day any component was assessed before it: day {day}",
                        c_star.component_id
                    ));
                    (
                        day,
                        if is_own {
                            WindowBasis::LastOwnAssessment
                        } else {
                            WindowBasis::LastCrossComponentAssessment
                        },
                    )
                }
                None => {
                    audit.push(format!(
                        "component {} completed its full schedule; window bounded by cutoff",
                        c_star.component_id
                    ));
                    (subject.cutoff_day, WindowBasis::Cutoff)
                }
            },
        };
        if candidate.0 < end {
            end = candidate.0;
            basis = candidate.1;
            ending = c_star.component_id.clone();
        } else if candidate.0 == end {
            basis = candidate.1;
            ending = c_star.component_id.clone();
        }
    }

    // Continuous components bound the window only via death, cutoff, or
    // withdrawal from the stream, never via their (empty) visit trail.
    for (c, s) in &comps {
        if s.continuity != Continuity::Continuous {
            continue;
        }
        let mut scratch = Vec::new();
        let cc_end = component_assessment_end(subject, s, &mut scratch);
        if cc_end <= end {
            end = cc_end;
            ending = c.component_id.clone();
            let withdrawal_bound = subject
                .withdrawal_for(&c.component_id)
                .is_some_and(|w| w.withdrawal_day == cc_end)
                && subject.death_day.is_none_or(|d| d > cc_end);
            basis = if withdrawal_bound {
                WindowBasis::ActualWithdrawal
            } else {
                WindowBasis::Cutoff
            };
        }
    }

    if end == subject.cutoff_day {
        basis = WindowBasis::Cutoff;
    }
    audit.push(format!(
        "composite risk window ends day {end} (component {ending}, basis {basis:?})"
    ));
    RiskWindow {
        end_day: end,
        ending_component: ending,
        basis,
    }
}

// ---------------------------------------------------------------------------
// Gap rule
// ---------------------------------------------------------------------------

/// Outcome of the missed-assessment gap rule for one event candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapOutcome {
    Counted,
    /// Too many consecutive missed scheduled visits before the detection; the
    /// subject is censored at the last contiguous performed assessment.
    CensoredAtLastContiguous(Day),
}

/// Apply the missed-assessment rule: count consecutive missed scheduled
/// visits between the last performed assessment and the detecting one; at or
/// above `g` the event is not counted. `g = 0` disables the rule.
pub fn apply_gap_rule(candidate_event_day: Day, stream: &AssessmentStream, g: u32) -> GapOutcome {
    if g == 0 || stream.continuity == Continuity::Continuous {
        return GapOutcome::Counted;
    }
    let prev = stream.last_assessment_before(candidate_event_day);
    let attended: std::collections::BTreeSet<usize> = stream
        .assessments
        .iter()
        .filter_map(|a| a.target_index)
        .collect();
    let lower = prev.unwrap_or(-1);
    let missed = stream
        .schedule
        .iter()
        .enumerate()
        .filter(|(idx, t)| **t > lower && **t < candidate_event_day && !attended.contains(idx))
        .count();
    if missed as u32 >= g {
        GapOutcome::CensoredAtLastContiguous(prev.unwrap_or(0))
    } else {
        GapOutcome::Counted
    }
}

// ---------------------------------------------------------------------------
// Occlusion dating
// ---------------------------------------------------------------------------

/// How a hypothetical / while-prior-to-occlusion trigger occludes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OcclusionDating {
    /// Objective trigger: occlude at the trigger date, discard later data.
    At { day: Day, basis: OcclusionBasis },
    /// Subjective trigger with no actual withdrawal: does not occlude.
    DoesNotOcclude,
}

/// Force applied by the dual-dating sensitivity analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatingForce {
    /// Use the spec's objectivity resolution.
    AsSpecified,
    /// Date every hypothetical / while-prior-to-occlusion trigger at the
    /// trigger date, discarding later data.
    ForceTrigger,
    /// Keep every such patient in the risk set until actual withdrawal.
    ForceWithdrawal,
}

fn effective_objectivity(ie: &IntercurrentOccurrence, assignment: &StrategyAssignment) -> Objectivity {
    assignment.objectivity_override.unwrap_or(ie.objectivity)
}

/// Earliest withdrawal linked to this occurrence that covers at least one of
/// the estimand's components.
fn linked_withdrawal<'a>(
    subject: &'a SubjectRecord,
    spec: &EstimandSpec,
    ie: &IntercurrentOccurrence,
) -> Option<&'a WithdrawalRecord> {
    subject
        .withdrawals
        .iter()
        .filter(|w| {
            w.linked_trigger.as_deref() == Some(ie.ie_type.as_str())
                && w.withdrawal_day >= ie.detection_day
                && spec.components.iter().any(|c| w.scope.covers(&c.component_id))
        })
        .min_by_key(|w| w.withdrawal_day)
}

/// Date the occlusion caused by a trigger under a hypothetical or
/// while-prior-to-occlusion strategy. Objective triggers occlude at the
/// trigger date; subjective triggers keep the patient in the risk set until
/// the actual withdrawal (for discretely assessed endpoints, the last
/// endpoint assessment on or before it). A subjective trigger with no linked
/// withdrawal does not occlude.
pub fn occlusion_dating(
    ie: &IntercurrentOccurrence,
    subject: &SubjectRecord,
    spec: &EstimandSpec,
    strategy: &StrategyAssignment,
) -> Result<OcclusionDating> {
    if !matches!(
        strategy.strategy,
        Strategy::Hypothetical | Strategy::WhilePriorToOcclusion
    ) {
        return Err(Error::Contract(format!(
            "occlusion_dating applies only to hypothetical and while_prior_to_occlusion \
             strategies, got {}",
            strategy.strategy.as_str()
        )));
    }
    Ok(occlusion_dating_inner(ie, subject, spec, effective_objectivity(ie, strategy)).0)
}

/// Returns the dating plus, for subjective occlusions, the withdrawal day
/// through which events of interest remain countable.
fn occlusion_dating_inner(
    ie: &IntercurrentOccurrence,
    subject: &SubjectRecord,
    spec: &EstimandSpec,
    objectivity: Objectivity,
) -> (OcclusionDating, Option<Day>) {
    match objectivity {
        Objectivity::Objective => (
            OcclusionDating::At {
                day: ie.trigger_day(),
                basis: OcclusionBasis::TriggerDate,
            },
            None,
        ),
        Objectivity::Subjective => {
            let Some(w) = linked_withdrawal(subject, spec, ie) else {
                return (OcclusionDating::DoesNotOcclude, None);
            };
            let has_discrete = spec.components.iter().any(|c| {
                subject
                    .stream(&c.component_id)
                    .is_some_and(|s| s.continuity == Continuity::DiscreteScheduled)
            });
            if has_discrete {
                let last = spec
                    .components
                    .iter()
                    .filter_map(|c| subject.stream(&c.component_id))
                    .filter(|s| s.continuity == Continuity::DiscreteScheduled)
                    .filter_map(|s| s.last_assessment_on_or_before(w.withdrawal_day))
                    .max()
                    .unwrap_or(0);
                // The subjective route keeps the patient in the risk set at
                // least as long as the trigger route would.
                let day = last.max(ie.trigger_day());
                (
                    OcclusionDating::At {
                        day,
                        basis: OcclusionBasis::LastAssessment,
                    },
                    Some(w.withdrawal_day),
                )
            } else {
                (
                    OcclusionDating::At {
                        day: w.withdrawal_day,
                        basis: OcclusionBasis::ActualWithdrawal,
                    },
                    Some(w.withdrawal_day),
                )
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Derivation scan
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct Exit {
    /// Day at which this exit takes effect in the chronological scan.
    decision_day: Day,
    class: TieClass,
    /// Intra-class tie-break (component priority or occurrence index, then
    /// insertion order).
    rank: (u32, usize),
    /// Events of interest remain countable through this day; a subjective
    /// occlusion is suppressed by any countable event.
    event_grace: Option<Day>,
    time: Day,
    status: DerivedStatus,
    basis: OcclusionBasis,
    trace: Option<DatingTrace>,
    note: String,
}

fn class_position(order: &[TieClass; 3], class: TieClass) -> usize {
    order.iter().position(|c| *c == class).unwrap_or(3)
}

/// Last assessment day strictly before `day` across all of the subject's
/// streams (the widest observation interval available for dating).
fn last_any_assessment_before(subject: &SubjectRecord, day: Day) -> Option<Day> {
    subject
        .streams
        .iter()
        .filter_map(|s| s.last_assessment_before(day))
        .max()
}

fn relevant_streams<'a>(
    subject: &'a SubjectRecord,
    spec: &'a EstimandSpec,
) -> Vec<(&'a AssessmentStream, &'a ComponentSpec)> {
    let mut v: Vec<(&AssessmentStream, &ComponentSpec)> = spec
        .components
        .iter()
        .filter_map(|c| subject.stream(&c.component_id).map(|s| (s, c)))
        .collect();
    v.sort_by_key(|(_, c)| c.priority);
    v
}

/// Derive the analysis record for one subject under one estimand.
pub fn derive_record(subject: &SubjectRecord, spec: &EstimandSpec) -> Result<DerivedAnalysisRecord> {
    derive_record_forced(subject, spec, DatingForce::AsSpecified)
}

/// Derivation with an occlusion-dating force; used by the dual-dating
/// sensitivity analysis.
pub fn derive_record_forced(
    subject: &SubjectRecord,
    spec: &EstimandSpec,
    force: DatingForce,
) -> Result<DerivedAnalysisRecord> {
    let streams = relevant_streams(subject, spec);
    if streams.is_empty() {
        return Err(Error::EstimandNotAssessable {
            subject_id: subject.subject_id.clone(),
            estimand_id: spec.estimand_id.clone(),
        });
    }

    let mut audit = Vec::new();
    let window = composite_risk_window(subject, spec, &mut audit);
    let horizon = window.end_day.min(subject.cutoff_day);

    let mut exits: Vec<Exit> = Vec::new();
    let mut seq = 0usize;

    // Event-of-interest candidates, component by component.
    for (stream, comp) in &streams {
        match stream.continuity {
            Continuity::DiscreteScheduled => {
                for a in &stream.assessments {
                    let AssessmentOutcome::Event(cause) = &a.outcome else {
                        continue;
                    };
                    if !comp.event_causes.contains(cause) {
                        continue;
                    }
                    if a.day > horizon {
                        audit.push(format!(
                            "event {cause} detected day {} on {} is outside the risk window (end {horizon}): discarded",
                            a.day, comp.component_id
                        ));
                        continue;
                    }
                    let trace = DatingTrace {
                        anchor: a.day,
                        prior: stream.last_assessment_before(a.day),
                    };
                    match apply_gap_rule(a.day, stream, spec.gap_rule) {
                        GapOutcome::Counted => {
                            audit.push(format!(
                                "event candidate: {cause} detected day {} on {}",
                                a.day, comp.component_id
                            ));
                            exits.push(Exit {
                                decision_day: a.day,
                                class: TieClass::EventOfInterest,
                                rank: (comp.priority, seq),
                                event_grace: None,
                                time: trace.dated(spec.dating),
                                status: DerivedStatus::Event { cause: cause.clone() },
                                basis: OcclusionBasis::None,
                                trace: Some(trace),
                                note: String::new(),
                            });
                        }
                        GapOutcome::CensoredAtLastContiguous(d) => {
                            // The gap censoring is a property of attendance,
                            // not of strategy: it takes effect at the last
                            // contiguous assessment itself.
                            audit.push(format!(
                                "event {cause} detected day {} on {} after >= {} missed scheduled \
                                 assessments: not counted, censored at last contiguous assessment day {d}",
                                a.day, comp.component_id, spec.gap_rule
                            ));
                            let gtrace = DatingTrace {
                                anchor: d,
                                prior: stream.last_assessment_before(d),
                            };
                            exits.push(Exit {
                                decision_day: d,
                                class: TieClass::WindowEnd,
                                rank: (comp.priority, seq),
                                event_grace: None,
                                time: gtrace.dated(spec.dating),
                                status: DerivedStatus::Censored {
                                    reason: CensorReason::PhenomenalIndividual,
                                },
                                basis: OcclusionBasis::LastAssessment,
                                trace: Some(gtrace),
                                note: String::new(),
                            });
                        }
                    }
                    seq += 1;
                }
            }
            Continuity::Continuous => {
                for a in &stream.assessments {
                    let AssessmentOutcome::Event(cause) = &a.outcome else {
                        continue;
                    };
                    if !comp.event_causes.contains(cause) || a.day > horizon {
                        continue;
                    }
                    audit.push(format!(
                        "event candidate: {cause} observed day {} on {}",
                        a.day, comp.component_id
                    ));
                    exits.push(Exit {
                        decision_day: a.day,
                        class: TieClass::EventOfInterest,
                        rank: (comp.priority, seq),
                        event_grace: None,
                        time: a.day,
                        status: DerivedStatus::Event { cause: cause.clone() },
                        basis: OcclusionBasis::None,
                        trace: None,
                        note: String::new(),
                    });
                    seq += 1;
                }
                if comp.event_causes.iter().any(|c| c == "death") {
                    if let Some(dd) = subject.death_day {
                        if dd <= horizon {
                            audit.push(format!("event candidate: death observed day {dd}"));
                            exits.push(Exit {
                                decision_day: dd,
                                class: TieClass::EventOfInterest,
                                rank: (comp.priority, seq),
                                event_grace: None,
                                time: dd,
                                status: DerivedStatus::Event { cause: "death".into() },
                                basis: OcclusionBasis::None,
                                trace: None,
                                note: String::new(),
                            });
                            seq += 1;
                        } else {
                            audit.push(format!(
                                "death day {dd} is outside the risk window (end {horizon}): discarded"
                            ));
                        }
                    }
                }
            }
        }
    }

    // Intercurrent occurrences, dispatched by strategy.
    for (idx, ie) in subject.ie_occurrences.iter().enumerate() {
        let Some(assignment) = spec.assignment_for(&ie.ie_type) else {
            audit.push(format!(
                "ie {} detected day {}: no strategy assigned; implicit occlusion acts only \
                 through the assessment window",
                ie.ie_type, ie.detection_day
            ));
            continue;
        };
        match assignment.strategy {
            Strategy::TreatmentPolicy => audit.push(format!(
                "ie {} detected day {}: treatment policy, ignored; scan continues",
                ie.ie_type, ie.detection_day
            )),
            Strategy::PrincipalStratum => audit.push(format!(
                "ie {} detected day {}: principal stratum, treated as phenomenal occlusion \
                 exactly like treatment policy; scan continues",
                ie.ie_type, ie.detection_day
            )),
            Strategy::Composite => {
                if ie.detection_day > horizon {
                    audit.push(format!(
                        "ie {} (composite) detected day {} outside the risk window (end {horizon}): discarded",
                        ie.ie_type, ie.detection_day
                    ));
                    continue;
                }
                audit.push(format!(
                    "ie {} detected day {}: composite strategy, becomes the event of interest; \
                     anything afterwards is ignored",
                    ie.ie_type, ie.detection_day
                ));
                let trace = DatingTrace {
                    anchor: ie.detection_day,
                    prior: last_any_assessment_before(subject, ie.detection_day),
                };
                exits.push(Exit {
                    decision_day: ie.detection_day,
                    class: TieClass::EventOfInterest,
                    // Composite events rank after any same-day component event.
                    rank: (u32::MAX, idx),
                    event_grace: None,
                    time: trace.dated(spec.dating),
                    status: DerivedStatus::Event { cause: ie.ie_type.clone() },
                    basis: OcclusionBasis::None,
                    trace: Some(trace),
                    note: String::new(),
                });
            }
            Strategy::Hypothetical | Strategy::WhilePriorToOcclusion => {
                let handling = assignment
                    .occlusion_handling
                    .unwrap_or(OcclusionHandling::Censor);
                let objectivity = match force {
                    DatingForce::AsSpecified => effective_objectivity(ie, assignment),
                    DatingForce::ForceTrigger => Objectivity::Objective,
                    DatingForce::ForceWithdrawal => Objectivity::Subjective,
                };
                let (dating, grace) = occlusion_dating_inner(ie, subject, spec, objectivity);
                match dating {
                    OcclusionDating::DoesNotOcclude => audit.push(format!(
                        "ie {} detected day {}: {} with subjective trigger but no linked \
                         withdrawal; does not occlude",
                        ie.ie_type,
                        ie.detection_day,
                        assignment.strategy.as_str()
                    )),
                    OcclusionDating::At { day, basis } => {
                        if day > horizon {
                            audit.push(format!(
                                "ie {} occlusion day {day} outside the risk window (end {horizon}): \
                                 window end precedes it",
                                ie.ie_type
                            ));
                            continue;
                        }
                        let status = match handling {
                            OcclusionHandling::Censor => DerivedStatus::Censored {
                                reason: CensorReason::NoumenalStrategy,
                            },
                            OcclusionHandling::CompetingRisk => DerivedStatus::Competing {
                                cause: ie.ie_type.clone(),
                            },
                        };
                        let trace = match basis {
                            OcclusionBasis::TriggerDate if ie.onset_day.is_none() => {
                                Some(DatingTrace {
                                    anchor: day,
                                    prior: last_any_assessment_before(subject, day),
                                })
                            }
                            OcclusionBasis::LastAssessment => Some(DatingTrace {
                                anchor: day,
                                prior: last_any_assessment_before(subject, day),
                            }),
                            _ => None,
                        };
                        let (decision, grace_note) = match grace {
                            // Subjective: events observed on or before the
                            // actual withdrawal are still counted. Beyond the
                            // risk window the occlusion competes at the
                            // window end (and wins the tie over it).
                            Some(w) => (
                                w.min(horizon),
                                format!("; events on or before withdrawal day {w} still count"),
                            ),
                            None => (day, "; later data discarded".to_string()),
                        };
                        audit.push(format!(
                            "ie {} detected day {}: {} ({:?}), occlusion at day {day} ({}){}",
                            ie.ie_type,
                            ie.detection_day,
                            assignment.strategy.as_str(),
                            objectivity,
                            basis.as_str(),
                            grace_note
                        ));
                        exits.push(Exit {
                            decision_day: decision,
                            class: TieClass::IntercurrentEvent,
                            rank: (idx as u32, idx),
                            event_grace: grace,
                            time: trace.map_or(day, |t| t.dated(spec.dating)),
                            status,
                            basis,
                            trace,
                            note: String::new(),
                        });
                    }
                }
            }
        }
    }

    // End-of-window exit: classify why observation stopped.
    {
        let design_cause = subject
            .ie_occurrences
            .iter()
            .filter(|ie| {
                spec.design_noumenal_events.contains(&ie.ie_type) && ie.detection_day <= horizon
            })
            .max_by_key(|ie| ie.detection_day);
        let (reason, basis, trace, why) = if horizon == subject.cutoff_day {
            let continuous = streams.iter().any(|(s, _)| s.continuity == Continuity::Continuous);
            let trace = if continuous {
                None
            } else {
                Some(DatingTrace {
                    anchor: horizon,
                    prior: last_any_assessment_before(subject, horizon),
                })
            };
            (
                CensorReason::AdminCutoff,
                OcclusionBasis::CutoffDate,
                trace,
                "administrative cutoff".to_string(),
            )
        } else if window.basis == WindowBasis::ActualWithdrawal {
            (
                CensorReason::PhenomenalIndividual,
                OcclusionBasis::ActualWithdrawal,
                None,
                "withdrawal from continuous follow-up".to_string(),
            )
        } else if let Some(ie) = design_cause {
            (
                CensorReason::NoumenalImplicitDesign,
                OcclusionBasis::LastAssessment,
                Some(DatingTrace {
                    anchor: horizon,
                    prior: last_any_assessment_before(subject, horizon),
                }),
                format!(
                    "assessments end by design at ie {} (detected day {})",
                    ie.ie_type, ie.detection_day
                ),
            )
        } else {
            (
                CensorReason::PhenomenalIndividual,
                OcclusionBasis::LastAssessment,
                Some(DatingTrace {
                    anchor: horizon,
                    prior: last_any_assessment_before(subject, horizon),
                }),
                "assessments ended without an acknowledged cause".to_string(),
            )
        };
        exits.push(Exit {
            decision_day: horizon,
            class: TieClass::WindowEnd,
            rank: (u32::MAX, usize::MAX),
            event_grace: None,
            time: trace.map_or(horizon, |t| t.dated(spec.dating)),
            status: DerivedStatus::Censored { reason },
            basis,
            trace,
            note: format!("no exit before window end day {horizon}: {why}"),
        });
    }

    // A subjective occlusion is suppressed by any event of interest observed
    // on or before the linked withdrawal.
    let event_days: Vec<Day> = exits
        .iter()
        .filter(|e| e.class == TieClass::EventOfInterest)
        .map(|e| e.decision_day)
        .collect();
    exits.retain(|e| match e.event_grace {
        Some(w) => {
            let suppressed = event_days.iter().any(|d| *d <= w);
            if suppressed {
                audit.push(format!(
                    "subjective occlusion suppressed: event of interest observed on or before \
                     withdrawal day {w} is counted"
                ));
            }
            !suppressed
        }
        None => true,
    });

    exits.sort_by_key(|e| (e.decision_day, class_position(&spec.tie_order, e.class), e.rank));
    let winner = exits.first().expect("window-end exit always present").clone();

    // Dispatch notes were audited at creation; only the window-end fallback
    // explains itself here, where it is known that nothing preceded it.
    if !winner.note.is_empty() {
        audit.push(winner.note.clone());
    }
    audit.push(format!(
        "final: {} at day {} (basis {})",
        match &winner.status {
            DerivedStatus::Event { cause } => format!("event ({cause})"),
            DerivedStatus::Censored { reason } => format!("censored ({})", reason.as_str()),
            DerivedStatus::Competing { cause } => format!("competing ({cause})"),
        },
        winner.time,
        winner.basis.as_str()
    ));

    Ok(DerivedAnalysisRecord {
        subject_id: subject.subject_id.clone(),
        estimand_id: spec.estimand_id.clone(),
        time_days: winner.time,
        status: winner.status,
        occlusion_basis: winner.basis,
        audit,
        trace: winner.trace,
    })
}

// ---------------------------------------------------------------------------
// Safety derivation
// ---------------------------------------------------------------------------

/// Derive a time-to-event safety record over the treatment-emergent window
/// `[0, last_dose + w]`. Events of interest within the window are events;
/// death (and any trigger assigned a competing-risk handling) within it is
/// competing; reaching the window end without either censors there.
pub fn derive_safety_record(
    subject: &SubjectRecord,
    spec: &EstimandSpec,
) -> Result<DerivedAnalysisRecord> {
    let w = spec.treatment_emergent_window_days.ok_or_else(|| {
        Error::Spec(format!(
            "estimand {}: treatment_emergent_window_days required for safety derivation",
            spec.estimand_id
        ))
    })?;
    let last_dose = subject.last_dose_day.ok_or_else(|| Error::MissingLastDose {
        subject_id: subject.subject_id.clone(),
    })?;
    let streams = relevant_streams(subject, spec);
    if streams.is_empty() {
        return Err(Error::EstimandNotAssessable {
            subject_id: subject.subject_id.clone(),
            estimand_id: spec.estimand_id.clone(),
        });
    }

    let window_end = last_dose + w;
    let end = window_end.min(subject.cutoff_day);
    let mut audit = vec![format!(
        "treatment-emergent window [0, {window_end}] (last dose day {last_dose} + {w} days)"
    )];
    if window_end > subject.cutoff_day {
        audit.push(format!(
            "window end {window_end} after cutoff {}: bounded by cutoff",
            subject.cutoff_day
        ));
    }

    // (day, is_event, status, basis, note); earliest wins, events beat
    // competing exits on the same day.
    let mut candidates: Vec<(Day, u8, DerivedStatus, OcclusionBasis, String)> = Vec::new();

    let all_causes: Vec<&String> = spec.components.iter().flat_map(|c| &c.event_causes).collect();
    for (stream, comp) in &streams {
        for a in &stream.assessments {
            let AssessmentOutcome::Event(cause) = &a.outcome else {
                continue;
            };
            if comp.event_causes.contains(cause) && a.day <= end {
                candidates.push((
                    a.day,
                    0,
                    DerivedStatus::Event { cause: cause.clone() },
                    OcclusionBasis::None,
                    format!("event {cause} observed day {} on {}", a.day, comp.component_id),
                ));
            }
        }
        if stream.continuity == Continuity::Continuous
            && comp.event_causes.iter().any(|c| c == "death")
        {
            if let Some(dd) = subject.death_day {
                if dd <= end {
                    candidates.push((
                        dd,
                        0,
                        DerivedStatus::Event { cause: "death".into() },
                        OcclusionBasis::None,
                        format!("death observed day {dd} (event of interest)"),
                    ));
                }
            }
        }
    }

    // Death precludes further safety events unless it is itself the event.
    if !all_causes.iter().any(|c| c.as_str() == "death") {
        if let Some(dd) = subject.death_day {
            if dd <= end {
                candidates.push((
                    dd,
                    1,
                    DerivedStatus::Competing { cause: "death".into() },
                    OcclusionBasis::TriggerDate,
                    format!("death day {dd} within the window precludes the event: competing risk"),
                ));
            }
        }
    }
    for ie in &subject.ie_occurrences {
        if let Some(a) = spec.assignment_for(&ie.ie_type) {
            if a.occlusion_handling == Some(OcclusionHandling::CompetingRisk)
                && ie.trigger_day() <= end
            {
                candidates.push((
                    ie.trigger_day(),
                    1,
                    DerivedStatus::Competing { cause: ie.ie_type.clone() },
                    OcclusionBasis::TriggerDate,
                    format!(
                        "ie {} at day {} handled as competing risk within the window",
                        ie.ie_type,
                        ie.trigger_day()
                    ),
                ));
            }
        }
    }

    candidates.sort_by_key(|(day, tie, ..)| (*day, *tie));
    let (time, status, basis, note) = match candidates.into_iter().next() {
        Some((day, _, status, basis, note)) => (day, status, basis, note),
        None => {
            let reason = if window_end <= subject.cutoff_day {
                CensorReason::NoumenalStrategy
            } else {
                CensorReason::AdminCutoff
            };
            (
                end,
                DerivedStatus::Censored { reason },
                OcclusionBasis::CutoffDate,
                format!("no event or competing risk by window end day {end}: censored"),
            )
        }
    };
    audit.push(note);
    audit.push(format!(
        "final: {} at day {time} (basis {})",
        match &status {
            DerivedStatus::Event { cause } => format!("event ({cause})"),
            DerivedStatus::Censored { reason } => format!("censored ({})", reason.as_str()),
            DerivedStatus::Competing { cause } => format!("competing ({cause})"),
        },
        basis.as_str()
    ));

    Ok(DerivedAnalysisRecord {
        subject_id: subject.subject_id.clone(),
        estimand_id: spec.estimand_id.clone(),
        time_days: time,
        status,
        occlusion_basis: basis,
        audit,
        trace: None,
    })
}

// ---------------------------------------------------------------------------
// Dataset derivation
// ---------------------------------------------------------------------------

/// Dataset-level audit: counts by status, censor reason, and cause.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetAudit {
    pub n_subjects: usize,
    pub by_status: BTreeMap<String, usize>,
    pub by_censor_reason: BTreeMap<String, usize>,
    pub by_cause: BTreeMap<String, usize>,
}

impl DatasetAudit {
    pub fn summarize(records: &[DerivedAnalysisRecord]) -> Self {
        let mut audit = DatasetAudit {
            n_subjects: records.len(),
            ..Default::default()
        };
        for r in records {
            *audit.by_status.entry(r.status.kind().to_string()).or_insert(0) += 1;
            if let Some(reason) = r.censor_reason() {
                *audit
                    .by_censor_reason
                    .entry(reason.as_str().to_string())
                    .or_insert(0) += 1;
            }
            if let Some(cause) = r.cause() {
                *audit.by_cause.entry(cause.to_string()).or_insert(0) += 1;
            }
        }
        audit
    }
}

/// Derive one record per subject, in deterministic subject_id order. Subjects
/// are evaluated in parallel; results are identical to sequential evaluation.
/// An estimand with a treatment-emergent window set derives via the safety
/// path. Errors are propagated with the offending subject attached.
pub fn derive_dataset(
    subjects: &[SubjectRecord],
    spec: &EstimandSpec,
) -> Result<(Vec<DerivedAnalysisRecord>, DatasetAudit)> {
    derive_dataset_forced(subjects, spec, DatingForce::AsSpecified)
}

pub fn derive_dataset_forced(
    subjects: &[SubjectRecord],
    spec: &EstimandSpec,
    force: DatingForce,
) -> Result<(Vec<DerivedAnalysisRecord>, DatasetAudit)> {
    spec.check_invariants()?;
    let mut ordered: Vec<&SubjectRecord> = subjects.iter().collect();
    ordered.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));

    let safety = spec.treatment_emergent_window_days.is_some();
    let results: Vec<Result<DerivedAnalysisRecord>> = ordered
        .par_iter()
        .map(|s| {
            let derived = if safety {
                derive_safety_record(s, spec)
            } else {
                derive_record_forced(s, spec, force)
            };
            derived.map_err(|e| Error::ForSubject {
                subject_id: s.subject_id.clone(),
                source: Box::new(e),
            })
        })
        .collect();

    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }
    let audit = DatasetAudit::summarize(&records);
    Ok((records, audit))
}
