//! Core data model: subject timelines, estimand specifications, and derived
//! analysis records.
//!
//! All days are integer days from subject time-zero (randomization = day 0).
//! Every type here is immutable after construction; validation functions are
//! pure and return findings as data rather than failing.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer day offset from subject time-zero.
pub type Day = i64;

// ---------------------------------------------------------------------------
// Subject timeline
// ---------------------------------------------------------------------------

/// How a stream observes its outcome over time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuity {
    /// Observed to the day (e.g. survival); carries no visit schedule.
    Continuous,
    /// Observed only at scheduled visits (e.g. radiological assessments).
    DiscreteScheduled,
}

/// Result of a single performed assessment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssessmentOutcome {
    /// Visit happened but the endpoint was not evaluated (e.g. dosing only).
    NotEvaluated,
    /// Endpoint evaluated, no event found.
    Normal,
    /// Endpoint evaluated and an event of the named cause detected.
    Event(String),
}

/// One performed assessment of a stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    /// Index into the stream schedule this visit fulfilled; None = unscheduled.
    pub target_index: Option<usize>,
    pub day: Day,
    pub outcome: AssessmentOutcome,
}

/// One assessment stream of a subject (tumor scans, symptom visits, survival...).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentStream {
    pub component_id: String,
    /// Protocol target days. Empty iff the stream is continuous.
    #[serde(default)]
    pub schedule: Vec<Day>,
    /// Performed assessments, strictly increasing in day.
    #[serde(default)]
    pub assessments: Vec<Assessment>,
    pub continuity: Continuity,
}

impl AssessmentStream {
    /// Day of the last performed assessment, if any.
    pub fn last_assessment_day(&self) -> Option<Day> {
        self.assessments.last().map(|a| a.day)
    }

    /// Last performed assessment strictly before `day`.
    pub fn last_assessment_before(&self, day: Day) -> Option<Day> {
        self.assessments
            .iter()
            .rev()
            .find(|a| a.day < day)
            .map(|a| a.day)
    }

    /// Last performed assessment on or before `day`.
    pub fn last_assessment_on_or_before(&self, day: Day) -> Option<Day> {
        self.assessments
            .iter()
            .rev()
            .find(|a| a.day <= day)
            .map(|a| a.day)
    }
}

/// Whether the call that an intercurrent event occurred rests on judgment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objectivity {
    Objective,
    Subjective,
}

/// One observed intercurrent event, with the distinct days the trial can know
/// about it: actual onset (often unknowable), first assessment showing it,
/// and its interpretation/adjudication.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntercurrentOccurrence {
    pub ie_type: String,
    #[serde(default)]
    pub onset_day: Option<Day>,
    pub detection_day: Day,
    pub identification_day: Day,
    pub objectivity: Objectivity,
}

impl IntercurrentOccurrence {
    /// Day used as the trigger date: onset when known, else detection.
    pub fn trigger_day(&self) -> Day {
        self.onset_day.unwrap_or(self.detection_day)
    }
}

/// Which streams a withdrawal removes the subject from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WithdrawalScope {
    All,
    Streams(BTreeSet<String>),
}

impl WithdrawalScope {
    pub fn covers(&self, component_id: &str) -> bool {
        match self {
            WithdrawalScope::All => true,
            WithdrawalScope::Streams(set) => set.contains(component_id),
        }
    }
}

/// An actual withdrawal from assessments, optionally linked to the
/// intercurrent event type that precipitated it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WithdrawalRecord {
    pub withdrawal_day: Day,
    pub scope: WithdrawalScope,
    /// ie_type of the precipitating occurrence, if any.
    #[serde(default)]
    pub linked_trigger: Option<String>,
}

/// One patient's full observed timeline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub arm: String,
    /// Calendar day of accrual; used for calendar-to-subject day conversion.
    #[serde(default)]
    pub accrual_day: Option<Day>,
    pub streams: Vec<AssessmentStream>,
    #[serde(default)]
    pub ie_occurrences: Vec<IntercurrentOccurrence>,
    #[serde(default)]
    pub withdrawals: Vec<WithdrawalRecord>,
    #[serde(default)]
    pub death_day: Option<Day>,
    #[serde(default)]
    pub last_dose_day: Option<Day>,
    /// Administrative data cutoff in subject days.
    pub cutoff_day: Day,
}

impl SubjectRecord {
    pub fn stream(&self, component_id: &str) -> Option<&AssessmentStream> {
        self.streams.iter().find(|s| s.component_id == component_id)
    }

    /// Earliest withdrawal covering the given component, if any.
    pub fn withdrawal_for(&self, component_id: &str) -> Option<&WithdrawalRecord> {
        self.withdrawals
            .iter()
            .filter(|w| w.scope.covers(component_id))
            .min_by_key(|w| w.withdrawal_day)
    }
}

// ---------------------------------------------------------------------------
// Estimand specification
// ---------------------------------------------------------------------------

/// Intercurrent-event handling strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    TreatmentPolicy,
    Composite,
    Hypothetical,
    #[serde(alias = "while_on_treatment")]
    WhilePriorToOcclusion,
    PrincipalStratum,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::TreatmentPolicy => "treatment_policy",
            Strategy::Composite => "composite",
            Strategy::Hypothetical => "hypothetical",
            Strategy::WhilePriorToOcclusion => "while_prior_to_occlusion",
            Strategy::PrincipalStratum => "principal_stratum",
        }
    }
}

/// What to do at the occlusion point when a hypothetical or
/// while-prior-to-occlusion strategy removes a patient from the risk set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionHandling {
    Censor,
    CompetingRisk,
}

/// Strategy assigned to one intercurrent event type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyAssignment {
    pub ie_type: String,
    pub strategy: Strategy,
    /// Required iff strategy is hypothetical or while_prior_to_occlusion.
    #[serde(default)]
    pub occlusion_handling: Option<OcclusionHandling>,
    /// Overrides the per-occurrence objectivity for every occurrence of this type.
    #[serde(default)]
    pub objectivity_override: Option<Objectivity>,
}

/// Where within the detection interval events (and censorings) are dated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatingMode {
    /// At the detecting assessment (default).
    #[default]
    Right,
    /// Day after the last prior assessment.
    Left,
    /// Rounded midpoint of the interval, half-days rounded up.
    Midpoint,
}

/// Whether unscheduled assessments are common enough that a discretely
/// scheduled stream should be treated as continuously assessable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnscheduledAssumption {
    /// Unscheduled assessments uncommon: a patient stays at risk until the
    /// first missed scheduled visit (default).
    #[default]
    Discrete,
    /// Unscheduled assessments common: risk ends at the last performed visit.
    Continuous,
}

/// Resolution order for same-day ties in the derivation scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieClass {
    EventOfInterest,
    IntercurrentEvent,
    WindowEnd,
}

pub const DEFAULT_TIE_ORDER: [TieClass; 3] = [
    TieClass::EventOfInterest,
    TieClass::IntercurrentEvent,
    TieClass::WindowEnd,
];

fn default_tie_order() -> [TieClass; 3] {
    DEFAULT_TIE_ORDER
}

fn default_gap_rule() -> u32 {
    2
}

/// One endpoint component of a (possibly composite) estimand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub component_id: String,
    /// Cause ids counted as events of interest for this component. The
    /// reserved cause "death" is satisfied by the subject's death_day on
    /// continuous streams.
    pub event_causes: Vec<String>,
    /// Tie-break rank among same-day component events; must be unique.
    pub priority: u32,
}

/// Declarative definition of an estimand: endpoint components, strategy per
/// intercurrent event type, dating conventions, gap rule, analysis windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandSpec {
    pub estimand_id: String,
    pub components: Vec<ComponentSpec>,
    #[serde(default)]
    pub strategy_table: Vec<StrategyAssignment>,
    /// Max consecutive missed scheduled assessments before an event is not
    /// counted; 0 disables the rule. Default 2.
    #[serde(default = "default_gap_rule")]
    pub gap_rule: u32,
    #[serde(default)]
    pub dating: DatingMode,
    /// Safety observation lag after last dose (e.g. 30 days).
    #[serde(default)]
    pub treatment_emergent_window_days: Option<Day>,
    /// Event types that end assessments by design; used to attribute
    /// otherwise-unexplained assessment stops.
    #[serde(default)]
    pub design_noumenal_events: BTreeSet<String>,
    #[serde(default)]
    pub unscheduled_assumption: UnscheduledAssumption,
    #[serde(default = "default_tie_order")]
    pub tie_order: [TieClass; 3],
}

impl EstimandSpec {
    /// Minimal single-component spec with no strategy assignments.
    pub fn single_component(estimand_id: &str, component_id: &str, cause: &str) -> Self {
        EstimandSpec {
            estimand_id: estimand_id.to_string(),
            components: vec![ComponentSpec {
                component_id: component_id.to_string(),
                event_causes: vec![cause.to_string()],
                priority: 1,
            }],
            strategy_table: Vec::new(),
            gap_rule: default_gap_rule(),
            dating: DatingMode::default(),
            treatment_emergent_window_days: None,
            design_noumenal_events: BTreeSet::new(),
            unscheduled_assumption: UnscheduledAssumption::default(),
            tie_order: DEFAULT_TIE_ORDER,
        }
    }

    pub fn assignment_for(&self, ie_type: &str) -> Option<&StrategyAssignment> {
        self.strategy_table.iter().find(|a| a.ie_type == ie_type)
    }

    pub fn component(&self, component_id: &str) -> Option<&ComponentSpec> {
        self.components.iter().find(|c| c.component_id == component_id)
    }

    /// Structural invariants of the spec itself (independent of any data).
    pub fn check_invariants(&self) -> Result<()> {
        if self.components.is_empty() {
            return Err(Error::Spec(format!(
                "estimand {}: components must be nonempty",
                self.estimand_id
            )));
        }
        let mut priorities = BTreeSet::new();
        for c in &self.components {
            if !priorities.insert(c.priority) {
                return Err(Error::Spec(format!(
                    "estimand {}: component priority {} is not unique",
                    self.estimand_id, c.priority
                )));
            }
            if c.event_causes.is_empty() {
                return Err(Error::Spec(format!(
                    "estimand {}: component {} lists no event causes",
                    self.estimand_id, c.component_id
                )));
            }
        }
        let mut ids = BTreeSet::new();
        for c in &self.components {
            if !ids.insert(c.component_id.as_str()) {
                return Err(Error::Spec(format!(
                    "estimand {}: duplicate component {}",
                    self.estimand_id, c.component_id
                )));
            }
        }
        let mut ie_types = BTreeSet::new();
        for a in &self.strategy_table {
            if !ie_types.insert(a.ie_type.as_str()) {
                return Err(Error::Spec(format!(
                    "estimand {}: duplicate strategy assignment for ie_type {}",
                    self.estimand_id, a.ie_type
                )));
            }
            let needs_handling = matches!(
                a.strategy,
                Strategy::Hypothetical | Strategy::WhilePriorToOcclusion
            );
            match (needs_handling, a.occlusion_handling.is_some()) {
                (true, false) => {
                    return Err(Error::Spec(format!(
                        "estimand {}: ie_type {}: strategy {} requires occlusion_handling",
                        self.estimand_id,
                        a.ie_type,
                        a.strategy.as_str()
                    )))
                }
                (false, true) => {
                    return Err(Error::Spec(format!(
                        "estimand {}: ie_type {}: occlusion_handling is only valid for \
                         hypothetical and while_prior_to_occlusion strategies, not {}",
                        self.estimand_id,
                        a.ie_type,
                        a.strategy.as_str()
                    )))
                }
                _ => {}
            }
        }
        let mut classes = BTreeSet::new();
        for t in self.tie_order {
            classes.insert(t);
        }
        if classes.len() != 3 {
            return Err(Error::Spec(format!(
                "estimand {}: tie_order must be a permutation of the three tie classes",
                self.estimand_id
            )));
        }
        if let Some(w) = self.treatment_emergent_window_days {
            if w < 0 {
                return Err(Error::Spec(format!(
                    "estimand {}: treatment_emergent_window_days must be >= 0",
                    self.estimand_id
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Derived analysis record
// ---------------------------------------------------------------------------

/// Why a censored record was censored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CensorReason {
    /// Individual on-study circumstance (dropout, missed visits).
    PhenomenalIndividual,
    /// A strategy in the table censored at the occlusion point.
    NoumenalStrategy,
    /// Assessments ended by design at an event outside the strategy table.
    NoumenalImplicitDesign,
    /// Administrative data cutoff.
    AdminCutoff,
}

impl CensorReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            CensorReason::PhenomenalIndividual => "phenomenal_individual",
            CensorReason::NoumenalStrategy => "noumenal_strategy",
            CensorReason::NoumenalImplicitDesign => "noumenal_implicit_design",
            CensorReason::AdminCutoff => "admin_cutoff",
        }
    }
}

/// Outcome status of a derived record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivedStatus {
    Event { cause: String },
    Censored { reason: CensorReason },
    Competing { cause: String },
}

impl DerivedStatus {
    pub fn kind(&self) -> &'static str {
        match self {
            DerivedStatus::Event { .. } => "event",
            DerivedStatus::Censored { .. } => "censored",
            DerivedStatus::Competing { .. } => "competing",
        }
    }

    pub fn is_event(&self) -> bool {
        matches!(self, DerivedStatus::Event { .. })
    }
}

/// What the exit time was anchored to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionBasis {
    TriggerDate,
    LastAssessment,
    ActualWithdrawal,
    CutoffDate,
    None,
}

impl OcclusionBasis {
    pub fn as_str(&self) -> &'static str {
        match self {
            OcclusionBasis::TriggerDate => "trigger_date",
            OcclusionBasis::LastAssessment => "last_assessment",
            OcclusionBasis::ActualWithdrawal => "actual_withdrawal",
            OcclusionBasis::CutoffDate => "cutoff_date",
            OcclusionBasis::None => "none",
        }
    }
}

/// Detection interval behind a record's time, kept so sensitivity re-dating
/// can move the date without re-deriving. `prior` = last prior assessment
/// (None means the anchor is the first-ever assessment); absence of the whole
/// trace means the time was observed exactly (continuous observation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatingTrace {
    pub anchor: Day,
    pub prior: Option<Day>,
}

impl DatingTrace {
    /// Date the anchored point under the given mode. With no prior assessment
    /// the interval is taken to start at day 0, so left dating yields day 1
    /// and midpoint dating yields ceil(anchor / 2). Half-days round up.
    pub fn dated(&self, mode: DatingMode) -> Day {
        let prior = self.prior.unwrap_or(0);
        match mode {
            DatingMode::Right => self.anchor,
            DatingMode::Left => (prior + 1).min(self.anchor),
            DatingMode::Midpoint => ((prior + self.anchor + 1) / 2).min(self.anchor),
        }
    }
}

/// Per subject, per estimand analysis row with a full audit trail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DerivedAnalysisRecord {
    pub subject_id: String,
    pub estimand_id: String,
    pub time_days: Day,
    pub status: DerivedStatus,
    pub occlusion_basis: OcclusionBasis,
    /// Ordered human-readable decision steps; never empty.
    pub audit: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<DatingTrace>,
}

impl DerivedAnalysisRecord {
    pub fn censor_reason(&self) -> Option<CensorReason> {
        match self.status {
            DerivedStatus::Censored { reason } => Some(reason),
            _ => None,
        }
    }

    pub fn cause(&self) -> Option<&str> {
        match &self.status {
            DerivedStatus::Event { cause } | DerivedStatus::Competing { cause } => Some(cause),
            DerivedStatus::Censored { .. } => None,
        }
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// One violated invariant in a subject record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub subject_id: String,
    pub field: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.subject_id, self.field, self.rule)
    }
}

/// Severity of a spec-vs-data finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingSeverity {
    Warning,
    Info,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    /// Observed ie_type absent from the strategy table: the design will stop
    /// or discard data at it without the estimand acknowledging it.
    ImplicitNoumenalOcclusion,
    /// Strategy assignment whose ie_type never occurs in the data.
    UnexercisedStrategy,
}

/// One finding from validating a spec against observed data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub kind: FindingKind,
    pub severity: FindingSeverity,
    pub estimand_id: String,
    pub ie_type: String,
    pub detail: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            FindingKind::ImplicitNoumenalOcclusion => "implicit_noumenal_occlusion",
            FindingKind::UnexercisedStrategy => "unexercised_strategy",
        };
        let sev = match self.severity {
            FindingSeverity::Warning => "warning",
            FindingSeverity::Info => "info",
        };
        write!(
            f,
            "[{sev}] {kind} ({}, ie_type {}): {}",
            self.estimand_id, self.ie_type, self.detail
        )
    }
}

fn violation(subject: &SubjectRecord, field: &str, rule: String) -> Violation {
    Violation {
        subject_id: subject.subject_id.clone(),
        field: field.to_string(),
        rule,
    }
}

/// Check every type invariant of a subject record. Returns an empty list iff
/// the record is well-formed; violations are data, not failures.
pub fn validate_subject(subject: &SubjectRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    let cutoff = subject.cutoff_day;
    if cutoff < 0 {
        out.push(violation(subject, "cutoff_day", "cutoff_day must be >= 0".into()));
    }
    if let Some(a) = subject.accrual_day {
        if a < 0 {
            out.push(violation(subject, "accrual_day", "accrual_day must be >= 0".into()));
        }
    }

    let mut seen_ids = BTreeSet::new();
    for stream in &subject.streams {
        let field = format!("streams[{}]", stream.component_id);
        if !seen_ids.insert(stream.component_id.as_str()) {
            out.push(violation(
                subject,
                &field,
                "duplicate component_id across streams".into(),
            ));
        }
        match stream.continuity {
            Continuity::Continuous if !stream.schedule.is_empty() => out.push(violation(
                subject,
                &field,
                "continuous streams must have an empty schedule".into(),
            )),
            Continuity::DiscreteScheduled if stream.schedule.is_empty() => out.push(violation(
                subject,
                &field,
                "discrete_scheduled streams must have a nonempty schedule".into(),
            )),
            _ => {}
        }
        for w in stream.schedule.windows(2) {
            if w[1] <= w[0] {
                out.push(violation(
                    subject,
                    &field,
                    format!("schedule days must be strictly increasing ({} then {})", w[0], w[1]),
                ));
                break;
            }
        }
        if stream.schedule.first().is_some_and(|d| *d < 0) {
            out.push(violation(subject, &field, "schedule days must be >= 0".into()));
        }
        for a in &stream.assessments {
            if a.day < 0 {
                out.push(violation(
                    subject,
                    &field,
                    format!("assessment day {} must be >= 0", a.day),
                ));
            }
            if a.day > cutoff {
                out.push(violation(
                    subject,
                    &field,
                    format!("assessment day {} after cutoff day {}", a.day, cutoff),
                ));
            }
            if let Some(idx) = a.target_index {
                if idx >= stream.schedule.len() {
                    out.push(violation(
                        subject,
                        &field,
                        format!("target_index {idx} outside schedule of length {}", stream.schedule.len()),
                    ));
                }
            }
            if let Some(dd) = subject.death_day {
                if a.day > dd {
                    out.push(violation(
                        subject,
                        &field,
                        format!("assessment after death (day {} > death day {})", a.day, dd),
                    ));
                }
            }
        }
        for w in stream.assessments.windows(2) {
            if w[1].day <= w[0].day {
                out.push(violation(
                    subject,
                    &field,
                    format!(
                        "assessment days must be strictly increasing ({} then {})",
                        w[0].day, w[1].day
                    ),
                ));
                break;
            }
        }
        if let Some(w) = subject.withdrawal_for(&stream.component_id) {
            if stream.last_assessment_day().is_some_and(|d| d > w.withdrawal_day) {
                out.push(violation(
                    subject,
                    &field,
                    format!("assessment after withdrawal day {}", w.withdrawal_day),
                ));
            }
        }
    }

    for (i, ie) in subject.ie_occurrences.iter().enumerate() {
        let field = format!("ie_occurrences[{i}]({})", ie.ie_type);
        if let Some(onset) = ie.onset_day {
            if onset < 0 {
                out.push(violation(subject, &field, "onset_day must be >= 0".into()));
            }
            if onset > ie.detection_day {
                out.push(violation(
                    subject,
                    &field,
                    format!(
                        "onset_day {} must be <= detection_day {}",
                        onset, ie.detection_day
                    ),
                ));
            }
        }
        if ie.detection_day < 0 {
            out.push(violation(subject, &field, "detection_day must be >= 0".into()));
        }
        if ie.detection_day > ie.identification_day {
            out.push(violation(
                subject,
                &field,
                format!(
                    "detection_day {} must be <= identification_day {}",
                    ie.detection_day, ie.identification_day
                ),
            ));
        }
        for (name, day) in [("detection_day", ie.detection_day), ("identification_day", ie.identification_day)] {
            if day > cutoff {
                out.push(violation(
                    subject,
                    &field,
                    format!("{name} {day} after cutoff day {cutoff}"),
                ));
            }
        }
    }

    for (i, w) in subject.withdrawals.iter().enumerate() {
        let field = format!("withdrawals[{i}]");
        if w.withdrawal_day < 0 {
            out.push(violation(subject, &field, "withdrawal_day must be >= 0".into()));
        }
        if w.withdrawal_day > cutoff {
            out.push(violation(
                subject,
                &field,
                format!("withdrawal_day {} after cutoff day {}", w.withdrawal_day, cutoff),
            ));
        }
        if let WithdrawalScope::Streams(ids) = &w.scope {
            for id in ids {
                if subject.stream(id).is_none() {
                    out.push(violation(
                        subject,
                        &field,
                        format!("withdrawn stream {id} does not exist"),
                    ));
                }
            }
        }
        if let Some(trigger) = &w.linked_trigger {
            let resolvable = subject
                .ie_occurrences
                .iter()
                .any(|ie| &ie.ie_type == trigger && ie.detection_day <= w.withdrawal_day);
            if !resolvable {
                out.push(violation(
                    subject,
                    &field,
                    format!(
                        "linked trigger {trigger} has no occurrence detected on or before day {}",
                        w.withdrawal_day
                    ),
                ));
            }
        }
    }

    if let Some(dd) = subject.death_day {
        if dd < 0 {
            out.push(violation(subject, "death_day", "death_day must be >= 0".into()));
        }
        if dd > cutoff {
            out.push(violation(
                subject,
                "death_day",
                format!("death_day {dd} after cutoff day {cutoff}"),
            ));
        }
    }
    if let Some(ld) = subject.last_dose_day {
        if ld < 0 || ld > cutoff {
            out.push(violation(
                subject,
                "last_dose_day",
                format!("last_dose_day {ld} must be in [0, cutoff {cutoff}]"),
            ));
        }
    }

    out
}

/// Check an estimand spec against observed data: every ie_type observed but
/// absent from the strategy table is flagged as implicit noumenal occlusion;
/// assignments never exercised are flagged as informational.
pub fn validate_spec_against_data(spec: &EstimandSpec, subjects: &[SubjectRecord]) -> Vec<Finding> {
    let mut observed: BTreeSet<&str> = BTreeSet::new();
    for s in subjects {
        for ie in &s.ie_occurrences {
            observed.insert(ie.ie_type.as_str());
        }
    }
    let assigned: BTreeSet<&str> = spec
        .strategy_table
        .iter()
        .map(|a| a.ie_type.as_str())
        .collect();

    let mut findings = Vec::new();
    for ie_type in &observed {
        if !assigned.contains(ie_type) {
            let declared = spec.design_noumenal_events.contains(*ie_type);
            findings.push(Finding {
                kind: FindingKind::ImplicitNoumenalOcclusion,
                severity: if declared {
                    FindingSeverity::Info
                } else {
                    FindingSeverity::Warning
                },
                estimand_id: spec.estimand_id.clone(),
                ie_type: ie_type.to_string(),
                detail: if declared {
                    "observed but absent from the strategy table; declared as a design \
                     noumenal event, so assessment stops will be attributed to it"
                        .to_string()
                } else {
                    "observed in the data but not acknowledged in the strategy table; \
                     assessment stops at this event will censor implicitly"
                        .to_string()
                },
            });
        }
    }
    for a in &spec.strategy_table {
        if !observed.contains(a.ie_type.as_str()) {
            findings.push(Finding {
                kind: FindingKind::UnexercisedStrategy,
                severity: FindingSeverity::Info,
                estimand_id: spec.estimand_id.clone(),
                ie_type: a.ie_type.clone(),
                detail: format!(
                    "strategy {} assigned but no occurrence observed in the data",
                    a.strategy.as_str()
                ),
            });
        }
    }
    findings
}
