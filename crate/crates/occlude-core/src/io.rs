//! File formats: subject data as CSV or JSON, estimand spec files, and
//! derived dataset export. Column orders are fixed and documented; every
//! artifact written here can be re-read by the same build.
//!
//! Subject CSV layout (one row per record, header mandatory):
//!
//! ```text
//! subject_id,arm,record_kind,component_id,target_day,actual_day,outcome,
//! ie_type,onset_day,detection_day,identification_day,objectivity,
//! withdrawal_day,cutoff_day
//! ```
//!
//! `record_kind` is one of `stream` (declares a stream), `schedule` (one
//! protocol target), `assessment`, `intercurrent`, `withdrawal`, `death`,
//! `last_dose`, `accrual`. Every row carries subject_id, arm, and
//! cutoff_day; the parser requires them to be consistent per subject.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    Assessment, AssessmentOutcome, AssessmentStream, Continuity, Day, DerivedAnalysisRecord,
    DerivedStatus, EstimandSpec, IntercurrentOccurrence, Objectivity, SubjectRecord,
    WithdrawalRecord, WithdrawalScope,
};
use crate::derive::DatasetAudit;
use crate::error::{Error, Result};

pub const SUBJECT_CSV_HEADER: [&str; 14] = [
    "subject_id",
    "arm",
    "record_kind",
    "component_id",
    "target_day",
    "actual_day",
    "outcome",
    "ie_type",
    "onset_day",
    "detection_day",
    "identification_day",
    "objectivity",
    "withdrawal_day",
    "cutoff_day",
];

pub const DERIVED_CSV_HEADER: [&str; 7] = [
    "subject_id",
    "estimand_id",
    "time_days",
    "status",
    "cause",
    "censor_reason",
    "occlusion_basis",
];

// ---------------------------------------------------------------------------
// Subject CSV
// ---------------------------------------------------------------------------

fn opt_day(v: Option<Day>) -> String {
    v.map(|d| d.to_string()).unwrap_or_default()
}

fn outcome_to_str(o: &AssessmentOutcome) -> String {
    match o {
        AssessmentOutcome::NotEvaluated => "not_evaluated".into(),
        AssessmentOutcome::Normal => "normal".into(),
        AssessmentOutcome::Event(cause) => format!("event:{cause}"),
    }
}

fn outcome_from_str(s: &str) -> Result<AssessmentOutcome> {
    match s {
        "not_evaluated" => Ok(AssessmentOutcome::NotEvaluated),
        "normal" => Ok(AssessmentOutcome::Normal),
        _ => match s.strip_prefix("event:") {
            Some(cause) if !cause.is_empty() => Ok(AssessmentOutcome::Event(cause.to_string())),
            _ => Err(Error::Csv(format!(
                "outcome must be not_evaluated, normal, or event:<cause>; got {s:?}"
            ))),
        },
    }
}

fn scope_to_str(scope: &WithdrawalScope) -> String {
    match scope {
        WithdrawalScope::All => "ALL".into(),
        WithdrawalScope::Streams(ids) => ids.iter().cloned().collect::<Vec<_>>().join(";"),
    }
}

fn scope_from_str(s: &str) -> WithdrawalScope {
    if s.is_empty() || s == "ALL" {
        WithdrawalScope::All
    } else {
        WithdrawalScope::Streams(s.split(';').map(str::to_string).collect())
    }
}

/// Serialize subjects to CSV in a deterministic row order: per subject, the
/// stream declarations, schedules, and assessments come first, then
/// intercurrent events, withdrawals, and the singleton day fields.
pub fn subjects_to_csv(subjects: &[SubjectRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUBJECT_CSV_HEADER)?;
    let blank = String::new();
    for s in subjects {
        let base = |kind: &str| -> Vec<String> {
            vec![
                s.subject_id.clone(),
                s.arm.clone(),
                kind.to_string(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                blank.clone(),
                s.cutoff_day.to_string(),
            ]
        };
        for stream in &s.streams {
            let mut row = base("stream");
            row[3] = stream.component_id.clone();
            w.write_record(&row)?;
            for target in &stream.schedule {
                let mut row = base("schedule");
                row[3] = stream.component_id.clone();
                row[4] = target.to_string();
                w.write_record(&row)?;
            }
            for a in &stream.assessments {
                let mut row = base("assessment");
                row[3] = stream.component_id.clone();
                if let Some(idx) = a.target_index {
                    row[4] = stream
                        .schedule
                        .get(idx)
                        .map(|d| d.to_string())
                        .unwrap_or_default();
                }
                row[5] = a.day.to_string();
                row[6] = outcome_to_str(&a.outcome);
                w.write_record(&row)?;
            }
        }
        for ie in &s.ie_occurrences {
            let mut row = base("intercurrent");
            row[7] = ie.ie_type.clone();
            row[8] = opt_day(ie.onset_day);
            row[9] = ie.detection_day.to_string();
            row[10] = ie.identification_day.to_string();
            row[11] = match ie.objectivity {
                Objectivity::Objective => "objective".into(),
                Objectivity::Subjective => "subjective".into(),
            };
            w.write_record(&row)?;
        }
        for wd in &s.withdrawals {
            let mut row = base("withdrawal");
            row[3] = scope_to_str(&wd.scope);
            row[7] = wd.linked_trigger.clone().unwrap_or_default();
            row[12] = wd.withdrawal_day.to_string();
            w.write_record(&row)?;
        }
        if let Some(d) = s.death_day {
            let mut row = base("death");
            row[5] = d.to_string();
            w.write_record(&row)?;
        }
        if let Some(d) = s.last_dose_day {
            let mut row = base("last_dose");
            row[5] = d.to_string();
            w.write_record(&row)?;
        }
        if let Some(d) = s.accrual_day {
            let mut row = base("accrual");
            row[5] = d.to_string();
            w.write_record(&row)?;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Csv(e.to_string()))?)
        .map_err(|e| Error::Csv(e.to_string()))
}

fn parse_day(field: &str, what: &str, line: u64) -> Result<Day> {
    field
        .parse::<Day>()
        .map_err(|_| Error::Csv(format!("line {line}: {what} must be an integer day, got {field:?}")))
}

fn parse_opt_day(field: &str, what: &str, line: u64) -> Result<Option<Day>> {
    if field.is_empty() {
        Ok(None)
    } else {
        parse_day(field, what, line).map(Some)
    }
}

struct SubjectBuilder {
    record: SubjectRecord,
}

impl SubjectBuilder {
    fn stream_mut(&mut self, id: &str, line: u64) -> Result<&mut AssessmentStream> {
        self.record
            .streams
            .iter_mut()
            .find(|s| s.component_id == id)
            .ok_or_else(|| {
                Error::Csv(format!(
                    "line {line}: component {id} used before its stream declaration"
                ))
            })
    }
}

/// Parse subjects from CSV. Streams keep their declaration order; continuity
/// is discrete_scheduled iff the stream has schedule rows.
pub fn subjects_from_csv(data: &str) -> Result<Vec<SubjectRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(data.as_bytes());
    {
        let headers = reader.headers()?;
        let expected: Vec<&str> = SUBJECT_CSV_HEADER.to_vec();
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::Csv(format!(
                "unexpected subject CSV header {got:?}; expected {expected:?}"
            )));
        }
    }

    let mut order: Vec<String> = Vec::new();
    let mut builders: std::collections::BTreeMap<String, SubjectBuilder> = Default::default();

    for (i, row) in reader.records().enumerate() {
        let line = (i + 2) as u64; // header is line 1
        let row = row?;
        if row.len() != SUBJECT_CSV_HEADER.len() {
            return Err(Error::Csv(format!(
                "line {line}: expected {} fields, got {}",
                SUBJECT_CSV_HEADER.len(),
                row.len()
            )));
        }
        let field = |k: usize| row.get(k).unwrap_or("").trim();
        let subject_id = field(0).to_string();
        let arm = field(1).to_string();
        let kind = field(2);
        let cutoff = parse_day(field(13), "cutoff_day", line)?;
        if subject_id.is_empty() {
            return Err(Error::Csv(format!("line {line}: subject_id must be nonempty")));
        }

        if !builders.contains_key(&subject_id) {
            order.push(subject_id.clone());
            builders.insert(
                subject_id.clone(),
                SubjectBuilder {
                    record: SubjectRecord {
                        subject_id: subject_id.clone(),
                        arm: arm.clone(),
                        accrual_day: None,
                        streams: vec![],
                        ie_occurrences: vec![],
                        withdrawals: vec![],
                        death_day: None,
                        last_dose_day: None,
                        cutoff_day: cutoff,
                    },
                },
            );
        }
        let b = builders.get_mut(&subject_id).unwrap();
        if b.record.arm != arm {
            return Err(Error::Csv(format!(
                "line {line}: subject {subject_id} has inconsistent arm ({} vs {arm})",
                b.record.arm
            )));
        }
        if b.record.cutoff_day != cutoff {
            return Err(Error::Csv(format!(
                "line {line}: subject {subject_id} has inconsistent cutoff_day ({} vs {cutoff})",
                b.record.cutoff_day
            )));
        }

        match kind {
            "stream" => {
                let id = field(3);
                if id.is_empty() {
                    return Err(Error::Csv(format!(
                        "line {line}: stream row requires component_id"
                    )));
                }
                if b.record.streams.iter().any(|s| s.component_id == id) {
                    return Err(Error::Csv(format!(
                        "line {line}: duplicate stream declaration {id}"
                    )));
                }
                b.record.streams.push(AssessmentStream {
                    component_id: id.to_string(),
                    schedule: vec![],
                    assessments: vec![],
                    continuity: Continuity::Continuous,
                });
            }
            "schedule" => {
                let id = field(3).to_string();
                let target = parse_day(field(4), "target_day", line)?;
                let stream = b.stream_mut(&id, line)?;
                stream.schedule.push(target);
                stream.continuity = Continuity::DiscreteScheduled;
            }
            "assessment" => {
                let id = field(3).to_string();
                let target = parse_opt_day(field(4), "target_day", line)?;
                let day = parse_day(field(5), "actual_day", line)?;
                let outcome = outcome_from_str(field(6))
                    .map_err(|e| Error::Csv(format!("line {line}: {e}")))?;
                let stream = b.stream_mut(&id, line)?;
                let target_index = match target {
                    None => None,
                    Some(t) => Some(stream.schedule.iter().position(|d| *d == t).ok_or_else(
                        || {
                            Error::Csv(format!(
                                "line {line}: target_day {t} not in the declared schedule of {id}"
                            ))
                        },
                    )?),
                };
                stream.assessments.push(Assessment { target_index, day, outcome });
            }
            "intercurrent" => {
                let objectivity = match field(11) {
                    "objective" => Objectivity::Objective,
                    "subjective" => Objectivity::Subjective,
                    other => {
                        return Err(Error::Csv(format!(
                            "line {line}: objectivity must be objective or subjective, got {other:?}"
                        )))
                    }
                };
                b.record.ie_occurrences.push(IntercurrentOccurrence {
                    ie_type: field(7).to_string(),
                    onset_day: parse_opt_day(field(8), "onset_day", line)?,
                    detection_day: parse_day(field(9), "detection_day", line)?,
                    identification_day: parse_day(field(10), "identification_day", line)?,
                    objectivity,
                });
            }
            "withdrawal" => {
                let trigger = field(7);
                b.record.withdrawals.push(WithdrawalRecord {
                    withdrawal_day: parse_day(field(12), "withdrawal_day", line)?,
                    scope: scope_from_str(field(3)),
                    linked_trigger: if trigger.is_empty() {
                        None
                    } else {
                        Some(trigger.to_string())
                    },
                });
            }
            "death" => b.record.death_day = Some(parse_day(field(5), "actual_day", line)?),
            "last_dose" => b.record.last_dose_day = Some(parse_day(field(5), "actual_day", line)?),
            "accrual" => b.record.accrual_day = Some(parse_day(field(5), "actual_day", line)?),
            other => {
                return Err(Error::Csv(format!(
                    "line {line}: unknown record_kind {other:?}"
                )))
            }
        }
    }

    Ok(order
        .into_iter()
        .map(|id| builders.remove(&id).unwrap().record)
        .collect())
}

// ---------------------------------------------------------------------------
// Subject JSON
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubjectsFile {
    subjects: Vec<SubjectRecord>,
}

pub fn subjects_to_json(subjects: &[SubjectRecord]) -> Result<String> {
    Ok(serde_json::to_string_pretty(&SubjectsFile { subjects: subjects.to_vec() })?)
}

pub fn subjects_from_json(data: &str) -> Result<Vec<SubjectRecord>> {
    Ok(serde_json::from_str::<SubjectsFile>(data)?.subjects)
}

/// Load subjects from a path, dispatching on the .csv / .json extension.
pub fn load_subjects(path: &Path) -> Result<Vec<SubjectRecord>> {
    let data = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => subjects_from_csv(&data),
        Some("json") => subjects_from_json(&data),
        _ => Err(Error::Data(format!(
            "cannot infer subject format from {}: expected a .csv or .json file",
            path.display()
        ))),
    }
}

// ---------------------------------------------------------------------------
// Estimand spec files
// ---------------------------------------------------------------------------

/// How a spec file failed to parse; drives distinct CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecErrorKind {
    /// Malformed JSON.
    Syntax,
    /// Unknown key, strategy, or enum variant.
    UnknownName,
    MissingField,
    /// Well-formed but violating a spec invariant.
    Constraint,
}

#[derive(Debug)]
pub struct SpecParseError {
    pub kind: SpecErrorKind,
    pub message: String,
}

impl fmt::Display for SpecParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for SpecParseError {}

impl From<SpecParseError> for Error {
    fn from(e: SpecParseError) -> Self {
        Error::Spec(e.message)
    }
}

fn classify_json_error(e: &serde_json::Error) -> SpecErrorKind {
    match e.classify() {
        serde_json::error::Category::Syntax | serde_json::error::Category::Eof => {
            SpecErrorKind::Syntax
        }
        serde_json::error::Category::Io => SpecErrorKind::Syntax,
        serde_json::error::Category::Data => {
            let msg = e.to_string();
            if msg.starts_with("unknown field") || msg.starts_with("unknown variant") {
                SpecErrorKind::UnknownName
            } else if msg.starts_with("missing field") {
                SpecErrorKind::MissingField
            } else {
                SpecErrorKind::Constraint
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MultiSpecFile {
    estimands: Vec<EstimandSpec>,
}

/// Parse an estimand spec document: either a single spec object or
/// `{"estimands": [...]}`. Returns the specs plus deprecation warnings.
/// serde_json errors carry line/column positions.
pub fn parse_spec_str(data: &str) -> std::result::Result<(Vec<EstimandSpec>, Vec<String>), SpecParseError> {
    let shape: serde_json::Value = serde_json::from_str(data).map_err(|e| SpecParseError {
        kind: SpecErrorKind::Syntax,
        message: format!("spec syntax error: {e}"),
    })?;

    let multi = shape.as_object().is_some_and(|o| o.contains_key("estimands"));
    let specs: Vec<EstimandSpec> = if multi {
        serde_json::from_str::<MultiSpecFile>(data)
            .map_err(|e| SpecParseError {
                kind: classify_json_error(&e),
                message: format!("spec error: {e}"),
            })?
            .estimands
    } else {
        vec![serde_json::from_str::<EstimandSpec>(data).map_err(|e| SpecParseError {
            kind: classify_json_error(&e),
            message: format!("spec error: {e}"),
        })?]
    };

    if specs.is_empty() {
        return Err(SpecParseError {
            kind: SpecErrorKind::Constraint,
            message: "spec file defines no estimands".into(),
        });
    }
    let mut seen = BTreeSet::new();
    for spec in &specs {
        if !seen.insert(spec.estimand_id.clone()) {
            return Err(SpecParseError {
                kind: SpecErrorKind::Constraint,
                message: format!("duplicate estimand_id {}", spec.estimand_id),
            });
        }
        spec.check_invariants().map_err(|e| SpecParseError {
            kind: SpecErrorKind::Constraint,
            message: e.to_string(),
        })?;
    }

    let mut warnings = Vec::new();
    if data.contains("\"while_on_treatment\"") {
        warnings.push(
            "strategy \"while_on_treatment\" is a deprecated alias; it is read as \
             \"while_prior_to_occlusion\", which names the strategy by what it does: \
             it applies to any occluding event, not just treatment withdrawal"
                .to_string(),
        );
    }
    Ok((specs, warnings))
}

pub fn parse_spec_file(path: &Path) -> std::result::Result<(Vec<EstimandSpec>, Vec<String>), SpecParseError> {
    let data = std::fs::read_to_string(path).map_err(|e| SpecParseError {
        kind: SpecErrorKind::Syntax,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_spec_str(&data)
}

pub fn spec_to_json(specs: &[EstimandSpec]) -> Result<String> {
    if specs.len() == 1 {
        Ok(serde_json::to_string_pretty(&specs[0])?)
    } else {
        Ok(serde_json::to_string_pretty(&MultiSpecFile { estimands: specs.to_vec() })?)
    }
}

// ---------------------------------------------------------------------------
// Derived dataset export
// ---------------------------------------------------------------------------

pub fn derived_to_csv(records: &[DerivedAnalysisRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(DERIVED_CSV_HEADER)?;
    for r in records {
        let (status, cause, reason) = match &r.status {
            DerivedStatus::Event { cause } => ("event", cause.clone(), String::new()),
            DerivedStatus::Censored { reason } => {
                ("censored", String::new(), reason.as_str().to_string())
            }
            DerivedStatus::Competing { cause } => ("competing", cause.clone(), String::new()),
        };
        w.write_record([
            r.subject_id.as_str(),
            r.estimand_id.as_str(),
            &r.time_days.to_string(),
            status,
            &cause,
            &reason,
            r.occlusion_basis.as_str(),
        ])?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Csv(e.to_string()))?)
        .map_err(|e| Error::Csv(e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DerivedFile {
    pub estimand_id: String,
    pub dataset_audit: DatasetAudit,
    pub records: Vec<DerivedAnalysisRecord>,
}

pub fn derived_to_json(
    estimand_id: &str,
    records: &[DerivedAnalysisRecord],
    audit: &DatasetAudit,
) -> Result<String> {
    Ok(serde_json::to_string_pretty(&DerivedFile {
        estimand_id: estimand_id.to_string(),
        dataset_audit: audit.clone(),
        records: records.to_vec(),
    })?)
}

pub fn derived_from_json(data: &str) -> Result<DerivedFile> {
    Ok(serde_json::from_str(data)?)
}

// ---------------------------------------------------------------------------
// Atomic writes
// ---------------------------------------------------------------------------

/// Write complete-or-absent: write to a sibling temp file, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{ext}.tmp"),
        None => "tmp".to_string(),
    });
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}
