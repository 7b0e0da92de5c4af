//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Estimand spec failed structural or invariant checks.
    #[error("invalid estimand spec: {0}")]
    Spec(String),

    /// Subject data failed invariant checks or cannot be interpreted.
    #[error("invalid subject data: {0}")]
    Data(String),

    /// The subject carries no stream relevant to the estimand.
    #[error("estimand {estimand_id} not assessable for subject {subject_id}: no relevant assessment stream")]
    EstimandNotAssessable {
        subject_id: String,
        estimand_id: String,
    },

    /// Safety derivation requires a last dose day.
    #[error("subject {subject_id}: last_dose_day missing, treatment-emergent window undefined")]
    MissingLastDose { subject_id: String },

    /// An operation was called outside its strategy contract.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A derivation error tagged with the subject it arose from.
    #[error("subject {subject_id}: {source}")]
    ForSubject {
        subject_id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("empty dataset")]
    EmptyDataset,

    /// Kaplan-Meier, log-rank and Cox reject datasets with competing statuses.
    #[error("dataset contains competing-risk statuses; use the cumulative incidence estimator")]
    CompetingStatusPresent,

    #[error("expected exactly two arms, found {found}")]
    NotTwoArms { found: usize },

    #[error("tau {tau} exceeds last followed time; maximum permissible tau is {max_tau}")]
    TauBeyondFollowUp { tau: i64, max_tau: i64 },

    /// Monotone partial likelihood: the hazard-ratio MLE is not finite.
    #[error("nonfinite MLE: partial likelihood is monotone, beta diverges to {direction}")]
    NonfiniteMle { direction: &'static str },

    /// Calendar cutoff precedes a subject's accrual.
    #[error("cutoff rejected: subject {subject_id} accrued on day {accrual_day}, after calendar cutoff {calendar_day}")]
    CutoffBeforeAccrual {
        subject_id: String,
        accrual_day: i64,
        calendar_day: i64,
    },

    #[error("scenario error: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Csv(e.to_string())
    }
}
