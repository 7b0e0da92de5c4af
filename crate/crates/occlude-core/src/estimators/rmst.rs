//! Restricted mean survival time: exact area under the Kaplan-Meier step
//! function on [0, tau], with the standard plug-in variance
//! (Royston & Parmar 2011; Klein & Moeschberger sec. 4.5):
//!
//!   Var(RMST) = sum_{j: t_j <= tau} A_j^2 d_j / (n_j (n_j - d_j)),
//!   A_j = integral of S from t_j to tau.

use serde::{Deserialize, Serialize};

use super::SurvivalCurve;
use crate::domain::Day;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rmst {
    pub tau: Day,
    pub estimate: f64,
    pub variance: f64,
}

impl Rmst {
    pub fn standard_error(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Area under the survival step function on [0, tau]. `tau` must not exceed
/// the last followed time of the curve's arm.
pub fn rmst(curve: &SurvivalCurve, tau: Day) -> Result<Rmst> {
    if tau < 0 {
        return Err(Error::Data(format!("tau must be >= 0, got {tau}")));
    }
    if tau > curve.max_followed {
        return Err(Error::TauBeyondFollowUp { tau, max_tau: curve.max_followed });
    }

    // Exact step integration over [0, tau].
    let mut area = 0.0_f64;
    let mut prev_t = 0_i64;
    let mut prev_s = 1.0_f64;
    for (i, &t) in curve.jump_times.iter().enumerate() {
        if t > tau {
            break;
        }
        area += prev_s * (t - prev_t) as f64;
        prev_t = t;
        prev_s = curve.estimates[i];
    }
    area += prev_s * (tau - prev_t) as f64;

    // Plug-in variance; A_j is the remaining area past each jump.
    let mut variance = 0.0_f64;
    for (i, &t) in curve.jump_times.iter().enumerate() {
        if t > tau {
            break;
        }
        let mut a_j = 0.0_f64;
        let mut pt = t;
        let mut ps = curve.estimates[i];
        for (k, &t2) in curve.jump_times.iter().enumerate().skip(i + 1) {
            if t2 > tau {
                break;
            }
            a_j += ps * (t2 - pt) as f64;
            pt = t2;
            ps = curve.estimates[k];
        }
        a_j += ps * (tau - pt) as f64;

        let n_j = curve.at_risk[i] as f64;
        let d_j = curve.n_events[i] as f64;
        if n_j > d_j {
            variance += a_j * a_j * d_j / (n_j * (n_j - d_j));
        }
    }

    Ok(Rmst { tau, estimate: area, variance })
}
