//! Two-arm Cox proportional hazards fit on a single treatment indicator.
//!
//! Newton-Raphson maximization of the Breslow-ties partial log likelihood.
//! With a binary covariate z in {0, 1} the score and information at an event
//! time t with d events (d1 of them in arm 1) reduce to
//!
//!   U += d1 - d * p,    I += d * p * (1 - p),    p = n1 e^b / (n0 + n1 e^b),
//!
//! summed over event times. Convergence when |U| < 1e-10, at most 50 steps.

use serde::{Deserialize, Serialize};

use super::{normal_sf, Obs};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoxFit {
    /// Log hazard ratio of arm 1 vs arm 0.
    pub beta_hat: f64,
    pub standard_error: f64,
    pub hazard_ratio: f64,
    pub iterations: u32,
    /// Score at the returned estimate; |score| < 1e-10 on convergence.
    pub score_at_beta: f64,
    pub p_value: f64,
    pub n_events: usize,
}

/// Per-event-time counts: (n0 at risk, n1 at risk, d0, d1).
fn event_table(arm0: &[Obs], arm1: &[Obs]) -> Vec<(f64, f64, f64, f64)> {
    let mut all: Vec<(i64, bool, u8)> = Vec::with_capacity(arm0.len() + arm1.len());
    for o in arm0 {
        all.push((o.time, o.is_event(), 0));
    }
    for o in arm1 {
        all.push((o.time, o.is_event(), 1));
    }
    all.sort_by_key(|(t, ..)| *t);

    let mut n = [arm0.len() as f64, arm1.len() as f64];
    let mut table = Vec::new();
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let mut d = [0.0_f64, 0.0_f64];
        let mut removed = [0.0_f64, 0.0_f64];
        let mut j = i;
        while j < all.len() && all[j].0 == t {
            let arm = all[j].2 as usize;
            removed[arm] += 1.0;
            if all[j].1 {
                d[arm] += 1.0;
            }
            j += 1;
        }
        if d[0] + d[1] > 0.0 {
            table.push((n[0], n[1], d[0], d[1]));
        }
        n[0] -= removed[0];
        n[1] -= removed[1];
        i = j;
    }
    table
}

fn score_and_information(table: &[(f64, f64, f64, f64)], beta: f64) -> (f64, f64) {
    let eb = beta.exp();
    let mut score = 0.0;
    let mut info = 0.0;
    for &(n0, n1, d0, d1) in table {
        let s0 = n0 + n1 * eb;
        if s0 <= 0.0 {
            continue;
        }
        let p = n1 * eb / s0;
        let d = d0 + d1;
        score += d1 - d * p;
        info += d * p * (1.0 - p);
    }
    (score, info)
}

/// Negative Breslow partial log likelihood; used by tests to verify the
/// returned estimate is a local minimum.
pub fn negative_log_partial_likelihood(arm0: &[Obs], arm1: &[Obs], beta: f64) -> f64 {
    let table = event_table(arm0, arm1);
    let eb = beta.exp();
    let mut nll = 0.0;
    for (n0, n1, d0, d1) in table {
        let s0 = n0 + n1 * eb;
        let d = d0 + d1;
        nll -= d1 * beta - d * s0.ln();
    }
    nll
}

/// Fit the treatment effect. Arm 0 is the reference; `hazard_ratio` is
/// arm 1 relative to arm 0. Monotone likelihoods (all informative events in
/// one arm) are detected exactly and reported with the direction of
/// divergence.
pub fn cox_fit(arm0: &[Obs], arm1: &[Obs]) -> Result<CoxFit> {
    if arm0.iter().chain(arm1).any(Obs::is_competing) {
        return Err(Error::CompetingStatusPresent);
    }
    if arm0.is_empty() || arm1.is_empty() {
        return Err(Error::NotTwoArms {
            found: usize::from(!arm0.is_empty()) + usize::from(!arm1.is_empty()),
        });
    }

    let table = event_table(arm0, arm1);
    // Informative events are those in a risk set containing both arms.
    let mut mixed_d0 = 0.0;
    let mut mixed_d1 = 0.0;
    for &(n0, n1, d0, d1) in &table {
        if n0 > 0.0 && n1 > 0.0 {
            mixed_d0 += d0;
            mixed_d1 += d1;
        }
    }
    if mixed_d0 + mixed_d1 == 0.0 {
        return Err(Error::Data(
            "no events in a risk set containing both arms; treatment effect not estimable".into(),
        ));
    }
    if mixed_d0 == 0.0 {
        return Err(Error::NonfiniteMle { direction: "+infinity" });
    }
    if mixed_d1 == 0.0 {
        return Err(Error::NonfiniteMle { direction: "-infinity" });
    }

    let n_events = table.iter().map(|(_, _, d0, d1)| (d0 + d1) as usize).sum();
    let mut beta = 0.0_f64;
    let mut iterations = 0_u32;
    let mut score;
    loop {
        let (u, info) = score_and_information(&table, beta);
        score = u;
        if u.abs() < 1e-10 || iterations >= 50 {
            break;
        }
        if info <= 0.0 || !u.is_finite() {
            return Err(Error::Data("Cox information matrix is singular".into()));
        }
        beta += u / info;
        iterations += 1;
        if beta.abs() > 30.0 {
            return Err(Error::NonfiniteMle {
                direction: if beta > 0.0 { "+infinity" } else { "-infinity" },
            });
        }
    }

    let (_, info) = score_and_information(&table, beta);
    let standard_error = if info > 0.0 { 1.0 / info.sqrt() } else { f64::INFINITY };
    let z = if standard_error.is_finite() && standard_error > 0.0 {
        beta / standard_error
    } else {
        0.0
    };
    Ok(CoxFit {
        beta_hat: beta,
        standard_error,
        hazard_ratio: beta.exp(),
        iterations,
        score_at_beta: score,
        p_value: 2.0 * normal_sf(z.abs()),
        n_events,
    })
}
