//! Unweighted two-sample log-rank test with hypergeometric variance.

use serde::{Deserialize, Serialize};

use super::{chi2_sf_1df, Obs};
use crate::error::{Error, Result};

/// Chi-square test result with per-arm observed-minus-expected counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub degrees_of_freedom: u32,
    pub p_value: f64,
    /// Observed minus expected events, one entry per arm in input order.
    pub observed_minus_expected: [f64; 2],
    pub n_events: usize,
}

/// Standard (unweighted) log-rank chi-square with 1 degree of freedom.
/// With fewer than one event total the statistic is 0 and p = 1.
pub fn logrank_test(arm0: &[Obs], arm1: &[Obs]) -> Result<TestResult> {
    if arm0.iter().chain(arm1).any(Obs::is_competing) {
        return Err(Error::CompetingStatusPresent);
    }
    if arm0.is_empty() && arm1.is_empty() {
        return Err(Error::EmptyDataset);
    }

    // (time, is_event, arm) sorted by time.
    let mut all: Vec<(i64, bool, u8)> = Vec::with_capacity(arm0.len() + arm1.len());
    for o in arm0 {
        all.push((o.time, o.is_event(), 0));
    }
    for o in arm1 {
        all.push((o.time, o.is_event(), 1));
    }
    all.sort_by_key(|(t, ..)| *t);

    let mut n_at_risk = [arm0.len() as f64, arm1.len() as f64];
    let mut o_minus_e = [0.0_f64, 0.0_f64];
    let mut var_sum = 0.0_f64;
    let mut n_events = 0usize;

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
        let d_total = d[0] + d[1];
        let n_total = n_at_risk[0] + n_at_risk[1];
        if d_total > 0.0 && n_total > 0.0 {
            n_events += d_total as usize;
            for arm in 0..2 {
                o_minus_e[arm] += d[arm] - d_total * n_at_risk[arm] / n_total;
            }
            if n_total > 1.0 {
                // Hypergeometric variance of arm-0 events at this time.
                var_sum += d_total * (n_total - d_total) / (n_total - 1.0)
                    * (n_at_risk[0] * n_at_risk[1])
                    / (n_total * n_total);
            }
        }
        n_at_risk[0] -= removed[0];
        n_at_risk[1] -= removed[1];
        i = j;
    }

    let statistic = if var_sum > 0.0 {
        o_minus_e[0] * o_minus_e[0] / var_sum
    } else {
        0.0
    };
    Ok(TestResult {
        statistic,
        degrees_of_freedom: 1,
        p_value: if var_sum > 0.0 { chi2_sf_1df(statistic) } else { 1.0 },
        observed_minus_expected: o_minus_e,
        n_events,
    })
}
