//! Kaplan-Meier product-limit estimator with Greenwood variance.

use serde::{Deserialize, Serialize};

use super::{Obs, ObsStatus};
use crate::domain::Day;
use crate::error::{Error, Result};

/// A survival step function with at-risk counts and Greenwood variances.
/// Jumps occur only at event times; between jumps the estimate is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub jump_times: Vec<Day>,
    /// Survival estimate just after each jump; non-increasing, in [0, 1].
    pub estimates: Vec<f64>,
    /// Greenwood variance of the estimate at each jump.
    pub variance: Vec<f64>,
    /// Number at risk just before each jump.
    pub at_risk: Vec<usize>,
    /// Events at each jump.
    pub n_events: Vec<usize>,
    /// Total subjects contributing.
    pub n: usize,
    /// Last followed time (event or censoring).
    pub max_followed: Day,
}

impl SurvivalCurve {
    /// Survival estimate at time `t` (right-continuous step lookup).
    pub fn survival_at(&self, t: Day) -> f64 {
        match self.jump_times.partition_point(|jt| *jt <= t) {
            0 => 1.0,
            k => self.estimates[k - 1],
        }
    }

    /// Greenwood variance at time `t`.
    pub fn variance_at(&self, t: Day) -> f64 {
        match self.jump_times.partition_point(|jt| *jt <= t) {
            0 => 0.0,
            k => self.variance[k - 1],
        }
    }
}

/// Product-limit estimate. Subjects censored at an event time remain in that
/// time's risk set (the standard convention). Rejects datasets containing
/// competing statuses; those belong to the cumulative incidence estimator.
pub fn km_estimate(obs: &[Obs]) -> Result<SurvivalCurve> {
    if obs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if obs.iter().any(Obs::is_competing) {
        return Err(Error::CompetingStatusPresent);
    }

    let mut sorted: Vec<&Obs> = obs.iter().collect();
    sorted.sort_by_key(|o| o.time);
    let n = sorted.len();
    let max_followed = sorted.last().map(|o| o.time).unwrap_or(0);

    let mut curve = SurvivalCurve {
        jump_times: Vec::new(),
        estimates: Vec::new(),
        variance: Vec::new(),
        at_risk: Vec::new(),
        n_events: Vec::new(),
        n,
        max_followed,
    };

    let mut s = 1.0_f64;
    let mut greenwood_sum = 0.0_f64;
    let mut i = 0;
    while i < n {
        let t = sorted[i].time;
        let at_risk = n - i;
        let mut events = 0usize;
        let mut j = i;
        while j < n && sorted[j].time == t {
            if matches!(sorted[j].status, ObsStatus::Event(_)) {
                events += 1;
            }
            j += 1;
        }
        if events > 0 {
            let nk = at_risk as f64;
            let dk = events as f64;
            s *= 1.0 - dk / nk;
            if at_risk > events {
                greenwood_sum += dk / (nk * (nk - dk));
            }
            // Var(S) = S^2 * sum d/(n(n-d)); zero once S hits zero.
            let var = if s > 0.0 { s * s * greenwood_sum } else { 0.0 };
            curve.jump_times.push(t);
            curve.estimates.push(s);
            curve.variance.push(var);
            curve.at_risk.push(at_risk);
            curve.n_events.push(events);
        }
        i = j;
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(times: &[(Day, bool)]) -> Vec<Obs> {
        times
            .iter()
            .map(|(t, e)| if *e { Obs::event(*t, "death") } else { Obs::censored(*t) })
            .collect()
    }

    #[test]
    fn all_censored_is_flat_one() {
        let curve = km_estimate(&obs(&[(5, false), (9, false), (12, false)])).unwrap();
        assert!(curve.jump_times.is_empty());
        assert_eq!(curve.survival_at(0), 1.0);
        assert_eq!(curve.survival_at(100), 1.0);
    }

    #[test]
    fn single_event_drops_to_zero() {
        let curve = km_estimate(&obs(&[(5, true)])).unwrap();
        assert_eq!(curve.survival_at(4), 1.0);
        assert_eq!(curve.survival_at(5), 0.0);
        assert_eq!(curve.at_risk, vec![1]);
    }

    #[test]
    fn textbook_five_subject_curve() {
        // {1+, 2, 3, 3, 4+}: S(2) = 3/4, S(3) = 3/4 * 1/3 = 1/4.
        let curve = km_estimate(&obs(&[(1, false), (2, true), (3, true), (3, true), (4, false)]))
            .unwrap();
        assert_eq!(curve.jump_times, vec![2, 3]);
        assert!((curve.survival_at(2) - 0.75).abs() < 1e-15);
        assert!((curve.survival_at(3) - 0.25).abs() < 1e-15);
        assert_eq!(curve.at_risk, vec![4, 3]);
        assert_eq!(curve.n_events, vec![1, 2]);
        // Greenwood: both points work out to 3/64.
        assert!((curve.variance[0] - 3.0 / 64.0).abs() < 1e-15);
        assert!((curve.variance[1] - 3.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn censored_at_event_time_stays_in_risk_set() {
        // Event and censoring both at t=2: risk set of 3 at t=2.
        let curve = km_estimate(&obs(&[(1, false), (2, true), (2, false), (3, false)])).unwrap();
        assert_eq!(curve.at_risk, vec![3]);
        assert!((curve.survival_at(2) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_and_competing() {
        assert!(matches!(km_estimate(&[]), Err(Error::EmptyDataset)));
        let data = vec![Obs::event(1, "death"), Obs::competing(2, "progression")];
        assert!(matches!(km_estimate(&data), Err(Error::CompetingStatusPresent)));
    }

    #[test]
    fn no_censoring_equals_empirical_survival() {
        let times = [3, 1, 4, 1, 5, 9, 2, 6];
        let data: Vec<Obs> = times.iter().map(|t| Obs::event(*t, "death")).collect();
        let curve = km_estimate(&data).unwrap();
        for t in 0..=10 {
            let empirical = times.iter().filter(|x| **x > t).count() as f64 / times.len() as f64;
            assert!(
                (curve.survival_at(t) - empirical).abs() < 1e-12,
                "t = {t}"
            );
        }
    }
}
