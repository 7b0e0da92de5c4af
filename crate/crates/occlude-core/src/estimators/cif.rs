//! Aalen-Johansen estimator of cause-specific cumulative incidence.
//!
//! For each cause k, the incidence increments by S(t-) * d_k / n at each
//! event time, where S is the all-cause Kaplan-Meier survival. By
//! construction sum_k CIF_k(t) + S(t) = 1 at every jump.
//!
//! Pointwise variances use the Aalen (1978) delta-method estimator as given
//! by Marubini & Valsecchi (1995), eq. 10.10:
//!
//!   Var[F_k(t)] = sum_{j: t_j <= t} [F_k(t) - F_k(t_j)]^2 d_j / (n_j (n_j - d_j))
//!               + sum_j S(t_{j-1})^2 (n_j - d_kj)/n_j * d_kj / n_j^2
//!               - 2 sum_j [F_k(t) - F_k(t_j)] S(t_{j-1}) d_kj / n_j^2
//!
//! with d_j all-cause events and d_kj cause-k events at t_j.

use serde::{Deserialize, Serialize};

use super::{Obs, ObsStatus};
use crate::domain::Day;
use crate::error::{Error, Result};

/// Per-cause cumulative incidence step functions over a common jump grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CifCurve {
    /// Causes in sorted order; rows of `incidence`/`variance` align to these.
    pub causes: Vec<String>,
    /// Times with at least one event of any cause.
    pub jump_times: Vec<Day>,
    /// incidence[k][j]: CIF of cause k just after jump j; non-decreasing.
    pub incidence: Vec<Vec<f64>>,
    pub variance: Vec<Vec<f64>>,
    /// All-cause event-free probability just after each jump.
    pub event_free: Vec<f64>,
    pub at_risk: Vec<usize>,
    pub n: usize,
}

impl CifCurve {
    pub fn cause_index(&self, cause: &str) -> Option<usize> {
        self.causes.iter().position(|c| c == cause)
    }

    /// Cumulative incidence of cause `k` at time `t`.
    pub fn incidence_at(&self, k: usize, t: Day) -> f64 {
        match self.jump_times.partition_point(|jt| *jt <= t) {
            0 => 0.0,
            j => self.incidence[k][j - 1],
        }
    }
}

/// Events of interest and competing events both count as events of their
/// cause; censorings leave the risk set without an increment.
pub fn cif_aalen_johansen(obs: &[Obs]) -> Result<CifCurve> {
    if obs.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut causes: Vec<String> = obs
        .iter()
        .filter_map(|o| match &o.status {
            ObsStatus::Event(c) | ObsStatus::Competing(c) => Some(c.clone()),
            ObsStatus::Censored => None,
        })
        .collect();
    causes.sort();
    causes.dedup();

    let mut sorted: Vec<&Obs> = obs.iter().collect();
    sorted.sort_by_key(|o| o.time);
    let n = sorted.len();

    // First pass: per-jump counts, survival, and incidence increments.
    let mut jump_times: Vec<Day> = Vec::new();
    let mut at_risk_v: Vec<usize> = Vec::new();
    let mut d_all: Vec<usize> = Vec::new();
    let mut d_cause: Vec<Vec<usize>> = vec![Vec::new(); causes.len()];
    let mut surv_before: Vec<f64> = Vec::new(); // S(t_{j-1})
    let mut event_free: Vec<f64> = Vec::new();
    let mut incidence: Vec<Vec<f64>> = vec![Vec::new(); causes.len()];

    let mut s = 1.0_f64;
    let mut cif: Vec<f64> = vec![0.0; causes.len()];
    let mut i = 0;
    while i < n {
        let t = sorted[i].time;
        let at_risk = n - i;
        let mut events_here = vec![0usize; causes.len()];
        let mut total_here = 0usize;
        let mut j = i;
        while j < n && sorted[j].time == t {
            if let ObsStatus::Event(c) | ObsStatus::Competing(c) = &sorted[j].status {
                let k = causes.iter().position(|x| x == c).expect("cause collected");
                events_here[k] += 1;
                total_here += 1;
            }
            j += 1;
        }
        if total_here > 0 {
            let nk = at_risk as f64;
            jump_times.push(t);
            at_risk_v.push(at_risk);
            d_all.push(total_here);
            surv_before.push(s);
            for k in 0..causes.len() {
                cif[k] += s * events_here[k] as f64 / nk;
                d_cause[k].push(events_here[k]);
                incidence[k].push(cif[k]);
            }
            s *= 1.0 - total_here as f64 / nk;
            event_free.push(s);
        }
        i = j;
    }

    // Second pass: Aalen variance at every jump (quadratic in jump count).
    let m = jump_times.len();
    let mut variance: Vec<Vec<f64>> = vec![vec![0.0; m]; causes.len()];
    for k in 0..causes.len() {
        for t_idx in 0..m {
            let f_t = incidence[k][t_idx];
            let mut v = 0.0;
            for j in 0..=t_idx {
                let nj = at_risk_v[j] as f64;
                let dj = d_all[j] as f64;
                let dkj = d_cause[k][j] as f64;
                let f_j = incidence[k][j];
                let s_prev = surv_before[j];
                if nj > dj {
                    v += (f_t - f_j).powi(2) * dj / (nj * (nj - dj));
                }
                v += s_prev * s_prev * ((nj - dkj) / nj) * dkj / (nj * nj);
                v -= 2.0 * (f_t - f_j) * s_prev * dkj / (nj * nj);
            }
            variance[k][t_idx] = v.max(0.0);
        }
    }

    Ok(CifCurve {
        causes,
        jump_times,
        incidence,
        variance,
        event_free,
        at_risk: at_risk_v,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::km_estimate;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn two_subject_hand_example() {
        // Event(A) day 2, Competing(B) day 3: CIF_A(2) = 1/2, CIF_B(3) = 1/2.
        let data = vec![Obs::event(2, "a"), Obs::competing(3, "b")];
        let cif = cif_aalen_johansen(&data).unwrap();
        let a = cif.cause_index("a").unwrap();
        let b = cif.cause_index("b").unwrap();
        assert!((cif.incidence_at(a, 2) - 0.5).abs() < 1e-15);
        assert!((cif.incidence_at(b, 3) - 0.5).abs() < 1e-15);
        assert!((cif.incidence_at(b, 2) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn all_censored_is_identically_zero() {
        let data = vec![Obs::censored(1), Obs::censored(5)];
        let cif = cif_aalen_johansen(&data).unwrap();
        assert!(cif.jump_times.is_empty());
        assert!(cif.causes.is_empty());
    }

    #[test]
    fn single_cause_is_km_complement() {
        let data = vec![
            Obs::event(1, "death"),
            Obs::censored(2),
            Obs::event(3, "death"),
            Obs::event(3, "death"),
            Obs::censored(4),
            Obs::event(7, "death"),
        ];
        let cif = cif_aalen_johansen(&data).unwrap();
        let km = km_estimate(&data).unwrap();
        for t in 0..=8 {
            assert!(
                (cif.incidence_at(0, t) - (1.0 - km.survival_at(t))).abs() < 1e-15,
                "t = {t}"
            );
        }
    }

    #[test]
    fn conservation_at_every_jump() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let data: Vec<Obs> = (0..60)
            .map(|_| {
                let t = rng.random_range(1..30);
                match rng.random_range(0..4) {
                    0 => Obs::event(t, "progression"),
                    1 => Obs::competing(t, "death"),
                    2 => Obs::competing(t, "withdrawal"),
                    _ => Obs::censored(t),
                }
            })
            .collect();
        let cif = cif_aalen_johansen(&data).unwrap();
        for j in 0..cif.jump_times.len() {
            let total: f64 = cif.incidence.iter().map(|row| row[j]).sum();
            assert!(
                (total + cif.event_free[j] - 1.0).abs() < 1e-12,
                "jump {j}: {total} + {}",
                cif.event_free[j]
            );
        }
    }

    #[test]
    fn incidence_is_nondecreasing_and_bounded() {
        let data = vec![
            Obs::event(1, "a"),
            Obs::competing(2, "b"),
            Obs::event(2, "a"),
            Obs::censored(3),
            Obs::event(5, "a"),
        ];
        let cif = cif_aalen_johansen(&data).unwrap();
        for row in &cif.incidence {
            for w in row.windows(2) {
                assert!(w[1] >= w[0] - 1e-15);
            }
            for v in row {
                assert!((0.0..=1.0 + 1e-12).contains(v));
            }
        }
    }

    /// Analytic variance against a nonparametric bootstrap on a fixed fixture.
    #[test]
    fn variance_close_to_bootstrap() {
        let mut rng = ChaCha12Rng::seed_from_u64(20260808);
        let data: Vec<Obs> = (0..80)
            .map(|_| {
                let t = rng.random_range(1..40);
                match rng.random_range(0..3) {
                    0 => Obs::event(t, "ae"),
                    1 => Obs::competing(t, "death"),
                    _ => Obs::censored(t),
                }
            })
            .collect();
        let cif = cif_aalen_johansen(&data).unwrap();
        let k = cif.cause_index("ae").unwrap();
        let t_star = 20;
        let analytic_se = {
            let j = cif.jump_times.partition_point(|jt| *jt <= t_star);
            cif.variance[k][j - 1].sqrt()
        };

        let n_boot = 2000;
        let mut estimates = Vec::with_capacity(n_boot);
        for _ in 0..n_boot {
            let resample: Vec<Obs> = (0..data.len())
                .map(|_| data[rng.random_range(0..data.len())].clone())
                .collect();
            let boot = cif_aalen_johansen(&resample).unwrap();
            let v = boot
                .cause_index("ae")
                .map(|bk| boot.incidence_at(bk, t_star))
                .unwrap_or(0.0);
            estimates.push(v);
        }
        let mean: f64 = estimates.iter().sum::<f64>() / n_boot as f64;
        let boot_se = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>()
            / (n_boot - 1) as f64)
            .sqrt();
        let rel = (analytic_se - boot_se).abs() / boot_se;
        assert!(
            rel < 0.25,
            "analytic se {analytic_se:.5} vs bootstrap se {boot_se:.5} (rel diff {rel:.3})"
        );
    }

    #[test]
    fn rejects_empty() {
        assert!(matches!(cif_aalen_johansen(&[]), Err(Error::EmptyDataset)));
    }
}
