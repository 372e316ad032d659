use serde::{Deserialize, Serialize};

use super::{NormSample, TrajectoryRecord};
use crate::error::{Error, Result};

/// Energy balance and a-priori norm quantities of a recorded trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// `max_m |(|u_{m+1}|^2 - |u_m|^2)/dt_m + 2 |d1 u_{m+1}|^2|`.
    pub max_balance_residual: f64,
    /// True when `|u|_H` never increases by more than roundoff.
    pub h_nonincreasing: bool,
    pub sup_h: f64,
    pub sup_h01: f64,
    pub int_h11: f64,
    pub sup_h02: f64,
    pub int_h12: f64,
    /// `sup_t exp(-k g(t)) |u|^2_{H^{0,1}}`, `g(t) = int_0^t |d1 u|^2`.
    pub weighted_sup_h01: f64,
    /// `int exp(-k g(t)) |u|^2_{H^{1,1}} dt`.
    pub weighted_int_h11: f64,
    pub weight_k: f64,
}

/// Quantities of `traj` with exponential weight constant `k`.
///
/// Integrals use the trapezoidal rule on the recorded times. The balance
/// residual is `O(dt)` for the integrating-factor scheme and vanishes up to
/// roundoff for fields without horizontal dependence.
pub fn energy_report(traj: &TrajectoryRecord, k: f64) -> Result<EnergyReport> {
    let n = &traj.norms;
    if n.len() < 2 {
        return Err(Error::TrajectoryMismatch(format!(
            "energy report needs at least two snapshots, got {}",
            n.len()
        )));
    }
    let mut residual: f64 = 0.0;
    let mut nonincreasing = true;
    let mut g = 0.0;
    let mut weights = vec![1.0];
    let (mut int_h11, mut int_h12) = (0.0, 0.0);
    for w in n.windows(2) {
        let (a, b): (&NormSample, &NormSample) = (&w[0], &w[1]);
        let dt = b.time - a.time;
        residual = residual.max(((b.h - a.h) / dt + 2.0 * b.d1()).abs());
        if b.h > a.h * (1.0 + 1e-12) + 1e-300 {
            nonincreasing = false;
        }
        g += 0.5 * dt * (a.d1() + b.d1());
        weights.push((-k * g).exp());
        int_h11 += 0.5 * dt * (a.h11 + b.h11);
        int_h12 += 0.5 * dt * (a.h12 + b.h12);
    }
    let weighted_int_h11 = n
        .windows(2)
        .zip(weights.windows(2))
        .map(|(s, w)| 0.5 * (s[1].time - s[0].time) * (w[0] * s[0].h11 + w[1] * s[1].h11))
        .sum();
    let sup = |f: fn(&NormSample) -> f64| n.iter().map(f).fold(0.0, f64::max);
    Ok(EnergyReport {
        max_balance_residual: residual,
        h_nonincreasing: nonincreasing,
        sup_h: sup(|s| s.h),
        sup_h01: sup(|s| s.h01),
        int_h11,
        sup_h02: sup(|s| s.h02),
        int_h12,
        weighted_sup_h01: n.iter().zip(&weights).map(|(s, w)| w * s.h01).fold(0.0, f64::max),
        weighted_int_h11,
        weight_k: k,
    })
}
