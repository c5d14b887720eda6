use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::CouplingParams;

/// Analytic decoding-progression predictions for an `(omega, Lambda, rho)`
/// code at rate `rate` (nats) and signal-to-noise ratio `snr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgressionReport {
    pub vartheta: f64,
    /// `(1/(2 vartheta)) ln(1 + vartheta snr) - R`, in nats.
    pub gap: f64,
    /// Blocks decoded per iteration from each end.
    pub g: f64,
    pub omega_min: Option<f64>,
    pub t_bound: Option<usize>,
    pub rho_star: Option<f64>,
    pub delta_star: Option<f64>,
    /// `f_{M, delta*}` with constant `k`.
    pub f_m_delta: Option<f64>,
    pub feasible: bool,
}

/// `M^{-k delta^2} / (delta sqrt(ln M))`.
pub fn f_m_delta(m: usize, delta: f64, k: f64) -> Result<f64> {
    if m < 2 || !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "f_(M,delta) needs M >= 2 and delta > 0 (got {m}, {delta})"
        )));
    }
    let ln_m = (m as f64).ln();
    Ok((-k * delta * delta * ln_m).exp() / (delta * ln_m.sqrt()))
}

pub fn progression_report(
    rate: f64,
    snr: f64,
    coupling: &CouplingParams,
    m: usize,
    k: f64,
) -> Result<ProgressionReport> {
    if !(snr > 0.0) || !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "progression needs snr > 0 and R > 0 (got {snr}, {rate})"
        )));
    }
    coupling.validate()?;
    let th = coupling.vartheta();
    let omega = coupling.omega as f64;
    let gap = (1.0 + th * snr).ln() / (2.0 * th) - rate;
    let g = (1.0 + th * snr) * gap / (th * snr * snr) * omega;
    let positive = gap > 0.0;
    let omega_min = positive.then(|| th * snr * snr / (1.0 + th * snr) / gap);
    let feasible = omega_min.map_or(false, |w| omega > w);
    let t_bound = positive.then(|| (coupling.lambda as f64 / (2.0 * g)).ceil() as usize);
    let delta_star = positive.then(|| (gap / (3.0 * rate)).min(1.0 / 3.0));
    let f = match delta_star {
        Some(d) => Some(f_m_delta(m, d, k)?),
        None => None,
    };
    Ok(ProgressionReport {
        vartheta: th,
        gap,
        g,
        omega_min,
        t_bound,
        rho_star: positive.then(|| (gap / (3.0 * snr)).min(0.5)),
        delta_star,
        f_m_delta: f,
        feasible,
    })
}

/// Default iteration cap: four times the analytic bound, or 200.
pub fn default_t_max(report: &ProgressionReport) -> usize {
    match (report.feasible, report.t_bound) {
        (true, Some(t)) => 4 * t.max(1),
        _ => 200,
    }
}

/// Lower and upper bounds on the next-iteration `psi` of a block with
/// `nu = 1 / (tau ln M)`.
pub fn lemma1_bounds(nu: f64, m: usize, delta: f64, delta_tilde: f64, k: f64, k1: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 0.5) || !(delta_tilde > 0.0 && delta_tilde < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need delta in (0, 1/2) and delta_tilde in (0, 1), got {delta}, {delta_tilde}"
        )));
    }
    let mf = m as f64;
    let lower = if nu < 2.0 - delta_tilde {
        1.0 - mf.powf(-k1 * delta_tilde * delta_tilde)
    } else {
        0.0
    };
    let upper = if nu > 2.0 + delta {
        1.0 - (1.0 - f_m_delta(m, delta, k)?)
    } else {
        1.0
    };
    Ok((lower, upper))
}
