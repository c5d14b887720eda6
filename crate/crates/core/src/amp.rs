//! AMP decoding of SC-SPARCs.
//!
//! Decoding runs in real-equivalent units: for complex designs each channel
//! use is two real dimensions, so the state-evolution quantities `sigma`,
//! `phi` and `tau` are per real dimension (see [`SeModel::for_code`]).

use std::marker::PhantomData;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{Design, ScaledAdjoint, Scalar};
use crate::error::{dims, Error, Result};
use crate::message::{hard_decision, nmse, MessageVector, SoftEstimate};
use crate::params::{BaseMatrix, SparcParams};
use crate::state_evolution::{se_tau, SeModel, SeTrajectory};

/// Where the decoder takes `sigma`, `phi` and `tau` from.
#[derive(Debug, Clone, Copy)]
pub enum SeSource<'a> {
    /// A precomputed state-evolution trajectory.
    Offline(&'a SeTrajectory),
    /// Estimated from the iterates; `phi` from the residual.
    Online,
    /// Estimated from the iterates; `phi = sigma2 + sigma_hat`.
    OnlineKnownSigma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeMode {
    Offline,
    #[default]
    Online,
    OnlineKnownSigma,
}

impl SeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SeMode::Offline => "offline",
            SeMode::Online => "online",
            SeMode::OnlineKnownSigma => "online_known_sigma",
        }
    }
}

/// Stop once `max_r |phi_r^t - phi_r^{t-1}| / phi_r^{t-1} < tol` has held for
/// `window` consecutive iterations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    pub tol: f64,
    pub window: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            window: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub t_max: usize,
    pub early_stop: Option<EarlyStop>,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            t_max: 200,
            early_stop: Some(EarlyStop::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    Diverged,
}

/// Mutable decoder state between iterations.
#[derive(Debug, Clone)]
pub struct DecoderState<T> {
    /// Number of completed iterations; `beta` is `beta^t`.
    pub t: usize,
    pub beta: Vec<f64>,
    /// Residual of the last iteration (`z^{t-1}`), all zeros before the first.
    pub z: Vec<T>,
    pub sigma: Vec<f64>,
    pub phi: Vec<f64>,
    pub tau: Vec<f64>,
    /// Set when an online `phi` estimate had to be clamped away from zero.
    pub clamped: bool,
}

/// Per-iteration traces of a decoding run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DecodeDiagnostics {
    pub iterations: usize,
    pub stop_reason: Option<StopReason>,
    pub divergence: Option<String>,
    pub clamped: bool,
    /// `sigma^t`, `phi^t`, `tau^t` used at iteration `t`.
    pub sigma_trace: Vec<Vec<f64>>,
    pub phi_trace: Vec<Vec<f64>>,
    pub tau_trace: Vec<Vec<f64>>,
    /// `||z_r^t||^2 / (n/R)` per real dimension.
    pub residual_var: Vec<Vec<f64>>,
    /// Per-block NMSE of `beta^t` for `t = 0..=iterations`, when the truth is known.
    pub nmse_per_block: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    pub message: MessageVector,
    pub estimate: SoftEstimate,
    pub diagnostics: DecodeDiagnostics,
}

/// Section-wise softmax of `s / tau_c`, where `c` is the column block of the
/// section.
pub fn eta_denoise(s: &[f64], tau: &[f64], m: usize) -> Result<SoftEstimate> {
    let mut out = vec![0.0; s.len()];
    eta_into(s, tau, m, &mut out)?;
    SoftEstimate::new(m, out)
}

fn eta_into(s: &[f64], tau: &[f64], m: usize, out: &mut [f64]) -> Result<()> {
    dims("denoiser output length", s.len(), out.len())?;
    if m == 0 || tau.is_empty() || s.len() % (m * tau.len()) != 0 {
        return Err(Error::InvalidArgument(format!(
            "{} entries cannot be split into {} blocks of sections of size {m}",
            s.len(),
            tau.len()
        )));
    }
    if let Some(t) = tau.iter().find(|t| !(**t > 0.0)) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {t}")));
    }
    let block = s.len() / tau.len();
    out.par_chunks_mut(m)
        .zip(s.par_chunks(m))
        .enumerate()
        .for_each(|(k, (o, sec))| {
            let inv = 1.0 / tau[k * m / block];
            let top = sec.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
            let mut total = 0.0;
            for (o, v) in o.iter_mut().zip(sec) {
                *o = ((v - top) * inv).exp();
                total += *o;
            }
            for o in o.iter_mut() {
                *o /= total;
            }
        });
    Ok(())
}

/// `true` when the last `window` relative changes of `phi` are all below `tol`.
pub fn should_stop(phi_history: &[Vec<f64>], tol: f64, window: usize) -> bool {
    let window = window.max(1);
    if phi_history.len() <= window {
        return false;
    }
    phi_history
        .windows(2)
        .rev()
        .take(window)
        .all(|w| max_rel_change(&w[0], &w[1]) < tol)
}

fn max_rel_change(prev: &[f64], cur: &[f64]) -> f64 {
    prev.iter()
        .zip(cur)
        .map(|(p, c)| (c - p).abs() / p)
        .fold(0.0, f64::max)
}

/// AMP decoder bound to a design operator.
pub struct AmpDecoder<'a, T, D: ?Sized> {
    design: &'a D,
    model: SeModel,
    m: usize,
    l: usize,
    dims_per_use: f64,
    _scalar: PhantomData<T>,
}

impl<'a, T: Scalar, D: Design<T> + ?Sized> AmpDecoder<'a, T, D> {
    pub fn new(design: &'a D, params: &SparcParams, base: &BaseMatrix) -> Result<Self> {
        let layout = design.layout();
        dims("design rows", params.n, layout.n())?;
        dims("design columns", params.ml(), layout.cols())?;
        dims("row blocks", base.rows(), layout.row_blocks())?;
        dims("column blocks", base.cols(), layout.col_blocks())?;
        Ok(Self {
            design,
            model: SeModel::for_code(params, base, T::FIELD)?,
            m: params.m,
            l: params.l,
            dims_per_use: T::FIELD.dims_per_use() as f64,
            _scalar: PhantomData,
        })
    }

    /// The per-dimension model the decoder runs on.
    pub fn model(&self) -> &SeModel {
        &self.model
    }

    pub fn init(&self) -> DecoderState<T> {
        DecoderState {
            t: 0,
            beta: vec![0.0; self.m * self.l],
            z: vec![T::default(); self.design.n()],
            sigma: Vec::new(),
            phi: Vec::new(),
            tau: Vec::new(),
            clamped: false,
        }
    }

    /// `||z_r||^2 / (n/R)` per real dimension, for each row block.
    pub fn residual_var(&self, z: &[T]) -> Vec<f64> {
        let nr = self.design.layout().block_rows();
        z.chunks(nr)
            .map(|zr| zr.iter().map(|v| v.norm_sqr()).sum::<f64>() / (nr as f64 * self.dims_per_use))
            .collect()
    }

    /// `sigma_hat_r = (1/C) sum_c W[r][c] (1 - ||beta_c||^2 / (L/C))`.
    pub fn online_sigma(&self, beta: &[f64]) -> Vec<f64> {
        let base = &self.model.base;
        let cols = base.cols();
        let per_block = self.l as f64 / cols as f64;
        let deficit: Vec<f64> = beta
            .chunks(beta.len() / cols)
            .map(|b| 1.0 - b.iter().map(|v| v * v).sum::<f64>() / per_block)
            .collect();
        (0..base.rows())
            .map(|r| {
                base.row(r)
                    .iter()
                    .zip(&deficit)
                    .map(|(w, d)| w * d)
                    .sum::<f64>()
                    / cols as f64
            })
            .collect()
    }

    /// Online estimates `(sigma_hat, phi_hat, tau_hat)` for the current
    /// iterate; `z` is the current residual and only used when `sigma2` is
    /// unknown. The flag reports a clamped `phi_hat`.
    pub fn online_se_update(&self, beta: &[f64], z: &[T], known_sigma: bool) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, bool)> {
        let sigma = self.online_sigma(beta);
        let mut phi = if known_sigma {
            sigma.iter().map(|s| self.model.sigma2 + s).collect()
        } else {
            self.residual_var(z)
        };
        let floor = 1e-12 * self.model.base.avg_power();
        let mut clamped = false;
        for p in phi.iter_mut() {
            if !(*p > 0.0) {
                *p = floor;
                clamped = true;
            }
        }
        let tau = se_tau(&self.model.base, &phi, self.model.rate, self.m)?;
        Ok((sigma, phi, tau, clamped))
    }

    /// One AMP iteration, taking `beta^t` to `beta^{t+1}`.
    pub fn step(&self, state: &mut DecoderState<T>, y: &[T], source: SeSource<'_>) -> Result<()> {
        dims("received vector length", self.design.n(), y.len())?;
        let t = state.t;
        let layout = self.design.layout();
        let nr = layout.block_rows();

        // Onsager coefficients need sigma^t, available before z^t in every mode.
        let sigma = match source {
            SeSource::Offline(traj) => traj.sigma_at(t).to_vec(),
            _ => self.online_sigma(&state.beta),
        };
        let upsilon: Vec<f64> = if t == 0 {
            vec![0.0; sigma.len()]
        } else {
            sigma.iter().zip(&state.phi).map(|(s, p)| s / p).collect()
        };

        let ab = self.design.apply_real(&state.beta)?;
        let z: Vec<T> = y
            .par_iter()
            .zip(ab.par_iter())
            .zip(state.z.par_iter())
            .enumerate()
            .map(|(i, ((yi, ai), zp))| *yi - *ai + zp.scale(upsilon[i / nr]))
            .collect();

        let (phi, tau) = match source {
            SeSource::Offline(traj) => (traj.phi_at(t).to_vec(), traj.tau_at(t).to_vec()),
            SeSource::Online | SeSource::OnlineKnownSigma => {
                let (_, phi, tau, clamped) =
                    self.online_se_update(&state.beta, &z, matches!(source, SeSource::OnlineKnownSigma))?;
                state.clamped |= clamped;
                (phi, tau)
            }
        };

        let scale = ScaledAdjoint::from_se(&phi, &tau)?;
        let corr = self.design.apply_scaled_adjoint(&scale, &z)?;
        let s: Vec<f64> = state
            .beta
            .iter()
            .zip(&corr)
            .map(|(b, c)| b + c.re())
            .collect();
        eta_into(&s, &tau, self.m, &mut state.beta)?;

        state.z = z;
        state.sigma = sigma;
        state.phi = phi;
        state.tau = tau;
        state.t += 1;
        Ok(())
    }

    fn divergence(&self, state: &DecoderState<T>) -> Option<String> {
        if state.z.iter().any(|v| !v.is_finite()) {
            return Some("non-finite residual".into());
        }
        if state.beta.iter().any(|v| !v.is_finite()) {
            return Some("non-finite estimate".into());
        }
        let limit = 10.0 * (self.model.sigma2 + self.model.base.max_row_average());
        match state.phi.iter().find(|p| !p.is_finite() || **p > limit) {
            Some(p) => Some(format!("phi = {p} exceeds {limit}")),
            None => None,
        }
    }

    /// Runs AMP from `beta^0 = 0` until the stop rule fires. When `truth` is
    /// given, per-block NMSE is recorded for every iterate.
    pub fn decode(
        &self,
        y: &[T],
        cfg: &DecodeConfig,
        source: SeSource<'_>,
        truth: Option<&MessageVector>,
    ) -> Result<DecodeOutput> {
        let blocks = self.model.base.cols();
        let mut state = self.init();
        let mut diag = DecodeDiagnostics::default();
        let mut trace = match truth {
            Some(tr) => Some(vec![nmse(&state.beta, tr, blocks)?.per_block]),
            None => None,
        };
        let mut last_good = state.beta.clone();
        let mut stable = 0usize;
        let stop = loop {
            if state.t >= cfg.t_max {
                break StopReason::MaxIterations;
            }
            let prev_phi = state.phi.clone();
            self.step(&mut state, y, source)?;
            diag.sigma_trace.push(state.sigma.clone());
            diag.phi_trace.push(state.phi.clone());
            diag.tau_trace.push(state.tau.clone());
            diag.residual_var.push(self.residual_var(&state.z));
            if let Some(reason) = self.divergence(&state) {
                diag.divergence = Some(reason);
                break StopReason::Diverged;
            }
            last_good.clone_from(&state.beta);
            if let (Some(tr), Some(truth)) = (trace.as_mut(), truth) {
                tr.push(nmse(&state.beta, truth, blocks)?.per_block);
            }
            if let Some(es) = cfg.early_stop {
                if !prev_phi.is_empty() && max_rel_change(&prev_phi, &state.phi) < es.tol {
                    stable += 1;
                } else {
                    stable = 0;
                }
                if stable >= es.window.max(1) {
                    break StopReason::Converged;
                }
            }
        };
        diag.iterations = state.t;
        diag.stop_reason = Some(stop);
        diag.clamped = state.clamped;
        diag.nmse_per_block = trace;
        let estimate = SoftEstimate::new(self.m, last_good)?;
        Ok(DecodeOutput {
            message: hard_decision(&estimate),
            estimate,
            diagnostics: diag,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_uniform_for_constant_section() {
        let est = eta_denoise(&[0.3; 8], &[0.7], 4).unwrap();
        assert!(est.values().iter().all(|v| (*v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn eta_two_entry_logistic() {
        let (a, b, tau) = (0.4, -0.3, 0.2);
        let est = eta_denoise(&[a, b], &[tau], 2).unwrap();
        let expected = 1.0 / (1.0 + ((b - a) / tau).exp());
        assert!((est.values()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn eta_saturates_without_overflow() {
        let est = eta_denoise(&[1e3, 0.0, 0.0, 0.0], &[1e-3], 4).unwrap();
        assert_eq!(est.values()[0], 1.0);
        assert!(est.values()[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eta_uses_block_temperature() {
        // two blocks of one section each
        let est = eta_denoise(&[1.0, 0.0, 1.0, 0.0], &[1.0, 100.0], 2).unwrap();
        assert!(est.values()[0] > est.values()[2]);
        assert!(eta_denoise(&[1.0, 0.0], &[0.0], 2).is_err());
    }

    #[test]
    fn stop_rule() {
        let flat = vec![vec![1.0, 2.0]; 3];
        assert!(should_stop(&flat, 1e-2, 2));
        assert!(!should_stop(&flat[..2], 1e-2, 2));
        let improving: Vec<Vec<f64>> = (0..5).map(|t| vec![1.0 / (t + 1) as f64]).collect();
        assert!(!should_stop(&improving, 1e-2, 1));
    }
}
