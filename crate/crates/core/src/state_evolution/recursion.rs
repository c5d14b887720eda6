use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::expectation::{SectionExpectation, DEFAULT_SAMPLES};
use super::progression::f_m_delta;
use crate::design::Field;
use crate::error::{Error, Result};
use crate::params::{BaseMatrix, SparcParams};

/// Inputs of the finite-M state evolution, expressed per real dimension.
///
/// For complex codes each channel use carries two real dimensions: the
/// variance profile, the noise variance and the rate are all halved.
#[derive(Debug, Clone, PartialEq)]
pub struct SeModel {
    pub base: BaseMatrix,
    pub sigma2: f64,
    /// Nats per real dimension.
    pub rate: f64,
    pub m: usize,
}

impl SeModel {
    pub fn new(base: BaseMatrix, sigma2: f64, rate: f64, m: usize) -> Result<Self> {
        if !(sigma2 > 0.0) || !(rate > 0.0) || m < 2 {
            return Err(Error::InvalidArgument(format!(
                "state evolution needs sigma2 > 0, R > 0, M >= 2 (got {sigma2}, {rate}, {m})"
            )));
        }
        Ok(Self {
            base,
            sigma2,
            rate,
            m,
        })
    }

    pub fn for_code(params: &SparcParams, base: &BaseMatrix, field: Field) -> Result<Self> {
        let d = field.dims_per_use() as f64;
        Self::new(base.scaled(1.0 / d), params.sigma2 / d, params.rate / d, params.m)
    }
}

/// One step of the recursion: quantities at iteration `t` and the next `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeStep {
    /// `(1/C) sum_c W[r][c] psi_c`.
    pub sigma: Vec<f64>,
    /// `sigma2 + sigma_r`.
    pub phi: Vec<f64>,
    /// Effective denoiser noise variance per column block.
    pub tau: Vec<f64>,
    pub psi_next: Vec<f64>,
}

/// `sigma_r` and `phi_r` from the current per-block error `psi`.
pub fn se_phi(base: &BaseMatrix, psi: &[f64], sigma2: f64) -> (Vec<f64>, Vec<f64>) {
    let cols = base.cols() as f64;
    let sigma: Vec<f64> = (0..base.rows())
        .map(|r| {
            base.row(r)
                .iter()
                .zip(psi)
                .map(|(w, p)| w * p)
                .sum::<f64>()
                / cols
        })
        .collect();
    let phi = sigma.iter().map(|s| sigma2 + s).collect();
    (sigma, phi)
}

/// `tau_c = (R / ln M) [ (1/R_rows) sum_r W[r][c] / phi_r ]^{-1}`.
pub fn se_tau(base: &BaseMatrix, phi: &[f64], rate: f64, m: usize) -> Result<Vec<f64>> {
    let rows = base.rows() as f64;
    (0..base.cols())
        .map(|c| {
            let inv: f64 = (0..base.rows())
                .map(|r| base.get(r, c) / phi[r])
                .sum::<f64>()
                / rows;
            if inv > 0.0 {
                Ok(rate / (m as f64).ln() / inv)
            } else {
                Err(Error::InvalidArgument(format!(
                    "column block {c} of the base matrix is identically zero"
                )))
            }
        })
        .collect()
}

/// Advances the recursion by one iteration.
pub fn se_step(model: &SeModel, psi: &[f64], expectation: &SectionExpectation) -> Result<SeStep> {
    if psi.len() != model.base.cols() {
        return Err(Error::DimensionMismatch {
            what: "psi length",
            expected: model.base.cols(),
            found: psi.len(),
        });
    }
    if let Some(p) = psi.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::InvalidArgument(format!("psi entries must lie in [0, 1], got {p}")));
    }
    let (sigma, phi) = se_phi(&model.base, psi, model.sigma2);
    let tau = se_tau(&model.base, &phi, model.rate, model.m)?;
    // Symmetric columns share bitwise-equal tau; evaluate each value once.
    let mut cache: HashMap<u64, f64> = HashMap::new();
    let mut psi_next = Vec::with_capacity(tau.len());
    for t in &tau {
        let e = match cache.get(&t.to_bits()) {
            Some(e) => *e,
            None => {
                let e = expectation.eval(*t)?.mean;
                cache.insert(t.to_bits(), e);
                e
            }
        };
        psi_next.push((1.0 - e).clamp(0.0, 1.0));
    }
    Ok(SeStep {
        sigma,
        phi,
        tau,
        psi_next,
    })
}

/// When `run_se` declares all blocks decoded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum SeStopRule {
    /// Every `psi_c` at or below a fixed threshold.
    Threshold { value: f64 },
    /// Every `psi_c` at or below `f_{M,delta}` with constant `k`.
    Floor { delta: f64, k: f64 },
}

impl Default for SeStopRule {
    fn default() -> Self {
        SeStopRule::Threshold { value: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeConfig {
    pub samples: usize,
    pub seed: u64,
    pub stop: SeStopRule,
    pub t_max: usize,
    /// Optional analytic iteration bound to check the run against.
    pub t_bound: Option<usize>,
}

impl Default for SeConfig {
    fn default() -> Self {
        Self {
            samples: DEFAULT_SAMPLES,
            seed: 0x5eed,
            stop: SeStopRule::default(),
            t_max: 200,
            t_bound: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeStopReason {
    Threshold,
    /// `psi` reached a fixed point above the threshold.
    FixedPoint,
    MaxIterations,
}

/// Per-iteration state-evolution values.
///
/// All per-iteration vectors have `iterations + 1` entries: index `t` holds
/// the values derived from `psi[t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeTrajectory {
    pub m: usize,
    pub psi: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
    /// `1 / (tau ln M)`.
    pub nu: Vec<Vec<f64>>,
    pub sigma_perp: Vec<Vec<f64>>,
    pub tau_perp: Vec<Vec<f64>>,
    /// Iteration at which the run stopped.
    pub iterations: usize,
    pub stop_reason: SeStopReason,
    pub within_t_bound: Option<bool>,
}

impl SeTrajectory {
    /// Index clamped to the last recorded iteration; beyond it the
    /// recursion is assumed to sit at its final value.
    fn idx(&self, t: usize) -> usize {
        t.min(self.iterations)
    }

    pub fn psi_at(&self, t: usize) -> &[f64] {
        &self.psi[self.idx(t)]
    }

    pub fn sigma_at(&self, t: usize) -> &[f64] {
        &self.sigma[self.idx(t)]
    }

    pub fn phi_at(&self, t: usize) -> &[f64] {
        &self.phi[self.idx(t)]
    }

    pub fn tau_at(&self, t: usize) -> &[f64] {
        &self.tau[self.idx(t)]
    }

    /// Mean of `psi` over column blocks at iteration `t`.
    pub fn mean_psi(&self, t: usize) -> f64 {
        let p = self.psi_at(t);
        p.iter().sum::<f64>() / p.len() as f64
    }

    /// Writes `t,c,psi,tau,nu` rows.
    pub fn write_column_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,c,psi,tau,nu")?;
        for t in 0..=self.iterations {
            for c in 0..self.psi[t].len() {
                writeln!(
                    out,
                    "{t},{c},{:.12e},{:.12e},{:.12e}",
                    self.psi[t][c], self.tau[t][c], self.nu[t][c]
                )?;
            }
        }
        Ok(())
    }

    /// Writes `t,r,phi,sigma` rows.
    pub fn write_row_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,r,phi,sigma")?;
        for t in 0..=self.iterations {
            for r in 0..self.phi[t].len() {
                writeln!(
                    out,
                    "{t},{r},{:.12e},{:.12e}",
                    self.phi[t][r], self.sigma[t][r]
                )?;
            }
        }
        Ok(())
    }
}

fn perp(curr: &[f64], prev: Option<&[f64]>) -> Vec<f64> {
    match prev {
        None => curr.to_vec(),
        Some(prev) => curr
            .iter()
            .zip(prev)
            .map(|(c, p)| if *p > 0.0 { c * (1.0 - c / p) } else { 0.0 })
            .collect(),
    }
}

/// Runs the finite-M recursion from `psi = 1` until the stop rule holds,
/// `psi` stops changing, or `t_max` iterations.
pub fn run_se(model: &SeModel, cfg: &SeConfig) -> Result<SeTrajectory> {
    let threshold = match cfg.stop {
        SeStopRule::Threshold { value } => value,
        SeStopRule::Floor { delta, k } => f_m_delta(model.m, delta, k)?,
    };
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "stop threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let expectation = SectionExpectation::new(model.m, cfg.samples, cfg.seed)?;
    let ln_m = (model.m as f64).ln();
    let cols = model.base.cols();

    let mut traj = SeTrajectory {
        m: model.m,
        psi: vec![vec![1.0; cols]],
        sigma: Vec::new(),
        phi: Vec::new(),
        tau: Vec::new(),
        nu: Vec::new(),
        sigma_perp: Vec::new(),
        tau_perp: Vec::new(),
        iterations: 0,
        stop_reason: SeStopReason::MaxIterations,
        within_t_bound: None,
    };
    let mut t = 0;
    loop {
        let psi = traj.psi[t].clone();
        let step = se_step(model, &psi, &expectation)?;
        traj.sigma_perp
            .push(perp(&step.sigma, traj.sigma.last().map(|v| v.as_slice())));
        traj.tau_perp
            .push(perp(&step.tau, traj.tau.last().map(|v| v.as_slice())));
        traj.nu
            .push(step.tau.iter().map(|x| 1.0 / (x * ln_m)).collect());
        traj.sigma.push(step.sigma);
        traj.phi.push(step.phi);
        traj.tau.push(step.tau);

        if psi.iter().all(|p| *p <= threshold) {
            traj.stop_reason = SeStopReason::Threshold;
            break;
        }
        if t > 0 && psi == traj.psi[t - 1] {
            traj.stop_reason = SeStopReason::FixedPoint;
            break;
        }
        if t >= cfg.t_max {
            traj.stop_reason = SeStopReason::MaxIterations;
            break;
        }
        traj.psi.push(step.psi_next);
        t += 1;
    }
    traj.iterations = t;
    traj.within_t_bound = cfg
        .t_bound
        .map(|b| traj.stop_reason == SeStopReason::Threshold && t <= b);
    Ok(traj)
}
