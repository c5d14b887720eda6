//! AMP for compressed sensing with a spatially coupled measurement matrix.
//!
//! The measurement matrix is `n x p` with block `(r, c)` entries of variance
//! `W[r][c] / (n/R)`; the signal has i.i.d. entries from a scalar prior.

use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{BlockLayout, Design, ScaledAdjoint};
use crate::error::{dims, Error, Result};
use crate::params::{BaseMatrix, CouplingParams};
use crate::rng::rng_from_seed;

/// Signal prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Prior {
    /// Zero with probability `1 - eps`, otherwise `N(0, var)`.
    BernoulliGaussian { eps: f64, var: f64 },
}

impl Prior {
    pub fn bernoulli_gaussian(eps: f64, var: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 1.0) || !(var > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Bernoulli-Gaussian prior needs eps in (0, 1] and var > 0, got {eps}, {var}"
            )));
        }
        Ok(Prior::BernoulliGaussian { eps, var })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Prior::BernoulliGaussian { eps, var } => Self::bernoulli_gaussian(eps, var).map(|_| ()),
        }
    }

    /// `E[beta^2]`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            Prior::BernoulliGaussian { eps, var } => eps * var,
        }
    }

    pub fn sample(&self, p: usize, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        match *self {
            Prior::BernoulliGaussian { eps, var } => {
                let coin = Bernoulli::new(eps.clamp(0.0, 1.0)).expect("eps validated");
                (0..p)
                    .map(|_| {
                        let on = coin.sample(&mut rng);
                        let g: f64 = rng.sample(StandardNormal);
                        if on {
                            g * var.sqrt()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
        }
    }
}

/// Separable denoiser applied to `s = beta + sqrt(tau) G`.
pub trait ScalarDenoiser: Send + Sync {
    fn eta(&self, s: f64, tau: f64) -> f64;
    /// Derivative in `s`.
    fn eta_prime(&self, s: f64, tau: f64) -> f64;
    fn lipschitz(&self) -> bool {
        true
    }
}

/// Posterior mean under a Bernoulli-Gaussian prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BgBayes {
    pub eps: f64,
    pub var: f64,
}

impl BgBayes {
    pub fn new(eps: f64, var: f64) -> Result<Self> {
        Prior::bernoulli_gaussian(eps, var)?;
        Ok(Self { eps, var })
    }

    pub fn from_prior(prior: &Prior) -> Self {
        match *prior {
            Prior::BernoulliGaussian { eps, var } => Self { eps, var },
        }
    }

    /// Posterior probability of a nonzero entry and `d/ds` of its logit.
    fn posterior(&self, s: f64, tau: f64) -> (f64, f64) {
        if self.eps >= 1.0 {
            return (1.0, 0.0);
        }
        let vt = self.var + tau;
        let k = 1.0 / tau - 1.0 / vt;
        let logit = (self.eps / (1.0 - self.eps)).ln() + 0.5 * (tau / vt).ln() + 0.5 * s * s * k;
        let pi = if logit >= 0.0 {
            1.0 / (1.0 + (-logit).exp())
        } else {
            let e = logit.exp();
            e / (1.0 + e)
        };
        (pi, s * k)
    }
}

impl ScalarDenoiser for BgBayes {
    fn eta(&self, s: f64, tau: f64) -> f64 {
        let (pi, _) = self.posterior(s, tau);
        pi * s * self.var / (self.var + tau)
    }

    fn eta_prime(&self, s: f64, tau: f64) -> f64 {
        let (pi, dl) = self.posterior(s, tau);
        let g = self.var / (self.var + tau);
        pi * g + pi * (1.0 - pi) * dl * s * g
    }
}

/// Soft threshold at `alpha sqrt(tau)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftThreshold {
    pub alpha: f64,
}

impl ScalarDenoiser for SoftThreshold {
    fn eta(&self, s: f64, tau: f64) -> f64 {
        let th = self.alpha * tau.sqrt();
        s.signum() * (s.abs() - th).max(0.0)
    }

    fn eta_prime(&self, s: f64, tau: f64) -> f64 {
        if s.abs() > self.alpha * tau.sqrt() {
            1.0
        } else {
            0.0
        }
    }
}

/// Expected squared error `E[(beta - f(beta + sqrt(tau) G))^2]`.
pub fn denoiser_mse(prior: &Prior, f: &dyn ScalarDenoiser, tau: f64) -> f64 {
    match *prior {
        Prior::BernoulliGaussian { eps, var } => {
            let vt = var + tau;
            let g = var / vt;
            let zero = if eps < 1.0 {
                let sd = tau.sqrt();
                normal_expectation(|x| f.eta(sd * x, tau).powi(2))
            } else {
                0.0
            };
            // Given s, beta is N(g s, var tau / vt) when nonzero.
            let sd = vt.sqrt();
            let active = var * tau / vt
                + normal_expectation(|x| {
                    let s = sd * x;
                    (g * s - f.eta(s, tau)).powi(2)
                });
            (1.0 - eps) * zero + eps * active
        }
    }
}

const QUAD_RANGE: f64 = 12.0;
const QUAD_PANELS: usize = 512;

/// `E[h(X)]` for standard normal `X` by adaptive Simpson on fixed panels.
///
/// Denoisers switch between shrinking and passing through over a width that
/// scales with `tau`, far below the spacing of a fixed Gaussian rule, so the
/// panels are refined until successive estimates agree.
pub fn normal_expectation(h: impl Fn(f64) -> f64) -> f64 {
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let f = |x: f64| (-0.5 * x * x).exp() * norm * h(x);
    let width = 2.0 * QUAD_RANGE / QUAD_PANELS as f64;
    (0..QUAD_PANELS)
        .map(|i| {
            let a = -QUAD_RANGE + width * i as f64;
            let b = a + width;
            let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
            simpson(&f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 1e-15, 40)
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (flm, frm) = (f(0.5 * (a + m)), f(0.5 * (m + b)));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol {
        left + right + diff / 15.0
    } else {
        simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Coupled measurement base matrix with unit column sums: the
/// `(omega, Lambda, rho)` shape at average power `1/R`.
pub fn cs_base_matrix(coupling: &CouplingParams) -> Result<BaseMatrix> {
    BaseMatrix::from_coupling(coupling, 1.0 / coupling.rows() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsModel {
    pub p: usize,
    pub n: usize,
    pub prior: Prior,
    pub sigma2: f64,
    pub base: BaseMatrix,
}

impl CsModel {
    pub fn new(p: usize, n: usize, prior: Prior, sigma2: f64, base: BaseMatrix) -> Result<Self> {
        prior.validate()?;
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidArgument(format!("sigma2 must be >= 0, got {sigma2}")));
        }
        if n == 0 || p == 0 || n % base.rows() != 0 || p % base.cols() != 0 {
            return Err(Error::InvalidParams(format!(
                "a {n} x {p} measurement matrix cannot be split into {} x {} blocks",
                base.rows(),
                base.cols()
            )));
        }
        if base.col_sums().iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidArgument("every column of W needs a positive entry".into()));
        }
        Ok(Self {
            p,
            n,
            prior,
            sigma2,
            base,
        })
    }

    /// Sampling ratio `n / p`.
    pub fn delta(&self) -> f64 {
        self.n as f64 / self.p as f64
    }

    /// Strictly positive entries and row sums within `[1/2, 2]`.
    pub fn row_sums_admissible(&self) -> bool {
        self.base.entries().iter().all(|w| *w > 0.0)
            && self.base.row_sums().iter().all(|s| (0.5..=2.0).contains(s))
    }

    pub fn layout(&self) -> Result<BlockLayout> {
        BlockLayout::measurement(self.n, self.p, &self.base)
    }

    /// `phi_r = sigma2 + (R / (C delta)) sum_c W[r][c] psi_c`.
    pub fn phi(&self, psi: &[f64]) -> Vec<f64> {
        let k = self.base.rows() as f64 / (self.base.cols() as f64 * self.delta());
        (0..self.base.rows())
            .map(|r| {
                self.sigma2
                    + k * self
                        .base
                        .row(r)
                        .iter()
                        .zip(psi)
                        .map(|(w, p)| w * p)
                        .sum::<f64>()
            })
            .collect()
    }

    /// `tau_c = (sum_r W[r][c] / phi_r)^{-1}`.
    pub fn tau(&self, phi: &[f64]) -> Vec<f64> {
        (0..self.base.cols())
            .map(|c| {
                let s: f64 = (0..self.base.rows()).map(|r| self.base.get(r, c) / phi[r]).sum();
                1.0 / s
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsSeTrajectory {
    /// Per-entry MSE of each column block; `psi[0]` is the prior second moment.
    pub psi: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    pub tau: Vec<Vec<f64>>,
}

impl CsSeTrajectory {
    /// Predicted `||beta^t - beta||^2 / p`.
    pub fn mse(&self, t: usize) -> f64 {
        let p = &self.psi[t.min(self.psi.len() - 1)];
        p.iter().sum::<f64>() / p.len() as f64
    }

    fn at<'a>(v: &'a [Vec<f64>], t: usize) -> &'a [f64] {
        &v[t.min(v.len() - 1)]
    }
}

/// One step of the recursion: `(phi^t, tau^t, psi^{t+1})`.
pub fn cs_se_step(model: &CsModel, psi: &[f64], f: &dyn ScalarDenoiser) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    dims("psi length", model.base.cols(), psi.len())?;
    if psi.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::InvalidArgument("psi entries must be non-negative".into()));
    }
    let phi = model.phi(psi);
    let tau = model.tau(&phi);
    let next = tau.iter().map(|t| denoiser_mse(&model.prior, f, *t)).collect();
    Ok((phi, tau, next))
}

/// Runs `t_max` steps from `psi = E[beta^2]`.
pub fn cs_se_run(model: &CsModel, f: &dyn ScalarDenoiser, t_max: usize) -> Result<CsSeTrajectory> {
    let mut traj = CsSeTrajectory {
        psi: vec![vec![model.prior.second_moment(); model.base.cols()]],
        phi: Vec::new(),
        tau: Vec::new(),
    };
    for _ in 0..t_max {
        let (phi, tau, next) = cs_se_step(model, traj.psi.last().unwrap(), f)?;
        traj.phi.push(phi);
        traj.tau.push(tau);
        traj.psi.push(next);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy)]
pub enum CsSeSource<'a> {
    Offline(&'a CsSeTrajectory),
    /// `phi_r` from the residual `||z_r||^2 / (n/R)`.
    Online,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsDecodeOutput {
    pub estimate: Vec<f64>,
    /// `||beta^t - beta||^2 / p` for `t = 0..=T`, when the truth is known.
    pub mse_trace: Vec<f64>,
    pub iterations: usize,
    pub diverged: bool,
}

/// Block AMP with a separable denoiser. The Onsager coefficient of row block
/// `r` is `(1/phi_r) sum_c W[r][c] (N_C / N_R) tau_c <f'>_c`, where `<f'>_c`
/// is the mean denoiser derivative over column block `c`.
pub fn cs_amp_decode<D: Design<f64> + ?Sized>(
    design: &D,
    y: &[f64],
    model: &CsModel,
    f: &dyn ScalarDenoiser,
    source: CsSeSource<'_>,
    t_max: usize,
    truth: Option<&[f64]>,
) -> Result<CsDecodeOutput> {
    let layout = design.layout();
    dims("measurement count", model.n, layout.n())?;
    dims("signal dimension", model.p, layout.cols())?;
    dims("received vector length", model.n, y.len())?;
    let (rb, cb) = (model.base.rows(), model.base.cols());
    let (nr, nc) = (layout.block_rows(), layout.block_cols());
    let ratio = nc as f64 / nr as f64;
    let mse = |b: &[f64]| -> Option<f64> {
        truth.map(|t| b.iter().zip(t).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / model.p as f64)
    };

    let mut out = CsDecodeOutput {
        estimate: vec![0.0; model.p],
        ..Default::default()
    };
    out.mse_trace.extend(mse(&out.estimate));
    // Ten times the largest initial residual variance.
    let limit = 10.0
        * model
            .phi(&vec![model.prior.second_moment(); cb])
            .into_iter()
            .fold(0.0, f64::max);
    let mut z_prev = vec![0.0; model.n];
    let mut prev: Option<(Vec<f64>, Vec<f64>, Vec<f64>)> = None;
    for t in 0..t_max {
        let upsilon: Vec<f64> = match &prev {
            None => vec![0.0; rb],
            Some((phi, tau, dmean)) => (0..rb)
                .map(|r| {
                    (0..cb)
                        .map(|c| model.base.get(r, c) * ratio * tau[c] * dmean[c])
                        .sum::<f64>()
                        / phi[r]
                })
                .collect(),
        };
        let ab = design.apply(&out.estimate)?;
        let z: Vec<f64> = (0..model.n)
            .map(|i| y[i] - ab[i] + upsilon[i / nr] * z_prev[i])
            .collect();
        let residual: Vec<f64> = z
            .chunks(nr)
            .map(|zr| (zr.iter().map(|v| v * v).sum::<f64>() / nr as f64).max(1e-300))
            .collect();
        if residual.iter().any(|v| !v.is_finite() || *v > limit) {
            out.diverged = true;
            break;
        }
        let phi = match source {
            CsSeSource::Offline(traj) => CsSeTrajectory::at(&traj.phi, t).to_vec(),
            CsSeSource::Online => residual,
        };
        let tau = match source {
            CsSeSource::Offline(traj) => CsSeTrajectory::at(&traj.tau, t).to_vec(),
            CsSeSource::Online => model.tau(&phi),
        };
        let corr = design.apply_scaled_adjoint(&ScaledAdjoint::from_se(&phi, &tau)?, &z)?;
        let s: Vec<f64> = out.estimate.iter().zip(&corr).map(|(b, c)| b + c).collect();
        let mut dmean = vec![0.0; cb];
        out.estimate
            .par_chunks_mut(nc)
            .zip(s.par_chunks(nc))
            .zip(dmean.par_iter_mut())
            .enumerate()
            .for_each(|(c, ((b, sc), d))| {
                let mut acc = 0.0;
                for (bj, sj) in b.iter_mut().zip(sc) {
                    *bj = f.eta(*sj, tau[c]);
                    acc += f.eta_prime(*sj, tau[c]);
                }
                *d = acc / nc as f64;
            });
        out.iterations = t + 1;
        if out.estimate.iter().any(|v| !v.is_finite()) {
            out.diverged = true;
            break;
        }
        out.mse_trace.extend(mse(&out.estimate));
        z_prev = z;
        prev = Some((phi, tau, dmean));
    }
    Ok(out)
}
