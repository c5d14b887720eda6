use serde::{Deserialize, Serialize};

use super::recursion::se_phi;
use crate::error::{Error, Result};
use crate::params::{BaseMatrix, CouplingParams};

/// Large-M limit of state evolution: every block is either decoded
/// (`psi = 0`) or not (`psi = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticTrajectory {
    /// `psi[t][c]` in `{0, 1}`.
    pub psi: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
    /// True when every block reached `psi = 0`.
    pub decoded: bool,
}

impl AsymptoticTrajectory {
    /// Number of iterations run.
    pub fn iterations(&self) -> usize {
        self.psi.len() - 1
    }

    /// Leading and trailing runs of decoded blocks at iteration `t`.
    pub fn decoded_ends(&self, t: usize) -> (usize, usize) {
        let p = &self.psi[t.min(self.iterations())];
        let lead = p.iter().take_while(|v| **v == 0.0).count();
        let trail = p.iter().rev().take_while(|v| **v == 0.0).count();
        (lead, trail)
    }
}

fn check(sigma2: f64, rate: f64) -> Result<()> {
    if !(sigma2 > 0.0) || !(rate > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "asymptotic state evolution needs sigma2 > 0 and R > 0 (got {sigma2}, {rate})"
        )));
    }
    Ok(())
}

fn run<F>(cols: usize, t_max: usize, mut step: F) -> AsymptoticTrajectory
where
    F: FnMut(&[f64]) -> (Vec<f64>, Vec<f64>),
{
    let mut psi = vec![vec![1.0; cols]];
    let mut phi = Vec::new();
    loop {
        let cur = psi.last().unwrap();
        let (ph, next) = step(cur);
        phi.push(ph);
        if cur.iter().all(|p| *p == 0.0) || psi.len() > t_max || (psi.len() > 1 && *cur == psi[psi.len() - 2]) {
            break;
        }
        psi.push(next);
    }
    let decoded = psi.last().unwrap().iter().all(|p| *p == 0.0);
    AsymptoticTrajectory { psi, phi, decoded }
}

/// Asymptotic recursion for an arbitrary base matrix, with `rate` in nats.
pub fn asymptotic_se(base: &BaseMatrix, sigma2: f64, rate: f64, t_max: usize) -> Result<AsymptoticTrajectory> {
    check(sigma2, rate)?;
    let rows = base.rows() as f64;
    Ok(run(base.cols(), t_max, |psi| {
        let (_, phi) = se_phi(base, psi, sigma2);
        let next = (0..base.cols())
            .map(|c| {
                let s: f64 = (0..base.rows()).map(|r| base.get(r, c) / phi[r]).sum();
                if s / (rate * rows) > 2.0 {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        (phi, next)
    }))
}

/// Same recursion written out for a banded `(omega, Lambda, 0)` base matrix
/// of average power `power`, using only the band structure.
pub fn asymptotic_se_banded(
    coupling: &CouplingParams,
    power: f64,
    sigma2: f64,
    rate: f64,
    t_max: usize,
) -> Result<AsymptoticTrajectory> {
    check(sigma2, rate)?;
    coupling.validate()?;
    if coupling.rho != 0.0 {
        return Err(Error::InvalidArgument("banded recursion requires rho = 0".into()));
    }
    let (w, lam) = (coupling.omega, coupling.lambda);
    let rows = coupling.rows();
    let theta = coupling.vartheta();
    Ok(run(lam, t_max, |psi| {
        let phi: Vec<f64> = (0..rows)
            .map(|r| {
                let lo = r.saturating_sub(w - 1);
                let hi = r.min(lam - 1);
                sigma2 + theta * power / w as f64 * psi[lo..=hi].iter().sum::<f64>()
            })
            .collect();
        let next = (0..lam)
            .map(|c| {
                let s: f64 = phi[c..c + w].iter().map(|p| 1.0 / p).sum();
                if power / (rate * w as f64) * s > 2.0 {
                    0.0
                } else {
                    1.0
                }
            })
            .collect();
        (phi, next)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn general_and_banded_agree() {
        let c = CouplingParams::new(6, 32, 0.0).unwrap();
        let w = BaseMatrix::from_coupling(&c, 15.0).unwrap();
        let rate = std::f64::consts::LN_2;
        let a = asymptotic_se(&w, 1.0, rate, 200).unwrap();
        let b = asymptotic_se_banded(&c, 15.0, 1.0, rate, 200).unwrap();
        assert_eq!(a.psi, b.psi);
        assert!(a.decoded);
    }

    #[test]
    fn uncoupled_above_threshold_stalls() {
        // 1x1 base matrix: decodes iff P/(R phi) > 2 with phi = sigma2 + P.
        let w = BaseMatrix::constant(1, 1, 15.0).unwrap();
        let a = asymptotic_se(&w, 1.0, 0.5, 50).unwrap();
        assert!(!a.decoded);
        let b = asymptotic_se(&w, 1.0, 0.45, 50).unwrap();
        assert!(b.decoded);
        assert_eq!(b.iterations(), 1);
    }

    #[test]
    fn banded_rejects_rho() {
        let c = CouplingParams::new(2, 4, 0.1).unwrap();
        assert!(asymptotic_se_banded(&c, 1.0, 1.0, 0.1, 10).is_err());
    }
}
