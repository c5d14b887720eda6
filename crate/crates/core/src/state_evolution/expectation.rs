use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Default number of Monte-Carlo samples for the section expectation.
pub const DEFAULT_SAMPLES: usize = 10_000;

const CHUNK: usize = 256;

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Estimator of the expected posterior mass on the true entry of a section,
///
/// `E(tau) = E[ e^{U_1/sqrt(tau)} / (e^{U_1/sqrt(tau)} + e^{-1/tau} sum_{j>=2} e^{U_j/sqrt(tau)}) ]`
///
/// with `U_1..U_M` i.i.d. standard normal. The expectation over `U_1` is
/// taken by quadrature, conditionally on `L = ln sum_{j>=2} e^{U_j/sqrt(tau)}`,
/// so only `L` is sampled. The normal draws are generated once and reused for
/// every `tau` (common random numbers), so estimates at different noise levels
/// are strongly coupled and vary smoothly in `tau`.
#[derive(Debug, Clone)]
pub struct SectionExpectation {
    m: usize,
    samples: usize,
    draws: Vec<f64>,
}

impl SectionExpectation {
    pub fn new(m: usize, samples: usize, seed: u64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("section size must be >= 2, got {m}")));
        }
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one Monte-Carlo sample".into()));
        }
        let mut rng = rng_from_seed(seed);
        // U_1 is integrated out, so only the M - 1 wrong entries are drawn.
        let draws = (0..(m - 1) * samples)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        Ok(Self { m, samples, draws })
    }

    pub fn section_size(&self) -> usize {
        self.m
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Estimate of `E(tau)`; always in `[0, 1]`.
    pub fn eval(&self, tau: f64) -> Result<Estimate> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
        }
        let scale = 1.0 / tau.sqrt();
        let k = self.m - 1;
        // Fixed chunking keeps the reduction order independent of threads.
        let logs: Vec<f64> = self
            .draws
            .par_chunks(k * CHUNK)
            .flat_map_iter(|chunk| chunk.chunks_exact(k).map(|u| log_sum_exp(u, scale)).collect::<Vec<_>>())
            .collect();
        let (lo, hi) = logs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
        let table = ConditionalTable::new(1.0 / tau, scale, lo, hi);
        let partials: Vec<(f64, f64)> = logs
            .par_chunks(CHUNK)
            .map(|chunk| {
                chunk.iter().fold((0.0, 0.0), |(s, s2), l| {
                    let v = table.eval(*l);
                    (s + v, s2 + v * v)
                })
            })
            .collect();
        let (s, s2) = partials
            .iter()
            .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let n = self.samples as f64;
        let mean = s / n;
        let var = if self.samples > 1 {
            ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        Ok(Estimate {
            mean: mean.clamp(0.0, 1.0),
            std_err: (var / n).sqrt(),
        })
    }
}

#[inline]
fn log_sum_exp(u: &[f64], scale: f64) -> f64 {
    let top = u.iter().fold(f64::NEG_INFINITY, |a, x| a.max(x * scale));
    top + u.iter().map(|x| (x * scale - top).exp()).sum::<f64>().ln()
}

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

const QUAD_STEP: f64 = 0.25;

/// `E[logistic(mu + s Z)]` for standard normal `Z`.
///
/// Trapezoid rule over whichever variable has the narrower density: `Z`
/// when `s <= 1`, otherwise the logistic variable `Y` through
/// `P(Y <= mu + s Z) = E[Phi((mu - Y) / s)]`. Both integrands are analytic
/// in a strip around the real axis, so the rule converges geometrically.
pub(crate) fn logistic_normal_mean(mu: f64, s: f64) -> f64 {
    if s <= 1.0 {
        let norm = QUAD_STEP / (2.0 * std::f64::consts::PI).sqrt();
        (0..=80)
            .map(|i| {
                let z = -10.0 + QUAD_STEP * i as f64;
                (-0.5 * z * z).exp() * logistic(mu + s * z)
            })
            .sum::<f64>()
            * norm
    } else {
        (0..=320)
            .map(|i| {
                let y = -40.0 + QUAD_STEP * i as f64;
                logistic(y) * logistic(-y) * normal_cdf((mu - y) / s)
            })
            .sum::<f64>()
            * QUAD_STEP
    }
}

/// `g(L) = E[logistic(U / sqrt(tau) + 1/tau - L)]` on a uniform grid over
/// `[lo, hi]`, linearly interpolated.
struct ConditionalTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
}

impl ConditionalTable {
    fn new(shift: f64, scale: f64, lo: f64, hi: f64) -> Self {
        // g varies on a length scale of about max(1, scale).
        let step = 0.01 * scale.max(1.0);
        let points = ((hi - lo) / step).ceil() as usize + 2;
        let values = (0..points)
            .into_par_iter()
            .map(|i| logistic_normal_mean(shift - (lo + step * i as f64), scale))
            .collect();
        Self { lo, step, values }
    }

    fn eval(&self, l: f64) -> f64 {
        let x = (l - self.lo) / self.step;
        let i = (x.floor() as usize).min(self.values.len() - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// One-shot Monte-Carlo estimate of `E(tau)` with a fresh sampler.
pub fn mc_expectation(tau: f64, m: usize, samples: usize, seed: u64) -> Result<Estimate> {
    if !(tau > 0.0) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    SectionExpectation::new(m, samples, seed)?.eval(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_tau_is_nearly_one() {
        let e = mc_expectation(1e-4, 4, 20_000, 1).unwrap();
        assert!(e.mean >= 1.0 - 1e-3);
    }

    #[test]
    fn rejects_nonpositive_tau() {
        assert!(mc_expectation(0.0, 4, 10, 1).is_err());
        assert!(mc_expectation(-1.0, 4, 10, 1).is_err());
        assert!(SectionExpectation::new(1, 10, 1).is_err());
        assert!(SectionExpectation::new(4, 0, 1).is_err());
    }

    #[test]
    fn large_tau_approaches_uniform() {
        // With overwhelming noise the posterior is nearly uniform over M entries.
        let e = mc_expectation(1e6, 8, 20_000, 2).unwrap();
        assert!((e.mean - 1.0 / 8.0).abs() < 0.01);
    }

    #[test]
    fn logistic_normal_mean_limits() {
        assert!((logistic_normal_mean(0.0, 0.5) - 0.5).abs() < 1e-12);
        assert!((logistic_normal_mean(0.0, 7.0) - 0.5).abs() < 1e-12);
        assert!((logistic_normal_mean(0.3, 1e-9) - logistic(0.3)).abs() < 1e-9);
        // Symmetry: g(mu) + g(-mu) = 1 in both branches.
        for s in [0.4, 1.0, 3.0, 20.0] {
            let sum = logistic_normal_mean(1.7, s) + logistic_normal_mean(-1.7, s);
            assert!((sum - 1.0).abs() < 1e-10, "s = {s}");
        }
    }

    #[test]
    fn logistic_normal_mean_matches_fine_sum() {
        for (mu, s) in [(0.8, 0.6), (-2.0, 1.5), (5.0, 4.0), (12.0, 9.0)] {
            let h = 1e-3;
            let brute: f64 = (0..=20_000)
                .map(|i| {
                    let z = -10.0 + h * i as f64;
                    (-0.5 * z * z).exp() * logistic(mu + s * z)
                })
                .sum::<f64>()
                * h
                / (2.0 * std::f64::consts::PI).sqrt();
            assert!((logistic_normal_mean(mu, s) - brute).abs() < 1e-9, "mu = {mu}, s = {s}");
        }
    }

    #[test]
    fn agrees_with_direct_sampling() {
        // Plain Monte Carlo over all M draws, including U_1.
        let (m, tau, n) = (8usize, 0.4f64, 200_000usize);
        let mut rng = rng_from_seed(77);
        let mut acc = 0.0;
        for _ in 0..n {
            let u: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            let a = u[0] / tau.sqrt() + 1.0 / tau;
            let rest = log_sum_exp(&u[1..], 1.0 / tau.sqrt());
            acc += logistic(a - rest);
        }
        let direct = acc / n as f64;
        let e = mc_expectation(tau, m, 50_000, 5).unwrap();
        assert!((e.mean - direct).abs() < 0.005, "{} vs {direct}", e.mean);
    }

    #[test]
    fn stable_for_extreme_exponents() {
        let s = SectionExpectation::new(16, 200, 3).unwrap();
        for tau in [1e-9, 1e-6, 1e9] {
            let e = s.eval(tau).unwrap();
            assert!(e.mean.is_finite() && (0.0..=1.0).contains(&e.mean));
        }
    }
}
