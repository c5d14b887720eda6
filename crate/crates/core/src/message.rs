//! Message vectors, hard decisions and error metrics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::rng::rng_from_seed;

/// A SPARC message: one unit entry in each of `L` sections of size `M`.
///
/// Stored as the per-section position of the nonzero entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MessageVector {
    m: usize,
    positions: Vec<u32>,
}

impl MessageVector {
    pub fn from_positions(m: usize, positions: Vec<u32>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidArgument(format!("section size must be >= 2, got {m}")));
        }
        if let Some(p) = positions.iter().find(|p| **p as usize >= m) {
            return Err(Error::InvalidArgument(format!(
                "position {p} out of range for section size {m}"
            )));
        }
        Ok(Self { m, positions })
    }

    /// Uniform independent positions, deterministic under `seed`.
    pub fn random(m: usize, l: usize, seed: u64) -> Self {
        let mut rng = rng_from_seed(seed);
        let positions = (0..l).map(|_| rng.gen_range(0..m as u32)).collect();
        Self { m, positions }
    }

    pub fn section_size(&self) -> usize {
        self.m
    }

    pub fn sections(&self) -> usize {
        self.positions.len()
    }

    pub fn len(&self) -> usize {
        self.m * self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[u32] {
        &self.positions
    }

    /// Global column index of the nonzero entry in each section.
    pub fn support(&self) -> impl Iterator<Item = usize> + '_ {
        self.positions
            .iter()
            .enumerate()
            .map(move |(sec, p)| sec * self.m + *p as usize)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for j in self.support() {
            v[j] = 1.0;
        }
        v
    }
}

/// Posterior-mean estimate of a message: each section is a probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftEstimate {
    m: usize,
    values: Vec<f64>,
}

impl SoftEstimate {
    pub fn new(m: usize, values: Vec<f64>) -> Result<Self> {
        if m < 2 || values.len() % m != 0 {
            return Err(Error::InvalidArgument(format!(
                "length {} is not a multiple of section size {m}",
                values.len()
            )));
        }
        Ok(Self { m, values })
    }

    pub fn zeros(m: usize, l: usize) -> Self {
        Self {
            m,
            values: vec![0.0; m * l],
        }
    }

    pub fn section_size(&self) -> usize {
        self.m
    }

    pub fn sections(&self) -> usize {
        self.values.len() / self.m
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn section(&self, l: usize) -> &[f64] {
        &self.values[l * self.m..(l + 1) * self.m]
    }
}

impl From<&MessageVector> for SoftEstimate {
    fn from(msg: &MessageVector) -> Self {
        Self {
            m: msg.m,
            values: msg.to_dense(),
        }
    }
}

/// Argmax per section; ties go to the lowest index.
pub fn hard_decision(est: &SoftEstimate) -> MessageVector {
    let positions = est
        .values
        .chunks_exact(est.m)
        .map(|sec| {
            let mut best = 0usize;
            for (j, v) in sec.iter().enumerate().skip(1) {
                if *v > sec[best] {
                    best = j;
                }
            }
            best as u32
        })
        .collect();
    MessageVector {
        m: est.m,
        positions,
    }
}

fn check_shapes(a_m: usize, a_l: usize, b_m: usize, b_l: usize) -> Result<()> {
    dims("section size", b_m, a_m)?;
    dims("section count", b_l, a_l)
}

/// Fraction of sections whose decoded position differs from the truth.
pub fn section_error_rate(decoded: &MessageVector, truth: &MessageVector) -> Result<f64> {
    check_shapes(decoded.m, decoded.sections(), truth.m, truth.sections())?;
    Ok(section_errors(decoded, truth) as f64 / truth.sections() as f64)
}

pub fn section_errors(decoded: &MessageVector, truth: &MessageVector) -> usize {
    decoded
        .positions
        .iter()
        .zip(&truth.positions)
        .filter(|(a, b)| a != b)
        .count()
}

/// Overall and per-column-block normalized squared error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nmse {
    /// `||est - truth||^2 / L`.
    pub overall: f64,
    /// `||est_c - truth_c||^2 / (L / C)` for each column block.
    pub per_block: Vec<f64>,
}

/// Squared error of each section.
pub fn section_squared_errors(est: &[f64], truth: &MessageVector) -> Result<Vec<f64>> {
    dims("estimate length", truth.len(), est.len())?;
    let m = truth.m;
    Ok(est
        .chunks_exact(m)
        .zip(&truth.positions)
        .map(|(sec, p)| {
            let sq: f64 = sec.iter().map(|v| v * v).sum();
            let hit = sec[*p as usize];
            // ||sec - e_p||^2 without forming e_p.
            (sq - 2.0 * hit + 1.0).max(0.0)
        })
        .collect())
}

/// Normalized MSE of `est` against `truth`, split into `blocks` column blocks.
pub fn nmse(est: &[f64], truth: &MessageVector, blocks: usize) -> Result<Nmse> {
    let l = truth.sections();
    if blocks == 0 || l % blocks != 0 {
        return Err(Error::InvalidArgument(format!(
            "{blocks} column blocks do not divide L = {l}"
        )));
    }
    let per_section = section_squared_errors(est, truth)?;
    let spb = l / blocks;
    let per_block: Vec<f64> = per_section
        .chunks_exact(spb)
        .map(|chunk| chunk.iter().sum::<f64>() / spb as f64)
        .collect();
    let overall = per_block.iter().sum::<f64>() / blocks as f64;
    Ok(Nmse { overall, per_block })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_message_structure() {
        let msg = MessageVector::random(2, 3, 11);
        let dense = msg.to_dense();
        assert_eq!(dense.len(), 6);
        for sec in dense.chunks(2) {
            assert_eq!(sec.iter().sum::<f64>(), 1.0);
            assert!(sec.iter().all(|v| *v == 0.0 || *v == 1.0));
        }
        assert_eq!(msg, MessageVector::random(2, 3, 11));
    }

    #[test]
    fn position_frequencies_are_uniform() {
        // chi-square on 10^4 draws over M = 8 positions, 7 dof
        let m = 8;
        let msg = MessageVector::random(m, 10_000, 3);
        let mut counts = vec![0f64; m];
        for p in msg.positions() {
            counts[*p as usize] += 1.0;
        }
        let expected = 10_000.0 / m as f64;
        let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
        // 0.999 quantile of chi-square with 7 dof
        assert!(chi2 < 24.32, "chi2 = {chi2}");
        let sd = (10_000.0 * (1.0 / m as f64) * (1.0 - 1.0 / m as f64)).sqrt();
        for c in counts {
            assert!((c - expected).abs() < 3.0 * sd + 1.0);
        }
    }

    #[test]
    fn hard_decision_examples() {
        let est = SoftEstimate::new(4, vec![0.7, 0.2, 0.1, 0.0, 0.25, 0.25, 0.25, 0.25]).unwrap();
        let hd = hard_decision(&est);
        assert_eq!(hd.positions(), &[0, 0]);

        let msg = MessageVector::random(4, 10, 5);
        assert_eq!(hard_decision(&SoftEstimate::from(&msg)), msg);
    }

    #[test]
    fn ser_counts() {
        let truth = MessageVector::from_positions(4, vec![0; 8]).unwrap();
        assert_eq!(section_error_rate(&truth, &truth).unwrap(), 0.0);
        let all = MessageVector::from_positions(4, vec![1; 8]).unwrap();
        assert_eq!(section_error_rate(&all, &truth).unwrap(), 1.0);
        let mut one = vec![0; 8];
        one[5] = 3;
        let one = MessageVector::from_positions(4, one).unwrap();
        assert_eq!(section_error_rate(&one, &truth).unwrap(), 0.125);
        let short = MessageVector::from_positions(4, vec![0; 4]).unwrap();
        assert!(section_error_rate(&short, &truth).is_err());
    }

    #[test]
    fn nmse_examples() {
        let truth = MessageVector::random(4, 12, 9);
        let exact = nmse(&truth.to_dense(), &truth, 3).unwrap();
        assert_eq!(exact.overall, 0.0);
        assert!(exact.per_block.iter().all(|v| *v == 0.0));

        let zero = nmse(&vec![0.0; 48], &truth, 3).unwrap();
        assert!(zero.per_block.iter().all(|v| (*v - 1.0).abs() < 1e-15));

        let est: Vec<f64> = (0..48).map(|j| ((j * 7) % 5) as f64 / 10.0).collect();
        let r = nmse(&est, &truth, 3).unwrap();
        let mean = r.per_block.iter().sum::<f64>() / 3.0;
        assert!((r.overall - mean).abs() < 1e-12);
        let direct: f64 = est
            .iter()
            .zip(truth.to_dense())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / 12.0;
        assert!((r.overall - direct).abs() < 1e-12);

        assert!(nmse(&est, &truth, 5).is_err());
        assert!(nmse(&est[..40], &truth, 3).is_err());
    }
}
