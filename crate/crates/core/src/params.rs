//! Base matrices and code parameters.
//!
//! A base matrix `W` is an `R x C` variance profile. Each entry expands to an
//! `(n/R) x (ML/C)` block of the design matrix whose entries have variance
//! `W[r][c] / L`. The average of all entries equals the power constraint `P`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when checking the power identity of a base matrix.
pub const POWER_IDENTITY_TOL: f64 = 1e-12;

pub fn bits_to_nats(bits: f64) -> f64 {
    bits * std::f64::consts::LN_2
}

pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// AWGN capacity `0.5 ln(1 + snr)` in nats per real channel use.
pub fn channel_capacity(snr: f64) -> Result<f64> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::InvalidArgument(format!("snr must be positive, got {snr}")));
    }
    Ok(0.5 * snr.ln_1p())
}

/// Parameters of an `(omega, Lambda, rho)` band-diagonal base matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    /// Coupling width: number of nonzero band entries per column.
    pub omega: usize,
    /// Coupling length: number of column blocks.
    pub lambda: usize,
    /// Fraction of each column's power placed outside the band.
    pub rho: f64,
}

impl CouplingParams {
    pub fn new(omega: usize, lambda: usize, rho: f64) -> Result<Self> {
        let c = Self { omega, lambda, rho };
        c.validate()?;
        Ok(c)
    }

    /// The trivial coupling that yields a 1x1 base matrix (standard SPARC).
    pub fn uncoupled() -> Self {
        Self {
            omega: 1,
            lambda: 1,
            rho: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omega < 1 {
            return Err(Error::InvalidCoupling("omega must be at least 1".into()));
        }
        if self.lambda < 2 * self.omega - 1 {
            return Err(Error::InvalidCoupling(format!(
                "Lambda = {} must be at least 2*omega - 1 = {}",
                self.lambda,
                2 * self.omega - 1
            )));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return Err(Error::InvalidCoupling(format!(
                "rho = {} must lie in [0, 1)",
                self.rho
            )));
        }
        if self.rho > 0.0 && self.lambda < 2 {
            return Err(Error::InvalidCoupling(
                "rho > 0 requires Lambda >= 2 (no off-band entries exist otherwise)".into(),
            ));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.lambda + self.omega - 1
    }

    pub fn cols(&self) -> usize {
        self.lambda
    }

    /// `1 + (omega - 1) / Lambda`, the ratio of row blocks to column blocks.
    pub fn vartheta(&self) -> f64 {
        1.0 + (self.omega as f64 - 1.0) / self.lambda as f64
    }

    /// Whether base-matrix row `r` lies in the band of column `c` (0-based).
    pub fn in_band(&self, r: usize, c: usize) -> bool {
        c <= r && r < c + self.omega
    }
}

/// An `R x C` nonnegative variance profile, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
    avg_power: f64,
}

impl BaseMatrix {
    /// Builds an `(omega, Lambda, rho)` base matrix with average power `power`.
    pub fn from_coupling(coupling: &CouplingParams, power: f64) -> Result<Self> {
        coupling.validate()?;
        if !(power > 0.0) || !power.is_finite() {
            return Err(Error::InvalidArgument(format!("power must be positive, got {power}")));
        }
        let rows = coupling.rows();
        let cols = coupling.cols();
        let (omega, lambda) = (coupling.omega as f64, coupling.lambda as f64);
        let band = (1.0 - coupling.rho) * power * rows as f64 / omega;
        let off = if coupling.lambda > 1 {
            coupling.rho * power * rows as f64 / (lambda - 1.0)
        } else {
            0.0
        };
        let mut entries = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                entries[r * cols + c] = if coupling.in_band(r, c) { band } else { off };
            }
        }
        Ok(Self {
            rows,
            cols,
            entries,
            avg_power: power,
        })
    }

    /// Wraps a user-supplied matrix. The average power is the entry mean.
    pub fn from_entries(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("base matrix must be non-empty".into()));
        }
        crate::error::dims("base matrix entries", rows * cols, entries.len())?;
        if let Some(bad) = entries.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "base matrix entries must be finite and nonnegative, found {bad}"
            )));
        }
        let avg_power = entries.iter().sum::<f64>() / (rows * cols) as f64;
        if !(avg_power > 0.0) {
            return Err(Error::InvalidArgument("base matrix is identically zero".into()));
        }
        Ok(Self {
            rows,
            cols,
            entries,
            avg_power,
        })
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::from_entries(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn avg_power(&self) -> f64 {
        self.avg_power
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.entries[r * self.cols + c]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    /// Returns a copy with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|w| w * factor).collect(),
            avg_power: self.avg_power * factor,
        }
    }

    /// `(1/C) sum_c W[r][c]` for every row.
    pub fn row_averages(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().sum::<f64>() / self.cols as f64)
            .collect()
    }

    /// `(1/R) sum_r W[r][c]` for every column.
    pub fn col_averages(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum::<f64>() / self.rows as f64)
            .collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.get(r, c)).sum())
            .collect()
    }

    /// Smallest and largest of all row and column averages, `(kappa_L, kappa_U)`.
    ///
    /// The decoding-progression bounds need `kappa_L > 0`; checking that is
    /// left to the caller.
    pub fn average_bounds(&self) -> (f64, f64) {
        self.row_averages()
            .into_iter()
            .chain(self.col_averages())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn max_row_average(&self) -> f64 {
        self.row_averages().into_iter().fold(0.0, f64::max)
    }

    /// Relative deviation of the entry mean from the declared average power.
    pub fn power_identity_error(&self) -> f64 {
        let mean = self.entries.iter().sum::<f64>() / (self.rows * self.cols) as f64;
        ((mean - self.avg_power) / self.avg_power).abs()
    }

    /// True if `W` is unchanged by reversing both row and column order.
    pub fn is_centrosymmetric(&self, tol: f64) -> bool {
        (0..self.rows).all(|r| {
            (0..self.cols).all(|c| {
                let a = self.get(r, c);
                let b = self.get(self.rows - 1 - r, self.cols - 1 - c);
                (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
            })
        })
    }
}

/// How the code length is snapped to a multiple of the base-matrix row count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthRounding {
    /// Round up, so the realized rate never exceeds the target.
    #[default]
    Up,
    /// Round to the nearest multiple (ties up).
    Nearest,
}

/// Dimensions, rate and channel quantities of one SC-SPARC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparcParams {
    /// Code length (channel uses).
    pub n: usize,
    /// Columns per section.
    pub m: usize,
    /// Number of sections.
    pub l: usize,
    /// Base-matrix row blocks.
    pub rows: usize,
    /// Base-matrix column blocks.
    pub cols: usize,
    /// Rate in nats per channel use, `L ln M / n`.
    pub rate: f64,
    pub power: f64,
    pub sigma2: f64,
}

impl SparcParams {
    /// Checks divisibility and computes the rate from `(n, M, L)`.
    pub fn new(n: usize, m: usize, l: usize, base: &BaseMatrix, sigma2: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidParams(format!("M must be at least 2, got {m}")));
        }
        if l == 0 || n == 0 {
            return Err(Error::InvalidParams("n and L must be positive".into()));
        }
        if l % base.cols() != 0 {
            return Err(Error::InvalidParams(format!(
                "C = {} must divide L = {l}",
                base.cols()
            )));
        }
        if n % base.rows() != 0 {
            return Err(Error::InvalidParams(format!(
                "R = {} must divide n = {n}",
                base.rows()
            )));
        }
        if !(sigma2 > 0.0) || !sigma2.is_finite() {
            return Err(Error::InvalidParams(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self {
            n,
            m,
            l,
            rows: base.rows(),
            cols: base.cols(),
            rate: l as f64 * (m as f64).ln() / n as f64,
            power: base.avg_power(),
            sigma2,
        })
    }

    /// Total number of columns `ML`.
    pub fn ml(&self) -> usize {
        self.m * self.l
    }

    /// Rows per row block, `n / R`.
    pub fn block_rows(&self) -> usize {
        self.n / self.rows
    }

    /// Columns per column block, `ML / C`.
    pub fn block_cols(&self) -> usize {
        self.ml() / self.cols
    }

    pub fn sections_per_block(&self) -> usize {
        self.l / self.cols
    }

    pub fn snr(&self) -> f64 {
        self.power / self.sigma2
    }

    pub fn rate_bits(&self) -> f64 {
        nats_to_bits(self.rate)
    }

    /// Rate of one block viewed as a standalone SPARC, `R * R_rows / C`.
    pub fn inner_rate(&self) -> f64 {
        self.rate * self.rows as f64 / self.cols as f64
    }
}

/// Derives `(n, R)` for a target rate, snapping `n` to a multiple of `R_rows`.
///
/// `target_rate` is in nats per channel use.
#[allow(clippy::too_many_arguments)]
pub fn derive_code_params(
    target_rate: f64,
    m: usize,
    coupling: &CouplingParams,
    l: usize,
    power: f64,
    sigma2: f64,
    rounding: LengthRounding,
) -> Result<(SparcParams, BaseMatrix)> {
    if !(target_rate > 0.0) || !target_rate.is_finite() {
        return Err(Error::InvalidParams(format!(
            "target rate must be positive, got {target_rate}"
        )));
    }
    if m < 2 {
        return Err(Error::InvalidParams(format!("M must be at least 2, got {m}")));
    }
    if l == 0 || l % coupling.lambda != 0 {
        return Err(Error::InvalidParams(format!(
            "L = {l} must be a positive multiple of Lambda = {}",
            coupling.lambda
        )));
    }
    let base = BaseMatrix::from_coupling(coupling, power)?;
    let n = snap_length(l as f64 * (m as f64).ln() / target_rate, base.rows(), rounding);
    if n == 0 {
        return Err(Error::InvalidParams("rounded code length is zero".into()));
    }
    let params = SparcParams::new(n, m, l, &base, sigma2)?;
    Ok((params, base))
}

/// Snaps an exact (real) length to a multiple of `unit`.
pub fn snap_length(exact: f64, unit: usize, rounding: LengthRounding) -> usize {
    let blocks = exact / unit as f64;
    // Absorb round-off so exact multiples stay fixed points.
    let nearest = blocks.round();
    let blocks = if (blocks - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        match rounding {
            LengthRounding::Up => blocks.ceil(),
            LengthRounding::Nearest => nearest,
        }
    };
    blocks as usize * unit
}

/// Smallest multiple of `unit` that is at least `l`.
pub fn round_up_to_multiple(l: usize, unit: usize) -> usize {
    l.div_ceil(unit) * unit
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_base_matrix_entries() {
        let c = CouplingParams::new(3, 7, 0.0).unwrap();
        let w = BaseMatrix::from_coupling(&c, 1.0).unwrap();
        assert_eq!((w.rows(), w.cols()), (9, 7));
        for col in 0..7 {
            let band: Vec<f64> = (0..9).map(|r| w.get(r, col)).filter(|v| *v != 0.0).collect();
            assert_eq!(band.len(), 3);
            assert!(band.iter().all(|v| (*v - 3.0).abs() < 1e-15));
            for r in 0..9 {
                assert_eq!(w.get(r, col) != 0.0, (col..col + 3).contains(&r));
            }
        }
    }

    #[test]
    fn uncoupled_is_one_by_one() {
        let w = BaseMatrix::from_coupling(&CouplingParams::uncoupled(), 2.5).unwrap();
        assert_eq!((w.rows(), w.cols()), (1, 1));
        assert_eq!(w.get(0, 0), 2.5);
    }

    #[test]
    fn power_identity_by_direct_sum() {
        let c = CouplingParams::new(2, 4, 0.5).unwrap();
        let w = BaseMatrix::from_coupling(&c, 1.0).unwrap();
        let mut total = 0.0;
        for r in 0..5 {
            for col in 0..4 {
                total += w.get(r, col);
            }
        }
        assert!((total / 20.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_coupling() {
        assert!(CouplingParams::new(3, 4, 0.0).is_err());
        assert!(CouplingParams::new(2, 4, 1.0).is_err());
        assert!(CouplingParams::new(2, 4, -0.1).is_err());
        assert!(CouplingParams::new(0, 4, 0.0).is_err());
    }

    #[test]
    fn baseline_code_length() {
        let c = CouplingParams::new(6, 32, 0.0).unwrap();
        let r0 = bits_to_nats(1.5);
        let (p, _) =
            derive_code_params(r0, 512, &c, 2048, 1.0, 1.0 / 15.0, LengthRounding::Nearest).unwrap();
        assert_eq!(p.n, 12284);
        assert!((p.rate_bits() - 2048.0 * 9.0 / 12284.0).abs() < 1e-12);
        assert!((p.rate_bits() - 1.5005).abs() < 1e-4);

        let (up, _) =
            derive_code_params(r0, 512, &c, 2048, 1.0, 1.0 / 15.0, LengthRounding::Up).unwrap();
        // 2048 * 9 / 1.5 = 12288 -> next multiple of 37
        assert_eq!(up.n, 333 * 37);
        assert!(up.rate <= r0);
    }

    #[test]
    fn length_fixed_point() {
        let c = CouplingParams::new(2, 4, 0.0).unwrap();
        let n = 5 * 40;
        let r0 = 64.0 * 16f64.ln() / n as f64;
        let (p, _) = derive_code_params(r0, 16, &c, 64, 1.0, 1.0, LengthRounding::Up).unwrap();
        assert_eq!(p.n, n);
    }

    #[test]
    fn length_one_bit_m16() {
        let c = CouplingParams::new(2, 4, 0.0).unwrap();
        // oracle: 64 sections * 4 bits / 1 bit = 256 -> ceil to a multiple of 5
        let expected = (256 + 4) / 5 * 5;
        let (p, _) =
            derive_code_params(bits_to_nats(1.0), 16, &c, 64, 1.0, 1.0, LengthRounding::Up).unwrap();
        assert_eq!(p.n, expected);
        assert!(p.rate <= bits_to_nats(1.0) + 1e-15);
        assert!((p.rate - 64.0 * 16f64.ln() / p.n as f64).abs() < 1e-12);
    }

    #[test]
    fn derive_rejects_bad_l() {
        let c = CouplingParams::new(2, 4, 0.0).unwrap();
        assert!(derive_code_params(1.0, 16, &c, 66, 1.0, 1.0, LengthRounding::Up).is_err());
        assert!(derive_code_params(1e9, 16, &c, 4, 1.0, 1.0, LengthRounding::Nearest).is_err());
    }

    #[test]
    fn lemma1_averages() {
        let c = CouplingParams::new(3, 7, 0.0).unwrap();
        let w = BaseMatrix::from_coupling(&c, 1.0).unwrap();
        let rows = w.row_averages();
        assert!((rows[0] - 3.0 / 7.0).abs() < 1e-12);
        assert!((rows[4] - 9.0 / 7.0).abs() < 1e-12);
        let (lo, hi) = w.average_bounds();
        assert!((lo - 3.0 / 7.0).abs() < 1e-12);
        assert!((hi - 9.0 / 7.0).abs() < 1e-12);

        let positive = BaseMatrix::from_coupling(&CouplingParams::new(3, 7, 0.1).unwrap(), 1.0)
            .unwrap();
        assert!(positive.average_bounds().0 > 0.0);

        let flat = BaseMatrix::constant(3, 4, 2.0).unwrap();
        assert_eq!(flat.average_bounds(), (2.0, 2.0));
    }

    #[test]
    fn capacity_values() {
        assert!((channel_capacity(3.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((nats_to_bits(channel_capacity(15.0).unwrap()) - 2.0).abs() < 1e-12);
        assert!((channel_capacity(1.0).unwrap() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(channel_capacity(0.0).is_err());
        assert!(channel_capacity(-1.0).is_err());
    }

    #[test]
    fn sparc_params_validation() {
        let w = BaseMatrix::from_coupling(&CouplingParams::new(2, 4, 0.0).unwrap(), 1.0).unwrap();
        assert!(SparcParams::new(100, 16, 64, &w, 1.0).is_ok());
        assert!(SparcParams::new(101, 16, 64, &w, 1.0).is_err());
        assert!(SparcParams::new(100, 16, 66, &w, 1.0).is_err());
        assert!(SparcParams::new(100, 1, 64, &w, 1.0).is_err());
        let p = SparcParams::new(100, 16, 64, &w, 0.5).unwrap();
        assert_eq!(p.block_rows(), 20);
        assert_eq!(p.block_cols(), 256);
        assert_eq!(p.sections_per_block(), 16);
        assert!((p.snr() - 2.0).abs() < 1e-15);
        assert!((p.inner_rate() - p.rate * 5.0 / 4.0).abs() < 1e-15);
    }
}
