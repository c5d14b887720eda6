//! Block-structured design operators.
//!
//! A design matrix is partitioned into `R x C` blocks of size
//! `(n/R) x (N/C)`. Block `(r, c)` has entries of mean-square magnitude
//! `var[r][c]`, which is `W[r][c] / L` for SPARCs and `W[r][c] / (n/R)` for
//! compressed-sensing measurement matrices.
//!
//! Two operator families implement [`Design`]:
//! - [`DenseDesign`]: i.i.d. Gaussian entries, stored explicitly.
//! - [`DftDesign`]: rows sampled from a randomized DFT, applied with FFTs.

mod dense;
mod dft;
mod scalar;

pub use dense::DenseDesign;
pub use dft::DftDesign;
pub use scalar::{inner, norm_sqr, Field, Scalar};

use serde::{Deserialize, Serialize};

use crate::error::{dims, Error, Result};
use crate::params::{BaseMatrix, SparcParams};

/// Default cap on the memory of a materialized dense matrix (2 GiB).
pub const DEFAULT_DENSE_CAP_BYTES: u128 = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Dense,
    Dft,
}

impl OperatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OperatorKind::Dense => "dense",
            OperatorKind::Dft => "dft",
        }
    }
}

/// Serializable description of a built operator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub kind: OperatorKind,
    pub field: Field,
    pub seed: u64,
    pub n: usize,
    pub cols: usize,
    pub row_blocks: usize,
    pub col_blocks: usize,
}

/// Dimensions and per-block variances shared by all operator kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockLayout {
    n: usize,
    cols: usize,
    row_blocks: usize,
    col_blocks: usize,
    block_var: Vec<f64>,
}

impl BlockLayout {
    /// Block variances `W[r][c] / divisor` for an `n x cols` matrix.
    pub fn new(n: usize, cols: usize, base: &BaseMatrix, divisor: f64) -> Result<Self> {
        let (rb, cb) = (base.rows(), base.cols());
        if n == 0 || cols == 0 || n % rb != 0 || cols % cb != 0 {
            return Err(Error::InvalidParams(format!(
                "a {n} x {cols} matrix cannot be split into {rb} x {cb} equal blocks"
            )));
        }
        if !(divisor > 0.0) {
            return Err(Error::InvalidArgument("variance divisor must be positive".into()));
        }
        Ok(Self {
            n,
            cols,
            row_blocks: rb,
            col_blocks: cb,
            block_var: base.entries().iter().map(|w| w / divisor).collect(),
        })
    }

    /// SPARC layout: `n x ML`, block variance `W[r][c] / L`.
    pub fn sparc(params: &SparcParams, base: &BaseMatrix) -> Result<Self> {
        dims("base matrix rows", params.rows, base.rows())?;
        dims("base matrix cols", params.cols, base.cols())?;
        Self::new(params.n, params.ml(), base, params.l as f64)
    }

    /// Compressed-sensing layout: `n x p`, block variance `W[r][c] / (n/R)`.
    pub fn measurement(n: usize, p: usize, base: &BaseMatrix) -> Result<Self> {
        if n % base.rows() != 0 {
            return Err(Error::InvalidParams(format!(
                "R = {} must divide n = {n}",
                base.rows()
            )));
        }
        Self::new(n, p, base, (n / base.rows()) as f64)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_blocks(&self) -> usize {
        self.row_blocks
    }

    pub fn col_blocks(&self) -> usize {
        self.col_blocks
    }

    pub fn block_rows(&self) -> usize {
        self.n / self.row_blocks
    }

    pub fn block_cols(&self) -> usize {
        self.cols / self.col_blocks
    }

    #[inline]
    pub fn var(&self, r: usize, c: usize) -> f64 {
        self.block_var[r * self.col_blocks + c]
    }

    #[inline]
    pub fn row_block_of(&self, i: usize) -> usize {
        i / self.block_rows()
    }

    #[inline]
    pub fn col_block_of(&self, j: usize) -> usize {
        j / self.block_cols()
    }

    fn check_dense_cap<T>(&self, cap_bytes: u128) -> Result<()> {
        let requested = self.n as u128 * self.cols as u128 * std::mem::size_of::<T>() as u128;
        if requested > cap_bytes {
            return Err(Error::SizeCap {
                requested,
                cap: cap_bytes,
            });
        }
        Ok(())
    }
}

/// Block-constant scaling `S[r][c] = tau_c / phi_r` applied inside the adjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledAdjoint {
    rows: usize,
    cols: usize,
    s: Vec<f64>,
}

impl ScaledAdjoint {
    pub fn new(rows: usize, cols: usize, s: Vec<f64>) -> Result<Self> {
        dims("scaling matrix entries", rows * cols, s.len())?;
        if let Some(bad) = s.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "adjoint scaling entries must be positive and finite, found {bad}"
            )));
        }
        Ok(Self { rows, cols, s })
    }

    /// `S[r][c] = tau[c] / phi[r]`.
    pub fn from_se(phi: &[f64], tau: &[f64]) -> Result<Self> {
        let s = phi
            .iter()
            .flat_map(|p| tau.iter().map(move |t| t / p))
            .collect();
        Self::new(phi.len(), tau.len(), s)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            s: vec![1.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.s[r * self.cols + c]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }
}

/// A row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> DenseMatrix<T> {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Plain `A x` by rows.
    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .fold(T::default(), |acc, (a, b)| acc + *a * *b)
            })
            .collect()
    }

    /// Plain `A^* z`.
    pub fn adjoint_mul_vec(&self, z: &[T]) -> Vec<T> {
        let mut out = vec![T::default(); self.cols];
        for (i, zi) in z.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * *zi;
            }
        }
        out
    }
}

/// A linear operator with the block structure AMP needs.
pub trait Design<T: Scalar>: Send + Sync {
    fn layout(&self) -> &BlockLayout;

    fn spec(&self) -> OperatorSpec;

    /// `A x`.
    fn apply(&self, x: &[T]) -> Result<Vec<T>>;

    /// `(S ⊙ A)^* z`, the conjugate transpose of the block-scaled matrix.
    fn apply_scaled_adjoint(&self, scale: &ScaledAdjoint, z: &[T]) -> Result<Vec<T>>;

    /// Exact dense representation, refused above `cap_bytes`.
    fn materialize(&self, cap_bytes: u128) -> Result<DenseMatrix<T>>;

    fn n(&self) -> usize {
        self.layout().n()
    }

    fn cols(&self) -> usize {
        self.layout().cols()
    }

    /// `A x` for a real vector `x`, such as a message or soft estimate.
    fn apply_real(&self, x: &[f64]) -> Result<Vec<T>> {
        let lifted: Vec<T> = x.iter().map(|v| T::from_re(*v)).collect();
        self.apply(&lifted)
    }
}

/// Gaussian SPARC design with block variances `W[r][c] / L`.
pub fn build_gaussian_design<T: Scalar>(
    params: &SparcParams,
    base: &BaseMatrix,
    seed: u64,
    cap_bytes: u128,
) -> Result<DenseDesign<T>> {
    DenseDesign::build(BlockLayout::sparc(params, base)?, seed, cap_bytes)
}

/// DFT-based SPARC design with block variances `W[r][c] / L`.
pub fn build_dft_design<T: Scalar>(params: &SparcParams, base: &BaseMatrix, seed: u64) -> Result<DftDesign<T>>
where
    DftDesign<T>: Design<T>,
{
    DftDesign::build(BlockLayout::sparc(params, base)?, seed)
}

/// Builds either operator kind behind a trait object.
pub fn build_design<T: Scalar>(
    kind: OperatorKind,
    layout: BlockLayout,
    seed: u64,
    cap_bytes: u128,
) -> Result<Box<dyn Design<T>>>
where
    DftDesign<T>: Design<T>,
{
    Ok(match kind {
        OperatorKind::Dense => Box::new(DenseDesign::<T>::build(layout, seed, cap_bytes)?),
        OperatorKind::Dft => Box::new(DftDesign::<T>::build(layout, seed)?),
    })
}

fn check_adjoint_args(layout: &BlockLayout, scale: &ScaledAdjoint, z_len: usize) -> Result<()> {
    dims("adjoint input length", layout.n(), z_len)?;
    dims("scaling rows", layout.row_blocks(), scale.rows())?;
    dims("scaling cols", layout.col_blocks(), scale.cols())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_adjoint_validation() {
        assert!(ScaledAdjoint::new(1, 2, vec![1.0, 0.0]).is_err());
        assert!(ScaledAdjoint::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(ScaledAdjoint::new(1, 2, vec![1.0]).is_err());
        let s = ScaledAdjoint::from_se(&[2.0, 4.0], &[1.0, 3.0, 5.0]).unwrap();
        assert_eq!(s.get(1, 2), 5.0 / 4.0);
    }

    #[test]
    fn layout_rejects_uneven_blocks() {
        let w = BaseMatrix::constant(3, 2, 1.0).unwrap();
        assert!(BlockLayout::new(10, 8, &w, 1.0).is_err());
        assert!(BlockLayout::new(9, 7, &w, 1.0).is_err());
        let l = BlockLayout::new(9, 8, &w, 4.0).unwrap();
        assert_eq!((l.block_rows(), l.block_cols()), (3, 4));
        assert_eq!(l.var(2, 1), 0.25);
    }
}
