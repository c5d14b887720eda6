use rayon::prelude::*;

use super::{check_adjoint_args, BlockLayout, DenseMatrix, Design, OperatorKind, OperatorSpec, ScaledAdjoint, Scalar};
use crate::error::{dims, Result};
use crate::rng::{rng_from_seed, substream};

/// Explicit Gaussian design: entry `(i, j)` is drawn with variance
/// `var[r(i)][c(j)]`. Blocks with zero variance are exactly zero.
#[derive(Debug, Clone)]
pub struct DenseDesign<T> {
    layout: BlockLayout,
    seed: u64,
    matrix: DenseMatrix<T>,
}

impl<T: Scalar> DenseDesign<T> {
    /// Draws the matrix row by row; row `i` uses its own sub-stream of `seed`.
    pub fn build(layout: BlockLayout, seed: u64, cap_bytes: u128) -> Result<Self> {
        layout.check_dense_cap::<T>(cap_bytes)?;
        let (n, cols) = (layout.n(), layout.cols());
        let nc = layout.block_cols();
        let mut data = vec![T::default(); n * cols];
        data.par_chunks_mut(cols).enumerate().for_each(|(i, row)| {
            let r = layout.row_block_of(i);
            let mut rng = rng_from_seed(substream(seed, i as u64));
            for (c, chunk) in row.chunks_mut(nc).enumerate() {
                let var = layout.var(r, c);
                if var > 0.0 {
                    for a in chunk.iter_mut() {
                        *a = T::sample_normal(&mut rng, var);
                    }
                }
            }
        });
        Ok(Self {
            matrix: DenseMatrix { rows: n, cols, data },
            layout,
            seed,
        })
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }
}

impl<T: Scalar> Design<T> for DenseDesign<T> {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn spec(&self) -> OperatorSpec {
        OperatorSpec {
            kind: OperatorKind::Dense,
            field: T::FIELD,
            seed: self.seed,
            n: self.layout.n(),
            cols: self.layout.cols(),
            row_blocks: self.layout.row_blocks(),
            col_blocks: self.layout.col_blocks(),
        }
    }

    fn apply(&self, x: &[T]) -> Result<Vec<T>> {
        dims("operator input length", self.layout.cols(), x.len())?;
        let layout = &self.layout;
        let nc = layout.block_cols();
        let mut out = vec![T::default(); layout.n()];
        out.par_iter_mut().enumerate().for_each(|(i, o)| {
            let r = layout.row_block_of(i);
            let row = self.matrix.row(i);
            let mut acc = T::default();
            for c in 0..layout.col_blocks() {
                if layout.var(r, c) == 0.0 {
                    continue;
                }
                let span = c * nc..(c + 1) * nc;
                for (a, b) in row[span.clone()].iter().zip(&x[span]) {
                    acc += *a * *b;
                }
            }
            *o = acc;
        });
        Ok(out)
    }

    fn apply_scaled_adjoint(&self, scale: &ScaledAdjoint, z: &[T]) -> Result<Vec<T>> {
        check_adjoint_args(&self.layout, scale, z.len())?;
        let layout = &self.layout;
        let (nr, nc) = (layout.block_rows(), layout.block_cols());
        let mut out = vec![T::default(); layout.cols()];
        // Each column block accumulates over all rows in a fixed order.
        out.par_chunks_mut(nc).enumerate().for_each(|(c, out_c)| {
            for r in 0..layout.row_blocks() {
                if layout.var(r, c) == 0.0 {
                    continue;
                }
                let s = scale.get(r, c);
                for i in r * nr..(r + 1) * nr {
                    let w = z[i].scale(s);
                    let row = &self.matrix.row(i)[c * nc..(c + 1) * nc];
                    for (o, a) in out_c.iter_mut().zip(row) {
                        *o += a.conj() * w;
                    }
                }
            }
        });
        Ok(out)
    }

    fn materialize(&self, cap_bytes: u128) -> Result<DenseMatrix<T>> {
        self.layout.check_dense_cap::<T>(cap_bytes)?;
        Ok(self.matrix.clone())
    }
}
