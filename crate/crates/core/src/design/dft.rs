use std::f64::consts::{PI, SQRT_2};
use std::marker::PhantomData;
use std::sync::Arc;

use num_complex::Complex64;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{check_adjoint_args, BlockLayout, DenseMatrix, Design, OperatorKind, OperatorSpec, ScaledAdjoint, Scalar};
use crate::error::{dims, Error, Result};
use crate::rng::rng_from_seed;

/// Design built from randomly sampled rows of an `N_C`-point DFT.
///
/// Column block `c` is mixed by a random permutation and per-column random
/// phases, both shared by every row block. Each nonzero block `(r, c)` then
/// selects its own random set of DFT frequencies, without replacement, and
/// scales them by `sqrt(var[r][c])`, so every complex entry has squared
/// magnitude `var[r][c]`.
///
/// The real variant uses `ceil(N_R / 2)` frequencies per block and emits
/// `sqrt(2)` times their real parts followed by their imaginary parts, which
/// keeps the mean-square entry equal to `var[r][c]`. When `N_R` is odd the
/// last frequency contributes only its real row.
pub struct DftDesign<T> {
    layout: BlockLayout,
    seed: u64,
    perm: Vec<Vec<u32>>,
    phase: Vec<Vec<Complex64>>,
    freqs: Vec<Option<Vec<u32>>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    _field: PhantomData<T>,
}

impl<T> std::fmt::Debug for DftDesign<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DftDesign")
            .field("layout", &self.layout)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl<T: Scalar> DftDesign<T> {
    pub fn build(layout: BlockLayout, seed: u64) -> Result<Self> {
        let nc = layout.block_cols();
        let nr = layout.block_rows();
        if !nc.is_power_of_two() {
            return Err(Error::NotPowerOfTwo {
                what: "columns per block (N_C)",
                value: nc,
            });
        }
        let per_block = match T::FIELD {
            super::Field::Real => nr.div_ceil(2),
            super::Field::Complex => nr,
        };
        if per_block > nc {
            return Err(Error::InvalidParams(format!(
                "cannot sample {per_block} distinct DFT rows per block from {nc} frequencies"
            )));
        }

        let mut rng = rng_from_seed(seed);
        let (rb, cb) = (layout.row_blocks(), layout.col_blocks());
        let mut perm = Vec::with_capacity(cb);
        let mut phase = Vec::with_capacity(cb);
        let mut freqs: Vec<Option<Vec<u32>>> = vec![None; rb * cb];
        for c in 0..cb {
            let mut p: Vec<u32> = (0..nc as u32).collect();
            p.shuffle(&mut rng);
            perm.push(p);
            phase.push(
                (0..nc)
                    .map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..2.0 * PI)))
                    .collect(),
            );
            let active: Vec<usize> = (0..rb).filter(|r| layout.var(*r, c) > 0.0).collect();
            if active.len() * per_block <= nc {
                // Disjoint frequency sets across the row blocks of this column.
                let pool = index::sample(&mut rng, nc, active.len() * per_block).into_vec();
                for (k, r) in active.iter().enumerate() {
                    let set = pool[k * per_block..(k + 1) * per_block]
                        .iter()
                        .map(|f| *f as u32)
                        .collect();
                    freqs[r * cb + c] = Some(set);
                }
            } else {
                for r in active {
                    let set = index::sample(&mut rng, nc, per_block)
                        .into_iter()
                        .map(|f| f as u32)
                        .collect();
                    freqs[r * cb + c] = Some(set);
                }
            }
        }

        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(nc),
            inverse: planner.plan_fft_inverse(nc),
            layout,
            seed,
            perm,
            phase,
            freqs,
            _field: PhantomData,
        })
    }

    fn block_freqs(&self, r: usize, c: usize) -> Option<&[u32]> {
        self.freqs[r * self.layout.col_blocks() + c].as_deref()
    }

    fn spec_impl(&self) -> OperatorSpec {
        OperatorSpec {
            kind: OperatorKind::Dft,
            field: T::FIELD,
            seed: self.seed,
            n: self.layout.n(),
            cols: self.layout.cols(),
            row_blocks: self.layout.row_blocks(),
            col_blocks: self.layout.col_blocks(),
        }
    }

    /// FFT of the permuted, phase-rotated column block `c` of `x`.
    fn transform_block(&self, c: usize, x: &[T], lift: impl Fn(T) -> Complex64) -> Vec<Complex64> {
        let nc = self.layout.block_cols();
        let mut buf = vec![Complex64::new(0.0, 0.0); nc];
        let xc = &x[c * nc..(c + 1) * nc];
        for ((xv, p), ph) in xc.iter().zip(&self.perm[c]).zip(&self.phase[c]) {
            buf[*p as usize] = *ph * lift(*xv);
        }
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        self.forward.process_with_scratch(&mut buf, &mut scratch);
        buf
    }

    /// Inverse-direction FFT of `buf`, un-permuted and de-rotated into `out_c`.
    fn untransform_block(&self, c: usize, mut buf: Vec<Complex64>, out_c: &mut [T], lower: impl Fn(Complex64) -> T) {
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        self.inverse.process_with_scratch(&mut buf, &mut scratch);
        for ((o, p), ph) in out_c.iter_mut().zip(&self.perm[c]).zip(&self.phase[c]) {
            *o = lower(ph.conj() * buf[*p as usize]);
        }
    }

    /// `e^{-2 pi i f p / N}` times the column phase, with `f p` reduced exactly.
    fn entry(&self, c: usize, freq: u32, col: usize) -> Complex64 {
        let nc = self.layout.block_cols() as u64;
        let k = (freq as u64 * self.perm[c][col] as u64) % nc;
        Complex64::from_polar(1.0, -2.0 * PI * k as f64 / nc as f64) * self.phase[c][col]
    }
}

impl Design<Complex64> for DftDesign<Complex64> {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn spec(&self) -> OperatorSpec {
        self.spec_impl()
    }

    fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        let layout = &self.layout;
        dims("operator input length", layout.cols(), x.len())?;
        let nr = layout.block_rows();
        let spectra: Vec<Vec<Complex64>> = (0..layout.col_blocks())
            .into_par_iter()
            .map(|c| self.transform_block(c, x, |v| v))
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); layout.n()];
        for (r, out_r) in out.chunks_mut(nr).enumerate() {
            for (c, spec) in spectra.iter().enumerate() {
                if let Some(fs) = self.block_freqs(r, c) {
                    let amp = layout.var(r, c).sqrt();
                    for (o, f) in out_r.iter_mut().zip(fs) {
                        *o += spec[*f as usize] * amp;
                    }
                }
            }
        }
        Ok(out)
    }

    fn apply_scaled_adjoint(&self, scale: &ScaledAdjoint, z: &[Complex64]) -> Result<Vec<Complex64>> {
        let layout = &self.layout;
        check_adjoint_args(layout, scale, z.len())?;
        let (nr, nc) = (layout.block_rows(), layout.block_cols());
        let mut out = vec![Complex64::new(0.0, 0.0); layout.cols()];
        out.par_chunks_mut(nc).enumerate().for_each(|(c, out_c)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); nc];
            for r in 0..layout.row_blocks() {
                if let Some(fs) = self.block_freqs(r, c) {
                    let k = scale.get(r, c) * layout.var(r, c).sqrt();
                    for (zi, f) in z[r * nr..(r + 1) * nr].iter().zip(fs) {
                        buf[*f as usize] += zi * k;
                    }
                }
            }
            self.untransform_block(c, buf, out_c, |v| v);
        });
        Ok(out)
    }

    fn materialize(&self, cap_bytes: u128) -> Result<DenseMatrix<Complex64>> {
        let layout = &self.layout;
        layout.check_dense_cap::<Complex64>(cap_bytes)?;
        let (nr, nc) = (layout.block_rows(), layout.block_cols());
        let mut data = vec![Complex64::new(0.0, 0.0); layout.n() * layout.cols()];
        for r in 0..layout.row_blocks() {
            for c in 0..layout.col_blocks() {
                let Some(fs) = self.block_freqs(r, c) else { continue };
                let amp = layout.var(r, c).sqrt();
                for (i, f) in fs.iter().enumerate() {
                    let row = r * nr + i;
                    for col in 0..nc {
                        data[row * layout.cols() + c * nc + col] = self.entry(c, *f, col) * amp;
                    }
                }
            }
        }
        Ok(DenseMatrix {
            rows: layout.n(),
            cols: layout.cols(),
            data,
        })
    }
}

impl Design<f64> for DftDesign<f64> {
    fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    fn spec(&self) -> OperatorSpec {
        self.spec_impl()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let layout = &self.layout;
        dims("operator input length", layout.cols(), x.len())?;
        let nr = layout.block_rows();
        let half = nr.div_ceil(2);
        let spectra: Vec<Vec<Complex64>> = (0..layout.col_blocks())
            .into_par_iter()
            .map(|c| self.transform_block(c, x, |v| Complex64::new(v, 0.0)))
            .collect();
        let mut out = vec![0.0; layout.n()];
        for (r, out_r) in out.chunks_mut(nr).enumerate() {
            let (re_part, im_part) = out_r.split_at_mut(half);
            for (c, spec) in spectra.iter().enumerate() {
                if let Some(fs) = self.block_freqs(r, c) {
                    let amp = SQRT_2 * layout.var(r, c).sqrt();
                    for (a, f) in re_part.iter_mut().zip(fs) {
                        *a += amp * spec[*f as usize].re;
                    }
                    for (b, f) in im_part.iter_mut().zip(fs) {
                        *b += amp * spec[*f as usize].im;
                    }
                }
            }
        }
        Ok(out)
    }

    fn apply_scaled_adjoint(&self, scale: &ScaledAdjoint, z: &[f64]) -> Result<Vec<f64>> {
        let layout = &self.layout;
        check_adjoint_args(layout, scale, z.len())?;
        let (nr, nc) = (layout.block_rows(), layout.block_cols());
        let half = nr.div_ceil(2);
        let mut out = vec![0.0; layout.cols()];
        out.par_chunks_mut(nc).enumerate().for_each(|(c, out_c)| {
            let mut buf = vec![Complex64::new(0.0, 0.0); nc];
            for r in 0..layout.row_blocks() {
                if let Some(fs) = self.block_freqs(r, c) {
                    let k = scale.get(r, c) * SQRT_2 * layout.var(r, c).sqrt();
                    let zr = &z[r * nr..(r + 1) * nr];
                    let (re_part, im_part) = zr.split_at(half);
                    for (a, f) in re_part.iter().zip(fs) {
                        buf[*f as usize] += *a * k;
                    }
                    for (b, f) in im_part.iter().zip(fs) {
                        buf[*f as usize] += Complex64::new(0.0, *b) * k;
                    }
                }
            }
            self.untransform_block(c, buf, out_c, |v| v.re);
        });
        Ok(out)
    }

    fn materialize(&self, cap_bytes: u128) -> Result<DenseMatrix<f64>> {
        let layout = &self.layout;
        layout.check_dense_cap::<f64>(cap_bytes)?;
        let (nr, nc) = (layout.block_rows(), layout.block_cols());
        let half = nr.div_ceil(2);
        let mut data = vec![0.0; layout.n() * layout.cols()];
        for r in 0..layout.row_blocks() {
            for c in 0..layout.col_blocks() {
                let Some(fs) = self.block_freqs(r, c) else { continue };
                let amp = SQRT_2 * layout.var(r, c).sqrt();
                for (i, f) in fs.iter().enumerate() {
                    let re_row = r * nr + i;
                    let im_row = (half + i < nr).then_some(r * nr + half + i);
                    for col in 0..nc {
                        let e = self.entry(c, *f, col) * amp;
                        data[re_row * layout.cols() + c * nc + col] = e.re;
                        if let Some(im_row) = im_row {
                            data[im_row * layout.cols() + c * nc + col] = e.im;
                        }
                    }
                }
            }
        }
        Ok(DenseMatrix {
            rows: layout.n(),
            cols: layout.cols(),
            data,
        })
    }
}
