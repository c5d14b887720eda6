use rand::Rng;

use scsparc::design::DenseMatrix;
use scsparc::rng::rng_from_seed;
use scsparc::{BlockLayout, Design, ScaledAdjoint, Scalar};

pub const CAP: u128 = 1 << 30;

pub fn gaussian_vec<T: Scalar>(len: usize, seed: u64) -> Vec<T> {
    let mut rng = rng_from_seed(seed);
    (0..len).map(|_| T::sample_normal(&mut rng, 1.0)).collect()
}

pub fn random_scale(rows: usize, cols: usize, seed: u64) -> ScaledAdjoint {
    let mut rng = rng_from_seed(seed);
    let s = (0..rows * cols).map(|_| rng.gen_range(0.1..3.0)).collect();
    ScaledAdjoint::new(rows, cols, s).unwrap()
}

pub fn inner<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::default(), |acc, (x, y)| acc + x.conj() * *y)
}

pub fn rel_err<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (*x - *y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(1e-300)).sqrt()
}

pub fn scaled_adjoint_dense<T: Scalar>(mat: &DenseMatrix<T>, layout: &BlockLayout, s: &ScaledAdjoint, z: &[T]) -> Vec<T> {
    let mut out = vec![T::default(); mat.cols];
    for (i, zi) in z.iter().enumerate() {
        let r = layout.row_block_of(i);
        for (j, o) in out.iter_mut().enumerate() {
            let k = s.get(r, layout.col_block_of(j));
            *o += mat.get(i, j).conj().scale(k) * *zi;
        }
    }
    out
}

/// Relative errors of apply, scaled adjoint and the inner-product identity
/// against the materialized matrix.
pub fn check_operator<T: Scalar>(design: &dyn Design<T>, seed: u64) -> (f64, f64, f64) {
    let layout = design.layout().clone();
    let mat = design.materialize(CAP).unwrap();
    let x = gaussian_vec::<T>(layout.cols(), seed);
    let z = gaussian_vec::<T>(layout.n(), seed + 1);
    let s = random_scale(layout.row_blocks(), layout.col_blocks(), seed + 2);
    let fwd = rel_err(&design.apply(&x).unwrap(), &mat.mul_vec(&x));
    let adj = rel_err(
        &design.apply_scaled_adjoint(&s, &z).unwrap(),
        &scaled_adjoint_dense(&mat, &layout, &s, &z),
    );
    let ax = design.apply(&x).unwrap();
    let ahz = design.apply_scaled_adjoint(&ScaledAdjoint::ones(layout.row_blocks(), layout.col_blocks()), &z).unwrap();
    let lhs = inner(&ax, &z);
    let rhs = inner(&x, &ahz);
    let scale = (ax.iter().map(|v| v.norm_sqr()).sum::<f64>() * z.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt();
    let dot = (lhs - rhs).norm_sqr().sqrt() / scale;
    (fwd, adj, dot)
}
