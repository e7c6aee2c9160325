//! Deterministic parallel kernels.
//!
//! Work is split into fixed-size row chunks regardless of thread count, and
//! each output row is written by exactly one task, so results are
//! bit-identical between single-threaded and parallel runs.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};
use rayon::prelude::*;

/// Fixed row-chunk granularity for all parallel sweeps.
pub const ROW_CHUNK: usize = 128;

/// Run `f(row_index, row_slice)` over every row of a standard-layout matrix.
pub fn for_each_row_mut<F>(out: &mut Array2<f64>, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let ncols = out.ncols();
    if ncols == 0 || out.nrows() == 0 {
        return;
    }
    let slice = out.as_slice_mut().expect("standard layout");
    slice
        .par_chunks_mut(ROW_CHUNK * ncols)
        .enumerate()
        .for_each(|(ci, chunk)| {
            let base = ci * ROW_CHUNK;
            for (i, row) in chunk.chunks_mut(ncols).enumerate() {
                f(base + i, row);
            }
        });
}

/// `a.dot(b)` evaluated over fixed row chunks of `a` in parallel.
pub fn matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let n = a.nrows();
    let c = b.ncols();
    let mut out = Array2::zeros((n, c));
    if n == 0 || c == 0 {
        return out;
    }
    let tasks: Vec<_> = out
        .axis_chunks_iter_mut(Axis(0), ROW_CHUNK)
        .zip(a.axis_chunks_iter(Axis(0), ROW_CHUNK))
        .collect();
    tasks.into_par_iter().for_each(|(mut o, a_chunk)| {
        general_mat_mul(1.0, &a_chunk, &b, 0.0, &mut o);
    });
    out
}

/// `a^T.dot(b)` as a single deterministic call (reduction over rows of `a`).
pub fn matmul_at_b(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.ncols(), b.ncols()));
    if a.nrows() == 0 || out.is_empty() {
        return out;
    }
    general_mat_mul(1.0, &a.t(), &b, 0.0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    #[test]
    fn chunked_matmul_matches_ndarray() {
        let mut rng = StdRng::seed_from_u64(5);
        let a = Array2::from_shape_fn((301, 17), |_| rng.gen_range(-1.0..1.0));
        let b = Array2::from_shape_fn((17, 9), |_| rng.gen_range(-1.0..1.0));
        let ours = matmul(a.view(), b.view());
        let reference = a.dot(&b);
        for (x, y) in ours.iter().zip(reference.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn matmul_is_threadcount_invariant() {
        let mut rng = StdRng::seed_from_u64(6);
        let a = Array2::from_shape_fn((513, 31), |_| rng.gen_range(-1.0..1.0));
        let b = Array2::from_shape_fn((31, 13), |_| rng.gen_range(-1.0..1.0));
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| matmul(a.view(), b.view()));
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| matmul(a.view(), b.view()));
        assert_eq!(single, multi);
    }
}
