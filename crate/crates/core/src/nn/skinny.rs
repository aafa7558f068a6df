//! Products with one tiny dimension, where the blocked GEMM kernel wastes
//! most of its register tile. Used by convolutions with few channels.

use std::ops::{AddAssign, Mul};

const TILE: usize = 256;
const LANES: usize = 8;

/// Largest `m` or `k` routed to the kernels below.
pub(crate) const SKINNY_MAX: usize = 8;

/// `c (m x n) = a · b (+ c)`, `a` given by `a_at(i, p)`, `b` row-major `k x n`.
pub(crate) fn axpy_gemm<T>(
    m: usize,
    k: usize,
    n: usize,
    a_at: impl Fn(usize, usize) -> T,
    b: &[T],
    c: &mut [T],
    accumulate: bool,
) where
    T: Copy + Default + PartialEq + AddAssign + Mul<Output = T>,
{
    if !accumulate {
        c[..m * n].fill(T::default());
    }
    for j0 in (0..n).step_by(TILE) {
        let w = TILE.min(n - j0);
        for p in 0..k {
            let brow = &b[p * n + j0..][..w];
            for i in 0..m {
                let a = a_at(i, p);
                if a == T::default() {
                    continue;
                }
                for (o, &bv) in c[i * n + j0..][..w].iter_mut().zip(brow) {
                    *o += a * bv;
                }
            }
        }
    }
}

/// `c (m x n) = a · bᵀ (+ c)` with `a` row-major `m x k` and `b` row-major
/// `n x k`: every entry is a long dot product.
pub(crate) fn dot_gemm<T>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool)
where
    T: Copy + Default + AddAssign + Mul<Output = T>,
{
    for j in 0..n {
        let brow = &b[j * k..(j + 1) * k];
        for i in 0..m {
            let d = dot(&a[i * k..(i + 1) * k], brow);
            let slot = &mut c[i * n + j];
            if accumulate {
                *slot += d;
            } else {
                *slot = d;
            }
        }
    }
}

fn dot<T>(x: &[T], y: &[T]) -> T
where
    T: Copy + Default + AddAssign + Mul<Output = T>,
{
    let mut acc = [T::default(); LANES];
    let xs = x.chunks_exact(LANES);
    let ys = y.chunks_exact(LANES);
    let (xr, yr) = (xs.remainder(), ys.remainder());
    for (a, b) in xs.zip(ys) {
        for l in 0..LANES {
            acc[l] += a[l] * b[l];
        }
    }
    let mut tail = T::default();
    for (&a, &b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    let mut total = T::default();
    for v in acc {
        total += v;
    }
    total += tail;
    total
}
