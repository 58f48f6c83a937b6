//! Raw matrix kernels on row-major slices.
//!
//! Rows of the output are independent, so each kernel hands rows to
//! [`crate::parallel::for_each_row`]. Every output element is accumulated in
//! the same order on every path, which keeps results bit-identical between
//! the parallel and single-thread modes.

use crate::numerics::Real;
use crate::parallel::for_each_row;

/// `c[m×n] = a[m×k] · b[k×n]`
pub fn matmul(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    for_each_row(&mut c, n, m * k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    });
    c
}

#[inline]
fn dot(x: &[Real], y: &[Real]) -> Real {
    let mut acc = [0.0 as Real; 4];
    let chunks = x.len() / 4;
    for c in 0..chunks {
        let o = c * 4;
        acc[0] += x[o] * y[o];
        acc[1] += x[o + 1] * y[o + 1];
        acc[2] += x[o + 2] * y[o + 2];
        acc[3] += x[o + 3] * y[o + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for o in chunks * 4..x.len() {
        s += x[o] * y[o];
    }
    s
}

/// `c[m×n] = a[m×k] · b[n×k]ᵀ`
pub fn matmul_nt(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut c = vec![0.0; m * n];
    for_each_row(&mut c, n, m * k * n, |i, row| {
        let a_row = &a[i * k..(i + 1) * k];
        for (j, cv) in row.iter_mut().enumerate() {
            *cv = dot(a_row, &b[j * k..(j + 1) * k]);
        }
    });
    c
}

/// `c[m×n] = a[k×m]ᵀ · b[k×n]`
pub fn matmul_tn(a: &[Real], b: &[Real], k: usize, m: usize, n: usize) -> Vec<Real> {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    let mut c = vec![0.0; m * n];
    for_each_row(&mut c, n, m * k * n, |i, row| {
        for p in 0..k {
            let av = a[p * m + i];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    });
    c
}

/// Textbook triple loop; the reference the fast kernels are tested against.
pub fn matmul_naive(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for p in 0..k {
                s += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = s;
        }
    }
    c
}
