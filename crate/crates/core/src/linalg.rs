//! Dense kernels shared by the autodiff tape, the forward-mode pass and the
//! initializers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

/// `c = op(a) * op(b) + beta * c` for row-major buffers.
///
/// `op(a)` is `m x k`: `a` holds `m x k` values, or `k x m` when `a_t` is set.
/// `op(b)` is `k x n`: `b` holds `k x n` values, or `n x k` when `b_t` is set.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k, "gemm: lhs length");
    assert_eq!(b.len(), k * n, "gemm: rhs length");
    assert_eq!(c.len(), m * n, "gemm: output length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if beta == 0.0 {
            c.fill(0.0);
        } else {
            c.iter_mut().for_each(|v| *v *= beta);
        }
        return;
    }
    let (rsa, csa) = if a_t { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_t { (1, k) } else { (n, 1) };
    // SAFETY: the length asserts above guarantee every index reachable through
    // the (row stride, column stride) pairs lies inside the respective slices,
    // and `c` is uniquely borrowed.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for (l, slot) in acc.iter_mut().enumerate() {
            *slot += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub fn transpose(rows: usize, cols: usize, data: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Thin QR of a tall `m x n` matrix (`m >= n`) by Householder reflections.
///
/// Returns `Q` (`m x n`, orthonormal columns) with each column multiplied by
/// the sign of the matching diagonal entry of `R`, so that `diag(R) > 0`.
pub fn qr_thin_q(m: usize, n: usize, data: &[f64]) -> Result<Vec<f64>> {
    if m < n {
        return Err(Error::Contract("thin QR needs rows >= cols"));
    }
    let mut a = data.to_vec();
    let scale = a.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut diag = Vec::with_capacity(n);
    for j in 0..n {
        let mut v: Vec<f64> = (j..m).map(|i| a[i * n + j]).collect();
        let x_norm = norm(&v);
        if x_norm <= 1e-12 * scale {
            return Err(Error::RankDeficient);
        }
        let alpha = if v[0] >= 0.0 { -x_norm } else { x_norm };
        v[0] -= alpha;
        let v_norm = norm(&v);
        v.iter_mut().for_each(|x| *x /= v_norm);
        // a[j.., j..] -= 2 v (v^T a[j.., j..])
        for c in j..n {
            let mut s = 0.0;
            for (r, vr) in v.iter().enumerate() {
                s += vr * a[(j + r) * n + c];
            }
            for (r, vr) in v.iter().enumerate() {
                a[(j + r) * n + c] -= 2.0 * vr * s;
            }
        }
        diag.push(a[j * n + j]);
        reflectors.push(v);
    }
    let mut q = vec![0.0; m * n];
    for j in 0..n {
        q[j * n + j] = 1.0;
    }
    for (j, v) in reflectors.iter().enumerate().rev() {
        for c in 0..n {
            let mut s = 0.0;
            for (r, vr) in v.iter().enumerate() {
                s += vr * q[(j + r) * n + c];
            }
            for (r, vr) in v.iter().enumerate() {
                q[(j + r) * n + c] -= 2.0 * vr * s;
            }
        }
    }
    for (c, d) in diag.iter().enumerate() {
        if *d < 0.0 {
            for r in 0..m {
                q[r * n + c] = -q[r * n + c];
            }
        }
    }
    Ok(q)
}
