//! Blocked dense kernels for the solver's normal equations.
//!
//! All matrices are column-major `nalgebra` buffers. The heavy lifting goes
//! through `matrixmultiply::dgemm`.

use crate::matcore::Matrix;

const NB: usize = 64;

/// `C[m×n] += alpha · A[m×k] · B[k×n]` on raw column-major storage with
/// arbitrary strides.
///
/// # Safety
/// All three regions must be in bounds, and `c` must not overlap `a` or `b`.
#[allow(clippy::too_many_arguments)]
unsafe fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: *const f64,
    rsa: isize,
    csa: isize,
    b: *const f64,
    rsb: isize,
    csb: isize,
    c: *mut f64,
    rsc: isize,
    csc: isize,
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, 1.0, c, rsc, csc);
}

/// In-place lower Cholesky factorization. On success the lower triangle holds
/// `L` and the strict upper triangle is zeroed. On failure returns the pivot
/// index at which a non-positive value appeared.
pub fn cholesky_in_place(a: &mut Matrix) -> Result<(), usize> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let ld = n;
    let buf = a.as_mut_slice();
    let mut k = 0;
    while k < n {
        let kb = NB.min(n - k);
        // Left-looking factorization of the panel columns k..k+kb, rows j..n.
        for j in k..k + kb {
            for q in k..j {
                let ljq = buf[j + q * ld];
                if ljq == 0.0 {
                    continue;
                }
                let (head, tail) = buf.split_at_mut(j * ld);
                let src = &head[q * ld + j..q * ld + n];
                let dst = &mut tail[j..n];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d -= ljq * s;
                }
            }
            let d = buf[j + j * ld];
            if !(d > 0.0) || !d.is_finite() {
                return Err(j);
            }
            let d = d.sqrt();
            buf[j + j * ld] = d;
            let inv = 1.0 / d;
            for v in &mut buf[j * ld + j + 1..j * ld + n] {
                *v *= inv;
            }
        }
        // Trailing update of the lower trapezoid, one column block at a time.
        let t0 = k + kb;
        let mut j0 = t0;
        while j0 < n {
            let jb = NB.min(n - j0);
            let p = buf.as_mut_ptr();
            // SAFETY: the panel (columns k..t0) and the target (columns
            // j0..j0+jb, j0 >= t0) are disjoint column ranges of `buf`.
            unsafe {
                gemm_acc(
                    n - j0,
                    kb,
                    jb,
                    -1.0,
                    p.add(j0 + k * ld),
                    1,
                    ld as isize,
                    p.add(j0 + k * ld),
                    ld as isize,
                    1,
                    p.add(j0 + j0 * ld),
                    1,
                    ld as isize,
                );
            }
            j0 += jb;
        }
        k += kb;
    }
    for j in 1..n {
        for i in 0..j {
            buf[i + j * ld] = 0.0;
        }
    }
    Ok(())
}

/// `B := L⁻¹ B` for lower-triangular `L`.
pub fn solve_lower_in_place(l: &Matrix, b: &mut Matrix) {
    let n = l.nrows();
    assert_eq!(n, b.nrows());
    let nrhs = b.ncols();
    let ll = l.as_slice();
    let ldb = n;
    let mut k = 0;
    while k < n {
        let kb = NB.min(n - k);
        {
            let bb = b.as_mut_slice();
            for c in 0..nrhs {
                let col = &mut bb[c * ldb..(c + 1) * ldb];
                for j in k..k + kb {
                    let v = col[j] / ll[j + j * n];
                    col[j] = v;
                    if v != 0.0 {
                        for i in j + 1..k + kb {
                            col[i] -= ll[i + j * n] * v;
                        }
                    }
                }
            }
        }
        if k + kb < n {
            let bp = b.as_mut_slice().as_mut_ptr();
            // SAFETY: `l` and `b` are distinct matrices; within `b` the source
            // rows k..k+kb and target rows k+kb..n are disjoint.
            unsafe {
                gemm_acc(
                    n - k - kb,
                    kb,
                    nrhs,
                    -1.0,
                    ll.as_ptr().add(k + kb + k * n),
                    1,
                    n as isize,
                    bp.add(k),
                    1,
                    ldb as isize,
                    bp.add(k + kb),
                    1,
                    ldb as isize,
                );
            }
        }
        k += kb;
    }
}

/// `x := L⁻ᵀ x` for lower-triangular `L`.
pub fn solve_lower_transpose_vec(l: &Matrix, x: &mut [f64]) {
    let n = l.nrows();
    let ll = l.as_slice();
    for j in (0..n).rev() {
        let col = &ll[j * n..(j + 1) * n];
        let mut s = x[j];
        for i in j + 1..n {
            s -= col[i] * x[i];
        }
        x[j] = s / col[j];
    }
}

/// `x := L⁻¹ x` for lower-triangular `L`.
pub fn solve_lower_vec(l: &Matrix, x: &mut [f64]) {
    let n = l.nrows();
    let ll = l.as_slice();
    for j in 0..n {
        let col = &ll[j * n..(j + 1) * n];
        let v = x[j] / col[j];
        x[j] = v;
        if v != 0.0 {
            for i in j + 1..n {
                x[i] -= col[i] * v;
            }
        }
    }
}

/// `C −= Vᵀ V`.
pub fn sub_gram(c: &mut Matrix, v: &Matrix) {
    let (p, g) = v.shape();
    assert_eq!(c.shape(), (g, g));
    let vp = v.as_slice().as_ptr();
    let cp = c.as_mut_slice().as_mut_ptr();
    // SAFETY: `c` and `v` are distinct matrices with the declared shapes.
    unsafe {
        gemm_acc(
            g, p, g, -1.0, vp, p as isize, 1, vp, 1, p as isize, cp, 1, g as isize,
        );
    }
}

/// `y −= Vᵀ x`.
pub fn sub_transpose_mul(y: &mut [f64], v: &Matrix, x: &[f64]) {
    let (p, g) = v.shape();
    let vs = v.as_slice();
    for c in 0..g {
        let col = &vs[c * p..(c + 1) * p];
        y[c] -= col.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `y −= V x`.
pub fn sub_mul(y: &mut [f64], v: &Matrix, x: &[f64]) {
    let (p, g) = v.shape();
    let vs = v.as_slice();
    for c in 0..g {
        let xc = x[c];
        if xc == 0.0 {
            continue;
        }
        let col = &vs[c * p..(c + 1) * p];
        for (yi, a) in y.iter_mut().zip(col) {
            *yi -= a * xc;
        }
    }
}
