//! Small dense linear-algebra helpers.
//!
//! Everything in here is written for desk-scale matrices with a fixed,
//! reproducible accumulation order: the same inputs always produce the same
//! bits, which the determinism guarantees elsewhere in the crate rely on.

use ndarray::Array2;

/// Dense row-major f64 matrix used throughout the crate.
pub type Mat = Array2<f64>;

/// Dot product with plain left-to-right accumulation.
pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        acc += a * b;
    }
    acc
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Compensated (Kahan-Neumaier) summation. Used for reductions over nodes so
/// that results stay stable to ~1e-16 regardless of magnitude spread.
pub fn kahan_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for x in values {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `a * b` with a fixed i-k-j loop order.
pub fn matmul(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = Mat::zeros((n, m));
    let asl = a.as_slice().expect("standard layout");
    let bsl = b.as_slice().expect("standard layout");
    let osl = out.as_slice_mut().expect("standard layout");
    for i in 0..n {
        let arow = &asl[i * k..(i + 1) * k];
        let orow = &mut osl[i * m..(i + 1) * m];
        for (p, &aip) in arow.iter().enumerate() {
            if aip == 0.0 {
                continue;
            }
            let brow = &bsl[p * m..(p + 1) * m];
            for (o, &x) in orow.iter_mut().zip(brow) {
                *o += aip * x;
            }
        }
    }
    out
}

/// `a^T * b`.
pub fn matmul_tn(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows(), "matmul_tn shape mismatch");
    let (k, n, m) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = Mat::zeros((n, m));
    let asl = a.as_slice().expect("standard layout");
    let bsl = b.as_slice().expect("standard layout");
    let osl = out.as_slice_mut().expect("standard layout");
    for p in 0..k {
        let arow = &asl[p * n..(p + 1) * n];
        let brow = &bsl[p * m..(p + 1) * m];
        for (i, &api) in arow.iter().enumerate() {
            if api == 0.0 {
                continue;
            }
            let orow = &mut osl[i * m..(i + 1) * m];
            for (o, &x) in orow.iter_mut().zip(brow) {
                *o += api * x;
            }
        }
    }
    out
}

/// `a * b^T`.
pub fn matmul_nt(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.ncols(), b.ncols(), "matmul_nt shape mismatch");
    let (n, k, m) = (a.nrows(), a.ncols(), b.nrows());
    let mut out = Mat::zeros((n, m));
    let asl = a.as_slice().expect("standard layout");
    let bsl = b.as_slice().expect("standard layout");
    let osl = out.as_slice_mut().expect("standard layout");
    for i in 0..n {
        let arow = &asl[i * k..(i + 1) * k];
        let orow = &mut osl[i * m..(i + 1) * m];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &bsl[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            *o = acc;
        }
    }
    out
}

/// L2-normalizes each row; rows with zero norm are left as zero rows.
pub fn unit_rows(m: &Mat) -> Mat {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let r = norm(row.as_slice().expect("contiguous row"));
        if r > 0.0 {
            row.mapv_inplace(|x| x / r);
        }
    }
    out
}

/// Solves `A x = b` for symmetric positive-definite `A` via Cholesky,
/// one right-hand side per column of `b`.
pub fn cholesky_solve(a: &Mat, b: &Mat) -> Result<Mat, &'static str> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n, "cholesky_solve: A must be square");
    assert_eq!(b.nrows(), n, "cholesky_solve: rhs rows must match A");
    let mut l = Mat::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 {
                    return Err("matrix not positive definite");
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    let m = b.ncols();
    let mut x = b.clone();
    // forward: L y = b
    for c in 0..m {
        for i in 0..n {
            let mut s = x[[i, c]];
            for k in 0..i {
                s -= l[[i, k]] * x[[k, c]];
            }
            x[[i, c]] = s / l[[i, i]];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = x[[i, c]];
            for k in i + 1..n {
                s -= l[[k, i]] * x[[k, c]];
            }
            x[[i, c]] = s / l[[i, i]];
        }
    }
    Ok(x)
}
