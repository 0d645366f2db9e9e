//! Dense symmetric kernels backed by LAPACK. nalgebra matrices are
//! column-major, which is the layout LAPACK expects.

use std::os::raw::{c_char, c_int};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

fn dim(m: &DMatrix<f64>) -> Result<c_int> {
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidInput("matrix must be square".into()));
    }
    c_int::try_from(m.nrows()).map_err(|_| Error::InvalidInput("matrix too large".into()))
}

/// Inverse of a symmetric positive-definite matrix, or `None` if the
/// Cholesky factorization fails.
pub fn spd_inverse(a: DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
    let n = dim(&a)?;
    if n == 0 {
        return Ok(Some(a));
    }
    let Some(inv) = lapack_spd_inverse(a.clone(), n) else { return Ok(None) };
    // Spot-check a few columns of A * inv against the identity; a faulty
    // BLAS build shows up here rather than as wrong eigenvalues later.
    let cols = a.ncols().min(4);
    let probe = &a * inv.columns(0, cols);
    let err = (0..cols)
        .map(|j| (probe.column(j) - DMatrix::<f64>::identity(a.nrows(), cols).column(j)).amax())
        .fold(0.0, f64::max);
    if !(err < 1e-8 * a.amax().max(1.0) * inv.amax().max(1.0)) {
        return Err(Error::Eigen {
            reason: "LAPACK inverse failed its identity check (try OPENBLAS_CORETYPE=Haswell)".into(),
            residual: err,
        });
    }
    Ok(Some(inv))
}

fn lapack_spd_inverse(mut a: DMatrix<f64>, n: c_int) -> Option<DMatrix<f64>> {
    let uplo = b'L' as c_char;
    let mut info: c_int = 0;
    // SAFETY: `a` is an n x n column-major buffer with leading dimension n.
    unsafe { lapack_sys::dpotrf_(&uplo, &n, a.as_mut_ptr(), &n, &mut info) };
    if info != 0 {
        return None;
    }
    // SAFETY: same buffer, now holding the Cholesky factor.
    unsafe { lapack_sys::dpotri_(&uplo, &n, a.as_mut_ptr(), &n, &mut info) };
    if info != 0 {
        return None;
    }
    let k = a.nrows();
    for j in 0..k {
        for i in 0..j {
            a[(i, j)] = a[(j, i)];
        }
    }
    Some(a)
}

/// The `count` lowest eigenpairs of a symmetric matrix, ascending.
pub fn lowest_eigenpairs(a: &DMatrix<f64>, count: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = dim(a)?;
    let count = count.min(a.nrows());
    if count == 0 {
        return Ok((Vec::new(), DMatrix::zeros(a.nrows(), 0)));
    }
    let mut work_a = a.clone();
    let (jobz, range, uplo) = (b'V' as c_char, b'I' as c_char, b'L' as c_char);
    let (vl, vu, abstol) = (0.0, 0.0, 0.0);
    let (il, iu) = (1 as c_int, count as c_int);
    let mut m: c_int = 0;
    let mut w = vec![0.0; a.nrows()];
    let mut z = DMatrix::<f64>::zeros(a.nrows(), count);
    let mut isuppz = vec![0 as c_int; 2 * count];
    let mut info: c_int = 0;
    let call = |work: &mut [f64], lwork: c_int, iwork: &mut [c_int], liwork: c_int, a: &mut DMatrix<f64>, w: &mut [f64], z: &mut DMatrix<f64>, m: &mut c_int, isuppz: &mut [c_int], info: &mut c_int| {
        // SAFETY: buffer sizes follow the dsyevr contract: a is n x n, w has
        // n entries, z is n x count, isuppz has 2 count entries, and the
        // work arrays are either queried or sized by the query.
        unsafe {
            lapack_sys::dsyevr_(
                &jobz, &range, &uplo, &n, a.as_mut_ptr(), &n, &vl, &vu, &il, &iu, &abstol, m,
                w.as_mut_ptr(), z.as_mut_ptr(), &n, isuppz.as_mut_ptr(), work.as_mut_ptr(), &lwork,
                iwork.as_mut_ptr(), &liwork, info,
            )
        }
    };
    let mut qwork = [0.0f64];
    let mut qiwork = [0 as c_int];
    call(&mut qwork, -1, &mut qiwork, -1, &mut work_a, &mut w, &mut z, &mut m, &mut isuppz, &mut info);
    if info != 0 {
        return Err(Error::Eigen {
            reason: format!("workspace query failed (info {info})"),
            residual: f64::NAN,
        });
    }
    let lwork = qwork[0] as usize;
    let liwork = qiwork[0] as usize;
    let mut work = vec![0.0; lwork.max(1)];
    let mut iwork = vec![0 as c_int; liwork.max(1)];
    call(&mut work, lwork as c_int, &mut iwork, liwork as c_int, &mut work_a, &mut w, &mut z, &mut m, &mut isuppz, &mut info);
    if info != 0 || m as usize != count {
        return Err(Error::Eigen {
            reason: format!("symmetric eigensolver failed (info {info}, {m} of {count} pairs)"),
            residual: f64::NAN,
        });
    }
    w.truncate(count);
    Ok((w, z))
}
