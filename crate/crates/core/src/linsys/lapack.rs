//! Minimal safe wrappers over the two LAPACK drivers the solver needs.

use std::os::raw::{c_char, c_int};

use ndarray::ArrayView2;

use crate::error::{Error, Result};

fn check_dims(m: usize, n: usize) -> Result<(c_int, c_int)> {
    let conv = |v: usize| c_int::try_from(v).map_err(|_| Error::Numeric(format!("dimension {v} exceeds LAPACK range")));
    Ok((conv(m)?, conv(n)?))
}

/// Singular values of `a` in descending order (divide and conquer, no vectors).
pub(crate) fn singular_values(a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Ok(Vec::new());
    }
    // A row-major m×n buffer is the column-major n×m matrix aᵀ, which has the
    // same singular values.
    let mut buf: Vec<f64> = a.as_standard_layout().iter().copied().collect();
    let (rows, cols) = check_dims(n, m)?;
    let k = rows.min(cols) as usize;
    let mut s = vec![0.0; k];
    let mut iwork = vec![0 as c_int; 8 * k];
    let jobz = b'N' as c_char;
    let lda = rows.max(1);
    let ld_dummy: c_int = 1;
    let mut u_dummy = [0.0f64; 1];
    let mut vt_dummy = [0.0f64; 1];
    let mut info: c_int = 0;
    let mut query = [0.0f64; 1];
    let lwork_query: c_int = -1;
    unsafe {
        lapack_sys::dgesdd_(
            &jobz,
            &rows,
            &cols,
            buf.as_mut_ptr(),
            &lda,
            s.as_mut_ptr(),
            u_dummy.as_mut_ptr(),
            &ld_dummy,
            vt_dummy.as_mut_ptr(),
            &ld_dummy,
            query.as_mut_ptr(),
            &lwork_query,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgesdd",
            layer: None,
            info,
        });
    }
    let lwork = query[0] as c_int;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe {
        lapack_sys::dgesdd_(
            &jobz,
            &rows,
            &cols,
            buf.as_mut_ptr(),
            &lda,
            s.as_mut_ptr(),
            u_dummy.as_mut_ptr(),
            &ld_dummy,
            vt_dummy.as_mut_ptr(),
            &ld_dummy,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgesdd",
            layer: None,
            info,
        });
    }
    Ok(s)
}

/// Output of [`gelsd`].
pub(crate) struct GelsdOutput {
    pub x: Vec<f64>,
    pub singular_values: Vec<f64>,
}

/// Minimum-norm least-squares solution of `a·x ≈ b` by SVD, treating singular
/// values `σ ≤ rcond·σ_max` as zero.
pub(crate) fn gelsd(a: ArrayView2<'_, f64>, b: &[f64], rcond: f64) -> Result<GelsdOutput> {
    let (m, n) = a.dim();
    assert_eq!(b.len(), m, "right-hand side length");
    if m == 0 || n == 0 {
        return Ok(GelsdOutput {
            x: vec![0.0; n],
            singular_values: Vec::new(),
        });
    }
    let (mi, ni) = check_dims(m, n)?;
    // column-major copy of a
    let mut buf: Vec<f64> = a.t().as_standard_layout().iter().copied().collect();
    let ldb = mi.max(ni);
    let mut rhs = vec![0.0; ldb as usize];
    rhs[..m].copy_from_slice(b);
    let mut s = vec![0.0; m.min(n)];
    let nrhs: c_int = 1;
    let mut rank: c_int = 0;
    let mut info: c_int = 0;
    let mut query = [0.0f64; 1];
    let mut iwork_query = [0 as c_int; 1];
    let lwork_query: c_int = -1;
    unsafe {
        lapack_sys::dgelsd_(
            &mi,
            &ni,
            &nrhs,
            buf.as_mut_ptr(),
            &mi,
            rhs.as_mut_ptr(),
            &ldb,
            s.as_mut_ptr(),
            &rcond,
            &mut rank,
            query.as_mut_ptr(),
            &lwork_query,
            iwork_query.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgelsd",
            layer: None,
            info,
        });
    }
    let lwork = query[0] as c_int;
    let mut work = vec![0.0; lwork.max(1) as usize];
    let mut iwork = vec![0 as c_int; iwork_query[0].max(1) as usize];
    unsafe {
        lapack_sys::dgelsd_(
            &mi,
            &ni,
            &nrhs,
            buf.as_mut_ptr(),
            &mi,
            rhs.as_mut_ptr(),
            &ldb,
            s.as_mut_ptr(),
            &rcond,
            &mut rank,
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack {
            routine: "dgelsd",
            layer: None,
            info,
        });
    }
    rhs.truncate(n);
    Ok(GelsdOutput {
        x: rhs,
        singular_values: s,
    })
}
