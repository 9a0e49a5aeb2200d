//! Dense linear-algebra helpers shared across modules.
//!
//! Everything here works on `nalgebra::DMatrix<f64>`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{dim_err, Result};

/// Default relative tolerance for numerical rank decisions.
pub const RANK_RTOL: f64 = 1e-10;

pub fn check_square(a: &DMatrix<f64>, name: &str) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(dim_err(format!(
            "{name} must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    Ok(a.nrows())
}

pub fn check_same_square(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    let n = check_square(a, "Q")?;
    let m = check_square(b, "B")?;
    if n != m {
        return Err(dim_err(format!("Q is {n}x{n} but B is {m}x{m}")));
    }
    Ok(n)
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    if a.nrows() != a.ncols() {
        return false;
    }
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > tol {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let e = SymmetricEigen::new(symmetrize(a));
    let mut v: Vec<f64> = e.eigenvalues.iter().copied().collect();
    v.sort_by(|x, y| x.total_cmp(y));
    v
}

pub fn lambda_min(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a).first().copied().unwrap_or(0.0)
}

/// Singular values, descending. Works for any shape.
pub fn singular_values(a: &DMatrix<f64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Number of singular values above `rtol * sigma_max`.
pub fn numerical_rank(a: &DMatrix<f64>, rtol: f64) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&x| x > rtol * smax).count()
}

/// Orthonormal basis (as columns) of the kernel of `a`.
///
/// Singular values at or below `rtol * scale` count as zero, where `scale`
/// is the largest singular value (or 1 when `a` vanishes).
pub fn null_space(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    // pad so the SVD returns a full right factor
    let m = a.nrows().max(n);
    let mut padded = DMatrix::zeros(m, n);
    padded.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.expect("requested V^T");
    let sv = &svd.singular_values;
    let smax = sv.iter().fold(0.0f64, |acc, &x| acc.max(x));
    let thresh = if smax == 0.0 { 0.0 } else { rtol * smax };
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&k| sv[k] <= thresh)
        .map(|k| vt.row(k).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Extends the orthonormal columns of `basis` by an orthonormal basis of the
/// part of span(`candidates`) orthogonal to them. Returns only the new columns.
///
/// Uses two passes of projection followed by a column-pivoted QR; columns whose
/// pivot falls below `atol` are discarded.
pub fn orthonormal_extension(
    basis: &DMatrix<f64>,
    candidates: &DMatrix<f64>,
    atol: f64,
) -> DMatrix<f64> {
    let n = candidates.nrows();
    if candidates.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let mut resid = candidates.clone();
    if basis.ncols() > 0 {
        for _ in 0..2 {
            let proj = basis * (basis.transpose() * &resid);
            resid -= proj;
        }
    }
    let qr = resid.clone().col_piv_qr();
    let r = qr.r();
    let q = qr.q();
    let k = r.nrows().min(r.ncols());
    let mut keep = 0;
    for i in 0..k {
        if r[(i, i)].abs() > atol {
            keep += 1;
        } else {
            break;
        }
    }
    let mut out = q.columns(0, keep).into_owned();
    // fix signs so the largest-magnitude entry of each column is positive
    for mut c in out.column_iter_mut() {
        let mut idx = 0;
        let mut best = 0.0;
        for (i, v) in c.iter().enumerate() {
            if v.abs() > best + 1e-12 {
                best = v.abs();
                idx = i;
            }
        }
        if c[idx] < 0.0 {
            c.neg_mut();
        }
    }
    out
}

/// Symmetric PSD square root, negative eigenvalues clamped to zero.
pub fn psd_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let e = SymmetricEigen::new(symmetrize(a));
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let s = &e.eigenvectors * d * e.eigenvectors.transpose();
    symmetrize(&s)
}

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    let theta13 = 5.371920351148152;
    let norm = one_norm(a);
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &id * b[1];
    let u = &a * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &id * b[0];
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.lu().solve(&p).expect("Pade denominator is nonsingular");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| standard_normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let mut c = q.column_mut(j);
            c.neg_mut();
        }
    }
    q
}

/// Box-Muller standard normal draw.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > 0.0 {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

/// Frobenius distance relative to the Frobenius norm of `reference`.
pub fn rel_frobenius(a: &DMatrix<f64>, reference: &DMatrix<f64>) -> f64 {
    let d = (a - reference).norm();
    let n = reference.norm();
    if n == 0.0 {
        d
    } else {
        d / n
    }
}
