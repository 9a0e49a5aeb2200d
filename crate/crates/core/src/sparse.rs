//! Compressed sparse rows, ILU(0) and preconditioned BiCGSTAB.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from per-row `(col, value)` lists; duplicates are summed and
    /// columns sorted.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            let mut last: Option<usize> = None;
            for (c, v) in r {
                if last == Some(c) {
                    *vals.last_mut().expect("entry") += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                    last = Some(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            y[i] = s;
        }
    }

    /// `alpha I + beta A`.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        let mut rows = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut r: Vec<(usize, f64)> = (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(|k| (self.cols[k], beta * self.vals[k]))
                .collect();
            r.push((i, alpha));
            rows.push(r);
        }
        Self::from_rows(rows)
    }

    pub fn diag(&self, i: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1])
            .find(|&k| self.cols[k] == i)
            .map_or(0.0, |k| self.vals[k])
    }
}

/// Incomplete LU factorization with the sparsity of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: Csr,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag_pos = vec![usize::MAX; n];
        for (i, d) in diag_pos.iter_mut().enumerate() {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    *d = k;
                }
            }
            if *d == usize::MAX {
                return Err(Error::SolveFailed(format!(
                    "ILU(0): row {i} has no diagonal"
                )));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (s, e) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in s..e {
                pos[lu.cols[k]] = k;
            }
            for k in s..e {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let piv = lu.vals[diag_pos[j]];
                if piv == 0.0 {
                    return Err(Error::SolveFailed(format!("ILU(0): zero pivot at row {j}")));
                }
                let m = lu.vals[k] / piv;
                lu.vals[k] = m;
                for kk in (diag_pos[j] + 1)..lu.row_ptr[j + 1] {
                    let p = pos[lu.cols[kk]];
                    if p != usize::MAX {
                        lu.vals[p] -= m * lu.vals[kk];
                    }
                }
            }
            for k in s..e {
                pos[lu.cols[k]] = usize::MAX;
            }
        }
        Ok(Self { lu, diag_pos })
    }

    /// Solves `L U z = r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag_pos[i] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for k in (self.diag_pos[i] + 1)..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s / lu.vals[self.diag_pos[i]];
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Right-preconditioned BiCGSTAB; `x` holds the initial guess on entry.
pub fn bicgstab(
    a: &Csr,
    pre: &Ilu0,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<SolveStats> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r0 = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut ph = vec![0.0; n];
    let mut sh = vec![0.0; n];
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut res = norm(&r) / bn;
    if res <= tol {
        return Ok(SolveStats {
            iterations: 0,
            relative_residual: res,
        });
    }
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 || !rho_new.is_finite() {
            return Err(Error::SolveFailed(format!(
                "BiCGSTAB breakdown at iteration {it}"
            )));
        }
        let beta = rho_new / rho * alpha / omega;
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut ph);
        a.matvec(&ph, &mut v);
        alpha = rho / dot(&r0, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn <= tol {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return Ok(SolveStats {
                iterations: it,
                relative_residual: norm(&s) / bn,
            });
        }
        pre.apply(&s, &mut sh);
        a.matvec(&sh, &mut t);
        let tt = dot(&t, &t);
        omega = if tt == 0.0 { 0.0 } else { dot(&t, &s) / tt };
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm(&r) / bn;
        if !res.is_finite() {
            return Err(Error::NonFinite("BiCGSTAB residual".into()));
        }
        if res <= tol {
            return Ok(SolveStats {
                iterations: it,
                relative_residual: res,
            });
        }
        if omega == 0.0 {
            return Err(Error::SolveFailed(format!(
                "BiCGSTAB stagnated at iteration {it}"
            )));
        }
    }
    Err(Error::SolveFailed(format!(
        "BiCGSTAB did not reach {tol:e} in {max_iter} iterations (residual {res:e})"
    )))
}
