//! Polynomial test functions shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use hypoell::basis::BlockStructure;
use hypoell::linalg::standard_normal;
use hypoell::multiindex::{commutator_drift, FullMultiIndex};
use nalgebra::DMatrix;
use rand::Rng;

pub fn all_full(n: usize, k: u32) -> Vec<Vec<u32>> {
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, out);
        }
    }
    let mut out = Vec::new();
    rec(0, k, &mut vec![0; n], &mut out);
    out
}

pub type Poly = BTreeMap<Vec<u32>, f64>;

pub fn derive(p: &Poly, i: usize) -> Poly {
    let mut out = Poly::new();
    for (e, c) in p {
        if e[i] > 0 {
            let mut f = e.clone();
            f[i] -= 1;
            *out.entry(f).or_default() += c * e[i] as f64;
        }
    }
    out
}

pub fn derive_multi(p: &Poly, alpha: &[u32]) -> Poly {
    let mut q = p.clone();
    for (i, &a) in alpha.iter().enumerate() {
        for _ in 0..a {
            q = derive(&q, i);
        }
    }
    q
}

pub fn drift_apply(p: &Poly, b: &DMatrix<f64>) -> Poly {
    // <Bx, D> p = sum_i (sum_tau b_{i tau} x_tau) d_i p
    let n = b.nrows();
    let mut out = Poly::new();
    for i in 0..n {
        let d = derive(p, i);
        for tau in 0..n {
            if b[(i, tau)] == 0.0 {
                continue;
            }
            for (e, c) in &d {
                let mut f = e.clone();
                f[tau] += 1;
                *out.entry(f).or_default() += b[(i, tau)] * c;
            }
        }
    }
    out
}

pub fn axpy(a: &mut Poly, s: f64, b: &Poly) {
    for (e, c) in b {
        *a.entry(e.clone()).or_default() += s * c;
    }
}

pub fn max_abs(p: &Poly) -> f64 {
    p.values().fold(0.0, |m, c| m.max(c.abs()))
}

/// Sup of the coefficients of `[D^alpha, <Bx, D>] w` minus the symbolic sum,
/// and the sup of the symbolic sum.
pub fn commutator_residual(
    alpha: &[u32],
    s: &BlockStructure,
    b: &DMatrix<f64>,
    w: &Poly,
) -> (f64, f64) {
    let mut lhs = derive_multi(&drift_apply(w, b), alpha);
    axpy(&mut lhs, -1.0, &drift_apply(&derive_multi(w, alpha), b));
    let mut rhs = Poly::new();
    for (c, beta) in commutator_drift(&FullMultiIndex(alpha.to_vec()), s, b) {
        axpy(&mut rhs, c, &derive_multi(w, &beta.0));
    }
    axpy(&mut lhs, -1.0, &rhs);
    (max_abs(&lhs), max_abs(&rhs))
}

/// Polynomial in `n` variables with Gaussian coefficients on every monomial of degree `<= deg`.
pub fn random_poly<R: Rng + ?Sized>(n: usize, deg: u32, rng: &mut R) -> Poly {
    let mut w = Poly::new();
    for d in 0..=deg {
        for e in all_full(n, d) {
            w.insert(e, standard_normal(rng));
        }
    }
    w
}
