use hypoell::kalman::{gramian, kalman_rank, report_for_matrices};
use hypoell::linalg::{lambda_min, random_orthogonal, rel_frobenius, standard_normal};
use hypoell::quadrature::gauss_legendre;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_pair(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rng.gen_range(1..=6);
    let m = random_orthogonal(n, rng);
    let mask: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
        .collect();
    let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(mask));
    let q = &m * d * m.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let b = DMatrix::from_fn(n, n, |_, _| standard_normal(rng));
    (q, b)
}

fn expm_series(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..60 {
        term = &term * a / k as f64;
        out += &term;
    }
    out
}

fn gramian_quadrature(q: &DMatrix<f64>, b: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let (x, w) = gauss_legendre(40);
    let n = q.nrows();
    let mut g = DMatrix::zeros(n, n);
    for (xi, wi) in x.iter().zip(&w) {
        let s = 0.5 * t * (xi + 1.0);
        let e = expm_series(&(b * s));
        g += (&e * q * e.transpose()) * (0.5 * t * wi);
    }
    g
}

#[test]
fn five_characterizations_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut bad = Vec::new();
    let mut hyp = 0;
    for i in 0..500 {
        let (q, b) = random_pair(&mut rng);
        let r = report_for_matrices(&q, &b, &[2.0, 4.0]).unwrap();
        if r.hypoelliptic() {
            hyp += 1;
        }
        if !r.consistent {
            bad.push((i, r.flags()));
        }
    }
    assert!(bad.is_empty(), "inconsistent: {bad:?}");
    assert!(hyp > 50 && hyp < 450, "unbalanced sample: {hyp}");
}

#[test]
fn kolmogorov_gramian_closed_form() {
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
    let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    for &t in &[0.1, 1.0, 3.0] {
        let g = gramian(&q, &b, t).unwrap();
        let exact = DMatrix::from_row_slice(2, 2, &[t, t * t / 2.0, t * t / 2.0, t * t * t / 3.0]);
        assert!(rel_frobenius(&g, &exact) < 1e-10);
    }
    assert_eq!(kalman_rank(&q, &b, 1).unwrap().rank, 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gramian_matches_quadrature(seed in any::<u64>(), t in 0.05f64..1.5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, b) = random_pair(&mut rng);
        let b = b * 0.5;
        let g = gramian(&q, &b, t).unwrap();
        let oracle = gramian_quadrature(&q, &b, t);
        if oracle.norm() > 1e-12 {
            prop_assert!(rel_frobenius(&g, &oracle) < 1e-8);
        }
    }

    #[test]
    fn gramian_monotone_in_time(seed in any::<u64>(), t in 0.1f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (q, b) = random_pair(&mut rng);
        let g1 = gramian(&q, &b, t).unwrap();
        let g2 = gramian(&q, &b, 2.0 * t).unwrap();
        let scale = g2.norm().max(1.0);
        prop_assert!(lambda_min(&(&g2 - &g1)) > -1e-9 * scale);
    }
}
