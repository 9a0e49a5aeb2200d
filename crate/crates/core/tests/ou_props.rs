use hypoell::operator::ConstantOperatorSpec;
use hypoell::ou::{ou_apply, ou_derivative, Datum, OUKernel, QuadConfig};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn kol() -> ConstantOperatorSpec {
    ConstantOperatorSpec::kolmogorov()
}

#[test]
fn affine_data_follow_the_mean() {
    let q = QuadConfig::default();
    let f = Datum::general(|y| 2.0 * y[0] - 3.0 * y[1]);
    for &t in &[0.1, 0.5, 1.3] {
        let x = [0.7, -0.2];
        let v = ou_apply(&kol(), t, &f, &x, &q).unwrap();
        let m = [x[0], x[1] + t * x[0]];
        assert!((v - (2.0 * m[0] - 3.0 * m[1])).abs() < 1e-12);
    }
}

#[test]
fn second_moment_uses_twice_the_gramian() {
    let q = QuadConfig::default();
    let f = Datum::general(|y| y[1] * y[1]);
    for &t in &[0.2, 0.5, 1.0] {
        let x = [1.1, 0.4];
        let v = ou_apply(&kol(), t, &f, &x, &q).unwrap();
        let m1 = x[1] + t * x[0];
        let exact = m1 * m1 + 2.0 * t.powi(3) / 3.0;
        assert!(
            (v - exact).abs() < 1e-11 * (1.0 + exact),
            "t {t}: {v} vs {exact}"
        );
    }
}

#[test]
fn ridge_sine_closed_form_and_derivatives() {
    // T(t) sin(<a, .>)(x) = exp(-a* 2Q_t a / 2) sin(<a, e^{tB} x>)
    let a = DVector::from_vec(vec![0.5, 1.0]);
    let f = Datum::ridge(a.clone(), f64::sin, vec![]);
    let q = QuadConfig::default();
    let t = 0.4;
    let k = OUKernel::new(&kol(), t).unwrap();
    let var = (a.transpose() * &k.cov * &a)[(0, 0)];
    let damp = (-0.5 * var).exp();
    let x = [0.3, -0.8];
    let arg = 0.5 * x[0] + (x[1] + t * x[0]);
    assert!((k.apply(&f, &x, &q).unwrap() - damp * arg.sin()).abs() < 1e-13);
    let d1 = k.derivative(&f, &x, &[0, 1], 1e-3, &q).unwrap();
    assert!((d1 - damp * arg.cos()).abs() < 1e-9);
    let d0 = k.derivative(&f, &x, &[1, 0], 1e-3, &q).unwrap();
    assert!((d0 - damp * (0.5 + t) * arg.cos()).abs() < 1e-9);
    let d11 = k.derivative(&f, &x, &[0, 2], 1e-2, &q).unwrap();
    assert!((d11 + damp * arg.sin()).abs() < 1e-7);
    let d3 = k.derivative(&f, &x, &[1, 2], 2e-2, &q).unwrap();
    assert!((d3 + damp * (0.5 + t) * arg.cos()).abs() < 1e-5);
}

#[test]
fn affine_second_derivatives_vanish() {
    let f = Datum::general(|y| 4.0 - y[0] + 0.5 * y[1]);
    let q = QuadConfig::default();
    for alpha in [[2, 0], [1, 1], [0, 2], [2, 1]] {
        let d = ou_derivative(&kol(), 0.3, &f, &[0.2, 0.1], &alpha, 0.05, &q).unwrap();
        assert!(d.abs() < 1e-9, "{alpha:?}: {d}");
    }
    let d0 = ou_derivative(&kol(), 0.3, &f, &[0.2, 0.1], &[0, 0], 0.05, &q).unwrap();
    let direct = ou_apply(&kol(), 0.3, &f, &[0.2, 0.1], &q).unwrap();
    assert_eq!(d0, direct);
}

#[test]
fn semigroup_law() {
    let q = QuadConfig {
        order: 24,
        ..QuadConfig::default()
    };
    let f = Datum::general(|y| (y[0] - 0.5 * y[1]).cos() / (1.0 + 0.1 * y[1] * y[1]));
    for &(t, s) in &[(0.1, 0.2), (0.3, 0.5), (0.5, 0.4)] {
        let ks = OUKernel::new(&kol(), s).unwrap();
        let inner = f.clone();
        let ts = Datum::general(move |y| ks.apply(&inner, y, &q).unwrap());
        let x = [0.4, -0.3];
        let lhs = ou_apply(&kol(), t + s, &f, &x, &q).unwrap();
        let rhs = ou_apply(&kol(), t, &ts, &x, &q).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "t {t}, s {s}: {lhs} vs {rhs}");
    }
}

#[test]
fn errors() {
    let f = Datum::general(|_| 0.0);
    let q = QuadConfig {
        order: 1,
        ..QuadConfig::default()
    };
    assert!(ou_apply(&kol(), 0.5, &f, &[0.0, 0.0], &q).is_err());
    let q = QuadConfig::default();
    assert!(ou_apply(&kol(), -0.5, &f, &[0.0, 0.0], &q).is_err());
    assert!(ou_derivative(&kol(), 0.5, &f, &[0.0, 0.0], &[2, 2], 0.1, &q).is_err());
    assert!(ou_derivative(&kol(), 0.5, &f, &[0.0, 0.0], &[1, 0], 0.0, &q).is_err());
    assert!(ou_apply(&kol(), 0.5, &f, &[0.0], &q).is_err());
}

fn random_spec(seed: u64) -> ConstantOperatorSpec {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let b = DMatrix::from_row_slice(
        2,
        2,
        &[
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(0.5..1.5),
            rng.gen_range(-0.5..0.5),
        ],
    );
    let q = DMatrix::from_row_slice(2, 2, &[rng.gen_range(0.2..2.0), 0.0, 0.0, 0.0]);
    ConstantOperatorSpec::new(q, b).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn contraction_and_positivity(seed in any::<u64>(), t in 0.05f64..1.0, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, c in 0.1f64..3.0) {
        let spec = random_spec(seed);
        let q = QuadConfig::default();
        let f = Datum::general(move |y| (c * y[0]).sin().abs() * (-(y[1] * y[1]) / 4.0).exp());
        let v = ou_apply(&spec, t, &f, &[x0, x1], &q).unwrap();
        prop_assert!(v >= -1e-12);
        prop_assert!(v <= 1.0 + 1e-10);
        let g = Datum::clamp_ridge(DVector::from_vec(vec![c, 1.0]), 0.1).unwrap();
        let w = ou_apply(&spec, t, &g, &[x0, x1], &q).unwrap();
        prop_assert!(w.abs() <= 1.0 + 1e-12);
    }
}
