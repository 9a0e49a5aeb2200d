use std::f64::consts::PI;

use hypoell::operator::{ConstantOperatorSpec, OperatorSpec};
use hypoell::ou::{Datum, OUKernel, QuadConfig};
use hypoell::solver::*;
use hypoell::Error;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn oracle_error(u: &hypoell::grid::GridFunction, d: &Datum, t: f64) -> f64 {
    let k = OUKernel::new(&ConstantOperatorSpec::kolmogorov(), t).unwrap();
    let ui = interior_half_box(u).unwrap();
    let q = QuadConfig::default();
    (0..ui.len())
        .map(|i| (ui.values[i] - k.apply(d, &ui.coords(i), &q).unwrap()).abs())
        .fold(0.0, f64::max)
}

fn bump(y: &[f64]) -> f64 {
    1.0 / (1.0 + y[0] * y[0] + y[1] * y[1])
}

// 1 - x^2/R^2 on [-R, R] has sine coefficients 32/(k pi)^3 for odd k.
fn parabola_heat(x: f64, r: f64, t: f64) -> f64 {
    let mut s = 0.0;
    for k in (1..400).step_by(2) {
        let kf = k as f64;
        let w = kf * PI / (2.0 * r);
        s += 32.0 / (kf * PI).powi(3) * (-w * w * t).exp() * (w * (x + r)).sin();
    }
    s
}

#[test]
fn zero_datum_stays_zero() {
    let cfg = SolveConfig {
        radius: 3.0,
        spacing: 0.25,
        ..SolveConfig::default()
    };
    let tr = semigroup_apply(
        &OperatorSpec::kolmogorov(),
        &cfg,
        &Datum::general(|_| 0.0),
        &[0.5],
    )
    .unwrap();
    assert!(tr.snapshots[0].values.iter().all(|&v| v == 0.0));
}

#[test]
fn heat_matches_eigenfunction_expansion() {
    let r = 2.0;
    let spec = OperatorSpec::constant(DMatrix::identity(2, 2), DMatrix::zeros(2, 2), 1.0).unwrap();
    let cfg = SolveConfig {
        epsilon: 1.0,
        radius: r,
        spacing: 2.0 * r / 128.0,
        t_final: 0.1,
        dt: 0.001,
        theta: 0.5,
        startup_steps: 4,
        ..SolveConfig::default()
    };
    assert_eq!(cfg.nodes_per_axis(), 129);
    let d = Datum::general(move |y| (1.0 - y[0] * y[0] / (r * r)) * (1.0 - y[1] * y[1] / (r * r)));
    let tr = semigroup_apply(&spec, &cfg, &d, &[0.1]).unwrap();
    let u = &tr.snapshots[0];
    let mut err = 0.0f64;
    for i in 0..u.len() {
        let x = u.coords(i);
        let exact = parabola_heat(x[0], r, 0.1) * parabola_heat(x[1], r, 0.1);
        err = err.max((u.values[i] - exact).abs());
    }
    assert!(err < 1e-3, "heat error {err:e}");
}

#[test]
fn kolmogorov_matches_oracle_and_stays_positive() {
    let d = Datum::general(bump);
    let cfg = SolveConfig::default();
    let tr = semigroup_apply(&OperatorSpec::kolmogorov(), &cfg, &d, &[0.5]).unwrap();
    let err = oracle_error(&tr.snapshots[0], &d, 0.5);
    assert!(err <= 1e-2, "oracle error {err:e}");
    assert!(tr.min_value >= -10.0 * cfg.tol);
    assert!(tr.max_sup <= tr.initial_sup + 10.0 * cfg.tol);
    assert!(tr.monotone && tr.upwinded > 0);
}

#[test]
fn epsilon_sweep_converges_monotonically() {
    let d = Datum::general(bump);
    let errs: Vec<f64> = [0.5, 0.1, 0.02]
        .iter()
        .map(|&eps| {
            let cfg = SolveConfig {
                epsilon: eps,
                ..SolveConfig::default()
            };
            let tr = semigroup_apply(&OperatorSpec::kolmogorov(), &cfg, &d, &[0.5]).unwrap();
            oracle_error(&tr.snapshots[0], &d, 0.5)
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn central_differences_break_the_maximum_principle() {
    let cfg = SolveConfig {
        upwind: Upwind::Never,
        t_final: 0.1,
        ..SolveConfig::default()
    };
    let d = Datum::general(|y| y[1].tanh());
    let r = semigroup_apply(&OperatorSpec::kolmogorov(), &cfg, &d, &[0.1]);
    assert!(matches!(r, Err(Error::MaxPrinciple(_))), "{r:?}");
}

#[test]
fn dirichlet_step_rejects_nonzero_boundary() {
    let cfg = SolveConfig {
        radius: 2.0,
        spacing: 0.25,
        ..SolveConfig::default()
    };
    let u = cfg.template(2).unwrap();
    let ones = u.with_values(vec![1.0; u.len()]).unwrap();
    assert!(step_dirichlet(&OperatorSpec::kolmogorov(), &cfg, &ones).is_err());
    let d = Discretization::new(&OperatorSpec::kolmogorov(), &cfg).unwrap();
    let inner = d.extend(&vec![1.0; d.unknowns()]);
    let next = step_dirichlet(&OperatorSpec::kolmogorov(), &cfg, &inner).unwrap();
    assert!(next.sup_norm() <= 1.0 + 1e-9);
}

#[test]
fn resolvent_quadrature_matches_direct_solve() {
    let cfg = SolveConfig {
        spacing: 0.15,
        t_final: 25.0,
        dt: 0.01,
        theta: 0.5,
        startup_steps: 4,
        ..SolveConfig::default()
    };
    let spec = OperatorSpec::kolmogorov();
    let d = Datum::general(|y| (-(y[0] * y[0] + y[1] * y[1]) / 2.0).exp());
    let q = resolvent_apply(&spec, &cfg, &d, 1.0).unwrap();
    let direct = resolvent_direct(&spec, &cfg, &d, 1.0).unwrap();
    assert!(q.tail_bound < 1e-10);
    let diff = q
        .grid
        .values
        .iter()
        .zip(&direct.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(diff < 1e-3, "{diff:e}");
}

#[test]
fn resolvent_rejects_bad_lambda() {
    let cfg = SolveConfig::default();
    let d = Datum::general(bump);
    assert!(resolvent_apply(&OperatorSpec::kolmogorov(), &cfg, &d, 0.0).is_err());
    assert!(resolvent_direct(&OperatorSpec::kolmogorov(), &cfg, &d, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn nonnegative_data_stay_in_range(
        c0 in -1.5f64..1.5, c1 in -1.5f64..1.5, w in 0.3f64..2.0, a in 0.1f64..3.0
    ) {
        let cfg = SolveConfig { radius: 3.0, spacing: 0.1, t_final: 0.2, dt: 0.01, ..SolveConfig::default() };
        let d = Datum::general(move |y| a * (-((y[0] - c0).powi(2) + (y[1] - c1).powi(2)) / w).exp());
        let tr = semigroup_apply(&OperatorSpec::kolmogorov(), &cfg, &d, &[0.1, 0.2]).unwrap();
        prop_assert!(tr.min_value >= -10.0 * cfg.tol);
        prop_assert!(tr.max_sup <= tr.initial_sup * (1.0 + 10.0 * cfg.tol));
        prop_assert!(tr.snapshots[1].sup_norm() <= tr.snapshots[0].sup_norm() + 1e-12);
    }

    #[test]
    fn resolvent_is_a_contraction(lambda in 0.5f64..4.0, c in -1.0f64..1.0, w in 0.5f64..3.0) {
        let cfg = SolveConfig { radius: 3.0, spacing: 0.1, ..SolveConfig::default() };
        let d = Datum::general(move |y| (y[0] - c).sin() * (-(y[1] * y[1]) / w).exp());
        let u = resolvent_direct(&OperatorSpec::kolmogorov(), &cfg, &d, lambda).unwrap();
        let g = cfg.template(2).unwrap();
        let fs = (0..g.len()).map(|i| d.eval(&g.coords(i)).abs()).fold(0.0, f64::max);
        prop_assert!(lambda * u.sup_norm() <= fs + 1e-9);
    }
}
