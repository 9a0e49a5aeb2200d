use hypoell::basis::BlockStructure;
use hypoell::decay::*;
use hypoell::grid::GridFunction;
use hypoell::operator::{ConstantOperatorSpec, OperatorSpec};
use hypoell::ou::{Datum, QuadConfig};
use hypoell::solver::SolveConfig;
use hypoell::Error;
use nalgebra::DVector;

fn probes(n: usize) -> GridFunction {
    GridFunction::new(
        vec![-1.0, -1.0],
        vec![1.0, 1.0],
        vec![n, n],
        vec![0.0; n * n],
    )
    .unwrap()
}

fn kolmogorov_structure() -> BlockStructure {
    BlockStructure::identity(vec![1, 1]).unwrap()
}

fn ridge() -> Datum {
    Datum::clamp_ridge(DVector::from_vec(vec![0.0, 1.0]), 1e-6).unwrap()
}

#[test]
fn oracle_slopes_hit_the_targets() {
    let src = DecaySource::oracle(ConstantOperatorSpec::kolmogorov());
    let ts = log_grid(0.02, 0.3, 8).unwrap();
    let s = kolmogorov_structure();
    let r = fit_decay(&src, &s, &[0, 1], 0, &ridge(), &ts, &probes(11)).unwrap();
    assert_eq!(r.target.to_string(), "-3/2");
    assert!((r.slope + 1.5).abs() < 0.02 && r.compliant(0.15), "{r:?}");
    let r = fit_decay(&src, &s, &[1, 0], 0, &ridge(), &ts, &probes(11)).unwrap();
    assert_eq!(r.target.to_string(), "-1/2");
    assert!((r.slope + 0.5).abs() < 0.02 && r.compliant(0.15), "{r:?}");
    assert!(r.residual < 1e-3);
    assert_eq!(r.window, (ts[0], ts[7]));
}

#[test]
fn smooth_datum_with_h_one_does_not_decay() {
    let src = DecaySource::oracle(ConstantOperatorSpec::kolmogorov());
    let ts = log_grid(0.02, 0.3, 8).unwrap();
    let d = Datum::general(|y| y[0].sin());
    let r = fit_decay(
        &src,
        &kolmogorov_structure(),
        &[1, 0],
        1,
        &d,
        &ts,
        &probes(11),
    )
    .unwrap();
    assert_eq!(r.target.to_f64(), 0.0);
    assert!(r.slope.abs() <= 0.15, "{r:?}");
}

#[test]
fn vanishing_derivative_is_reported() {
    let src = DecaySource::oracle(ConstantOperatorSpec::kolmogorov());
    let ts = log_grid(0.02, 0.3, 8).unwrap();
    let d = Datum::general(|y| y[0].sin());
    let r = fit_decay(
        &src,
        &kolmogorov_structure(),
        &[0, 1],
        0,
        &d,
        &ts,
        &probes(5),
    );
    assert!(matches!(r, Err(Error::DerivativeAnnihilated(_))), "{r:?}");
}

#[test]
fn oracle_pipeline_self_converges() {
    let ts = log_grid(0.02, 0.3, 8).unwrap();
    let levels = [(20, 10, 0.2, 5), (40, 20, 0.05, 11), (60, 30, 0.02, 21)];
    let slopes: Vec<f64> = levels
        .iter()
        .map(|&(order, pts, sf, n)| {
            let src = DecaySource::Oracle {
                spec: ConstantOperatorSpec::kolmogorov(),
                quad: QuadConfig {
                    order,
                    ridge_points: pts,
                    ..QuadConfig::default()
                },
                step_factor: sf,
            };
            fit_decay(
                &src,
                &kolmogorov_structure(),
                &[0, 1],
                0,
                &ridge(),
                &ts,
                &probes(n),
            )
            .unwrap()
            .slope
        })
        .collect();
    assert!((slopes[2] - slopes[1]).abs() < 0.05, "{slopes:?}");
}

#[test]
fn solver_and_oracle_slopes_agree_on_resolved_data() {
    let ts = log_grid(0.05, 0.5, 8).unwrap();
    let d = Datum::general(|y| (-(y[0] * y[0] + y[1] * y[1]) / 0.5).exp());
    let s = kolmogorov_structure();
    let o = DecaySource::oracle(ConstantOperatorSpec::kolmogorov());
    let so = DecaySource::Solver {
        spec: OperatorSpec::kolmogorov(),
        cfg: SolveConfig::default(),
    };
    for alpha in [[0u32, 1], [1, 0]] {
        let a = fit_decay(&o, &s, &alpha, 0, &d, &ts, &probes(21)).unwrap();
        let b = fit_decay(&so, &s, &alpha, 0, &d, &ts, &probes(21)).unwrap();
        assert!(
            (a.slope - b.slope).abs() < 0.1,
            "{alpha:?}: {} vs {}",
            a.slope,
            b.slope
        );
    }
}

#[test]
fn solver_window_respects_grid_resolution() {
    let so = DecaySource::Solver {
        spec: OperatorSpec::kolmogorov(),
        cfg: SolveConfig::default(),
    };
    let ts = log_grid(0.001, 0.03, 8).unwrap();
    let r = fit_decay(
        &so,
        &kolmogorov_structure(),
        &[0, 1],
        0,
        &ridge(),
        &ts,
        &probes(5),
    );
    assert!(matches!(r, Err(Error::Resolution(_))), "{r:?}");
}

#[test]
fn malformed_requests_are_rejected() {
    let src = DecaySource::oracle(ConstantOperatorSpec::kolmogorov());
    let s = kolmogorov_structure();
    let ts = log_grid(0.02, 0.3, 8).unwrap();
    assert!(fit_decay(&src, &s, &[1, 0, 0], 0, &ridge(), &ts, &probes(5)).is_err());
    assert!(fit_decay(&src, &s, &[1, 0], 0, &ridge(), &ts[..4], &probes(5)).is_err());
    let lin: Vec<f64> = (1..=8).map(|i| 0.05 * i as f64).collect();
    assert!(fit_decay(&src, &s, &[1, 0], 0, &ridge(), &lin, &probes(5)).is_err());
    assert!(log_grid(0.3, 0.02, 8).is_err());
}
