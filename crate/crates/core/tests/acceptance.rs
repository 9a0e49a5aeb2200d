mod common;

use std::time::{Duration, Instant};

use hypoell::basis::BlockStructure;
use hypoell::config::{DatumConfig, ResolventMethod, SchauderConfig};
use hypoell::cli::schauder_row;
use hypoell::decay::{fit_decay, log_grid, DecaySource};
use hypoell::exponents::{lemma34_suite, SuiteBounds};
use hypoell::grid::GridFunction;
use hypoell::kalman::{gramian, report_for_matrices};
use hypoell::linalg::{random_orthogonal, rel_frobenius, standard_normal};
use hypoell::operator::{ConstantOperatorSpec, OperatorSpec};
use hypoell::ou::{Datum, OUKernel, QuadConfig};
use hypoell::solver::{interior_half_box, resolvent_apply, semigroup_apply, SolveConfig};
use hypoell::suites::{bernstein_suite, random_block_sizes, rank_suite, RankSuiteConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{all_full, commutator_residual, random_poly};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn kolmogorov_q() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])
}

fn kolmogorov_b() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0])
}

fn random_pair(rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = rng.gen_range(1..=6);
    let m = random_orthogonal(n, rng);
    let mask: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let q = &m * DMatrix::from_diagonal(&DVector::from_vec(mask)) * m.transpose();
    let q = (&q + q.transpose()) * 0.5;
    let b = DMatrix::from_fn(n, n, |_, _| standard_normal(rng));
    (q, b)
}

fn characterizations_agree() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut disagree = 0;
    let mut hyp = 0;
    for _ in 0..500 {
        let (q, b) = random_pair(&mut rng);
        let r = report_for_matrices(&q, &b, &[2.0, 4.0]).unwrap();
        disagree += usize::from(!r.consistent);
        hyp += usize::from(r.hypoelliptic());
    }
    let el = start.elapsed();
    outcome(
        disagree == 0 && el < Duration::from_secs(30),
        format!("500 pairs, {hyp} hypoelliptic, {disagree} disagreements, {el:.2?}"),
    )
}

fn gramian_closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for t in [0.1, 0.5, 1.0, 2.0] {
        let g = gramian(&kolmogorov_q(), &kolmogorov_b(), t).unwrap();
        let exact = DMatrix::from_row_slice(2, 2, &[t, t * t / 2.0, t * t / 2.0, t * t * t / 3.0]);
        worst = worst.max(rel_frobenius(&g, &exact));
    }
    outcome(worst <= 1e-8, format!("max relative error {worst:.2e}"))
}

fn exponent_suite() -> Outcome {
    let start = Instant::now();
    let rep = lemma34_suite(SuiteBounds::default()).unwrap();
    let el = start.elapsed();
    let checked: u64 = rep.results.iter().map(|r| r.checked).sum();
    outcome(
        rep.passed() && el < Duration::from_secs(10),
        format!("{} properties, {checked} cases, {el:.2?}", rep.results.len()),
    )
}

fn full_rank_and_commutators() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let rank = rank_suite(&RankSuiteConfig::default(), &mut rng).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let sizes = random_block_sizes(&mut rng, 3, 2);
        let s = BlockStructure::identity(sizes).unwrap();
        let n = s.dim();
        let b = DMatrix::from_fn(n, n, |_, _| standard_normal(&mut rng));
        let k = rng.gen_range(1..=3);
        let alphas = all_full(n, k);
        let alpha = &alphas[rng.gen_range(0..alphas.len())];
        let w = random_poly(n, k + 1, &mut rng);
        let (res, scale) = commutator_residual(alpha, &s, &b, &w);
        worst = worst.max(res / (1.0 + scale));
    }
    outcome(
        rank.failure.is_none() && rank.sigma_min > 1e-8 && worst < 1e-8,
        format!(
            "{} J matrices, min sigma {:.3e}; commutator residual {worst:.1e}",
            rank.matrices, rank.sigma_min
        ),
    )
}

fn bernstein_feasibility() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let out = bernstein_suite(4, 3, &mut rng).unwrap();
    let floor = 2.0 - 1e-10;
    let failed = out.iter().filter(|o| !o.passed(floor)).count();
    let checked: u64 = out.iter().map(|o| o.conditions_checked).sum();
    let iota = out.iter().map(|o| o.iota).fold(f64::INFINITY, f64::min);
    outcome(
        failed == 0,
        format!("{} (k, r) pairs, {checked} conditions, {failed} failing, min iota {iota:.12}", out.len()),
    )
}

fn solver_matches_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = SolveConfig::default();
    let d = Datum::general(|y| (-(y[0] * y[0] + y[1] * y[1]) / 4.5).exp());
    let tr = semigroup_apply(&OperatorSpec::kolmogorov(), &cfg, &d, &[0.5]).unwrap();
    let k = OUKernel::new(&ConstantOperatorSpec::kolmogorov(), 0.5).unwrap();
    let u = interior_half_box(&tr.snapshots[0]).unwrap();
    let q = QuadConfig::default();
    let err = (0..u.len())
        .map(|i| (u.values[i] - k.apply(&d, &u.coords(i), &q).unwrap()).abs())
        .fold(0.0, f64::max);
    let tol = 10.0 * cfg.tol;
    let positive = tr.min_value >= -tol;
    let bounded = tr.max_sup <= tr.initial_sup + tol;
    outcome(
        err <= 1e-2 && positive && bounded,
        format!(
            "{}^2 grid, sup error {err:.2e}, min {:.1e}, max {:.6} <= {:.6}, {:.2?}",
            cfg.nodes_per_axis(),
            tr.min_value,
            tr.max_sup,
            tr.initial_sup,
            start.elapsed()
        ),
    )
}

fn probes(n: usize) -> GridFunction {
    GridFunction::new(vec![-1.0, -1.0], vec![1.0, 1.0], vec![n, n], vec![0.0; n * n]).unwrap()
}

fn anisotropic_decay() -> Outcome {
    let ts = log_grid(0.02, 0.3, 8).unwrap();
    let s = BlockStructure::identity(vec![1, 1]).unwrap();
    let ridge = Datum::clamp_ridge(DVector::from_vec(vec![0.0, 1.0]), 1e-6).unwrap();
    let oracle = DecaySource::oracle(ConstantOperatorSpec::kolmogorov());
    let d1 = fit_decay(&oracle, &s, &[0, 1], 0, &ridge, &ts, &probes(11)).unwrap();
    let d0 = fit_decay(&oracle, &s, &[1, 0], 0, &ridge, &ts, &probes(11)).unwrap();
    let smooth = Datum::general(|y| y[0].sin());
    let h1 = fit_decay(&oracle, &s, &[1, 0], 1, &smooth, &ts, &probes(11)).unwrap();
    let levels = [(40, 20, 0.05, 11), (60, 30, 0.02, 21)];
    let fine: Vec<f64> = levels
        .iter()
        .map(|&(order, ridge_points, step_factor, n)| {
            let src = DecaySource::Oracle {
                spec: ConstantOperatorSpec::kolmogorov(),
                quad: QuadConfig {
                    order,
                    ridge_points,
                    ..QuadConfig::default()
                },
                step_factor,
            };
            fit_decay(&src, &s, &[0, 1], 0, &ridge, &ts, &probes(n)).unwrap().slope
        })
        .collect();
    let drift = (fine[1] - fine[0]).abs();
    outcome(
        d1.slope <= -1.5 + 0.15 && d0.slope <= -0.5 + 0.15 && h1.slope.abs() <= 0.15 && drift < 0.05,
        format!(
            "dx1 {:.4}, dx0 {:.4}, h=1 dx0 {:.4}, self-convergence {drift:.1e}",
            d1.slope, d0.slope, h1.slope
        ),
    )
}

fn resolvent_and_schauder() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let coarse = SolveConfig {
        radius: 3.0,
        spacing: 0.15,
        t_final: 20.0,
        dt: 0.05,
        ..SolveConfig::default()
    };
    let tol = 10.0 * coarse.tol;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..10 {
        let lambda = rng.gen_range(0.5..4.0);
        let (a, c0, c1) = (standard_normal(&mut rng), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let (w, k) = (rng.gen_range(0.3..2.0), rng.gen_range(0.5..3.0));
        let d = Datum::general(move |y| {
            a * (-((y[0] - c0).powi(2) + (y[1] - c1).powi(2)) / w).exp() * (k * y[0]).cos()
        });
        let r = resolvent_apply(&OperatorSpec::kolmogorov(), &coarse, &d, lambda).unwrap();
        worst = worst.max(lambda * r.grid.sup_norm() - r.f_sup);
    }
    let sc = SchauderConfig::default();
    let cfg = SolveConfig {
        t_final: sc.horizon,
        dt: sc.dt,
        ..SolveConfig::default()
    };
    let s = BlockStructure::identity(vec![1, 1]).unwrap();
    let ratios: Vec<f64> = sc
        .data
        .iter()
        .map(|d: &DatumConfig| {
            let datum = d.to_datum(2).unwrap();
            let row = schauder_row(
                &OperatorSpec::kolmogorov(),
                &s,
                &cfg,
                ResolventMethod::Direct,
                &datum,
                1.0,
                sc.theta,
            )
            .unwrap();
            row.ratio()
        })
        .collect();
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    outcome(
        worst <= tol && ratios.len() == 5 && hi / lo < 3.0,
        format!(
            "max lambda|Rf| - |f| = {worst:.1e}; ratio spread {:.3} over {} data",
            hi / lo,
            ratios.len()
        ),
    )
}

#[test]
fn acceptance() {
    let checks: [(&str, fn() -> Outcome); 8] = [
        ("characterizations agree", characterizations_agree),
        ("gramian closed form", gramian_closed_form),
        ("exponent suite", exponent_suite),
        ("full rank and commutators", full_rank_and_commutators),
        ("bernstein feasibility", bernstein_feasibility),
        ("solver vs oracle", solver_matches_oracle),
        ("anisotropic decay", anisotropic_decay),
        ("resolvent and schauder", resolvent_and_schauder),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in checks.iter().enumerate() {
        let o = check();
        println!("{} {}: {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        if !o.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
