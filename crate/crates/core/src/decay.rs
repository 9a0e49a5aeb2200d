//! Log-log fits of `sup |D^alpha T(t) f|` against `t`, compared with `-q_h(|alpha|)`.

use std::fmt::Write as _;

use crate::basis::BlockStructure;
use crate::error::{arg_err, Error, Result};
use crate::exponents::{qh_eval, HalfInt};
use crate::grid::GridFunction;
use crate::linalg;
use crate::multiindex::FullMultiIndex;
use crate::operator::{ConstantOperatorSpec, OperatorSpec};
use crate::ou::{Datum, OUKernel, QuadConfig};
use crate::solver::{semigroup_apply, SolveConfig};

/// Derivative sups below this are treated as zero.
pub const ANNIHILATED_FLOOR: f64 = 1e-12;

/// Where the derivative sups come from.
#[derive(Debug, Clone)]
pub enum DecaySource {
    /// Exact kernel; finite-difference step `step_factor * sqrt(lambda_min(2 Q_t))`.
    Oracle {
        spec: ConstantOperatorSpec,
        quad: QuadConfig,
        step_factor: f64,
    },
    /// Solver snapshots, differentiated on the grid.
    Solver {
        spec: OperatorSpec,
        cfg: SolveConfig,
    },
}

impl DecaySource {
    pub fn oracle(spec: ConstantOperatorSpec) -> Self {
        DecaySource::Oracle {
            spec,
            quad: QuadConfig::default(),
            step_factor: 0.05,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DecaySource::Oracle { spec, .. } => spec.dim_n,
            DecaySource::Solver { spec, .. } => spec.dim_n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFitResult {
    pub alpha: FullMultiIndex,
    pub h: u32,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    pub window: (f64, f64),
    /// `-q_h(|alpha|)`.
    pub target: HalfInt,
    pub samples: Vec<(f64, f64)>,
}

impl DecayFitResult {
    /// `slope - target`; nonpositive values meet the bound.
    pub fn excess(&self) -> f64 {
        self.slope - self.target.to_f64()
    }

    pub fn compliant(&self, tol: f64) -> bool {
        self.slope <= self.target.to_f64() + tol
    }

    pub fn samples_csv(&self) -> String {
        let mut s = String::from("t,sup_abs_derivative\n");
        for (t, v) in &self.samples {
            let _ = writeln!(s, "{t:.12e},{v:.12e}");
        }
        s
    }

    pub fn to_kv(&self) -> Vec<(String, String)> {
        let a: Vec<String> = self.alpha.0.iter().map(|v| v.to_string()).collect();
        vec![
            ("alpha".into(), a.join(" ")),
            ("h".into(), self.h.to_string()),
            ("slope".into(), format!("{:.6}", self.slope)),
            ("intercept".into(), format!("{:.6}", self.intercept)),
            ("residual".into(), format!("{:.6e}", self.residual)),
            ("t_lo".into(), format!("{}", self.window.0)),
            ("t_hi".into(), format!("{}", self.window.1)),
            ("target".into(), format!("{:.6}", self.target.to_f64())),
            ("excess".into(), format!("{:.6}", self.excess())),
        ]
    }
}

/// `n` log-spaced times from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || n < 2 {
        return Err(arg_err("log grid needs 0 < lo < hi and n >= 2"));
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Least-squares line through `(x, y)`: `(slope, intercept, rms residual)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(arg_err("least squares needs at least two matching points"));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(arg_err("least squares needs distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    Ok((slope, intercept, (rss / n as f64).sqrt()))
}

fn check_times(t_grid: &[f64]) -> Result<()> {
    if t_grid.len() < 6 {
        return Err(arg_err(format!(
            "need at least 6 fit times, got {}",
            t_grid.len()
        )));
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t <= 0.5)) {
        return Err(arg_err("fit times must lie in (0, 0.5]"));
    }
    let ratios: Vec<f64> = t_grid.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios
        .iter()
        .any(|&r| !(r > 1.0) || (r / ratios[0] - 1.0).abs() > 1e-6)
    {
        return Err(arg_err("fit times must be increasing and log-spaced"));
    }
    Ok(())
}

/// `sup_probes |D^alpha T(t) f|` for every `t`.
pub fn derivative_sups(
    source: &DecaySource,
    alpha: &[u32],
    datum: &Datum,
    t_grid: &[f64],
    probes: &GridFunction,
) -> Result<Vec<f64>> {
    if alpha.len() != source.dim() || probes.dim() != source.dim() {
        return Err(Error::DimensionMismatch(
            "alpha, probes and operator dimensions differ".into(),
        ));
    }
    match source {
        DecaySource::Oracle {
            spec,
            quad,
            step_factor,
        } => {
            if !(*step_factor > 0.0) {
                return Err(arg_err("step factor must be positive"));
            }
            let mut out = Vec::with_capacity(t_grid.len());
            for &t in t_grid {
                let k = OUKernel::new(spec, t)?;
                let step = step_factor * linalg::lambda_min(&k.cov).max(0.0).sqrt();
                let mut sup = 0.0f64;
                for i in 0..probes.len() {
                    let x = probes.coords(i);
                    sup = sup.max(k.derivative(datum, &x, alpha, step, quad)?.abs());
                }
                out.push(sup);
            }
            Ok(out)
        }
        DecaySource::Solver { spec, cfg } => {
            let tr = semigroup_apply(spec, cfg, datum, t_grid)?;
            tr.snapshots
                .iter()
                .map(|u| {
                    let d = u.derivative_multi(alpha)?;
                    Ok(d.restrict(&probes.lo, &probes.hi)?.sup_norm())
                })
                .collect()
        }
    }
}

/// Fits `log sup |D^alpha u(t)|` against `log t`. In solver mode, times below
/// `4 spacing^2` are dropped before the fit.
pub fn fit_decay(
    source: &DecaySource,
    structure: &BlockStructure,
    alpha: &[u32],
    h: u32,
    datum: &Datum,
    t_grid: &[f64],
    probes: &GridFunction,
) -> Result<DecayFitResult> {
    check_times(t_grid)?;
    if structure.dim() != alpha.len() {
        return Err(Error::DimensionMismatch(
            "alpha does not match the block structure".into(),
        ));
    }
    let times: Vec<f64> = match source {
        DecaySource::Solver { cfg, .. } => {
            let floor = 4.0 * cfg.spacing * cfg.spacing;
            let kept: Vec<f64> = t_grid.iter().copied().filter(|&t| t >= floor).collect();
            if kept.len() < 6 {
                return Err(Error::Resolution(format!(
                    "only {} fit times lie above 4 spacing^2 = {floor}",
                    kept.len()
                )));
            }
            kept
        }
        DecaySource::Oracle { .. } => t_grid.to_vec(),
    };
    let sups = derivative_sups(source, alpha, datum, &times, probes)?;
    if sups.iter().all(|&s| s < ANNIHILATED_FLOOR) {
        return Err(Error::DerivativeAnnihilated(format!(
            "sup |D^{alpha:?} u(t)| < {ANNIHILATED_FLOOR:e} at every fit time"
        )));
    }
    if let Some(i) = sups.iter().position(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::NonFinite(format!(
            "derivative sup {} at t = {}",
            sups[i], times[i]
        )));
    }
    let xs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = sups.iter().map(|s| s.ln()).collect();
    let (slope, intercept, residual) = least_squares(&xs, &ys)?;
    let compressed = structure.compress(alpha);
    Ok(DecayFitResult {
        alpha: FullMultiIndex(alpha.to_vec()),
        h,
        slope,
        intercept,
        residual,
        window: (times[0], *times.last().expect("nonempty")),
        target: -qh_eval(&compressed, h),
        samples: times.into_iter().zip(sups).collect(),
    })
}
