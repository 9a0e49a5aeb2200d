//! Finite-difference θ-scheme for `D_t u = A_ε u` on `[-R, R]^N` with zero
//! Dirichlet data, where `A_ε = A + ε sum_{i >= p0} D_ii`.

use std::sync::Arc;

use crate::error::{arg_err, Error, Result};
use crate::grid::GridFunction;
use crate::operator::OperatorSpec;
use crate::ou::Datum;
use crate::sparse::{bicgstab, Csr, Ilu0, SolveStats};

pub const MAX_SOLVER_DIM: usize = 3;

/// When first-order terms switch from central to one-sided differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Upwind {
    /// Where the cell Péclet number `|b_i| h / (2 nu_i)` exceeds 1, with total
    /// diffusion `max(nu_i, |b_i| h / 2)`.
    #[default]
    Auto,
    Never,
    /// Classical one-sided drift on top of the full diffusion.
    Always,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub radius: f64,
    pub spacing: f64,
    pub t_final: f64,
    pub dt: f64,
    /// Implicitness weight in `[1/2, 1]`.
    pub theta: f64,
    /// Leading steps taken with `theta = 1`.
    pub startup_steps: usize,
    /// Relative residual for each linear solve.
    pub tol: f64,
    pub max_iter: usize,
    pub upwind: Upwind,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.02,
            radius: 6.0,
            spacing: 0.075,
            t_final: 0.5,
            dt: 0.005,
            theta: 1.0,
            startup_steps: 0,
            tol: 1e-10,
            max_iter: 2000,
            upwind: Upwind::Auto,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(arg_err(format!(
                "epsilon must lie in [0, 1], got {}",
                self.epsilon
            )));
        }
        for (name, v) in [
            ("radius", self.radius),
            ("spacing", self.spacing),
            ("dt", self.dt),
            ("t_final", self.t_final),
            ("tol", self.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(arg_err(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(arg_err(format!(
                "theta must lie in [1/2, 1], got {}",
                self.theta
            )));
        }
        if self.nodes_per_axis() < 5 {
            return Err(arg_err("grid needs at least 5 nodes per axis"));
        }
        Ok(())
    }

    pub fn nodes_per_axis(&self) -> usize {
        (2.0 * self.radius / self.spacing).round() as usize + 1
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    pub fn template(&self, dim: usize) -> Result<GridFunction> {
        let n = self.nodes_per_axis();
        GridFunction::new(
            vec![-self.radius; dim],
            vec![self.radius; dim],
            vec![n; dim],
            vec![0.0; n.pow(dim as u32)],
        )
    }
}

/// Spatial operator restricted to the interior nodes.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub template: GridFunction,
    /// Flat grid index of every unknown.
    pub interior: Vec<usize>,
    pub a: Csr,
    /// Number of (node, axis) pairs using one-sided differences.
    pub upwinded: usize,
    /// Whether every off-diagonal entry of `A` is nonnegative.
    pub monotone: bool,
}

impl Discretization {
    pub fn new(spec: &OperatorSpec, cfg: &SolveConfig) -> Result<Self> {
        cfg.validate()?;
        let dim = spec.dim_n;
        if dim > MAX_SOLVER_DIM {
            return Err(arg_err(format!(
                "solver supports N <= {MAX_SOLVER_DIM}, got {dim}"
            )));
        }
        let template = cfg.template(dim)?;
        let strides = template.strides();
        let h = template.spacing.clone();
        let mut unknown = vec![usize::MAX; template.len()];
        let mut interior = Vec::new();
        for i in 0..template.len() {
            if !template.is_boundary(i) {
                unknown[i] = interior.len();
                interior.push(i);
            }
        }
        let mut rows = Vec::with_capacity(interior.len());
        let mut upwinded = 0;
        let mut x = vec![0.0; dim];
        let xv = |x: &[f64]| nalgebra::DVector::from_column_slice(x);
        for &g in &interior {
            template.coords_into(g, &mut x);
            let q = spec.q_full(&x);
            let b = &spec.drift_b * xv(&x) + spec.f_full(&x);
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(1 + 2 * dim + 4 * dim);
            let mut diag = 0.0;
            let push = |off: isize, v: f64, row: &mut Vec<(usize, f64)>| {
                let nb = (g as isize + off) as usize;
                if unknown[nb] != usize::MAX {
                    row.push((unknown[nb], v));
                }
            };
            for i in 0..dim {
                let nu = q[(i, i)] + if i >= spec.p0 { cfg.epsilon } else { 0.0 };
                let si = strides[i] as isize;
                let c2 = nu / (h[i] * h[i]);
                let bi = b[i];
                let pe = if nu > 0.0 {
                    bi.abs() * h[i] / (2.0 * nu)
                } else {
                    f64::INFINITY
                };
                if cfg.upwind == Upwind::Auto && pe > 1.0 {
                    // diffusion |b| h / 2 >= nu: the downwind weight vanishes
                    upwinded += 1;
                    let c = bi.abs() / h[i];
                    push(if bi > 0.0 { si } else { -si }, c, &mut row);
                    diag -= c;
                    continue;
                }
                push(si, c2, &mut row);
                push(-si, c2, &mut row);
                diag -= 2.0 * c2;
                if bi == 0.0 {
                    continue;
                }
                if cfg.upwind == Upwind::Always {
                    upwinded += 1;
                    let c = bi.abs() / h[i];
                    push(if bi > 0.0 { si } else { -si }, c, &mut row);
                    diag -= c;
                } else {
                    let c = bi / (2.0 * h[i]);
                    push(si, c, &mut row);
                    push(-si, -c, &mut row);
                }
            }
            for i in 0..dim {
                for j in (i + 1)..dim {
                    let qij = q[(i, j)];
                    if qij == 0.0 {
                        continue;
                    }
                    let c = 2.0 * qij / (4.0 * h[i] * h[j]);
                    let (si, sj) = (strides[i] as isize, strides[j] as isize);
                    push(si + sj, c, &mut row);
                    push(-si - sj, c, &mut row);
                    push(si - sj, -c, &mut row);
                    push(-si + sj, -c, &mut row);
                }
            }
            row.push((unknown[g], diag));
            rows.push(row);
        }
        let a = Csr::from_rows(rows);
        let monotone = (0..a.n)
            .all(|r| (a.row_ptr[r]..a.row_ptr[r + 1]).all(|k| a.cols[k] == r || a.vals[k] >= 0.0));
        Ok(Self {
            template,
            interior,
            a,
            upwinded,
            monotone,
        })
    }

    pub fn unknowns(&self) -> usize {
        self.interior.len()
    }

    /// Interior values of a grid function on the solver grid.
    pub fn restrict(&self, u: &GridFunction) -> Result<Vec<f64>> {
        if u.counts != self.template.counts || u.lo != self.template.lo || u.hi != self.template.hi
        {
            return Err(Error::DimensionMismatch(
                "grid does not match the solver grid".into(),
            ));
        }
        Ok(self.interior.iter().map(|&g| u.values[g]).collect())
    }

    pub fn sample(&self, datum: &Datum) -> Vec<f64> {
        let mut x = vec![0.0; self.template.dim()];
        self.interior
            .iter()
            .map(|&g| {
                self.template.coords_into(g, &mut x);
                datum.eval(&x)
            })
            .collect()
    }

    pub fn extend(&self, v: &[f64]) -> GridFunction {
        let mut g = self.template.clone();
        for (k, &gi) in self.interior.iter().enumerate() {
            g.values[gi] = v[k];
        }
        g
    }
}

/// Source term `g(t, x)` added to the right side.
pub type Source = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

struct Implicit {
    theta: f64,
    m: Csr,
    ilu: Ilu0,
}

/// Repeated θ-steps sharing one factorization.
pub struct Stepper {
    pub disc: Discretization,
    pub cfg: SolveConfig,
    main: Implicit,
    startup: Option<Implicit>,
    source: Option<Source>,
    pub steps_taken: usize,
    pub iterations: usize,
    scratch: Vec<f64>,
}

impl Stepper {
    pub fn new(spec: &OperatorSpec, cfg: &SolveConfig) -> Result<Self> {
        let disc = Discretization::new(spec, cfg)?;
        let build = |theta: f64| -> Result<Implicit> {
            let m = disc.a.shifted(1.0, -theta * cfg.dt);
            let ilu = Ilu0::new(&m)?;
            Ok(Implicit { theta, m, ilu })
        };
        let main = build(cfg.theta)?;
        let startup = if cfg.startup_steps > 0 && cfg.theta < 1.0 {
            Some(build(1.0)?)
        } else {
            None
        };
        let n = disc.unknowns();
        Ok(Self {
            disc,
            cfg: *cfg,
            main,
            startup,
            source: None,
            steps_taken: 0,
            iterations: 0,
            scratch: vec![0.0; n],
        })
    }

    pub fn with_source(mut self, source: Source) -> Self {
        self.source = Some(source);
        self
    }

    /// Advances the interior vector `u` by one step of length `dt`.
    pub fn step(&mut self, u: &mut [f64]) -> Result<SolveStats> {
        let use_startup = self.steps_taken < self.cfg.startup_steps && self.startup.is_some();
        let imp = if use_startup {
            self.startup.as_ref().expect("startup factorization")
        } else {
            &self.main
        };
        let dt = self.cfg.dt;
        let theta = imp.theta;
        let n = u.len();
        let mut rhs = u.to_vec();
        if theta < 1.0 {
            self.disc.a.matvec(u, &mut self.scratch);
            for i in 0..n {
                rhs[i] += (1.0 - theta) * dt * self.scratch[i];
            }
        }
        if let Some(src) = &self.source {
            let t0 = self.steps_taken as f64 * dt;
            let mut x = vec![0.0; self.disc.template.dim()];
            for (k, &g) in self.disc.interior.iter().enumerate() {
                self.disc.template.coords_into(g, &mut x);
                rhs[k] += dt * (theta * src(t0 + dt, &x) + (1.0 - theta) * src(t0, &x));
            }
        }
        let stats = bicgstab(&imp.m, &imp.ilu, &rhs, u, self.cfg.tol, self.cfg.max_iter)
            .map_err(|e| Error::SolveFailed(format!("step {}: {e}", self.steps_taken + 1)))?;
        if let Some(k) = u.iter().position(|v| !v.is_finite()) {
            let x = self.disc.template.coords(self.disc.interior[k]);
            return Err(Error::NonFinite(format!(
                "step {} produced a non-finite value at {x:?}",
                self.steps_taken + 1
            )));
        }
        self.steps_taken += 1;
        self.iterations += stats.iterations;
        Ok(stats)
    }
}

/// One step from a grid function with zero boundary values.
pub fn step_dirichlet(
    spec: &OperatorSpec,
    cfg: &SolveConfig,
    u: &GridFunction,
) -> Result<GridFunction> {
    let mut st = Stepper::new(spec, cfg)?;
    let mut v = st.disc.restrict(u)?;
    if let Some(i) = (0..u.len()).find(|&i| u.is_boundary(i) && u.values[i] != 0.0) {
        return Err(arg_err(format!(
            "boundary value at {:?} is {}, expected 0",
            u.coords(i),
            u.values[i]
        )));
    }
    st.step(&mut v)?;
    Ok(st.disc.extend(&v))
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub snapshots: Vec<GridFunction>,
    pub initial_sup: f64,
    /// Largest `||u(t_k)||_inf` over all steps.
    pub max_sup: f64,
    /// Smallest nodal value over all steps.
    pub min_value: f64,
    pub iterations: usize,
    pub upwinded: usize,
    pub monotone: bool,
}

fn snapshot_steps(times: &[f64], cfg: &SolveConfig) -> Result<Vec<usize>> {
    let total = cfg.steps();
    times
        .iter()
        .map(|&t| {
            if !(t >= 0.0) {
                return Err(arg_err(format!("snapshot time {t} is negative")));
            }
            let k = (t / cfg.dt).round() as usize;
            if k > total {
                return Err(arg_err(format!("snapshot time {t} is beyond t_final")));
            }
            Ok(k)
        })
        .collect()
}

/// `u(t) = T_ε(t) f` on the solver grid, with snapshots at the steps nearest
/// to `snapshot_times`. Aborts when the maximum principle fails by more than
/// `10 tol max(1, ||f||)`.
pub fn semigroup_apply(
    spec: &OperatorSpec,
    cfg: &SolveConfig,
    datum: &Datum,
    snapshot_times: &[f64],
) -> Result<Trajectory> {
    let mut st = Stepper::new(spec, cfg)?;
    let wanted = snapshot_steps(snapshot_times, cfg)?;
    let last = wanted.iter().copied().max().unwrap_or(0);
    let mut u = st.disc.sample(datum);
    if let Some(i) = u.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("datum at node {i}")));
    }
    let f_sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let slack = 10.0 * cfg.tol * f_sup.max(1.0);
    let mut out_t = Vec::new();
    let mut out_s = Vec::new();
    let mut max_sup = f_sup;
    let mut min_value = u.iter().copied().fold(f64::INFINITY, f64::min).min(0.0);
    let record = |k: usize,
                  u: &[f64],
                  out_t: &mut Vec<f64>,
                  out_s: &mut Vec<GridFunction>,
                  d: &Discretization| {
        for (w, &kk) in wanted.iter().enumerate() {
            if kk == k && out_t.len() == w {
                out_t.push(k as f64 * cfg.dt);
                out_s.push(d.extend(u));
            }
        }
    };
    // snapshots are emitted in the order requested; require sorted input
    if wanted.windows(2).any(|w| w[1] < w[0]) {
        return Err(arg_err("snapshot times must be sorted"));
    }
    record(0, &u, &mut out_t, &mut out_s, &st.disc);
    for k in 1..=last {
        st.step(&mut u)?;
        let sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        max_sup = max_sup.max(sup);
        min_value = min_value.min(u.iter().copied().fold(f64::INFINITY, f64::min));
        if sup > f_sup + slack {
            return Err(Error::MaxPrinciple(format!(
                "step {k} (t = {}): sup {sup:e} exceeds initial sup {f_sup:e}",
                k as f64 * cfg.dt
            )));
        }
        record(k, &u, &mut out_t, &mut out_s, &st.disc);
    }
    Ok(Trajectory {
        times: out_t,
        snapshots: out_s,
        initial_sup: f_sup,
        max_sup,
        min_value,
        iterations: st.iterations,
        upwinded: st.disc.upwinded,
        monotone: st.disc.monotone,
    })
}

#[derive(Debug, Clone)]
pub struct ResolventResult {
    pub grid: GridFunction,
    pub lambda: f64,
    pub horizon: f64,
    /// `e^{-λT} ||f||_inf / λ`.
    pub tail_bound: f64,
    pub f_sup: f64,
}

/// `R(λ, A_ε) f ≈ int_0^T e^{-λt} u(t) dt`, integrating the piecewise-linear
/// interpolant of the time steps exactly against `e^{-λt}`.
pub fn resolvent_apply(
    spec: &OperatorSpec,
    cfg: &SolveConfig,
    datum: &Datum,
    lambda: f64,
) -> Result<ResolventResult> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(arg_err(format!("lambda must be positive, got {lambda}")));
    }
    let mut st = Stepper::new(spec, cfg)?;
    let mut u = st.disc.sample(datum);
    let f_sup = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let dt = cfg.dt;
    let s = lambda * dt;
    let em = (-s).exp();
    let phi = if s < 1e-8 {
        1.0 - 0.5 * s
    } else {
        (1.0 - em) / s
    };
    let w0 = (1.0 - phi) / lambda;
    let w1 = (phi - em) / lambda;
    let mut acc = vec![0.0; u.len()];
    let steps = cfg.steps();
    let mut prev = u.clone();
    for k in 0..steps {
        st.step(&mut u)?;
        let e = (-lambda * k as f64 * dt).exp();
        for i in 0..acc.len() {
            acc[i] += e * (w0 * prev[i] + w1 * u[i]);
        }
        prev.copy_from_slice(&u);
    }
    let horizon = steps as f64 * dt;
    Ok(ResolventResult {
        grid: st.disc.extend(&acc),
        lambda,
        horizon,
        tail_bound: (-lambda * horizon).exp() * f_sup / lambda,
        f_sup,
    })
}

/// Solves `(λ - A_ε) u = f` directly on the solver grid.
pub fn resolvent_direct(
    spec: &OperatorSpec,
    cfg: &SolveConfig,
    datum: &Datum,
    lambda: f64,
) -> Result<GridFunction> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(arg_err(format!("lambda must be positive, got {lambda}")));
    }
    let disc = Discretization::new(spec, cfg)?;
    let m = disc.a.shifted(lambda, -1.0);
    let ilu = Ilu0::new(&m)?;
    let f = disc.sample(datum);
    let mut u: Vec<f64> = f.iter().map(|v| v / lambda).collect();
    bicgstab(&m, &ilu, &f, &mut u, cfg.tol, cfg.max_iter)?;
    Ok(disc.extend(&u))
}

/// Sub-box `[-R/2, R/2]^N` of a solver-grid function.
pub fn interior_half_box(u: &GridFunction) -> Result<GridFunction> {
    let lo: Vec<f64> = u.lo.iter().map(|v| 0.5 * v).collect();
    let hi: Vec<f64> = u.hi.iter().map(|v| 0.5 * v).collect();
    u.restrict(&lo, &hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_stays_zero() {
        let spec = OperatorSpec::kolmogorov();
        let cfg = SolveConfig {
            spacing: 0.5,
            radius: 3.0,
            ..SolveConfig::default()
        };
        let z = cfg.template(2).unwrap();
        let u = step_dirichlet(&spec, &cfg, &z).unwrap();
        assert!(u.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kolmogorov_scheme_is_monotone() {
        let spec = OperatorSpec::kolmogorov();
        let cfg = SolveConfig {
            spacing: 0.25,
            radius: 3.0,
            ..SolveConfig::default()
        };
        let d = Discretization::new(&spec, &cfg).unwrap();
        assert!(d.monotone);
        assert!(d.upwinded > 0);
        let never = Discretization::new(
            &spec,
            &SolveConfig {
                upwind: Upwind::Never,
                ..cfg
            },
        )
        .unwrap();
        assert!(!never.monotone);
    }

    #[test]
    fn config_validation() {
        let bad = SolveConfig {
            theta: 0.3,
            ..SolveConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolveConfig {
            epsilon: 1.5,
            ..SolveConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(SolveConfig::default().nodes_per_axis(), 161);
    }
}
