//! TOML run configuration for the command-line tool.
//!
//! Unknown keys are rejected. Everything is validated before any computation.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::basis::{adapted_basis, BlockStructure};
use crate::error::{Error, Result};
use crate::exponents::SuiteBounds;
use crate::operator::{ConstantOperatorSpec, OperatorSpec};
use crate::ou::Datum;
use crate::solver::{SolveConfig, Upwind};
use crate::suites::RankSuiteConfig;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: Option<PathBuf>,
    pub operator: Option<OperatorConfig>,
    #[serde(default)]
    pub grid: GridConfig,
    pub analyze: Option<AnalyzeConfig>,
    pub verify: Option<VerifyConfig>,
    pub simulate: Option<SimulateConfig>,
    pub fit_decay: Option<FitDecayConfig>,
    pub schauder: Option<SchauderConfig>,
}

/// Constant coefficients, rows of `Q` and `B`; `f` is a constant drift on the
/// nondegenerate coordinates, used by the solver only.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub q: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub f: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum UpwindName {
    #[default]
    Auto,
    Never,
    Always,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub epsilon: f64,
    pub radius: f64,
    pub spacing: f64,
    pub dt: f64,
    pub theta: f64,
    pub startup_steps: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub upwind: UpwindName,
}

impl Default for GridConfig {
    fn default() -> Self {
        let s = SolveConfig::default();
        Self {
            epsilon: s.epsilon,
            radius: s.radius,
            spacing: s.spacing,
            dt: s.dt,
            theta: s.theta,
            startup_steps: s.startup_steps,
            tol: s.tol,
            max_iter: s.max_iter,
            upwind: UpwindName::Auto,
        }
    }
}

impl GridConfig {
    pub fn solve_config(&self, t_final: f64) -> Result<SolveConfig> {
        let c = SolveConfig {
            epsilon: self.epsilon,
            radius: self.radius,
            spacing: self.spacing,
            t_final,
            dt: self.dt,
            theta: self.theta,
            startup_steps: self.startup_steps,
            tol: self.tol,
            max_iter: self.max_iter,
            upwind: match self.upwind {
                UpwindName::Auto => Upwind::Auto,
                UpwindName::Never => Upwind::Never,
                UpwindName::Always => Upwind::Always,
            },
        };
        c.validate().map_err(|e| cfg_err(format!("[grid]: {e}")))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub probe_times: Vec<f64>,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            probe_times: vec![2.0, 4.0],
        }
    }
}

/// Explicit bounds table: all three keys are required once the table exists.
#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub r_max: usize,
    pub k_max: u32,
    pub h_max: u32,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub bounds: Option<BoundsConfig>,
    pub rank_levels: u32,
    pub rank_r_max: usize,
    pub rank_max_block: usize,
    pub rank_draws: usize,
    pub bernstein_k_max: u32,
    pub bernstein_r_max: usize,
    pub trace_samples: usize,
    pub trace_n_max: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let r = RankSuiteConfig::default();
        Self {
            bounds: None,
            rank_levels: r.levels,
            rank_r_max: r.r_max,
            rank_max_block: r.max_block,
            rank_draws: r.draws,
            bernstein_k_max: 4,
            bernstein_r_max: 3,
            trace_samples: 200,
            trace_n_max: 6,
        }
    }
}

impl VerifyConfig {
    pub fn suite_bounds(&self) -> Result<SuiteBounds> {
        let b = self
            .bounds
            .map_or_else(SuiteBounds::default, |b| SuiteBounds {
                r_max: b.r_max,
                k_max: b.k_max,
                h_max: b.h_max,
            });
        b.validate()
            .map_err(|e| cfg_err(format!("[verify.bounds]: {e}")))?;
        Ok(b)
    }

    pub fn rank_config(&self) -> Result<RankSuiteConfig> {
        if self.rank_levels == 0 || self.rank_draws == 0 || self.rank_max_block == 0 {
            return Err(cfg_err(
                "[verify]: rank_levels, rank_draws and rank_max_block must be positive",
            ));
        }
        if self.rank_levels > 4 || self.rank_r_max > 4 || self.rank_max_block > 3 {
            return Err(cfg_err(
                "[verify]: rank suite limited to levels <= 4, r <= 4, blocks <= 3",
            ));
        }
        Ok(RankSuiteConfig {
            levels: self.rank_levels,
            r_max: self.rank_r_max,
            max_block: self.rank_max_block,
            draws: self.rank_draws,
            tol: 1e-8,
        })
    }

    fn validate(&self) -> Result<()> {
        self.suite_bounds()?;
        self.rank_config()?;
        if self.bernstein_k_max == 0 || self.bernstein_r_max == 0 {
            return Err(cfg_err("[verify]: Bernstein bounds must be positive"));
        }
        if self.bernstein_k_max > 6 || self.bernstein_r_max > 4 {
            return Err(cfg_err(
                "[verify]: Bernstein suite limited to k <= 6, r <= 4",
            ));
        }
        if self.trace_samples == 0 || self.trace_n_max == 0 {
            return Err(cfg_err("[verify]: trace suite bounds must be positive"));
        }
        Ok(())
    }
}

/// Initial data, in adapted coordinates.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatumConfig {
    /// `exp(-|y - c|^2 / (2 w^2))`.
    Gaussian {
        #[serde(default)]
        center: Option<Vec<f64>>,
        width: f64,
    },
    /// `1 / (1 + |y|^2 / s^2)`.
    Lorentzian {
        scale: f64,
    },
    /// `sin(<a, y> + phase)`.
    Sine {
        direction: Vec<f64>,
        #[serde(default)]
        phase: f64,
    },
    /// `clamp(<a, y> / delta, -1, 1)`.
    ClampRidge {
        direction: Vec<f64>,
        delta: f64,
    },
    /// `tanh(<a, y> / s)`.
    TanhRidge {
        direction: Vec<f64>,
        scale: f64,
    },
    Constant {
        value: f64,
    },
}

fn check_direction(a: &[f64], dim: usize) -> Result<DVector<f64>> {
    if a.len() != dim {
        return Err(cfg_err(format!(
            "datum direction has {} entries, expected {dim}",
            a.len()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) || a.iter().all(|&v| v == 0.0) {
        return Err(cfg_err("datum direction must be finite and nonzero"));
    }
    Ok(DVector::from_column_slice(a))
}

fn positive(v: f64, name: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(cfg_err(format!("datum {name} must be positive, got {v}")))
    }
}

impl DatumConfig {
    pub fn to_datum(&self, dim: usize) -> Result<Datum> {
        Ok(match self {
            DatumConfig::Gaussian { center, width } => {
                let w = positive(*width, "width")?;
                let c = center.clone().unwrap_or_else(|| vec![0.0; dim]);
                if c.len() != dim {
                    return Err(cfg_err(format!(
                        "datum center has {} entries, expected {dim}",
                        c.len()
                    )));
                }
                Datum::general(move |y| {
                    let d2: f64 = y.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / (2.0 * w * w)).exp()
                })
            }
            DatumConfig::Lorentzian { scale } => {
                let s = positive(*scale, "scale")?;
                Datum::general(move |y| {
                    1.0 / (1.0 + y.iter().map(|v| v * v).sum::<f64>() / (s * s))
                })
            }
            DatumConfig::Sine { direction, phase } => {
                let a = check_direction(direction, dim)?;
                let p = *phase;
                Datum::ridge(a, move |s| (s + p).sin(), vec![])
            }
            DatumConfig::ClampRidge { direction, delta } => {
                let a = check_direction(direction, dim)?;
                Datum::clamp_ridge(a, positive(*delta, "delta")?)?
            }
            DatumConfig::TanhRidge { direction, scale } => {
                let a = check_direction(direction, dim)?;
                let s = positive(*scale, "scale")?;
                Datum::ridge(a, move |v| (v / s).tanh(), vec![])
            }
            DatumConfig::Constant { value } => {
                let v = *value;
                if !v.is_finite() {
                    return Err(cfg_err("constant datum must be finite"));
                }
                Datum::general(move |_| v)
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub times: Vec<f64>,
    pub datum: DatumConfig,
    /// Optional bound on the interior half-box distance to the exact kernel.
    pub oracle_tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    #[default]
    Oracle,
    Solver,
    Both,
}

fn default_h() -> u32 {
    0
}
fn default_t_min() -> f64 {
    0.02
}
fn default_t_max() -> f64 {
    0.3
}
fn default_points() -> usize {
    8
}
fn default_probe_half_width() -> f64 {
    1.0
}
fn default_probe_points() -> usize {
    11
}
fn default_step_factor() -> f64 {
    0.05
}
fn default_tolerance() -> f64 {
    0.15
}
fn default_true() -> bool {
    true
}
fn default_agreement() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FitDecayConfig {
    pub alpha: Vec<u32>,
    #[serde(default = "default_h")]
    pub h: u32,
    #[serde(default)]
    pub mode: FitMode,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_probe_half_width")]
    pub probe_half_width: f64,
    #[serde(default = "default_probe_points")]
    pub probe_points: usize,
    #[serde(default = "default_step_factor")]
    pub step_factor: f64,
    /// Allowed excess of the slope over the target.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Set to false for data that are not expected to saturate the rate.
    #[serde(default = "default_true")]
    pub check_target: bool,
    /// Allowed slope difference between oracle and solver in `both` mode.
    #[serde(default = "default_agreement")]
    pub agreement: f64,
    pub datum: DatumConfig,
}

impl FitDecayConfig {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.alpha.len() != dim {
            return Err(cfg_err(format!(
                "[fit_decay]: alpha has {} entries, operator dimension is {dim}",
                self.alpha.len()
            )));
        }
        if self.alpha.iter().all(|&a| a == 0) || self.alpha.iter().sum::<u32>() > 3 {
            return Err(cfg_err("[fit_decay]: alpha must have order 1, 2 or 3"));
        }
        if !(self.t_min > 0.0 && self.t_max > self.t_min && self.t_max <= 0.5) {
            return Err(cfg_err("[fit_decay]: need 0 < t_min < t_max <= 0.5"));
        }
        if self.points < 6 {
            return Err(cfg_err("[fit_decay]: at least 6 fit points are required"));
        }
        if !(self.probe_half_width > 0.0) || self.probe_points < 3 || self.probe_points.is_multiple_of(2) {
            return Err(cfg_err(
                "[fit_decay]: probe box needs positive width and an odd count >= 3",
            ));
        }
        if !(self.step_factor > 0.0 && self.tolerance >= 0.0 && self.agreement >= 0.0) {
            return Err(cfg_err(
                "[fit_decay]: step_factor, tolerance and agreement must be nonnegative",
            ));
        }
        self.datum.to_datum(dim)?;
        Ok(())
    }
}

fn default_theta() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    1.0
}
fn default_spread() -> f64 {
    3.0
}
fn default_horizon() -> f64 {
    25.0
}
fn default_resolvent_dt() -> f64 {
    0.05
}
fn default_schauder_data() -> Vec<DatumConfig> {
    vec![
        DatumConfig::Gaussian {
            center: None,
            width: 1.0,
        },
        DatumConfig::Gaussian {
            center: Some(vec![0.5, 0.0]),
            width: 0.7,
        },
        DatumConfig::Lorentzian { scale: 1.0 },
        DatumConfig::Gaussian {
            center: Some(vec![0.0, -0.5]),
            width: 1.3,
        },
        DatumConfig::Lorentzian { scale: 1.5 },
    ]
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum ResolventMethod {
    /// Sparse solve of `(lambda - A) u = f`.
    #[default]
    Direct,
    /// Laplace transform of the time-stepped semigroup.
    Quadrature,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SchauderConfig {
    #[serde(default)]
    pub method: ResolventMethod,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Time horizon of the resolvent quadrature; unused by the direct method.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Time step of the resolvent quadrature.
    #[serde(default = "default_resolvent_dt")]
    pub dt: f64,
    /// Largest allowed max/min ratio of the norm quotients.
    #[serde(default = "default_spread")]
    pub max_spread: f64,
    #[serde(default = "default_schauder_data")]
    pub data: Vec<DatumConfig>,
}

impl Default for SchauderConfig {
    fn default() -> Self {
        Self {
            method: ResolventMethod::Direct,
            theta: default_theta(),
            lambda: default_lambda(),
            horizon: default_horizon(),
            dt: default_resolvent_dt(),
            max_spread: default_spread(),
            data: default_schauder_data(),
        }
    }
}

impl OperatorConfig {
    fn matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>> {
        let n = rows.len();
        if n == 0 {
            return Err(cfg_err(format!("[operator]: {name} is empty")));
        }
        if n > 6 {
            return Err(cfg_err(format!("[operator]: dimension {n} exceeds 6")));
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(cfg_err(format!("[operator]: {name} must be square")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(cfg_err(format!(
                "[operator]: {name} has non-finite entries"
            )));
        }
        Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn constant_spec(&self) -> Result<ConstantOperatorSpec> {
        let q = Self::matrix(&self.q, "q")?;
        let b = Self::matrix(&self.b, "b")?;
        ConstantOperatorSpec::new(q, b).map_err(|e| cfg_err(format!("[operator]: {e}")))
    }
}

/// Operator rewritten in its adapted basis, ready for the numerical commands.
#[derive(Debug, Clone)]
pub struct AdaptedOperator {
    pub structure: BlockStructure,
    /// `(U* Q U, U* B U)`.
    pub constant: ConstantOperatorSpec,
    pub spec: OperatorSpec,
    pub has_f: bool,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(s).map_err(|e| cfg_err(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path)
            .map_err(|e| cfg_err(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&s)
    }

    fn validate(&self) -> Result<()> {
        let dim = match &self.operator {
            Some(op) => {
                let c = op.constant_spec()?;
                if let Some(f) = &op.f {
                    if f.iter().any(|v| !v.is_finite()) {
                        return Err(cfg_err("[operator]: f has non-finite entries"));
                    }
                }
                Some(c.dim_n)
            }
            None => None,
        };
        if let Some(a) = &self.analyze {
            if a.probe_times.is_empty()
                || a.probe_times.iter().any(|&t| !(t > 0.0 && t.is_finite()))
            {
                return Err(cfg_err(
                    "[analyze]: probe_times must be nonempty and positive",
                ));
            }
        }
        if let Some(v) = &self.verify {
            v.validate()?;
        }
        self.grid.solve_config(1.0)?;
        let need_dim = |section: &str| {
            dim.ok_or_else(|| cfg_err(format!("[{section}] requires an [operator] section")))
        };
        if let Some(s) = &self.simulate {
            let n = need_dim("simulate")?;
            if s.times.is_empty() || s.times.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
                return Err(cfg_err("[simulate]: times must be nonempty and positive"));
            }
            if s.times.windows(2).any(|w| w[1] <= w[0]) {
                return Err(cfg_err("[simulate]: times must be increasing"));
            }
            s.datum.to_datum(n)?;
        }
        if let Some(f) = &self.fit_decay {
            f.validate(need_dim("fit_decay")?)?;
        }
        if let Some(s) = &self.schauder {
            let n = need_dim("schauder")?;
            if !(s.theta > 0.0 && s.theta < 1.0) {
                return Err(cfg_err("[schauder]: theta must lie in (0, 1)"));
            }
            if !(s.lambda > 0.0
                && s.horizon > 0.0
                && s.dt > 0.0
                && s.dt < s.horizon
                && s.max_spread >= 1.0)
            {
                return Err(cfg_err(
                    "[schauder]: lambda, horizon, dt must be positive with dt < horizon, max_spread >= 1",
                ));
            }
            if s.data.is_empty() {
                return Err(cfg_err("[schauder]: data must be nonempty"));
            }
            for d in &s.data {
                d.to_datum(n)?;
            }
        }
        Ok(())
    }

    pub fn operator(&self) -> Result<&OperatorConfig> {
        self.operator
            .as_ref()
            .ok_or_else(|| cfg_err("an [operator] section is required"))
    }

    /// Adapted basis of the configured operator. Fails with
    /// [`Error::NotHypoelliptic`] when the nested spaces stall.
    pub fn adapted_operator(&self) -> Result<AdaptedOperator> {
        let op = self.operator()?;
        let c = op.constant_spec()?;
        let structure = adapted_basis(&c.q_const, &c.drift_b)?;
        let u = &structure.basis_u;
        let q = u.transpose() * &c.q_const * u;
        let q = (&q + q.transpose()) * 0.5;
        let b = u.transpose() * &c.drift_b * u;
        let constant = ConstantOperatorSpec::new(q, b)?;
        let mut spec = constant.to_operator_spec()?;
        if let Some(f) = &op.f {
            if f.len() != spec.p0 {
                return Err(cfg_err(format!(
                    "[operator]: f must have {} entries (rank of q)",
                    spec.p0
                )));
            }
            spec = spec.with_constant_drift_f(DVector::from_column_slice(f))?;
        }
        Ok(AdaptedOperator {
            structure,
            constant,
            spec,
            has_f: op.f.is_some(),
        })
    }
}
