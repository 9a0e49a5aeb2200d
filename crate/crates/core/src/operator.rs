//! Operator specifications `Tr(Q D^2) + <Bx, D> + <F, D>` and hypothesis checks.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{arg_err, dim_err, Error, Result};
use crate::linalg::{self, check_square};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

/// Log-log growth rate of the derivative/weight ratio above which a growth
/// bound is declared violated (a bounded ratio has asymptotic rate 0).
pub const GROWTH_RATE_LIMIT: f64 = 0.5;

/// Point-dependent matrix coefficient.
pub trait MatrixField: Send + Sync {
    fn eval(&self, x: &[f64]) -> DMatrix<f64>;
}

/// Point-dependent vector coefficient.
pub trait VectorField: Send + Sync {
    fn eval(&self, x: &[f64]) -> DVector<f64>;
}

impl<F> MatrixField for F
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        self(x)
    }
}

impl<F> VectorField for F
where
    F: Fn(&[f64]) -> DVector<f64> + Send + Sync,
{
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        self(x)
    }
}

/// Multivariate polynomial `sum coef * x^powers`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Polynomial {
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![(c, Vec::new())],
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(c, p)| {
                let mut v = *c;
                for (i, &k) in p.iter().enumerate() {
                    if k > 0 {
                        v *= x.get(i).copied().unwrap_or(0.0).powi(k as i32);
                    }
                }
                v
            })
            .sum()
    }
}

/// Symmetric matrix with polynomial entries; entries not listed are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialMatrix {
    pub size: usize,
    pub entries: Vec<(usize, usize, Polynomial)>,
}

impl MatrixField for PolynomialMatrix {
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.size, self.size);
        for (i, j, p) in &self.entries {
            let v = p.eval(x);
            m[(*i, *j)] = v;
            m[(*j, *i)] = v;
        }
        m
    }
}

/// Polynomial vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialVector {
    pub comps: Vec<Polynomial>,
}

impl VectorField for PolynomialVector {
    fn eval(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(self.comps.len(), self.comps.iter().map(|p| p.eval(x)))
    }
}

/// Matrix field tabulated on a tensor grid, multilinear in between and
/// clamped to the box outside.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedMatrix {
    pub size: usize,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub counts: Vec<usize>,
    /// Row-major over grid nodes (first axis slowest), each node holding
    /// `size * size` row-major entries.
    pub values: Vec<f64>,
}

impl TabulatedMatrix {
    pub fn validate(&self) -> Result<()> {
        let d = self.counts.len();
        if self.lo.len() != d || self.hi.len() != d {
            return Err(dim_err("tabulated bounds do not match counts"));
        }
        if self.counts.iter().any(|&c| c < 2) {
            return Err(arg_err("tabulated grid needs at least 2 nodes per axis"));
        }
        for k in 0..d {
            if !(self.hi[k] > self.lo[k]) {
                return Err(arg_err("tabulated box must have hi > lo"));
            }
        }
        let nodes: usize = self.counts.iter().product();
        if self.values.len() != nodes * self.size * self.size {
            return Err(dim_err(format!(
                "tabulated values: expected {} numbers, got {}",
                nodes * self.size * self.size,
                self.values.len()
            )));
        }
        Ok(())
    }
}

impl MatrixField for TabulatedMatrix {
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.counts.len();
        let ss = self.size * self.size;
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0; d];
        for k in 0..d {
            let xk = x.get(k).copied().unwrap_or(0.0);
            let h = (self.hi[k] - self.lo[k]) / (self.counts[k] - 1) as f64;
            let s = ((xk - self.lo[k]) / h).clamp(0.0, (self.counts[k] - 1) as f64);
            let i = (s.floor() as usize).min(self.counts[k] - 2);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        let mut out = vec![0.0; ss];
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut flat = 0usize;
            for k in 0..d {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat = flat * self.counts[k] + base[k] + bit;
            }
            if w == 0.0 {
                continue;
            }
            for e in 0..ss {
                out[e] += w * self.values[flat * ss + e];
            }
        }
        let m = DMatrix::from_row_slice(self.size, self.size, &out);
        linalg::symmetrize(&m)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConstMatrix(DMatrix<f64>);

impl MatrixField for ConstMatrix {
    fn eval(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ConstVector(DVector<f64>);

impl VectorField for ConstVector {
    fn eval(&self, _x: &[f64]) -> DVector<f64> {
        self.0.clone()
    }
}

/// `(Q(.), B, F(.))` with `Q` acting on the first `p0` coordinates.
#[derive(Clone)]
pub struct OperatorSpec {
    pub dim_n: usize,
    pub p0: usize,
    pub drift_b: DMatrix<f64>,
    pub q0: Arc<dyn MatrixField>,
    pub f: Option<Arc<dyn VectorField>>,
    pub nu_floor: f64,
    /// Set when `Q` is constant, enabling closed-form paths.
    pub q_const: Option<DMatrix<f64>>,
}

impl fmt::Debug for OperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorSpec")
            .field("dim_n", &self.dim_n)
            .field("p0", &self.p0)
            .field("drift_b", &self.drift_b)
            .field("nu_floor", &self.nu_floor)
            .field("q_const", &self.q_const)
            .field("has_f", &self.f.is_some())
            .finish()
    }
}

impl OperatorSpec {
    pub fn new(
        dim_n: usize,
        p0: usize,
        drift_b: DMatrix<f64>,
        q0: Arc<dyn MatrixField>,
        f: Option<Arc<dyn VectorField>>,
        nu_floor: f64,
    ) -> Result<Self> {
        if dim_n == 0 {
            return Err(arg_err("dimension must be positive"));
        }
        if p0 == 0 || p0 > dim_n {
            return Err(arg_err(format!("p0 must lie in 1..={dim_n}, got {p0}")));
        }
        if drift_b.nrows() != dim_n || drift_b.ncols() != dim_n {
            return Err(dim_err(format!(
                "B must be {dim_n}x{dim_n}, got {}x{}",
                drift_b.nrows(),
                drift_b.ncols()
            )));
        }
        if !(nu_floor > 0.0) {
            return Err(arg_err("nu_floor must be positive"));
        }
        let origin = vec![0.0; dim_n];
        let q = q0.eval(&origin);
        if q.nrows() != p0 || q.ncols() != p0 {
            return Err(dim_err(format!(
                "Q must be {p0}x{p0}, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if let Some(ff) = &f {
            let v = ff.eval(&origin);
            if v.len() != p0 {
                return Err(dim_err(format!(
                    "F must have {p0} components, got {}",
                    v.len()
                )));
            }
        }
        Ok(Self {
            dim_n,
            p0,
            drift_b,
            q0,
            f,
            nu_floor,
            q_const: None,
        })
    }

    /// Constant `p0 x p0` diffusion block.
    pub fn constant(q0: DMatrix<f64>, drift_b: DMatrix<f64>, nu_floor: f64) -> Result<Self> {
        let p0 = check_square(&q0, "Q")?;
        let n = drift_b.nrows();
        let mut s = Self::new(
            n,
            p0,
            drift_b,
            Arc::new(ConstMatrix(q0.clone())),
            None,
            nu_floor,
        )?;
        s.q_const = Some(q0);
        Ok(s)
    }

    pub fn with_constant_drift_f(mut self, f: DVector<f64>) -> Result<Self> {
        if f.len() != self.p0 {
            return Err(dim_err("F length must equal p0"));
        }
        self.f = Some(Arc::new(ConstVector(f)));
        Ok(self)
    }

    /// The Kolmogorov operator `D_{x0 x0} + x0 D_{x1}`.
    pub fn kolmogorov() -> Self {
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        Self::constant(DMatrix::identity(1, 1), b, 1.0).expect("valid spec")
    }

    pub fn q_block(&self, x: &[f64]) -> DMatrix<f64> {
        self.q0.eval(x)
    }

    /// `Q(x)` embedded as an `N x N` matrix.
    pub fn q_full(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim_n, self.dim_n);
        let q = self.q0.eval(x);
        m.view_mut((0, 0), (self.p0, self.p0)).copy_from(&q);
        m
    }

    pub fn f_full(&self, x: &[f64]) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim_n);
        if let Some(f) = &self.f {
            let fx = f.eval(x);
            v.rows_mut(0, self.p0).copy_from(&fx);
        }
        v
    }

    pub fn is_degenerate(&self) -> bool {
        self.p0 < self.dim_n
    }

    pub fn to_constant(&self) -> Option<ConstantOperatorSpec> {
        let q = self.q_const.as_ref()?;
        let mut full = DMatrix::zeros(self.dim_n, self.dim_n);
        full.view_mut((0, 0), (self.p0, self.p0)).copy_from(q);
        Some(ConstantOperatorSpec {
            dim_n: self.dim_n,
            q_const: full,
            drift_b: self.drift_b.clone(),
        })
    }
}

/// Constant-coefficient Ornstein–Uhlenbeck data `Tr(Q D^2) + <Bx, D>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantOperatorSpec {
    pub dim_n: usize,
    pub q_const: DMatrix<f64>,
    pub drift_b: DMatrix<f64>,
}

impl ConstantOperatorSpec {
    pub fn new(q_const: DMatrix<f64>, drift_b: DMatrix<f64>) -> Result<Self> {
        let n = linalg::check_same_square(&q_const, &drift_b)?;
        if n == 0 {
            return Err(arg_err("dimension must be positive"));
        }
        if !linalg::is_symmetric(&q_const, SYMMETRY_TOL) {
            return Err(arg_err("Q must be symmetric"));
        }
        let lmin = linalg::lambda_min(&q_const);
        if lmin < -1e-12 {
            return Err(arg_err(format!(
                "Q must be PSD, smallest eigenvalue {lmin:e}"
            )));
        }
        Ok(Self {
            dim_n: n,
            q_const,
            drift_b,
        })
    }

    pub fn kolmogorov() -> Self {
        Self::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]),
        )
        .expect("valid spec")
    }

    /// Converts to an [`OperatorSpec`] when `Q` vanishes outside a leading
    /// positive-definite block.
    pub fn to_operator_spec(&self) -> Result<OperatorSpec> {
        let n = self.dim_n;
        let mut p0 = 0;
        for i in 0..n {
            for j in 0..n {
                if self.q_const[(i, j)].abs() > PSD_TOL {
                    p0 = p0.max(i + 1).max(j + 1);
                }
            }
        }
        if p0 == 0 {
            return Err(Error::ZeroPattern("Q vanishes identically".into()));
        }
        let block = self.q_const.view((0, 0), (p0, p0)).into_owned();
        let lmin = linalg::lambda_min(&block);
        if lmin <= PSD_TOL {
            return Err(Error::ZeroPattern(format!(
                "leading {p0}x{p0} block of Q is not positive definite (lambda_min {lmin:e}); \
                 adapt the basis first"
            )));
        }
        OperatorSpec::constant(block, self.drift_b.clone(), lmin)
    }
}

/// Operator in arbitrary orthonormal coordinates: `Q(x)` is `N x N` with a
/// kernel that has to be adapted before the block calculus applies.
#[derive(Clone)]
pub struct FullOperatorSpec {
    pub dim_n: usize,
    pub drift_b: DMatrix<f64>,
    pub q: Arc<dyn MatrixField>,
    pub f: Option<Arc<dyn VectorField>>,
    pub nu_floor: f64,
    pub q_const: Option<DMatrix<f64>>,
}

impl fmt::Debug for FullOperatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FullOperatorSpec")
            .field("dim_n", &self.dim_n)
            .field("drift_b", &self.drift_b)
            .field("nu_floor", &self.nu_floor)
            .field("q_const", &self.q_const)
            .finish()
    }
}

impl FullOperatorSpec {
    pub fn from_constant(c: &ConstantOperatorSpec, nu_floor: f64) -> Self {
        Self {
            dim_n: c.dim_n,
            drift_b: c.drift_b.clone(),
            q: Arc::new(ConstMatrix(c.q_const.clone())),
            f: None,
            nu_floor,
            q_const: Some(c.q_const.clone()),
        }
    }

    pub fn q_at(&self, x: &[f64]) -> DMatrix<f64> {
        self.q.eval(x)
    }
}

impl From<&OperatorSpec> for FullOperatorSpec {
    fn from(s: &OperatorSpec) -> Self {
        let inner = s.clone();
        let f = s.f.as_ref().map(|_| {
            let inner = s.clone();
            Arc::new(move |x: &[f64]| inner.f_full(x)) as Arc<dyn VectorField>
        });
        Self {
            dim_n: s.dim_n,
            drift_b: s.drift_b.clone(),
            q: Arc::new(move |x: &[f64]| inner.q_full(x)),
            f,
            nu_floor: s.nu_floor,
            q_const: s.to_constant().map(|c| c.q_const),
        }
    }
}

/// One named pass/fail check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub witness: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    /// Empirical growth constants keyed by label, e.g. `C_q[1]`.
    pub constants: Vec<(String, f64)>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn fmt_point(x: &[f64]) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(", "))
}

/// All partial derivatives of order `0..=2` at `x` by central differences.
/// Index 0 is the value, then first derivatives, then second derivatives
/// in the order (i, j) with i <= j.
fn fd_jet<T, G>(g: G, x: &[f64], h: f64) -> Vec<(usize, T)>
where
    G: Fn(&[f64]) -> T,
    T: Clone
        + std::ops::Sub<Output = T>
        + std::ops::Add<Output = T>
        + std::ops::Mul<f64, Output = T>,
{
    let n = x.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(i, s) in shifts {
            y[i] += s;
        }
        g(&y)
    };
    let mut out = Vec::new();
    let g0 = g(x);
    out.push((0, g0.clone()));
    for i in 0..n {
        let d = (at(&[(i, h)]) - at(&[(i, -h)])) * (0.5 / h);
        out.push((1, d));
    }
    for i in 0..n {
        for j in i..n {
            let d = if i == j {
                (at(&[(i, h)]) + at(&[(i, -h)]) - g0.clone() * 2.0) * (1.0 / (h * h))
            } else {
                (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                    + at(&[(i, -h), (j, -h)]))
                    * (0.25 / (h * h))
            };
            out.push((2, d));
        }
    }
    out
}

/// Growth rate of `ratios` against `ln(1 + |x|)`: least-squares slope of
/// the log ratio over the outer half of the samples.
fn growth_rate(samples: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|(rad, r)| ((1.0 + rad).ln(), r.ln()))
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let start = pts.len() / 2;
    let pts = &pts[start..];
    if pts.len() < 2 {
        return 0.0;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx < 1e-12 {
        return 0.0;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

/// Checks symmetry, the ellipticity floor, and the growth bounds on `Q` and
/// `F` (derivatives up to order 2) at every sample point.
///
/// `nu(x)` is `lambda_min(Q(x))`. The weight `|x|^{(1-k)^+}` is evaluated as
/// `(1 + |x|)^{(1-k)^+}` so constant coefficients pass at the origin. A growth
/// bound fails when the derivative/weight ratio is non-finite or grows in
/// `|x|` faster than [`GROWTH_RATE_LIMIT`] on a log-log scale.
pub fn validate_hypotheses(
    spec: &OperatorSpec,
    sample_points: &[Vec<f64>],
    fd_step: f64,
) -> Result<ValidationReport> {
    if sample_points.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(fd_step > 0.0) {
        return Err(arg_err("fd_step must be positive"));
    }
    let n = spec.dim_n;
    let p0 = spec.p0;
    let mut checks = Vec::new();
    let mut q_ratios: [Vec<(f64, f64)>; 3] = Default::default();
    let mut f_ratios: [Vec<(f64, f64)>; 3] = Default::default();

    for (idx, x) in sample_points.iter().enumerate() {
        if x.len() != n {
            return Err(dim_err(format!(
                "sample {idx} has {} coordinates, expected {n}",
                x.len()
            )));
        }
        let q = spec.q0.eval(x);
        if q.nrows() != q.ncols() {
            return Err(dim_err(format!(
                "Q at sample {idx} is {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.nrows() != p0 {
            return Err(dim_err(format!("Q at sample {idx} is not {p0}x{p0}")));
        }
        let sym = linalg::is_symmetric(&q, SYMMETRY_TOL);
        checks.push(Check {
            name: format!("symmetry[{idx}]"),
            passed: sym,
            witness: format!("x = {}", fmt_point(x)),
        });
        let nu = linalg::lambda_min(&q);
        checks.push(Check {
            name: format!("ellipticity[{idx}]"),
            passed: nu >= spec.nu_floor - PSD_TOL,
            witness: format!(
                "x = {}, lambda_min = {nu:.6e}, floor = {:.6e}",
                fmt_point(x),
                spec.nu_floor
            ),
        });
        let rad = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let sqrt_nu = nu.max(0.0).sqrt();
        let jet = fd_jet(|y: &[f64]| spec.q0.eval(y), x, fd_step);
        let mut worst = [0.0f64; 3];
        for (order, m) in &jet {
            let weight = (1.0 + rad).powi((1 - *order as i32).max(0)) * sqrt_nu;
            let amax = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            let ratio = if weight > 0.0 {
                amax / weight
            } else {
                f64::INFINITY
            };
            let ratio = if amax == 0.0 { 0.0 } else { ratio };
            worst[*order] = worst[*order].max(ratio);
        }
        for k in 0..3 {
            q_ratios[k].push((rad, worst[k]));
        }
        if let Some(f) = &spec.f {
            let jet = fd_jet(
                |y: &[f64]| {
                    let v = f.eval(y);
                    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
                },
                x,
                fd_step,
            );
            let mut worst = [0.0f64; 3];
            for (order, v) in &jet {
                let amax = v.iter().fold(0.0f64, |a, e| a.max(e.abs()));
                let ratio = if amax == 0.0 {
                    0.0
                } else if sqrt_nu > 0.0 {
                    amax / sqrt_nu
                } else {
                    f64::INFINITY
                };
                worst[*order] = worst[*order].max(ratio);
            }
            for k in 0..3 {
                f_ratios[k].push((rad, worst[k]));
            }
        }
    }

    let mut constants = Vec::new();
    let mut growth = |label: &str, ratios: &[(f64, f64)], checks: &mut Vec<Check>| {
        let cmax = ratios.iter().fold(0.0f64, |a, r| a.max(r.1));
        let rate = growth_rate(ratios);
        let ok = cmax.is_finite() && rate <= GROWTH_RATE_LIMIT;
        constants.push((label.to_string(), cmax));
        checks.push(Check {
            name: format!("growth {label}"),
            passed: ok,
            witness: format!("max ratio = {cmax:.6e}, log-log growth rate = {rate:.3}"),
        });
    };
    for k in 0..3 {
        growth(&format!("C_q[{k}]"), &q_ratios[k], &mut checks);
    }
    if spec.f.is_some() {
        for k in 0..3 {
            growth(&format!("C_F[{k}]"), &f_ratios[k], &mut checks);
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport {
        checks,
        constants,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Compares `Tr(QA)` with `lambda_min(Q_0) Tr(A_1)`, where `Q_0` and `A_1` are
/// the leading `m x m` blocks.
pub fn trace_inequality_check(
    q_mat: &DMatrix<f64>,
    a_mat: &DMatrix<f64>,
    m: usize,
) -> Result<TraceInequality> {
    let n = linalg::check_same_square(q_mat, a_mat)?;
    if m == 0 || m > n {
        return Err(arg_err(format!("m must lie in 1..={n}")));
    }
    for i in 0..n {
        for j in 0..n {
            if i.max(j) >= m && q_mat[(i, j)].abs() > SYMMETRY_TOL {
                return Err(Error::ZeroPattern(format!(
                    "q[{i}][{j}] = {} outside the leading {m}x{m} block",
                    q_mat[(i, j)]
                )));
            }
        }
    }
    let q0 = q_mat.view((0, 0), (m, m)).into_owned();
    let lmin = linalg::lambda_min(&q0);
    if lmin <= 0.0 {
        return Err(Error::ZeroPattern(format!(
            "leading block not positive definite (lambda_min {lmin:e})"
        )));
    }
    let lhs = (q_mat * a_mat).trace();
    let rhs = lmin * a_mat.view((0, 0), (m, m)).trace();
    Ok(TraceInequality {
        lhs,
        rhs,
        holds: lhs >= rhs - 1e-10,
    })
}
