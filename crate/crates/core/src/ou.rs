//! Exact Ornstein–Uhlenbeck semigroup for constant `Q`, `B`:
//! `T(t)f(x) = E f(e^{tB} x + Y)`, `Y ~ N(0, 2 Q_t)`.
//!
//! The factor 2 comes from the generator `Tr(Q D^2)` carrying no 1/2.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{arg_err, Error, Result};
use crate::grid::GridFunction;
use crate::kalman;
use crate::linalg;
use crate::operator::ConstantOperatorSpec;
use crate::quadrature::{gauss_hermite_normal, gauss_legendre};

pub type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type Profile = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Initial datum. Ridge data `g(<a, y>)` reduce to a one-dimensional integral.
#[derive(Clone)]
pub enum Datum {
    General(Evaluator),
    Ridge {
        direction: DVector<f64>,
        profile: Profile,
        /// Points where `profile` is not smooth.
        breakpoints: Vec<f64>,
    },
}

impl Datum {
    pub fn general<F: Fn(&[f64]) -> f64 + Send + Sync + 'static>(f: F) -> Self {
        Datum::General(Arc::new(f))
    }

    pub fn ridge<F: Fn(f64) -> f64 + Send + Sync + 'static>(
        direction: DVector<f64>,
        profile: F,
        breakpoints: Vec<f64>,
    ) -> Self {
        Datum::Ridge {
            direction,
            profile: Arc::new(profile),
            breakpoints,
        }
    }

    /// `clamp(<a, y> / delta, -1, 1)`: bounded, Lipschitz at scale `delta`.
    pub fn clamp_ridge(direction: DVector<f64>, delta: f64) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(arg_err("clamp width must be positive"));
        }
        Ok(Self::ridge(
            direction,
            move |s| (s / delta).clamp(-1.0, 1.0),
            vec![-delta, delta],
        ))
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        match self {
            Datum::General(f) => f(y),
            Datum::Ridge {
                direction, profile, ..
            } => profile(direction.iter().zip(y).map(|(a, b)| a * b).sum()),
        }
    }

    pub fn dim(&self) -> Option<usize> {
        match self {
            Datum::General(_) => None,
            Datum::Ridge { direction, .. } => Some(direction.len()),
        }
    }
}

impl std::fmt::Debug for Datum {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Datum::General(_) => write!(f, "Datum::General"),
            Datum::Ridge {
                direction,
                breakpoints,
                ..
            } => write!(
                f,
                "Datum::Ridge {{ direction: {:?}, breakpoints: {breakpoints:?} }}",
                direction.as_slice()
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadConfig {
    /// Gauss–Hermite order per axis for general data.
    pub order: usize,
    /// Ridge path: Gauss–Legendre points per panel.
    pub ridge_points: usize,
    /// Ridge path: largest panel width in standard deviations.
    pub ridge_panel: f64,
    /// Ridge path: integration range `[-cutoff, cutoff]` in standard deviations.
    pub ridge_cutoff: f64,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            order: 40,
            ridge_points: 20,
            ridge_panel: 0.5,
            ridge_cutoff: 10.0,
        }
    }
}

impl QuadConfig {
    fn validate(&self) -> Result<()> {
        if self.order < 2 {
            return Err(arg_err("quadrature order must be at least 2"));
        }
        if self.ridge_points < 2 || !(self.ridge_panel > 0.0) || !(self.ridge_cutoff > 0.0) {
            return Err(arg_err("invalid ridge quadrature parameters"));
        }
        Ok(())
    }
}

/// Relative floor on `lambda_min(Q_t)` below which the kernel is refused.
pub const GRAMIAN_REL_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct OUKernel {
    pub spec: ConstantOperatorSpec,
    pub t: f64,
    pub mean_map: DMatrix<f64>,
    /// `2 Q_t`.
    pub cov: DMatrix<f64>,
    pub cov_factor: DMatrix<f64>,
}

impl OUKernel {
    pub fn new(spec: &ConstantOperatorSpec, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(arg_err(format!("t must be positive, got {t}")));
        }
        let qt = kalman::gramian(&spec.q_const, &spec.drift_b, t)?;
        let lmin = linalg::lambda_min(&qt);
        let scale = qt.amax().max(f64::MIN_POSITIVE);
        if !(lmin > GRAMIAN_REL_FLOOR * scale) {
            return Err(Error::SingularGramian(lmin));
        }
        let cov = qt * 2.0;
        let cov_factor = linalg::psd_sqrt(&cov);
        Ok(Self {
            spec: spec.clone(),
            t,
            mean_map: linalg::expm(&(&spec.drift_b * t)),
            cov,
            cov_factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.spec.dim_n
    }

    pub fn mean(&self, x: &[f64]) -> DVector<f64> {
        &self.mean_map * DVector::from_column_slice(x)
    }

    fn check_point(&self, x: &[f64], datum: &Datum) -> Result<()> {
        if x.len() != self.dim() || datum.dim().is_some_and(|d| d != self.dim()) {
            return Err(Error::DimensionMismatch(format!(
                "point and datum must have dimension {}",
                self.dim()
            )));
        }
        Ok(())
    }

    /// `T(t)f(x)`.
    pub fn apply(&self, datum: &Datum, x: &[f64], quad: &QuadConfig) -> Result<f64> {
        quad.validate()?;
        self.check_point(x, datum)?;
        let v = match datum {
            Datum::General(f) => self.apply_tensor(f.as_ref(), x, quad.order),
            Datum::Ridge {
                direction,
                profile,
                breakpoints,
            } => {
                let mu = direction.dot(&self.mean(x));
                let sigma = (direction.transpose() * &self.cov * direction)[(0, 0)]
                    .max(0.0)
                    .sqrt();
                ridge_expectation(profile.as_ref(), breakpoints, mu, sigma, quad)
            }
        };
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("T(t)f at {x:?}")));
        }
        Ok(v)
    }

    fn apply_tensor(
        &self,
        f: &(dyn Fn(&[f64]) -> f64 + Send + Sync),
        x: &[f64],
        order: usize,
    ) -> f64 {
        let n = self.dim();
        let (z, w) = gauss_hermite_normal(order);
        let m = self.mean(x);
        let mut idx = vec![0usize; n];
        let mut y = vec![0.0; n];
        let mut acc = 0.0;
        loop {
            let mut wt = 1.0;
            for a in 0..n {
                wt *= w[idx[a]];
            }
            for i in 0..n {
                let mut s = m[i];
                for a in 0..n {
                    s += self.cov_factor[(i, a)] * z[idx[a]];
                }
                y[i] = s;
            }
            acc += wt * f(&y);
            let mut a = n;
            loop {
                if a == 0 {
                    return acc;
                }
                a -= 1;
                idx[a] += 1;
                if idx[a] < order {
                    break;
                }
                idx[a] = 0;
            }
        }
    }

    /// `D^alpha T(t)f(x)` by central differences with one Richardson step.
    pub fn derivative(
        &self,
        datum: &Datum,
        x: &[f64],
        alpha: &[u32],
        fd_step: f64,
        quad: &QuadConfig,
    ) -> Result<f64> {
        self.check_point(x, datum)?;
        if alpha.len() != self.dim() {
            return Err(Error::DimensionMismatch("multi-index length".into()));
        }
        let order: u32 = alpha.iter().sum();
        if order > 3 {
            return Err(arg_err(format!("derivative order {order} exceeds 3")));
        }
        if order == 0 {
            return self.apply(datum, x, quad);
        }
        if !(fd_step > 0.0 && fd_step.is_finite()) {
            return Err(arg_err(format!("invalid finite-difference step {fd_step}")));
        }
        let coarse = self.stencil(datum, x, alpha, fd_step, quad)?;
        let fine = self.stencil(datum, x, alpha, 0.5 * fd_step, quad)?;
        Ok((4.0 * fine - coarse) / 3.0)
    }

    fn stencil(
        &self,
        datum: &Datum,
        x: &[f64],
        alpha: &[u32],
        h: f64,
        quad: &QuadConfig,
    ) -> Result<f64> {
        let per_axis: Vec<&[(i32, f64)]> = alpha.iter().map(|&k| central_stencil(k)).collect();
        let n = self.dim();
        let mut idx = vec![0usize; n];
        let mut acc = 0.0;
        let mut p = vec![0.0; n];
        loop {
            let mut c = 1.0;
            for a in 0..n {
                let (o, w) = per_axis[a][idx[a]];
                c *= w;
                p[a] = x[a] + o as f64 * h;
            }
            acc += c * self.apply(datum, &p, quad)?;
            let mut a = n;
            let mut done = true;
            while a > 0 {
                a -= 1;
                idx[a] += 1;
                if idx[a] < per_axis[a].len() {
                    done = false;
                    break;
                }
                idx[a] = 0;
            }
            if done {
                break;
            }
        }
        let order: u32 = alpha.iter().sum();
        Ok(acc / h.powi(order as i32))
    }

    /// `T(t)f` on every node of `template`.
    pub fn apply_grid(
        &self,
        datum: &Datum,
        template: &GridFunction,
        quad: &QuadConfig,
    ) -> Result<GridFunction> {
        let vals: Result<Vec<f64>> = (0..template.len())
            .into_par_iter()
            .map(|i| self.apply(datum, &template.coords(i), quad))
            .collect();
        template.with_values(vals?)
    }
}

fn central_stencil(k: u32) -> &'static [(i32, f64)] {
    match k {
        0 => &[(0, 1.0)],
        1 => &[(-1, -0.5), (1, 0.5)],
        2 => &[(-1, 1.0), (0, -2.0), (1, 1.0)],
        _ => &[(-2, -0.5), (-1, 1.0), (1, -1.0), (2, 0.5)],
    }
}

/// `E g(mu + sigma Z)` by composite Gauss–Legendre on `[-c, c]`, split at the
/// images of the breakpoints.
fn ridge_expectation(
    g: &(dyn Fn(f64) -> f64 + Send + Sync),
    breakpoints: &[f64],
    mu: f64,
    sigma: f64,
    quad: &QuadConfig,
) -> f64 {
    if sigma == 0.0 {
        return g(mu);
    }
    let c = quad.ridge_cutoff;
    let mut cuts = vec![-c, c];
    for &b in breakpoints {
        let z = (b - mu) / sigma;
        if z > -c && z < c {
            cuts.push(z);
        }
    }
    cuts.sort_by(f64::total_cmp);
    let (gx, gw) = gauss_legendre(quad.ridge_points);
    let norm = (2.0 * std::f64::consts::PI).sqrt().recip();
    let mut acc = 0.0;
    for seg in cuts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        if b <= a {
            continue;
        }
        let panels = ((b - a) / quad.ridge_panel).ceil().max(1.0) as usize;
        let w = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * w;
            for (xi, wi) in gx.iter().zip(&gw) {
                let z = lo + 0.5 * w * (xi + 1.0);
                acc += 0.5 * w * wi * norm * (-0.5 * z * z).exp() * g(mu + sigma * z);
            }
        }
    }
    acc
}

/// `T(t)f(x)` for the operator `spec`.
pub fn ou_apply(
    spec: &ConstantOperatorSpec,
    t: f64,
    datum: &Datum,
    x: &[f64],
    quad: &QuadConfig,
) -> Result<f64> {
    OUKernel::new(spec, t)?.apply(datum, x, quad)
}

/// `D^alpha T(t)f(x)` for the operator `spec`.
pub fn ou_derivative(
    spec: &ConstantOperatorSpec,
    t: f64,
    datum: &Datum,
    x: &[f64],
    alpha: &[u32],
    fd_step: f64,
    quad: &QuadConfig,
) -> Result<f64> {
    OUKernel::new(spec, t)?.derivative(datum, x, alpha, fd_step, quad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_preserved() {
        let k = OUKernel::new(&ConstantOperatorSpec::kolmogorov(), 0.3).unwrap();
        let one = Datum::general(|_| 1.0);
        let v = k.apply(&one, &[0.4, -1.0], &QuadConfig::default()).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
    }

    #[test]
    fn ridge_and_tensor_agree() {
        let k = OUKernel::new(&ConstantOperatorSpec::kolmogorov(), 0.5).unwrap();
        let a = DVector::from_vec(vec![0.3, 1.0]);
        let ridge = Datum::ridge(a.clone(), |s| (s).sin(), vec![]);
        let gen = Datum::general(move |y| (0.3 * y[0] + y[1]).sin());
        let q = QuadConfig::default();
        let x = [0.2, -0.7];
        let r = k.apply(&ridge, &x, &q).unwrap();
        let g = k.apply(&gen, &x, &q).unwrap();
        assert!((r - g).abs() < 1e-12, "{r} vs {g}");
    }

    #[test]
    fn rejects_degenerate() {
        let spec = ConstantOperatorSpec::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            DMatrix::zeros(2, 2),
        )
        .unwrap();
        assert!(matches!(
            OUKernel::new(&spec, 1.0),
            Err(Error::SingularGramian(_))
        ));
        assert!(OUKernel::new(&ConstantOperatorSpec::kolmogorov(), 0.0).is_err());
    }
}
