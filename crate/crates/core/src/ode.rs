//! Adaptive Dormand–Prince 5(4) integrator for autonomous systems on flat vectors.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeTolerance {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-15,
            max_steps: 200_000,
        }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy_into(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    for i in 0..y.len() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        out[i] = y[i] + h * s;
    }
}

/// Integrates y' = f(y) from 0 to `t_end`, starting at `y0`.
pub fn dopri5<F>(f: F, y0: &[f64], t_end: f64, tol: OdeTolerance) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t_end == 0.0 || n == 0 {
        return Ok(y);
    }
    let mut t = 0.0;
    let mut h = (t_end * 1e-3).max(1e-12 * t_end);
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut k5 = vec![0.0; n];
    let mut k6 = vec![0.0; n];
    let mut k7 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(&y, &mut k1);
    let mut steps = 0;
    while t < t_end {
        steps += 1;
        if steps > tol.max_steps {
            return Err(Error::SolveFailed(format!(
                "ODE integrator exceeded {} steps",
                tol.max_steps
            )));
        }
        if t + h > t_end {
            h = t_end - t;
        }
        axpy_into(&mut tmp, &y, h, &[(A21, &k1)]);
        f(&tmp, &mut k2);
        axpy_into(&mut tmp, &y, h, &[(A31, &k1), (A32, &k2)]);
        f(&tmp, &mut k3);
        axpy_into(&mut tmp, &y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        f(&tmp, &mut k4);
        axpy_into(
            &mut tmp,
            &y,
            h,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
        );
        f(&tmp, &mut k5);
        axpy_into(
            &mut tmp,
            &y,
            h,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
        );
        f(&tmp, &mut k6);
        axpy_into(
            &mut ynew,
            &y,
            h,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        f(&ynew, &mut k7);
        let mut err = 0.0f64;
        for i in 0..n {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err = err.max((e / sc).abs());
        }
        if !err.is_finite() {
            return Err(Error::NonFinite("ODE state".into()));
        }
        if err <= 1.0 {
            t += h;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
        }
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= fac;
        if h < 1e-300 {
            return Err(Error::SolveFailed("ODE step size underflow".into()));
        }
    }
    Ok(y)
}
