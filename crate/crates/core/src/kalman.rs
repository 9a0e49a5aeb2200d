//! The five equivalent hypoellipticity characterizations and their cross-check.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{arg_err, Error, Result};
use crate::linalg::{self, RANK_RTOL};
use crate::ode::{dopri5, OdeTolerance};
use crate::operator::{ConstantOperatorSpec, OperatorSpec};

/// Smallest Gramian eigenvalue accepted as positive.
pub const GRAMIAN_PD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KalmanRank {
    pub rank: usize,
    pub r_used: usize,
    pub holds: bool,
}

/// `[Q, BQ, ..., B^r Q]` as one `N x N(r+1)` matrix.
pub fn kalman_matrix(q_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let n = q_mat.nrows();
    let mut out = DMatrix::zeros(n, n * (r + 1));
    let mut blk = q_mat.clone();
    for k in 0..=r {
        out.view_mut((0, k * n), (n, n)).copy_from(&blk);
        blk = b_mat * blk;
    }
    out
}

pub fn kalman_rank(q_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>, r_max: usize) -> Result<KalmanRank> {
    let n = linalg::check_same_square(q_mat, b_mat)?;
    let top = r_max.min(n.saturating_sub(1));
    let mut rank = 0;
    for r in 0..=top {
        rank = linalg::numerical_rank(&kalman_matrix(q_mat, b_mat, r), RANK_RTOL);
        if rank == n {
            return Ok(KalmanRank {
                rank,
                r_used: r,
                holds: true,
            });
        }
    }
    // higher powers add nothing beyond B^{N-1} (Cayley–Hamilton)
    Ok(KalmanRank {
        rank,
        r_used: r_max,
        holds: false,
    })
}

/// `Q_t = int_0^t e^{sB} Q e^{sB*} ds` via `Q_t' = B Q_t + Q_t B* + Q`, `Q_0 = 0`.
pub fn gramian(q_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = linalg::check_same_square(q_mat, b_mat)?;
    if !(t > 0.0) || !t.is_finite() {
        return Err(arg_err(format!("gramian needs t > 0, got {t}")));
    }
    let q = q_mat.clone();
    let b = b_mat.clone();
    let rhs = move |y: &[f64], dy: &mut [f64]| {
        let g = DMatrix::from_column_slice(n, n, y);
        let bg = &b * &g;
        let d = &bg + bg.transpose() + &q;
        dy.copy_from_slice(d.as_slice());
    };
    let y = dopri5(rhs, &vec![0.0; n * n], t, OdeTolerance::default())?;
    Ok(linalg::symmetrize(&DMatrix::from_column_slice(n, n, &y)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NestedKernels {
    /// `dim W_r` for `r = 1..=N`.
    pub dims: Vec<usize>,
    pub k0: Option<usize>,
}

fn stacked_constraints(q_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let n = q_mat.nrows();
    let bt = b_mat.transpose();
    let mut out = DMatrix::zeros(n * r, n);
    let mut blk = q_mat.clone();
    for k in 0..r {
        out.view_mut((k * n, 0), (n, n)).copy_from(&blk);
        blk = &blk * &bt;
    }
    out
}

/// `W_r = { xi : Q (B*)^k xi = 0, k < r }`.
pub fn nested_kernels(q_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>) -> Result<NestedKernels> {
    let n = linalg::check_same_square(q_mat, b_mat)?;
    let mut dims = Vec::with_capacity(n);
    let mut k0 = None;
    for r in 1..=n {
        let d = linalg::null_space(&stacked_constraints(q_mat, b_mat, r), RANK_RTOL).ncols();
        if d == 0 && k0.is_none() {
            k0 = Some(r);
        }
        dims.push(d);
    }
    Ok(NestedKernels { dims, k0 })
}

/// `W = { xi : Q (B*)^k xi = 0 for all k <= N-1 }` is trivial.
pub fn w_space_trivial(q_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>) -> Result<bool> {
    let n = linalg::check_same_square(q_mat, b_mat)?;
    Ok(linalg::null_space(&stacked_constraints(q_mat, b_mat, n), RANK_RTOL).ncols() == 0)
}

/// Largest `B*`-invariant subspace of `ker Q`, found by repeatedly shrinking
/// `S` to `S ∩ (B*)^{-1} S` starting from `S = ker Q`.
pub fn largest_invariant_subspace_in_kernel(
    q_mat: &DMatrix<f64>,
    b_mat: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let n = linalg::check_same_square(q_mat, b_mat)?;
    let bt = b_mat.transpose();
    let scale = bt.norm().max(1.0);
    let mut s = linalg::null_space(q_mat, RANK_RTOL);
    loop {
        if s.ncols() == 0 {
            return Ok(s);
        }
        let proj_out = DMatrix::<f64>::identity(n, n) - &s * s.transpose();
        let leak = proj_out * (&bt * &s) / scale;
        let c = linalg::null_space(&leak, 1e-9);
        // null_space is relative to the largest singular value; a vanishing
        // leak means the whole of S is invariant.
        let c = if leak.norm() < 1e-12 {
            DMatrix::identity(s.ncols(), s.ncols())
        } else {
            c
        };
        if c.ncols() == s.ncols() {
            return Ok(s);
        }
        // product of orthonormal factors stays orthonormal
        s = &s * c;
    }
}

/// `ker Q` contains no nontrivial `B*`-invariant subspace.
pub fn invariant_subspace_free(q_mat: &DMatrix<f64>, b_mat: &DMatrix<f64>) -> Result<bool> {
    Ok(largest_invariant_subspace_in_kernel(q_mat, b_mat)?.ncols() == 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypoellipticityReport {
    pub dim_n: usize,
    pub rank: usize,
    pub rank_condition: bool,
    /// `(t, lambda_min(Q_t))` per probe time.
    pub gramian_min_eigs: Vec<(f64, f64)>,
    pub gramian_pd: bool,
    pub nested_dims: Vec<usize>,
    pub nested_kernel_k0: Option<usize>,
    pub invariant_subspace_free: bool,
    pub w_space_trivial: bool,
    /// Sampled comparison of `ker Q(x)` across points, `None` for constant `Q`.
    pub kernel_constant: Option<bool>,
    pub consistent: bool,
}

impl HypoellipticityReport {
    pub fn hypoelliptic(&self) -> bool {
        self.consistent && self.rank_condition && self.kernel_constant.unwrap_or(true)
    }

    pub fn flags(&self) -> [bool; 5] {
        [
            self.invariant_subspace_free,
            self.w_space_trivial,
            self.nested_kernel_k0.is_some(),
            self.gramian_pd,
            self.rank_condition,
        ]
    }

    pub fn to_text(&self) -> String {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let mut s = String::new();
        let _ = writeln!(s, "Hypoellipticity report (N = {})", self.dim_n);
        let _ = writeln!(
            s,
            "  (i)   no B*-invariant subspace in ker Q : {}",
            yn(self.invariant_subspace_free)
        );
        let _ = writeln!(
            s,
            "  (ii)  W = {{0}}                          : {}",
            yn(self.w_space_trivial)
        );
        let k0 = self
            .nested_kernel_k0
            .map(|k| k.to_string())
            .unwrap_or_else(|| "none".into());
        let dims: Vec<String> = self.nested_dims.iter().map(|d| d.to_string()).collect();
        let _ = writeln!(
            s,
            "  (iii) nested kernels dims [{}], k0 = {k0}",
            dims.join(", ")
        );
        for (t, l) in &self.gramian_min_eigs {
            let _ = writeln!(s, "  (iv)  lambda_min(Q_t) at t = {t}: {l:.6e}");
        }
        let _ = writeln!(
            s,
            "        Gramian positive definite       : {}",
            yn(self.gramian_pd)
        );
        let _ = writeln!(
            s,
            "  (v)   Kalman rank {} of {}                : {}",
            self.rank,
            self.dim_n,
            yn(self.rank_condition)
        );
        if let Some(k) = self.kernel_constant {
            let _ = writeln!(s, "  sampled ker Q(x) constant (heuristic)  : {}", yn(k));
        }
        let _ = writeln!(
            s,
            "  consistent                             : {}",
            yn(self.consistent)
        );
        let _ = writeln!(
            s,
            "  hypoelliptic                           : {}",
            yn(self.hypoelliptic())
        );
        s
    }

    /// Flat `key=value` lines, keys in a fixed order.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("dim".to_string(), self.dim_n.to_string()),
            (
                "invariant_subspace_free".into(),
                self.invariant_subspace_free.to_string(),
            ),
            ("w_space_trivial".into(), self.w_space_trivial.to_string()),
            (
                "nested_dims".into(),
                self.nested_dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            (
                "nested_kernel_k0".into(),
                self.nested_kernel_k0
                    .map(|k| k.to_string())
                    .unwrap_or_else(|| "none".into()),
            ),
            ("gramian_pd".into(), self.gramian_pd.to_string()),
        ];
        for (t, l) in &self.gramian_min_eigs {
            kv.push((format!("gramian_lambda_min[t={t}]"), format!("{l:.12e}")));
        }
        kv.push(("kalman_rank".into(), self.rank.to_string()));
        kv.push(("rank_condition".into(), self.rank_condition.to_string()));
        if let Some(k) = self.kernel_constant {
            kv.push(("kernel_constant_sampled".into(), k.to_string()));
        }
        kv.push(("consistent".into(), self.consistent.to_string()));
        kv.push(("hypoelliptic".into(), self.hypoelliptic().to_string()));
        kv
    }
}

/// Runs all five characterizations on a constant pair `(Q, B)`.
pub fn report_for_matrices(
    q_mat: &DMatrix<f64>,
    b_mat: &DMatrix<f64>,
    probe_times: &[f64],
) -> Result<HypoellipticityReport> {
    let n = linalg::check_same_square(q_mat, b_mat)?;
    if probe_times.is_empty() {
        return Err(arg_err("at least one probe time is required"));
    }
    let kr = kalman_rank(q_mat, b_mat, n.saturating_sub(1))?;
    let mut eigs = Vec::with_capacity(probe_times.len());
    for &t in probe_times {
        let g = gramian(q_mat, b_mat, t)?;
        eigs.push((t, linalg::lambda_min(&g)));
    }
    let gramian_pd = eigs.iter().all(|(_, l)| *l > GRAMIAN_PD_TOL);
    let nk = nested_kernels(q_mat, b_mat)?;
    let isf = invariant_subspace_free(q_mat, b_mat)?;
    let wt = w_space_trivial(q_mat, b_mat)?;
    let flags = [isf, wt, nk.k0.is_some(), gramian_pd, kr.holds];
    let consistent = flags.iter().all(|&f| f == flags[0]);
    Ok(HypoellipticityReport {
        dim_n: n,
        rank: kr.rank,
        rank_condition: kr.holds,
        gramian_min_eigs: eigs,
        gramian_pd,
        nested_dims: nk.dims,
        nested_kernel_k0: nk.k0,
        invariant_subspace_free: isf,
        w_space_trivial: wt,
        kernel_constant: None,
        consistent,
    })
}

pub fn hypoellipticity_report(
    spec: &ConstantOperatorSpec,
    probe_times: &[f64],
) -> Result<HypoellipticityReport> {
    report_for_matrices(&spec.q_const, &spec.drift_b, probe_times)
}

/// Report for an x-dependent spec: characterizations run on `Q(x0)` at the
/// first sample, and `ker Q(x)` is compared across all samples.
pub fn hypoellipticity_report_sampled(
    spec: &OperatorSpec,
    sample_points: &[Vec<f64>],
    probe_times: &[f64],
) -> Result<HypoellipticityReport> {
    if sample_points.is_empty() {
        return Err(Error::EmptySamples);
    }
    let q_ref = spec.q_full(&sample_points[0]);
    let mut report = report_for_matrices(&q_ref, &spec.drift_b, probe_times)?;
    let k_ref = linalg::null_space(&q_ref, RANK_RTOL);
    let p_ref = &k_ref * k_ref.transpose();
    let mut same = true;
    for x in &sample_points[1..] {
        let k = linalg::null_space(&spec.q_full(x), RANK_RTOL);
        if k.ncols() != k_ref.ncols() || (&k * k.transpose() - &p_ref).norm() > 1e-8 {
            same = false;
            break;
        }
    }
    report.kernel_constant = Some(same);
    Ok(report)
}
