//! Randomized self-checks over the structural machinery: full rank of the
//! commutator matrices, Bernstein parameters with their `H` choices, and the
//! trace inequality.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use rand::Rng;

use crate::basis::BlockStructure;
use crate::error::{arg_err, Result};
use crate::exponents::{
    check_bernstein_conditions, choose_bernstein_params, choose_h, ConditionFailure,
};
use crate::linalg::{random_orthogonal, standard_normal};
use crate::multiindex::{assemble_j, c_count, check_full_rank};
use crate::operator::trace_inequality_check;

/// Non-increasing block sizes with `r <= r_max` and `p_0 <= max_p`.
pub fn random_block_sizes<R: Rng + ?Sized>(rng: &mut R, r_max: usize, max_p: usize) -> Vec<usize> {
    let r = rng.gen_range(0..=r_max);
    let mut sizes = vec![rng.gen_range(1..=max_p)];
    for _ in 0..r {
        let prev = *sizes.last().expect("nonempty");
        sizes.push(rng.gen_range(1..=prev));
    }
    sizes
}

/// Gaussian entries on the sub-diagonal blocks `B_1, ..., B_r`, zero elsewhere.
pub fn random_reduced_drift<R: Rng + ?Sized>(s: &BlockStructure, rng: &mut R) -> DMatrix<f64> {
    let n = s.dim();
    let mut b = DMatrix::zeros(n, n);
    for h in 1..=s.r {
        for i in s.ranges[h].clone() {
            for j in s.ranges[h - 1].clone() {
                b[(i, j)] = standard_normal(rng);
            }
        }
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankSuiteConfig {
    pub levels: u32,
    pub r_max: usize,
    pub max_block: usize,
    pub draws: usize,
    pub tol: f64,
}

impl Default for RankSuiteConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            r_max: 3,
            max_block: 2,
            draws: 200,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSuiteOutcome {
    pub matrices: usize,
    pub sigma_min: f64,
    pub failure: Option<String>,
}

/// Draws random structures and reduced drifts and checks every `J_m^{(l)}`,
/// `l <= levels`, for full column rank.
pub fn rank_suite<R: Rng + ?Sized>(cfg: &RankSuiteConfig, rng: &mut R) -> Result<RankSuiteOutcome> {
    if cfg.levels == 0 || cfg.draws == 0 || cfg.max_block == 0 {
        return Err(arg_err(
            "rank suite needs positive levels, draws and block size",
        ));
    }
    let mut out = RankSuiteOutcome {
        matrices: 0,
        sigma_min: f64::INFINITY,
        failure: None,
    };
    for _ in 0..cfg.draws {
        let sizes = random_block_sizes(rng, cfg.r_max, cfg.max_block);
        let s = BlockStructure::identity(sizes.clone())?;
        let b = random_reduced_drift(&s, rng);
        for l in 1..=cfg.levels {
            match check_full_rank(l, &s, &b, cfg.tol) {
                Ok(js) => {
                    out.matrices += js.len();
                    for j in &js {
                        out.sigma_min = out.sigma_min.min(j.sigma_min());
                    }
                }
                Err(e) => {
                    out.failure = Some(format!("sizes {sizes:?}, l = {l}: {e}"));
                    return Ok(out);
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinOutcome {
    pub k: u32,
    pub r: usize,
    pub conditions_checked: u64,
    pub failures: Vec<ConditionFailure>,
    /// Smallest `lambda_min(-HJ - (HJ)*)` over the sampled `J` matrices.
    pub iota: f64,
}

impl BernsteinOutcome {
    pub fn passed(&self, iota_floor: f64) -> bool {
        self.failures.is_empty() && self.iota >= iota_floor
    }
}

/// For every `k <= k_max`, `r <= r_max`: the dyadic parameter recipe, its
/// conditions, and `H` for each `J_m^{(k)}` of a random drift with block sizes 1.
pub fn bernstein_suite<R: Rng + ?Sized>(
    k_max: u32,
    r_max: usize,
    rng: &mut R,
) -> Result<Vec<BernsteinOutcome>> {
    if k_max == 0 || r_max == 0 {
        return Err(arg_err("Bernstein suite needs k_max >= 1 and r_max >= 1"));
    }
    let mut out = Vec::new();
    for k in 1..=k_max {
        for r in 1..=r_max {
            let p = choose_bernstein_params(k, r)?;
            let (failures, conditions_checked) = check_bernstein_conditions(&p);
            let s = BlockStructure::identity(vec![1; r + 1])?;
            let b = random_reduced_drift(&s, rng);
            let mut iota = f64::INFINITY;
            for m in (c_count(k - 1, r) + 1)..=c_count(k, r) {
                let j = assemble_j(k, m, &s, &b)?;
                iota = iota.min(choose_h(&j.j)?.iota);
            }
            out.push(BernsteinOutcome {
                k,
                r,
                conditions_checked,
                failures,
                iota,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSuiteOutcome {
    pub samples: usize,
    pub worst_margin: f64,
    pub failure: Option<String>,
}

/// `Tr(QA) >= lambda_min(Q_0) Tr(A_1)` for random PSD `A` and `Q` supported on
/// a positive-definite leading block.
pub fn trace_suite<R: Rng + ?Sized>(
    samples: usize,
    n_max: usize,
    rng: &mut R,
) -> Result<TraceSuiteOutcome> {
    if samples == 0 || n_max == 0 {
        return Err(arg_err("trace suite needs samples >= 1 and n_max >= 1"));
    }
    let mut worst = f64::INFINITY;
    for i in 0..samples {
        let n = rng.gen_range(1..=n_max);
        let m = rng.gen_range(1..=n);
        let g = DMatrix::from_fn(m, m, |_, _| standard_normal(rng));
        let q0 = &g * g.transpose() + DMatrix::identity(m, m) * 0.1;
        let mut q = DMatrix::zeros(n, n);
        q.view_mut((0, 0), (m, m)).copy_from(&q0);
        let u = random_orthogonal(n, rng);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |_, _| {
            rng.gen_range(0.0..2.0)
        }));
        let a = &u * d * u.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let t = trace_inequality_check(&q, &a, m)?;
        let margin = t.lhs - t.rhs;
        worst = worst.min(margin);
        if !t.holds {
            let mut w = String::new();
            let _ = write!(
                w,
                "sample {i}: n = {n}, m = {m}, lhs {} < rhs {}",
                t.lhs, t.rhs
            );
            return Ok(TraceSuiteOutcome {
                samples: i + 1,
                worst_margin: worst,
                failure: Some(w),
            });
        }
    }
    Ok(TraceSuiteOutcome {
        samples,
        worst_margin: worst,
        failure: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn suites_pass_on_small_budgets() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = RankSuiteConfig {
            draws: 10,
            ..RankSuiteConfig::default()
        };
        let r = rank_suite(&cfg, &mut rng).unwrap();
        assert!(r.failure.is_none() && r.matrices > 0);
        let b = bernstein_suite(2, 2, &mut rng).unwrap();
        assert!(b.iter().all(|o| o.passed(2.0 - 1e-10)));
        let t = trace_suite(20, 4, &mut rng).unwrap();
        assert!(t.failure.is_none());
    }
}
