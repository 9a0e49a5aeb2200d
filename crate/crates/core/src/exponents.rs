//! Exact anisotropic exponents `q`, `q_h`, their structural properties, and
//! the feasibility layer of the Bernstein weights.

use std::fmt;
use std::fmt::Write as _;
use std::ops::{Add, Neg, Sub};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::{arg_err, Error, Result};
use crate::linalg;
use crate::multiindex::{c_count, ell, enumeration};

/// Exact value `twice / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HalfInt {
    pub twice: i64,
}

impl HalfInt {
    pub const ZERO: HalfInt = HalfInt { twice: 0 };
    pub const HALF: HalfInt = HalfInt { twice: 1 };
    pub const ONE: HalfInt = HalfInt { twice: 2 };

    pub fn from_twice(twice: i64) -> Self {
        Self { twice }
    }

    pub fn from_int(v: i64) -> Self {
        Self { twice: 2 * v }
    }

    pub fn to_f64(self) -> f64 {
        self.twice as f64 / 2.0
    }

    pub fn double(self) -> Self {
        Self {
            twice: 2 * self.twice,
        }
    }

    pub fn pos(self) -> Self {
        Self {
            twice: self.twice.max(0),
        }
    }
}

impl Add for HalfInt {
    type Output = HalfInt;
    fn add(self, o: HalfInt) -> HalfInt {
        HalfInt::from_twice(self.twice + o.twice)
    }
}

impl Sub for HalfInt {
    type Output = HalfInt;
    fn sub(self, o: HalfInt) -> HalfInt {
        HalfInt::from_twice(self.twice - o.twice)
    }
}

impl Neg for HalfInt {
    type Output = HalfInt;
    fn neg(self) -> HalfInt {
        HalfInt::from_twice(-self.twice)
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.twice % 2 == 0 {
            write!(f, "{}", self.twice / 2)
        } else {
            write!(f, "{}/2", self.twice)
        }
    }
}

/// `q(beta) = sum (2k+1)/2 beta_k`.
pub fn q_eval(beta: &[u32]) -> HalfInt {
    HalfInt::from_twice(
        beta.iter()
            .enumerate()
            .map(|(k, &b)| (2 * k as i64 + 1) * b as i64)
            .sum(),
    )
}

/// `q_h(beta)`; zero when `|beta| <= h`.
pub fn qh_eval(beta: &[u32], h: u32) -> HalfInt {
    let norm: i64 = beta.iter().map(|&b| b as i64).sum();
    let h = h as i64;
    if h >= norm {
        return HalfInt::ZERO;
    }
    let r1 = beta.len();
    // j(beta): smallest j with sum_{k >= j} beta_k <= h
    let mut tail = vec![0i64; r1 + 1];
    for k in (0..r1).rev() {
        tail[k] = tail[k + 1] + beta[k] as i64;
    }
    let j = (0..=r1)
        .find(|&j| tail[j] <= h)
        .expect("tail vanishes at r+1");
    let head: i64 = (0..j).map(|k| k as i64 * beta[k] as i64).sum();
    let twice = norm - h + 2 * head + 2 * (j as i64 - 1) * (tail[j] - h);
    HalfInt::from_twice(twice)
}

/// Deliberately wrong `q_h` (weight `j` instead of `j - 1` on the split
/// block), used to show that the property suite detects defects.
pub fn qh_eval_mutated(beta: &[u32], h: u32) -> HalfInt {
    let norm: i64 = beta.iter().map(|&b| b as i64).sum();
    let h = h as i64;
    if h >= norm {
        return HalfInt::ZERO;
    }
    let r1 = beta.len();
    let mut tail = vec![0i64; r1 + 1];
    for k in (0..r1).rev() {
        tail[k] = tail[k + 1] + beta[k] as i64;
    }
    let j = (0..=r1)
        .find(|&j| tail[j] <= h)
        .expect("tail vanishes at r+1");
    let head: i64 = (0..j).map(|k| k as i64 * beta[k] as i64).sum();
    let twice = norm - h + 2 * head + 2 * j as i64 * (tail[j] - h);
    HalfInt::from_twice(twice)
}

/// Bounds for the exhaustive property suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteBounds {
    pub r_max: usize,
    pub k_max: u32,
    pub h_max: u32,
}

impl Default for SuiteBounds {
    fn default() -> Self {
        Self {
            r_max: 4,
            k_max: 6,
            h_max: 6,
        }
    }
}

impl SuiteBounds {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 {
            return Err(arg_err("k_max must be at least 1"));
        }
        // rough tuple count: multi-indices times h values
        let mut count: u64 = 0;
        for r in 0..=self.r_max {
            for k in 0..=self.k_max {
                count += c_count(k, r) as u64;
            }
        }
        if count * (self.h_max as u64 + 1) > 1_000_000 {
            return Err(arg_err("suite bounds exceed 10^6 tuples"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PropertyResult {
    pub name: String,
    pub checked: u64,
    pub counterexample: Option<String>,
}

impl PropertyResult {
    pub fn passed(&self) -> bool {
        self.counterexample.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteReport {
    pub results: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.results {
            match &r.counterexample {
                None => {
                    let _ = writeln!(s, "{:<14} PASS ({} cases)", r.name, r.checked);
                }
                Some(c) => {
                    let _ = writeln!(s, "{:<14} FAIL after {} cases: {c}", r.name, r.checked);
                }
            }
        }
        s
    }
}

struct Prop {
    name: &'static str,
    checked: u64,
    witness: Option<String>,
}

impl Prop {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            witness: None,
        }
    }

    fn check(&mut self, ok: bool, witness: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok && self.witness.is_none() {
            self.witness = Some(witness());
        }
    }

    fn finish(self) -> PropertyResult {
        PropertyResult {
            name: self.name.to_string(),
            checked: self.checked,
            counterexample: self.witness,
        }
    }
}

fn norm(a: &[u32]) -> u32 {
    a.iter().sum()
}

fn shift(a: &[u32], minus: usize, plus: usize) -> Option<Vec<u32>> {
    if a[minus] == 0 {
        return None;
    }
    let mut b = a.to_vec();
    b[minus] -= 1;
    b[plus] += 1;
    Some(b)
}

fn sub_indices(a: &[u32]) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for &x in a {
        let mut next = Vec::with_capacity(out.len() * (x as usize + 1));
        for p in &out {
            for v in 0..=x {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

/// Exhaustive check of properties (i)–(vii) of `q_h`, monotonicity in `h`,
/// and the `ell` identities, for an arbitrary candidate function.
///
/// Reading of the hypotheses: in (v) the condition is `h < |alpha|`; in (vi)
/// the shifted entry must be positive in `alpha_hat`; in (vii) the two added
/// units sit in block 0.
pub fn lemma34_suite_with<F>(qh: F, bounds: SuiteBounds) -> Result<SuiteReport>
where
    F: Fn(&[u32], u32) -> HalfInt,
{
    bounds.validate()?;
    let mut p1 = Prop::new("(i)");
    let mut p2 = Prop::new("(ii)");
    let mut p3 = Prop::new("(iii)");
    let mut p4 = Prop::new("(iv)");
    let mut p5 = Prop::new("(v)");
    let mut p6 = Prop::new("(vi)");
    let mut p7 = Prop::new("(vii)");
    let mut pq0 = Prop::new("q_0 = q");
    let mut pmono = Prop::new("monotone in h");
    let mut pell = Prop::new("ell identity");
    let hf = |v: &[u32]| format!("{v:?}");

    for r in 0..=bounds.r_max {
        for k in 0..=bounds.k_max {
            let en = enumeration(k, r);
            for a in &en.items {
                let a = a.as_slice();
                let na = norm(a);
                pq0.check(qh(a, 0) == q_eval(a), || format!("alpha = {}", hf(a)));
                for h in 0..=bounds.h_max {
                    let qa = qh(a, h);
                    p1.check((na <= h) == (qa == HalfInt::ZERO), || {
                        format!("alpha = {}, h = {h}, q_h = {qa}", hf(a))
                    });
                    let lower = HalfInt::from_twice((na as i64 - h as i64).max(0));
                    p2.check(qa.double() >= lower, || {
                        format!("alpha = {}, h = {h}, q_h = {qa}", hf(a))
                    });
                    if h < bounds.h_max {
                        let q_next = qh(a, h + 1);
                        pmono.check(q_next <= qa, || {
                            format!("alpha = {}, h = {h}: {qa} then {q_next}", hf(a))
                        });
                    }
                    if na >= h {
                        let mut b = a.to_vec();
                        b[0] += 1;
                        let qb = qh(&b, h);
                        p3.check(qb == qa + HalfInt::HALF, || {
                            format!("alpha = {}, h = {h}: {qa} -> {qb}", hf(a))
                        });
                    }
                    for j in 0..=r {
                        for jp in 0..=(j + 1).min(r) {
                            if let Some(b) = shift(a, j, jp) {
                                let qb = qh(&b, h);
                                p4.check(qa >= qb - HalfInt::ONE, || {
                                    format!(
                                        "alpha = {}, beta = {}, h = {h}: {qa} vs {qb}",
                                        hf(a),
                                        hf(&b)
                                    )
                                });
                            }
                        }
                    }
                    let j0 = a.iter().position(|&x| x > 0);
                    if let Some(j0) = j0.filter(|&j| j > 0) {
                        let ahat = shift(a, j0, j0 - 1).expect("alpha_j0 > 0");
                        let qhat = qh(&ahat, h);
                        if h < na {
                            p5.check(qa > HalfInt::ONE && qhat == qa - HalfInt::ONE, || {
                                format!(
                                    "alpha = {}, beta = {}, h = {h}: {qa} -> {qhat}",
                                    hf(a),
                                    hf(&ahat)
                                )
                            });
                        }
                        for j in 0..=r {
                            for jp in 0..=(j + 1).min(r) {
                                if let Some(b) = shift(&ahat, j, jp) {
                                    let qb = qh(&b, h);
                                    p6.check(qa + qhat >= qb.double() - HalfInt::ONE, || {
                                        format!(
                                            "alpha = {}, alpha_hat = {}, beta = {}, h = {h}",
                                            hf(a),
                                            hf(&ahat),
                                            hf(&b)
                                        )
                                    });
                                }
                            }
                        }
                    }
                    for t in sub_indices(a) {
                        if t.as_slice() == a {
                            continue;
                        }
                        let mut b = t.clone();
                        b[0] += 2;
                        let qb = qh(&b, h);
                        p7.check(qa >= qb - HalfInt::ONE, || {
                            format!(
                                "alpha = {}, alpha_tilde = {}, h = {h}: {qa} vs {qb}",
                                hf(a),
                                hf(&t)
                            )
                        });
                    }
                }
            }
            if k >= 1 && r >= 1 {
                let lo = c_count(k - 1, r);
                for m in (lo + 1)..=en.len() {
                    let lm = ell(k, r, m)?;
                    let im = en.get(m).expect("valid");
                    let il = en.get(lm).expect("valid");
                    pell.check(lm < m && q_eval(il) == q_eval(im) - HalfInt::ONE, || {
                        format!("level {k}, m = {m}, ell = {lm}")
                    });
                    for h in 0..=bounds.h_max {
                        let qm = qh(im, h);
                        if qm >= HalfInt::ONE {
                            let ql = qh(il, h);
                            pell.check(ql + qm == (qm.double() - HalfInt::ONE).pos(), || {
                                format!("level {k}, m = {m}, h = {h}: {ql} + {qm}")
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(SuiteReport {
        results: vec![
            p1.finish(),
            p2.finish(),
            p3.finish(),
            p4.finish(),
            p5.finish(),
            p6.finish(),
            p7.finish(),
            pq0.finish(),
            pmono.finish(),
            pell.finish(),
        ],
    })
}

pub fn lemma34_suite(bounds: SuiteBounds) -> Result<SuiteReport> {
    lemma34_suite_with(qh_eval, bounds)
}

/// CSV table of `(beta, h, q_h)` over the given bounds.
pub fn qh_table_csv(bounds: SuiteBounds) -> Result<String> {
    bounds.validate()?;
    let mut s = String::from("r,beta,h,q_h_twice,q_h\n");
    for r in 0..=bounds.r_max {
        for k in 0..=bounds.k_max {
            for a in &enumeration(k, r).items {
                let key: Vec<String> = a.iter().map(|x| x.to_string()).collect();
                for h in 0..=bounds.h_max {
                    let v = qh_eval(a, h);
                    let _ = writeln!(s, "{r},{},{h},{},{v}", key.join(" "), v.twice);
                }
            }
        }
    }
    Ok(s)
}

/// Weight sequences `a^{(l)}_n` for levels `l = 1..=k+1`.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinParams {
    pub k: u32,
    pub r: usize,
    /// `levels[l-1][n-1] = a^{(l)}_n`.
    pub levels: Vec<Vec<BigRational>>,
}

fn dyadic(e: u64) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::one() << e)
}

impl BernsteinParams {
    pub fn a(&self, l: u32, n: usize) -> &BigRational {
        &self.levels[l as usize - 1][n - 1]
    }

    /// `eta^{(l)}_{n,m} = a_n a_m`.
    pub fn eta(&self, l: u32, n: usize, m: usize) -> BigRational {
        self.a(l, n) * self.a(l, m)
    }

    /// `eta^{(l)} = min_{m <= c_{l-1}} eta^{(l-1)}_{m,m}`, with `eta^{(1)} = 1`.
    pub fn eta_level(&self, l: u32) -> BigRational {
        if l <= 1 {
            return BigRational::one();
        }
        let prev = &self.levels[l as usize - 2];
        prev.iter().map(|a| a * a).min().expect("nonempty level")
    }

    /// Gaps `eta_{ell,ell} + eta_{m,m} - 2 eta_{m,ell}` entering the choice
    /// of the base `a` for every `(l, m)` with `m > c_{l-1}`.
    pub fn magnification_bound(&self) -> MagnificationBound {
        let mut terms = Vec::new();
        for l in 1..=self.k {
            let lo = c_count(l - 1, self.r);
            let hi = c_count(l, self.r);
            for m in (lo + 1)..=hi {
                let lm = ell(l, self.r, m).expect("m > c_{l-1}");
                let gap =
                    self.eta(l, lm, lm) + self.eta(l, m, m) - self.eta(l, m, lm) * BigInt::from(2);
                terms.push((l, m, gap));
            }
        }
        MagnificationBound { terms }
    }
}

/// Lower bound for the base `a`: `a^gap > 2 |H_{m,ell(m)}|` for every term.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnificationBound {
    pub terms: Vec<(u32, usize, BigRational)>,
}

fn log2_rational(x: &BigRational) -> f64 {
    let n = x.numer().abs();
    let d = x.denom();
    let nb = n.bits() as i64;
    let db = d.bits() as i64;
    // scale both to ~60 significant bits
    let shift_n = (nb - 60).max(0);
    let shift_d = (db - 60).max(0);
    let nf = (&n >> shift_n as u64)
        .to_string()
        .parse::<f64>()
        .unwrap_or(0.0);
    let df = (d >> shift_d as u64)
        .to_string()
        .parse::<f64>()
        .unwrap_or(1.0);
    nf.log2() - df.log2() + (shift_n - shift_d) as f64
}

impl MagnificationBound {
    /// `log2(ln a_min)`: any `a` with `log2(ln a)` above this value satisfies
    /// every term, given `h_norm(l, m) = |H_{m,ell(m)}^{(l)}|`. Returns
    /// `-inf` when any `a > 1` works.
    pub fn log2_ln_a_min<F: Fn(u32, usize) -> f64>(&self, h_norm: F) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for (l, m, gap) in &self.terms {
            let need = (2.0 * h_norm(*l, *m)).ln();
            if need <= 0.0 {
                continue;
            }
            let v = need.log2() - log2_rational(gap);
            best = best.max(v);
        }
        best
    }
}

/// Builds the weights by the inductive recipe: `a^{(1)}_1 = 1/2` and
/// quartering; for `l >= 2`, `a^{(l)}_1 = a^{(l-1)}_{c_{l-1}} / 4`, quartering
/// afterwards, and at `n = c_{l-1} + 1` the smaller of a quarter and half the
/// square of the previous value.
pub fn choose_bernstein_params(k: u32, r: usize) -> Result<BernsteinParams> {
    if k == 0 {
        return Err(arg_err("k must be at least 1"));
    }
    // exponents of 2: a = 2^{-e}
    let mut levels_e: Vec<Vec<u64>> = Vec::new();
    for l in 1..=(k + 1) {
        let cl = c_count(l, r);
        let mut e = Vec::with_capacity(cl);
        if l == 1 {
            e.push(1);
        } else {
            let prev = levels_e.last().expect("previous level");
            e.push(prev[prev.len() - 1] + 2);
        }
        let split = c_count(l - 1, r);
        for n in 2..=cl {
            let p = e[n - 2];
            let quarter = p + 2;
            let v = if l >= 2 && n == split + 1 {
                quarter.max(2 * p + 1)
            } else {
                quarter
            };
            e.push(v);
        }
        levels_e.push(e);
    }
    let levels = levels_e
        .into_iter()
        .map(|lv| lv.into_iter().map(dyadic).collect())
        .collect();
    Ok(BernsteinParams { k, r, levels })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionFailure {
    pub condition: String,
    pub detail: String,
}

/// Independent verification of every strict inequality required of the
/// weights. Returns the list of failures (empty when all hold) and the
/// number of inequalities checked.
pub fn check_bernstein_conditions(p: &BernsteinParams) -> (Vec<ConditionFailure>, u64) {
    let mut fails = Vec::new();
    let mut count = 0u64;
    let two = BigRational::from_integer(BigInt::from(2));
    let one = BigRational::one();
    let fail = |c: &str, d: String, fails: &mut Vec<ConditionFailure>| {
        fails.push(ConditionFailure {
            condition: c.into(),
            detail: d,
        })
    };
    let r = p.r;
    for l in 1..=(p.k + 1) {
        let lv = &p.levels[l as usize - 1];
        if lv.len() != c_count(l, r) {
            fail(
                "shape",
                format!("level {l} has {} weights", lv.len()),
                &mut fails,
            );
            continue;
        }
        for n in 1..=lv.len() {
            count += 1;
            if !(p.a(l, n) > &BigRational::zero() && p.a(l, n) < &one) {
                fail("range", format!("a^({l})_{n} not in (0,1)"), &mut fails);
            }
            if n >= 2 {
                count += 1;
                if !(p.a(l, n) * &two < *p.a(l, n - 1)) {
                    fail(
                        "halving",
                        format!("a^({l})_{n} >= a^({l})_{} / 2", n - 1),
                        &mut fails,
                    );
                }
            }
        }
        // (3.3)(c) for every level up to k+1
        let cl = c_count(l, r);
        let maxd = (1..=cl).map(|m| p.eta(l, m, m)).max().expect("nonempty");
        count += 1;
        if !(&maxd * &two < p.eta_level(l)) {
            fail("(3.3)(c)", format!("level {l}"), &mut fails);
        }
    }
    for l in 1..=p.k {
        let lo = c_count(l - 1, r);
        let hi = c_count(l, r);
        for m in (lo + 1)..=hi {
            let lm = ell(l, r, m).expect("m > c_{l-1}");
            let e_mm = p.eta(l, m, m);
            let e_ll = p.eta(l, lm, lm);
            let e_ml = p.eta(l, m, lm);
            count += 1;
            if !(&e_ll + &e_mm > &e_ml * &two) {
                fail("(3.2)(a)", format!("l = {l}, m = {m}"), &mut fails);
            }
            count += 1;
            if !(&e_mm * &two < e_ml) {
                fail("(3.3)(a)", format!("l = {l}, m = {m}"), &mut fails);
            }
            for pp in (lo + 1)..m {
                let lp = ell(l, r, pp).expect("p > c_{l-1}");
                count += 1;
                if !(e_ml < p.eta(l, pp, lp)) {
                    fail(
                        "(3.3)(b)",
                        format!("l = {l}, p = {pp}, m = {m}"),
                        &mut fails,
                    );
                }
            }
            for pp in 1..=lo {
                count += 1;
                if !(e_ml < p.eta(l, pp, pp)) {
                    fail(
                        "(3.3)(d)",
                        format!("l = {l}, p = {pp}, m = {m}"),
                        &mut fails,
                    );
                }
            }
            if lm > lo {
                let llm = ell(l, r, lm).expect("ell(m) > c_{l-1}");
                count += 1;
                if !(&e_ml * &two < p.eta(l, lm, llm)) {
                    fail("(3.3)(e)", format!("l = {l}, m = {m}"), &mut fails);
                }
            }
        }
    }
    (fails, count)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HChoice {
    pub h_mat: DMatrix<f64>,
    /// `lambda_min(-HJ - (HJ)*)`.
    pub iota: f64,
}

/// `H = -(J*J)^{-1} J*`, so `HJ = -I` and `-HJ - (HJ)* = 2I`.
pub fn choose_h(j_mat: &DMatrix<f64>) -> Result<HChoice> {
    let sv = linalg::singular_values(j_mat);
    let smin = if sv.len() < j_mat.ncols() {
        0.0
    } else {
        sv.last().copied().unwrap_or(0.0)
    };
    if j_mat.ncols() == 0 || smin <= 1e-8 {
        return Err(Error::RankDeficient(format!(
            "J ({}x{}) has singular values {sv:?}",
            j_mat.nrows(),
            j_mat.ncols()
        )));
    }
    let jt = j_mat.transpose();
    let gram = &jt * j_mat;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::RankDeficient("J*J not positive definite".into()))?;
    let h_mat = -chol.solve(&jt);
    let hj = &h_mat * j_mat;
    let s = -(&hj + hj.transpose());
    Ok(HChoice {
        iota: linalg::lambda_min(&s),
        h_mat,
    })
}

/// `iota^{(k)}`: the minimum of `lambda_min(-HJ - (HJ)*)` over all choices.
pub fn iota_min(choices: &[HChoice]) -> f64 {
    choices.iter().map(|c| c.iota).fold(f64::INFINITY, f64::min)
}
