//! Derivative ordering, block splitting, the `ell` map, the index sets
//! `A_m`, `B_m`, `C_m`, and the drift commutator matrices.
//!
//! Positions in an enumeration are 1-based throughout, matching `i_1, i_2, ...`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;

use crate::basis::BlockStructure;
use crate::error::{arg_err, Error, Result};
use crate::linalg;

/// Block-compressed multi-index `(beta_0, ..., beta_r)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BlockMultiIndex(pub Vec<u32>);

/// Multi-index over all `N` coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FullMultiIndex(pub Vec<u32>);

impl BlockMultiIndex {
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn r(&self) -> usize {
        self.0.len() - 1
    }
}

impl FullMultiIndex {
    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn unit(n: usize, i: usize) -> Self {
        let mut v = vec![0; n];
        v[i] = 1;
        Self(v)
    }

    pub fn compress(&self, structure: &BlockStructure) -> BlockMultiIndex {
        BlockMultiIndex(structure.compress(&self.0))
    }
}

pub fn binom(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as u64
}

/// `c_{k,q} = binom(q + k, q)`.
pub fn c_count(k: u32, q: usize) -> usize {
    binom(q as u64 + k as u64, q as u64) as usize
}

/// The order `a ≼ b`: at the first differing entry `a` is larger.
pub fn precedes(a: &[u32], b: &[u32]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return y.cmp(x);
        }
    }
    Ordering::Equal
}

/// The ordered list `i_1 ≼ ... ≼ i_c` of length-`q+1` tuples summing to `k`,
/// with a reverse lookup.
#[derive(Debug)]
pub struct Enumeration {
    pub k: u32,
    pub q: usize,
    pub items: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl Enumeration {
    fn build(k: u32, q: usize) -> Self {
        let mut items = Vec::with_capacity(c_count(k, q));
        let mut cur = vec![0u32; q + 1];
        fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
            let last = cur.len() - 1;
            if pos == last {
                cur[pos] = left;
                out.push(cur.clone());
                return;
            }
            for v in (0..=left).rev() {
                cur[pos] = v;
                rec(pos + 1, left - v, cur, out);
            }
        }
        rec(0, k, &mut cur, &mut items);
        let index = items
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i + 1))
            .collect();
        Self { k, q, items, index }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// 1-based position of `beta`.
    pub fn position(&self, beta: &[u32]) -> Option<usize> {
        self.index.get(beta).copied()
    }

    /// Entry at 1-based position `m`.
    pub fn get(&self, m: usize) -> Option<&[u32]> {
        if m == 0 {
            return None;
        }
        self.items.get(m - 1).map(|v| v.as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("position");
        for j in 0..=self.q {
            let _ = write!(s, ",beta{j}");
        }
        s.push('\n');
        for (i, v) in self.items.iter().enumerate() {
            let _ = write!(s, "{}", i + 1);
            for x in v {
                let _ = write!(s, ",{x}");
            }
            s.push('\n');
        }
        s
    }
}

type Memo = RwLock<HashMap<(u32, usize), Arc<Enumeration>>>;

fn memo() -> &'static Memo {
    static M: OnceLock<Memo> = OnceLock::new();
    M.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Cached enumeration of `I_{k,q}`.
pub fn enumeration(k: u32, q: usize) -> Arc<Enumeration> {
    if let Some(e) = memo().read().expect("memo lock").get(&(k, q)) {
        return e.clone();
    }
    let e = Arc::new(Enumeration::build(k, q));
    memo()
        .write()
        .expect("memo lock")
        .entry((k, q))
        .or_insert(e)
        .clone()
}

pub fn enumerate_ordered(k: u32, q: usize) -> Vec<BlockMultiIndex> {
    enumeration(k, q)
        .items
        .iter()
        .map(|v| BlockMultiIndex(v.clone()))
        .collect()
}

fn entry(k: u32, r: usize, m: usize) -> Result<Vec<u32>> {
    enumeration(k, r)
        .get(m)
        .map(|v| v.to_vec())
        .ok_or_else(|| arg_err(format!("position {m} outside 1..={}", c_count(k, r))))
}

fn require_first_zero(k: u32, r: usize, m: usize) -> Result<Vec<u32>> {
    let a = entry(k, r, m)?;
    if a[0] != 0 {
        return Err(arg_err(format!(
            "position {m} of level {k} has first entry {} (need m > c_{{k-1,r}} = {})",
            a[0],
            c_count(k.saturating_sub(1), r)
        )));
    }
    Ok(a)
}

fn lookup(k: u32, r: usize, beta: &[u32]) -> usize {
    enumeration(k, r)
        .position(beta)
        .expect("shifted index stays in the enumeration")
}

/// `ell(m)`: moves one unit from the first nonzero entry `j` to `j-1`.
pub fn ell(k: u32, r: usize, m: usize) -> Result<usize> {
    let mut a = require_first_zero(k, r, m)?;
    let j = a
        .iter()
        .position(|&x| x > 0)
        .ok_or_else(|| arg_err("zero multi-index has no ell"))?;
    a[j] -= 1;
    a[j - 1] += 1;
    Ok(lookup(k, r, &a))
}

fn shifted(a: &[u32], moves: &[(usize, i32)]) -> Option<Vec<u32>> {
    let mut v: Vec<i64> = a.iter().map(|&x| x as i64).collect();
    for &(i, d) in moves {
        v[i] += d as i64;
    }
    if v.iter().any(|&x| x < 0) {
        return None;
    }
    Some(v.into_iter().map(|x| x as u32).collect())
}

/// The three shift families defining `A_m^{(l)}`.
pub fn set_a(l: u32, r: usize, m: usize) -> Result<BTreeSet<usize>> {
    let a = require_first_zero(l, r, m)?;
    let nz: Vec<usize> = (1..=r).filter(|&j| a[j] > 0).collect();
    let j1 = *nz.first().ok_or_else(|| arg_err("zero multi-index"))?;
    let mut out = BTreeSet::new();
    for &ji in &nz[1..] {
        for h in 0..=(ji + 1).min(r) {
            if let Some(v) = shifted(&a, &[(j1, -1), (j1 - 1, 1), (ji, -1), (h, 1)]) {
                out.insert(lookup(l, r, &v));
            }
        }
    }
    for h in 0..=j1 {
        if let Some(v) = shifted(&a, &[(j1, -1), (h, 1)]) {
            out.insert(lookup(l, r, &v));
        }
    }
    if a[j1] > 1 {
        for h in 0..=(j1 + 1).min(r) {
            if let Some(v) = shifted(&a, &[(j1, -2), (j1 - 1, 1), (h, 1)]) {
                out.insert(lookup(l, r, &v));
            }
        }
    }
    Ok(out)
}

/// `B_m^{(l)}`: single shifts `-e_j + e_h` with `alpha_j > 0`, `h <= min(j+1, r)`.
pub fn set_b(l: u32, r: usize, m: usize) -> Result<BTreeSet<usize>> {
    let a = entry(l, r, m)?;
    let mut out = BTreeSet::new();
    for j in 0..=r {
        if a[j] == 0 {
            continue;
        }
        for h in 0..=(j + 1).min(r) {
            let v = shifted(&a, &[(j, -1), (h, 1)]).expect("alpha_j > 0");
            out.insert(lookup(l, r, &v));
        }
    }
    Ok(out)
}

/// Block forms of derivatives produced by `[D^alpha, Tr(Q D^2)]` for
/// `|alpha| = i_m^{(l)}` with `Q` living on block 0: `i_m - g + 2 e_0` for
/// every nonzero `g <= i_m`. Reconstructed from the commutator pattern.
pub fn set_c(l: u32, r: usize, m: usize) -> Result<BTreeSet<BlockMultiIndex>> {
    let a = entry(l, r, m)?;
    let mut out = BTreeSet::new();
    let mut g = vec![0u32; r + 1];
    loop {
        let mut i = 0;
        loop {
            if i > r {
                return Ok(out);
            }
            if g[i] < a[i] {
                g[i] += 1;
                break;
            }
            g[i] = 0;
            i += 1;
        }
        let mut b: Vec<u32> = a.iter().zip(&g).map(|(x, y)| x - y).collect();
        b[0] += 2;
        out.insert(BlockMultiIndex(b));
    }
}

/// Number of full multi-indices with block form `beta`.
pub fn block_size(beta: &[u32], sizes: &[usize]) -> usize {
    beta.iter()
        .zip(sizes)
        .map(|(&b, &p)| binom(b as u64 + p as u64 - 1, p as u64 - 1) as usize)
        .product()
}

fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    // descending lexicographic
    if parts == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in (0..=total).rev() {
        for mut rest in compositions(total - first, parts - 1) {
            let mut v = Vec::with_capacity(parts);
            v.push(first);
            v.append(&mut rest);
            out.push(v);
        }
    }
    out
}

/// Entries of the block `D^k_j`: full multi-indices with `|alpha| = beta`,
/// ordered so that `D^alpha` precedes `D^beta` when `beta ≼ alpha`.
pub fn full_indices_in_block(beta: &[u32], structure: &BlockStructure) -> Vec<FullMultiIndex> {
    let mut acc: Vec<Vec<u32>> = vec![Vec::new()];
    for (j, &bj) in beta.iter().enumerate() {
        let parts = compositions(bj, structure.sizes[j]);
        let mut next = Vec::with_capacity(acc.len() * parts.len());
        for a in &acc {
            for p in &parts {
                let mut v = a.clone();
                v.extend_from_slice(p);
                next.push(v);
            }
        }
        acc = next;
    }
    acc.sort_by(|x, y| precedes(y, x));
    acc.into_iter().map(FullMultiIndex).collect()
}

/// Splits all order-`k` derivatives into the blocks `D^k_1, ..., D^k_c`.
pub fn split_derivatives(k: u32, structure: &BlockStructure) -> Vec<Vec<FullMultiIndex>> {
    enumeration(k, structure.r)
        .items
        .iter()
        .map(|b| full_indices_in_block(b, structure))
        .collect()
}

/// Integer linear combination of entries `b_{i tau}` (0-based).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinearForm(pub BTreeMap<(usize, usize), i64>);

impl LinearForm {
    pub fn add(&mut self, key: (usize, usize), c: i64) {
        let e = self.0.entry(key).or_insert(0);
        *e += c;
        if *e == 0 {
            self.0.remove(&key);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn eval(&self, b: &DMatrix<f64>) -> f64 {
        self.0
            .iter()
            .map(|(&(i, t), &c)| c as f64 * b[(i, t)])
            .sum()
    }
}

/// Which drift entries are treated as symbolically present.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftPattern {
    /// Every `b_{i tau}`.
    Dense,
    /// Zero below the first block sub-diagonal.
    Block,
    /// Only the sub-diagonal blocks `B_1, ..., B_r`.
    SubDiagonal,
}

fn allowed(pattern: DriftPattern, structure: &BlockStructure, i: usize, tau: usize) -> bool {
    match pattern {
        DriftPattern::Dense => true,
        DriftPattern::Block => structure.block_of(i) <= structure.block_of(tau) + 1,
        DriftPattern::SubDiagonal => structure.block_of(i) == structure.block_of(tau) + 1,
    }
}

/// `[D^alpha, <B., D>] = sum_{tau, i} alpha_tau b_{i tau} D^{alpha - e_tau + e_i}`
/// with coefficients kept as integer linear forms in the entries of `B`.
pub fn commutator_drift_symbolic(
    alpha: &FullMultiIndex,
    structure: &BlockStructure,
    pattern: DriftPattern,
) -> BTreeMap<FullMultiIndex, LinearForm> {
    let n = alpha.0.len();
    let mut out: BTreeMap<FullMultiIndex, LinearForm> = BTreeMap::new();
    for tau in 0..n {
        let at = alpha.0[tau];
        if at == 0 {
            continue;
        }
        for i in 0..n {
            if !allowed(pattern, structure, i, tau) {
                continue;
            }
            let mut beta = alpha.0.clone();
            beta[tau] -= 1;
            beta[i] += 1;
            out.entry(FullMultiIndex(beta))
                .or_default()
                .add((i, tau), at as i64);
        }
    }
    out.retain(|_, f| !f.is_zero());
    out
}

/// Numeric form of [`commutator_drift_symbolic`]; zero coefficients dropped.
pub fn commutator_drift(
    alpha: &FullMultiIndex,
    structure: &BlockStructure,
    b_mat: &DMatrix<f64>,
) -> Vec<(f64, FullMultiIndex)> {
    commutator_drift_symbolic(alpha, structure, DriftPattern::Dense)
        .into_iter()
        .map(|(beta, f)| (f.eval(b_mat), beta))
        .filter(|(c, _)| *c != 0.0)
        .collect()
}

/// Matrix of linear forms.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<LinearForm>,
}

impl SymbolicMatrix {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![LinearForm::default(); rows * cols],
        }
    }

    pub fn at(&self, i: usize, j: usize) -> &LinearForm {
        &self.entries[i * self.cols + j]
    }

    fn at_mut(&mut self, i: usize, j: usize) -> &mut LinearForm {
        &mut self.entries[i * self.cols + j]
    }

    pub fn eval(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| self.at(i, j).eval(b))
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(|f| f.is_zero())
    }
}

/// Symbolic commutator of a whole block `D^l_p`, sorted by target block.
/// Row `a` of the matrix keyed by `s` holds the coefficients of `D^l_s w` in
/// the commutator of the `a`-th entry of `D^l_p`.
pub fn block_commutator(
    l: u32,
    p: usize,
    structure: &BlockStructure,
    pattern: DriftPattern,
) -> Result<BTreeMap<usize, SymbolicMatrix>> {
    let r = structure.r;
    let src = entry(l, r, p)?;
    let rows = full_indices_in_block(&src, structure);
    let en = enumeration(l, r);
    let mut cols_cache: HashMap<usize, HashMap<FullMultiIndex, usize>> = HashMap::new();
    let mut out: BTreeMap<usize, SymbolicMatrix> = BTreeMap::new();
    for (a, alpha) in rows.iter().enumerate() {
        for (beta, form) in commutator_drift_symbolic(alpha, structure, pattern) {
            let s = en
                .position(&structure.compress(&beta.0))
                .expect("same order stays in the enumeration");
            let cols = cols_cache.entry(s).or_insert_with(|| {
                full_indices_in_block(en.get(s).expect("valid"), structure)
                    .into_iter()
                    .enumerate()
                    .map(|(i, f)| (f, i))
                    .collect()
            });
            let ncols = cols.len();
            let c = cols[&beta];
            let mat = out
                .entry(s)
                .or_insert_with(|| SymbolicMatrix::zeros(rows.len(), ncols));
            for (&k, &v) in &form.0 {
                mat.at_mut(a, c).add(k, v);
            }
        }
    }
    out.retain(|_, m| !m.is_zero());
    Ok(out)
}

/// The commutator matrices of level `l` around position `m`.
#[derive(Debug, Clone)]
pub struct JAssembly {
    pub l: u32,
    pub m: usize,
    pub ell_m: usize,
    /// `J_m`: coefficients of `D^l_m` in `[D^l_{ell(m)}, <B., D>]`.
    pub j_symbolic: SymbolicMatrix,
    pub j: DMatrix<f64>,
    /// Remaining targets of `[D^l_{ell(m)}, <B., D>]`.
    pub m_blocks: BTreeMap<usize, DMatrix<f64>>,
    /// Targets of `[D^l_m, <B., D>]`.
    pub n_blocks: BTreeMap<usize, DMatrix<f64>>,
    pub singular_values: Vec<f64>,
}

impl JAssembly {
    pub fn sigma_min(&self) -> f64 {
        if self.singular_values.len() < self.j.ncols() {
            0.0
        } else {
            self.singular_values.last().copied().unwrap_or(0.0)
        }
    }

    pub fn full_column_rank(&self, tol: f64) -> bool {
        self.sigma_min() > tol
    }
}

/// Assembles `J_m^{(l)}` and its companions. `b_mat` is expressed in the
/// adapted coordinates of `structure`.
pub fn assemble_j(
    l: u32,
    m: usize,
    structure: &BlockStructure,
    b_mat: &DMatrix<f64>,
) -> Result<JAssembly> {
    let n = structure.dim();
    if b_mat.nrows() != n || b_mat.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "B must be {n}x{n} for this structure"
        )));
    }
    let r = structure.r;
    let lm = ell(l, r, m)?;
    let from_ell = block_commutator(l, lm, structure, DriftPattern::Dense)?;
    let rows = block_size(&entry(l, r, lm)?, &structure.sizes);
    let cols = block_size(&entry(l, r, m)?, &structure.sizes);
    let j_symbolic = from_ell
        .get(&m)
        .cloned()
        .unwrap_or_else(|| SymbolicMatrix::zeros(rows, cols));
    let j = j_symbolic.eval(b_mat);
    let m_blocks = from_ell
        .iter()
        .filter(|(k, _)| **k != m)
        .map(|(k, s)| (*k, s.eval(b_mat)))
        .collect();
    let n_blocks = block_commutator(l, m, structure, DriftPattern::Dense)?
        .iter()
        .map(|(k, s)| (*k, s.eval(b_mat)))
        .collect();
    let singular_values = linalg::singular_values(&j);
    Ok(JAssembly {
        l,
        m,
        ell_m: lm,
        j_symbolic,
        j,
        m_blocks,
        n_blocks,
        singular_values,
    })
}

/// Assembles every `J_m^{(l)}` for `m > c_{l-1}` and fails on the first one
/// whose smallest singular value is at or below `tol`.
pub fn check_full_rank(
    l: u32,
    structure: &BlockStructure,
    b_mat: &DMatrix<f64>,
    tol: f64,
) -> Result<Vec<JAssembly>> {
    let r = structure.r;
    let lo = c_count(l - 1, r);
    let hi = c_count(l, r);
    let mut out = Vec::with_capacity(hi - lo);
    for m in (lo + 1)..=hi {
        let a = assemble_j(l, m, structure, b_mat)?;
        if !a.full_column_rank(tol) {
            return Err(Error::RankDeficient(format!(
                "J_{m}^({l}) block {:?} ({}x{}) has singular values {:?}",
                entry(l, r, m)?,
                a.j.nrows(),
                a.j.ncols(),
                a.singular_values
            )));
        }
        out.push(a);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_enumerations() {
        assert_eq!(enumeration(1, 1).items, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(
            enumeration(2, 1).items,
            vec![vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(enumeration(3, 0).items, vec![vec![3]]);
        assert_eq!(c_count(2, 1), 3);
    }

    #[test]
    fn ell_examples() {
        assert_eq!(ell(1, 1, 2).unwrap(), 1);
        assert_eq!(ell(2, 1, 3).unwrap(), 2);
        assert!(ell(2, 1, 1).is_err());
    }

    #[test]
    fn set_examples() {
        // i_2 = (0,1) at l = 1: only family two applies, giving (1,0) and (0,1)
        assert_eq!(set_a(1, 1, 2).unwrap(), BTreeSet::from([1, 2]));
        // i_1 = (1,0): j = 0, h <= 1
        assert_eq!(set_b(1, 1, 1).unwrap(), BTreeSet::from([1, 2]));
    }

    #[test]
    fn kolmogorov_commutator() {
        let s = BlockStructure::identity(vec![1, 1]).unwrap();
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        let c = commutator_drift(&FullMultiIndex(vec![1, 0]), &s, &b);
        assert_eq!(c, vec![(1.0, FullMultiIndex(vec![0, 1]))]);
        assert!(commutator_drift(&FullMultiIndex(vec![0, 0]), &s, &b).is_empty());
        let a = assemble_j(1, 2, &s, &b).unwrap();
        assert_eq!(a.j, DMatrix::from_element(1, 1, 1.0));
    }

    #[test]
    fn block_order_within() {
        let s = BlockStructure::identity(vec![2]).unwrap();
        let v = full_indices_in_block(&[1], &s);
        assert_eq!(
            v,
            vec![FullMultiIndex(vec![0, 1]), FullMultiIndex(vec![1, 0])]
        );
    }

    #[test]
    fn csv_export() {
        let csv = enumeration(1, 1).to_csv();
        assert_eq!(csv, "position,beta0,beta1\n1,1,0\n2,0,1\n");
    }
}
