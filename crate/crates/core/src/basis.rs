//! Adapted orthonormal basis bringing `B` to block sub-diagonal form.

use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{arg_err, Error, Result};
use crate::linalg::{self, orthonormal_extension};
use crate::operator::{FullOperatorSpec, MatrixField, OperatorSpec, VectorField};

pub const PATTERN_TOL: f64 = 1e-10;
pub const BLOCK_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockStructure {
    pub r: usize,
    pub sizes: Vec<usize>,
    pub basis_u: DMatrix<f64>,
    pub ranges: Vec<Range<usize>>,
}

fn ranges_for(sizes: &[usize]) -> Vec<Range<usize>> {
    let mut out = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &p in sizes {
        out.push(start..start + p);
        start += p;
    }
    out
}

impl BlockStructure {
    pub fn new(sizes: Vec<usize>, basis_u: DMatrix<f64>) -> Result<Self> {
        if sizes.is_empty() || sizes.contains(&0) {
            return Err(arg_err("block sizes must be positive and nonempty"));
        }
        if sizes.windows(2).any(|w| w[1] > w[0]) {
            return Err(arg_err(format!(
                "block sizes must be non-increasing: {sizes:?}"
            )));
        }
        let n: usize = sizes.iter().sum();
        if basis_u.nrows() != n || basis_u.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "basis must be {n}x{n} for sizes {sizes:?}"
            )));
        }
        let err = (basis_u.transpose() * &basis_u - DMatrix::<f64>::identity(n, n)).amax();
        if err > PATTERN_TOL {
            return Err(arg_err(format!("basis is not orthogonal (error {err:e})")));
        }
        let ranges = ranges_for(&sizes);
        Ok(Self {
            r: sizes.len() - 1,
            sizes,
            basis_u,
            ranges,
        })
    }

    /// Structure for coordinates that are already adapted.
    pub fn identity(sizes: Vec<usize>) -> Result<Self> {
        let n = sizes.iter().sum();
        Self::new(sizes, DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// Block index of coordinate `i`.
    pub fn block_of(&self, i: usize) -> usize {
        self.ranges
            .iter()
            .position(|rg| rg.contains(&i))
            .expect("coordinate inside the structure")
    }

    /// `|alpha| = (||alpha_0||, ..., ||alpha_r||)`.
    pub fn compress(&self, alpha: &[u32]) -> Vec<u32> {
        self.ranges
            .iter()
            .map(|rg| alpha[rg.clone()].iter().sum())
            .collect()
    }
}

/// Orthonormal bases of `V_0 ⊂ V_1 ⊂ ... = R^N`, where `V_k` is the span of
/// the columns of `Q, BQ, ..., B^k Q`.
pub fn nested_spaces(q0: &DMatrix<f64>, b_mat: &DMatrix<f64>) -> Result<Vec<DMatrix<f64>>> {
    let n = linalg::check_same_square(q0, b_mat)?;
    let mut out: Vec<DMatrix<f64>> = Vec::new();
    let mut basis = DMatrix::zeros(n, 0);
    let mut blk = q0.clone();
    let mut scale = 0.0f64;
    for k in 0..n {
        scale = scale.max(blk.norm());
        let atol = 1e-10 * scale.max(f64::MIN_POSITIVE);
        let ext = orthonormal_extension(&basis, &blk, atol);
        if ext.ncols() == 0 {
            return Err(Error::NotHypoelliptic(format!(
                "nested spaces stall at dimension {} after {} steps",
                basis.ncols(),
                k
            )));
        }
        let mut cols: Vec<DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
        cols.extend(ext.column_iter().map(|c| c.into_owned()));
        basis = DMatrix::from_columns(&cols);
        out.push(basis.clone());
        if basis.ncols() == n {
            return Ok(out);
        }
        blk = b_mat * blk;
    }
    Err(Error::NotHypoelliptic(format!(
        "nested spaces reach only dimension {} of {n}",
        basis.ncols()
    )))
}

/// Stacks orthonormal bases of `W_0 = V_0`, `W_k = V_k ⊖ V_{k-1}`.
pub fn adapted_basis(q0: &DMatrix<f64>, b_mat: &DMatrix<f64>) -> Result<BlockStructure> {
    let spaces = nested_spaces(q0, b_mat)?;
    let mut sizes = Vec::with_capacity(spaces.len());
    let mut prev = 0;
    for v in &spaces {
        sizes.push(v.ncols() - prev);
        prev = v.ncols();
    }
    let u = spaces.last().expect("at least one space").clone();
    if sizes.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::BlockPattern(format!(
            "block sizes {sizes:?} are not non-increasing"
        )));
    }
    BlockStructure::new(sizes, u)
}

/// Operator rewritten in adapted coordinates `y = U* x`.
#[derive(Clone)]
pub struct TransformedSpec {
    pub structure: BlockStructure,
    pub b_new: DMatrix<f64>,
    /// Sub-diagonal blocks `B_1, ..., B_r`.
    pub blocks: Vec<DMatrix<f64>>,
    /// Smallest singular value of each `B_h`.
    pub block_sigma_min: Vec<f64>,
    pub spec: OperatorSpec,
}

/// Conjugates `(Q, B, F)` by `U`, checks the block pattern and full rank of
/// every `B_h`, and returns the adapted [`OperatorSpec`].
///
/// Off-block entries of `U* Q(Ux) U` are checked at the origin and at the
/// images of the coordinate unit vectors.
pub fn transform_operator(
    spec: &FullOperatorSpec,
    structure: &BlockStructure,
) -> Result<TransformedSpec> {
    let n = spec.dim_n;
    if structure.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "structure has dimension {} but operator has {n}",
            structure.dim()
        )));
    }
    let u = structure.basis_u.clone();
    let ut = u.transpose();
    let b_new = &ut * &spec.drift_b * &u;
    let bscale = b_new.amax().max(1.0);
    let rg = &structure.ranges;
    for (bi, rrow) in rg.iter().enumerate() {
        for (bj, rcol) in rg.iter().enumerate() {
            if bi >= bj + 2 {
                let blk = b_new.view((rrow.start, rcol.start), (rrow.len(), rcol.len()));
                let m = blk.amax();
                if m > PATTERN_TOL * bscale {
                    return Err(Error::BlockPattern(format!(
                        "block ({bi},{bj}) of U*BU below the sub-diagonal has entry {m:e}"
                    )));
                }
            }
        }
    }
    let mut blocks = Vec::with_capacity(structure.r);
    let mut sig = Vec::with_capacity(structure.r);
    for h in 1..=structure.r {
        let blk = b_new
            .view(
                (rg[h].start, rg[h - 1].start),
                (rg[h].len(), rg[h - 1].len()),
            )
            .into_owned();
        let sv = linalg::singular_values(&blk);
        let smin = if sv.len() < structure.sizes[h] {
            0.0
        } else {
            sv[structure.sizes[h] - 1]
        };
        if smin <= BLOCK_RANK_TOL {
            return Err(Error::RankDeficient(format!(
                "B_{h} ({}x{}) has singular values {sv:?}",
                blk.nrows(),
                blk.ncols()
            )));
        }
        blocks.push(blk);
        sig.push(smin);
    }

    let p0 = structure.sizes[0];
    let mut probes = vec![vec![0.0; n]];
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        probes.push(e);
    }
    let q_src = spec.q.clone();
    let u_c = u.clone();
    let conj_q = move |y: &[f64]| -> DMatrix<f64> {
        let x = &u_c * DVector::from_column_slice(y);
        let q = q_src.eval(x.as_slice());
        u_c.transpose() * q * &u_c
    };
    for y in &probes {
        let qf = conj_q(y);
        let qs = qf.amax().max(1.0);
        for i in 0..n {
            for j in 0..n {
                if i.max(j) >= p0 && qf[(i, j)].abs() > PATTERN_TOL * qs {
                    return Err(Error::ZeroPattern(format!(
                        "U*QU has entry ({i},{j}) = {:e} outside the leading {p0}x{p0} block",
                        qf[(i, j)]
                    )));
                }
            }
        }
    }
    let q_new: Arc<dyn MatrixField> =
        Arc::new(move |y: &[f64]| conj_q(y).view((0, 0), (p0, p0)).into_owned());
    let f_new: Option<Arc<dyn VectorField>> = match &spec.f {
        None => None,
        Some(f) => {
            let f = f.clone();
            let u_c = u.clone();
            let conj_f = move |y: &[f64]| -> DVector<f64> {
                let x = &u_c * DVector::from_column_slice(y);
                u_c.transpose() * f.eval(x.as_slice())
            };
            for y in &probes {
                let v = conj_f(y);
                let vs = v.amax().max(1.0);
                if v.rows(p0, n - p0).amax() > PATTERN_TOL * vs {
                    return Err(Error::ZeroPattern(
                        "U*F has components outside the first p0 coordinates".into(),
                    ));
                }
            }
            Some(Arc::new(move |y: &[f64]| {
                conj_f(y).rows(0, p0).into_owned()
            }))
        }
    };
    let mut new_spec = OperatorSpec::new(n, p0, b_new.clone(), q_new, f_new, spec.nu_floor)?;
    if let Some(qc) = &spec.q_const {
        let qn = &ut * qc * &u;
        new_spec.q_const = Some(qn.view((0, 0), (p0, p0)).into_owned());
    }
    Ok(TransformedSpec {
        structure: structure.clone(),
        b_new,
        blocks,
        block_sigma_min: sig,
        spec: new_spec,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::ConstantOperatorSpec;

    #[test]
    fn kolmogorov_basis() {
        let c = ConstantOperatorSpec::kolmogorov();
        let v = nested_spaces(&c.q_const, &c.drift_b).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].ncols(), 1);
        let s = adapted_basis(&c.q_const, &c.drift_b).unwrap();
        assert_eq!(s.r, 1);
        assert_eq!(s.sizes, vec![1, 1]);
        assert!((&s.basis_u - DMatrix::<f64>::identity(2, 2)).amax() < 1e-14);
        let t = transform_operator(&FullOperatorSpec::from_constant(&c, 1.0), &s).unwrap();
        assert!((&t.b_new - &c.drift_b).amax() < 1e-14);
        assert!((t.blocks[0][(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn permuted_kolmogorov() {
        let c = ConstantOperatorSpec::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        )
        .unwrap();
        let s = adapted_basis(&c.q_const, &c.drift_b).unwrap();
        assert_eq!(s.sizes, vec![1, 1]);
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((&s.basis_u - swap).amax() < 1e-14);
        let t = transform_operator(&FullOperatorSpec::from_constant(&c, 1.0), &s).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
        assert!((&t.b_new - want).amax() < 1e-14);
    }

    #[test]
    fn nonsingular_q() {
        let q = DMatrix::identity(3, 3);
        let b = DMatrix::from_element(3, 3, 0.5);
        let s = adapted_basis(&q, &b).unwrap();
        assert_eq!(s.r, 0);
        assert_eq!(s.sizes, vec![3]);
        assert!((&s.basis_u - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn non_hypoelliptic_fails() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(matches!(
            nested_spaces(&q, &DMatrix::identity(2, 2)),
            Err(Error::NotHypoelliptic(_))
        ));
    }

    #[test]
    fn compress_blocks() {
        let s = BlockStructure::identity(vec![2, 1]).unwrap();
        assert_eq!(s.compress(&[1, 2, 3]), vec![3, 3]);
        assert_eq!(s.block_of(2), 1);
    }
}
