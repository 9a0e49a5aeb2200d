//! Grid estimates of isotropic `C^k_b` norms and of the anisotropic
//! `𝒞^θ` norms built block by block.
//!
//! Hölder quotients use node pairs at least two spacings apart. Every
//! estimator is a maximum over a finite set of pairs, so refining the grid by
//! halving the spacing can only add candidates.

use rayon::prelude::*;

use crate::basis::BlockStructure;
use crate::error::{arg_err, Error, Result};
use crate::grid::GridFunction;

/// Integer offset with its precomputed weight `|delta|^{-s}`.
struct Offset {
    delta: Vec<isize>,
    weight: f64,
}

/// Lexicographically positive offsets on a grid with `counts` nodes and
/// `spacing`, at distance at least twice the largest spacing, sorted by
/// decreasing weight.
fn offsets(counts: &[usize], spacing: &[f64], s: f64) -> Vec<Offset> {
    let dim = counts.len();
    let floor = 2.0 * spacing.iter().cloned().fold(0.0, f64::max);
    let mut out = Vec::new();
    let mut d: Vec<isize> = counts.iter().map(|&n| -(n as isize - 1)).collect();
    loop {
        let first_nz = d.iter().position(|&x| x != 0);
        if matches!(first_nz, Some(p) if d[p] > 0) {
            let dist2: f64 = (0..dim).map(|a| (d[a] as f64 * spacing[a]).powi(2)).sum();
            if dist2.sqrt() >= floor * (1.0 - 1e-12) {
                out.push(Offset {
                    delta: d.clone(),
                    weight: dist2.powf(-0.5 * s),
                });
            }
        }
        let mut a = dim;
        loop {
            if a == 0 {
                out.sort_by(|x, y| y.weight.total_cmp(&x.weight));
                return out;
            }
            a -= 1;
            if d[a] < counts[a] as isize - 1 {
                d[a] += 1;
                break;
            }
            d[a] = -(counts[a] as isize - 1);
        }
    }
}

/// Largest `|f(x+delta) - f(x)| |delta|^{-s}` over a dense row-major block.
fn seminorm_dense(values: &[f64], counts: &[usize], offs: &[Offset]) -> f64 {
    let dim = counts.len();
    let (fmin, fmax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let range = fmax - fmin;
    if range == 0.0 {
        return 0.0;
    }
    let mut strides = vec![1isize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * counts[a + 1] as isize;
    }
    let last = dim - 1;
    let mut best = 0.0f64;
    let mut lo = vec![0usize; dim];
    let mut hi = vec![0usize; dim];
    let mut idx = vec![0usize; dim];
    for off in offs {
        if range * off.weight <= best {
            break;
        }
        let mut shift = 0isize;
        for a in 0..dim {
            let da = off.delta[a];
            lo[a] = (-da).max(0) as usize;
            hi[a] = (counts[a] as isize - da.max(0)) as usize;
            shift += da * strides[a];
        }
        let mut local = 0.0f64;
        idx[..last].copy_from_slice(&lo[..last]);
        loop {
            let mut base = 0isize;
            for a in 0..last {
                base += idx[a] as isize * strides[a];
            }
            let start = (base + lo[last] as isize) as usize;
            let end = (base + hi[last] as isize) as usize;
            let tgt = (start as isize + shift) as usize;
            let row = &values[start..end];
            let row2 = &values[tgt..tgt + (end - start)];
            for (x, y) in row.iter().zip(row2) {
                local = local.max((x - y).abs());
            }
            let mut a = last;
            let mut done = true;
            while a > 0 {
                a -= 1;
                idx[a] += 1;
                if idx[a] < hi[a] {
                    done = false;
                    break;
                }
                idx[a] = lo[a];
            }
            if done {
                break;
            }
        }
        best = best.max(local * off.weight);
    }
    best
}

/// Splits `g` into slices along `axes` (all other axes fixed). Returns the
/// dense values of every slice, in a deterministic order.
fn slices(g: &GridFunction, axes: &[usize]) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let dim = g.dim();
    let others: Vec<usize> = (0..dim).filter(|a| !axes.contains(a)).collect();
    let n_slices: usize = others.iter().map(|&a| g.counts[a]).product();
    let inner_counts: Vec<usize> = axes.iter().map(|&a| g.counts[a]).collect();
    let inner_spacing: Vec<f64> = axes.iter().map(|&a| g.spacing[a]).collect();
    let n_inner: usize = inner_counts.iter().product();
    let strides = g.strides();
    let mut out = vec![Vec::with_capacity(n_inner); n_slices];
    for (sid, slice) in out.iter_mut().enumerate() {
        let mut rem = sid;
        let mut base = 0;
        for &a in others.iter().rev() {
            base += (rem % g.counts[a]) * strides[a];
            rem /= g.counts[a];
        }
        for iid in 0..n_inner {
            let mut rem = iid;
            let mut off = base;
            for (k, &a) in axes.iter().enumerate().rev() {
                off += (rem % inner_counts[k]) * strides[a];
                rem /= inner_counts[k];
            }
            slice.push(g.values[off]);
        }
    }
    (out, inner_counts, inner_spacing)
}

/// Per-slice `sup |g|`, plus the per-slice `s`-Hölder seminorm when `s` is set.
fn slice_terms(g: &GridFunction, axes: &[usize], s: Option<f64>) -> Vec<f64> {
    let (sl, counts, spacing) = slices(g, axes);
    let offs = s.map(|s| offsets(&counts, &spacing, s));
    sl.par_iter()
        .map(|v| {
            let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let semi = offs.as_ref().map_or(0.0, |o| seminorm_dense(v, &counts, o));
            sup + semi
        })
        .collect()
}

/// Multi-indices over `axes` (as full-length vectors) of total order `k`.
fn orders(dim: usize, axes: &[usize], k: u32) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    fn rec(pos: usize, left: u32, axes: &[usize], cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if pos + 1 == axes.len() {
            cur[axes[pos]] = left;
            out.push(cur.clone());
            cur[axes[pos]] = 0;
            return;
        }
        for v in (0..=left).rev() {
            cur[axes[pos]] = v;
            rec(pos + 1, left - v, axes, cur, out);
        }
        cur[axes[pos]] = 0;
    }
    if axes.is_empty() {
        return out;
    }
    rec(0, k, axes, &mut vec![0; dim], &mut out);
    out
}

fn split_exponent(e: f64) -> (u32, f64) {
    let k = e.floor();
    let frac = e - k;
    if frac < 1e-12 {
        (k as u32, 0.0)
    } else if 1.0 - frac < 1e-12 {
        (k as u32 + 1, 0.0)
    } else {
        (k as u32, frac)
    }
}

/// `C^e_b` norm in the variables `axes`, taken slice by slice and maximized
/// over the remaining variables.
fn slot_norm(f: &GridFunction, axes: &[usize], e: f64) -> Result<f64> {
    let (k, frac) = split_exponent(e);
    let mut acc: Option<Vec<f64>> = None;
    for order in 0..=k {
        for beta in orders(f.dim(), axes, order) {
            let d = f.derivative_multi(&beta)?;
            let top = order == k && frac > 0.0;
            let t = slice_terms(&d, axes, top.then_some(frac));
            match acc.as_mut() {
                None => acc = Some(t),
                Some(a) => a.iter_mut().zip(&t).for_each(|(x, y)| *x += y),
            }
        }
    }
    Ok(acc.unwrap_or_default().into_iter().fold(0.0, f64::max))
}

fn check_structure(f: &GridFunction, structure: &BlockStructure) -> Result<()> {
    if structure.dim() != f.dim() {
        return Err(Error::DimensionMismatch(format!(
            "structure has dimension {} but grid has {}",
            structure.dim(),
            f.dim()
        )));
    }
    Ok(())
}

/// `||f||_{j,θ}`: sup over the other variables of the `C^{θ/(2j+1)}_b` norm
/// in the block-`j` variables. Grid axes are taken as adapted coordinates.
pub fn holder_seminorm_axis_block(
    f: &GridFunction,
    structure: &BlockStructure,
    j: usize,
    theta: f64,
) -> Result<f64> {
    check_structure(f, structure)?;
    if !(theta > 0.0 && theta < 3.0) {
        return Err(arg_err(format!("theta must lie in (0, 3), got {theta}")));
    }
    if j > structure.r {
        return Err(arg_err(format!(
            "block {j} out of range 0..={}",
            structure.r
        )));
    }
    let axes: Vec<usize> = structure.ranges[j].clone().collect();
    slot_norm(f, &axes, theta / (2 * j + 1) as f64)
}

/// `sum_j ||f||_{j,θ}`.
pub fn anisotropic_norm(f: &GridFunction, structure: &BlockStructure, theta: f64) -> Result<f64> {
    let mut total = 0.0;
    for j in 0..=structure.r {
        total += holder_seminorm_axis_block(f, structure, j, theta)?;
    }
    Ok(total)
}

/// `sum_{|α| <= [k]} sup |D^α f|` plus the Hölder seminorms of the top
/// derivatives when `k` is not an integer.
pub fn isotropic_norm(f: &GridFunction, k: f64) -> Result<f64> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(arg_err(format!(
            "k must be a finite nonnegative number, got {k}"
        )));
    }
    let (kk, frac) = split_exponent(k);
    let need = 2 * kk as usize + 3;
    if let Some(a) = f.counts.iter().position(|&n| n < need) {
        return Err(Error::Resolution(format!(
            "axis {a} has {} nodes; order {k} needs at least {need}",
            f.counts[a]
        )));
    }
    let axes: Vec<usize> = (0..f.dim()).collect();
    let mut total = 0.0;
    for order in 0..=kk {
        for alpha in orders(f.dim(), &axes, order) {
            let d = f.derivative_multi(&alpha)?;
            total += d.sup_norm();
            if order == kk && frac > 0.0 {
                let t = slice_terms(&d, &axes, Some(frac));
                total += t[0] - d.sup_norm();
            }
        }
    }
    Ok(total)
}
