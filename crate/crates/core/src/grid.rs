//! Uniform tensor grids and the functions sampled on them.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{arg_err, Error, Result};

pub const MAX_DIM: usize = 4;
const MAGIC: &[u8; 4] = b"HYGF";

/// Values on the nodes of a box grid, stored row-major (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, counts: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let dim = lo.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(arg_err(format!(
                "grid dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        if hi.len() != dim || counts.len() != dim {
            return Err(Error::DimensionMismatch(
                "bounds and counts disagree in length".into(),
            ));
        }
        for a in 0..dim {
            if !(lo[a].is_finite() && hi[a].is_finite() && hi[a] > lo[a]) {
                return Err(arg_err(format!(
                    "axis {a}: need lo < hi, got [{}, {}]",
                    lo[a], hi[a]
                )));
            }
            if counts[a] < 3 {
                return Err(arg_err(format!("axis {a}: need at least 3 nodes")));
            }
        }
        let total: usize = counts.iter().product();
        if values.len() != total {
            return Err(Error::DimensionMismatch(format!(
                "expected {total} values, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at flat index {i}")));
        }
        let spacing = (0..dim)
            .map(|a| (hi[a] - lo[a]) / (counts[a] - 1) as f64)
            .collect();
        Ok(Self {
            lo,
            hi,
            spacing,
            counts,
            values,
        })
    }

    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        lo: Vec<f64>,
        hi: Vec<f64>,
        counts: Vec<usize>,
        f: F,
    ) -> Result<Self> {
        let zeros = vec![0.0; counts.iter().product()];
        let mut g = Self::new(lo, hi, counts, zeros)?;
        let mut x = vec![0.0; g.dim()];
        for i in 0..g.values.len() {
            g.coords_into(i, &mut x);
            g.values[i] = f(&x);
        }
        if let Some(i) = g.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid value at flat index {i}")));
        }
        Ok(g)
    }

    /// Same grid, different values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(
            self.lo.clone(),
            self.hi.clone(),
            self.counts.clone(),
            values,
        )
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dim()];
        for a in (0..self.dim().saturating_sub(1)).rev() {
            s[a] = s[a + 1] * self.counts[a + 1];
        }
        s
    }

    pub fn unflatten(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = i % self.counts[a];
            i /= self.counts[a];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.counts)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn coords_into(&self, mut i: usize, x: &mut [f64]) {
        for a in (0..self.dim()).rev() {
            let k = i % self.counts[a];
            i /= self.counts[a];
            x[a] = self.lo[a] + k as f64 * self.spacing[a];
        }
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.coords_into(i, &mut x);
        x
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.unflatten(i)
            .iter()
            .zip(&self.counts)
            .any(|(&k, &n)| k == 0 || k + 1 == n)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Restriction to the nodes inside `[lo, hi]` (with a small slack).
    pub fn restrict(&self, lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != self.dim() || hi.len() != self.dim() {
            return Err(Error::DimensionMismatch("sub-box dimension".into()));
        }
        let mut first = Vec::with_capacity(self.dim());
        let mut cnt = Vec::with_capacity(self.dim());
        for a in 0..self.dim() {
            let h = self.spacing[a];
            let k0 = ((lo[a] - self.lo[a]) / h - 1e-9).ceil().max(0.0) as usize;
            let k1 = ((hi[a] - self.lo[a]) / h + 1e-9).floor() as isize;
            let k1 = k1.min(self.counts[a] as isize - 1);
            if k1 < k0 as isize + 2 {
                return Err(arg_err(format!(
                    "sub-box has fewer than 3 nodes on axis {a}"
                )));
            }
            first.push(k0);
            cnt.push(k1 as usize - k0 + 1);
        }
        Ok(self.window(&first, &cnt))
    }

    /// Sub-grid starting at node index `first` with `cnt` nodes per axis.
    pub(crate) fn window(&self, first: &[usize], cnt: &[usize]) -> Self {
        let dim = self.dim();
        let total: usize = cnt.iter().product();
        let mut values = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        let mut src = vec![0usize; dim];
        for _ in 0..total {
            for a in 0..dim {
                src[a] = first[a] + idx[a];
            }
            values.push(self.values[self.flatten(&src)]);
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] < cnt[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let lo: Vec<f64> = (0..dim)
            .map(|a| self.lo[a] + first[a] as f64 * self.spacing[a])
            .collect();
        let hi: Vec<f64> = (0..dim)
            .map(|a| self.lo[a] + (first[a] + cnt[a] - 1) as f64 * self.spacing[a])
            .collect();
        Self {
            lo,
            hi,
            spacing: self.spacing.clone(),
            counts: cnt.to_vec(),
            values,
        }
    }

    /// Central first difference along `axis`, on the interior nodes of that axis.
    pub fn derivative(&self, axis: usize) -> Result<Self> {
        if axis >= self.dim() {
            return Err(arg_err(format!("axis {axis} out of range")));
        }
        if self.counts[axis] < 5 {
            return Err(Error::Resolution(format!(
                "axis {axis} has {} nodes, too few to differentiate",
                self.counts[axis]
            )));
        }
        let st = self.strides()[axis];
        let mut first = vec![0; self.dim()];
        first[axis] = 1;
        let mut cnt = self.counts.clone();
        cnt[axis] -= 2;
        let mut out = self.window(&first, &cnt);
        let inv = 0.5 / self.spacing[axis];
        let ostr = out.strides();
        let sstr = self.strides();
        for (o, v) in out.values.iter_mut().enumerate() {
            let mut rem = o;
            let mut src = 0;
            for a in 0..self.dim() {
                let k = rem / ostr[a];
                rem %= ostr[a];
                src += (k + first[a]) * sstr[a];
            }
            *v = (self.values[src + st] - self.values[src - st]) * inv;
        }
        Ok(out)
    }

    /// `D^alpha` by repeated central differences.
    pub fn derivative_multi(&self, alpha: &[u32]) -> Result<Self> {
        if alpha.len() != self.dim() {
            return Err(Error::DimensionMismatch("multi-index length".into()));
        }
        let mut g = self.clone();
        for (a, &k) in alpha.iter().enumerate() {
            for _ in 0..k {
                g = g.derivative(a)?;
            }
        }
        Ok(g)
    }

    /// Multilinear interpolation, clamped to the box.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        let dim = self.dim();
        let st = self.strides();
        let mut base = 0;
        let mut frac = [0.0; MAX_DIM];
        for a in 0..dim {
            let s = ((x[a] - self.lo[a]) / self.spacing[a]).clamp(0.0, (self.counts[a] - 1) as f64);
            let k = (s.floor() as usize).min(self.counts[a] - 2);
            frac[a] = s - k as f64;
            base += k * st[a];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut off = 0;
            for a in 0..dim {
                if corner >> a & 1 == 1 {
                    w *= frac[a];
                    off += st[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.values[base + off];
            }
        }
        acc
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(16 + dim * 32 + self.values.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(dim as u64).to_le_bytes());
        for &c in &self.counts {
            out.extend_from_slice(&(c as u64).to_le_bytes());
        }
        for a in 0..dim {
            out.extend_from_slice(&self.lo[a].to_le_bytes());
            out.extend_from_slice(&self.hi[a].to_le_bytes());
            out.extend_from_slice(&self.spacing[a].to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Config(format!("grid file: {m}"));
        if bytes.len() < 12 || &bytes[..4] != MAGIC {
            return Err(bad("missing header"));
        }
        let mut pos = 4;
        let take8 = |pos: &mut usize| -> Result<[u8; 8]> {
            let s = bytes.get(*pos..*pos + 8).ok_or_else(|| bad("truncated"))?;
            *pos += 8;
            Ok(s.try_into().expect("8 bytes"))
        };
        let dim = u64::from_le_bytes(take8(&mut pos)?) as usize;
        if dim == 0 || dim > MAX_DIM {
            return Err(bad("dimension out of range"));
        }
        let mut counts = Vec::with_capacity(dim);
        for _ in 0..dim {
            counts.push(u64::from_le_bytes(take8(&mut pos)?) as usize);
        }
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for _ in 0..dim {
            lo.push(f64::from_le_bytes(take8(&mut pos)?));
            hi.push(f64::from_le_bytes(take8(&mut pos)?));
            take8(&mut pos)?;
        }
        let total = counts
            .iter()
            .try_fold(1usize, |acc, &c| acc.checked_mul(c))
            .ok_or_else(|| bad("size overflow"))?;
        if bytes.len() != pos + total * 8 {
            return Err(bad("value count does not match header"));
        }
        let values = bytes[pos..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Self::new(lo, hi, counts, values)
    }

    pub fn to_csv(&self) -> String {
        let dim = self.dim();
        let mut s = String::new();
        for a in 0..dim {
            let _ = write!(s, "x{a},");
        }
        s.push_str("value\n");
        let mut x = vec![0.0; dim];
        for (i, v) in self.values.iter().enumerate() {
            self.coords_into(i, &mut x);
            for xa in &x {
                let _ = write!(s, "{xa:.17e},");
            }
            let _ = writeln!(s, "{v:.17e}");
        }
        s
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
