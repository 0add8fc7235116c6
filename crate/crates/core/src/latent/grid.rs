//! Regular tensor grids over `[0,1]^D` with a staircase mask.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::BoxRegion;
use crate::error::{io_err, IdpgError, Result};

/// Which cells of the grid are live.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    /// Every cell.
    Full,
    /// Cells whose centre lies in `B^D_+`.
    Ball,
    /// `D = 2d`: centre's first and last `d` coordinates each lie in `B^d_+`.
    BallPair,
}

impl MaskKind {
    fn admits(self, c: &[f64]) -> bool {
        let sq = |s: &[f64]| s.iter().map(|v| v * v).sum::<f64>();
        match self {
            MaskKind::Full => true,
            MaskKind::Ball => sq(c) <= 1.0,
            MaskKind::BallPair => {
                let d = c.len() / 2;
                sq(&c[..d]) <= 1.0 && sq(&c[d..]) <= 1.0
            }
        }
    }
}

/// Non-negative cell values on a uniform grid over `[0,1]^dim`.
///
/// Cell `i` along an axis spans `[i h, (i+1) h]` with `h = 1/points_per_axis`;
/// the stored value applies to the whole cell. Storage is row-major with the
/// last axis fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct GridField {
    dim: usize,
    n: usize,
    mask_kind: MaskKind,
    mask: Vec<bool>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridHeader {
    dims: usize,
    points_per_axis: usize,
    spacing: f64,
    mask: MaskKind,
    /// Payload path relative to the header.
    data: String,
}

impl GridField {
    pub fn zeros(dim: usize, points_per_axis: usize, mask_kind: MaskKind) -> Result<Self> {
        if dim == 0 || points_per_axis == 0 {
            return Err(IdpgError::InvalidParameter(
                "grid needs dim >= 1 and points_per_axis >= 1".into(),
            ));
        }
        if mask_kind == MaskKind::BallPair && dim % 2 != 0 {
            return Err(IdpgError::InvalidParameter(
                "ball-pair mask needs an even dimension".into(),
            ));
        }
        let len = points_per_axis
            .checked_pow(dim as u32)
            .filter(|&l| l <= 1 << 28)
            .ok_or_else(|| IdpgError::InvalidParameter("grid too large".into()))?;
        let mut g = Self {
            dim,
            n: points_per_axis,
            mask_kind,
            mask: vec![false; len],
            values: vec![0.0; len],
        };
        let mut c = vec![0.0; dim];
        for i in 0..len {
            g.center_into(i, &mut c);
            g.mask[i] = mask_kind.admits(&c);
        }
        Ok(g)
    }

    /// Tabulates `f` at live cell centres.
    pub fn from_fn(
        dim: usize,
        points_per_axis: usize,
        mask_kind: MaskKind,
        mut f: impl FnMut(&[f64]) -> f64,
    ) -> Result<Self> {
        let mut g = Self::zeros(dim, points_per_axis, mask_kind)?;
        let mut c = vec![0.0; dim];
        for i in 0..g.values.len() {
            if g.mask[i] {
                g.center_into(i, &mut c);
                g.values[i] = f(&c);
            }
        }
        g.validate()?;
        Ok(g)
    }

    /// Wraps raw row-major values; entries outside the mask must be zero.
    pub fn from_values(
        dim: usize,
        points_per_axis: usize,
        mask_kind: MaskKind,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut g = Self::zeros(dim, points_per_axis, mask_kind)?;
        if values.len() != g.values.len() {
            return Err(IdpgError::InvalidParameter(format!(
                "expected {} grid values, got {}",
                g.values.len(),
                values.len()
            )));
        }
        g.values = values;
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        for (i, &v) in self.values.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(IdpgError::InvalidParameter(format!(
                    "grid value {v} at cell {i} is not finite and non-negative"
                )));
            }
            if !self.mask[i] && v != 0.0 {
                return Err(IdpgError::InvalidParameter(format!(
                    "grid value {v} at masked-out cell {i}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn mask_kind(&self) -> MaskKind {
        self.mask_kind
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Replaces the values, enforcing the field invariants.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.values.len() {
            return Err(IdpgError::InvalidParameter("grid length mismatch".into()));
        }
        let old = std::mem::replace(&mut self.values, values);
        if let Err(e) = self.validate() {
            self.values = old;
            return Err(e);
        }
        Ok(())
    }

    pub(crate) fn values_mut_unchecked(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Multi-index of a flat cell index.
    pub fn unravel(&self, mut i: usize, out: &mut [usize]) {
        for a in (0..self.dim).rev() {
            out[a] = i % self.n;
            i /= self.n;
        }
    }

    pub fn ravel(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.n + k)
    }

    pub fn center_into(&self, i: usize, out: &mut [f64]) {
        let h = self.spacing();
        let mut i = i;
        for a in (0..self.dim).rev() {
            out[a] = ((i % self.n) as f64 + 0.5) * h;
            i /= self.n;
        }
    }

    pub fn center(&self, i: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        self.center_into(i, &mut c);
        c
    }

    /// Flat index of the cell containing `x`, if `x ∈ [0,1]^dim`.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim {
            return None;
        }
        let mut i = 0;
        for &v in x {
            if !(0.0..=1.0).contains(&v) {
                return None;
            }
            let k = ((v * self.n as f64) as usize).min(self.n - 1);
            i = i * self.n + k;
        }
        Some(i)
    }

    /// Piecewise-constant value at `x` (zero outside the mask).
    pub fn value_at(&self, x: &[f64]) -> f64 {
        self.locate(x).map_or(0.0, |i| self.values[i])
    }

    /// `∫ field` treating each cell as constant.
    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Exact integrals of the piecewise-constant field (or of its square)
    /// over the intersection with `region`: mass, first moments and second
    /// moments.
    pub(crate) fn box_moments(&self, region: &BoxRegion, squared: bool) -> BoxIntegrals {
        let d = self.dim;
        let h = self.spacing();
        let mut out = BoxIntegrals::zeros(d);
        if region.is_empty() {
            return out;
        }
        // Per-axis clipped lengths and in-cell means for every cell index.
        let mut len = vec![vec![0.0; self.n]; d];
        let mut m1 = vec![vec![0.0; self.n]; d];
        let mut m2 = vec![vec![0.0; self.n]; d];
        for a in 0..d {
            for k in 0..self.n {
                let lo = (k as f64 * h).max(region.lower[a]);
                let hi = ((k + 1) as f64 * h).min(region.upper[a]);
                if hi > lo {
                    len[a][k] = hi - lo;
                    m1[a][k] = 0.5 * (hi + lo);
                    m2[a][k] = (hi * hi + hi * lo + lo * lo) / 3.0;
                }
            }
        }
        let mut idx = vec![0usize; d];
        for i in 0..self.values.len() {
            let v = self.values[i];
            if v == 0.0 {
                continue;
            }
            self.unravel(i, &mut idx);
            let mut w = if squared { v * v } else { v };
            for a in 0..d {
                w *= len[a][idx[a]];
            }
            if w == 0.0 {
                continue;
            }
            out.mass += w;
            for a in 0..d {
                let ma = m1[a][idx[a]];
                out.first[a] += w * ma;
                out.second[a * d + a] += w * m2[a][idx[a]];
                for b in 0..a {
                    let t = w * ma * m1[b][idx[b]];
                    out.second[a * d + b] += t;
                    out.second[b * d + a] += t;
                }
            }
        }
        out
    }

    /// Writes the JSON header to `header` and the little-endian f64 payload
    /// next to it (same stem, `.bin`).
    pub fn save(&self, header: &Path) -> Result<()> {
        let bin = header.with_extension("bin");
        let hdr = GridHeader {
            dims: self.dim,
            points_per_axis: self.n,
            spacing: self.spacing(),
            mask: self.mask_kind,
            data: bin
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
        };
        fs::write(header, serde_json::to_vec_pretty(&hdr)?).map_err(io_err(header))?;
        let f = fs::File::create(&bin).map_err(io_err(&bin))?;
        let mut w = BufWriter::new(f);
        for v in &self.values {
            w.write_all(&v.to_le_bytes()).map_err(io_err(&bin))?;
        }
        w.flush().map_err(io_err(&bin))?;
        Ok(())
    }

    pub fn load(header: &Path) -> Result<Self> {
        let text = fs::read_to_string(header).map_err(io_err(header))?;
        let hdr: GridHeader = serde_json::from_str(&text)?;
        if (hdr.spacing - 1.0 / hdr.points_per_axis as f64).abs() > 1e-12 {
            return Err(IdpgError::InvalidParameter(format!(
                "grid spacing {} inconsistent with {} points per axis",
                hdr.spacing, hdr.points_per_axis
            )));
        }
        let bin: PathBuf = header
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&hdr.data);
        let f = fs::File::open(&bin).map_err(io_err(&bin))?;
        let mut bytes = Vec::new();
        BufReader::new(f)
            .read_to_end(&mut bytes)
            .map_err(io_err(&bin))?;
        if bytes.len() % 8 != 0 {
            return Err(IdpgError::InvalidParameter(format!(
                "{} is not a whole number of f64 values",
                bin.display()
            )));
        }
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_values(hdr.dims, hdr.points_per_axis, hdr.mask, values)
    }
}

/// Output of [`GridField::box_moments`]; `second` is row-major `d × d`.
#[derive(Clone, Debug)]
pub(crate) struct BoxIntegrals {
    pub mass: f64,
    pub first: Vec<f64>,
    pub second: Vec<f64>,
}

impl BoxIntegrals {
    pub fn zeros(d: usize) -> Self {
        Self {
            mass: 0.0,
            first: vec![0.0; d],
            second: vec![0.0; d * d],
        }
    }
}
