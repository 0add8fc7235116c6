//! Latent geometry: the non-negative unit ball `B^d_+`, positions, the dot
//! product kernel, intensity models and their moments.

pub(crate) mod grid;
pub(crate) mod intensity;
pub(crate) mod moments;
pub(crate) mod normal;
pub(crate) mod sampler;
mod serial;

pub use grid::{GridField, MaskKind};
pub use intensity::{
    evaluate_intensity, IntensityModel, MarginalIntensity, MixtureComponent, TruncGaussian,
    TruncGaussianSpec,
};
pub use moments::{
    marginal_moments, moments, region_moments, MarginalMoments, MomentStdErrors, MomentSummary,
    QuadratureSpec, RegionMoments, DEFAULT_GRID_POINTS, DEFAULT_MC_SAMPLES,
};
pub use serial::{load_model, model_from_json, model_to_json, save_model};

use serde::{Deserialize, Serialize};

use crate::error::{IdpgError, Result};

/// Largest latent dimension accepted anywhere in the crate.
pub const MAX_DIM: usize = 16;

/// Slack allowed on `‖x‖ ≤ 1` so that values produced by rescaling to unit
/// norm are not rejected for rounding.
pub(crate) const NORM_TOL: f64 = 1e-12;

pub(crate) fn check_dim(d: usize) -> Result<()> {
    if d == 0 || d > MAX_DIM {
        return Err(IdpgError::InvalidParameter(format!(
            "latent dimension {d} outside 1..={MAX_DIM}"
        )));
    }
    Ok(())
}

pub(crate) fn in_ball(x: &[f64]) -> bool {
    x.iter().all(|&v| v >= 0.0) && x.iter().map(|v| v * v).sum::<f64>() <= 1.0 + NORM_TOL
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A point of `B^d_+`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentVector(Vec<f64>);

impl LatentVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        check_dim(coords.len())?;
        if coords.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(IdpgError::InvalidLatent(format!(
                "coordinates must be finite and non-negative: {coords:?}"
            )));
        }
        let n2: f64 = coords.iter().map(|v| v * v).sum();
        if n2 > 1.0 + NORM_TOL {
            return Err(IdpgError::InvalidLatent(format!(
                "norm {} exceeds 1",
                n2.sqrt()
            )));
        }
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LatentVector {
    type Error = IdpgError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LatentVector> for Vec<f64> {
    fn from(v: LatentVector) -> Self {
        v.0
    }
}

/// An individual's giving (green) and receiving (red) coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub g: LatentVector,
    pub r: LatentVector,
}

impl Position {
    pub fn new(g: LatentVector, r: LatentVector) -> Result<Self> {
        if g.dim() != r.dim() {
            return Err(IdpgError::DimensionMismatch {
                expected: g.dim(),
                got: r.dim(),
            });
        }
        Ok(Self { g, r })
    }

    pub fn from_coords(g: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        Self::new(LatentVector::new(g)?, LatentVector::new(r)?)
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    /// `K(s, s) = g·r`, the self-affinity.
    pub fn self_affinity(&self) -> f64 {
        dot(self.g.as_slice(), self.r.as_slice())
    }
}

/// Edge probability `g·r` between a source's green and a target's red vector.
pub fn kernel_affinity(g: &LatentVector, r: &LatentVector) -> Result<f64> {
    if g.dim() != r.dim() {
        return Err(IdpgError::DimensionMismatch {
            expected: g.dim(),
            got: r.dim(),
        });
    }
    // Cauchy–Schwarz keeps this in [0, 1]; the clamp only absorbs the
    // NORM_TOL slack.
    Ok(dot(g.as_slice(), r.as_slice()).clamp(0.0, 1.0))
}

/// Axis-aligned box `[lower, upper]`.
///
/// Over `Ω` the first `d` coordinates bound `g` and the last `d` bound `r`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(IdpgError::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(IdpgError::InvalidParameter(format!(
                "box lower {lower:?} not below upper {upper:?}"
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `[0, 1]^n`, which contains `B^n_+`.
    pub fn unit(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            upper: vec![1.0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// True when the box has zero volume.
    pub fn is_empty(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| u <= l)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Whether the box clipped to `[0,1]^n` covers all of it.
    pub fn covers_unit(&self) -> bool {
        self.lower.iter().all(|&l| l <= 0.0) && self.upper.iter().all(|&u| u >= 1.0)
    }

    /// Splits an `Ω` box into its green and red halves.
    pub fn split_omega(&self) -> Result<(BoxRegion, BoxRegion)> {
        if self.dim() % 2 != 0 {
            return Err(IdpgError::InvalidParameter(
                "Ω boxes need an even number of coordinates".into(),
            ));
        }
        let d = self.dim() / 2;
        Ok((
            BoxRegion {
                lower: self.lower[..d].to_vec(),
                upper: self.upper[..d].to_vec(),
            },
            BoxRegion {
                lower: self.lower[d..].to_vec(),
                upper: self.upper[d..].to_vec(),
            },
        ))
    }

    /// Concatenates a green and a red box into an `Ω` box.
    pub fn omega(green: &BoxRegion, red: &BoxRegion) -> BoxRegion {
        BoxRegion {
            lower: green.lower.iter().chain(&red.lower).copied().collect(),
            upper: green.upper.iter().chain(&red.upper).copied().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let g = LatentVector::new(vec![1.0, 0.0]).unwrap();
        let r = LatentVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(kernel_affinity(&g, &r).unwrap(), 0.0);
        let g = LatentVector::new(vec![0.8]).unwrap();
        let r = LatentVector::new(vec![0.9]).unwrap();
        assert!((kernel_affinity(&g, &r).unwrap() - 0.72).abs() < 1e-15);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let g = LatentVector::new(vec![0.1, 0.2]).unwrap();
        let r = LatentVector::new(vec![0.1]).unwrap();
        assert!(matches!(
            kernel_affinity(&g, &r),
            Err(IdpgError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn latent_rejects_outside_ball() {
        assert!(LatentVector::new(vec![1.5]).is_err());
        assert!(LatentVector::new(vec![-0.1, 0.2]).is_err());
        assert!(LatentVector::new(vec![0.8, 0.8]).is_err());
        assert!(LatentVector::new(vec![]).is_err());
        assert!(LatentVector::new(vec![0.0; 17]).is_err());
        assert!(LatentVector::new(vec![0.6, 0.8]).is_ok());
    }

    #[test]
    fn box_helpers() {
        let b = BoxRegion::new(vec![0.0, 0.2], vec![0.5, 0.2]).unwrap();
        assert!(b.is_empty());
        assert!(BoxRegion::new(vec![0.3], vec![0.2]).is_err());
        let om = BoxRegion::omega(&BoxRegion::unit(2), &BoxRegion::unit(2));
        let (g, r) = om.split_omega().unwrap();
        assert!(g.covers_unit() && r.covers_unit());
    }
}
