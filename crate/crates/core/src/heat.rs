//! Raw and bound heat: expected edge counts between regions of `Ω`.
//!
//! The raw heat density is `h(s, t) = K(s, t) ρ(s) ρ(t)` with
//! `K(s, t) = g_s · r_t`. Because the kernel is a sum of `d` products,
//! `H(A, B) = Σ_k [∫_A g_k ρ] [∫_B r_k ρ]` and every box integral reduces to
//! marginal region moments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IdpgError, Result};
use crate::latent::moments::{component_streams, region_moments_stream};
use crate::latent::{
    dot, BoxRegion, GridField, IntensityModel, MarginalIntensity, MaskKind, Position,
    QuadratureSpec, RegionMoments, TruncGaussian, TruncGaussianSpec,
};

/// `K(s, t) ρ(s) ρ(t)`.
pub fn raw_heat_density(model: &IntensityModel, s: &Position, t: &Position) -> Result<f64> {
    let rs = model.evaluate(s)?;
    let rt = model.evaluate(t)?;
    if rs == 0.0 || rt == 0.0 {
        return Ok(0.0);
    }
    Ok(dot(s.g.as_slice(), t.r.as_slice()) * rs * rt)
}

fn check_omega_box(model: &IntensityModel, b: &BoxRegion) -> Result<()> {
    if b.dim() != 2 * model.dim() {
        return Err(IdpgError::DimensionMismatch {
            expected: 2 * model.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// `∫_A g ρ` (source side) and `∫_B r ρ` (target side) for an `Ω` box.
fn side_vector(
    model: &IntensityModel,
    region: &BoxRegion,
    scheme: QuadratureSpec,
    source: bool,
) -> Result<Vec<f64>> {
    let d = model.dim();
    let (bg, br) = region.split_omega()?;
    let mut out = vec![0.0; d];
    if region.is_empty() {
        return Ok(out);
    }
    let mut add = |green: &MarginalIntensity, red: &MarginalIntensity, m: usize| -> Result<()> {
        let (sg, sr) = component_streams(m);
        let g = region_moments_stream(green, &bg, scheme, sg)?;
        let r = region_moments_stream(red, &br, scheme, sr)?;
        let (vec, scale) = if source { (&g.first, r.mass) } else { (&r.first, g.mass) };
        for (o, v) in out.iter_mut().zip(vec) {
            *o += v * scale;
        }
        Ok(())
    };
    match model {
        IntensityModel::Product { green, red } => add(green, red, 0)?,
        IntensityModel::Mixture { components } => {
            for (m, c) in components.iter().enumerate() {
                add(&c.green, &c.red, m)?;
            }
        }
        IntensityModel::Tabulated { joint } => {
            let b = joint.box_moments(region, false);
            out[0] = if source { b.first[0] } else { b.first[1] };
        }
    }
    Ok(out)
}

/// `H(A, B) = ∫_A ∫_B h(s, t) ds dt` for boxes over `Ω` (`2d` coordinates,
/// green first).
pub fn raw_heat_map(
    model: &IntensityModel,
    a: &BoxRegion,
    b: &BoxRegion,
    scheme: QuadratureSpec,
) -> Result<f64> {
    check_omega_box(model, a)?;
    check_omega_box(model, b)?;
    let src = side_vector(model, a, scheme, true)?;
    let tgt = side_vector(model, b, scheme, false)?;
    Ok(dot(&src, &tgt))
}

/// Tabulates a marginal on the quadrature grid, rescaled so the grid total
/// equals the exact mass (matching the self-normalised moments).
pub(crate) fn tabulate_marginal(m: &MarginalIntensity, n: usize) -> Result<GridField> {
    let d = m.dim();
    let mut f = match m {
        MarginalIntensity::GridTabulated(g) if g.points_per_axis() == n => return Ok(g.clone()),
        _ => GridField::from_fn(d, n, MaskKind::Ball, |x| m.density(x))?,
    };
    let total = f.total();
    if !(total > 0.0) {
        return invalid("intensity is not resolved by the bound-heat grid");
    }
    let k = m.mass() / total;
    f.values_mut_unchecked().iter_mut().for_each(|v| *v *= k);
    Ok(f)
}

/// `h̄(g, r) = (g·r) ρ_G(g) ρ_R(r)` on a `2d`-dimensional grid (green axes
/// first), for product models with `d ≤ 2`.
pub fn bound_heat_grid(model: &IntensityModel, resolution: usize) -> Result<GridField> {
    let (green, red) = match model {
        IntensityModel::Product { green, red } => (green, red),
        _ => {
            return Err(IdpgError::NotProduct(
                "bound heat needs a product intensity; use raw_heat_slice for joints".into(),
            ))
        }
    };
    let d = model.dim();
    if d > 2 {
        return invalid("dense bound-heat grids support d <= 2");
    }
    if resolution == 0 {
        return invalid("resolution must be positive");
    }
    let fg = tabulate_marginal(green, resolution)?;
    let fr = tabulate_marginal(red, resolution)?;
    let cells = fg.len();
    let centers: Vec<Vec<f64>> = (0..cells).map(|i| fg.center(i)).collect();
    let mut values = vec![0.0; cells * cells];
    for i in 0..cells {
        let a = fg.values()[i];
        if a == 0.0 {
            continue;
        }
        let row = &mut values[i * cells..(i + 1) * cells];
        for (j, v) in row.iter_mut().enumerate() {
            let b = fr.values()[j];
            if b != 0.0 {
                *v = dot(&centers[i], &centers[j]) * a * b;
            }
        }
    }
    GridField::from_values(2 * d, resolution, MaskKind::BallPair, values)
}

/// Source and target sides of a bite combination.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BiteCombination {
    /// Green bite `a` to red bite `b`.
    GtoR,
    /// Green bite `a` to green bite `a′`.
    GtoG,
    /// Red bite `b` to red bite `b′`.
    RtoR,
    /// Red bite `b` to green bite `a`.
    RtoG,
}

/// Raw heat between two bites of a product model.
///
/// `source` holds `(c(·), μ(·))` of the source bite's marginal (green for
/// `GtoR`/`GtoG`, red otherwise) and `target` those of the target bite.
pub fn bite_heat(
    summary: &crate::latent::MomentSummary,
    combination: BiteCombination,
    source: Option<&RegionMoments>,
    target: Option<&RegionMoments>,
) -> Result<f64> {
    if !summary.product {
        return Err(IdpgError::NotProduct("bite heat needs a product summary".into()));
    }
    let s = source.ok_or(IdpgError::MissingRegion("source bite"))?;
    let t = target.ok_or(IdpgError::MissingRegion("target bite"))?;
    let d = summary.dim();
    if s.first.len() != d || t.first.len() != d {
        return Err(IdpgError::DimensionMismatch {
            expected: d,
            got: s.first.len().min(t.first.len()),
        });
    }
    // ∫ g ρ over the source bite and ∫ r ρ over the target bite.
    let src: Vec<f64> = match combination {
        BiteCombination::GtoR | BiteCombination::GtoG => {
            s.first.iter().map(|v| v * summary.c_r).collect()
        }
        BiteCombination::RtoR | BiteCombination::RtoG => {
            summary.mu_g.iter().map(|v| v * s.mass).collect()
        }
    };
    let tgt: Vec<f64> = match combination {
        BiteCombination::GtoR | BiteCombination::RtoR => {
            t.first.iter().map(|v| v * summary.c_g).collect()
        }
        BiteCombination::GtoG | BiteCombination::RtoG => {
            summary.mu_r.iter().map(|v| v * t.mass).collect()
        }
    };
    Ok(dot(&src, &tgt))
}

/// `h(g_s, r_t | r_s, g_t)` over `(g_s, r_t) ∈ [0,1]²` for a `d = 1` model.
pub fn raw_heat_slice(
    model: &IntensityModel,
    fixed_r_s: f64,
    fixed_g_t: f64,
    resolution: usize,
) -> Result<GridField> {
    if model.dim() != 1 {
        return invalid("heat slices need a d = 1 model");
    }
    for v in [fixed_r_s, fixed_g_t] {
        if !(0.0..=1.0).contains(&v) {
            return invalid(format!("fixed coordinate {v} outside [0, 1]"));
        }
    }
    GridField::from_fn(2, resolution, MaskKind::Full, |x| {
        x[0] * x[1] * model.density(&[x[0]], &[fixed_r_s]) * model.density(&[fixed_g_t], &[x[1]])
    })
}

/// `‖a/‖a‖ − b/‖b‖‖` in the grid's L² norm; zero fields compare equal only
/// to each other.
pub fn normalized_l2_distance(a: &GridField, b: &GridField) -> Result<f64> {
    if a.dim() != b.dim() || a.points_per_axis() != b.points_per_axis() {
        return invalid("grids differ in shape");
    }
    let na = a.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.values().iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(if na == nb { 0.0 } else { 1.0 });
    }
    Ok(a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x / na - y / nb).powi(2))
        .sum::<f64>()
        .sqrt())
}

/// Below this self-affinity the intensity cannot be read off the heat.
pub const RECOVERY_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Recovered {
    Value(f64),
    /// `K(s, s) ≤` [`RECOVERY_THRESHOLD`].
    Unrecoverable,
}

/// `ρ̂(s) = √(h(s, s) / K(s, s))`.
pub fn recover_intensity_at(diag_heat: f64, s: &Position) -> Recovered {
    let k = s.self_affinity();
    if k <= RECOVERY_THRESHOLD {
        return Recovered::Unrecoverable;
    }
    Recovered::Value((diag_heat.max(0.0) / k).sqrt())
}

/// Wraps a diagonal heat function `s ↦ h(s, s)` into an intensity estimate.
pub fn recover_intensity_from_heat<F>(diag_heat: F) -> impl Fn(&Position) -> Recovered
where
    F: Fn(&Position) -> f64,
{
    move |s| recover_intensity_at(diag_heat(s), s)
}

/// Boxes never grow beyond this many `ε` around their centre.
pub const DIRAC_MAX_HALF_WIDTH: f64 = 8.0;

/// `H(Box_i, Box_j)` for unit-mass Gaussians of width `ε` at each position.
///
/// Each box is the cube of half-width `min(sep/2, 8ε)` around its centre in
/// `Ω`, where `sep` is the smallest sup-norm distance between centres; the
/// centres must be more than `6ε` apart. Box integrals are analytic when the
/// box lies inside the ball; otherwise a `resolution`-point midpoint rule
/// covers all but the last coordinate, which is integrated exactly.
pub fn dirac_limit_heat(
    positions: &[Position],
    epsilon: f64,
    resolution: usize,
) -> Result<DMatrix<f64>> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return invalid(format!("epsilon must be positive, got {epsilon}"));
    }
    let n = positions.len();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let d = positions[0].dim();
    if positions.iter().any(|p| p.dim() != d) {
        return invalid("positions differ in dimension");
    }
    let coords: Vec<Vec<f64>> = positions
        .iter()
        .map(|p| p.g.as_slice().iter().chain(p.r.as_slice()).copied().collect())
        .collect();
    let mut sep = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            let s = coords[i]
                .iter()
                .zip(&coords[j])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if s <= 6.0 * epsilon {
                return Err(IdpgError::OverlappingBoxes(j, i));
            }
            sep = sep.min(s);
        }
    }
    let w = (0.5 * sep).min(DIRAC_MAX_HALF_WIDTH * epsilon);
    let kappa = 1.0 / (epsilon * epsilon);
    let gauss = |mean: &[f64]| {
        TruncGaussian::new(TruncGaussianSpec {
            mean: mean.to_vec(),
            kappa: vec![kappa; d],
            mass: 1.0,
        })
    };
    let comps = positions
        .iter()
        .map(|p| Ok((gauss(p.g.as_slice())?, gauss(p.r.as_slice())?)))
        .collect::<Result<Vec<_>>>()?;
    let cube = |c: &[f64]| BoxRegion {
        lower: c.iter().map(|v| v - w).collect(),
        upper: c.iter().map(|v| v + w).collect(),
    };
    let mut src = vec![vec![0.0; d]; n];
    let mut tgt = vec![vec![0.0; d]; n];
    for i in 0..n {
        let bg = cube(positions[i].g.as_slice());
        let br = cube(positions[i].r.as_slice());
        for (green, red) in &comps {
            let (gm, gf) = green.box_integrals(&bg, resolution);
            let (rm, rf) = red.box_integrals(&br, resolution);
            for k in 0..d {
                src[i][k] += gf[k] * rm;
                tgt[i][k] += gm * rf[k];
            }
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| dot(&src[i], &tgt[j])))
}

#[cfg(test)]
mod tests;
