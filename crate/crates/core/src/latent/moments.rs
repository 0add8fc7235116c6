//! Moments of intensities by tensor-grid quadrature or Monte Carlo.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::grid::BoxIntegrals;
use super::sampler::MarginalSampler;
use super::{dot, BoxRegion, GridField, IntensityModel, MarginalIntensity, MaskKind};
use crate::error::{invalid, IdpgError, Result};
use crate::rng::SeededRng;

pub const DEFAULT_GRID_POINTS: usize = 256;
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;

/// How integrals over `B^d_+` are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum QuadratureSpec {
    /// Midpoint tensor grid with a staircase ball mask, `d ≤ 2`. The density
    /// is taken constant on each cell and polynomial factors are integrated
    /// exactly over the cell, so polynomial moments of a constant density
    /// carry no error.
    Grid { points_per_axis: usize },
    /// Exact draws from the normalised density.
    MonteCarlo { samples: usize, seed: Option<u64> },
}

impl QuadratureSpec {
    /// 256-point grid for `d ≤ 2`, 10⁶ Monte Carlo samples otherwise.
    pub fn default_for(dim: usize, seed: Option<u64>) -> Self {
        if dim <= 2 {
            Self::Grid {
                points_per_axis: DEFAULT_GRID_POINTS,
            }
        } else {
            Self::MonteCarlo {
                samples: DEFAULT_MC_SAMPLES,
                seed,
            }
        }
    }
}

/// Moments of a single marginal `ρ` with mass `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalMoments {
    pub mass: f64,
    /// `μ̃ = ∫ x ρ / c`.
    pub mean: Vec<f64>,
    /// `Σ = ∫ x xᵀ ρ / c`.
    pub second: DMatrix<f64>,
    /// `∫ x xᵀ ρ · q` with `q = ρ` unless a partner density was supplied.
    pub gram: DMatrix<f64>,
    /// Monte Carlo standard errors of `mean` and `second`.
    pub mean_se: Option<Vec<f64>>,
    pub second_se: Option<DMatrix<f64>>,
}

/// Unnormalised moments over a box: `∫_box ρ` and `∫_box x ρ`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMoments {
    pub mass: f64,
    pub first: Vec<f64>,
}

impl RegionMoments {
    pub fn from_full(m: &MarginalMoments) -> Self {
        Self {
            mass: m.mass,
            first: m.mean.iter().map(|v| v * m.mass).collect(),
        }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            mass: 0.0,
            first: vec![0.0; d],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MomentStdErrors {
    pub mu_g_norm: Vec<f64>,
    pub mu_r_norm: Vec<f64>,
    pub sigma_g: DMatrix<f64>,
    pub sigma_r: DMatrix<f64>,
}

/// Masses, means, second moments and Gram matrices of an intensity.
///
/// For mixtures and tabulated joints (`product == false`) the green and red
/// fields describe the projections `∫ρ dr` and `∫ρ dg`, each of mass Λ.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentSummary {
    pub c_g: f64,
    pub c_r: f64,
    pub lambda: f64,
    pub mu_g: Vec<f64>,
    pub mu_r: Vec<f64>,
    pub mu_g_norm: Vec<f64>,
    pub mu_r_norm: Vec<f64>,
    pub sigma_g: DMatrix<f64>,
    pub sigma_r: DMatrix<f64>,
    pub gram_a: DMatrix<f64>,
    pub gram_b: DMatrix<f64>,
    pub product: bool,
    pub std_errors: Option<MomentStdErrors>,
}

impl MomentSummary {
    pub fn dim(&self) -> usize {
        self.mu_g.len()
    }

    /// `μ̃_G · μ̃_R`, the mean edge probability between independent nodes.
    pub fn affinity(&self) -> f64 {
        dot(&self.mu_g_norm, &self.mu_r_norm)
    }

    /// Product summary of two tabulated marginals, integrated exactly as
    /// piecewise-constant fields.
    pub fn from_grids(green: &GridField, red: &GridField) -> Result<Self> {
        let g = grid_marginal(green)?;
        let r = grid_marginal(red)?;
        Ok(Self::assemble(g, r, true, None))
    }

    fn assemble(
        g: MarginalMoments,
        r: MarginalMoments,
        product: bool,
        lambda: Option<f64>,
    ) -> Self {
        let lambda = lambda.unwrap_or(g.mass * r.mass);
        let std_errors = match (&g.mean_se, &r.mean_se, &g.second_se, &r.second_se) {
            (Some(a), Some(b), Some(c), Some(d)) => Some(MomentStdErrors {
                mu_g_norm: a.clone(),
                mu_r_norm: b.clone(),
                sigma_g: c.clone(),
                sigma_r: d.clone(),
            }),
            _ => None,
        };
        Self {
            c_g: g.mass,
            c_r: r.mass,
            lambda,
            mu_g: g.mean.iter().map(|v| v * g.mass).collect(),
            mu_r: r.mean.iter().map(|v| v * r.mass).collect(),
            mu_g_norm: g.mean,
            mu_r_norm: r.mean,
            sigma_g: g.second,
            sigma_r: r.second,
            gram_a: g.gram,
            gram_b: r.gram,
            product,
            std_errors,
        }
    }
}

fn grid_marginal(field: &GridField) -> Result<MarginalMoments> {
    let d = field.dim();
    let unit = BoxRegion::unit(d);
    let b = field.box_moments(&unit, false);
    if !(b.mass > 0.0) {
        return invalid("field has zero mass");
    }
    let sq = field.box_moments(&unit, true);
    Ok(MarginalMoments {
        mass: b.mass,
        mean: b.first.iter().map(|v| v / b.mass).collect(),
        second: DMatrix::from_row_slice(d, d, &b.second) / b.mass,
        gram: DMatrix::from_row_slice(d, d, &sq.second),
        mean_se: None,
        second_se: None,
    })
}

fn check_grid(d: usize, n: usize) -> Result<()> {
    if d > 2 {
        return invalid(format!("grid quadrature supports d <= 2, got d = {d}"));
    }
    if n == 0 {
        return invalid("grid quadrature needs at least one point per axis");
    }
    Ok(())
}

fn mc_rng(samples: usize, seed: Option<u64>, stream: u64) -> Result<SeededRng> {
    let seed = seed.ok_or(IdpgError::MissingSeed)?;
    if samples < 2 {
        return invalid("Monte Carlo quadrature needs at least two samples");
    }
    Ok(SeededRng::new(seed, stream))
}

/// Full-domain moments of one marginal. `partner` replaces the second
/// factor of the Gram integrand.
pub(crate) fn marginal_moments_with(
    m: &MarginalIntensity,
    scheme: QuadratureSpec,
    stream: u64,
    partner: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<MarginalMoments> {
    let d = m.dim();
    let c = m.mass();
    if let MarginalIntensity::GridTabulated(field) = m {
        let mut out = grid_marginal(field)?;
        if let Some(q) = partner {
            out.gram = partnered_gram(field, q);
        }
        return Ok(out);
    }
    match scheme {
        QuadratureSpec::Grid { points_per_axis } => {
            check_grid(d, points_per_axis)?;
            let field = GridField::from_fn(d, points_per_axis, MaskKind::Ball, |x| m.density(x))?;
            let b = field.box_moments(&BoxRegion::unit(d), false);
            if !(b.mass > 0.0) {
                return invalid("intensity is not resolved by the quadrature grid");
            }
            let gram = match partner {
                Some(q) => partnered_gram(&field, q),
                None => {
                    let sq = field.box_moments(&BoxRegion::unit(d), true);
                    DMatrix::from_row_slice(d, d, &sq.second)
                }
            };
            Ok(MarginalMoments {
                mass: c,
                mean: b.first.iter().map(|v| v / b.mass).collect(),
                second: DMatrix::from_row_slice(d, d, &b.second) / b.mass,
                gram,
                mean_se: None,
                second_se: None,
            })
        }
        QuadratureSpec::MonteCarlo { samples, seed } => {
            let mut rng = mc_rng(samples, seed, stream)?;
            let sampler = MarginalSampler::new(m);
            let mut x = vec![0.0; d];
            let mut s1 = vec![0.0; d];
            let mut s1sq = vec![0.0; d];
            let mut s2 = vec![0.0; d * d];
            let mut s2sq = vec![0.0; d * d];
            let mut gsum = vec![0.0; d * d];
            for _ in 0..samples {
                sampler.sample(&mut rng, &mut x)?;
                let q = match partner {
                    Some(f) => f(&x),
                    None => m.density(&x),
                };
                for a in 0..d {
                    s1[a] += x[a];
                    s1sq[a] += x[a] * x[a];
                    for b in 0..d {
                        let p = x[a] * x[b];
                        s2[a * d + b] += p;
                        s2sq[a * d + b] += p * p;
                        gsum[a * d + b] += p * q;
                    }
                }
            }
            let n = samples as f64;
            let se = |sum: f64, sumsq: f64| {
                let mean = sum / n;
                ((sumsq / n - mean * mean).max(0.0) / (n - 1.0)).sqrt()
            };
            Ok(MarginalMoments {
                mass: c,
                mean: s1.iter().map(|v| v / n).collect(),
                second: DMatrix::from_row_slice(d, d, &s2) / n,
                gram: DMatrix::from_row_slice(d, d, &gsum) * (c / n),
                mean_se: Some((0..d).map(|a| se(s1[a], s1sq[a])).collect()),
                second_se: Some(DMatrix::from_fn(d, d, |a, b| {
                    se(s2[a * d + b], s2sq[a * d + b])
                })),
            })
        }
    }
}

fn partnered_gram(field: &GridField, q: &dyn Fn(&[f64]) -> f64) -> DMatrix<f64> {
    let d = field.dim();
    let mut prod = field.clone();
    let mut c = vec![0.0; d];
    let vals: Vec<f64> = (0..field.len())
        .map(|i| {
            let v = field.values()[i];
            if v == 0.0 {
                0.0
            } else {
                field.center_into(i, &mut c);
                v * q(&c)
            }
        })
        .collect();
    prod.values_mut_unchecked().copy_from_slice(&vals);
    let b: BoxIntegrals = prod.box_moments(&BoxRegion::unit(d), false);
    DMatrix::from_row_slice(d, d, &b.second)
}

/// Full-domain moments of one marginal.
pub fn marginal_moments(m: &MarginalIntensity, scheme: QuadratureSpec) -> Result<MarginalMoments> {
    marginal_moments_with(m, scheme, 0, None)
}

pub(crate) fn region_moments_stream(
    m: &MarginalIntensity,
    region: &BoxRegion,
    scheme: QuadratureSpec,
    stream: u64,
) -> Result<RegionMoments> {
    let d = m.dim();
    if region.dim() != d {
        return Err(IdpgError::DimensionMismatch {
            expected: d,
            got: region.dim(),
        });
    }
    if region.is_empty() {
        return Ok(RegionMoments::zero(d));
    }
    let c = m.mass();
    let scaled = |field: &GridField| -> Result<RegionMoments> {
        let whole = field.box_moments(&BoxRegion::unit(d), false);
        if !(whole.mass > 0.0) {
            return invalid("intensity is not resolved by the quadrature grid");
        }
        let part = field.box_moments(region, false);
        let k = c / whole.mass;
        Ok(RegionMoments {
            mass: part.mass * k,
            first: part.first.iter().map(|v| v * k).collect(),
        })
    };
    if let MarginalIntensity::GridTabulated(field) = m {
        return scaled(field);
    }
    match scheme {
        QuadratureSpec::Grid { points_per_axis } => {
            check_grid(d, points_per_axis)?;
            let field = GridField::from_fn(d, points_per_axis, MaskKind::Ball, |x| m.density(x))?;
            scaled(&field)
        }
        QuadratureSpec::MonteCarlo { samples, seed } => {
            let mut rng = mc_rng(samples, seed, stream)?;
            let sampler = MarginalSampler::new(m);
            let mut x = vec![0.0; d];
            let mut hits = 0usize;
            let mut first = vec![0.0; d];
            for _ in 0..samples {
                sampler.sample(&mut rng, &mut x)?;
                if region.contains(&x) {
                    hits += 1;
                    first.iter_mut().zip(&x).for_each(|(f, v)| *f += v);
                }
            }
            let k = c / samples as f64;
            Ok(RegionMoments {
                mass: hits as f64 * k,
                first: first.iter().map(|v| v * k).collect(),
            })
        }
    }
}

/// `∫_box ρ` and `∫_box x ρ` for a marginal; Monte Carlo uses the same draws
/// as [`marginal_moments`] so that full boxes reproduce it exactly.
pub fn region_moments(
    m: &MarginalIntensity,
    region: &BoxRegion,
    scheme: QuadratureSpec,
) -> Result<RegionMoments> {
    region_moments_stream(m, region, scheme, 0)
}

/// Stream ids used for the marginals of a model: `(green, red)` of
/// component `m` (a product is component 0).
pub(crate) fn component_streams(m: usize) -> (u64, u64) {
    (2 * m as u64, 2 * m as u64 + 1)
}

/// Moment summary of a model.
pub fn moments(model: &IntensityModel, scheme: QuadratureSpec) -> Result<MomentSummary> {
    match model {
        IntensityModel::Product { green, red } => {
            let (sg, sr) = component_streams(0);
            let g = marginal_moments_with(green, scheme, sg, None)?;
            let r = marginal_moments_with(red, scheme, sr, None)?;
            Ok(MomentSummary::assemble(g, r, true, None))
        }
        IntensityModel::Mixture { components } => {
            let d = model.dim();
            let lambda = model.total_intensity();
            let green_proj = |x: &[f64]| -> f64 {
                components.iter().map(|c| c.red.mass() * c.green.density(x)).sum()
            };
            let red_proj = |x: &[f64]| -> f64 {
                components.iter().map(|c| c.green.mass() * c.red.density(x)).sum()
            };
            let acc = |side: usize| -> Result<MarginalMoments> {
                let mut out = MarginalMoments {
                    mass: lambda,
                    mean: vec![0.0; d],
                    second: DMatrix::zeros(d, d),
                    gram: DMatrix::zeros(d, d),
                    mean_se: None,
                    second_se: None,
                };
                let mut var_mean = vec![0.0; d];
                let mut var_second = DMatrix::zeros(d, d);
                let mut have_se = true;
                for (k, c) in components.iter().enumerate() {
                    let (sg, sr) = component_streams(k);
                    let (own, other, stream, partner): (_, _, _, &dyn Fn(&[f64]) -> f64) =
                        if side == 0 {
                            (&c.green, &c.red, sg, &green_proj)
                        } else {
                            (&c.red, &c.green, sr, &red_proj)
                        };
                    let pi = c.weight() / lambda;
                    let mm = marginal_moments_with(own, scheme, stream, Some(partner))?;
                    for a in 0..d {
                        out.mean[a] += pi * mm.mean[a];
                    }
                    out.second += &mm.second * pi;
                    out.gram += &mm.gram * other.mass();
                    match (&mm.mean_se, &mm.second_se) {
                        (Some(ms), Some(ss)) => {
                            for a in 0..d {
                                var_mean[a] += (pi * ms[a]).powi(2);
                            }
                            var_second += ss.map(|v| (pi * v).powi(2));
                        }
                        _ => have_se = false,
                    }
                }
                if have_se {
                    out.mean_se = Some(var_mean.iter().map(|v| v.sqrt()).collect());
                    out.second_se = Some(var_second.map(f64::sqrt));
                }
                Ok(out)
            };
            let g = acc(0)?;
            let r = acc(1)?;
            Ok(MomentSummary::assemble(g, r, false, Some(lambda)))
        }
        IntensityModel::Tabulated { joint } => {
            // Project the (g, r) grid onto each axis.
            let n = joint.points_per_axis();
            let h = joint.spacing();
            let mut pg = vec![0.0; n];
            let mut pr = vec![0.0; n];
            for i in 0..n {
                for j in 0..n {
                    let v = joint.values()[i * n + j] * h;
                    pg[i] += v;
                    pr[j] += v;
                }
            }
            let g = grid_marginal(&GridField::from_values(1, n, MaskKind::Ball, pg)?)?;
            let r = grid_marginal(&GridField::from_values(1, n, MaskKind::Ball, pr)?)?;
            let lambda = joint.total();
            Ok(MomentSummary::assemble(g, r, false, Some(lambda)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{MixtureComponent, TruncGaussianSpec};

    fn uniform_model() -> IntensityModel {
        IntensityModel::product(
            MarginalIntensity::uniform(1, 2.0).unwrap(),
            MarginalIntensity::uniform(1, 3.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn uniform_d1_product_moments() {
        let s = moments(&uniform_model(), QuadratureSpec::default_for(1, None)).unwrap();
        assert_eq!((s.c_g, s.c_r, s.lambda), (2.0, 3.0, 6.0));
        assert!((s.mu_g_norm[0] - 0.5).abs() < 1e-15);
        assert!((s.mu_r_norm[0] - 0.5).abs() < 1e-15);
        assert!((s.sigma_g[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((s.gram_a[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
        assert!((s.gram_b[(0, 0)] - 3.0).abs() < 1e-14);
        assert!((s.mu_g[0] - 1.0).abs() < 1e-15 && (s.mu_r[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn symmetric_gaussian_centroid() {
        let m = MarginalIntensity::trunc_gaussian(TruncGaussianSpec {
            mean: vec![0.5],
            kappa: vec![40.0],
            mass: 1.0,
        })
        .unwrap();
        let mm = marginal_moments(&m, QuadratureSpec::default_for(1, None)).unwrap();
        assert!((mm.mean[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_needs_seed() {
        let r = moments(
            &uniform_model(),
            QuadratureSpec::MonteCarlo {
                samples: 100,
                seed: None,
            },
        );
        assert!(matches!(r, Err(IdpgError::MissingSeed)));
    }

    #[test]
    fn grid_rejects_high_dimension() {
        let m = MarginalIntensity::uniform(3, 1.0).unwrap();
        assert!(marginal_moments(&m, QuadratureSpec::Grid { points_per_axis: 8 }).is_err());
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let m = IntensityModel::product(
            MarginalIntensity::uniform(3, 1.0).unwrap(),
            MarginalIntensity::uniform(3, 2.0).unwrap(),
        )
        .unwrap();
        let q = QuadratureSpec::MonteCarlo {
            samples: 10_000,
            seed: Some(5),
        };
        assert_eq!(moments(&m, q).unwrap(), moments(&m, q).unwrap());
    }

    #[test]
    fn uniform_ball_moments_in_d3() {
        // E[x_j²] = 1/(d+2); E[x_j x_k] = 2/(π(d+2)) on B^d_+.
        let m = MarginalIntensity::uniform(3, 1.0).unwrap();
        let q = QuadratureSpec::MonteCarlo {
            samples: 400_000,
            seed: Some(11),
        };
        let mm = marginal_moments(&m, q).unwrap();
        let se = mm.second_se.as_ref().unwrap();
        assert!((mm.second[(0, 0)] - 0.2).abs() < 4.0 * se[(0, 0)]);
        let off = 2.0 / (std::f64::consts::PI * 5.0);
        assert!((mm.second[(0, 1)] - off).abs() < 4.0 * se[(0, 1)]);
    }

    #[test]
    fn region_full_box_reproduces_moments() {
        let m = MarginalIntensity::trunc_gaussian(TruncGaussianSpec {
            mean: vec![0.6, 0.4],
            kappa: vec![15.0, 15.0],
            mass: 2.0,
        })
        .unwrap();
        for q in [
            QuadratureSpec::Grid { points_per_axis: 64 },
            QuadratureSpec::MonteCarlo {
                samples: 20_000,
                seed: Some(3),
            },
        ] {
            let full = marginal_moments(&m, q).unwrap();
            let reg = region_moments(&m, &BoxRegion::unit(2), q).unwrap();
            assert!((reg.mass - full.mass).abs() < 1e-12);
            for a in 0..2 {
                assert!((reg.first[a] - full.mass * full.mean[a]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_component_mixture_matches_product() {
        let g = MarginalIntensity::trunc_gaussian(TruncGaussianSpec {
            mean: vec![0.3, 0.5],
            kappa: vec![500.0, 30.0],
            mass: 2.0,
        })
        .unwrap();
        let r = MarginalIntensity::uniform(2, 1.5).unwrap();
        let prod = IntensityModel::product(g.clone(), r.clone()).unwrap();
        let mix = IntensityModel::mixture(vec![MixtureComponent {
            label: "only".into(),
            green: g,
            red: r,
        }])
        .unwrap();
        let q = QuadratureSpec::Grid { points_per_axis: 64 };
        let a = moments(&prod, q).unwrap();
        let b = moments(&mix, q).unwrap();
        assert!((a.lambda - b.lambda).abs() < 1e-12);
        for k in 0..2 {
            assert!((a.mu_g_norm[k] - b.mu_g_norm[k]).abs() < 1e-12);
            assert!((a.mu_r_norm[k] - b.mu_r_norm[k]).abs() < 1e-12);
        }
        assert!((&a.sigma_g - &b.sigma_g).amax() < 1e-12);
        // The projected green marginal carries mass Λ = c_G c_R.
        assert!((&a.gram_a * (1.5f64 * 1.5) - &b.gram_a).amax() < 1e-9);
    }
}
