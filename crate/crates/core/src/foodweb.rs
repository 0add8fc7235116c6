//! Food webs as mixtures of products: guilds, centroid fitting against a
//! target affinity matrix, expected guild-to-guild edges, species-weighted
//! source/target asymmetry and kernel absorption of coordinate weights.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, io_err, IdpgError, Result};
use crate::latent::moments::{component_streams, marginal_moments_with};
use crate::latent::{
    dot, IntensityModel, LatentVector, MarginalIntensity, MixtureComponent, Position, QuadratureSpec,
    TruncGaussianSpec,
};
use crate::rng::{stream_id, SeededRng};

/// Relative tolerance on `Σ γ_m = Λ`.
pub const LAMBDA_TOL: f64 = 1e-6;

/// One species: its green and red niches and its source/target propensities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuildSpec {
    pub label: String,
    pub green: TruncGaussianSpec,
    pub red: TruncGaussianSpec,
    pub w_source: f64,
    pub w_target: f64,
}

impl GuildSpec {
    /// `γ_m = c_{G,m} c_{R,m}`.
    pub fn weight(&self) -> f64 {
        self.green.mass * self.red.mass
    }

    fn component(&self) -> Result<MixtureComponent> {
        Ok(MixtureComponent {
            label: self.label.clone(),
            green: MarginalIntensity::trunc_gaussian(self.green.clone())?,
            red: MarginalIntensity::trunc_gaussian(self.red.clone())?,
        })
    }
}

/// Guild entry of a food-web config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuildDoc {
    pub label: String,
    pub mean_g: Vec<f64>,
    pub mean_r: Vec<f64>,
    pub kappa_g: Vec<f64>,
    pub kappa_r: Vec<f64>,
    pub mass_g: f64,
    pub mass_r: f64,
    #[serde(rename = "w_S", default = "one")]
    pub w_s: f64,
    #[serde(rename = "w_T", default = "one")]
    pub w_t: f64,
}

fn one() -> f64 {
    1.0
}

impl From<GuildDoc> for GuildSpec {
    fn from(d: GuildDoc) -> Self {
        Self {
            label: d.label,
            green: TruncGaussianSpec {
                mean: d.mean_g,
                kappa: d.kappa_g,
                mass: d.mass_g,
            },
            red: TruncGaussianSpec {
                mean: d.mean_r,
                kappa: d.kappa_r,
                mass: d.mass_r,
            },
            w_source: d.w_s,
            w_target: d.w_t,
        }
    }
}

impl From<&GuildSpec> for GuildDoc {
    fn from(g: &GuildSpec) -> Self {
        Self {
            label: g.label.clone(),
            mean_g: g.green.mean.clone(),
            mean_r: g.red.mean.clone(),
            kappa_g: g.green.kappa.clone(),
            kappa_r: g.red.kappa.clone(),
            mass_g: g.green.mass,
            mass_r: g.red.mass,
            w_s: g.w_source,
            w_t: g.w_target,
        }
    }
}

/// A food-web config: guilds and an optional target affinity matrix
/// (rows are sources, columns targets).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoodWebConfig {
    pub guilds: Vec<GuildDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_affinity: Option<Vec<Vec<f64>>>,
}

impl FoodWebConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.guilds.is_empty() {
            return invalid("a food web needs at least one guild");
        }
        if let Some(t) = &self.target_affinity {
            let m = self.guilds.len();
            if t.len() != m || t.iter().any(|row| row.len() != m) {
                return invalid(format!("target affinity must be {m}x{m}"));
            }
        }
        Ok(())
    }

    pub fn guild_specs(&self) -> Vec<GuildSpec> {
        self.guilds.iter().cloned().map(GuildSpec::from).collect()
    }

    pub fn target(&self) -> Option<DMatrix<f64>> {
        self.target_affinity.as_ref().map(|t| {
            let m = t.len();
            DMatrix::from_fn(m, m, |i, j| t[i][j])
        })
    }
}

/// Guild-level affinities and expected edges.
#[derive(Clone, Debug, PartialEq)]
pub struct GuildEdgeMatrix {
    pub labels: Vec<String>,
    /// `H_ij = Λ² π_i π_j K̂_ij`.
    pub expected: DMatrix<f64>,
    /// `K̂_ij = μ̃^G_i · μ̃^R_j`.
    pub affinity: DMatrix<f64>,
    /// Abundance fractions `π_m = γ_m / Λ`.
    pub abundance: Vec<f64>,
}

impl GuildEdgeMatrix {
    /// Writes `expected` (or `affinity`) as CSV: a `source` column of labels
    /// followed by one column per target guild.
    pub fn write_csv(&self, path: &Path, affinity: bool) -> Result<()> {
        let m = if affinity { &self.affinity } else { &self.expected };
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(std::iter::once("source").chain(self.labels.iter().map(String::as_str)))?;
        for (i, label) in self.labels.iter().enumerate() {
            let row = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)]));
            w.write_record(std::iter::once(label.clone()).chain(row))?;
        }
        w.flush().map_err(io_err(path))
    }
}

/// Normalized means of every guild's marginals, `(green, red)`.
pub fn guild_centroids(guilds: &[GuildSpec], scheme: QuadratureSpec) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    guilds
        .iter()
        .enumerate()
        .map(|(m, g)| {
            let c = g.component()?;
            let (sg, sr) = component_streams(m);
            let mg = marginal_moments_with(&c.green, scheme, sg, None)?;
            let mr = marginal_moments_with(&c.red, scheme, sr, None)?;
            Ok((mg.mean, mr.mean))
        })
        .collect()
}

/// Expected guild edge matrix at total intensity `lambda`; the guild masses
/// must already sum to it.
pub fn expected_guild_edges(guilds: &[GuildSpec], lambda: f64, scheme: QuadratureSpec) -> Result<GuildEdgeMatrix> {
    if guilds.is_empty() {
        return invalid("no guilds");
    }
    let total: f64 = guilds.iter().map(GuildSpec::weight).sum();
    if !((total - lambda).abs() <= LAMBDA_TOL * lambda.abs()) {
        return invalid(format!("guild weights sum to {total}, expected lambda = {lambda}"));
    }
    let cents = guild_centroids(guilds, scheme)?;
    let m = guilds.len();
    let pi: Vec<f64> = guilds.iter().map(|g| g.weight() / total).collect();
    let affinity = DMatrix::from_fn(m, m, |i, j| dot(&cents[i].0, &cents[j].1));
    let expected = DMatrix::from_fn(m, m, |i, j| lambda * lambda * pi[i] * pi[j] * affinity[(i, j)]);
    Ok(GuildEdgeMatrix {
        labels: guilds.iter().map(|g| g.label.clone()).collect(),
        expected,
        affinity,
        abundance: pi,
    })
}

/// Optimiser settings for [`fit_guild_centroids`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub iterations: usize,
    pub restarts: usize,
    pub step: f64,
    /// RMSE above which the fit is flagged as not converged.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            iterations: 5000,
            restarts: 10,
            step: 0.05,
            tolerance: 0.05,
            seed: 0,
        }
    }
}

/// Fitted centroid pairs, one per guild.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidFit {
    pub green: Vec<Vec<f64>>,
    pub red: Vec<Vec<f64>>,
    /// `√(Σ_ij (K*_ij − g_i·r_j)² / M²)` at the returned centroids.
    pub rmse: f64,
    pub converged: bool,
    /// Restart that produced the returned fit.
    pub restart: usize,
}

impl CentroidFit {
    /// `g_i · r_j`.
    pub fn affinity(&self) -> DMatrix<f64> {
        let m = self.green.len();
        DMatrix::from_fn(m, m, |i, j| dot(&self.green[i], &self.red[j]))
    }
}

/// Clip negatives, then pull vectors longer than 1 back to the sphere.
fn project_rows(x: &mut DMatrix<f64>) {
    for mut row in x.row_iter_mut() {
        row.iter_mut().for_each(|v| *v = v.max(0.0));
        let n = row.norm();
        if n > 1.0 {
            row /= n;
        }
    }
}

fn objective(target: &DMatrix<f64>, g: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    (target - g * r.transpose()).norm_squared()
}

fn rmse(target: &DMatrix<f64>, g: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
    (objective(target, g, r) / target.len() as f64).sqrt()
}

fn fit_once(target: &DMatrix<f64>, d: usize, opts: &FitOptions, restart: usize) -> (DMatrix<f64>, DMatrix<f64>, f64) {
    let m = target.nrows();
    let mut rng = SeededRng::new(opts.seed, stream_id("fit_guild_centroids", restart as u64));
    let mut g = DMatrix::from_fn(m, d, |_, _| rng.random::<f64>());
    let mut r = DMatrix::from_fn(m, d, |_, _| rng.random::<f64>());
    project_rows(&mut g);
    project_rows(&mut r);
    let mut loss = objective(target, &g, &r);
    let mut step = opts.step;
    for _ in 0..opts.iterations {
        let e = target - &g * r.transpose();
        let grad_g = -2.0 * &e * &r;
        let grad_r = -2.0 * e.transpose() * &g;
        let mut ng = &g - step * grad_g;
        let mut nr = &r - step * grad_r;
        project_rows(&mut ng);
        project_rows(&mut nr);
        let nl = objective(target, &ng, &nr);
        if nl < loss {
            g = ng;
            r = nr;
            loss = nl;
        } else {
            step *= 0.5;
            if step < 1e-12 {
                break;
            }
        }
    }
    (g, r, loss)
}

/// Multi-start projected gradient descent on `Σ_ij (K*_ij − g_i·r_j)²` over
/// centroids in `B^d_+`. Restarts run in parallel; the lowest RMSE wins, ties
/// going to the earlier restart.
pub fn fit_guild_centroids(target: &DMatrix<f64>, d: usize, opts: &FitOptions) -> Result<CentroidFit> {
    let m = target.nrows();
    if m == 0 || target.ncols() != m {
        return invalid("target affinity must be a non-empty square matrix");
    }
    if target.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return invalid("target affinities must lie in [0, 1]");
    }
    if d == 0 || opts.restarts == 0 {
        return invalid("need d >= 1 and at least one restart");
    }
    let fits: Vec<_> = (0..opts.restarts)
        .into_par_iter()
        .map(|k| fit_once(target, d, opts, k))
        .collect();
    let (best, (g, r, _)) = fits
        .into_iter()
        .enumerate()
        .min_by(|(ia, a), (ib, b)| a.2.total_cmp(&b.2).then(ia.cmp(ib)))
        .expect("at least one restart");
    let rows = |x: &DMatrix<f64>| -> Vec<Vec<f64>> {
        x.row_iter().map(|row| row.iter().copied().collect()).collect()
    };
    let err = rmse(target, &g, &r);
    Ok(CentroidFit {
        green: rows(&g),
        red: rows(&r),
        rmse: err,
        converged: err <= opts.tolerance,
        restart: best,
    })
}

/// Mixture of truncated Gaussians centred at fitted centroids. `kappa`
/// overrides every guild's precisions when given.
pub fn build_mixture(guilds: &[GuildSpec], centroids: &CentroidFit, kappa: Option<&[f64]>) -> Result<IntensityModel> {
    if centroids.green.len() != guilds.len() {
        return invalid(format!(
            "{} centroid pairs for {} guilds",
            centroids.green.len(),
            guilds.len()
        ));
    }
    let comps = guilds
        .iter()
        .enumerate()
        .map(|(m, g)| {
            let side = |spec: &TruncGaussianSpec, mean: &[f64]| TruncGaussianSpec {
                mean: mean.to_vec(),
                kappa: kappa.map_or_else(|| spec.kappa.clone(), <[f64]>::to_vec),
                mass: spec.mass,
            };
            GuildSpec {
                green: side(&g.green, &centroids.green[m]),
                red: side(&g.red, &centroids.red[m]),
                ..g.clone()
            }
            .component()
        })
        .collect::<Result<Vec<_>>>()?;
    IntensityModel::mixture(comps)
}

/// Mixture of the guilds as specified.
pub fn guild_mixture(guilds: &[GuildSpec]) -> Result<IntensityModel> {
    IntensityModel::mixture(guilds.iter().map(GuildSpec::component).collect::<Result<Vec<_>>>()?)
}

/// Species-weighted source and target intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct AsymmetricIntensity {
    /// `ρ_S = Σ_m w_{S,m} ρ_m`.
    pub source: IntensityModel,
    /// `ρ_T = Σ_m w_{T,m} ρ_m`.
    pub target: IntensityModel,
    /// `2 M_S M_T / Λ`, dividing `ρ_S ρ_T` so that the edge intensity
    /// integrates to `Λ/2`.
    pub normalization: f64,
    pub lambda: f64,
}

impl AsymmetricIntensity {
    /// `∫∫ ρ_S ρ_T / normalization`.
    pub fn total_edge_intensity(&self) -> f64 {
        self.source.total_intensity() * self.target.total_intensity() / self.normalization
    }
}

pub fn asymmetric_edge_intensity(guilds: &[GuildSpec]) -> Result<AsymmetricIntensity> {
    let lambda: f64 = guilds.iter().map(GuildSpec::weight).sum();
    let side = |w: &dyn Fn(&GuildSpec) -> f64, name: &str| -> Result<IntensityModel> {
        let mut comps = Vec::new();
        for g in guilds {
            let wm = w(g);
            if !(wm >= 0.0 && wm.is_finite()) {
                return invalid(format!("{name} weight of {} must be non-negative, got {wm}", g.label));
            }
            if wm > 0.0 {
                let mut c = g.component()?;
                c.green = c.green.scaled(wm)?;
                comps.push(c);
            }
        }
        if comps.is_empty() {
            return invalid(format!("every {name} weight is zero"));
        }
        IntensityModel::mixture(comps)
    };
    let source = side(&|g| g.w_source, "source")?;
    let target = side(&|g| g.w_target, "target")?;
    let normalization = 2.0 * source.total_intensity() * target.total_intensity() / lambda;
    Ok(AsymmetricIntensity {
        source,
        target,
        normalization,
        lambda,
    })
}

/// Outcome of absorbing coordinate weights into the kernel.
#[derive(Clone, Debug, PartialEq)]
pub enum Absorption {
    /// `(w_S(g) g, w_T(r) r)` for every position.
    Admissible(Vec<Position>),
    /// Positions whose rescaled green or red vector leaves `B^d_+`.
    Rejected(Vec<usize>),
}

pub fn absorb_coordinate_weights(
    w_source: &dyn Fn(&[f64]) -> f64,
    w_target: &dyn Fn(&[f64]) -> f64,
    positions: &[Position],
) -> Result<Absorption> {
    let mut out = Vec::with_capacity(positions.len());
    let mut bad = Vec::new();
    for (i, p) in positions.iter().enumerate() {
        let (ws, wt) = (w_source(p.g.as_slice()), w_target(p.r.as_slice()));
        if !(ws >= 0.0 && wt >= 0.0) {
            return invalid(format!("weights must be non-negative, got {ws}, {wt} at position {i}"));
        }
        let scale = |v: &LatentVector, w: f64| LatentVector::new(v.as_slice().iter().map(|x| x * w).collect());
        match (scale(&p.g, ws), scale(&p.r, wt)) {
            (Ok(g), Ok(r)) => out.push(Position { g, r }),
            (Err(IdpgError::InvalidLatent(_)), _) | (_, Err(IdpgError::InvalidLatent(_))) => bad.push(i),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(if bad.is_empty() {
        Absorption::Admissible(out)
    } else {
        Absorption::Rejected(bad)
    })
}

#[cfg(test)]
mod tests;
