//! Explicit finite-volume evolution of the green and red marginals on
//! `B^d_+` grids (`d ∈ {1, 2}`), and the graph statistics they induce.
//!
//! Fluxes live on cell faces: central differences for diffusion, first-order
//! upwind for advection. A face whose neighbour is outside the grid or the
//! ball mask is a boundary face. There the ghost value is `q ρ_i` with a
//! retention factor `q` (1 reflecting, 0 absorbing, `max(0, 1 - αh/β)`
//! Robin), and the outward flux is scaled by `1 - q`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, IdpgError, Result};
use crate::expectations::{expected_edges, EdgeRule};
use crate::heat::tabulate_marginal;
use crate::latent::{BoxRegion, GridField, IntensityModel, MaskKind, MomentSummary};

/// Default points per axis.
pub const DEFAULT_RESOLUTION: usize = 128;

/// Fraction of the stability bound used when the step is chosen automatically.
pub const AUTO_DT_SAFETY: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    /// `ρ = 0` on the boundary.
    Absorbing,
    /// No flux through the boundary.
    Reflecting,
    /// `α ρ + β ∂ρ/∂n = 0`.
    Robin { alpha: f64, beta: f64 },
}

impl BoundaryCondition {
    /// Ghost value over interior value at a boundary face.
    fn retention(self, h: f64) -> f64 {
        match self {
            Self::Absorbing => 0.0,
            Self::Reflecting => 1.0,
            Self::Robin { alpha, beta } => {
                if beta == 0.0 {
                    0.0
                } else {
                    (1.0 - alpha * h / beta).max(0.0)
                }
            }
        }
    }

    fn validate(self) -> Result<()> {
        if let Self::Robin { alpha, beta } = self {
            if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) || alpha + beta == 0.0 {
                return invalid(format!("Robin coefficients must be non-negative and not both zero, got {alpha}, {beta}"));
            }
        }
        Ok(())
    }
}

/// What drives the marginals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegimeSpec {
    /// No evolution.
    Static,
    /// `∂ρ/∂t = ν Δρ` on each marginal.
    Diffusion { nu: f64 },
    /// `∂ρ/∂t = -∇·(v ρ)`. `velocity` has `d` entries (shared by both
    /// marginals) or `2d` (green first).
    Advection { velocity: Vec<f64> },
    /// Diffusion plus logistic growth `r ρ (1 - ρ/K)` applied to each
    /// marginal density.
    ReactionDiffusion { nu: f64, rate: f64, capacity: f64 },
    /// Green flees the red centroid, red chases the green one, both pulled
    /// back towards `x0` with strength `γ`.
    PursuitEvasion {
        alpha: f64,
        beta: f64,
        gamma: f64,
        x0: Vec<f64>,
    },
}

impl RegimeSpec {
    fn validate(&self, d: usize) -> Result<()> {
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        match self {
            Self::Static => Ok(()),
            Self::Diffusion { nu } => {
                if finite_nonneg(*nu) {
                    Ok(())
                } else {
                    invalid(format!("nu must be non-negative, got {nu}"))
                }
            }
            Self::Advection { velocity } => {
                if velocity.len() != d && velocity.len() != 2 * d {
                    return invalid(format!("velocity needs {d} or {} entries, got {}", 2 * d, velocity.len()));
                }
                if velocity.iter().all(|v| v.is_finite()) {
                    Ok(())
                } else {
                    invalid("velocity must be finite")
                }
            }
            Self::ReactionDiffusion { nu, rate, capacity } => {
                if finite_nonneg(*nu) && rate.is_finite() && *capacity > 0.0 && capacity.is_finite() {
                    Ok(())
                } else {
                    invalid(format!("bad reaction-diffusion parameters nu={nu}, rate={rate}, capacity={capacity}"))
                }
            }
            Self::PursuitEvasion { alpha, beta, gamma, x0 } => {
                if !(*alpha > 0.0 && *beta > 0.0 && *gamma > 0.0) {
                    return invalid(format!("alpha, beta, gamma must be positive, got {alpha}, {beta}, {gamma}"));
                }
                if x0.len() != d {
                    return Err(IdpgError::DimensionMismatch {
                        expected: d,
                        got: x0.len(),
                    });
                }
                if x0.iter().any(|v| !(0.0..=1.0).contains(v)) || x0.iter().map(|v| v * v).sum::<f64>() > 1.0 {
                    return invalid(format!("x0 {x0:?} is outside B^d_+"));
                }
                Ok(())
            }
        }
    }

    fn nu(&self) -> f64 {
        match self {
            Self::Diffusion { nu } | Self::ReactionDiffusion { nu, .. } => *nu,
            _ => 0.0,
        }
    }
}

/// Product intensity `ρ_G ρ_R` at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct PdeState {
    pub green: GridField,
    pub red: GridField,
    pub time: f64,
    pub bc: BoundaryCondition,
    pub regime: RegimeSpec,
    /// Total mass removed by clamping negative values to zero.
    pub clamped_mass: f64,
}

impl PdeState {
    pub fn new(green: GridField, red: GridField, bc: BoundaryCondition, regime: RegimeSpec) -> Result<Self> {
        let d = green.dim();
        if !(1..=2).contains(&d) {
            return invalid(format!("PDE grids need d in {{1, 2}}, got {d}"));
        }
        if red.dim() != d {
            return Err(IdpgError::DimensionMismatch {
                expected: d,
                got: red.dim(),
            });
        }
        if red.points_per_axis() != green.points_per_axis() || red.mask_kind() != green.mask_kind() {
            return invalid("green and red grids must share resolution and mask");
        }
        if green.mask_kind() != MaskKind::Ball {
            return invalid("PDE grids use the ball mask");
        }
        bc.validate()?;
        regime.validate(d)?;
        Ok(Self {
            green,
            red,
            time: 0.0,
            bc,
            regime,
            clamped_mass: 0.0,
        })
    }

    /// Tabulates a product model's marginals, each rescaled to its exact mass.
    pub fn from_model(
        model: &IntensityModel,
        resolution: usize,
        bc: BoundaryCondition,
        regime: RegimeSpec,
    ) -> Result<Self> {
        let (green, red) = match model {
            IntensityModel::Product { green, red } => (green, red),
            _ => return Err(IdpgError::NotProduct("PDE evolution needs a product intensity".into())),
        };
        if green.dim() > 2 {
            return invalid(format!("PDE grids need d in {{1, 2}}, got {}", green.dim()));
        }
        Self::new(
            tabulate_marginal(green, resolution)?,
            tabulate_marginal(red, resolution)?,
            bc,
            regime,
        )
    }

    pub fn dim(&self) -> usize {
        self.green.dim()
    }

    pub fn spacing(&self) -> f64 {
        self.green.spacing()
    }

    /// The current intensity as a product of tabulated marginals.
    pub fn model(&self) -> Result<IntensityModel> {
        use crate::latent::MarginalIntensity;
        IntensityModel::product(
            MarginalIntensity::grid(self.green.clone())?,
            MarginalIntensity::grid(self.red.clone())?,
        )
    }

    pub fn summary(&self) -> Result<MomentSummary> {
        MomentSummary::from_grids(&self.green, &self.red)
    }

    /// Velocity fields `(v_G, v_R)` as functions of position and axis.
    fn velocities(&self) -> Result<Velocity> {
        let d = self.dim();
        Ok(match &self.regime {
            RegimeSpec::Advection { velocity } => {
                let (g, r) = if velocity.len() == d {
                    (velocity.clone(), velocity.clone())
                } else {
                    (velocity[..d].to_vec(), velocity[d..].to_vec())
                };
                Velocity::Constant(g, r)
            }
            RegimeSpec::PursuitEvasion { alpha, beta, gamma, x0 } => {
                let mg = centroid(&self.green)?;
                let mr = centroid(&self.red)?;
                // v_G = -α(μ̃_R - x0) - γ(g - x0), v_R = β(μ̃_G - x0) - γ(r - x0).
                let base_g = (0..d).map(|k| -alpha * (mr[k] - x0[k]) + gamma * x0[k]).collect();
                let base_r = (0..d).map(|k| beta * (mg[k] - x0[k]) + gamma * x0[k]).collect();
                Velocity::Affine {
                    base_g,
                    base_r,
                    slope: -gamma,
                }
            }
            _ => Velocity::None,
        })
    }

    /// Largest stable step for the current state, with the name of the
    /// binding bound.
    pub fn stability_bound(&self) -> Result<(f64, &'static str)> {
        let h = self.spacing();
        let d = self.dim() as f64;
        let mut best = (f64::INFINITY, "none");
        let nu = self.regime.nu();
        if nu > 0.0 {
            best = (h * h / (4.0 * nu * d), "diffusion h^2/(4 nu d)");
        }
        let speed = self.velocities()?.max_speed(self.dim());
        if speed > 0.0 {
            let b = h / (2.0 * speed);
            if b < best.0 {
                best = (b, "advection h/(2 max|v|_1)");
            }
        }
        if let RegimeSpec::ReactionDiffusion { rate, .. } = self.regime {
            if rate.abs() > 0.0 {
                let b = 0.5 / rate.abs();
                if b < best.0 {
                    best = (b, "reaction 1/(2|r|)");
                }
            }
        }
        Ok(best)
    }
}

enum Velocity {
    None,
    Constant(Vec<f64>, Vec<f64>),
    /// `v(x) = base + slope · x` per component.
    Affine {
        base_g: Vec<f64>,
        base_r: Vec<f64>,
        slope: f64,
    },
}

impl Velocity {
    fn at(&self, red: bool, axis: usize, x: f64) -> f64 {
        match self {
            Self::None => 0.0,
            Self::Constant(g, r) => {
                if red {
                    r[axis]
                } else {
                    g[axis]
                }
            }
            Self::Affine { base_g, base_r, slope } => {
                let b = if red { base_r[axis] } else { base_g[axis] };
                b + slope * x
            }
        }
    }

    /// Largest `Σ_k |v_k|` over `[0,1]^d`; affine fields peak at a corner.
    fn max_speed(&self, d: usize) -> f64 {
        let mut best = 0.0f64;
        for red in [false, true] {
            let s: f64 = (0..d)
                .map(|k| self.at(red, k, 0.0).abs().max(self.at(red, k, 1.0).abs()))
                .sum();
            best = best.max(s);
        }
        best
    }
}

/// One explicit step of size `dt` for one marginal. Returns the clamped mass.
fn step_field(
    field: &mut GridField,
    dt: f64,
    nu: f64,
    vel: &dyn Fn(usize, f64) -> f64,
    retention: f64,
    reaction: Option<(f64, f64)>,
) -> f64 {
    let d = field.dim();
    let n = field.points_per_axis();
    let h = field.spacing();
    let mask = field.mask().to_vec();
    let rho = field.values().to_vec();
    let mut out = rho.clone();
    let k = dt / h;
    let mut idx = vec![0usize; d];
    let mut nb = vec![0usize; d];
    for i in 0..rho.len() {
        if !mask[i] {
            continue;
        }
        field.unravel(i, &mut idx);
        for a in 0..d {
            let centre = (idx[a] as f64 + 0.5) * h;
            for dir in [1isize, -1] {
                let j = idx[a] as isize + dir;
                let face = centre + 0.5 * h * dir as f64;
                let v = vel(a, face) * dir as f64; // outward component
                let neighbour = if (0..n as isize).contains(&j) {
                    nb.copy_from_slice(&idx);
                    nb[a] = j as usize;
                    let m = field.ravel(&nb);
                    mask[m].then_some(m)
                } else {
                    None
                };
                match neighbour {
                    // Each interior face is handled once, from its lower cell.
                    Some(m) if dir == 1 => {
                        let diff = -nu * (rho[m] - rho[i]) / h;
                        let adv = if v >= 0.0 { v * rho[i] } else { v * rho[m] };
                        let flux = (diff + adv) * k;
                        out[i] -= flux;
                        out[m] += flux;
                    }
                    Some(_) => {}
                    None => {
                        let leak = 1.0 - retention;
                        if leak > 0.0 {
                            let flux = (nu * rho[i] / h + v.max(0.0) * rho[i]) * leak;
                            out[i] -= flux * k;
                        }
                    }
                }
            }
        }
        if let Some((r, cap)) = reaction {
            out[i] += dt * r * rho[i] * (1.0 - rho[i] / cap);
        }
    }
    let mut clamped = 0.0;
    for (o, &live) in out.iter_mut().zip(&mask) {
        if !live {
            *o = 0.0;
        } else if *o < 0.0 {
            clamped -= *o;
            *o = 0.0;
        }
    }
    field.values_mut_unchecked().copy_from_slice(&out);
    clamped * field.cell_volume()
}

/// Advances both marginals by `dt`, which must respect the stability bound.
pub fn pde_step(state: &PdeState, dt: f64) -> Result<PdeState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    let (bound, name) = state.stability_bound()?;
    if dt > bound * (1.0 + 1e-12) {
        return Err(IdpgError::Unstable {
            dt,
            bound,
            bound_name: name,
        });
    }
    let mut next = state.clone();
    next.time += dt;
    if matches!(state.regime, RegimeSpec::Static) {
        return Ok(next);
    }
    let vel = state.velocities()?;
    let nu = state.regime.nu();
    let q = state.bc.retention(state.spacing());
    let reaction = match state.regime {
        RegimeSpec::ReactionDiffusion { rate, capacity, .. } => Some((rate, capacity)),
        _ => None,
    };
    let cg = step_field(&mut next.green, dt, nu, &|a, x| vel.at(false, a, x), q, reaction);
    let cr = step_field(&mut next.red, dt, nu, &|a, x| vel.at(true, a, x), q, reaction);
    next.clamped_mass += cg + cr;
    Ok(next)
}

/// Mass-weighted mean position of a field.
pub fn centroid(field: &GridField) -> Result<Vec<f64>> {
    let b = field.box_moments(&BoxRegion::unit(field.dim()), false);
    if !(b.mass > 0.0) {
        return invalid("centroid of a field with zero mass");
    }
    Ok(b.first.iter().map(|v| v / b.mass).collect())
}

/// `κ(t) = κ₀ / (1 + 2νκ₀t)`: precision of a freely diffusing Gaussian.
pub fn gaussian_diffusion_check(kappa0: f64, nu: f64, t: f64) -> f64 {
    kappa0 / (1.0 + 2.0 * nu * kappa0 * t)
}

/// Graph statistics at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub mass_g: f64,
    pub mass_r: f64,
    pub lambda: f64,
    pub centroid_g: Vec<f64>,
    pub centroid_r: Vec<f64>,
    /// `∫∫ h̄ = Λ μ̃_G·μ̃_R`.
    pub bound_heat: f64,
    pub expected_perennial_edges: f64,
    pub expected_ephemeral_edges: f64,
    pub ratio: f64,
    pub clamped_mass: f64,
}

impl Snapshot {
    pub fn of(state: &PdeState) -> Result<Self> {
        let s = state.summary()?;
        let per = expected_edges(&s, EdgeRule::PerennialDistinct)?;
        let eph = expected_edges(&s, EdgeRule::Ephemeral)?;
        Ok(Self {
            time: state.time,
            mass_g: s.c_g,
            mass_r: s.c_r,
            lambda: s.lambda,
            centroid_g: s.mu_g_norm.clone(),
            centroid_r: s.mu_r_norm.clone(),
            bound_heat: s.lambda * s.affinity(),
            expected_perennial_edges: per,
            expected_ephemeral_edges: eph,
            ratio: per / eph,
            clamped_mass: state.clamped_mass,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub snapshots: Vec<Snapshot>,
    /// Grid states at each snapshot, when requested.
    pub fields: Vec<(GridField, GridField)>,
    pub steps: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveOptions {
    pub t_end: f64,
    /// Fixed step; `None` uses `AUTO_DT_SAFETY` times the bound at each step.
    pub dt: Option<f64>,
    /// Steps between snapshots; the initial and final states are always kept.
    pub snapshot_every: usize,
    pub keep_fields: bool,
}

/// Steps until `t_end`, shortening the last step to land on it exactly.
pub fn evolve(state: &PdeState, opts: &EvolveOptions) -> Result<(PdeState, Trajectory)> {
    if !(opts.t_end > state.time) {
        return invalid(format!("t_end {} must exceed the current time {}", opts.t_end, state.time));
    }
    if opts.snapshot_every == 0 {
        return invalid("snapshot_every must be positive");
    }
    let mut traj = Trajectory {
        snapshots: vec![Snapshot::of(state)?],
        fields: Vec::new(),
        steps: 0,
    };
    let keep = |s: &PdeState, t: &mut Trajectory| {
        if opts.keep_fields {
            t.fields.push((s.green.clone(), s.red.clone()));
        }
    };
    keep(state, &mut traj);
    let mut cur = state.clone();
    let eps = 1e-12 * opts.t_end.abs().max(1.0);
    while cur.time < opts.t_end - eps {
        let dt = match opts.dt {
            Some(dt) => dt,
            None => {
                let (b, _) = cur.stability_bound()?;
                if b.is_finite() {
                    AUTO_DT_SAFETY * b
                } else {
                    opts.t_end - cur.time
                }
            }
        };
        let dt = dt.min(opts.t_end - cur.time);
        cur = pde_step(&cur, dt)?;
        traj.steps += 1;
        let last = cur.time >= opts.t_end - eps;
        if last {
            cur.time = opts.t_end;
        }
        if last || traj.steps % opts.snapshot_every == 0 {
            traj.snapshots.push(Snapshot::of(&cur)?);
            keep(&cur, &mut traj);
        }
    }
    Ok((cur, traj))
}

#[cfg(test)]
mod tests;
