//! Marginal and joint intensity definitions.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use super::normal::GaussFactor;
use super::{check_dim, in_ball, BoxRegion, GridField, MaskKind, Position};
use crate::error::{invalid, IdpgError, Result};

/// Parameters of a truncated Gaussian marginal: per-dimension mean and
/// precision `κ_i = 1/σ_i²`, and total mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncGaussianSpec {
    pub mean: Vec<f64>,
    pub kappa: Vec<f64>,
    pub mass: f64,
}

/// Truncated Gaussian on `B^d_+`, normalised so that it integrates to `mass`.
///
/// The normaliser is `Π_i ∫_0^1 f_i · P(‖X‖ ≤ 1)` where `X` has independent
/// coordinates with densities ∝ `f_i` on `[0,1]`. The box factors are exact;
/// the ball probability is 1 when the Gaussian cannot reach the sphere and is
/// otherwise computed by discretised convolution of the squared coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TruncGaussianSpec", into = "TruncGaussianSpec")]
pub struct TruncGaussian {
    spec: TruncGaussianSpec,
    #[serde(skip)]
    box_norm: Vec<f64>,
    #[serde(skip)]
    ball_prob: f64,
}

const BALL_BINS: usize = 4096;

impl TruncGaussian {
    pub fn new(spec: TruncGaussianSpec) -> Result<Self> {
        let d = spec.mean.len();
        check_dim(d)?;
        if spec.kappa.len() != d {
            return Err(IdpgError::DimensionMismatch {
                expected: d,
                got: spec.kappa.len(),
            });
        }
        if !(spec.mass.is_finite() && spec.mass > 0.0) {
            return invalid(format!("mass must be positive, got {}", spec.mass));
        }
        if spec.kappa.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return invalid(format!("kappa must be positive, got {:?}", spec.kappa));
        }
        if spec.mean.iter().any(|m| !(0.0..=1.0).contains(m)) || !in_ball(&spec.mean) {
            return invalid(format!("mean {:?} outside B^d_+", spec.mean));
        }
        let factors: Vec<GaussFactor> = spec
            .mean
            .iter()
            .zip(&spec.kappa)
            .map(|(&mu, &kappa)| GaussFactor { mu, kappa })
            .collect();
        let box_norm = factors.iter().map(|f| f.moments(0.0, 1.0).0).collect();
        let ball_prob = ball_probability(&factors);
        if !(ball_prob > 0.0) {
            return invalid("truncated Gaussian has no mass inside the ball");
        }
        Ok(Self {
            spec,
            box_norm,
            ball_prob,
        })
    }

    pub fn spec(&self) -> &TruncGaussianSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.mean.len()
    }

    pub(crate) fn factors(&self) -> impl Iterator<Item = GaussFactor> + '_ {
        self.spec
            .mean
            .iter()
            .zip(&self.spec.kappa)
            .map(|(&mu, &kappa)| GaussFactor { mu, kappa })
    }

    /// `∫_{[0,1]^d} Π f_i`, before the ball restriction.
    pub(crate) fn box_normalizer(&self) -> f64 {
        self.box_norm.iter().product()
    }

    /// Probability that the box-truncated Gaussian lands inside the ball.
    pub fn ball_probability(&self) -> f64 {
        self.ball_prob
    }

    /// Density at `x`; zero outside `B^d_+`.
    pub fn density(&self, x: &[f64]) -> f64 {
        if !in_ball(x) {
            return 0.0;
        }
        let mut v = self.spec.mass / (self.box_normalizer() * self.ball_prob);
        for (f, &xi) in self.factors().zip(x) {
            v *= f.eval(xi);
        }
        v
    }

    /// `(∫_box ρ, ∫_box x ρ)`. Closed form when the box (clipped to
    /// `[0,1]^d`) lies inside the ball. Otherwise a midpoint rule with
    /// `resolution` nodes per axis runs over the leading `d - 1` coordinates
    /// while the last one is integrated exactly up to the sphere.
    pub(crate) fn box_integrals(&self, region: &BoxRegion, resolution: usize) -> (f64, Vec<f64>) {
        let d = self.dim();
        let lo: Vec<f64> = region.lower.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let hi: Vec<f64> = region.upper.iter().map(|v| v.clamp(0.0, 1.0)).collect();
        let k = self.spec.mass / (self.box_normalizer() * self.ball_prob);
        let factors: Vec<GaussFactor> = self.factors().collect();
        if d == 1 || hi.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
            let per: Vec<(f64, f64, f64)> =
                (0..d).map(|i| factors[i].moments(lo[i], hi[i])).collect();
            let mass = k * per.iter().map(|p| p.0).product::<f64>();
            let first = (0..d)
                .map(|a| {
                    k * per
                        .iter()
                        .enumerate()
                        .map(|(i, p)| if i == a { p.1 } else { p.0 })
                        .product::<f64>()
                })
                .collect();
            return (mass, first);
        }
        let n = resolution.max(1);
        let m = d - 1;
        let h: Vec<f64> = (0..m).map(|a| (hi[a] - lo[a]) / n as f64).collect();
        let vol: f64 = h.iter().product();
        let last = &factors[m];
        let mut mass = 0.0;
        let mut first = vec![0.0; d];
        let mut x = vec![0.0; m];
        for mut idx in 0..n.pow(m as u32) {
            let mut w = k * vol;
            for a in (0..m).rev() {
                x[a] = lo[a] + ((idx % n) as f64 + 0.5) * h[a];
                w *= factors[a].eval(x[a]);
                idx /= n;
            }
            let r2: f64 = x.iter().map(|v| v * v).sum();
            if r2 >= 1.0 {
                continue;
            }
            let top = hi[m].min((1.0 - r2).sqrt());
            if top <= lo[m] {
                continue;
            }
            let (m0, m1, _) = last.moments(lo[m], top);
            mass += w * m0;
            for a in 0..m {
                first[a] += w * m0 * x[a];
            }
            first[m] += w * m1;
        }
        (mass, first)
    }

    /// Smallest `t` such that the Gaussian puts negligible mass beyond `t` in
    /// every coordinate (10σ, capped at 1).
    pub(crate) fn reach(&self) -> Vec<f64> {
        self.factors()
            .map(|f| (f.mu + 10.0 * f.sigma()).min(1.0))
            .collect()
    }
}

impl TryFrom<TruncGaussianSpec> for TruncGaussian {
    type Error = IdpgError;
    fn try_from(s: TruncGaussianSpec) -> Result<Self> {
        Self::new(s)
    }
}

impl From<TruncGaussian> for TruncGaussianSpec {
    fn from(t: TruncGaussian) -> Self {
        t.spec
    }
}

fn ball_probability(factors: &[GaussFactor]) -> f64 {
    let d = factors.len();
    let span = |f: &GaussFactor| {
        (
            (f.mu - 10.0 * f.sigma()).max(0.0),
            (f.mu + 10.0 * f.sigma()).min(1.0),
        )
    };
    let reach2: f64 = factors.iter().map(|f| span(f).1.powi(2)).sum();
    if d == 1 || reach2 <= 1.0 {
        return 1.0;
    }
    // Law of S = Σ_{i<d} X_i² on nodes S_lo + kΔ spanning the effective
    // support of S, each node collecting the mass of its half-open bin; then
    // P(‖X‖ ≤ 1) = E[F_d(√(1 - S))].
    let head = &factors[..d - 1];
    let s_lo: f64 = head.iter().map(|f| span(f).0.powi(2)).sum();
    let s_hi: f64 = head.iter().map(|f| span(f).1.powi(2)).sum();
    let b = BALL_BINS;
    let delta = ((s_hi - s_lo) / b as f64).max(f64::MIN_POSITIVE);
    let square_law = |f: &GaussFactor| -> Vec<f64> {
        let (lo, hi) = span(f);
        let base = lo * lo;
        let bins = (((hi * hi - base) / delta).ceil() as usize).min(b);
        let mut w = vec![0.0; bins + 1];
        let mut prev = f.unit_cdf(lo);
        for (k, wk) in w.iter_mut().enumerate() {
            let edge = (base + (k as f64 + 0.5) * delta).min(1.0).sqrt();
            let c = if k == bins { f.unit_cdf(1.0) } else { f.unit_cdf(edge) };
            *wk = c - prev;
            prev = c;
        }
        w[0] += f.unit_cdf(lo);
        w
    };
    let mut dist = square_law(&head[0]);
    for f in &head[1..] {
        let w = square_law(f);
        let mut next = vec![0.0; (dist.len() + w.len() - 1).min(b + 1)];
        for (i, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (j, &q) in w.iter().enumerate() {
                let k = (i + j).min(b);
                next[k] += p * q;
            }
        }
        dist = next;
    }
    let last = &factors[d - 1];
    dist.iter()
        .enumerate()
        .map(|(k, &p)| p * last.unit_cdf((1.0 - s_lo - k as f64 * delta).max(0.0).sqrt()))
        .sum::<f64>()
}

/// Volume of `B^d_+`.
pub(crate) fn positive_ball_volume(d: usize) -> f64 {
    let df = d as f64;
    PI.powf(df / 2.0) / gamma(df / 2.0 + 1.0) / 2f64.powi(d as i32)
}

/// A marginal intensity on `B^d_+` (the green or red factor of a product).
#[derive(Clone, Debug, PartialEq)]
pub enum MarginalIntensity {
    /// Constant density `mass / vol(B^d_+)`.
    UniformBall { dim: usize, mass: f64 },
    TruncGaussian(TruncGaussian),
    /// Piecewise-constant density read off a ball-masked grid.
    GridTabulated(GridField),
}

impl MarginalIntensity {
    pub fn uniform(dim: usize, mass: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(mass.is_finite() && mass > 0.0) {
            return invalid(format!("mass must be positive, got {mass}"));
        }
        Ok(Self::UniformBall { dim, mass })
    }

    pub fn trunc_gaussian(spec: TruncGaussianSpec) -> Result<Self> {
        Ok(Self::TruncGaussian(TruncGaussian::new(spec)?))
    }

    pub fn grid(field: GridField) -> Result<Self> {
        check_dim(field.dim())?;
        if field.mask_kind() == MaskKind::BallPair {
            return invalid("a marginal grid needs a ball or full mask");
        }
        if field.mask_kind() == MaskKind::Full && field.dim() > 1 {
            return invalid("a marginal grid in d >= 2 must be ball-masked");
        }
        if !(field.total() > 0.0 && field.total().is_finite()) {
            return invalid("tabulated marginal has no finite positive mass");
        }
        Ok(Self::GridTabulated(field))
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformBall { dim, .. } => *dim,
            Self::TruncGaussian(t) => t.dim(),
            Self::GridTabulated(g) => g.dim(),
        }
    }

    /// Total integral `c`.
    pub fn mass(&self) -> f64 {
        match self {
            Self::UniformBall { mass, .. } => *mass,
            Self::TruncGaussian(t) => t.spec.mass,
            Self::GridTabulated(g) => g.total(),
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim() || !in_ball(x) {
            return 0.0;
        }
        match self {
            Self::UniformBall { dim, mass } => mass / positive_ball_volume(*dim),
            Self::TruncGaussian(t) => t.density(x),
            Self::GridTabulated(g) => g.value_at(x),
        }
    }

    /// Same shape with the mass multiplied by `w > 0`.
    pub fn scaled(&self, w: f64) -> Result<Self> {
        if !(w.is_finite() && w > 0.0) {
            return invalid(format!("scale must be positive, got {w}"));
        }
        Ok(match self {
            Self::UniformBall { dim, mass } => Self::UniformBall {
                dim: *dim,
                mass: mass * w,
            },
            Self::TruncGaussian(t) => {
                let mut s = t.spec.clone();
                s.mass *= w;
                Self::TruncGaussian(TruncGaussian::new(s)?)
            }
            Self::GridTabulated(g) => {
                let mut g = g.clone();
                let v = g.values().iter().map(|v| v * w).collect();
                g.set_values(v)?;
                Self::GridTabulated(g)
            }
        })
    }
}

/// One species of a mixture of products.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureComponent {
    pub label: String,
    pub green: MarginalIntensity,
    pub red: MarginalIntensity,
}

impl MixtureComponent {
    /// `γ_m = c_{G,m} c_{R,m}`.
    pub fn weight(&self) -> f64 {
        self.green.mass() * self.red.mass()
    }
}

/// Intensity `ρ` on `Ω = B^d_+ × B^d_+`.
#[derive(Clone, Debug, PartialEq)]
pub enum IntensityModel {
    Product {
        green: MarginalIntensity,
        red: MarginalIntensity,
    },
    Mixture {
        components: Vec<MixtureComponent>,
    },
    /// Arbitrary joint density in `d = 1`, tabulated over `(g, r) ∈ [0,1]²`.
    Tabulated { joint: GridField },
}

impl IntensityModel {
    pub fn product(green: MarginalIntensity, red: MarginalIntensity) -> Result<Self> {
        if green.dim() != red.dim() {
            return Err(IdpgError::DimensionMismatch {
                expected: green.dim(),
                got: red.dim(),
            });
        }
        Ok(Self::Product { green, red })
    }

    pub fn mixture(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| IdpgError::InvalidParameter("mixture needs a component".into()))?;
        let d = first.green.dim();
        for c in &components {
            for m in [&c.green, &c.red] {
                if m.dim() != d {
                    return Err(IdpgError::DimensionMismatch {
                        expected: d,
                        got: m.dim(),
                    });
                }
            }
            if !(c.weight() > 0.0) {
                return invalid(format!("component {} has zero weight", c.label));
            }
        }
        Ok(Self::Mixture { components })
    }

    pub fn tabulated(joint: GridField) -> Result<Self> {
        if joint.dim() != 2 {
            return invalid("tabulated joints are supported only for d = 1 (a 2-D grid)");
        }
        if joint.mask_kind() == MaskKind::Ball {
            return invalid("a tabulated joint needs a full or ball-pair mask");
        }
        if !(joint.total() > 0.0 && joint.total().is_finite()) {
            return invalid("tabulated joint has no finite positive mass");
        }
        Ok(Self::Tabulated { joint })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Product { green, .. } => green.dim(),
            Self::Mixture { components } => components[0].green.dim(),
            Self::Tabulated { .. } => 1,
        }
    }

    pub fn is_product(&self) -> bool {
        matches!(self, Self::Product { .. })
    }

    /// Λ = ∫ρ.
    pub fn total_intensity(&self) -> f64 {
        match self {
            Self::Product { green, red } => green.mass() * red.mass(),
            Self::Mixture { components } => components.iter().map(|c| c.weight()).sum(),
            Self::Tabulated { joint } => joint.total(),
        }
    }

    /// ρ(g, r) from raw coordinates; zero outside `Ω`.
    pub fn density(&self, g: &[f64], r: &[f64]) -> f64 {
        match self {
            Self::Product { green, red } => {
                let a = green.density(g);
                if a == 0.0 {
                    0.0
                } else {
                    a * red.density(r)
                }
            }
            Self::Mixture { components } => components
                .iter()
                .map(|c| c.green.density(g) * c.red.density(r))
                .sum(),
            Self::Tabulated { joint } => {
                if g.len() != 1 || r.len() != 1 {
                    return 0.0;
                }
                joint.value_at(&[g[0], r[0]])
            }
        }
    }

    /// ρ at a position.
    pub fn evaluate(&self, p: &Position) -> Result<f64> {
        if p.dim() != self.dim() {
            return Err(IdpgError::DimensionMismatch {
                expected: self.dim(),
                got: p.dim(),
            });
        }
        Ok(self.density(p.g.as_slice(), p.r.as_slice()))
    }

    /// The same shape rescaled to total intensity `lambda`. Green masses
    /// carry the factor, so mixture proportions are unchanged.
    pub fn scaled_to(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return invalid(format!("total intensity must be positive, got {lambda}"));
        }
        let w = lambda / self.total_intensity();
        Ok(match self {
            Self::Product { green, red } => Self::Product {
                green: green.scaled(w)?,
                red: red.clone(),
            },
            Self::Mixture { components } => Self::Mixture {
                components: components
                    .iter()
                    .map(|c| {
                        Ok(MixtureComponent {
                            label: c.label.clone(),
                            green: c.green.scaled(w)?,
                            red: c.red.clone(),
                        })
                    })
                    .collect::<Result<_>>()?,
            },
            Self::Tabulated { joint } => {
                let mut joint = joint.clone();
                joint.values_mut_unchecked().iter_mut().for_each(|v| *v *= w);
                Self::Tabulated { joint }
            }
        })
    }
}

/// `ρ(s)` for a position; see [`IntensityModel::evaluate`].
pub fn evaluate_intensity(model: &IntensityModel, p: &Position) -> Result<f64> {
    model.evaluate(p)
}
