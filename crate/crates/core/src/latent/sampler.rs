//! Exact samplers for normalised marginal densities.

use rand::Rng;
use rand_distr::StandardNormal;

use super::normal::UnitTruncSampler;
use super::{GridField, MarginalIntensity, NORM_TOL};
use crate::error::{IdpgError, Result};

/// Consecutive rejections tolerated before a spec is declared degenerate.
pub const MAX_REJECTIONS: u64 = 10_000_000;

/// Draws from `ρ / c` for one marginal.
#[derive(Clone, Debug)]
pub(crate) enum MarginalSampler {
    Uniform {
        dim: usize,
    },
    Gauss {
        coords: Vec<UnitTruncSampler>,
        check_ball: bool,
    },
    Grid {
        dim: usize,
        n: usize,
        cumulative: Vec<f64>,
        cells: Vec<usize>,
        ball: bool,
    },
}

impl MarginalSampler {
    pub fn new(m: &MarginalIntensity) -> Self {
        match m {
            MarginalIntensity::UniformBall { dim, .. } => Self::Uniform { dim: *dim },
            MarginalIntensity::TruncGaussian(t) => {
                let reach2: f64 = t.reach().iter().map(|v| v * v).sum();
                Self::Gauss {
                    coords: t.factors().map(UnitTruncSampler::new).collect(),
                    check_ball: t.dim() > 1 && reach2 > 1.0,
                }
            }
            MarginalIntensity::GridTabulated(g) => Self::from_grid(g, true),
        }
    }

    /// Cell-then-uniform sampler for a tabulated density; `ball` rejects
    /// points of boundary cells that fall outside `B^d_+`.
    pub fn from_grid(g: &GridField, ball: bool) -> Self {
        let mut cumulative = Vec::new();
        let mut cells = Vec::new();
        let mut acc = 0.0;
        for (i, &v) in g.values().iter().enumerate() {
            if v > 0.0 {
                acc += v;
                cumulative.push(acc);
                cells.push(i);
            }
        }
        Self::Grid {
            dim: g.dim(),
            n: g.points_per_axis(),
            cumulative,
            cells,
            ball,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) -> Result<()> {
        match self {
            Self::Uniform { dim } => {
                let mut n2 = 0.0;
                for v in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *v = z.abs();
                    n2 += z * z;
                }
                if n2 == 0.0 {
                    out.iter_mut().for_each(|v| *v = 0.0);
                    return Ok(());
                }
                let u: f64 = rng.random();
                let scale = u.powf(1.0 / *dim as f64) / n2.sqrt();
                out.iter_mut().for_each(|v| *v *= scale);
                Ok(())
            }
            Self::Gauss { coords, check_ball } => {
                let mut rejects = 0u64;
                loop {
                    for (v, s) in out.iter_mut().zip(coords) {
                        *v = s.map(rng.random());
                    }
                    if !check_ball || out.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                        return Ok(());
                    }
                    rejects += 1;
                    if rejects > MAX_REJECTIONS {
                        return Err(IdpgError::SamplerStalled(rejects));
                    }
                }
            }
            Self::Grid {
                dim,
                n,
                cumulative,
                cells,
                ball,
            } => {
                let total = *cumulative.last().expect("grid marginal has mass");
                let u = rng.random::<f64>() * total;
                let k = cumulative.partition_point(|&c| c <= u).min(cells.len() - 1);
                let mut idx = cells[k];
                let mut corner = vec![0usize; *dim];
                for a in (0..*dim).rev() {
                    corner[a] = idx % n;
                    idx /= n;
                }
                let h = 1.0 / *n as f64;
                let mut rejects = 0u64;
                loop {
                    for (v, &c) in out.iter_mut().zip(&corner) {
                        *v = ((c as f64 + rng.random::<f64>()) * h).min(1.0);
                    }
                    if !*ball || *dim == 1 || out.iter().map(|v| v * v).sum::<f64>() <= 1.0 + NORM_TOL {
                        return Ok(());
                    }
                    rejects += 1;
                    if rejects > MAX_REJECTIONS {
                        return Err(IdpgError::SamplerStalled(rejects));
                    }
                }
            }
        }
    }
}
