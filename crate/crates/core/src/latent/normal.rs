//! One-dimensional Gaussian factors truncated to intervals.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// Standard normal CDF.
pub(crate) fn std_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal quantile.
pub(crate) fn std_quantile(p: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    if !z.is_finite() {
        return z;
    }
    // One Newton step against the accurate CDF.
    let pdf = (-0.5 * z * z).exp() / (2.0 * PI).sqrt();
    if pdf > 1e-300 {
        z - (std_cdf(z) - p) / pdf
    } else {
        z
    }
}

/// `P(a < Z < b)` without cancellation in either tail.
pub(crate) fn std_interval_mass(a: f64, b: f64) -> f64 {
    if b <= a {
        return 0.0;
    }
    if a >= 0.0 {
        0.5 * (erfc(a * FRAC_1_SQRT_2) - erfc(b * FRAC_1_SQRT_2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * FRAC_1_SQRT_2) - erfc(-a * FRAC_1_SQRT_2))
    } else {
        1.0 - 0.5 * erfc(-a * FRAC_1_SQRT_2) - 0.5 * erfc(b * FRAC_1_SQRT_2)
    }
}

/// Unnormalised factor `exp(-κ (x - μ)² / 2)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct GaussFactor {
    pub mu: f64,
    pub kappa: f64,
}

impl GaussFactor {
    pub fn sigma(&self) -> f64 {
        1.0 / self.kappa.sqrt()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = x - self.mu;
        (-0.5 * self.kappa * u * u).exp()
    }

    /// `(∫ f, ∫ x f, ∫ x² f)` over `[lo, hi]`.
    pub fn moments(&self, lo: f64, hi: f64) -> (f64, f64, f64) {
        if hi <= lo {
            return (0.0, 0.0, 0.0);
        }
        let s = self.sigma();
        let s2 = s * s;
        let m0 = s * (2.0 * PI).sqrt() * std_interval_mass((lo - self.mu) / s, (hi - self.mu) / s);
        let (el, eh) = (self.eval(lo), self.eval(hi));
        // ∫ (x-μ) f = σ² (f(lo) - f(hi));  ∫ (x-μ)² f = σ² [(lo-μ) f(lo) - (hi-μ) f(hi)] + σ² ∫ f
        let c1 = s2 * (el - eh);
        let c2 = s2 * ((lo - self.mu) * el - (hi - self.mu) * eh) + s2 * m0;
        let m1 = self.mu * m0 + c1;
        let m2 = c2 + 2.0 * self.mu * c1 + self.mu * self.mu * m0;
        (m0, m1, m2)
    }

    /// `P(X ≤ t)` for `X` with density ∝ f on `[0, 1]`.
    pub fn unit_cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= 1.0 {
            return 1.0;
        }
        let s = self.sigma();
        let za = -self.mu / s;
        let total = std_interval_mass(za, (1.0 - self.mu) / s);
        (std_interval_mass(za, (t - self.mu) / s) / total).min(1.0)
    }
}

/// Inverse-CDF sampler for a Gaussian factor truncated to `[0, 1]`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct UnitTruncSampler {
    mu: f64,
    sigma: f64,
    p_lo: f64,
    p_span: f64,
}

impl UnitTruncSampler {
    pub fn new(f: GaussFactor) -> Self {
        let sigma = f.sigma();
        let p_lo = std_cdf(-f.mu / sigma);
        let p_hi = std_cdf((1.0 - f.mu) / sigma);
        Self {
            mu: f.mu,
            sigma,
            p_lo,
            p_span: p_hi - p_lo,
        }
    }

    /// Maps a uniform draw `u ∈ [0,1)` to the truncated variate.
    pub fn map(&self, u: f64) -> f64 {
        let p = self.p_lo + u * self.p_span;
        let x = self.mu + self.sigma * std_quantile(p);
        if x.is_finite() {
            x.clamp(0.0, 1.0)
        } else if p <= self.p_lo {
            0.0
        } else {
            1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_mass_tails() {
        let m = std_interval_mass(-1.0, 1.0);
        assert!((m - 0.682_689_492_137_085_9).abs() < 1e-14, "{m:e}");
        let t = std_interval_mass(8.0, 9.0);
        assert!((t - 6.219_831_985_865_83e-16).abs() < 1e-25);
        assert!((std_interval_mass(-9.0, -8.0) - t).abs() < 1e-28);
    }

    #[test]
    fn factor_moments_match_simpson() {
        let f = GaussFactor { mu: 0.3, kappa: 40.0 };
        let (lo, hi) = (0.05, 0.9);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let mut acc = [0.0; 3];
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let v = f.eval(x) * w * h / 3.0;
            acc[0] += v;
            acc[1] += v * x;
            acc[2] += v * x * x;
        }
        let (m0, m1, m2) = f.moments(lo, hi);
        assert!((m0 - acc[0]).abs() < 1e-12);
        assert!((m1 - acc[1]).abs() < 1e-12);
        assert!((m2 - acc[2]).abs() < 1e-12);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &z in &[-6.0, -1.3, 0.0, 0.7, 5.5] {
            assert!((std_quantile(std_cdf(z)) - z).abs() < 1e-8);
        }
    }

    #[test]
    fn sampler_stays_in_unit_interval() {
        let s = UnitTruncSampler::new(GaussFactor { mu: 0.0, kappa: 1e6 });
        for i in 0..1000 {
            let x = s.map(i as f64 / 1000.0);
            assert!((0.0..=1.0).contains(&x));
        }
        assert_eq!(s.map(0.0), 0.0);
    }
}
