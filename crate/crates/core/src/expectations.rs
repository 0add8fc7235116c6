//! Closed-form expected edge counts and the lifetime-overlap probability.
//!
//! With `x = μ̃_G · μ̃_R` and `N ~ Poisson(Λ)`, the ordered pairs of distinct
//! nodes number `Λ²` in expectation and self-pairs number `Λ`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, IdpgError, Result};
use crate::latent::MomentSummary;

/// Realization rule, for the purpose of counting expected edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EdgeRule {
    PerennialDistinct,
    PerennialWithLoops,
    Ephemeral,
    /// Pairs interact when their lives overlap. Self-pairs always overlap and
    /// are counted when `self_pairs` is set.
    Lifetime {
        eta: f64,
        window: f64,
        #[serde(default = "default_true")]
        self_pairs: bool,
    },
    AsymmetricEphemeral,
}

fn default_true() -> bool {
    true
}

/// Whether self-pairs count as interaction opportunities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairConvention {
    Distinct,
    WithLoops,
}

/// `E[E]` under `rule` for a product-model summary.
///
/// | rule | value |
/// |---|---|
/// | perennial, distinct | `Λ² x` |
/// | perennial, loops | `(Λ² + Λ) x` |
/// | ephemeral | `2Λ x` |
/// | asymmetric ephemeral | `Λ x / 2` |
/// | lifetime | `Λ² p x + Λ x` (the last term only with self-pairs) |
pub fn expected_edges(summary: &MomentSummary, rule: EdgeRule) -> Result<f64> {
    if !summary.product {
        return Err(IdpgError::NotProduct(
            "expected_edges needs a product summary; use foodweb::expected_guild_edges for mixtures"
                .into(),
        ));
    }
    expected_edges_raw(summary.lambda, summary.affinity(), rule)
}

/// [`expected_edges`] from `Λ` and `x = μ̃_G · μ̃_R` directly.
pub fn expected_edges_raw(lambda: f64, x: f64, rule: EdgeRule) -> Result<f64> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be finite and non-negative, got {lambda}"));
    }
    Ok(match rule {
        EdgeRule::PerennialDistinct => lambda * lambda * x,
        EdgeRule::PerennialWithLoops => (lambda * lambda + lambda) * x,
        EdgeRule::Ephemeral => 2.0 * lambda * x,
        EdgeRule::AsymmetricEphemeral => 0.5 * lambda * x,
        EdgeRule::Lifetime {
            eta,
            window,
            self_pairs,
        } => {
            if !(eta > 0.0 && window > 0.0) {
                return invalid(format!("eta and window must be positive, got {eta}, {window}"));
            }
            let p = overlap_probability(eta, window);
            let own = if self_pairs { lambda * x } else { 0.0 };
            lambda * lambda * p * x + own
        }
    })
}

/// Below this `u` the quadratic expansion replaces the series.
pub const SERIES_SWITCH: f64 = 1e-4;

/// Probability that two lives overlap: births uniform on `[0, W]`,
/// exponential lifetimes of mean `η`, `u = W/η`, `p = 2(u − 1 + e^{−u})/u²`.
///
/// For `u < 1` the alternating series `2 Σ_j (−u)^j/(j+2)!` avoids the
/// cancellation in `u − 1 + e^{−u}`; below [`SERIES_SWITCH`] its first three
/// terms suffice.
pub fn overlap_probability(eta: f64, window: f64) -> f64 {
    let u = window / eta;
    if u.is_nan() {
        return f64::NAN;
    }
    if u.is_infinite() {
        return 0.0;
    }
    if u < SERIES_SWITCH {
        1.0 - u / 3.0 + u * u / 12.0
    } else if u < 1.0 {
        let mut term: f64 = 0.5; // (−u)^0 / 2!
        let mut sum: f64 = 0.0;
        let mut j = 0;
        while term.abs() > 1e-18 * sum.abs().max(1e-300) || j < 2 {
            sum += term;
            j += 1;
            term *= -u / (j as f64 + 2.0);
        }
        2.0 * sum
    } else {
        2.0 / (u * u) * (u - 1.0 + (-u).exp())
    }
}

/// Perennial over ephemeral expected edges: `Λ/2` for distinct pairs,
/// `(Λ + 1)/2` with loops.
pub fn edge_ratio(lambda: f64, convention: PairConvention) -> f64 {
    match convention {
        PairConvention::Distinct => lambda / 2.0,
        PairConvention::WithLoops => (lambda + 1.0) / 2.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::{moments, IntensityModel, MarginalIntensity, QuadratureSpec};

    fn summary() -> MomentSummary {
        let m = IntensityModel::product(
            MarginalIntensity::uniform(1, 2.0).unwrap(),
            MarginalIntensity::uniform(1, 3.0).unwrap(),
        )
        .unwrap();
        moments(&m, QuadratureSpec::default_for(1, None)).unwrap()
    }

    #[test]
    fn uniform_oracles() {
        let s = summary();
        let e = |r| expected_edges(&s, r).unwrap();
        assert!((e(EdgeRule::PerennialDistinct) - 9.0).abs() < 1e-12);
        assert!((e(EdgeRule::PerennialWithLoops) - 10.5).abs() < 1e-12);
        assert!((e(EdgeRule::Ephemeral) - 3.0).abs() < 1e-12);
        assert!((e(EdgeRule::AsymmetricEphemeral) - 0.75).abs() < 1e-12);
        let life = e(EdgeRule::Lifetime {
            eta: 1.0,
            window: 1.0,
            self_pairs: true,
        });
        assert!((life - (9.0 * 2.0 * (-1f64).exp() + 1.5)).abs() < 1e-12);
    }

    #[test]
    fn overlap_examples() {
        assert!((overlap_probability(1.0, 1.0) - 2.0 * (-1f64).exp()).abs() < 1e-15);
        assert!((overlap_probability(0.1, 1.0) - 0.180_000_907_998_0).abs() < 1e-12);
        assert!((overlap_probability(1e6, 1.0) - 1.0).abs() < 1e-6);
        assert_eq!(overlap_probability(0.0, 1.0), 0.0);
    }

    #[test]
    fn branches_are_continuous() {
        let below = overlap_probability(1.0 / (SERIES_SWITCH * (1.0 - 1e-12)), 1.0);
        let above = overlap_probability(1.0 / (SERIES_SWITCH * (1.0 + 1e-12)), 1.0);
        assert!((below - above).abs() < 1e-12);
        let a = overlap_probability(1.0 / (1.0 - 1e-12), 1.0);
        let b = overlap_probability(1.0 / (1.0 + 1e-12), 1.0);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn ratio_consistency() {
        let s = summary();
        let r = expected_edges(&s, EdgeRule::PerennialDistinct).unwrap()
            / expected_edges(&s, EdgeRule::Ephemeral).unwrap();
        assert!((r / edge_ratio(s.lambda, PairConvention::Distinct) - 1.0).abs() < 4.0 * f64::EPSILON);
        assert_eq!(edge_ratio(50.0, PairConvention::Distinct), 25.0);
        assert_eq!(edge_ratio(6.0, PairConvention::WithLoops), 3.5);
    }
}
