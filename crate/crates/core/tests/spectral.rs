//! Desire spectrum of the shipped mixture against frozen independent values.

use std::path::Path;

use idpg_core::latent::{load_model, moments, QuadratureSpec};
use idpg_core::spectral::desire_spectrum;
use serde::Deserialize;

#[derive(Deserialize)]
struct Reference {
    samples_per_marginal: usize,
    sigma_g: Vec<Vec<f64>>,
    sigma_r: Vec<Vec<f64>>,
    singular_values: Vec<f64>,
    singular_values_se: Vec<f64>,
}

fn reference() -> Reference {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/spectral_reference.json"))
        .unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn mixture_desire_spectrum_matches_reference() {
    let reference = reference();
    let model = load_model(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/models/spectral_mixture.json"))
        .unwrap();
    let n = 1_000_000;
    let s = moments(&model, QuadratureSpec::MonteCarlo { samples: n, seed: Some(17) }).unwrap();

    // Standard errors scale as n^{-1/2}; combine ours with the reference's.
    let inflate = (1.0 + reference.samples_per_marginal as f64 / n as f64).sqrt();
    let sv = desire_spectrum(&s).unwrap().singular_values;
    assert_eq!(sv.len(), 4);
    for (i, (got, want)) in sv.iter().zip(&reference.singular_values).enumerate() {
        let se = reference.singular_values_se[i] * inflate;
        assert!((got - want).abs() < 4.0 * se, "σ{}: {got} vs {want} ± {se}", i + 1);
    }

    for (m, r) in [(&s.sigma_g, &reference.sigma_g), (&s.sigma_r, &reference.sigma_r)] {
        for i in 0..4 {
            for j in 0..4 {
                assert!((m[(i, j)] - r[i][j]).abs() < 2e-3, "({i},{j}): {} vs {}", m[(i, j)], r[i][j]);
            }
        }
    }
}
