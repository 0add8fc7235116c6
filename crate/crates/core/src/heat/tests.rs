use super::*;
use crate::expectations::{expected_edges, EdgeRule};
use crate::latent::{moments, region_moments, MixtureComponent};

fn uniform6() -> IntensityModel {
    IntensityModel::product(
        MarginalIntensity::uniform(1, 2.0).unwrap(),
        MarginalIntensity::uniform(1, 3.0).unwrap(),
    )
    .unwrap()
}

fn gauss(mean: Vec<f64>, kappa: f64, mass: f64) -> MarginalIntensity {
    let d = mean.len();
    MarginalIntensity::trunc_gaussian(TruncGaussianSpec {
        mean,
        kappa: vec![kappa; d],
        mass,
    })
    .unwrap()
}

fn grid(n: usize) -> QuadratureSpec {
    QuadratureSpec::Grid { points_per_axis: n }
}

fn bx(lower: &[f64], upper: &[f64]) -> BoxRegion {
    BoxRegion::new(lower.to_vec(), upper.to_vec()).unwrap()
}

#[test]
fn density_examples() {
    let m = uniform6();
    let s = Position::from_coords(vec![1.0], vec![0.5]).unwrap();
    let t = Position::from_coords(vec![0.5], vec![1.0]).unwrap();
    assert!((raw_heat_density(&m, &s, &t).unwrap() - 36.0).abs() < 1e-12);
    let o = Position::from_coords(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
    let m2 = IntensityModel::product(
        MarginalIntensity::uniform(2, 1.0).unwrap(),
        MarginalIntensity::uniform(2, 1.0).unwrap(),
    )
    .unwrap();
    assert_eq!(raw_heat_density(&m2, &o, &o).unwrap(), 0.0);
}

#[test]
fn total_heat_matches_expected_edges() {
    let m = uniform6();
    let h = raw_heat_map(&m, &BoxRegion::unit(2), &BoxRegion::unit(2), grid(256)).unwrap();
    assert!((h - 9.0).abs() < 1e-9, "{h}");
    let g = IntensityModel::product(gauss(vec![0.6, 0.4], 15.0, 6.0), gauss(vec![0.5, 0.5], 15.0, 5.0))
        .unwrap();
    let q = grid(128);
    let s = moments(&g, q).unwrap();
    let h = raw_heat_map(&g, &BoxRegion::unit(4), &BoxRegion::unit(4), q).unwrap();
    let e = expected_edges(&s, EdgeRule::PerennialDistinct).unwrap();
    assert!((h / e - 1.0).abs() < 1e-12);
}

#[test]
fn additivity_and_empty_boxes() {
    let m = IntensityModel::product(gauss(vec![0.3], 40.0, 2.0), gauss(vec![0.7], 40.0, 3.0)).unwrap();
    let q = grid(100);
    let b = bx(&[0.1, 0.2], &[0.9, 0.8]);
    let a1 = bx(&[0.0, 0.0], &[0.37, 1.0]);
    let a2 = bx(&[0.37, 0.0], &[1.0, 1.0]);
    let whole = raw_heat_map(&m, &BoxRegion::unit(2), &b, q).unwrap();
    let parts = raw_heat_map(&m, &a1, &b, q).unwrap() + raw_heat_map(&m, &a2, &b, q).unwrap();
    assert!((whole - parts).abs() < 1e-12);
    let empty = bx(&[0.5, 0.5], &[0.5, 0.9]);
    assert_eq!(raw_heat_map(&m, &empty, &b, q).unwrap(), 0.0);
}

#[test]
fn asymmetry_witness() {
    let m = IntensityModel::product(gauss(vec![0.8], 40.0, 1.0), gauss(vec![0.2], 40.0, 1.0)).unwrap();
    let q = grid(128);
    let a = bx(&[0.5, 0.0], &[1.0, 0.5]);
    let b = bx(&[0.0, 0.5], &[0.5, 1.0]);
    let ab = raw_heat_map(&m, &a, &b, q).unwrap();
    let ba = raw_heat_map(&m, &b, &a, q).unwrap();
    assert!((ab - ba).abs() > 1e-3 * ab.max(ba), "{ab} {ba}");
}

#[test]
fn bound_heat_totals() {
    let m = uniform6();
    let q = grid(256);
    let h = bound_heat_grid(&m, 256).unwrap();
    assert!((h.total() - 1.5).abs() < 1e-9);
    let s = moments(&m, q).unwrap();
    let full_g = region_moments(&crate::latent::MarginalIntensity::uniform(1, 2.0).unwrap(), &BoxRegion::unit(1), q).unwrap();
    let full_r = region_moments(&crate::latent::MarginalIntensity::uniform(1, 3.0).unwrap(), &BoxRegion::unit(1), q).unwrap();
    let bite = bite_heat(&s, BiteCombination::GtoR, Some(&full_g), Some(&full_r)).unwrap();
    assert!((bite - s.lambda * h.total()).abs() < 1e-9);
    assert!((bite - 9.0).abs() < 1e-9);
    let rg = bite_heat(&s, BiteCombination::RtoG, Some(&full_r), Some(&full_g)).unwrap();
    assert!((rg - 9.0).abs() < 1e-9);
    assert!(h.values().iter().all(|v| *v >= 0.0));
}

#[test]
fn bite_identity_gaussian_d2() {
    let green = gauss(vec![0.6, 0.4], 15.0, 6.0);
    let red = gauss(vec![0.5, 0.5], 15.0, 5.0);
    let m = IntensityModel::product(green.clone(), red.clone()).unwrap();
    let n = 24;
    let q = grid(n);
    let s = moments(&m, q).unwrap();
    let h = bound_heat_grid(&m, n).unwrap();
    let g = region_moments(&green, &BoxRegion::unit(2), q).unwrap();
    let r = region_moments(&red, &BoxRegion::unit(2), q).unwrap();
    let bite = bite_heat(&s, BiteCombination::GtoR, Some(&g), Some(&r)).unwrap();
    assert!((bite / (s.lambda * h.total()) - 1.0).abs() < 1e-9);
}

#[test]
fn bite_errors_and_zeros() {
    let m = uniform6();
    let q = grid(64);
    let s = moments(&m, q).unwrap();
    assert!(matches!(
        bite_heat(&s, BiteCombination::GtoG, None, None),
        Err(IdpgError::MissingRegion(_))
    ));
    let z = RegionMoments::zero(1);
    let full = RegionMoments::from_full(&crate::latent::marginal_moments(&MarginalIntensity::uniform(1, 2.0).unwrap(), q).unwrap());
    for c in [BiteCombination::GtoR, BiteCombination::GtoG, BiteCombination::RtoR, BiteCombination::RtoG] {
        assert_eq!(bite_heat(&s, c, Some(&z), Some(&full)).unwrap(), 0.0);
        assert_eq!(bite_heat(&s, c, Some(&full), Some(&z)).unwrap(), 0.0);
    }
}

#[test]
fn bite_table_matches_raw_heat() {
    // Each bite combination equals the raw heat over the matching cylinders.
    let green = gauss(vec![0.3], 30.0, 2.0);
    let red = gauss(vec![0.6], 30.0, 1.5);
    let m = IntensityModel::product(green.clone(), red.clone()).unwrap();
    let q = grid(200);
    let s = moments(&m, q).unwrap();
    let a = bx(&[0.1], &[0.4]);
    let a2 = bx(&[0.35], &[0.9]);
    let b = bx(&[0.5], &[0.8]);
    let b2 = bx(&[0.0], &[0.55]);
    let gb = |x: &BoxRegion| BoxRegion::omega(x, &BoxRegion::unit(1));
    let rb = |x: &BoxRegion| BoxRegion::omega(&BoxRegion::unit(1), x);
    let rg = |x| region_moments(&green, x, q).unwrap();
    let rr = |x| region_moments(&red, x, q).unwrap();
    let cases = [
        (BiteCombination::GtoR, rg(&a), rr(&b), gb(&a), rb(&b)),
        (BiteCombination::GtoG, rg(&a), rg(&a2), gb(&a), gb(&a2)),
        (BiteCombination::RtoR, rr(&b), rr(&b2), rb(&b), rb(&b2)),
        (BiteCombination::RtoG, rr(&b), rg(&a), rb(&b), gb(&a)),
    ];
    for (c, sm, tm, sb, tb) in cases {
        let bite = bite_heat(&s, c, Some(&sm), Some(&tm)).unwrap();
        let raw = raw_heat_map(&m, &sb, &tb, q).unwrap();
        assert!((bite - raw).abs() < 1e-12 * raw.max(1.0), "{c:?}: {bite} vs {raw}");
    }
}

fn two_blob() -> IntensityModel {
    let blob = |g: f64, r: f64| MixtureComponent {
        label: format!("{g}"),
        green: gauss(vec![g], 100.0, 5.0),
        red: gauss(vec![r], 100.0, 5.0),
    };
    IntensityModel::mixture(vec![blob(0.3, 0.7), blob(0.7, 0.3)]).unwrap()
}

#[test]
fn slices_of_product_are_proportional() {
    let m = IntensityModel::product(gauss(vec![0.4], 20.0, 2.0), gauss(vec![0.6], 20.0, 2.0)).unwrap();
    let a = raw_heat_slice(&m, 0.3, 0.7, 64).unwrap();
    let b = raw_heat_slice(&m, 0.7, 0.3, 64).unwrap();
    assert!(normalized_l2_distance(&a, &b).unwrap() < 1e-9);
    let tab = IntensityModel::tabulated(GridField::from_fn(2, 64, MaskKind::Full, |x| m.density(&x[..1], &x[1..])).unwrap()).unwrap();
    let a = raw_heat_slice(&tab, 0.3, 0.7, 64).unwrap();
    let b = raw_heat_slice(&tab, 0.7, 0.3, 64).unwrap();
    assert!(normalized_l2_distance(&a, &b).unwrap() < 1e-9);
}

#[test]
fn two_blob_slices_differ() {
    let m = two_blob();
    let a = raw_heat_slice(&m, 0.3, 0.5, 64).unwrap();
    let b = raw_heat_slice(&m, 0.7, 0.5, 64).unwrap();
    assert!(normalized_l2_distance(&a, &b).unwrap() > 0.1);
    assert!(a.values().iter().all(|v| *v >= 0.0));
    assert!(raw_heat_slice(&m, 1.5, 0.5, 8).is_err());
}

#[test]
fn recovery_round_trip() {
    let m = uniform6();
    let s = Position::from_coords(vec![0.5], vec![0.5]).unwrap();
    assert_eq!(recover_intensity_at(9.0, &s), Recovered::Value(6.0));
    let o = Position::from_coords(vec![1.0, 0.0], vec![0.0, 1.0]).unwrap();
    assert_eq!(recover_intensity_at(0.0, &o), Recovered::Unrecoverable);
    let g = IntensityModel::product(gauss(vec![0.4, 0.5], 20.0, 2.0), gauss(vec![0.6, 0.3], 10.0, 3.0))
        .unwrap();
    let est = recover_intensity_from_heat(|p: &Position| raw_heat_density(&g, p, p).unwrap());
    let n = 12;
    let mut worst: f64 = 0.0;
    for i in 1..n {
        for j in 1..n {
            let (a, b) = (i as f64 / n as f64 * 0.7, j as f64 / n as f64 * 0.7);
            let p = Position::from_coords(vec![a, b], vec![b, a]).unwrap();
            if p.self_affinity() <= 0.01 {
                continue;
            }
            let truth = g.evaluate(&p).unwrap();
            if let Recovered::Value(v) = est(&p) {
                worst = worst.max((v - truth).abs() / truth);
            }
        }
    }
    assert!(worst < 1e-6, "{worst}");
    let _ = m;
}

#[test]
fn dirac_limit_recovers_dot_products() {
    let p1 = Position::from_coords(vec![0.8], vec![0.9]).unwrap();
    let p2 = Position::from_coords(vec![0.3], vec![0.5]).unwrap();
    let h = dirac_limit_heat(&[p1, p2], 1e-3, 64).unwrap();
    let exact = [[0.72, 0.4], [0.27, 0.15]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((h[(i, j)] / exact[i][j] - 1.0).abs() < 0.01, "{i}{j}: {}", h[(i, j)]);
        }
    }
}

#[test]
fn dirac_limit_converges_at_boundary() {
    // A coordinate on the boundary shifts the truncated mean by O(ε).
    let p = Position::from_coords(vec![1.0], vec![0.6]).unwrap();
    let q = Position::from_coords(vec![0.2], vec![0.3]).unwrap();
    let err = |eps: f64| {
        let h = dirac_limit_heat(&[p.clone(), q.clone()], eps, 64).unwrap();
        (h[(0, 0)] - 0.6).abs()
    };
    let e = [err(1e-2), err(5e-3), err(1e-3)];
    assert!(e[0] > e[1] && e[1] > e[2], "{e:?}");
}

#[test]
fn dirac_rejects_close_positions() {
    let p = Position::from_coords(vec![0.5], vec![0.5]).unwrap();
    let q = Position::from_coords(vec![0.502], vec![0.5]).unwrap();
    assert!(matches!(
        dirac_limit_heat(&[p, q], 1e-3, 16),
        Err(IdpgError::OverlappingBoxes(0, 1))
    ));
}

#[test]
fn dirac_in_two_dimensions_with_ball_boundary() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let p1 = Position::from_coords(vec![s, s], vec![0.6, 0.8]).unwrap();
    let p2 = Position::from_coords(vec![0.1, 0.2], vec![0.3, 0.1]).unwrap();
    let h = dirac_limit_heat(&[p1.clone(), p2.clone()], 1e-3, 48).unwrap();
    let k = |a: &Position, b: &Position| dot(a.g.as_slice(), b.r.as_slice());
    assert!((h[(0, 0)] / k(&p1, &p1) - 1.0).abs() < 0.01, "{} {}", h[(0, 0)], k(&p1, &p1));
    assert!((h[(1, 0)] / k(&p2, &p1) - 1.0).abs() < 0.01);
}

