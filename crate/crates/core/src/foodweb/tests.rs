use super::*;
use crate::latent::{moments, GridField, MaskKind};
use crate::heat::normalized_l2_distance;

fn guild(label: &str, g: Vec<f64>, r: Vec<f64>, kappa: f64, mass_g: f64, mass_r: f64) -> GuildSpec {
    let d = g.len();
    GuildSpec {
        label: label.into(),
        green: TruncGaussianSpec {
            mean: g,
            kappa: vec![kappa; d],
            mass: mass_g,
        },
        red: TruncGaussianSpec {
            mean: r,
            kappa: vec![kappa; d],
            mass: mass_r,
        },
        w_source: 1.0,
        w_target: 1.0,
    }
}

fn grid(n: usize) -> QuadratureSpec {
    QuadratureSpec::Grid { points_per_axis: n }
}

#[test]
fn two_guild_caption_example() {
    // Equal abundances at Λ = 100 and every affinity 0.2 → 500 per entry.
    let s = 0.2f64.sqrt();
    let gs = vec![
        guild("a", vec![s, 0.0], vec![s, 0.0], 1e6, 5.0, 10.0),
        guild("b", vec![s, 0.0], vec![s, 0.0], 1e6, 10.0, 5.0),
    ];
    let m = expected_guild_edges(&gs, 100.0, grid(512)).unwrap();
    for v in m.expected.iter() {
        assert!((v - 500.0).abs() < 0.5, "{v}");
    }
    assert!(expected_guild_edges(&gs, 90.0, grid(64)).is_err());
}

#[test]
fn orthogonal_guilds_do_not_interact() {
    let gs = vec![
        // Tight blobs: the half-normal spread off each axis is about 0.003.
        guild("a", vec![0.9, 0.0], vec![0.9, 0.0], 1e5, 2.0, 2.0),
        guild("b", vec![0.0, 0.9], vec![0.0, 0.9], 1e5, 3.0, 1.0),
    ];
    let m = expected_guild_edges(&gs, 7.0, grid(256)).unwrap();
    assert!(m.affinity[(0, 1)] < 0.02 && m.affinity[(1, 0)] < 0.02, "{}", m.affinity);
    assert!(m.affinity[(0, 0)] > 0.7);
}

#[test]
fn guild_edges_sum_to_mixture_expectation() {
    let gs = vec![
        guild("a", vec![0.7, 0.2], vec![0.1, 0.6], 500.0, 2.0, 3.0),
        guild("b", vec![0.2, 0.5], vec![0.6, 0.3], 500.0, 4.0, 1.0),
        guild("c", vec![0.4, 0.4], vec![0.5, 0.5], 800.0, 1.0, 2.0),
    ];
    let lambda = 12.0;
    let q = grid(256);
    let m = expected_guild_edges(&gs, lambda, q).unwrap();
    let s = moments(&guild_mixture(&gs).unwrap(), q).unwrap();
    let want = lambda * lambda * s.affinity();
    assert!((m.expected.sum() / want - 1.0).abs() < 1e-6, "{} {want}", m.expected.sum());
}

#[test]
fn realizable_target_is_fitted() {
    let g = DMatrix::from_row_slice(3, 2, &[0.9, 0.1, 0.2, 0.8, 0.5, 0.5]);
    let r = DMatrix::from_row_slice(3, 2, &[0.1, 0.9, 0.7, 0.3, 0.4, 0.6]);
    let target = &g * r.transpose();
    let fit = fit_guild_centroids(&target, 2, &FitOptions::default()).unwrap();
    assert!(fit.rmse < 1e-4, "{}", fit.rmse);
    assert!(fit.converged);
    let direct = ((&target - fit.affinity()).norm_squared() / 9.0).sqrt();
    assert_eq!(direct, fit.rmse);
}

#[test]
fn identity_and_zero_targets() {
    for d in [2, 3, 4] {
        let fit = fit_guild_centroids(&DMatrix::identity(d, d), d, &FitOptions::default()).unwrap();
        assert!(fit.rmse < 1e-3, "d={d}: {}", fit.rmse);
    }
    let fit = fit_guild_centroids(&DMatrix::zeros(3, 3), 2, &FitOptions::default()).unwrap();
    assert!(fit.rmse < 1e-6, "{}", fit.rmse);
    assert!(fit.affinity().amax() < 1e-6);
}

#[test]
fn fit_is_deterministic_and_validated() {
    let t = DMatrix::from_row_slice(2, 2, &[0.1, 0.8, 0.3, 0.0]);
    let a = fit_guild_centroids(&t, 2, &FitOptions::default()).unwrap();
    let b = fit_guild_centroids(&t, 2, &FitOptions::default()).unwrap();
    assert_eq!(a, b);
    for row in a.green.iter().chain(&a.red) {
        assert!(row.iter().all(|&v| v >= 0.0));
        assert!(row.iter().map(|v| v * v).sum::<f64>() <= 1.0 + 1e-12);
    }
    assert!(fit_guild_centroids(&DMatrix::from_element(2, 2, 1.5), 2, &FitOptions::default()).is_err());
}

#[test]
fn single_guild_mixture_matches_product() {
    let gs = vec![guild("solo", vec![0.5, 0.3], vec![0.2, 0.6], 50.0, 3.0, 2.0)];
    let fit = CentroidFit {
        green: vec![vec![0.5, 0.3]],
        red: vec![vec![0.2, 0.6]],
        rmse: 0.0,
        converged: true,
        restart: 0,
    };
    let mix = build_mixture(&gs, &fit, None).unwrap();
    let prod = IntensityModel::product(
        MarginalIntensity::trunc_gaussian(gs[0].green.clone()).unwrap(),
        MarginalIntensity::trunc_gaussian(gs[0].red.clone()).unwrap(),
    )
    .unwrap();
    let a = moments(&mix, grid(128)).unwrap();
    let b = moments(&prod, grid(128)).unwrap();
    assert!((a.lambda - b.lambda).abs() < 1e-9);
    assert!((a.affinity() - b.affinity()).abs() < 1e-9);
    assert!((&a.sigma_g - &b.sigma_g).amax() < 1e-9);
}

#[test]
fn asymmetric_weights() {
    let mut gs = vec![
        guild("P", vec![0.8, 0.1], vec![0.1, 0.8], 200.0, 4.0, 5.0),
        guild("H", vec![0.3, 0.6], vec![0.6, 0.3], 200.0, 2.0, 3.0),
    ];
    let same = asymmetric_edge_intensity(&gs).unwrap();
    assert_eq!(same.source, guild_mixture(&gs).unwrap());
    assert_eq!(same.target, same.source);
    gs[0].w_source = 0.0;
    gs[1].w_target = 2.5;
    let a = asymmetric_edge_intensity(&gs).unwrap();
    assert!((a.source.total_intensity() - 6.0).abs() < 1e-12);
    assert!((a.target.total_intensity() - (20.0 + 2.5 * 6.0)).abs() < 1e-12);
    assert!((a.total_edge_intensity() / (a.lambda / 2.0) - 1.0).abs() < 1e-9);
    gs[1].w_source = 0.0;
    assert!(asymmetric_edge_intensity(&gs).is_err());
}

#[test]
fn kernel_absorption() {
    let ps = vec![
        Position::from_coords(vec![0.3, 0.4], vec![0.6, 0.0]).unwrap(),
        Position::from_coords(vec![0.8, 0.0], vec![0.1, 0.2]).unwrap(),
    ];
    match absorb_coordinate_weights(&|_| 1.0, &|_| 1.0, &ps).unwrap() {
        Absorption::Admissible(out) => assert_eq!(out, ps),
        other => panic!("{other:?}"),
    }
    match absorb_coordinate_weights(&|_| 0.5, &|_| 1.0, &ps).unwrap() {
        Absorption::Admissible(out) => {
            for (a, b) in out.iter().zip(&ps) {
                let k = dot(a.g.as_slice(), b.r.as_slice());
                assert_eq!(k, 0.5 * dot(b.g.as_slice(), b.r.as_slice()));
            }
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(
        absorb_coordinate_weights(&|_| 2.5, &|_| 1.0, &ps).unwrap(),
        Absorption::Rejected(vec![0, 1])
    );
}

#[test]
fn mixture_joint_does_not_factor() {
    // Two blobs on the diagonal of Ω for d = 1.
    let gs = vec![
        guild("lo", vec![0.25], vec![0.25], 200.0, 1.0, 1.0),
        guild("hi", vec![0.75], vec![0.75], 200.0, 1.0, 1.0),
    ];
    let mix = guild_mixture(&gs).unwrap();
    let n = 128;
    let joint = GridField::from_fn(2, n, MaskKind::Full, |x| mix.density(&x[..1], &x[1..])).unwrap();
    let h = 1.0 / n as f64;
    let mut pg = vec![0.0; n];
    let mut pr = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            let v = joint.values()[i * n + j] * h;
            pg[i] += v;
            pr[j] += v;
        }
    }
    let prod = GridField::from_fn(2, n, MaskKind::Full, |x| {
        let (i, j) = ((x[0] * n as f64) as usize, (x[1] * n as f64) as usize);
        pg[i] * pr[j]
    })
    .unwrap();
    let dist = normalized_l2_distance(&joint, &prod).unwrap();
    assert!(dist > 0.1, "{dist}");
}
