use super::*;
use crate::latent::{MarginalIntensity, TruncGaussianSpec};

fn gauss(mean: Vec<f64>, kappa: f64, mass: f64) -> MarginalIntensity {
    let d = mean.len();
    MarginalIntensity::trunc_gaussian(TruncGaussianSpec {
        mean,
        kappa: vec![kappa; d],
        mass,
    })
    .unwrap()
}

fn state(green: MarginalIntensity, red: MarginalIntensity, n: usize, bc: BoundaryCondition, regime: RegimeSpec) -> PdeState {
    let m = IntensityModel::product(green, red).unwrap();
    PdeState::from_model(&m, n, bc, regime).unwrap()
}

fn mass(f: &GridField) -> f64 {
    f.total()
}

#[test]
fn uniform_field_is_stationary_under_reflecting_diffusion() {
    for d in [1, 2] {
        let s = state(
            MarginalIntensity::uniform(d, 2.0).unwrap(),
            MarginalIntensity::uniform(d, 3.0).unwrap(),
            64,
            BoundaryCondition::Reflecting,
            RegimeSpec::Diffusion { nu: 0.01 },
        );
        let (dt, _) = s.stability_bound().unwrap();
        let next = pde_step(&s, dt).unwrap();
        let worst = next
            .green
            .values()
            .iter()
            .zip(s.green.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(worst < 1e-12, "d={d}: {worst}");
    }
}

#[test]
fn reflecting_advection_conserves_mass() {
    let s = state(
        gauss(vec![0.3, 0.3], 60.0, 2.0),
        gauss(vec![0.5, 0.2], 60.0, 1.5),
        64,
        BoundaryCondition::Reflecting,
        RegimeSpec::Advection { velocity: vec![0.4, -0.2] },
    );
    let (dt, _) = s.stability_bound().unwrap();
    let mut cur = s.clone();
    for _ in 0..50 {
        let next = pde_step(&cur, dt).unwrap();
        assert!((mass(&next.green) / mass(&cur.green) - 1.0).abs() < 1e-12);
        assert!((mass(&next.red) / mass(&cur.red) - 1.0).abs() < 1e-12);
        cur = next;
    }
    assert_eq!(cur.clamped_mass, 0.0);
}

#[test]
fn absorbing_diffusion_loses_mass() {
    let s = state(
        gauss(vec![0.2], 50.0, 1.0),
        gauss(vec![0.7], 50.0, 1.0),
        128,
        BoundaryCondition::Absorbing,
        RegimeSpec::Diffusion { nu: 0.01 },
    );
    let (dt, _) = s.stability_bound().unwrap();
    let mut cur = s;
    for _ in 0..20 {
        let next = pde_step(&cur, dt).unwrap();
        assert!(mass(&next.green) < mass(&cur.green));
        assert!(mass(&next.red) < mass(&cur.red));
        cur = next;
    }
}

#[test]
fn unstable_step_is_rejected() {
    let s = state(
        gauss(vec![0.5], 50.0, 1.0),
        gauss(vec![0.5], 50.0, 1.0),
        128,
        BoundaryCondition::Reflecting,
        RegimeSpec::Diffusion { nu: 0.01 },
    );
    let (b, _) = s.stability_bound().unwrap();
    match pde_step(&s, 2.0 * b) {
        Err(IdpgError::Unstable { bound, bound_name, .. }) => {
            assert_eq!(bound, b);
            assert!(bound_name.contains("diffusion"));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn diffusion_check_examples() {
    assert!((gaussian_diffusion_check(100.0, 0.01, 1.0) - 100.0 / 3.0).abs() < 1e-12);
    assert_eq!(gaussian_diffusion_check(100.0, 0.01, 0.0), 100.0);
    assert_eq!(gaussian_diffusion_check(100.0, 0.0, 7.0), 100.0);
}

#[test]
fn centroid_examples() {
    let sym = GridField::from_fn(1, 64, MaskKind::Ball, |x| 1.0 + (x[0] - 0.5).powi(2)).unwrap();
    assert!((centroid(&sym).unwrap()[0] - 0.5).abs() < 1e-12);
    let mut spike = GridField::zeros(2, 16, MaskKind::Ball).unwrap();
    let i = spike.ravel(&[3, 5]);
    let mut v = spike.values().to_vec();
    v[i] = 4.0;
    spike.set_values(v).unwrap();
    let c = centroid(&spike).unwrap();
    let want = spike.center(i);
    assert!((c[0] - want[0]).abs() < 1e-15 && (c[1] - want[1]).abs() < 1e-15);
    let g = tabulate_marginal(&gauss(vec![0.3], 500.0, 1.0), 128).unwrap();
    assert!((centroid(&g).unwrap()[0] - 0.3).abs() < 0.005);
    assert!(centroid(&GridField::zeros(1, 8, MaskKind::Ball).unwrap()).is_err());
}

#[test]
fn snapshot_ratio_is_half_lambda() {
    let s = state(
        gauss(vec![0.4, 0.3], 20.0, 10.0),
        gauss(vec![0.5, 0.5], 20.0, 10.0),
        32,
        BoundaryCondition::Absorbing,
        RegimeSpec::Advection { velocity: vec![0.5, 0.5] },
    );
    let (_, traj) = evolve(
        &s,
        &EvolveOptions {
            t_end: 0.5,
            dt: None,
            snapshot_every: 5,
            keep_fields: true,
        },
    )
    .unwrap();
    assert_eq!(traj.fields.len(), traj.snapshots.len());
    assert!(traj.snapshots.windows(2).all(|w| w[1].time > w[0].time));
    assert_eq!(traj.snapshots.last().unwrap().time, 0.5);
    for snap in &traj.snapshots {
        assert!((snap.ratio / (snap.lambda / 2.0) - 1.0).abs() < 1e-14);
    }
    let first = &traj.snapshots[0];
    let last = traj.snapshots.last().unwrap();
    assert!(last.lambda < first.lambda);
}

#[test]
fn pde_rejects_bad_inputs() {
    let m = IntensityModel::product(
        MarginalIntensity::uniform(3, 1.0).unwrap(),
        MarginalIntensity::uniform(3, 1.0).unwrap(),
    )
    .unwrap();
    assert!(PdeState::from_model(&m, 16, BoundaryCondition::Reflecting, RegimeSpec::Static).is_err());
    let m1 = IntensityModel::product(
        MarginalIntensity::uniform(1, 1.0).unwrap(),
        MarginalIntensity::uniform(1, 1.0).unwrap(),
    )
    .unwrap();
    let pursuit = RegimeSpec::PursuitEvasion {
        alpha: 1.0,
        beta: 1.0,
        gamma: 0.0,
        x0: vec![0.5],
    };
    assert!(PdeState::from_model(&m1, 16, BoundaryCondition::Reflecting, pursuit).is_err());
    let robin = BoundaryCondition::Robin { alpha: 0.0, beta: 0.0 };
    assert!(PdeState::from_model(&m1, 16, robin, RegimeSpec::Static).is_err());
}
