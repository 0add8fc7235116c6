use super::*;
use crate::latent::{MarginalIntensity, MixtureComponent, TruncGaussianSpec};
use crate::rng::SeededRng;

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

#[test]
fn poisson_node_counts() {
    let m = IntensityModel::product(
        MarginalIntensity::uniform(2, 5.0).unwrap(),
        MarginalIntensity::uniform(2, 10.0).unwrap(),
    )
    .unwrap();
    let mut rng = SeededRng::new(1, 0);
    let reps = 1000;
    let total: usize = (0..reps)
        .map(|_| sample_positions(&m, &mut rng).unwrap().len())
        .sum();
    let mean = total as f64 / reps as f64;
    assert!((47.8..=52.2).contains(&mean), "{mean}");
}

#[test]
fn species_fractions() {
    let m = IntensityModel::mixture(vec![
        MixtureComponent {
            label: "a".into(),
            green: MarginalIntensity::uniform(2, 5.0).unwrap(),
            red: MarginalIntensity::uniform(2, 6.0).unwrap(),
        },
        MixtureComponent {
            label: "b".into(),
            green: MarginalIntensity::uniform(2, 2.0).unwrap(),
            red: MarginalIntensity::uniform(2, 5.0).unwrap(),
        },
    ])
    .unwrap();
    let ps = PositionSampler::new(&m).unwrap();
    let mut rng = SeededRng::new(2, 0);
    let n = 10_000;
    let a = (0..n)
        .filter(|_| ps.draw_node(&mut rng).unwrap().species.as_deref() == Some("a"))
        .count();
    let f = a as f64 / n as f64;
    let sd = (0.75f64 * 0.25 / n as f64).sqrt();
    assert!((f - 0.75).abs() < 3.0 * sd, "{f}");
}

#[test]
fn tight_gaussian_coordinate_spread() {
    let m = IntensityModel::product(gauss(vec![0.9], 500.0, 1.0), gauss(vec![0.5], 500.0, 1.0)).unwrap();
    let ps = PositionSampler::new(&m).unwrap();
    let mut rng = SeededRng::new(3, 0);
    let xs: Vec<f64> = (0..20_000)
        .map(|_| ps.draw(&mut rng).unwrap().0.g.as_slice()[0])
        .collect();
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
    assert!((sd / (1.0 / 500f64.sqrt()) - 1.0).abs() < 0.1, "{sd}");
}

#[test]
fn samplers_are_deterministic() {
    let m = uniform6();
    let a = sample_perennial(&m, &mut SeededRng::new(9, 4), true).unwrap();
    let b = sample_perennial(&m, &mut SeededRng::new(9, 4), true).unwrap();
    assert_eq!(a, b);
    let a = sample_lifetime(&m, 1.0, 1.0, true, &mut SeededRng::new(9, 5)).unwrap();
    let b = sample_lifetime(&m, 1.0, 1.0, true, &mut SeededRng::new(9, 5)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn realized_graphs_satisfy_invariants() {
    let m = IntensityModel::product(gauss(vec![0.6, 0.4], 15.0, 6.0), gauss(vec![0.5, 0.5], 15.0, 5.0))
        .unwrap();
    let mut rng = SeededRng::new(5, 0);
    for _ in 0..20 {
        sample_perennial(&m, &mut rng, false).unwrap().validate().unwrap();
        sample_perennial(&m, &mut rng, true).unwrap().validate().unwrap();
        let e = sample_ephemeral(&m, &mut rng).unwrap();
        e.validate().unwrap();
        assert_eq!(e.node_count(), 2 * e.pairing.as_ref().unwrap().len());
        sample_lifetime(&m, 0.3, 1.0, true, &mut rng).unwrap().validate().unwrap();
        sample_asymmetric_ephemeral(&m, &m, 30.0, &mut rng)
            .unwrap()
            .validate()
            .unwrap();
    }
}

#[test]
fn ephemeral_components_have_at_most_two_nodes() {
    let m = uniform6();
    let mut rng = SeededRng::new(6, 0);
    for _ in 0..200 {
        let g = sample_ephemeral(&m, &mut rng).unwrap();
        for &(s, t) in &g.edges {
            assert!(s == t || s / 2 == t / 2);
        }
    }
}

#[test]
fn observed_subgraph_examples() {
    let empty = SampledGraph {
        rule: RealizationRule::Perennial,
        include_self_loops: true,
        nodes: vec![],
        edges: vec![],
        pairing: None,
    };
    assert!(observed_subgraph(&empty).is_empty());
    let node = |x: f64| Node::new(Position::from_coords(vec![x], vec![x]).unwrap());
    let g = SampledGraph {
        rule: RealizationRule::Perennial,
        include_self_loops: true,
        nodes: vec![node(0.1), node(0.9)],
        edges: vec![(1, 1)],
        pairing: None,
    };
    let o = observed_subgraph(&g);
    assert_eq!(o.node_count(), 1);
    assert_eq!(o.edges, vec![(0, 0)]);
    assert_eq!(o.nodes[0], g.nodes[1]);
}

#[test]
fn lifetime_extremes() {
    let m = IntensityModel::product(
        MarginalIntensity::uniform(1, 20.0).unwrap(),
        MarginalIntensity::uniform(1, 20.0).unwrap(),
    )
    .unwrap();
    let mut rng = SeededRng::new(8, 0);
    let (mut over, mut pairs) = (0u64, 0u64);
    let mut nodes = sample_positions(&m, &mut rng).unwrap();
    for eta in [1e3, 1e-3] {
        over = 0;
        pairs = 0;
        for _ in 0..20 {
            assign_lifetimes(&mut nodes, eta, 1.0, &mut rng).unwrap();
            for i in 0..nodes.len() {
                for j in 0..i {
                    pairs += 1;
                    if intervals_overlap(nodes[i].alive(1.0).unwrap(), nodes[j].alive(1.0).unwrap()) {
                        over += 1;
                    }
                }
            }
        }
        let f = over as f64 / pairs as f64;
        if eta > 1.0 {
            assert!(f > 0.999, "{f}");
        } else {
            assert!(f < 0.002, "{f}");
        }
    }
    assert!(pairs > 0 && over <= pairs);
}

#[test]
fn graph_json_and_edge_list_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = IntensityModel::mixture(vec![MixtureComponent {
        label: "p".into(),
        green: MarginalIntensity::uniform(2, 3.0).unwrap(),
        red: MarginalIntensity::uniform(2, 3.0).unwrap(),
    }])
    .unwrap();
    let g = sample_lifetime(&m, 0.5, 2.0, true, &mut SeededRng::new(4, 4)).unwrap();
    let p = dir.path().join("g.json");
    write_graph_json(&g, &p).unwrap();
    assert_eq!(read_graph_json(&p).unwrap(), g);
    let e = dir.path().join("g.txt");
    write_edge_list(&g, &e).unwrap();
    assert_eq!(read_edge_list(&e).unwrap(), g.edges);
}

#[test]
fn zero_weight_source_never_appears() {
    let producer = MixtureComponent {
        label: "producer".into(),
        green: MarginalIntensity::uniform(1, 1.0).unwrap(),
        red: MarginalIntensity::uniform(1, 1.0).unwrap(),
    };
    let grazer = MixtureComponent {
        label: "grazer".into(),
        green: MarginalIntensity::uniform(1, 1.0).unwrap(),
        red: MarginalIntensity::uniform(1, 1.0).unwrap(),
    };
    let source = IntensityModel::mixture(vec![grazer.clone()]).unwrap();
    let target = IntensityModel::mixture(vec![producer, grazer]).unwrap();
    let g = sample_asymmetric_ephemeral(&source, &target, 2e5, &mut SeededRng::new(1, 2)).unwrap();
    assert!(g.node_count() > 150_000);
    for &(s, _) in g.pairing.as_ref().unwrap() {
        assert_eq!(g.nodes[s].species.as_deref(), Some("grazer"));
    }
}
