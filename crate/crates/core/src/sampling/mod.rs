//! Graph realizations of an intensity under the perennial, ephemeral,
//! finite-lifetime and asymmetric-ephemeral rules.

mod io;
mod poisson;

pub use io::{read_edge_list, read_graph_json, write_edge_list, write_graph_json};
pub use poisson::{sample_poisson, INVERSION_LIMIT};

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IdpgError, Result};
use crate::latent::sampler::MarginalSampler;
use crate::latent::{dot, IntensityModel, LatentVector, Position};

/// How individuals are brought together.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RealizationRule {
    Perennial,
    Ephemeral,
    /// Births uniform on `[0, window]`, lifetimes exponential with mean `eta`.
    Lifetime { eta: f64, window: f64 },
    AsymmetricEphemeral,
}

/// One sampled individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(flatten)]
    pub position: Position,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub birth: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<f64>,
}

impl Node {
    pub fn new(position: Position) -> Self {
        Self {
            position,
            species: None,
            birth: None,
            lifetime: None,
        }
    }

    /// Alive interval clipped to the observation window.
    pub fn alive(&self, window: f64) -> Option<(f64, f64)> {
        let b = self.birth?;
        let l = self.lifetime?;
        Some((b, (b + l).min(window)))
    }
}

/// Whether two alive intervals intersect.
pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0.max(b.0) <= a.1.min(b.1)
}

/// A directed graph on sampled individuals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledGraph {
    pub rule: RealizationRule,
    pub include_self_loops: bool,
    pub nodes: Vec<Node>,
    pub edges: Vec<(usize, usize)>,
    #[serde(default, rename = "pairs", skip_serializing_if = "Option::is_none")]
    pub pairing: Option<Vec<(usize, usize)>>,
}

impl SampledGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.nodes.first().map(|n| n.position.dim())
    }

    /// Checks the structural invariants of the graph's rule.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        let mut seen = HashSet::with_capacity(self.edges.len());
        for &(s, t) in &self.edges {
            if s >= n || t >= n {
                return invalid(format!("edge ({s}, {t}) out of range for {n} nodes"));
            }
            if s == t && !self.include_self_loops {
                return invalid(format!("self-loop at {s} but self-loops are disabled"));
            }
            if !seen.insert((s, t)) {
                return invalid(format!("duplicate edge ({s}, {t})"));
            }
        }
        match self.rule {
            RealizationRule::Ephemeral | RealizationRule::AsymmetricEphemeral => {
                let pairs = self
                    .pairing
                    .as_ref()
                    .ok_or_else(|| IdpgError::InvalidParameter("pairing missing".into()))?;
                if n != 2 * pairs.len() {
                    return invalid("node count must be twice the pair count");
                }
                let mut partner = vec![usize::MAX; n];
                for &(i, j) in pairs {
                    if i >= n || j >= n || i == j {
                        return invalid(format!("bad pair ({i}, {j})"));
                    }
                    if partner[i] != usize::MAX || partner[j] != usize::MAX {
                        return invalid(format!("node in more than one pair ({i}, {j})"));
                    }
                    partner[i] = j;
                    partner[j] = i;
                }
                let directed = self.rule == RealizationRule::AsymmetricEphemeral;
                let sources: HashSet<usize> = pairs.iter().map(|p| p.0).collect();
                for &(s, t) in &self.edges {
                    if s != t && partner[s] != t {
                        return invalid(format!("edge ({s}, {t}) crosses pairs"));
                    }
                    if directed && (s == t || !sources.contains(&s)) {
                        return invalid(format!("edge ({s}, {t}) is not source to target"));
                    }
                }
            }
            RealizationRule::Lifetime { window, .. } => {
                for &(s, t) in &self.edges {
                    let (a, b) = match (self.nodes[s].alive(window), self.nodes[t].alive(window)) {
                        (Some(a), Some(b)) => (a, b),
                        _ => return invalid("lifetime graph without birth or lifetime"),
                    };
                    if !intervals_overlap(a, b) {
                        return invalid(format!("edge ({s}, {t}) between non-overlapping lives"));
                    }
                }
            }
            RealizationRule::Perennial => {}
        }
        Ok(())
    }
}

/// Receives edges as they are realised.
pub trait EdgeSink {
    fn push(&mut self, source: usize, target: usize);
}

impl EdgeSink for Vec<(usize, usize)> {
    fn push(&mut self, source: usize, target: usize) {
        Vec::push(self, (source, target));
    }
}

/// Counts edges without storing them.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EdgeCounter(pub u64);

impl EdgeSink for EdgeCounter {
    fn push(&mut self, _: usize, _: usize) {
        self.0 += 1;
    }
}

/// Draws positions from `ρ / Λ`, choosing the species first for mixtures.
#[derive(Clone, Debug)]
pub struct PositionSampler {
    dim: usize,
    lambda: f64,
    kind: SamplerKind,
}

#[derive(Clone, Debug)]
enum SamplerKind {
    Components {
        labels: Option<Vec<String>>,
        cumulative: Vec<f64>,
        parts: Vec<(MarginalSampler, MarginalSampler)>,
    },
    Joint(MarginalSampler),
}

impl PositionSampler {
    pub fn new(model: &IntensityModel) -> Result<Self> {
        let lambda = model.total_intensity();
        if !(lambda > 0.0 && lambda.is_finite()) {
            return invalid(format!("total intensity must be positive, got {lambda}"));
        }
        let kind = match model {
            IntensityModel::Product { green, red } => SamplerKind::Components {
                labels: None,
                cumulative: vec![1.0],
                parts: vec![(MarginalSampler::new(green), MarginalSampler::new(red))],
            },
            IntensityModel::Mixture { components } => {
                let mut acc = 0.0;
                let cumulative = components
                    .iter()
                    .map(|c| {
                        acc += c.weight();
                        acc
                    })
                    .collect();
                SamplerKind::Components {
                    labels: Some(components.iter().map(|c| c.label.clone()).collect()),
                    cumulative,
                    parts: components
                        .iter()
                        .map(|c| (MarginalSampler::new(&c.green), MarginalSampler::new(&c.red)))
                        .collect(),
                }
            }
            IntensityModel::Tabulated { joint } => {
                SamplerKind::Joint(MarginalSampler::from_grid(joint, false))
            }
        };
        Ok(Self {
            dim: model.dim(),
            lambda,
            kind,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// One position and its species index (always 0 outside mixtures).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(Position, usize)> {
        let d = self.dim;
        let mut g = vec![0.0; d];
        let mut r = vec![0.0; d];
        let m = match &self.kind {
            SamplerKind::Components {
                cumulative, parts, ..
            } => {
                let m = if parts.len() == 1 {
                    0
                } else {
                    let u = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                    cumulative.partition_point(|&c| c <= u).min(parts.len() - 1)
                };
                parts[m].0.sample(rng, &mut g)?;
                parts[m].1.sample(rng, &mut r)?;
                m
            }
            SamplerKind::Joint(s) => {
                let mut gr = [0.0; 2];
                s.sample(rng, &mut gr)?;
                g[0] = gr[0];
                r[0] = gr[1];
                0
            }
        };
        Ok((
            Position::new(LatentVector::new(g)?, LatentVector::new(r)?)?,
            m,
        ))
    }

    pub fn label(&self, species: usize) -> Option<&str> {
        match &self.kind {
            SamplerKind::Components {
                labels: Some(l), ..
            } => l.get(species).map(String::as_str),
            _ => None,
        }
    }

    pub fn draw_node<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Node> {
        let (p, m) = self.draw(rng)?;
        let mut node = Node::new(p);
        node.species = self.label(m).map(str::to_owned);
        Ok(node)
    }

    /// `N ~ Poisson(Λ)` nodes.
    pub fn draw_population<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Node>> {
        let n = sample_poisson(self.lambda, rng) as usize;
        (0..n).map(|_| self.draw_node(rng)).collect()
    }
}

/// `N ~ Poisson(Λ)` positions i.i.d. from `ρ / Λ`, species-labelled for
/// mixtures.
pub fn sample_positions<R: Rng + ?Sized>(model: &IntensityModel, rng: &mut R) -> Result<Vec<Node>> {
    PositionSampler::new(model)?.draw_population(rng)
}

/// One Bernoulli trial per ordered pair (and per node when `loops`).
pub fn perennial_edges_into<R: Rng + ?Sized, S: EdgeSink>(
    nodes: &[Node],
    loops: bool,
    rng: &mut R,
    sink: &mut S,
) {
    for (i, a) in nodes.iter().enumerate() {
        let g = a.position.g.as_slice();
        for (j, b) in nodes.iter().enumerate() {
            if i == j && !loops {
                continue;
            }
            if rng.random::<f64>() < dot(g, b.position.r.as_slice()) {
                sink.push(i, j);
            }
        }
    }
}

pub fn sample_perennial<R: Rng + ?Sized>(
    model: &IntensityModel,
    rng: &mut R,
    include_self_loops: bool,
) -> Result<SampledGraph> {
    sample_perennial_with(&PositionSampler::new(model)?, rng, include_self_loops)
}

/// [`sample_perennial`] with a prepared sampler, for repeated draws.
pub fn sample_perennial_with<R: Rng + ?Sized>(
    sampler: &PositionSampler,
    rng: &mut R,
    include_self_loops: bool,
) -> Result<SampledGraph> {
    let nodes = sampler.draw_population(rng)?;
    let mut edges = Vec::new();
    perennial_edges_into(&nodes, include_self_loops, rng, &mut edges);
    Ok(SampledGraph {
        rule: RealizationRule::Perennial,
        include_self_loops,
        nodes,
        edges,
        pairing: None,
    })
}

/// The four within-pair trials `i→j, j→i, i→i, j→j`.
fn ephemeral_pair_trials<R: Rng + ?Sized, S: EdgeSink>(
    nodes: &[Node],
    i: usize,
    j: usize,
    rng: &mut R,
    sink: &mut S,
) {
    let (a, b) = (&nodes[i].position, &nodes[j].position);
    for (s, t, p) in [
        (i, j, dot(a.g.as_slice(), b.r.as_slice())),
        (j, i, dot(b.g.as_slice(), a.r.as_slice())),
        (i, i, a.self_affinity()),
        (j, j, b.self_affinity()),
    ] {
        if rng.random::<f64>() < p {
            sink.push(s, t);
        }
    }
}

/// `M ~ Poisson(Λ/2)` pairs with independent positions.
pub fn sample_ephemeral<R: Rng + ?Sized>(model: &IntensityModel, rng: &mut R) -> Result<SampledGraph> {
    sample_ephemeral_with(&PositionSampler::new(model)?, rng)
}

/// [`sample_ephemeral`] with a prepared sampler.
pub fn sample_ephemeral_with<R: Rng + ?Sized>(ps: &PositionSampler, rng: &mut R) -> Result<SampledGraph> {
    let m = sample_poisson(ps.lambda() / 2.0, rng) as usize;
    let mut nodes = Vec::with_capacity(2 * m);
    let mut pairing = Vec::with_capacity(m);
    let mut edges = Vec::new();
    for k in 0..m {
        nodes.push(ps.draw_node(rng)?);
        nodes.push(ps.draw_node(rng)?);
        let (i, j) = (2 * k, 2 * k + 1);
        pairing.push((i, j));
        ephemeral_pair_trials(&nodes, i, j, rng, &mut edges);
    }
    Ok(SampledGraph {
        rule: RealizationRule::Ephemeral,
        include_self_loops: true,
        nodes,
        edges,
        pairing: Some(pairing),
    })
}

fn check_lifetime(eta: f64, window: f64) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite() && window > 0.0 && window.is_finite()) {
        return invalid(format!("eta and window must be positive, got {eta}, {window}"));
    }
    Ok(())
}

/// Uniform births on `[0, window]` and exponential lifetimes of mean `eta`.
pub fn assign_lifetimes<R: Rng + ?Sized>(nodes: &mut [Node], eta: f64, window: f64, rng: &mut R) -> Result<()> {
    check_lifetime(eta, window)?;
    let exp = Exp::new(1.0 / eta).map_err(|e| IdpgError::InvalidParameter(e.to_string()))?;
    for n in nodes {
        n.birth = Some(rng.random::<f64>() * window);
        n.lifetime = Some(exp.sample(rng));
    }
    Ok(())
}

/// Perennial trials restricted to pairs whose lives overlap. Self-pairs always
/// overlap and are tried when `include_self_pairs` is set.
pub fn sample_lifetime<R: Rng + ?Sized>(
    model: &IntensityModel,
    eta: f64,
    window: f64,
    include_self_pairs: bool,
    rng: &mut R,
) -> Result<SampledGraph> {
    check_lifetime(eta, window)?;
    let mut nodes = sample_positions(model, rng)?;
    assign_lifetimes(&mut nodes, eta, window, rng)?;
    let alive: Vec<(f64, f64)> = nodes
        .iter()
        .map(|n| n.alive(window).expect("lifetimes assigned"))
        .collect();
    let mut edges = Vec::new();
    for (i, a) in nodes.iter().enumerate() {
        for (j, b) in nodes.iter().enumerate() {
            if i == j && !include_self_pairs {
                continue;
            }
            if i != j && !intervals_overlap(alive[i], alive[j]) {
                continue;
            }
            if rng.random::<f64>() < dot(a.position.g.as_slice(), b.position.r.as_slice()) {
                edges.push((i, j));
            }
        }
    }
    Ok(SampledGraph {
        rule: RealizationRule::Lifetime { eta, window },
        include_self_loops: include_self_pairs,
        nodes,
        edges,
        pairing: None,
    })
}

/// `Poisson(lambda_ref / 2)` directed pairs, source from the source model and
/// target from the target model, one trial `s → t` each.
pub fn sample_asymmetric_ephemeral<R: Rng + ?Sized>(
    source_model: &IntensityModel,
    target_model: &IntensityModel,
    lambda_ref: f64,
    rng: &mut R,
) -> Result<SampledGraph> {
    if source_model.dim() != target_model.dim() {
        return Err(IdpgError::DimensionMismatch {
            expected: source_model.dim(),
            got: target_model.dim(),
        });
    }
    if !(lambda_ref > 0.0 && lambda_ref.is_finite()) {
        return invalid(format!("lambda_ref must be positive, got {lambda_ref}"));
    }
    let src = PositionSampler::new(source_model)?;
    let tgt = PositionSampler::new(target_model)?;
    let m = sample_poisson(lambda_ref / 2.0, rng) as usize;
    let mut nodes = Vec::with_capacity(2 * m);
    let mut pairing = Vec::with_capacity(m);
    let mut edges = Vec::new();
    for k in 0..m {
        let s = src.draw_node(rng)?;
        let t = tgt.draw_node(rng)?;
        let p = dot(s.position.g.as_slice(), t.position.r.as_slice());
        nodes.push(s);
        nodes.push(t);
        pairing.push((2 * k, 2 * k + 1));
        if rng.random::<f64>() < p {
            edges.push((2 * k, 2 * k + 1));
        }
    }
    Ok(SampledGraph {
        rule: RealizationRule::AsymmetricEphemeral,
        include_self_loops: false,
        nodes,
        edges,
        pairing: Some(pairing),
    })
}

/// Induced subgraph on nodes of total degree at least one (self-loops
/// count). Pairs survive only when both members do.
pub fn observed_subgraph(graph: &SampledGraph) -> SampledGraph {
    let n = graph.nodes.len();
    let mut active = vec![false; n];
    for &(s, t) in &graph.edges {
        active[s] = true;
        active[t] = true;
    }
    let mut index = vec![usize::MAX; n];
    let mut nodes = Vec::new();
    for (i, node) in graph.nodes.iter().enumerate() {
        if active[i] {
            index[i] = nodes.len();
            nodes.push(node.clone());
        }
    }
    let edges = graph
        .edges
        .iter()
        .map(|&(s, t)| (index[s], index[t]))
        .collect();
    let pairing = graph.pairing.as_ref().map(|pairs| {
        pairs
            .iter()
            .filter(|&&(i, j)| active[i] && active[j])
            .map(|&(i, j)| (index[i], index[j]))
            .collect()
    });
    SampledGraph {
        rule: graph.rule,
        include_self_loops: graph.include_self_loops,
        nodes,
        edges,
        pairing,
    }
}

#[cfg(test)]
mod tests;
