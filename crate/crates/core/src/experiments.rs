//! Config-driven Monte Carlo experiments producing column tables.
//!
//! A config names one experiment, its parameter grid, the number of
//! replications and a root seed. Replication `r` at grid point `p` draws from
//! stream `stream_id("<experiment>/<p>", r)`, so tables are bit-identical across
//! runs and thread counts. Every Monte Carlo mean comes with a standard-error
//! column.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, io_err, IdpgError, Result};
use crate::expectations::{expected_edges, overlap_probability, EdgeRule};
use crate::latent::{load_model, model_from_json, moments, IntensityModel, QuadratureSpec};
use crate::pde::{evolve, BoundaryCondition, EvolveOptions, PdeState, RegimeSpec};
use crate::rng::{stream_id, SeededRng};
use crate::sampling::{
    intervals_overlap, perennial_edges_into, sample_ephemeral_with, sample_perennial_with, EdgeCounter,
    PositionSampler,
};
use crate::spectral::{adjacency_spectrum_with, average_spectra, noise_floor, SvdOptions};

/// Largest number of node draws a single config may request.
pub const NODE_SAMPLE_BUDGET: f64 = 1e8;

/// Seed for moment quadrature when a model needs Monte Carlo moments.
const MOMENT_SEED: u64 = 0x1d_96;

/// A model given inline or as a path relative to the config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Path(PathBuf),
    Inline(serde_json::Value),
}

impl ModelRef {
    pub fn resolve(&self, base: &Path) -> Result<IntensityModel> {
        match self {
            Self::Path(p) => load_model(&base.join(p)),
            Self::Inline(v) => model_from_json(v.clone(), base),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingParams {
    pub model: ModelRef,
    pub lambdas: Vec<f64>,
    /// Perennial self-loops; off gives the distinct-pair convention.
    #[serde(default)]
    pub include_self_loops: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlapParams {
    pub eta_over_w: Vec<f64>,
    #[serde(default = "one")]
    pub window: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioRegime {
    pub label: String,
    pub bc: BoundaryCondition,
    pub regime: RegimeSpec,
    #[serde(default)]
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatioParams {
    /// Product model with `d ≤ 2`.
    pub model: ModelRef,
    pub regimes: Vec<RatioRegime>,
    pub t_end: f64,
    /// Snapshots after the initial one, evenly spaced up to `t_end`.
    pub snapshots: usize,
    #[serde(default = "default_resolution")]
    pub resolution: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralParams {
    pub model: ModelRef,
    pub lambdas: Vec<f64>,
    /// Singular values of the desire operator to compare against.
    pub reference: Vec<f64>,
    #[serde(default)]
    pub dense_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiGraphParams {
    pub model: ModelRef,
    pub lambda: f64,
    pub graph_counts: Vec<usize>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default)]
    pub dense_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrowthParams {
    pub model: ModelRef,
    pub deltas: Vec<f64>,
    pub lambdas: Vec<f64>,
    #[serde(default = "one")]
    pub b0: f64,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default = "one")]
    pub n0: f64,
    /// Birth-time pairs for the overlap integral at each grid point.
    #[serde(default = "default_pair_samples")]
    pub pair_samples: usize,
}

fn one() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    64
}

fn default_k() -> usize {
    4
}

fn default_pair_samples() -> usize {
    100_000
}

/// The experiment and its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "params", rename_all = "snake_case")]
pub enum ExperimentKind {
    Scaling(ScalingParams),
    /// Each replication is one pair of lives.
    Overlap(OverlapParams),
    RatioTracking(RatioParams),
    SpectralConvergence(SpectralParams),
    /// Each replication averages `m` graphs.
    MultiGraph(MultiGraphParams),
    GrowthOverlap(GrowthParams),
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Scaling(_) => "scaling",
            Self::Overlap(_) => "overlap",
            Self::RatioTracking(_) => "ratio_tracking",
            Self::SpectralConvergence(_) => "spectral_convergence",
            Self::MultiGraph(_) => "multi_graph",
            Self::GrowthOverlap(_) => "growth_overlap",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub root_seed: u64,
    #[serde(flatten)]
    pub kind: ExperimentKind,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json_str(&text)
    }

    /// Parses and validates. Unknown experiment names are rejected here.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        let positive = |name: &str, v: &[f64]| -> Result<()> {
            if v.is_empty() {
                return invalid(format!("{name} must be nonempty"));
            }
            if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return invalid(format!("{name} must be positive and finite, got {v:?}"));
            }
            Ok(())
        };
        match &self.kind {
            ExperimentKind::Scaling(p) => positive("lambdas", &p.lambdas),
            ExperimentKind::Overlap(p) => {
                positive("eta_over_w", &p.eta_over_w)?;
                positive("window", &[p.window])
            }
            ExperimentKind::RatioTracking(p) => {
                if p.regimes.is_empty() || p.snapshots == 0 {
                    return invalid("ratio tracking needs regimes and at least one snapshot");
                }
                positive("t_end", &[p.t_end])
            }
            ExperimentKind::SpectralConvergence(p) => {
                positive("lambdas", &p.lambdas)?;
                if p.reference.is_empty() {
                    return invalid("reference spectrum must be nonempty");
                }
                Ok(())
            }
            ExperimentKind::MultiGraph(p) => {
                positive("lambda", &[p.lambda])?;
                if p.graph_counts.is_empty() || p.graph_counts.contains(&0) || p.k == 0 {
                    return invalid("graph_counts must be nonempty and positive, k positive");
                }
                Ok(())
            }
            ExperimentKind::GrowthOverlap(p) => {
                positive("lambdas", &p.lambdas)?;
                positive("b0, eta, n0", &[p.b0, p.eta, p.n0])?;
                if p.deltas.is_empty() || p.deltas.iter().any(|d| !(0.0..=1.0).contains(d)) {
                    return invalid(format!("deltas must lie in [0, 1], got {:?}", p.deltas));
                }
                if p.pair_samples == 0 {
                    return invalid("pair_samples must be positive");
                }
                Ok(())
            }
        }
    }

    /// Expected number of node draws. Ratio tracking counts its starting
    /// intensity at every snapshot, so the model is resolved against `base`.
    pub fn node_samples(&self, base: &Path) -> Result<f64> {
        let reps = self.replications as f64;
        let sum = |v: &[f64]| v.iter().sum::<f64>();
        Ok(match &self.kind {
            ExperimentKind::Scaling(p) => 2.0 * reps * sum(&p.lambdas),
            ExperimentKind::Overlap(p) => 2.0 * reps * p.eta_over_w.len() as f64,
            ExperimentKind::RatioTracking(p) => {
                let lambda = p.model.resolve(base)?.total_intensity();
                2.0 * reps * (p.snapshots + 1) as f64 * p.regimes.len() as f64 * lambda
            }
            ExperimentKind::SpectralConvergence(p) => reps * sum(&p.lambdas),
            ExperimentKind::MultiGraph(p) => reps * p.lambda * p.graph_counts.iter().sum::<usize>() as f64,
            ExperimentKind::GrowthOverlap(p) => {
                p.deltas.len() as f64 * (reps * sum(&p.lambdas) + 2.0 * (p.pair_samples * p.lambdas.len()) as f64)
            }
        })
    }

    pub fn check_budget(&self, base: &Path) -> Result<()> {
        let requested = self.node_samples(base)?;
        if requested > NODE_SAMPLE_BUDGET {
            return Err(IdpgError::Budget {
                requested,
                limit: NODE_SAMPLE_BUDGET,
            });
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("configs always serialize");
        Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn rng(&self, point: &str, rep: usize) -> SeededRng {
        SeededRng::new(
            self.root_seed,
            stream_id(&format!("{}/{point}", self.kind.name()), rep as u64),
        )
    }
}

/// One column of a result table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Column {
    Float(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Self::Float(v) => v.len(),
            Self::Text(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_floats(&self) -> Option<&[f64]> {
        match self {
            Self::Float(v) => Some(v),
            Self::Text(_) => None,
        }
    }

    pub fn as_text(&self) -> Option<&[String]> {
        match self {
            Self::Text(v) => Some(v),
            Self::Float(_) => None,
        }
    }

    fn cell(&self, i: usize) -> String {
        match self {
            Self::Float(v) => format!("{:.16e}", v[i]),
            Self::Text(v) => v[i].clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub experiment: String,
    pub config_hash: String,
    pub root_seed: u64,
    pub replications: usize,
    pub wall_time_s: f64,
    /// Table-level results such as fitted slopes.
    pub summary: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedColumn {
    pub name: String,
    pub values: Column,
}

/// Named, equal-length columns plus run metadata.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub metadata: Metadata,
    pub columns: Vec<NamedColumn>,
}

impl ResultTable {
    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, |c| c.values.len())
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name).map(|c| &c.values)
    }

    pub fn floats(&self, name: &str) -> Option<&[f64]> {
        self.column(name).and_then(Column::as_floats)
    }

    pub fn summary(&self, key: &str) -> Option<f64> {
        self.metadata.summary.get(key).copied()
    }

    fn push(&mut self, name: &str, values: Column) {
        self.columns.push(NamedColumn {
            name: name.into(),
            values,
        });
    }

    /// Records a table-level value; non-finite values are dropped so the
    /// JSON form stays valid.
    fn summarize(&mut self, key: &str, v: f64) {
        if v.is_finite() {
            self.metadata.summary.insert(key.into(), v);
        }
    }

    fn push_f(&mut self, name: &str, values: Vec<f64>) {
        self.push(name, Column::Float(values));
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rows();
        if let Some(c) = self.columns.iter().find(|c| c.values.len() != n) {
            return invalid(format!("column {} has {} rows, expected {n}", c.name, c.values.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

/// CSV carries metadata as leading `# key: value` lines and floats at 17
/// significant digits; JSON mirrors the table structure.
pub fn write_results(table: &ResultTable, path: &Path, format: OutputFormat) -> Result<()> {
    table.validate()?;
    match format {
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(table)?;
            fs::write(path, text + "\n").map_err(io_err(path))
        }
        OutputFormat::Csv => {
            let mut out = String::new();
            let m = &table.metadata;
            out += &format!("# experiment: {}\n", m.experiment);
            out += &format!("# config_hash: {}\n", m.config_hash);
            out += &format!("# root_seed: {}\n", m.root_seed);
            out += &format!("# replications: {}\n", m.replications);
            out += &format!("# wall_time_s: {:.16e}\n", m.wall_time_s);
            for (k, v) in &m.summary {
                out += &format!("# summary.{k}: {v:.16e}\n");
            }
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(table.columns.iter().map(|c| c.name.as_str()))?;
            for i in 0..table.rows() {
                w.write_record(table.columns.iter().map(|c| c.values.cell(i)))?;
            }
            let body = w.into_inner().map_err(|e| IdpgError::Io {
                path: path.to_path_buf(),
                source: e.into_error(),
            })?;
            out += std::str::from_utf8(&body).expect("csv output is UTF-8");
            fs::write(path, out).map_err(io_err(path))
        }
    }
}

/// Reads a table written by [`write_results`]. Columns that parse entirely as
/// floats come back as floats.
pub fn read_results(path: &Path, format: OutputFormat) -> Result<ResultTable> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    match format {
        OutputFormat::Json => Ok(serde_json::from_str(&text)?),
        OutputFormat::Csv => {
            let mut meta = Metadata::default();
            let parse_f = |v: &str| v.trim().parse::<f64>().map_err(|e| IdpgError::InvalidParameter(e.to_string()));
            for line in text.lines().take_while(|l| l.starts_with('#')) {
                let Some((k, v)) = line[1..].split_once(':') else {
                    continue;
                };
                let (k, v) = (k.trim(), v.trim());
                match k {
                    "experiment" => meta.experiment = v.into(),
                    "config_hash" => meta.config_hash = v.into(),
                    "root_seed" => meta.root_seed = v.parse().map_err(|e: std::num::ParseIntError| IdpgError::InvalidParameter(e.to_string()))?,
                    "replications" => meta.replications = v.parse().map_err(|e: std::num::ParseIntError| IdpgError::InvalidParameter(e.to_string()))?,
                    "wall_time_s" => meta.wall_time_s = parse_f(v)?,
                    _ => {
                        if let Some(key) = k.strip_prefix("summary.") {
                            meta.summary.insert(key.into(), parse_f(v)?);
                        }
                    }
                }
            }
            let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
            let names: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
            let mut cells: Vec<Vec<String>> = vec![Vec::new(); names.len()];
            for rec in r.records() {
                for (c, v) in cells.iter_mut().zip(rec?.iter()) {
                    c.push(v.to_owned());
                }
            }
            let columns = names
                .into_iter()
                .zip(cells)
                .map(|(name, c)| {
                    let floats: Option<Vec<f64>> = c.iter().map(|v| v.parse().ok()).collect();
                    let values = match floats {
                        Some(f) if !c.is_empty() => Column::Float(f),
                        _ => Column::Text(c),
                    };
                    NamedColumn { name, values }
                })
                .collect();
            Ok(ResultTable { metadata: meta, columns })
        }
    }
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn sample_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Ordinary least squares `y = a + b x`; returns `(b, a, se(b))`.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let se = if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (b, a, se)
}

fn loglog_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (b, _, se) = ols(&lx, &ly);
    (b, se)
}

/// Runs `f` for each replication on the rayon pool, keeping index order.
fn replicate<T: Send>(reps: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    (0..reps).into_par_iter().map(f).collect()
}

fn perennial_count(ps: &PositionSampler, loops: bool, rng: &mut SeededRng) -> Result<f64> {
    let nodes = ps.draw_population(rng)?;
    let mut c = EdgeCounter::default();
    perennial_edges_into(&nodes, loops, rng, &mut c);
    Ok(c.0 as f64)
}

fn ephemeral_count(ps: &PositionSampler, rng: &mut SeededRng) -> Result<f64> {
    Ok(sample_ephemeral_with(ps, rng)?.edges.len() as f64)
}

fn moment_scheme(model: &IntensityModel) -> QuadratureSpec {
    QuadratureSpec::default_for(model.dim(), Some(MOMENT_SEED))
}

/// Validates, checks the budget, runs, and stamps metadata. Relative model
/// paths resolve against `base`.
pub fn run_experiment(config: &ExperimentConfig, base: &Path) -> Result<ResultTable> {
    config.validate()?;
    config.check_budget(base)?;
    let start = Instant::now();
    let mut table = match &config.kind {
        ExperimentKind::Scaling(p) => run_scaling(config, p, base)?,
        ExperimentKind::Overlap(p) => run_overlap(config, p)?,
        ExperimentKind::RatioTracking(p) => run_ratio(config, p, base)?,
        ExperimentKind::SpectralConvergence(p) => run_spectral(config, p, base)?,
        ExperimentKind::MultiGraph(p) => run_multi_graph(config, p, base)?,
        ExperimentKind::GrowthOverlap(p) => run_growth(config, p, base)?,
    };
    table.metadata.experiment = config.kind.name().into();
    table.metadata.config_hash = config.hash();
    table.metadata.root_seed = config.root_seed;
    table.metadata.replications = config.replications;
    table.metadata.wall_time_s = start.elapsed().as_secs_f64();
    table.validate()?;
    Ok(table)
}

fn run_scaling(cfg: &ExperimentConfig, p: &ScalingParams, base: &Path) -> Result<ResultTable> {
    let model = p.model.resolve(base)?;
    let per_rule = if p.include_self_loops {
        EdgeRule::PerennialWithLoops
    } else {
        EdgeRule::PerennialDistinct
    };
    let mut t = ResultTable::default();
    let mut cols: [Vec<f64>; 7] = Default::default();
    for &lambda in &p.lambdas {
        let m = model.scaled_to(lambda)?;
        let ps = PositionSampler::new(&m)?;
        let point = format!("lambda={lambda}");
        let draws = replicate(cfg.replications, |r| {
            let mut rng = cfg.rng(&point, r);
            Ok((perennial_count(&ps, p.include_self_loops, &mut rng)?, ephemeral_count(&ps, &mut rng)?))
        })?;
        let (pm, pse) = mean_se(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
        let (em, ese) = mean_se(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
        let s = moments(&m, moment_scheme(&m))?;
        for (c, v) in cols.iter_mut().zip([
            lambda,
            pm,
            pse,
            expected_edges(&s, per_rule)?,
            em,
            ese,
            expected_edges(&s, EdgeRule::Ephemeral)?,
        ]) {
            c.push(v);
        }
    }
    if p.lambdas.len() >= 2 {
        let (ps, pse) = loglog_slope(&cols[0], &cols[1]);
        let (es, ese) = loglog_slope(&cols[0], &cols[4]);
        t.summarize("perennial_slope", ps);
        t.summarize("perennial_slope_se", pse);
        t.summarize("ephemeral_slope", es);
        t.summarize("ephemeral_slope_se", ese);
    }
    let names = [
        "lambda",
        "perennial_mean",
        "perennial_se",
        "perennial_theory",
        "ephemeral_mean",
        "ephemeral_se",
        "ephemeral_theory",
    ];
    for (n, c) in names.into_iter().zip(cols) {
        t.push_f(n, c);
    }
    Ok(t)
}

fn run_overlap(cfg: &ExperimentConfig, p: &OverlapParams) -> Result<ResultTable> {
    let w = p.window;
    let mut t = ResultTable::default();
    let mut cols: [Vec<f64>; 6] = Default::default();
    for &q in &p.eta_over_w {
        let eta = q * w;
        let exp = Exp::new(1.0 / eta).map_err(|e| IdpgError::InvalidParameter(e.to_string()))?;
        let point = format!("eta_over_w={q}");
        let hits = replicate(cfg.replications, |r| {
            let mut rng = cfg.rng(&point, r);
            let mut life = || {
                let b = rng.random::<f64>() * w;
                (b, (b + exp.sample(&mut rng)).min(w))
            };
            let (a, b) = (life(), life());
            Ok(if intervals_overlap(a, b) { 1.0 } else { 0.0 })
        })?;
        let (m, se) = mean_se(&hits);
        let exact = overlap_probability(eta, w);
        for (c, v) in cols.iter_mut().zip([q, m, se, exact, (m - exact).abs() / exact, se / exact]) {
            c.push(v);
        }
    }
    let max_rel = cols[4].iter().copied().fold(0.0, f64::max);
    t.summarize("max_rel_error", max_rel);
    let names = ["eta_over_w", "empirical", "se", "closed_form", "rel_error", "rel_se"];
    for (n, c) in names.into_iter().zip(cols) {
        t.push_f(n, c);
    }
    Ok(t)
}

fn run_ratio(cfg: &ExperimentConfig, p: &RatioParams, base: &Path) -> Result<ResultTable> {
    let model = p.model.resolve(base)?;
    let mut t = ResultTable::default();
    let mut labels = Vec::new();
    let mut cols: [Vec<f64>; 10] = Default::default();
    for reg in &p.regimes {
        let mut state = PdeState::from_model(&model, p.resolution, reg.bc, reg.regime.clone())?;
        let mut abs_err = Vec::new();
        for k in 0..=p.snapshots {
            if k > 0 {
                let opts = EvolveOptions {
                    t_end: p.t_end * k as f64 / p.snapshots as f64,
                    dt: reg.dt,
                    snapshot_every: usize::MAX,
                    keep_fields: false,
                };
                state = evolve(&state, &opts)?.0;
            }
            let lambda = state.summary()?.lambda;
            let ps = PositionSampler::new(&state.model()?)?;
            let point = format!("{}/snapshot={k}", reg.label);
            let draws = replicate(cfg.replications, |r| {
                let mut rng = cfg.rng(&point, r);
                Ok((perennial_count(&ps, false, &mut rng)?, ephemeral_count(&ps, &mut rng)?))
            })?;
            let (pm, pse) = mean_se(&draws.iter().map(|d| d.0).collect::<Vec<_>>());
            let (em, ese) = mean_se(&draws.iter().map(|d| d.1).collect::<Vec<_>>());
            let ratio = pm / em;
            // Delta method; the two counts come from independent draws.
            let ratio_se = ratio * ((pse / pm).powi(2) + (ese / em).powi(2)).sqrt();
            let err = (ratio - lambda / 2.0).abs();
            abs_err.push(err);
            labels.push(reg.label.clone());
            for (c, v) in cols
                .iter_mut()
                .zip([state.time, lambda, pm, pse, em, ese, ratio, ratio_se, lambda / 2.0, err])
            {
                c.push(v);
            }
        }
        let mae = abs_err.iter().sum::<f64>() / abs_err.len() as f64;
        t.summarize(&format!("mae.{}", reg.label), mae);
    }
    t.push("regime", Column::Text(labels));
    let names = [
        "time",
        "lambda",
        "perennial_mean",
        "perennial_se",
        "ephemeral_mean",
        "ephemeral_se",
        "ratio",
        "ratio_se",
        "half_lambda",
        "abs_error",
    ];
    for (n, c) in names.into_iter().zip(cols) {
        t.push_f(n, c);
    }
    Ok(t)
}

fn svd_options(dense_limit: Option<usize>, seed: u64) -> SvdOptions {
    let mut o = SvdOptions {
        seed,
        ..SvdOptions::default()
    };
    if let Some(l) = dense_limit {
        o.dense_limit = l;
    }
    o
}

fn run_spectral(cfg: &ExperimentConfig, p: &SpectralParams, base: &Path) -> Result<ResultTable> {
    let model = p.model.resolve(base)?;
    let k = p.reference.len();
    let mut t = ResultTable::default();
    let mut cols: [Vec<f64>; 9] = Default::default();
    let mut top_mae = Vec::new();
    for &lambda in &p.lambdas {
        let m = model.scaled_to(lambda)?;
        let ps = PositionSampler::new(&m)?;
        let point = format!("lambda={lambda}");
        let spectra = replicate(cfg.replications, |r| {
            let mut rng = cfg.rng(&point, r);
            let g = sample_perennial_with(&ps, &mut rng, false)?;
            let mut s = adjacency_spectrum_with(&g, k, &svd_options(p.dense_limit, rng.random()))?;
            s.resize(k, 0.0);
            Ok(s)
        })?;
        for i in 0..k {
            let xs: Vec<f64> = spectra.iter().map(|s| s[i]).collect();
            let (mean, se) = mean_se(&xs);
            let mae = xs.iter().map(|x| (x - p.reference[i]).abs()).sum::<f64>() / xs.len() as f64;
            if i == 0 {
                top_mae.push(mae);
            }
            for (c, v) in cols.iter_mut().zip([
                lambda,
                (i + 1) as f64,
                mean,
                se,
                p.reference[i],
                mae,
                mean - p.reference[i],
                noise_floor(lambda),
                2.0 * noise_floor(lambda),
            ]) {
                c.push(v);
            }
        }
    }
    if p.lambdas.len() >= 2 {
        let (b, se) = loglog_slope(&p.lambdas, &top_mae);
        t.summarize("error_slope", b);
        t.summarize("error_slope_se", se);
    }
    let names = [
        "lambda",
        "index",
        "mean_sigma",
        "se_sigma",
        "reference",
        "mean_abs_error",
        "bias",
        "noise_floor",
        "threshold",
    ];
    for (n, c) in names.into_iter().zip(cols) {
        t.push_f(n, c);
    }
    Ok(t)
}

fn run_multi_graph(cfg: &ExperimentConfig, p: &MultiGraphParams, base: &Path) -> Result<ResultTable> {
    let m = p.model.resolve(base)?.scaled_to(p.lambda)?;
    let ps = PositionSampler::new(&m)?;
    let mut t = ResultTable::default();
    let mut cols: [Vec<f64>; 5] = Default::default();
    let mut top_std = Vec::new();
    for &count in &p.graph_counts {
        let point = format!("m={count}");
        let averages = replicate(cfg.replications, |r| {
            let rng = cfg.rng(&point, r);
            let spectra = (0..count)
                .map(|j| {
                    let mut sub = rng.substream(j as u64);
                    let g = sample_perennial_with(&ps, &mut sub, false)?;
                    let mut s = adjacency_spectrum_with(&g, p.k, &svd_options(p.dense_limit, sub.random()))?;
                    s.resize(p.k, 0.0);
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(average_spectra(&spectra).mean)
        })?;
        for i in 0..p.k {
            let xs: Vec<f64> = averages.iter().map(|a| a[i]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let std = sample_std(&xs);
            if i == 0 {
                top_std.push(std);
            }
            // Standard error of a normal-sample standard deviation.
            let std_se = std / (2.0 * (xs.len() as f64 - 1.0)).sqrt();
            for (c, v) in cols.iter_mut().zip([count as f64, (i + 1) as f64, mean, std, std_se]) {
                c.push(v);
            }
        }
    }
    if p.graph_counts.len() >= 2 {
        let (first, last) = (p.graph_counts[0] as f64, p.graph_counts[p.graph_counts.len() - 1] as f64);
        t.summarize("std_ratio", top_std[0] / top_std[top_std.len() - 1]);
        t.summarize("std_ratio_expected", (last / first).sqrt());
    }
    for (n, c) in ["m", "index", "mean", "std", "std_se"].into_iter().zip(cols) {
        t.push_f(n, c);
    }
    Ok(t)
}

/// Birth process `dN/dt = b0 N^{1-δ}` from `N0`, observed until the expected
/// number of births reaches `Λ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrowthProcess {
    pub delta: f64,
    pub b0: f64,
    pub n0: f64,
    pub lambda: f64,
}

impl GrowthProcess {
    pub fn population(&self, t: f64) -> f64 {
        if self.delta == 0.0 {
            self.n0 * (self.b0 * t).exp()
        } else {
            (self.n0.powf(self.delta) + self.delta * self.b0 * t).powf(1.0 / self.delta)
        }
    }

    /// Birth rate `λ(t) = b0 N(t)^{1-δ}`.
    pub fn birth_rate(&self, t: f64) -> f64 {
        self.b0 * self.population(t).powf(1.0 - self.delta)
    }

    /// Time at which the population reaches `N`.
    fn time_at(&self, n: f64) -> f64 {
        if self.delta == 0.0 {
            (n / self.n0).ln() / self.b0
        } else {
            (n.powf(self.delta) - self.n0.powf(self.delta)) / (self.delta * self.b0)
        }
    }

    /// Observation window `W` with `N(W) − N0 = Λ`.
    pub fn window(&self) -> f64 {
        self.time_at(self.n0 + self.lambda)
    }

    /// Birth time with density `λ(t)/Λ` on `[0, W]`, by inversion.
    pub fn birth_time(&self, u: f64) -> f64 {
        self.time_at(self.n0 + u * self.lambda)
    }
}

fn run_growth(cfg: &ExperimentConfig, p: &GrowthParams, base: &Path) -> Result<ResultTable> {
    let model = p.model.resolve(base)?;
    let exp = Exp::new(1.0 / p.eta).map_err(|e| IdpgError::InvalidParameter(e.to_string()))?;
    let mut t = ResultTable::default();
    let mut cols: [Vec<f64>; 8] = Default::default();
    for &delta in &p.deltas {
        let mut means = Vec::new();
        let mut overlaps = Vec::new();
        for &lambda in &p.lambdas {
            let proc = GrowthProcess {
                delta,
                b0: p.b0,
                n0: p.n0,
                lambda,
            };
            let point = format!("delta={delta}/lambda={lambda}");
            // Overlap integral: E[exp(−|t1 − t2|/η)] over birth-time pairs.
            let chunks = p.pair_samples.div_ceil(1000);
            let sums = replicate(chunks, |c| {
                let mut rng = cfg.rng(&format!("{point}/pairs"), c);
                let n = 1000.min(p.pair_samples - c * 1000);
                let v: Vec<f64> = (0..n)
                    .map(|_| {
                        let (a, b) = (proc.birth_time(rng.random()), proc.birth_time(rng.random()));
                        (-(a - b).abs() / p.eta).exp()
                    })
                    .collect();
                Ok(v)
            })?;
            let kernel: Vec<f64> = sums.into_iter().flatten().collect();
            let (pm, pse) = mean_se(&kernel);
            let m = model.scaled_to(lambda)?;
            let ps = PositionSampler::new(&m)?;
            let edges = replicate(cfg.replications, |r| {
                let mut rng = cfg.rng(&point, r);
                let nodes = ps.draw_population(&mut rng)?;
                let lives: Vec<(f64, f64)> = nodes
                    .iter()
                    .map(|_| {
                        let b = proc.birth_time(rng.random());
                        (b, b + exp.sample(&mut rng))
                    })
                    .collect();
                let mut count = 0u64;
                for (i, a) in nodes.iter().enumerate() {
                    for (j, b) in nodes.iter().enumerate() {
                        if i != j && !intervals_overlap(lives[i], lives[j]) {
                            continue;
                        }
                        let k: f64 = a
                            .position
                            .g
                            .as_slice()
                            .iter()
                            .zip(b.position.r.as_slice())
                            .map(|(x, y)| x * y)
                            .sum();
                        count += u64::from(rng.random::<f64>() < k);
                    }
                }
                Ok(count as f64)
            })?;
            let (em, ese) = mean_se(&edges);
            let x = moments(&m, moment_scheme(&m))?.affinity();
            means.push(em);
            overlaps.push(pm);
            for (c, v) in cols.iter_mut().zip([
                delta,
                lambda,
                proc.window(),
                pm,
                pse,
                em,
                ese,
                lambda * lambda * pm * x + lambda * x,
            ]) {
                c.push(v);
            }
        }
        if p.lambdas.len() >= 2 {
            let (b, se) = loglog_slope(&p.lambdas, &means);
            let (k, _) = loglog_slope(&p.lambdas, &overlaps);
            t.summarize(&format!("edge_exponent.delta={delta}"), b);
            t.summarize(&format!("edge_exponent_se.delta={delta}"), se);
            t.summarize(&format!("overlap_exponent.delta={delta}"), -k);
        }
    }
    let names = [
        "delta",
        "lambda",
        "window",
        "p_overlap",
        "p_overlap_se",
        "mean_edges",
        "edges_se",
        "expected_edges",
    ];
    for (n, c) in names.into_iter().zip(cols) {
        t.push_f(n, c);
    }
    Ok(t)
}

/// One acceptance band applied to a table value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandCheck {
    pub name: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
    pub pass: bool,
}

impl BandCheck {
    fn new(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self {
            name: name.into(),
            value,
            lo,
            hi,
            pass: value >= lo && value <= hi,
        }
    }
}

/// Acceptance bands for a finished table, keyed on its experiment name.
pub fn band_checks(table: &ResultTable) -> Vec<BandCheck> {
    let s = |k: &str| table.summary(k).unwrap_or(f64::NAN);
    let mut out = Vec::new();
    match table.metadata.experiment.as_str() {
        "scaling" => {
            out.push(BandCheck::new("perennial_slope", s("perennial_slope"), 1.92, 2.02));
            out.push(BandCheck::new("ephemeral_slope", s("ephemeral_slope"), 0.96, 1.06));
        }
        "overlap" => out.push(BandCheck::new("max_rel_error", s("max_rel_error"), 0.0, 0.01)),
        "ratio_tracking" => {
            for (k, v) in &table.metadata.summary {
                if k.starts_with("mae.") {
                    out.push(BandCheck::new(k.clone(), *v, 0.0, 3.0));
                }
            }
        }
        "spectral_convergence" => {
            let (Some(l), Some(i), Some(e), Some(th)) = (
                table.floats("lambda"),
                table.floats("index"),
                table.floats("mean_abs_error"),
                table.floats("threshold"),
            ) else {
                return out;
            };
            for r in 0..table.rows() {
                if i[r] == 1.0 {
                    out.push(BandCheck::new(format!("sigma1_error.lambda={}", l[r]), e[r], 0.0, th[r]));
                }
            }
            out.push(BandCheck::new("error_slope", s("error_slope"), -0.75, -0.3));
        }
        "multi_graph" => {
            let rel = s("std_ratio") / s("std_ratio_expected");
            out.push(BandCheck::new("std_ratio_over_expected", rel, 0.7, 1.3));
        }
        "growth_overlap" => {
            for (delta, target) in [(0.0, 2.0), (1.0, 1.0)] {
                let key = format!("edge_exponent.delta={delta}");
                if let Some(v) = table.summary(&key) {
                    out.push(BandCheck::new(key, v, target - 0.15, target + 0.15));
                }
            }
        }
        _ => {}
    }
    out
}
