//! Spectra of the bound-heat and desire operators, adjacency spectra and
//! embeddings, and the discretized Laplacian on `Ω` for `d = 1`.
//!
//! Both operators have rank at most `d`. Their singular values reduce to
//! `d × d` eigenproblems built from the Gram matrices `A`, `B` (bound heat)
//! or the normalized second moments `Σ_G`, `Σ_R` (desire).

use nalgebra::{DMatrix, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, IdpgError, Result};
use crate::heat::tabulate_marginal;
use crate::latent::{GridField, IntensityModel, MaskKind, MomentSummary};
use crate::rng::SeededRng;
use crate::sampling::SampledGraph;

/// Largest asymmetry `max |M - Mᵀ|` accepted for a symmetric input.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Singular values of a finite-rank operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralSummary {
    /// Descending, non-negative.
    pub singular_values: Vec<f64>,
    pub rank_bound: usize,
    /// Squared Hilbert-Schmidt norm.
    pub hs_norm_sq: f64,
    /// `C = Λ_A^{1/2} U_Aᵀ U_B Λ_B^{1/2}` (bound heat only).
    pub factor_c: Option<DMatrix<f64>>,
}

impl SpectralSummary {
    /// Number of values above `RANK_TOL · σ₁`.
    pub fn numerical_rank(&self) -> usize {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        self.singular_values
            .iter()
            .filter(|&&s| s > RANK_TOL * top)
            .count()
    }
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return invalid(format!("expected a square matrix, got {}x{}", m.nrows(), m.ncols()));
    }
    let asym = (m - m.transpose()).amax();
    if !(asym <= SYMMETRY_TOL) {
        return Err(IdpgError::NotSymmetric(asym));
    }
    Ok(())
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigendecomposition of a symmetric PSD matrix with eigenvalues clamped
/// at zero.
fn psd_eigen(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let e = SymmetricEigen::new(symmetrize(m));
    let vals = e.eigenvalues.iter().map(|v| v.max(0.0)).collect();
    (e.eigenvectors, vals)
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, vals) = psd_eigen(m);
    let mut scaled = u.clone();
    for (k, v) in vals.iter().enumerate() {
        scaled.column_mut(k).scale_mut(v.sqrt());
    }
    &scaled * u.transpose()
}

fn descending(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// SVD of the bound heat operator from the Gram matrices of its factors.
pub fn bound_heat_svd(gram_a: &DMatrix<f64>, gram_b: &DMatrix<f64>) -> Result<SpectralSummary> {
    check_symmetric(gram_a)?;
    check_symmetric(gram_b)?;
    let d = gram_a.nrows();
    if gram_b.nrows() != d {
        return Err(IdpgError::DimensionMismatch {
            expected: d,
            got: gram_b.nrows(),
        });
    }
    let (ua, la) = psd_eigen(gram_a);
    let (ub, lb) = psd_eigen(gram_b);
    let mut c = ua.transpose() * ub;
    for i in 0..d {
        for j in 0..d {
            c[(i, j)] *= la[i].sqrt() * lb[j].sqrt();
        }
    }
    let sv = descending(c.singular_values().iter().copied().collect());
    Ok(SpectralSummary {
        singular_values: sv,
        rank_bound: d,
        hs_norm_sq: (gram_a * gram_b).trace(),
        factor_c: Some(c),
    })
}

/// Which matrix was square-rooted to symmetrize `Σ_G Σ_R`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesireRoute {
    /// `Σ_G^{1/2} Σ_R Σ_G^{1/2}`.
    Green,
    /// `Σ_R^{1/2} Σ_G Σ_R^{1/2}`, used when `Σ_G` is singular.
    Red,
    /// Both singular: clamped pseudo-root of `Σ_G`. Values are still the
    /// square roots of the nonzero eigenvalues of `Σ_G Σ_R`, but the inputs
    /// are degenerate and worth a look.
    PseudoRoot,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesireSpectrum {
    pub singular_values: Vec<f64>,
    pub route: DesireRoute,
}

fn is_definite(vals: &[f64]) -> bool {
    let top = vals.iter().copied().fold(0.0, f64::max);
    top > 0.0 && vals.iter().all(|&v| v > RANK_TOL * top)
}

/// `σ_k(D̃) = √λ_k(Σ_G Σ_R)`, descending.
pub fn desire_singular_values(sigma_g: &DMatrix<f64>, sigma_r: &DMatrix<f64>) -> Result<DesireSpectrum> {
    check_symmetric(sigma_g)?;
    check_symmetric(sigma_r)?;
    if sigma_g.nrows() != sigma_r.nrows() {
        return Err(IdpgError::DimensionMismatch {
            expected: sigma_g.nrows(),
            got: sigma_r.nrows(),
        });
    }
    let (_, lg) = psd_eigen(sigma_g);
    let (_, lr) = psd_eigen(sigma_r);
    let (root_of, other, route) = if is_definite(&lg) {
        (sigma_g, sigma_r, DesireRoute::Green)
    } else if is_definite(&lr) {
        (sigma_r, sigma_g, DesireRoute::Red)
    } else {
        (sigma_g, sigma_r, DesireRoute::PseudoRoot)
    };
    let s = psd_sqrt(root_of);
    let m = &s * other * &s;
    let (_, vals) = psd_eigen(&m);
    Ok(DesireSpectrum {
        singular_values: descending(vals.iter().map(|v| v.sqrt()).collect()),
        route,
    })
}

/// Desire spectrum of a moment summary (uses the normalized `Σ_G`, `Σ_R`).
pub fn desire_spectrum(summary: &MomentSummary) -> Result<SpectralSummary> {
    let sv = desire_singular_values(&summary.sigma_g, &summary.sigma_r)?.singular_values;
    let hs = sv.iter().map(|s| s * s).sum();
    Ok(SpectralSummary {
        singular_values: sv,
        rank_bound: summary.dim(),
        hs_norm_sq: hs,
        factor_c: None,
    })
}

/// `1/√Λ`, the scale below which adjacency singular values are not
/// distinguishable from Bernoulli noise.
pub fn noise_floor(lambda: f64) -> f64 {
    1.0 / lambda.sqrt()
}

/// Dense 0/1 adjacency with `A[i][j] = 1` iff `i → j`.
pub fn adjacency_matrix(graph: &SampledGraph) -> DMatrix<f64> {
    let n = graph.node_count();
    let mut a = DMatrix::zeros(n, n);
    for &(s, t) in &graph.edges {
        a[(s, t)] = 1.0;
    }
    a
}

/// How truncated SVDs are computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvdOptions {
    /// Graphs with at most this many nodes use a full dense SVD.
    pub dense_limit: usize,
    pub oversampling: usize,
    pub power_iterations: usize,
    pub seed: u64,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            dense_limit: 500,
            oversampling: 10,
            power_iterations: 2,
            seed: 0,
        }
    }
}

/// Top singular triplets: `A ≈ U diag(σ) Vᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedSvd {
    pub singular_values: Vec<f64>,
    /// `N × k`.
    pub u: DMatrix<f64>,
    /// `N × k`.
    pub v: DMatrix<f64>,
}

/// Out- and in-neighbour lists of a graph.
struct Sparse {
    n: usize,
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl Sparse {
    fn new(graph: &SampledGraph) -> Self {
        let n = graph.node_count();
        let mut out = vec![Vec::new(); n];
        let mut inc = vec![Vec::new(); n];
        for &(s, t) in &graph.edges {
            out[s].push(t);
            inc[t].push(s);
        }
        Self { n, out, inc }
    }

    /// `M X` where `M` has row lists `rows`; `x` is row-major `n × l`.
    fn apply(rows: &[Vec<usize>], x: &[f64], l: usize) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (i, row) in rows.iter().enumerate() {
            let yi = &mut y[i * l..(i + 1) * l];
            for &j in row {
                yi.iter_mut().zip(&x[j * l..(j + 1) * l]).for_each(|(a, b)| *a += b);
            }
        }
        y
    }

    fn mul(&self, x: &DMatrix<f64>, transpose: bool) -> DMatrix<f64> {
        let l = x.ncols();
        let xr: Vec<f64> = x.transpose().as_slice().to_vec();
        let rows = if transpose { &self.inc } else { &self.out };
        let y = Self::apply(rows, &xr, l);
        DMatrix::from_row_slice(self.n, l, &y)
    }
}

fn orthonormal(m: DMatrix<f64>) -> DMatrix<f64> {
    m.qr().q()
}

/// Top-`k` singular triplets of the adjacency matrix.
pub fn truncated_svd(graph: &SampledGraph, k: usize, opts: &SvdOptions) -> Result<TruncatedSvd> {
    let n = graph.node_count();
    if n == 0 {
        return Err(IdpgError::EmptyGraph);
    }
    if k == 0 || k > n {
        return invalid(format!("requested {k} singular values from a graph with {n} nodes"));
    }
    let (sv, u, v) = if n <= opts.dense_limit {
        let svd = adjacency_matrix(graph).svd(true, true);
        let u = svd.u.expect("requested U");
        let vt = svd.v_t.expect("requested Vᵀ");
        (svd.singular_values.as_slice().to_vec(), u, vt.transpose())
    } else {
        randomized_svd(&Sparse::new(graph), k, opts)
    };
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]));
    order.truncate(k);
    Ok(TruncatedSvd {
        singular_values: order.iter().map(|&i| sv[i]).collect(),
        u: u.select_columns(&order),
        v: v.select_columns(&order),
    })
}

fn randomized_svd(a: &Sparse, k: usize, opts: &SvdOptions) -> (Vec<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = a.n;
    let l = (k + opts.oversampling).min(n);
    let mut rng = SeededRng::new(opts.seed, n as u64);
    let omega = DMatrix::from_fn(n, l, |_, _| StandardNormal.sample(&mut rng));
    let mut q = orthonormal(a.mul(&omega, false));
    for _ in 0..opts.power_iterations {
        let z = orthonormal(a.mul(&q, true));
        q = orthonormal(a.mul(&z, false));
    }
    // B = Qᵀ A, so Bᵀ = Aᵀ Q = U_b S V_bᵀ and A ≈ (Q V_b) S U_bᵀ.
    let bt = a.mul(&q, true);
    let svd = bt.svd(true, true);
    let ub = svd.u.expect("requested U");
    let vb = svd.v_t.expect("requested Vᵀ").transpose();
    (svd.singular_values.as_slice().to_vec(), q * vb, ub)
}

/// Top-`k` singular values of the adjacency matrix divided by `N`.
pub fn adjacency_spectrum(graph: &SampledGraph, k: usize) -> Result<Vec<f64>> {
    adjacency_spectrum_with(graph, k, &SvdOptions::default())
}

pub fn adjacency_spectrum_with(graph: &SampledGraph, k: usize, opts: &SvdOptions) -> Result<Vec<f64>> {
    let n = graph.node_count() as f64;
    let t = truncated_svd(graph, k, opts)?;
    Ok(t.singular_values.iter().map(|s| s / n).collect())
}

/// Adjacency spectral embedding `Ĝ = U √Σ`, `R̂ᵀ = √Σ Vᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// `N × d̂`, one green estimate per row.
    pub left: DMatrix<f64>,
    /// `d̂ × N`, one red estimate per column.
    pub right: DMatrix<f64>,
    pub singular_values: Vec<f64>,
}

impl Embedding {
    /// `Ĝ R̂ᵀ`, the best rank-`d̂` approximation of `A`.
    pub fn reconstruction(&self) -> DMatrix<f64> {
        &self.left * &self.right
    }
}

pub fn embed_adjacency(graph: &SampledGraph, d_hat: usize) -> Result<Embedding> {
    embed_adjacency_with(graph, d_hat, &SvdOptions::default())
}

pub fn embed_adjacency_with(graph: &SampledGraph, d_hat: usize, opts: &SvdOptions) -> Result<Embedding> {
    let t = truncated_svd(graph, d_hat, opts)?;
    let mut left = t.u;
    let mut right = t.v;
    for (k, s) in t.singular_values.iter().enumerate() {
        left.column_mut(k).scale_mut(s.sqrt());
        right.column_mut(k).scale_mut(s.sqrt());
    }
    Ok(Embedding {
        left,
        right: right.transpose(),
        singular_values: t.singular_values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionChoice {
    pub dim: usize,
    /// No gap anywhere: the spectrum is constant.
    pub flat: bool,
}

/// Largest-gap elbow over `k ≤ ⌈n/2⌉`, `n` the list length.
pub fn select_dimension(singular_values: &[f64]) -> Result<DimensionChoice> {
    let n = singular_values.len();
    if n == 0 {
        return invalid("empty spectrum");
    }
    let kmax = n.div_ceil(2).min(n - 1);
    let mut best = (1, 0.0);
    for k in 1..=kmax {
        let gap = singular_values[k - 1] - singular_values[k];
        if gap > best.1 {
            best = (k, gap);
        }
    }
    Ok(DimensionChoice {
        dim: best.0,
        flat: n > 1 && !(best.1 > 0.0),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralAverage {
    pub mean: Vec<f64>,
    /// Sample standard deviation across graphs (0 for a single graph).
    pub std: Vec<f64>,
}

/// Per-index mean and spread of `σ_k(A_l)/N_l` over independent graphs.
pub fn multi_graph_average(graphs: &[SampledGraph], k: usize) -> Result<SpectralAverage> {
    if graphs.is_empty() {
        return invalid("no graphs to average");
    }
    let spectra = graphs
        .par_iter()
        .map(|g| adjacency_spectrum(g, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(average_spectra(&spectra))
}

/// Mean and sample standard deviation of equally long spectra.
pub fn average_spectra(spectra: &[Vec<f64>]) -> SpectralAverage {
    let m = spectra.len() as f64;
    let k = spectra.first().map_or(0, Vec::len);
    let mean: Vec<f64> = (0..k).map(|i| spectra.iter().map(|s| s[i]).sum::<f64>() / m).collect();
    let std = (0..k)
        .map(|i| {
            if spectra.len() < 2 {
                return 0.0;
            }
            let ss: f64 = spectra.iter().map(|s| (s[i] - mean[i]).powi(2)).sum();
            (ss / (m - 1.0)).sqrt()
        })
        .collect();
    SpectralAverage { mean, std }
}

/// Largest singular value of a dense matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Out-degree and Laplacian on the `(g, r)` grid of a `d = 1` product.
#[derive(Clone, Debug, PartialEq)]
pub struct LaplacianApplication {
    pub d_out: GridField,
    /// `(L f)` at the cell centres, row-major with `g` as the slow axis.
    pub lf: Vec<f64>,
}

/// `d_out(s) = ρ(s) Λ (g_s · μ̃_R)` and `(L f)(s) = d_out(s) f(s) - ∫ h(s,t) f(t) dt`.
///
/// `f` holds values at the centres of the `n × n` grid over `(g, r)`,
/// row-major with `g` as the slow axis. Both marginals are tabulated on the
/// same cells and rescaled to their exact masses, and the same tables feed
/// both terms so that `L 1 = 0` up to rounding.
pub fn out_degree_and_laplacian_apply(
    model: &IntensityModel,
    f: &[f64],
    resolution: usize,
) -> Result<LaplacianApplication> {
    let (green, red) = match model {
        IntensityModel::Product { green, red } => (green, red),
        _ => return Err(IdpgError::NotProduct("the Laplacian needs a product intensity".into())),
    };
    if green.dim() != 1 {
        return invalid(format!("the Laplacian grid needs d = 1, got {}", green.dim()));
    }
    let n = resolution;
    if n == 0 || f.len() != n * n {
        return invalid(format!("expected {} values for resolution {n}, got {}", n * n, f.len()));
    }
    let tg = tabulate_marginal(green, n)?;
    let tr = tabulate_marginal(red, n)?;
    let h = 1.0 / n as f64;
    let x = |i: usize| (i as f64 + 0.5) * h;
    let (pg, pr) = (tg.values(), tr.values());
    let c_g: f64 = pg.iter().sum::<f64>() * h;
    let red_first: f64 = pr.iter().enumerate().map(|(j, v)| v * x(j)).sum::<f64>() * h;
    // Λ μ̃_R = c_G ∫ r ρ_R.
    let lambda_mu_r = c_g * red_first;
    let mut tf = 0.0;
    for i in 0..n {
        for j in 0..n {
            tf += pg[i] * pr[j] * x(j) * f[i * n + j];
        }
    }
    tf *= h * h;
    let mut d_out = vec![0.0; n * n];
    let mut lf = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let rho = pg[i] * pr[j];
            let k = i * n + j;
            d_out[k] = rho * x(i) * lambda_mu_r;
            lf[k] = d_out[k] * f[k] - rho * x(i) * tf;
        }
    }
    Ok(LaplacianApplication {
        d_out: GridField::from_values(2, n, MaskKind::Full, d_out)?,
        lf,
    })
}
