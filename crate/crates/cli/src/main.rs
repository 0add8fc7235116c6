//! `idpg`: command-line front end for experiments, sampling, expectations,
//! heat maps, spectra, PDE evolution and food webs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use idpg_core::expectations::{expected_edges, EdgeRule};
use idpg_core::experiments::{band_checks, run_experiment, write_results, ExperimentConfig, OutputFormat};
use idpg_core::foodweb::{
    asymmetric_edge_intensity, expected_guild_edges, fit_guild_centroids, guild_mixture, FitOptions,
    FoodWebConfig,
};
use idpg_core::heat::bound_heat_grid;
use idpg_core::latent::{load_model, moments, IntensityModel, QuadratureSpec};
use idpg_core::pde::{evolve, BoundaryCondition, EvolveOptions, PdeState, RegimeSpec};
use idpg_core::sampling::{
    read_graph_json, sample_asymmetric_ephemeral, sample_ephemeral, sample_lifetime, sample_perennial,
    write_edge_list, write_graph_json, SampledGraph,
};
use idpg_core::spectral::{adjacency_spectrum, desire_spectrum, select_dimension};
use idpg_core::SeededRng;

/// Exit code when `--check` finds a value outside its acceptance band.
const BAND_VIOLATION: u8 = 2;

#[derive(Parser)]
#[command(name = "idpg", version, about = "Intensity dot product graph toolkit")]
struct Cli {
    /// Worker threads; defaults to IDPG_THREADS, then to all cores.
    #[arg(long, global = true, env = "IDPG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Perennial,
    PerennialLoops,
    Ephemeral,
    Lifetime,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its result table.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Overrides the config's root seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Exit with status 2 if an acceptance band is violated.
        #[arg(long)]
        check: bool,
    },
    /// Sample one graph from a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "perennial")]
        rule: Rule,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        /// Graph JSON output.
        #[arg(long)]
        out: PathBuf,
        /// Also write a plain edge list.
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Closed-form expected edge counts for a product model.
    Expect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        window: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Tabulate the bound heat of a product model.
    Heat {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        /// Grid header path; values go to a sibling `.bin` file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Desire spectrum of a model, or the scaled adjacency spectrum of a graph.
    Spectral {
        #[arg(long, conflicts_with = "graph")]
        model: Option<PathBuf>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evolve a product model's marginals and report snapshots.
    Pde {
        #[arg(long)]
        model: PathBuf,
        /// Regime as JSON, e.g. '{"kind":"diffusion","nu":0.01}'.
        #[arg(long)]
        regime: String,
        /// Boundary condition as JSON.
        #[arg(long, default_value = r#"{"kind":"reflecting"}"#)]
        bc: String,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long)]
        t_end: f64,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 10)]
        snapshot_every: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Guild edge matrices and species-labelled graphs for a food web.
    Foodweb {
        #[arg(long)]
        config: PathBuf,
        /// Refit centroids to the config's target affinity.
        #[arg(long)]
        fit: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of sampled graphs of each kind.
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn model_summary(model: &IntensityModel, seed: u64) -> Result<idpg_core::latent::MomentSummary> {
    Ok(moments(model, QuadratureSpec::default_for(model.dim(), Some(seed)))?)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Experiment {
            config,
            out,
            format,
            seed,
            check,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.root_seed = s;
            }
            let base = config.parent().unwrap_or(Path::new("."));
            let table = run_experiment(&cfg, base)?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let (fmt, ext) = match format {
                Format::Csv => (OutputFormat::Csv, "csv"),
                Format::Json => (OutputFormat::Json, "json"),
            };
            let path = out.join(format!("{}.{ext}", cfg.kind.name()));
            write_results(&table, &path, fmt)?;
            println!("wrote {}", path.display());
            let mut ok = true;
            for b in band_checks(&table) {
                let verdict = if b.pass { "ok" } else { "VIOLATION" };
                println!("{verdict}: {} = {:.6} (band [{}, {}])", b.name, b.value, b.lo, b.hi);
                ok &= b.pass;
            }
            if check && !ok {
                return Ok(ExitCode::from(BAND_VIOLATION));
            }
        }
        Command::Sample {
            model,
            rule,
            seed,
            eta,
            window,
            out,
            edges,
        } => {
            let m = load_model(&model)?;
            let mut rng = SeededRng::new(seed, 0);
            let g: SampledGraph = match rule {
                Rule::Perennial => sample_perennial(&m, &mut rng, false)?,
                Rule::PerennialLoops => sample_perennial(&m, &mut rng, true)?,
                Rule::Ephemeral => sample_ephemeral(&m, &mut rng)?,
                Rule::Lifetime => sample_lifetime(&m, eta, window, true, &mut rng)?,
            };
            write_graph_json(&g, &out)?;
            if let Some(p) = edges {
                write_edge_list(&g, &p)?;
            }
            println!("{} nodes, {} edges", g.node_count(), g.edge_count());
        }
        Command::Expect {
            model,
            eta,
            window,
            seed,
        } => {
            let s = model_summary(&load_model(&model)?, seed)?;
            let lifetime = EdgeRule::Lifetime {
                eta,
                window,
                self_pairs: true,
            };
            let v = json!({
                "lambda": s.lambda,
                "affinity": s.affinity(),
                "perennial_distinct": expected_edges(&s, EdgeRule::PerennialDistinct)?,
                "perennial_with_loops": expected_edges(&s, EdgeRule::PerennialWithLoops)?,
                "ephemeral": expected_edges(&s, EdgeRule::Ephemeral)?,
                "asymmetric_ephemeral": expected_edges(&s, EdgeRule::AsymmetricEphemeral)?,
                "lifetime": expected_edges(&s, lifetime)?,
            });
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::Heat { model, resolution, out } => {
            let grid = bound_heat_grid(&load_model(&model)?, resolution)?;
            grid.save(&out)?;
            println!("total bound heat {:.6e}", grid.total());
        }
        Command::Spectral { model, graph, k, seed } => {
            let v = match (model, graph) {
                (Some(m), _) => {
                    let s = desire_spectrum(&model_summary(&load_model(&m)?, seed)?)?;
                    json!({"desire_singular_values": s.singular_values, "rank_bound": s.rank_bound})
                }
                (None, Some(g)) => {
                    let sv = adjacency_spectrum(&read_graph_json(&g)?, k)?;
                    let dim = select_dimension(&sv)?;
                    json!({"scaled_singular_values": sv, "selected_dimension": dim.dim})
                }
                (None, None) => bail!("pass --model or --graph"),
            };
            println!("{}", serde_json::to_string_pretty(&v)?);
        }
        Command::Pde {
            model,
            regime,
            bc,
            resolution,
            t_end,
            dt,
            snapshot_every,
            out,
        } => {
            let regime: RegimeSpec = serde_json::from_str(&regime).context("parsing --regime")?;
            let bc: BoundaryCondition = serde_json::from_str(&bc).context("parsing --bc")?;
            let state = PdeState::from_model(&load_model(&model)?, resolution, bc, regime)?;
            let opts = EvolveOptions {
                t_end,
                dt,
                snapshot_every,
                keep_fields: false,
            };
            let (_, traj) = evolve(&state, &opts)?;
            write_json(&out, &json!({"steps": traj.steps, "snapshots": traj.snapshots}))?;
            println!("{} steps, {} snapshots", traj.steps, traj.snapshots.len());
        }
        Command::Foodweb {
            config,
            fit,
            seed,
            samples,
            out,
        } => foodweb(&config, fit, seed, samples, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn foodweb(config: &Path, fit: bool, seed: u64, samples: usize, out: &Path) -> Result<()> {
    let cfg = FoodWebConfig::load(config)?;
    let mut guilds = cfg.guild_specs();
    if fit {
        let Some(target) = cfg.target() else {
            bail!("--fit needs target_affinity in the config");
        };
        let d = guilds[0].green.mean.len();
        let opts = FitOptions {
            seed,
            ..FitOptions::default()
        };
        let f = fit_guild_centroids(&target, d, &opts)?;
        println!("centroid fit rmse {:.3e} (converged: {})", f.rmse, f.converged);
        for ((g, mg), mr) in guilds.iter_mut().zip(f.green).zip(f.red) {
            g.green.mean = mg;
            g.red.mean = mr;
        }
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let lambda: f64 = guilds.iter().map(|g| g.weight()).sum();
    let d = guilds[0].green.mean.len();
    let m = expected_guild_edges(&guilds, lambda, QuadratureSpec::default_for(d, Some(seed)))?;
    m.write_csv(&out.join("expected_edges.csv"), false)?;
    m.write_csv(&out.join("affinity.csv"), true)?;
    let mixture = guild_mixture(&guilds)?;
    let asym = asymmetric_edge_intensity(&guilds)?;
    for s in 0..samples {
        let mut rng = SeededRng::new(seed, s as u64);
        write_graph_json(&sample_perennial(&mixture, &mut rng, false)?, &out.join(format!("perennial_{s}.json")))?;
        let g = sample_asymmetric_ephemeral(&asym.source, &asym.target, asym.lambda, &mut rng)?;
        write_graph_json(&g, &out.join(format!("asymmetric_{s}.json")))?;
    }
    println!("lambda {lambda:.6}, wrote {}", out.display());
    Ok(())
}
