//! Command-line driver: load one config, derive all randomness from its
//! seed, run a subcommand, and write artifacts plus a manifest into the
//! output directory.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use treeflow::config::RunConfig;
use treeflow::diagnostics;
use treeflow::embed::{embed, foliation_rows, MonotoneFlowField, RescaledFlow};
use treeflow::enumerate::enumerate_gibbs_marginal;
use treeflow::export;
use treeflow::sde::{simulate_u_system, simulate_z, DiffusionConfig};
use treeflow::spde::{solve_flow, BrownianSheet, SheetConfig};
use treeflow::stats;
use treeflow::stream::{derive_seed, derive_stream};
use treeflow::tree::{sample_chain_from, sample_next, Generation};
use treeflow::Error;

#[derive(Parser)]
#[command(
    name = "treeflow",
    about = "samplers, flows, and diagnostics for critical branching genealogies",
    version
)]
struct Cli {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: $TREEFLOW_OUT or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the master seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the critical offspring law from the configured energies.
    SolveGibbs,
    /// Sample a generation chain and write it as CSV.
    SampleTree,
    /// Sample a chain, embed it, and export one flow graph.
    EmbedFlow {
        /// Start time in rescaled units.
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        /// End time in rescaled units (default: the flow horizon).
        #[arg(long)]
        t1: Option<f64>,
    },
    /// Track periodic population splits through a sampled tree.
    Foliation,
    /// Integrate the limit diffusions and export paths plus summaries.
    SimulateSde,
    /// Integrate the sheet-driven flow and export profile, trajectories, shocks.
    SimulateSpde,
    /// Two-sample comparison between the sheet flow and the limit system.
    Compare,
    /// Exact enumeration: kernel identities and finite-volume tree marginals.
    Enumerate {
        /// Largest tree order for the finite-volume table.
        #[arg(long, default_value_t = 10)]
        n_max: usize,
        /// Truncation depth of the compared marginals.
        #[arg(long, default_value_t = 1)]
        depth: usize,
    },
    /// Run the enumeration, sampler, and martingale diagnostics.
    Diagnose,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are configuration errors.
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.downcast_ref::<Error>() {
                Some(Error::BudgetExceeded(_)) => 2,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn out_dir(cli: &Cli) -> anyhow::Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .or_else(|| std::env::var_os("TREEFLOW_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    config: &RunConfig,
    params: serde_json::Value,
) -> anyhow::Result<()> {
    let manifest = export::Manifest::new(command, config.hash(), config.seed, params);
    export::write_json(&dir.join(format!("{command}-manifest.json")), &manifest)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = load_config(&cli)?;
    let dir = out_dir(&cli)?;
    let dist = config.model.distribution(1e-12)?;
    match cli.command {
        Command::SolveGibbs => {
            export::write_json(&dir.join("offspring.json"), &dist)?;
            write_manifest(&dir, "solve-gibbs", &config, serde_json::json!({}))?;
            println!(
                "p = {:?}\nrho = {}\nC = {}\nmu = {}",
                dist.p, dist.rho, dist.c, dist.mu
            );
        }
        Command::SampleTree => {
            let mut rng = derive_stream(config.seed, "chain", 0);
            let chain = sample_chain_from(
                initial_generation(&config)?,
                &dist,
                config.tree.generations,
                &mut rng,
            );
            export::write_chain_csv(&dir.join("chain.csv"), &chain)?;
            write_manifest(
                &dir,
                "sample-tree",
                &config,
                serde_json::json!({
                    "generations": config.tree.generations,
                    "final_size": chain.sizes().last(),
                }),
            )?;
            println!(
                "sampled {} generations, final size {}",
                chain.len() - 1,
                chain.sizes().last().unwrap()
            );
        }
        Command::EmbedFlow { t0, t1 } => {
            let mut rng = derive_stream(config.seed, "chain", 0);
            let chain = sample_chain_from(
                initial_generation(&config)?,
                &dist,
                config.tree.generations,
                &mut rng,
            );
            let flow = RescaledFlow::new(embed(&chain), config.tree.n, dist.mu)?;
            let t1 = t1.unwrap_or_else(|| flow.horizon());
            let graph = flow.graph(t0, t1)?;
            export::write_graph_csv(&dir.join("flow-graph.csv"), &graph)?;
            write_manifest(
                &dir,
                "embed-flow",
                &config,
                serde_json::json!({"t0": t0, "t1": t1, "z0": graph.z0(), "z1": graph.z1()}),
            )?;
            println!(
                "graph on [0, {}] -> [0, {}] with {} vertices",
                graph.z0(),
                graph.z1(),
                graph.vertices().len()
            );
        }
        Command::Foliation => {
            let mut rng = derive_stream(config.seed, "chain", 0);
            let chain = sample_chain_from(
                initial_generation(&config)?,
                &dist,
                config.tree.generations,
                &mut rng,
            );
            let flow = RescaledFlow::new(embed(&chain), config.tree.n, dist.mu)?;
            let rows = foliation_rows(
                &flow,
                config.tree.foliation_every,
                config.tree.foliation_parts,
                0,
            )?;
            export::write_foliation_csv(&dir.join("foliation.csv"), &rows)?;
            write_manifest(
                &dir,
                "foliation",
                &config,
                serde_json::json!({
                    "every": config.tree.foliation_every,
                    "parts": config.tree.foliation_parts,
                    "rows": rows.len(),
                }),
            )?;
            println!("wrote {} foliation rows", rows.len());
        }
        Command::SimulateSde => {
            let sde_config = DiffusionConfig::new(config.spde.dt, config.spde.t_max)?;
            for replica in 0..3u64 {
                let mut rng = derive_stream(config.seed, "sde-path", replica);
                let z = simulate_z(config.spde.z0, &sde_config, &mut rng)?;
                export::write_sde_paths_csv(
                    &dir.join(format!("sde-z-{replica}.csv")),
                    replica,
                    sde_config.dt,
                    &[z],
                )?;
                let mut rng = derive_stream(config.seed, "sde-upath", replica);
                let u = simulate_u_system(&config.tree.cuts, &sde_config, &mut rng)?;
                export::write_sde_paths_csv(
                    &dir.join(format!("sde-u-{replica}.csv")),
                    replica,
                    sde_config.dt,
                    &u,
                )?;
            }
            let replicas = config.diagnostics.replicas;
            let finals: Vec<f64> = (0..replicas as u64)
                .map(|r| {
                    let mut rng = derive_stream(config.seed, "sde-summary", r);
                    simulate_z(config.spde.z0, &sde_config, &mut rng).map(|p| *p.last().unwrap())
                })
                .collect::<treeflow::Result<_>>()?;
            let summary = serde_json::json!({
                "z0": config.spde.z0,
                "t_max": config.spde.t_max,
                "replicas": replicas,
                "mean_final": stats::mean(&finals),
                "se_final": stats::standard_error(&finals),
            });
            export::write_json(&dir.join("sde-summary.json"), &summary)?;
            write_manifest(&dir, "simulate-sde", &config, summary)?;
            println!("mean Z({}) = {:.6}", config.spde.t_max, stats::mean(&finals));
        }
        Command::SimulateSpde => {
            let sheet_seed = derive_seed(config.seed, "sheet-replica", 0);
            let mut sheet =
                BrownianSheet::new(SheetConfig::new(config.spde.dt, config.spde.dy)?, sheet_seed);
            let sol = solve_flow(
                &mut sheet,
                config.spde.z0,
                0.0,
                config.spde.t_max,
                config.spde.depth,
            )?;
            export::write_z_path_csv(&dir.join("spde-z.csv"), &sol)?;
            export::write_trajectory_csv(&dir.join("spde-trajectories.csv"), &sol)?;
            let (shocks, q) = sol.shocks(0.0, sol.t_end())?;
            export::write_shock_csv(&dir.join("spde-shocks.csv"), 0.0, sol.t_end(), &shocks)?;
            write_manifest(
                &dir,
                "simulate-spde",
                &config,
                serde_json::json!({
                    "dt": config.spde.dt, "dy": config.spde.dy, "depth": config.spde.depth,
                    "z0": config.spde.z0, "t_max": config.spde.t_max,
                    "shock_threshold": sol.shock_threshold, "shocks": shocks.len(), "q": q,
                }),
            )?;
            println!(
                "solved flow: {} shocks over [0, {}], Q = {q:.6}",
                shocks.len(),
                sol.t_end()
            );
        }
        Command::Compare => {
            let cuts = &config.tree.cuts;
            let ts = &config.diagnostics.t_list;
            let replicas = config.diagnostics.replicas;
            let level = config.diagnostics.ks_level;
            let z = *cuts.last().unwrap();
            let spde = diagnostics::spde_marginals(
                cuts,
                z,
                ts,
                replicas,
                config.spde.dt,
                config.spde.dy,
                config.seed,
            )?;
            let sde =
                diagnostics::sde_marginals(cuts, z, ts, replicas, config.spde.dt, config.seed ^ 0xa5a5)?;
            let mut reports = Vec::new();
            let mut all_pass = true;
            for (k, &cut) in cuts.iter().enumerate() {
                for (ti, &t) in ts.iter().enumerate() {
                    let name = format!("flow vs limit system at x={cut}, t={t}");
                    let rep = stats::ks_two_sample(&name, &spde[k][ti], &sde[k][ti], level)?;
                    println!(
                        "{name}: D = {:.5}, p = {:.5}, pass = {}",
                        rep.statistic, rep.p_value, rep.pass
                    );
                    all_pass &= rep.pass;
                    reports.push(rep);
                }
            }
            export::write_json(&dir.join("compare.json"), &reports)?;
            write_manifest(&dir, "compare", &config, serde_json::json!({"cells": reports.len()}))?;
            if !all_pass {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Enumerate { n_max, depth } => {
            let identities = diagnostics::check_enumeration_identities(
                &dist,
                config.diagnostics.k_max,
                config.diagnostics.max_tuples,
            )?;
            export::write_json(&dir.join("identities.json"), &identities)?;
            let energies = config
                .model
                .energies
                .clone()
                .ok_or_else(|| Error::Config("enumerate requires an energy model".into()))?;
            let beta = config.model.beta.unwrap_or(1.0);
            let spec = treeflow::EnergySpec::new(energies, beta);
            let mut table = Vec::new();
            for n in 3..=n_max {
                let rep = enumerate_gibbs_marginal(&spec, n, depth, 5_000_000)?;
                println!(
                    "N = {n}: TV = {:.6} over {} trees",
                    rep.total_variation, rep.trees_enumerated
                );
                table.push(serde_json::json!({
                    "n": n,
                    "trees": rep.trees_enumerated,
                    "tv": rep.total_variation,
                }));
            }
            export::write_json(&dir.join("thermodynamic-tv.json"), &table)?;
            write_manifest(
                &dir,
                "enumerate",
                &config,
                serde_json::json!({"n_max": n_max, "depth": depth}),
            )?;
        }
        Command::Diagnose => {
            let identities = diagnostics::check_enumeration_identities(
                &dist,
                config.diagnostics.k_max,
                config.diagnostics.max_tuples,
            )?;
            let exact_ok = identities.max_residual_size_mean < 1e-12
                && identities.max_residual_progeny_mean < 1e-12
                && identities.max_residual_share_martingale < 1e-12;
            println!(
                "enumeration identities: size {:.2e}, progeny {:.2e}, share {:.2e} -> {}",
                identities.max_residual_size_mean,
                identities.max_residual_progeny_mean,
                identities.max_residual_share_martingale,
                if exact_ok { "ok" } else { "FAIL" }
            );
            let g = Generation::initial(2)?;
            let support = treeflow::enumerate::enumerate_continuations(&g, &dist, 64)?;
            let mut counts = vec![0u64; support.len()];
            let mut rng = derive_stream(config.seed, "diagnose-gof", 0);
            let index: std::collections::HashMap<_, _> = support
                .iter()
                .enumerate()
                .map(|(i, (gen, _))| (gen.clone(), i))
                .collect();
            for _ in 0..100_000 {
                counts[index[&sample_next(&g, &dist, &mut rng)]] += 1;
            }
            let probs: Vec<f64> = support.iter().map(|(_, p)| *p).collect();
            let gof = stats::chi_square_gof(
                "sampler-vs-kernel",
                &counts,
                &probs,
                config.diagnostics.ks_level,
            )?;
            println!(
                "sampler GOF: chi2 = {:.3}, p = {:.5} -> {}",
                gof.statistic,
                gof.p_value,
                if gof.pass { "ok" } else { "FAIL" }
            );
            let sub = diagnostics::submartingale_check(&dist, 10, 5, 2000, config.seed)?;
            let sub_ok = sub
                .increments
                .iter()
                .all(|(inc, se)| (inc - dist.mu).abs() < 4.0 * se);
            println!(
                "submartingale drift vs mu = {:.4}: {}",
                dist.mu,
                if sub_ok { "ok" } else { "FAIL" }
            );
            let report = serde_json::json!({
                "identities": identities,
                "sampler_gof": gof,
                "submartingale": sub,
            });
            export::write_json(&dir.join("diagnose.json"), &report)?;
            write_manifest(&dir, "diagnose", &config, serde_json::json!({}))?;
            if !(exact_ok && gof.pass && sub_ok) {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn initial_generation(config: &RunConfig) -> treeflow::Result<Generation> {
    if config.tree.initial_size == 0 {
        Ok(Generation::root())
    } else {
        Generation::initial(config.tree.initial_size)
    }
}
