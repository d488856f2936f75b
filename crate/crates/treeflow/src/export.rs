//! Bit-stable artifact output: CSV schemas for chains, graphs, trajectories,
//! foliations and shocks, JSON for reports, and a run manifest next to every
//! artifact. Reals are written with the shortest round-trip decimal form, so
//! re-reading an artifact recovers the exact f64 values and reruns with the
//! same `(config, seed)` are byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::embed::FoliationRow;
use crate::error::Result;
use crate::graph::MonotoneGraph;
use crate::spde::{SheetFlowSolution, Shock};
use crate::tree::GenerationChain;

/// Provenance record written beside every artifact.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub crate_version: String,
    pub params: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config_hash: String, seed: u64, params: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config_hash,
            seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            params,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

/// Chain CSV: one row per vertex, `generation,vertex,parent` (1-based).
pub fn write_chain_csv(path: &Path, chain: &GenerationChain) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "generation,vertex,parent")?;
    for (m, gen) in chain.generations().iter().enumerate() {
        for (i, &p) in gen.parents().iter().enumerate() {
            writeln!(w, "{m},{},{p}", i + 1)?;
        }
    }
    Ok(())
}

/// Graph CSV: `s,x,y` per vertex with `s = x + y` the diagonal parameter.
pub fn write_graph_csv(path: &Path, graph: &MonotoneGraph) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "s,x,y")?;
    for p in graph.vertices() {
        writeln!(w, "{},{},{}", p.x + p.y, p.x, p.y)?;
    }
    Ok(())
}

/// Foliation CSV: `replica,t,trajectory_id,x0,value`.
pub fn write_foliation_csv(path: &Path, rows: &[FoliationRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "replica,t,trajectory_id,x0,value")?;
    for r in rows {
        writeln!(w, "{},{},{},{},{}", r.replica, r.t, r.trajectory_id, r.x0, r.value)?;
    }
    Ok(())
}

/// Profile CSV of a solved sheet flow: `t,z`.
pub fn write_z_path_csv(path: &Path, solution: &SheetFlowSolution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,z")?;
    for (step, z) in solution.z_path().iter().enumerate() {
        writeln!(w, "{},{z}", solution.t0 + step as f64 * solution.dt)?;
    }
    Ok(())
}

/// Trajectory CSV of a solved sheet flow: `t,x,u` for every grid level.
pub fn write_trajectory_csv(path: &Path, solution: &SheetFlowSolution) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,x,u")?;
    for step in 0..=solution.n_steps() {
        let t = solution.t0 + step as f64 * solution.dt;
        let row = solution.levels_at_step(step);
        for (j, &u) in row.iter().enumerate() {
            writeln!(w, "{t},{},{u}", solution.grid[j])?;
        }
    }
    Ok(())
}

/// Shock CSV: `s0,s1,x,jump`.
pub fn write_shock_csv(path: &Path, s0: f64, s1: f64, shocks: &[Shock]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "s0,s1,x,jump")?;
    for s in shocks {
        writeln!(w, "{s0},{s1},{},{}", s.x, s.jump)?;
    }
    Ok(())
}

/// Path CSV for the limit diffusions: `replica,t,k,value`.
pub fn write_sde_paths_csv(
    path: &Path,
    replica: u64,
    dt: f64,
    paths: &[Vec<f64>],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "replica,t,k,value")?;
    for (k, coord) in paths.iter().enumerate() {
        for (step, v) in coord.iter().enumerate() {
            writeln!(w, "{replica},{},{k},{v}", step as f64 * dt)?;
        }
    }
    Ok(())
}
