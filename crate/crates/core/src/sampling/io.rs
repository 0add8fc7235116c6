//! Graph JSON documents and plain edge lists.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::SampledGraph;
use crate::error::{io_err, IdpgError, Result};

pub fn write_graph_json(graph: &SampledGraph, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, graph)?;
    w.flush().map_err(io_err(path))
}

/// Reads a graph and checks its invariants.
pub fn read_graph_json(path: &Path) -> Result<SampledGraph> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let g: SampledGraph = serde_json::from_reader(BufReader::new(f))?;
    g.validate()?;
    Ok(g)
}

/// One `source target` pair per line.
pub fn write_edge_list(graph: &SampledGraph, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(f);
    for &(s, t) in &graph.edges {
        writeln!(w, "{s} {t}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Parses `source target` lines; blank lines and `#` comments are skipped.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut edges = Vec::new();
    for (k, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace().map(str::parse::<usize>);
        match (parts.next(), parts.next(), parts.next()) {
            (Some(Ok(s)), Some(Ok(t)), None) => edges.push((s, t)),
            _ => {
                return Err(IdpgError::InvalidParameter(format!(
                    "{}:{}: expected two node indices",
                    path.display(),
                    k + 1
                )))
            }
        }
    }
    Ok(edges)
}
