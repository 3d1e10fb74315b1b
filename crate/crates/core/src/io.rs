//! File formats: the edge-list network text format, the packed binary
//! format, ground-truth and results records (JSON), and ingestion of
//! external edge lists.
//!
//! Text network format (bit-exact round trip):
//! ```text
//! N M
//! layer 1
//! i j
//! ...
//! layer 2
//! ...
//! ```
//! with one `i j` pair per edge, 1-based, i < j, ascending. Binary format:
//! magic `PNETB001`, little-endian u32 N and M, then per layer the upper
//! triangle packed LSB-first in node-pair order, padded to a byte boundary.

use crate::error::{Error, Result};
use crate::model::{layer_pairs, n_node_pairs, BlockParams, Membership, MultilayerNetwork, blocks};
use crate::netgen::GroundTruth;
use crate::metrics::EvalReport;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const BINARY_MAGIC: &[u8; 8] = b"PNETB001";

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

pub fn write_network_text<W: Write>(net: &MultilayerNetwork, mut w: W) -> Result<()> {
    let n = net.n_nodes();
    writeln!(w, "{} {}", n, net.n_layers())?;
    for b in 0..net.n_layers() {
        writeln!(w, "layer {}", b + 1)?;
        for i in 0..n {
            for j in (i + 1)..n {
                if net.edge(b, i, j) {
                    writeln!(w, "{} {}", i + 1, j + 1)?;
                }
            }
        }
    }
    Ok(())
}

pub fn save_network_text(net: &MultilayerNetwork, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_network_text(net, BufWriter::new(file))
}

pub fn read_network_text<R: Read>(r: R) -> Result<MultilayerNetwork> {
    let reader = BufReader::new(r);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Parse { line: 1, msg: "empty input".into() })?;
    let header = header?;
    let mut it = header.split_whitespace();
    let n: usize = parse_field(it.next(), 1, "node count N")?;
    let m: usize = parse_field(it.next(), 1, "layer count M")?;
    if it.next().is_some() {
        return Err(Error::Parse { line: 1, msg: "header must be exactly 'N M'".into() });
    }

    let mut net = MultilayerNetwork::empty(n, m);
    let mut current_layer: Option<usize> = None;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(rest) = trimmed.strip_prefix("layer ") {
            let b: usize = rest.trim().parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad layer header '{trimmed}'"),
            })?;
            if b < 1 || b > m {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("layer {b} out of range 1..={m}"),
                });
            }
            current_layer = Some(b - 1);
            continue;
        }
        let b = current_layer.ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "edge line before any 'layer b' header".into(),
        })?;
        let mut it = trimmed.split_whitespace();
        let i: usize = parse_field(it.next(), line_no, "edge endpoint i")?;
        let j: usize = parse_field(it.next(), line_no, "edge endpoint j")?;
        if it.next().is_some() {
            return Err(Error::Parse { line: line_no, msg: "edge line must be 'i j'".into() });
        }
        if i < 1 || j < 1 || i > n || j > n || i >= j {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("edge ({i}, {j}) must satisfy 1 <= i < j <= {n}"),
            });
        }
        net.set_edge(b, i - 1, j - 1, true);
    }
    Ok(net)
}

pub fn load_network_text(path: &Path) -> Result<MultilayerNetwork> {
    read_network_text(std::fs::File::open(path)?)
}

fn parse_field<T: std::str::FromStr>(field: Option<&str>, line: usize, what: &str) -> Result<T> {
    field
        .ok_or_else(|| Error::Parse { line, msg: format!("missing {what}") })?
        .parse()
        .map_err(|_| Error::Parse { line, msg: format!("unparseable {what}") })
}

// ---------------------------------------------------------------------------
// Binary format
// ---------------------------------------------------------------------------

pub fn write_network_binary<W: Write>(net: &MultilayerNetwork, mut w: W) -> Result<()> {
    let n = net.n_nodes();
    let m = net.n_layers();
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(n as u32).to_le_bytes())?;
    w.write_all(&(m as u32).to_le_bytes())?;
    let bytes_per_layer = n_node_pairs(n).div_ceil(8);
    let mut buf = vec![0u8; bytes_per_layer];
    for b in 0..m {
        buf.iter_mut().for_each(|x| *x = 0);
        let mut p = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                if net.edge(b, i, j) {
                    buf[p / 8] |= 1 << (p % 8);
                }
                p += 1;
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn save_network_binary(net: &MultilayerNetwork, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    write_network_binary(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_network_binary<R: Read>(mut r: R) -> Result<MultilayerNetwork> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != BINARY_MAGIC {
        return Err(Error::Parse { line: 0, msg: "bad magic bytes (not a network binary)".into() });
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let m = u32::from_le_bytes(word) as usize;
    let bytes_per_layer = n_node_pairs(n).div_ceil(8);
    let mut net = MultilayerNetwork::empty(n, m);
    let mut buf = vec![0u8; bytes_per_layer];
    for b in 0..m {
        r.read_exact(&mut buf)?;
        let mut p = 0usize;
        for i in 0..n {
            for j in (i + 1)..n {
                if buf[p / 8] & (1 << (p % 8)) != 0 {
                    net.set_edge(b, i, j, true);
                }
                p += 1;
            }
        }
    }
    Ok(net)
}

pub fn load_network_binary(path: &Path) -> Result<MultilayerNetwork> {
    read_network_binary(std::fs::File::open(path)?)
}

/// Load a network by extension: `.bin` binary, anything else text.
pub fn load_network_auto(path: &Path) -> Result<MultilayerNetwork> {
    if path.extension().and_then(|e| e.to_str()) == Some("bin") {
        load_network_binary(path)
    } else {
        load_network_text(path)
    }
}

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

/// Serializable ground-truth record. The edge-correlation matrix is stored
/// as summary metadata (pattern statistics), not entry by entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthFile {
    pub n_nodes: usize,
    pub n_layers: usize,
    pub n_communities: usize,
    /// 0-based community labels.
    pub membership: Vec<usize>,
    /// Per unordered block (k <= l in `blocks` order): the mean vector.
    pub mu: Vec<Vec<f64>>,
    /// Per unordered block: the correlation matrix, row-major.
    pub sigma: Vec<Vec<f64>>,
    pub edge_corr: EdgeCorrSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeCorrSummary {
    pub dim: usize,
    pub target_density: f64,
    pub nnz_offdiag: usize,
    pub shrink_applied: f64,
    pub lambda_min: f64,
    pub seed: u64,
}

impl GroundTruthFile {
    pub fn from_truth(gt: &GroundTruth, n_nodes: usize) -> Self {
        let k = gt.theta.n_communities();
        let m = gt.theta.n_layers();
        let mut mu = Vec::new();
        let mut sigma = Vec::new();
        for (a, b) in blocks(k) {
            mu.push(gt.theta.mu_block(a, b).to_vec());
            sigma.push(gt.theta.sigma_block(a, b).iter().cloned().collect());
        }
        GroundTruthFile {
            n_nodes,
            n_layers: m,
            n_communities: k,
            membership: gt.membership.as_slice().to_vec(),
            mu,
            sigma,
            edge_corr: EdgeCorrSummary {
                dim: gt.edge_corr.dim(),
                target_density: gt.edge_corr.target_density,
                nnz_offdiag: gt.edge_corr.nnz_offdiag(),
                shrink_applied: gt.edge_corr.shrink_applied,
                lambda_min: gt.edge_corr.lambda_min,
                seed: gt.edge_corr.seed,
            },
        }
    }

    pub fn membership(&self) -> Result<Membership> {
        Membership::new(self.membership.clone(), self.n_communities)
    }

    pub fn theta(&self) -> Result<BlockParams> {
        let k = self.n_communities;
        let m = self.n_layers;
        let mut theta = BlockParams::identity(k, m);
        for (idx, (a, b)) in blocks(k).enumerate() {
            let mu = self.mu.get(idx).ok_or_else(|| Error::Parse {
                line: 0,
                msg: "truth file missing a mu block".into(),
            })?;
            let flat = self.sigma.get(idx).ok_or_else(|| Error::Parse {
                line: 0,
                msg: "truth file missing a sigma block".into(),
            })?;
            if mu.len() != m || flat.len() != m * m {
                return Err(Error::Parse { line: 0, msg: "truth block has wrong shape".into() });
            }
            let sig = nalgebra::DMatrix::from_row_slice(m, m, flat);
            theta.set_block(a, b, mu, sig);
        }
        Ok(theta)
    }

    /// Off-diagonal supports of the stored correlation blocks.
    pub fn supports(&self) -> Result<Vec<crate::model::SupportSet>> {
        let theta = self.theta()?;
        let m = self.n_layers;
        Ok(blocks(self.n_communities)
            .map(|(a, b)| {
                let sig = theta.sigma_block(a, b);
                crate::model::SupportSet::from_pairs(
                    layer_pairs(m).filter(|&(x, y)| sig[(x, y)].abs() > 1e-12),
                    m,
                )
                .expect("pairs in range")
            })
            .collect())
    }
}

pub fn save_truth(gt: &GroundTruth, n_nodes: usize, path: &Path) -> Result<()> {
    let file = GroundTruthFile::from_truth(gt, n_nodes);
    let json = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Numerical(format!("truth serialization failed: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_truth(path: &Path) -> Result<GroundTruthFile> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Parse { line: 0, msg: format!("truth file: {e}") })
}

// ---------------------------------------------------------------------------
// Results records
// ---------------------------------------------------------------------------

/// Self-describing record of one fit, replayable from the config echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub version: String,
    pub seed: u64,
    pub wall_secs: f64,
    pub config_echo: serde_json::Value,
    pub final_loglik: f64,
    pub converged: bool,
    pub outer_iterations: usize,
    pub restart_index: usize,
    pub membership: Vec<usize>,
    pub n_communities: usize,
    pub n_layers: usize,
    /// Per unordered block mean vectors / row-major correlation matrices.
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
    /// Estimated supports as (b, d) lists per block, when support estimation
    /// ran.
    pub estimated_supports: Option<Vec<Vec<(usize, usize)>>>,
    pub eval: Option<EvalReport>,
}

impl ResultsRecord {
    pub fn theta(&self) -> Result<BlockParams> {
        let k = self.n_communities;
        let m = self.n_layers;
        let mut theta = BlockParams::identity(k, m);
        for (idx, (a, b)) in blocks(k).enumerate() {
            let sig = nalgebra::DMatrix::from_row_slice(m, m, &self.sigma[idx]);
            theta.set_block(a, b, &self.mu[idx], sig);
        }
        Ok(theta)
    }

    pub fn membership(&self) -> Result<Membership> {
        Membership::new(self.membership.clone(), self.n_communities)
    }
}

pub fn save_results(record: &ResultsRecord, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Numerical(format!("results serialization failed: {e}")))?;
    std::fs::write(path, json)?;
    Ok(())
}

pub fn load_results(path: &Path) -> Result<ResultsRecord> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Parse { line: 0, msg: format!("results file: {e}") })
}

// ---------------------------------------------------------------------------
// External edge-list ingestion
// ---------------------------------------------------------------------------

/// Expected shape of an external edge list.
#[derive(Debug, Clone, Copy)]
pub struct LayerSpec {
    pub n_nodes: usize,
    pub n_layers: usize,
}

/// Warnings produced while ingesting.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub duplicate_edges: usize,
    pub self_loops_skipped: usize,
}

/// Ingest a whitespace-separated `layer i j` edge list (1-based indices).
/// Reversed pairs are normalized, duplicates deduplicated (counted in the
/// report), self loops skipped with a warning count, and out-of-range
/// indices rejected with their line number.
pub fn ingest_edge_list<R: Read>(r: R, spec: LayerSpec) -> Result<(MultilayerNetwork, IngestReport)> {
    let reader = BufReader::new(r);
    let mut net = MultilayerNetwork::empty(spec.n_nodes, spec.n_layers);
    let mut report = IngestReport::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let layer: usize = parse_field(it.next(), line_no, "layer id")?;
        let i: usize = parse_field(it.next(), line_no, "node i")?;
        let j: usize = parse_field(it.next(), line_no, "node j")?;
        if it.next().is_some() {
            return Err(Error::Parse { line: line_no, msg: "expected 'layer i j'".into() });
        }
        if layer < 1 || layer > spec.n_layers {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("layer {layer} out of range 1..={}", spec.n_layers),
            });
        }
        if i < 1 || j < 1 || i > spec.n_nodes || j > spec.n_nodes {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("node index out of range 1..={}", spec.n_nodes),
            });
        }
        if i == j {
            report.self_loops_skipped += 1;
            continue;
        }
        let (a, b) = if i < j { (i - 1, j - 1) } else { (j - 1, i - 1) };
        if net.edge(layer - 1, a, b) {
            report.duplicate_edges += 1;
        } else {
            net.set_edge(layer - 1, a, b, true);
        }
    }
    Ok((net, report))
}

pub fn ingest_edge_list_path(path: &Path, spec: LayerSpec) -> Result<(MultilayerNetwork, IngestReport)> {
    ingest_edge_list(std::fs::File::open(path)?, spec)
}
