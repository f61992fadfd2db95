//! File formats and synthetic data.
//!
//! `fvecs` / `ivecs`: each record is a little-endian `i32` dimension `d`
//! followed by `d` little-endian `f32` (resp. `i32`) values. All records in
//! a file share the same `d`.
//!
//! Graph index files (`NSG1`), all integers little-endian `u32`:
//!
//! ```text
//! "NSG1" version=1 n d m nav
//! n records: k_i id_0 .. id_{k_i-1}
//! ```
//!
//! `m` is the declared maximum out-degree. `nav` is the navigating node, or
//! `0xFFFF_FFFF` for graphs without one (kNN graphs, MRNG, RNG).

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::{Dataset, DirectedGraph, Error, NsgIndex, PointId, Result};

pub const INDEX_MAGIC: &[u8; 4] = b"NSG1";
pub const INDEX_VERSION: u32 = 1;
pub const NO_NAVIGATING_NODE: u32 = 0xFFFF_FFFF;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads one vecs file into rows of raw 4-byte words.
fn read_vecs_words(path: &Path) -> Result<(usize, Vec<[u8; 4]>)> {
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_vecs_words(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn decode_vecs_words(bytes: &[u8]) -> Result<(usize, Vec<[u8; 4]>)> {
    if bytes.is_empty() {
        return Err(Error::format("empty vecs file"));
    }
    let mut dim: Option<usize> = None;
    let mut words = Vec::with_capacity(bytes.len() / 4);
    let mut pos = 0usize;
    let mut record = 0usize;
    while pos < bytes.len() {
        let header: [u8; 4] = bytes
            .get(pos..pos + 4)
            .and_then(|s| s.try_into().ok())
            .ok_or_else(|| Error::format(format!("truncated header in record {record}")))?;
        let d = i32::from_le_bytes(header);
        if d <= 0 {
            return Err(Error::format(format!("record {record} declares dimension {d}")));
        }
        let d = d as usize;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::format(format!(
                    "record {record} declares dimension {d}, earlier records {expected}"
                )))
            }
            _ => {}
        }
        pos += 4;
        let body = bytes
            .get(pos..pos + 4 * d)
            .ok_or_else(|| Error::format(format!("record {record} truncated")))?;
        words.extend(body.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]));
        pos += 4 * d;
        record += 1;
    }
    Ok((dim.unwrap_or(0), words))
}

/// Parses `fvecs` bytes.
pub fn decode_fvecs(bytes: &[u8]) -> Result<Dataset> {
    let (d, words) = decode_vecs_words(bytes)?;
    let data = words.into_iter().map(f32::from_le_bytes).collect();
    Dataset::new(data, d).map_err(|e| Error::format(e.to_string()))
}

pub fn encode_fvecs(dataset: &Dataset) -> Vec<u8> {
    let d = dataset.dim();
    let mut out = Vec::with_capacity(dataset.len() * (4 + 4 * d));
    for p in dataset.iter() {
        out.extend_from_slice(&(d as i32).to_le_bytes());
        for v in p {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_fvecs(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let (d, words) = read_vecs_words(path)?;
    let data = words.into_iter().map(f32::from_le_bytes).collect();
    Dataset::new(data, d).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_fvecs(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_fvecs(dataset))
}

pub fn read_ivecs(path: impl AsRef<Path>) -> Result<Vec<Vec<i32>>> {
    let (d, words) = read_vecs_words(path.as_ref())?;
    Ok(words
        .chunks_exact(d)
        .map(|row| row.iter().map(|w| i32::from_le_bytes(*w)).collect())
        .collect())
}

pub fn encode_ivecs(rows: &[Vec<i32>]) -> Result<Vec<u8>> {
    let d = rows.first().map(Vec::len).unwrap_or(0);
    if d == 0 || rows.iter().any(|r| r.len() != d) {
        return Err(Error::usage("ivecs rows must be non-empty and equally long"));
    }
    let mut out = Vec::with_capacity(rows.len() * (4 + 4 * d));
    for row in rows {
        out.extend_from_slice(&(d as i32).to_le_bytes());
        for v in row {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_ivecs(rows: &[Vec<i32>], path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ivecs(rows)?)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Synthetic point distributions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyntheticKind {
    /// Every coordinate uniform on `[0, 1)`.
    Uniform,
    /// Every coordinate normal with mean 0 and the given standard deviation.
    Gaussian { std_dev: f32 },
}

impl SyntheticKind {
    /// Normal with standard deviation 3.
    pub const GAUSSIAN: SyntheticKind = SyntheticKind::Gaussian { std_dev: 3.0 };
}

/// `n` points of dimension `d`, deterministic in `seed`.
pub fn generate_synthetic(kind: SyntheticKind, n: usize, d: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::usage("n and d must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = match kind {
        SyntheticKind::Uniform => (0..n * d).map(|_| rng.gen::<f32>()).collect(),
        SyntheticKind::Gaussian { std_dev } => {
            let normal = Normal::new(0.0f32, std_dev)
                .map_err(|e| Error::usage(format!("bad standard deviation: {e}")))?;
            (0..n * d).map(|_| normal.sample(&mut rng)).collect()
        }
    };
    Dataset::new(data, d)
}

/// A graph as stored in an index file.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub graph: DirectedGraph,
    pub dim: usize,
    pub navigating_node: Option<PointId>,
}

/// Serializes a graph. The graph must carry a declared max out-degree.
pub fn encode_graph(
    graph: &DirectedGraph,
    dim: usize,
    navigating_node: Option<PointId>,
) -> Result<Vec<u8>> {
    let m = graph
        .declared_max_out_degree()
        .ok_or_else(|| Error::usage("graph has no declared max out-degree"))?;
    let n = u32::try_from(graph.len()).map_err(|_| Error::usage("graph too large"))?;
    let dim = u32::try_from(dim).map_err(|_| Error::usage("dimension too large"))?;
    let nav = match navigating_node {
        Some(v) if v as usize >= graph.len() => {
            return Err(Error::usage(format!("navigating node {v} out of range")))
        }
        Some(v) => v,
        None => NO_NAVIGATING_NODE,
    };
    let mut out = Vec::with_capacity(24 + 4 * (graph.len() + graph.edge_count()));
    out.extend_from_slice(INDEX_MAGIC);
    for v in [INDEX_VERSION, n, dim, m, nav] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for row in graph.rows() {
        out.extend_from_slice(&(row.len() as u32).to_le_bytes());
        for &u in row {
            out.extend_from_slice(&u.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u32(&mut self, what: &str) -> Result<u32> {
        let word = self
            .bytes
            .get(self.pos..self.pos + 4)
            .ok_or_else(|| Error::format(format!("index truncated while reading {what}")))?;
        self.pos += 4;
        Ok(u32::from_le_bytes(word.try_into().unwrap()))
    }
}

pub fn decode_graph(bytes: &[u8]) -> Result<GraphFile> {
    if bytes.len() < 4 || &bytes[..4] != INDEX_MAGIC {
        return Err(Error::format("bad magic, not an NSG1 index file"));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u32("version")?;
    if version != INDEX_VERSION {
        return Err(Error::format(format!("unsupported index version {version}")));
    }
    let n = cur.u32("n")? as usize;
    let dim = cur.u32("d")? as usize;
    let m = cur.u32("m")?;
    let nav = cur.u32("navigating node")?;
    if n == 0 || dim == 0 {
        return Err(Error::format(format!("index declares n={n}, d={dim}")));
    }
    // every record needs at least its length word
    if n > (bytes.len() - cur.pos) / 4 {
        return Err(Error::format(format!("index truncated: {n} records declared")));
    }
    let mut rows = Vec::with_capacity(n);
    for v in 0..n {
        let k = cur.u32("out-degree")?;
        if k > m {
            return Err(Error::Corruption(format!(
                "node {v} has out-degree {k} above declared maximum {m}"
            )));
        }
        let mut row = Vec::with_capacity(k as usize);
        for _ in 0..k {
            row.push(cur.u32("neighbor id")?);
        }
        rows.push(row);
    }
    if cur.pos != bytes.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after last record",
            bytes.len() - cur.pos
        )));
    }
    let navigating_node = match nav {
        NO_NAVIGATING_NODE => None,
        v if v as usize >= n => {
            return Err(Error::Corruption(format!(
                "navigating node {v} out of range (n={n})"
            )))
        }
        v => Some(v),
    };
    let mut graph = DirectedGraph::from_adjacency(rows)?;
    graph.declare_max_out_degree(m)?;
    Ok(GraphFile {
        graph,
        dim,
        navigating_node,
    })
}

pub fn save_graph(
    graph: &DirectedGraph,
    dim: usize,
    navigating_node: Option<PointId>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_bytes(path.as_ref(), &encode_graph(graph, dim, navigating_node)?)
}

pub fn load_graph(path: impl AsRef<Path>) -> Result<GraphFile> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    open(path)?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    decode_graph(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corruption(m) => Error::Corruption(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn encode_index(index: &NsgIndex) -> Result<Vec<u8>> {
    encode_graph(&index.graph, index.dim, Some(index.navigating_node))
}

pub fn decode_index(bytes: &[u8]) -> Result<NsgIndex> {
    let file = decode_graph(bytes)?;
    let nav = file
        .navigating_node
        .ok_or_else(|| Error::format("index file has no navigating node"))?;
    NsgIndex::new(file.graph, nav, file.dim)
}

pub fn save_index(index: &NsgIndex, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &encode_index(index)?)
}

pub fn load_index(path: impl AsRef<Path>) -> Result<NsgIndex> {
    let path = path.as_ref();
    let file = load_graph(path)?;
    let nav = file.navigating_node.ok_or_else(|| {
        Error::Format(format!("{}: file has no navigating node", path.display()))
    })?;
    NsgIndex::new(file.graph, nav, file.dim)
}

/// True when `path` names a missing file; used by callers to word errors.
pub fn is_not_found(err: &Error) -> bool {
    matches!(err, Error::Io { source, .. } if source.kind() == ErrorKind::NotFound)
}
