//! NSG construction: a degree-capped, connected MRNG approximation.
//!
//! Starting from a kNN graph, the builder
//!
//! 1. picks a navigating node: the search result for the dataset centroid,
//! 2. for every node, searches the kNN graph for that node from the
//!    navigating node, takes every node whose distance was computed plus the
//!    node's own kNN list as candidates, and keeps at most `m` of them with
//!    the MRNG selection rule,
//! 3. grows a DFS tree from the navigating node and links every node the tree
//!    misses to its approximate nearest in-tree node.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{sort_neighbors, Neighbor};
use crate::knn::KnnGraph;
use crate::search::{SearchParams, Searcher};
use crate::{mrng, par, Dataset, DirectedGraph, Error, PointId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildParams {
    /// Pool size of the searches run during construction.
    pub l_build: usize,
    /// Out-degree cap applied during selection.
    pub m: usize,
    /// Candidates kept (nearest first) before selection; `None` means
    /// `max(l_build, 2m)`.
    pub candidate_cap: Option<usize>,
    pub seed: u64,
    pub parallel: bool,
}

impl BuildParams {
    pub fn new(l_build: usize, m: usize, seed: u64) -> Self {
        BuildParams {
            l_build,
            m,
            candidate_cap: None,
            seed,
            parallel: true,
        }
    }

    pub fn effective_candidate_cap(&self) -> usize {
        self.candidate_cap
            .unwrap_or_else(|| self.l_build.max(2 * self.m))
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::usage("m (max out-degree) must be at least 1"));
        }
        if self.l_build == 0 {
            return Err(Error::usage("l_build must be at least 1"));
        }
        if self.candidate_cap == Some(0) {
            return Err(Error::usage("candidate cap must be at least 1"));
        }
        Ok(())
    }
}

/// Construction record kept alongside a freshly built index. Not persisted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildInfo {
    pub params: BuildParams,
    /// Neighbors per node in the source kNN graph.
    pub knn_k: usize,
    /// Largest out-degree after selection, before connectivity repair.
    pub pre_repair_max_out_degree: usize,
    pub repair_edges: usize,
    /// Nodes whose out-degree exceeds `m` because of repair edges.
    pub widened_nodes: Vec<PointId>,
    pub dataset_fingerprint: u64,
}

/// A searchable graph with its fixed entry node.
#[derive(Debug, Clone, PartialEq)]
pub struct NsgIndex {
    pub graph: DirectedGraph,
    pub navigating_node: PointId,
    pub dim: usize,
    pub build: Option<BuildInfo>,
}

impl NsgIndex {
    pub fn new(graph: DirectedGraph, navigating_node: PointId, dim: usize) -> Result<Self> {
        graph.validate()?;
        if navigating_node as usize >= graph.len() {
            return Err(Error::Corruption(format!(
                "navigating node {navigating_node} out of range (n={})",
                graph.len()
            )));
        }
        Ok(NsgIndex {
            graph,
            navigating_node,
            dim,
            build: None,
        })
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    /// Fails unless the index fits `dataset`.
    pub fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        if dataset.len() != self.len() || dataset.dim() != self.dim {
            return Err(Error::usage(format!(
                "index covers {} points of dimension {}, dataset has {} of dimension {}",
                self.len(),
                self.dim,
                dataset.len(),
                dataset.dim()
            )));
        }
        Ok(())
    }
}

fn check_knn(knn: &KnnGraph, dataset: &Dataset) -> Result<()> {
    if knn.len() != dataset.len() {
        return Err(Error::usage(format!(
            "kNN graph has {} nodes, dataset has {} points",
            knn.len(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Approximate medoid: the nearest node to the centroid found by searching
/// the kNN graph from a seeded random node.
pub fn find_navigating_node(
    knn: &KnnGraph,
    dataset: &Dataset,
    l_build: usize,
    seed: u64,
) -> Result<PointId> {
    check_knn(knn, dataset)?;
    if l_build == 0 {
        return Err(Error::usage("l_build must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = rng.gen_range(0..dataset.len()) as PointId;
    let centroid = dataset.centroid();
    let stats = Searcher::new(dataset.len()).search(
        knn.graph(),
        dataset,
        &centroid,
        SearchParams::new(l_build, 1, start),
    )?;
    Ok(stats.results[0].id)
}

/// Candidate neighbors of `v`: every node whose distance was computed while
/// searching the kNN graph for `v` from `nav`, plus `v`'s kNN list, without
/// `v`, deduplicated and sorted by (squared distance, id).
pub fn collect_candidates(
    v: PointId,
    knn: &KnnGraph,
    dataset: &Dataset,
    nav: PointId,
    l_build: usize,
) -> Result<Vec<Neighbor>> {
    check_knn(knn, dataset)?;
    dataset.check_id(v, "node")?;
    dataset.check_id(nav, "navigating node")?;
    if l_build == 0 {
        return Err(Error::usage("l_build must be at least 1"));
    }
    Ok(collect(
        &mut Searcher::new(dataset.len()),
        v,
        knn,
        dataset,
        nav,
        l_build,
    ))
}

fn collect(
    searcher: &mut Searcher,
    v: PointId,
    knn: &KnnGraph,
    dataset: &Dataset,
    nav: PointId,
    l_build: usize,
) -> Vec<Neighbor> {
    let mut found: Vec<Neighbor> = Vec::new();
    searcher.run(knn.graph(), dataset, dataset.point(v), nav, l_build, |nb| {
        if nb.id != v {
            found.push(nb);
        }
    });
    for &u in knn.graph().neighbors(v) {
        found.push(Neighbor::new(u, dataset.sq_dist(v, u)));
    }
    sort_neighbors(&mut found);
    found.dedup_by_key(|n| n.id);
    found
}

/// Connectivity repair outcome.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RepairReport {
    /// Edges added, as (in-tree source, previously unreached target).
    pub added: Vec<(PointId, PointId)>,
}

/// Makes every node reachable from `nav`.
///
/// Repeats: DFS from `nav`; take the unreached node with the smallest id;
/// search the current graph for it from `nav` with pool size `l_build`; add
/// an edge from the closest reached node in the pool (or from `nav` when the
/// pool holds none) to it.
pub fn span_and_repair(
    graph: &mut DirectedGraph,
    dataset: &Dataset,
    nav: PointId,
    l_build: usize,
) -> Result<RepairReport> {
    if graph.len() != dataset.len() {
        return Err(Error::usage("graph and dataset sizes differ"));
    }
    dataset.check_id(nav, "navigating node")?;
    if l_build == 0 {
        return Err(Error::usage("l_build must be at least 1"));
    }
    let n = graph.len();
    let mut reached = vec![false; n];
    let mut stack: Vec<PointId> = Vec::new();
    let mut report = RepairReport::default();
    let mut searcher = Searcher::new(n);
    let mut scan = 0usize;

    let dfs = |graph: &DirectedGraph, root: PointId, reached: &mut [bool], stack: &mut Vec<PointId>| {
        reached[root as usize] = true;
        stack.push(root);
        while let Some(v) = stack.pop() {
            for &u in graph.neighbors(v) {
                if !reached[u as usize] {
                    reached[u as usize] = true;
                    stack.push(u);
                }
            }
        }
    };

    dfs(graph, nav, &mut reached, &mut stack);
    loop {
        while scan < n && reached[scan] {
            scan += 1;
        }
        if scan == n {
            break;
        }
        let orphan = scan as PointId;
        searcher.run(graph, dataset, dataset.point(orphan), nav, l_build, |_| {});
        let source = searcher
            .pool()
            .iter()
            .find(|nb| reached[nb.id as usize])
            .map_or(nav, |nb| nb.id);
        graph.add_edge(source, orphan)?;
        report.added.push((source, orphan));
        dfs(graph, orphan, &mut reached, &mut stack);
    }
    Ok(report)
}

/// Builds an index from a kNN graph over `dataset`.
pub fn build_nsg(knn: &KnnGraph, dataset: &Dataset, params: BuildParams) -> Result<NsgIndex> {
    params.validate()?;
    check_knn(knn, dataset)?;
    let n = dataset.len();
    let nav = find_navigating_node(knn, dataset, params.l_build, params.seed)?;
    let cap = params.effective_candidate_cap();

    let rows = par::map_range_with(
        n,
        params.parallel,
        || Searcher::new(n),
        |searcher, v| {
            let v = v as PointId;
            let mut cands = collect(searcher, v, knn, dataset, nav, params.l_build);
            cands.truncate(cap);
            mrng::select(dataset, &cands, params.m)
        },
    );
    let mut graph = DirectedGraph::from_rows_unchecked(rows);
    let pre_repair_max_out_degree = graph.max_out_degree();
    let report = span_and_repair(&mut graph, dataset, nav, params.l_build)?;
    graph.seal();

    let widened_nodes = (0..n as PointId)
        .filter(|&v| graph.out_degree(v) > params.m)
        .collect();
    let mut index = NsgIndex::new(graph, nav, dataset.dim())?;
    index.build = Some(BuildInfo {
        params,
        knn_k: knn.k(),
        pre_repair_max_out_degree,
        repair_edges: report.added.len(),
        widened_nodes,
        dataset_fingerprint: dataset.fingerprint(),
    });
    Ok(index)
}
