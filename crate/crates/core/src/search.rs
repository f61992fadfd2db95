//! Greedy best-first search over a directed graph.
//!
//! The candidate pool is a sorted array of at most `l` entries. Each
//! iteration expands the first unchecked entry, computing distances for its
//! out-neighbors that were never seen before in this query. The search ends
//! once every entry in the pool is checked.

use crate::graph::Neighbor;
use crate::nsg::NsgIndex;
use crate::{par, Dataset, DirectedGraph, Error, PointId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchParams {
    /// Candidate pool size.
    pub l: usize,
    /// Number of results returned.
    pub k: usize,
    pub start: PointId,
}

impl SearchParams {
    pub fn new(l: usize, k: usize, start: PointId) -> Self {
        SearchParams { l, k, start }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::usage("k must be at least 1"));
        }
        if self.k > self.l {
            return Err(Error::usage(format!(
                "k={} exceeds pool size l={}",
                self.k, self.l
            )));
        }
        Ok(())
    }
}

/// Outcome of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchStats {
    /// Pool expansions performed.
    pub hops: usize,
    /// Distinct nodes whose distance to the query was computed.
    pub distance_computations: usize,
    /// Up to `k` results, ascending by true distance then id.
    pub results: Vec<Neighbor>,
}

impl SearchStats {
    pub fn ids(&self) -> Vec<PointId> {
        self.results.iter().map(|n| n.id).collect()
    }
}

/// Epoch-stamped visited marks, cleared in O(1) between queries.
#[derive(Debug, Clone)]
struct Visited {
    marks: Vec<u32>,
    epoch: u32,
}

impl Visited {
    fn new(n: usize) -> Self {
        Visited {
            marks: vec![0; n],
            epoch: 0,
        }
    }

    fn reset(&mut self, n: usize) {
        if self.marks.len() != n {
            self.marks = vec![0; n];
            self.epoch = 0;
        }
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.marks.fill(0);
            self.epoch = 1;
        }
    }

    /// Returns true on first insertion.
    #[inline]
    fn insert(&mut self, id: PointId) -> bool {
        let slot = &mut self.marks[id as usize];
        if *slot == self.epoch {
            false
        } else {
            *slot = self.epoch;
            true
        }
    }
}

/// Reusable buffers for repeated searches over graphs of the same size.
#[derive(Debug, Clone)]
pub struct Searcher {
    visited: Visited,
    pool: Vec<Neighbor>,
}

pub(crate) struct RawOutcome {
    pub hops: usize,
    pub distance_computations: usize,
}

impl Searcher {
    pub fn new(n: usize) -> Self {
        Searcher {
            visited: Visited::new(n),
            pool: Vec::new(),
        }
    }

    /// Runs one query. See [`search_on_graph`].
    pub fn search(
        &mut self,
        graph: &DirectedGraph,
        dataset: &Dataset,
        query: &[f32],
        params: SearchParams,
    ) -> Result<SearchStats> {
        params.validate()?;
        check_pair(graph, dataset)?;
        dataset.check_query(query)?;
        dataset.check_id(params.start, "start node")?;
        let raw = self.run(graph, dataset, query, params.start, params.l, |_| {});
        Ok(SearchStats {
            hops: raw.hops,
            distance_computations: raw.distance_computations,
            results: self.results(params.k),
        })
    }

    /// First `k` pool entries with true distances.
    fn results(&self, k: usize) -> Vec<Neighbor> {
        self.pool
            .iter()
            .take(k)
            .map(|n| Neighbor {
                id: n.id,
                distance: n.distance.sqrt(),
                checked: n.checked,
            })
            .collect()
    }

    /// The final pool, squared distances.
    pub(crate) fn pool(&self) -> &[Neighbor] {
        &self.pool
    }

    /// The search loop. `on_visit` sees every node whose distance gets
    /// computed, with its squared distance, in computation order.
    pub(crate) fn run(
        &mut self,
        graph: &DirectedGraph,
        dataset: &Dataset,
        query: &[f32],
        start: PointId,
        l: usize,
        mut on_visit: impl FnMut(Neighbor),
    ) -> RawOutcome {
        debug_assert!(l >= 1);
        self.visited.reset(graph.len());
        let pool = &mut self.pool;
        pool.clear();
        pool.reserve(l + 1);

        let first = Neighbor::new(start, dataset.sq_dist_to(start, query));
        self.visited.insert(start);
        on_visit(first);
        pool.push(first);
        let mut computed = 1usize;
        let mut hops = 0usize;
        let mut cursor = 0usize;
        #[cfg(debug_assertions)]
        let mut best = first.distance;

        loop {
            while cursor < pool.len() && pool[cursor].checked {
                cursor += 1;
            }
            if cursor >= pool.len() {
                break;
            }
            pool[cursor].checked = true;
            hops += 1;
            let node = pool[cursor].id;
            let mut lowest_insert = usize::MAX;
            for &u in graph.neighbors(node) {
                if !self.visited.insert(u) {
                    continue;
                }
                let cand = Neighbor::new(u, dataset.sq_dist_to(u, query));
                computed += 1;
                on_visit(cand);
                if pool.len() == l && cand.order(&pool[l - 1]).is_ge() {
                    continue;
                }
                let pos = pool.partition_point(|x| x.order(&cand).is_lt());
                pool.insert(pos, cand);
                if pool.len() > l {
                    pool.pop();
                }
                lowest_insert = lowest_insert.min(pos);
            }
            cursor = if lowest_insert <= cursor {
                lowest_insert
            } else {
                cursor + 1
            };

            #[cfg(debug_assertions)]
            {
                debug_assert!(pool.len() <= l);
                debug_assert!(crate::graph::is_sorted(pool));
                debug_assert!(pool[0].distance <= best);
                best = pool[0].distance;
            }
        }

        RawOutcome {
            hops,
            distance_computations: computed,
        }
    }
}

fn check_pair(graph: &DirectedGraph, dataset: &Dataset) -> Result<()> {
    if graph.len() != dataset.len() {
        return Err(Error::usage(format!(
            "graph has {} nodes but dataset has {} points",
            graph.len(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Greedy best-first search from `params.start` toward `query`.
pub fn search_on_graph(
    graph: &DirectedGraph,
    dataset: &Dataset,
    query: &[f32],
    params: SearchParams,
) -> Result<SearchStats> {
    Searcher::new(graph.len()).search(graph, dataset, query, params)
}

/// Searches from the index's navigating node.
pub fn search_nsg(
    index: &NsgIndex,
    dataset: &Dataset,
    query: &[f32],
    l: usize,
    k: usize,
) -> Result<SearchStats> {
    search_on_graph(
        &index.graph,
        dataset,
        query,
        SearchParams::new(l, k, index.navigating_node),
    )
}

/// Runs every row of `queries`; parallel across queries only.
pub fn search_batch(
    graph: &DirectedGraph,
    dataset: &Dataset,
    queries: &Dataset,
    params: SearchParams,
    parallel: bool,
) -> Result<Vec<SearchStats>> {
    params.validate()?;
    check_pair(graph, dataset)?;
    dataset.check_id(params.start, "start node")?;
    if queries.dim() != dataset.dim() {
        return Err(Error::usage(format!(
            "queries have dimension {}, dataset has {}",
            queries.dim(),
            dataset.dim()
        )));
    }
    par::map_range_with(
        queries.len(),
        parallel,
        || Searcher::new(graph.len()),
        |s, i| s.search(graph, dataset, queries.point(i as PointId), params),
    )
    .into_iter()
    .collect()
}

/// Path of a no-backtracking walk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyWalk {
    pub reached: bool,
    pub path: Vec<PointId>,
}

/// Walks from `start` toward the stored point `target`, always moving to the
/// out-neighbor closest to the target, and only if it is strictly closer
/// than the current node.
pub fn greedy_walk(
    graph: &DirectedGraph,
    dataset: &Dataset,
    target: PointId,
    start: PointId,
) -> Result<GreedyWalk> {
    check_pair(graph, dataset)?;
    dataset.check_id(target, "target")?;
    dataset.check_id(start, "start node")?;
    Ok(walk(graph, dataset, target, start))
}

pub(crate) fn walk(
    graph: &DirectedGraph,
    dataset: &Dataset,
    target: PointId,
    start: PointId,
) -> GreedyWalk {
    let mut path = vec![start];
    let mut current = start;
    let mut current_dist = dataset.sq_dist(current, target);
    while current != target {
        let best = graph
            .neighbors(current)
            .iter()
            .map(|&u| Neighbor::new(u, dataset.sq_dist(u, target)))
            .min_by(Neighbor::order);
        match best {
            Some(next) if next.distance < current_dist => {
                current = next.id;
                current_dist = next.distance;
                path.push(current);
            }
            _ => return GreedyWalk {
                reached: false,
                path,
            },
        }
    }
    GreedyWalk {
        reached: true,
        path,
    }
}
