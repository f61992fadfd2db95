//! k-nearest-neighbor graphs: an exact brute-force builder and nn-descent.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{is_sorted, sort_neighbors, Neighbor};
use crate::{par, Dataset, DirectedGraph, Error, PointId, Result};

/// A directed graph in which every node links to exactly `k` others,
/// nearest first. Distances are squared.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    k: usize,
    graph: DirectedGraph,
    distances: Vec<Vec<f32>>,
}

impl KnnGraph {
    fn from_lists(k: usize, lists: Vec<Vec<Neighbor>>) -> Self {
        debug_assert!(lists.iter().all(|l| l.len() == k && is_sorted(l)));
        let distances = lists
            .iter()
            .map(|l| l.iter().map(|n| n.distance).collect())
            .collect();
        let rows = lists
            .into_iter()
            .map(|l| l.into_iter().map(|n| n.id).collect())
            .collect();
        let mut graph = DirectedGraph::from_rows_unchecked(rows);
        graph.seal();
        KnnGraph {
            k,
            graph,
            distances,
        }
    }

    /// Re-attaches distances to a graph loaded from disk and re-sorts rows.
    pub fn from_graph(graph: &DirectedGraph, dataset: &Dataset) -> Result<Self> {
        if graph.len() != dataset.len() {
            return Err(Error::usage("graph and dataset sizes differ"));
        }
        graph.validate()?;
        let k = graph.out_degree(0);
        if k == 0 || k >= dataset.len() {
            return Err(Error::usage(format!("graph is not a kNN graph (k={k})")));
        }
        let mut lists = Vec::with_capacity(graph.len());
        for v in 0..graph.len() as PointId {
            let row = graph.neighbors(v);
            if row.len() != k {
                return Err(Error::usage(format!(
                    "node {v} has {} neighbors, expected {k}",
                    row.len()
                )));
            }
            let mut list: Vec<Neighbor> = row
                .iter()
                .map(|&u| Neighbor::new(u, dataset.sq_dist(v, u)))
                .collect();
            sort_neighbors(&mut list);
            lists.push(list);
        }
        Ok(KnnGraph::from_lists(k, lists))
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.graph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graph.is_empty()
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn into_graph(self) -> DirectedGraph {
        self.graph
    }

    /// Neighbor list of `v` with squared distances.
    pub fn neighbors(&self, v: PointId) -> impl ExactSizeIterator<Item = Neighbor> + '_ {
        self.graph
            .neighbors(v)
            .iter()
            .zip(&self.distances[v as usize])
            .map(|(&id, &d)| Neighbor::new(id, d))
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::usage(format!("k must satisfy 1 <= k < n (k={k}, n={n})")));
    }
    Ok(())
}

/// Exact kNN graph by brute force, parallel over nodes.
pub fn exact_knn_graph(dataset: &Dataset, k: usize) -> Result<KnnGraph> {
    exact_knn_graph_with(dataset, k, true)
}

pub fn exact_knn_graph_with(dataset: &Dataset, k: usize, parallel: bool) -> Result<KnnGraph> {
    let n = dataset.len();
    check_k(n, k)?;
    let lists = par::map_range_with(n, parallel, Vec::new, |buf: &mut Vec<Neighbor>, v| {
        let v = v as PointId;
        buf.clear();
        buf.extend(
            (0..n as PointId)
                .filter(|&u| u != v)
                .map(|u| Neighbor::new(u, dataset.sq_dist(v, u))),
        );
        buf.select_nth_unstable_by(k - 1, Neighbor::order);
        let mut top = buf[..k].to_vec();
        sort_neighbors(&mut top);
        top
    });
    Ok(KnnGraph::from_lists(k, lists))
}

/// Settings for [`nn_descent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnDescentParams {
    pub k: usize,
    /// Fraction of each list sampled into a local join, in (0, 1].
    pub sample_rate: f64,
    pub max_iters: usize,
    /// Stop once an iteration makes fewer than `delta * n * k` updates.
    pub delta: f64,
    pub seed: u64,
    /// Run the local joins on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl NnDescentParams {
    pub fn new(k: usize, seed: u64) -> Self {
        NnDescentParams {
            k,
            sample_rate: 1.0,
            max_iters: 12,
            delta: 0.001,
            seed,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Entry {
    nb: Neighbor,
    fresh: bool,
}

/// Sorted bounded list; `checked` is unused here, `fresh` marks entries not
/// yet taken into a local join.
struct NeighborList {
    entries: Vec<Entry>,
}

impl NeighborList {
    fn worst(&self, k: usize) -> Option<Neighbor> {
        (self.entries.len() == k).then(|| self.entries[k - 1].nb)
    }

    fn insert(&mut self, cand: Neighbor, k: usize) -> bool {
        if let Some(w) = self.worst(k) {
            if cand.order(&w).is_ge() {
                return false;
            }
        }
        if self.entries.iter().any(|e| e.nb.id == cand.id) {
            return false;
        }
        let pos = self.entries.partition_point(|e| e.nb.order(&cand).is_lt());
        self.entries.insert(
            pos,
            Entry {
                nb: cand,
                fresh: true,
            },
        );
        self.entries.truncate(k);
        true
    }
}

fn snapshot(k: usize, lists: &[NeighborList]) -> KnnGraph {
    KnnGraph::from_lists(
        k,
        lists
            .iter()
            .map(|l| l.entries.iter().map(|e| e.nb).collect())
            .collect(),
    )
}

/// Approximate kNN graph by neighbor-of-neighbor refinement.
pub fn nn_descent(dataset: &Dataset, params: NnDescentParams) -> Result<KnnGraph> {
    nn_descent_traced(dataset, params, |_, _| {})
}

/// [`nn_descent`] that hands the current graph to `observer` after the
/// random initialization (iteration 0) and after every iteration.
pub fn nn_descent_traced(
    dataset: &Dataset,
    params: NnDescentParams,
    mut observer: impl FnMut(usize, &KnnGraph),
) -> Result<KnnGraph> {
    let n = dataset.len();
    let k = params.k;
    check_k(n, k)?;
    if !(params.sample_rate > 0.0 && params.sample_rate <= 1.0) {
        return Err(Error::usage("sample rate must lie in (0, 1]"));
    }
    if params.delta < 0.0 {
        return Err(Error::usage("convergence threshold must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sample_size = ((params.sample_rate * k as f64).round() as usize).max(1);

    let mut lists: Vec<NeighborList> = (0..n)
        .map(|v| {
            let mut list = NeighborList {
                entries: Vec::with_capacity(k),
            };
            for i in sample(&mut rng, n - 1, k) {
                let u = if i >= v { i + 1 } else { i } as PointId;
                list.insert(Neighbor::new(u, dataset.sq_dist(v as PointId, u)), k);
            }
            list
        })
        .collect();
    observer(0, &snapshot(k, &lists));

    let threshold = params.delta * n as f64 * k as f64;
    for iter in 1..=params.max_iters {
        let mut old: Vec<Vec<PointId>> = vec![Vec::new(); n];
        let mut new: Vec<Vec<PointId>> = vec![Vec::new(); n];
        for v in 0..n {
            let entries = &mut lists[v].entries;
            let mut fresh: Vec<usize> = Vec::new();
            for (i, e) in entries.iter().enumerate() {
                if e.fresh {
                    fresh.push(i);
                } else {
                    old[v].push(e.nb.id);
                }
            }
            fresh.shuffle(&mut rng);
            fresh.truncate(sample_size);
            for i in fresh {
                entries[i].fresh = false;
                new[v].push(entries[i].nb.id);
            }
        }

        let mut old_rev: Vec<Vec<PointId>> = vec![Vec::new(); n];
        let mut new_rev: Vec<Vec<PointId>> = vec![Vec::new(); n];
        for v in 0..n {
            for &u in &old[v] {
                old_rev[u as usize].push(v as PointId);
            }
            for &u in &new[v] {
                new_rev[u as usize].push(v as PointId);
            }
        }
        for v in 0..n {
            for (fwd, rev) in [(&mut old[v], &mut old_rev[v]), (&mut new[v], &mut new_rev[v])] {
                rev.shuffle(&mut rng);
                for &u in rev.iter().take(sample_size) {
                    if !fwd.contains(&u) {
                        fwd.push(u);
                    }
                }
            }
        }

        // local join against a read-only view of the lists
        let worst: Vec<Option<Neighbor>> = lists.iter().map(|l| l.worst(k)).collect();
        let improves = |a: PointId, b: PointId, d: f32| match worst[a as usize] {
            Some(w) => Neighbor::new(b, d).order(&w).is_lt(),
            None => true,
        };
        let proposals = par::map_range(n, params.parallel, |v| {
            let mut out: Vec<(PointId, PointId, f32)> = Vec::new();
            let fresh = &new[v];
            for (i, &a) in fresh.iter().enumerate() {
                for &b in fresh[i + 1..].iter().chain(old[v].iter()) {
                    if a == b {
                        continue;
                    }
                    let d = dataset.sq_dist(a, b);
                    if improves(a, b, d) || improves(b, a, d) {
                        out.push((a, b, d));
                    }
                }
            }
            out
        });

        let mut updates = 0usize;
        for (a, b, d) in proposals.into_iter().flatten() {
            updates += lists[a as usize].insert(Neighbor::new(b, d), k) as usize;
            updates += lists[b as usize].insert(Neighbor::new(a, d), k) as usize;
        }
        observer(iter, &snapshot(k, &lists));
        if (updates as f64) < threshold || updates == 0 {
            break;
        }
    }
    Ok(snapshot(k, &lists))
}

/// Mean over nodes of `|approx ∩ exact| / k`.
pub fn knn_graph_recall(approx: &KnnGraph, exact: &KnnGraph) -> Result<f64> {
    if approx.len() != exact.len() || approx.k() != exact.k() {
        return Err(Error::usage(format!(
            "shape mismatch: ({}, k={}) vs ({}, k={})",
            approx.len(),
            approx.k(),
            exact.len(),
            exact.k()
        )));
    }
    let mut hits = 0usize;
    for v in 0..approx.len() as PointId {
        let truth = exact.graph().neighbors(v);
        hits += approx
            .graph()
            .neighbors(v)
            .iter()
            .filter(|u| truth.contains(u))
            .count();
    }
    Ok(hits as f64 / (approx.len() * approx.k()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new((0..n * d).map(|_| rng.gen::<f32>()).collect(), d).unwrap()
    }

    /// Full sort of all pairs in f64, ties by id.
    fn oracle(ds: &Dataset, k: usize) -> Vec<Vec<PointId>> {
        (0..ds.len())
            .map(|v| {
                let mut all: Vec<(f64, usize)> = (0..ds.len())
                    .filter(|&u| u != v)
                    .map(|u| {
                        let d: f64 = ds
                            .point(v as PointId)
                            .iter()
                            .zip(ds.point(u as PointId))
                            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                            .sum();
                        (d, u)
                    })
                    .collect();
                all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                all[..k].iter().map(|&(_, u)| u as PointId).collect()
            })
            .collect()
    }

    #[test]
    fn collinear_nearest_neighbors() {
        let ds = Dataset::new(vec![0.0, 1.0, 3.0, 7.0], 1).unwrap();
        let g = exact_knn_graph(&ds, 1).unwrap();
        assert_eq!(g.graph().rows(), &[vec![1], vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn two_points() {
        let ds = Dataset::new(vec![0.0, 1.0], 1).unwrap();
        let g = exact_knn_graph(&ds, 1).unwrap();
        assert_eq!(g.graph().rows(), &[vec![1], vec![0]]);
        assert!(exact_knn_graph(&ds, 2).is_err());
        assert!(exact_knn_graph(&ds, 0).is_err());
    }

    #[test]
    fn exact_matches_oracle() {
        let ds = random_dataset(200, 4, 9);
        let g = exact_knn_graph(&ds, 10).unwrap();
        assert_eq!(g.graph().rows(), oracle(&ds, 10).as_slice());
        for v in 0..200 {
            let d: Vec<f32> = g.neighbors(v).map(|n| n.distance).collect();
            assert!(d.windows(2).all(|w| w[0] <= w[1]));
        }
        assert_eq!(g, exact_knn_graph_with(&ds, 10, false).unwrap());
    }

    #[test]
    fn nn_descent_exhaustive_k() {
        let ds = random_dataset(30, 3, 2);
        let approx = nn_descent(&ds, NnDescentParams::new(29, 1)).unwrap();
        assert_eq!(approx, exact_knn_graph(&ds, 29).unwrap());
    }

    #[test]
    fn nn_descent_quality_and_determinism() {
        let ds = random_dataset(2000, 8, 21);
        let exact = exact_knn_graph(&ds, 20).unwrap();
        let mut history = Vec::new();
        let params = NnDescentParams::new(20, 77);
        let a = nn_descent_traced(&ds, params, |_, g| {
            history.push(knn_graph_recall(g, &exact).unwrap())
        })
        .unwrap();
        let recall = knn_graph_recall(&a, &exact).unwrap();
        assert!(recall >= 0.90, "recall {recall}");
        assert!(history.windows(2).all(|w| w[1] >= w[0]), "{history:?}");
        let serial = nn_descent(&ds, NnDescentParams { parallel: false, ..params }).unwrap();
        assert_eq!(a, serial);
    }

    #[test]
    fn recall_counting() {
        let ds = random_dataset(50, 2, 4);
        let exact = exact_knn_graph(&ds, 10).unwrap();
        assert_eq!(knn_graph_recall(&exact, &exact).unwrap(), 1.0);

        // drop the last true neighbor of each node for one that is not in the list
        let rows: Vec<Vec<PointId>> = (0..50)
            .map(|v| {
                let mut row = exact.graph().neighbors(v).to_vec();
                let extra = (0..50)
                    .find(|&u| u != v && !row.contains(&u))
                    .unwrap();
                row[9] = extra;
                row
            })
            .collect();
        let g = KnnGraph::from_graph(&DirectedGraph::from_adjacency(rows).unwrap(), &ds).unwrap();
        assert!((knn_graph_recall(&g, &exact).unwrap() - 0.9).abs() < 1e-12);

        let other = exact_knn_graph(&ds, 5).unwrap();
        assert!(knn_graph_recall(&other, &exact).is_err());
    }

    #[test]
    fn disjoint_lists_have_zero_recall() {
        let ds = Dataset::new(vec![0.0, 1.0, 10.0, 11.0], 1).unwrap();
        let exact = exact_knn_graph(&ds, 1).unwrap();
        let far = DirectedGraph::from_adjacency(vec![vec![2], vec![3], vec![0], vec![1]]).unwrap();
        let far = KnnGraph::from_graph(&far, &ds).unwrap();
        assert_eq!(knn_graph_recall(&far, &exact).unwrap(), 0.0);
    }
}
