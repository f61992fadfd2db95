//! Structural measurements of built graphs.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::bench::{compute_ground_truth, mean_precision};
use crate::knn::exact_knn_graph;
use crate::nsg::{build_nsg, BuildParams};
use crate::search::{search_batch, walk, SearchParams};
use crate::{par, Dataset, DirectedGraph, Error, PointId, Result};

/// Degree, nearest-neighbor and connectivity summary of a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphReport {
    pub n: usize,
    /// Average out-degree.
    pub aod: f64,
    /// Maximum out-degree.
    pub mod_: usize,
    /// Fraction of nodes with an out-edge to a point at their exact
    /// nearest-neighbor distance.
    pub nn_percent: f64,
    pub scc_count: usize,
    pub reachable_from_nav: Option<usize>,
}

impl GraphReport {
    pub const CSV_HEADER: &'static str = "n,aod,mod,nn_percent,scc_count,reachable_from_nav";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.4},{},{:.6},{},{}",
            self.n,
            self.aod,
            self.mod_,
            self.nn_percent,
            self.scc_count,
            self.reachable_from_nav.map_or(String::new(), |r| r.to_string())
        )
    }
}

fn check_pair(graph: &DirectedGraph, dataset: &Dataset) -> Result<()> {
    if graph.len() != dataset.len() {
        return Err(Error::usage(format!(
            "graph has {} nodes, dataset has {} points",
            graph.len(),
            dataset.len()
        )));
    }
    Ok(())
}

/// Squared distance from every point to its nearest other point.
fn nearest_distances(dataset: &Dataset) -> Vec<f32> {
    let n = dataset.len() as PointId;
    par::map_range(dataset.len(), true, |v| {
        let v = v as PointId;
        (0..n)
            .filter(|&u| u != v)
            .map(|u| dataset.sq_dist(v, u))
            .fold(f32::INFINITY, f32::min)
    })
}

pub fn graph_report(
    graph: &DirectedGraph,
    dataset: &Dataset,
    nav: Option<PointId>,
) -> Result<GraphReport> {
    check_pair(graph, dataset)?;
    if let Some(v) = nav {
        dataset.check_id(v, "navigating node")?;
    }
    let n = graph.len();
    let nn_percent = if n < 2 {
        1.0
    } else {
        let nearest = nearest_distances(dataset);
        let linked = (0..n as PointId)
            .filter(|&v| {
                graph
                    .neighbors(v)
                    .iter()
                    .any(|&u| dataset.sq_dist(v, u) == nearest[v as usize])
            })
            .count();
        linked as f64 / n as f64
    };
    Ok(GraphReport {
        n,
        aod: graph.mean_out_degree(),
        mod_: graph.max_out_degree(),
        nn_percent,
        scc_count: scc_count(graph),
        reachable_from_nav: nav.map(|v| graph.reachable_from(v).iter().filter(|&&b| b).count()),
    })
}

/// Strongly connected components (iterative Tarjan). Returns the component
/// index of every node; components are numbered in completion order.
pub fn strongly_connected_components(graph: &DirectedGraph) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = graph.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack: Vec<usize> = Vec::new();
    // (node, position in its adjacency row)
    let mut call: Vec<(usize, usize)> = Vec::new();
    let mut counter = 0usize;
    let mut n_comp = 0usize;

    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut pos)) = call.last_mut() {
            let row = graph.neighbors(v as PointId);
            if *pos < row.len() {
                let w = row[*pos] as usize;
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    comp[w] = n_comp;
                    if w == v {
                        break;
                    }
                }
                n_comp += 1;
            }
        }
    }
    comp
}

pub fn scc_count(graph: &DirectedGraph) -> usize {
    strongly_connected_components(graph)
        .into_iter()
        .max()
        .map_or(0, |m| m + 1)
}

/// A pair the greedy walk failed to connect.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counterexample {
    pub source: PointId,
    pub target: PointId,
    /// Node where the walk stopped.
    pub stuck: PointId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsnetCheck {
    pub holds: bool,
    /// First failing pair in (source, target) order.
    pub counterexample: Option<Counterexample>,
}

/// Walks greedily between every ordered pair of nodes. The graph is an
/// MSNET when every walk reaches its target.
pub fn check_msnet(graph: &DirectedGraph, dataset: &Dataset) -> Result<MsnetCheck> {
    check_msnet_with(graph, dataset, true)
}

pub fn check_msnet_with(
    graph: &DirectedGraph,
    dataset: &Dataset,
    parallel: bool,
) -> Result<MsnetCheck> {
    check_pair(graph, dataset)?;
    let n = graph.len() as PointId;
    let failures = par::map_range(graph.len(), parallel, |p| {
        let p = p as PointId;
        (0..n).find_map(|q| {
            let w = walk(graph, dataset, q, p);
            let monotone = w
                .path
                .windows(2)
                .all(|s| dataset.sq_dist(s[1], q) < dataset.sq_dist(s[0], q));
            debug_assert!(monotone);
            (!w.reached || !monotone).then(|| Counterexample {
                source: p,
                target: q,
                stuck: *w.path.last().unwrap(),
            })
        })
    });
    let counterexample = failures.into_iter().flatten().next();
    Ok(MsnetCheck {
        holds: counterexample.is_none(),
        counterexample,
    })
}

/// Smallest angle, in radians, between two out-edges of the same node.
/// `PI` when no node has two out-edges. Zero-length edges (duplicate
/// points) are skipped.
pub fn min_pairwise_edge_angle(graph: &DirectedGraph, dataset: &Dataset) -> Result<f64> {
    check_pair(graph, dataset)?;
    let d = dataset.dim();
    let per_node = par::map_range(graph.len(), true, |p| {
        let origin = dataset.point(p as PointId);
        let vecs: Vec<(Vec<f64>, f64)> = graph
            .neighbors(p as PointId)
            .iter()
            .map(|&u| {
                let v: Vec<f64> = (0..d)
                    .map(|i| dataset.point(u)[i] as f64 - origin[i] as f64)
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                (v, norm)
            })
            .filter(|(_, norm)| *norm > 0.0)
            .collect();
        let mut best = PI;
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                let dot: f64 = vecs[i].0.iter().zip(&vecs[j].0).map(|(a, b)| a * b).sum();
                let cos = (dot / (vecs[i].1 * vecs[j].1)).clamp(-1.0, 1.0);
                best = best.min(cos.acos());
            }
        }
        best
    });
    Ok(per_node.into_iter().fold(PI, f64::min))
}

/// Largest `n` accepted by [`estimate_delta_r`] without `allow_large`.
pub const DELTA_R_DEFAULT_LIMIT: usize = 2000;

/// Smallest difference between two side lengths over all non-isosceles
/// triangles of the point set (collinear triples included, triples with a
/// zero-length side skipped). Distances are evaluated in `f64`.
///
/// Cubic in `n`; refuses `n > 2000` unless `allow_large`.
pub fn estimate_delta_r(dataset: &Dataset, allow_large: bool) -> Result<f64> {
    let n = dataset.len();
    if n < 3 {
        return Err(Error::usage("need at least three points"));
    }
    if n > DELTA_R_DEFAULT_LIMIT && !allow_large {
        return Err(Error::usage(format!(
            "n={n} exceeds {DELTA_R_DEFAULT_LIMIT}; pass the override to run the cubic scan"
        )));
    }
    let dist: Vec<f64> = (0..n * n)
        .map(|ij| {
            let (i, j) = (ij / n, ij % n);
            dataset
                .point(i as PointId)
                .iter()
                .zip(dataset.point(j as PointId))
                .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let per_a = par::map_range(n, true, |a| {
        let mut best = f64::INFINITY;
        for b in a + 1..n {
            let ab = dist[a * n + b];
            if ab == 0.0 {
                continue;
            }
            for c in b + 1..n {
                let ac = dist[a * n + c];
                let bc = dist[b * n + c];
                if ac == 0.0 || bc == 0.0 || ab == ac || ab == bc || ac == bc {
                    continue;
                }
                best = best
                    .min((ab - ac).abs())
                    .min((ab - bc).abs())
                    .min((ac - bc).abs());
            }
        }
        best
    });
    let best = per_a.into_iter().fold(f64::INFINITY, f64::min);
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Infeasible("every triangle is isosceles or degenerate".into()))
    }
}

/// Build settings used at every size of a scaling run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BuildRecipe {
    /// Neighbors per node in the exact kNN graph fed to the builder.
    pub k: usize,
    pub l_build: usize,
    pub m: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopScalingRow {
    pub n: usize,
    /// Smallest pool size on the ladder that met the target, or the last one
    /// tried.
    pub l: usize,
    pub precision: f64,
    pub reached_target: bool,
    pub mean_hops: f64,
    pub mean_distance_computations: f64,
}

impl HopScalingRow {
    pub const CSV_HEADER: &'static str =
        "n,l,precision,reached_target,mean_hops,mean_distance_computations";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{},{:.4},{:.4}",
            self.n,
            self.l,
            self.precision,
            self.reached_target,
            self.mean_hops,
            self.mean_distance_computations
        )
    }
}

/// For each size, builds an index over the first `n` points of `base`,
/// then walks up `l_ladder` until mean precision@`k_results` reaches
/// `target`, recording mean hops and distance computations at that pool
/// size. Sizes that never reach the target are reported with
/// `reached_target = false`.
pub fn hop_scaling_experiment(
    base: &Dataset,
    sizes: &[usize],
    recipe: BuildRecipe,
    queries: &Dataset,
    k_results: usize,
    target: f64,
    l_ladder: &[usize],
) -> Result<Vec<HopScalingRow>> {
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::usage("sizes must be non-empty and strictly ascending"));
    }
    if l_ladder.is_empty() || l_ladder.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::usage("l ladder must be non-empty and strictly ascending"));
    }
    if *sizes.last().unwrap() > base.len() {
        return Err(Error::usage("largest size exceeds the base dataset"));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let data = base.prefix(n)?;
        let knn = exact_knn_graph(&data, recipe.k.min(n - 1))?;
        let index = build_nsg(
            &knn,
            &data,
            BuildParams::new(recipe.l_build, recipe.m, recipe.seed),
        )?;
        let truth = compute_ground_truth(&data, queries, k_results)?;
        let mut row = None;
        for &l in l_ladder.iter().filter(|&&l| l >= k_results) {
            let stats = search_batch(
                &index.graph,
                &data,
                queries,
                SearchParams::new(l, k_results, index.navigating_node),
                true,
            )?;
            let precision = mean_precision(&stats, &truth, k_results)?;
            let q = stats.len() as f64;
            let current = HopScalingRow {
                n,
                l,
                precision,
                reached_target: precision >= target,
                mean_hops: stats.iter().map(|s| s.hops as f64).sum::<f64>() / q,
                mean_distance_computations: stats
                    .iter()
                    .map(|s| s.distance_computations as f64)
                    .sum::<f64>()
                    / q,
            };
            let done = current.reached_target;
            row = Some(current);
            if done {
                break;
            }
        }
        rows.push(row.ok_or_else(|| Error::usage("no pool size on the ladder is >= K"))?);
    }
    Ok(rows)
}

/// Renders rows under a header, one line each.
pub fn to_csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{header}");
    for r in rows {
        let _ = writeln!(out, "{r}");
    }
    out
}
