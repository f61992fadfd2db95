//! Ground truth, precision and throughput measurement.

use std::collections::HashSet;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{sort_neighbors, Neighbor};
use crate::io;
use crate::knn::exact_knn_graph;
use crate::nsg::{build_nsg, BuildParams};
use crate::search::{SearchParams, Searcher};
use crate::{par, Dataset, Error, NsgIndex, PointId, Result, SearchStats};

/// Exact top-K per query, true distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub k: usize,
    pub ids: Vec<Vec<PointId>>,
    pub distances: Vec<Vec<f32>>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Writes ids as ivecs and, when given a second path, distances as fvecs.
    pub fn save(&self, ids_path: impl AsRef<Path>, dist_path: Option<&Path>) -> Result<()> {
        let rows: Vec<Vec<i32>> = self
            .ids
            .iter()
            .map(|r| r.iter().map(|&i| i as i32).collect())
            .collect();
        io::write_ivecs(&rows, ids_path)?;
        if let Some(p) = dist_path {
            let flat: Vec<f32> = self.distances.concat();
            io::write_fvecs(&Dataset::new(flat, self.k)?, p)?;
        }
        Ok(())
    }

    /// Loads ids (and optionally distances; zeros otherwise).
    pub fn load(ids_path: impl AsRef<Path>, dist_path: Option<&Path>) -> Result<Self> {
        let rows = io::read_ivecs(ids_path)?;
        let k = rows[0].len();
        let ids: Vec<Vec<PointId>> = rows
            .into_iter()
            .map(|r| {
                r.into_iter()
                    .map(|i| {
                        u32::try_from(i).map_err(|_| Error::format(format!("negative id {i} in ground truth")))
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let distances = match dist_path {
            Some(p) => {
                let ds = io::read_fvecs(p)?;
                if ds.len() != ids.len() || ds.dim() != k {
                    return Err(Error::format("ground-truth id and distance files disagree"));
                }
                ds.iter().map(<[f32]>::to_vec).collect()
            }
            None => vec![vec![0.0; k]; ids.len()],
        };
        Ok(GroundTruth { k, ids, distances })
    }
}

pub fn compute_ground_truth(dataset: &Dataset, queries: &Dataset, k: usize) -> Result<GroundTruth> {
    compute_ground_truth_with(dataset, queries, k, true)
}

/// Serial scan per query, ties by id.
pub fn compute_ground_truth_with(
    dataset: &Dataset,
    queries: &Dataset,
    k: usize,
    parallel: bool,
) -> Result<GroundTruth> {
    if queries.dim() != dataset.dim() {
        return Err(Error::usage("queries and base differ in dimension"));
    }
    if k == 0 || k >= dataset.len() {
        return Err(Error::usage(format!(
            "K must satisfy 1 <= K < n (K={k}, n={})",
            dataset.len()
        )));
    }
    let lists = par::map_range_with(queries.len(), parallel, Vec::new, |buf: &mut Vec<Neighbor>, qi| {
        let q = queries.point(qi as PointId);
        buf.clear();
        buf.extend((0..dataset.len() as PointId).map(|u| Neighbor::new(u, dataset.sq_dist_to(u, q))));
        buf.select_nth_unstable_by(k - 1, Neighbor::order);
        let mut top = buf[..k].to_vec();
        sort_neighbors(&mut top);
        top
    });
    Ok(GroundTruth {
        k,
        ids: lists.iter().map(|l| l.iter().map(|n| n.id).collect()).collect(),
        distances: lists
            .iter()
            .map(|l| l.iter().map(|n| n.distance.sqrt()).collect())
            .collect(),
    })
}

/// `|result ∩ truth| / |result|`; both lists must have the same length.
pub fn precision_at_k(result: &[PointId], truth: &[PointId]) -> Result<f64> {
    if result.len() != truth.len() || result.is_empty() {
        return Err(Error::usage(format!(
            "result and truth sizes differ or are empty ({} vs {})",
            result.len(),
            truth.len()
        )));
    }
    let truth: HashSet<PointId> = truth.iter().copied().collect();
    let hits = result.iter().collect::<HashSet<_>>().into_iter().filter(|id| truth.contains(id)).count();
    Ok(hits as f64 / result.len() as f64)
}

/// Mean precision@`k` of per-query results against the first `k` truth ids.
pub fn mean_precision(stats: &[SearchStats], truth: &GroundTruth, k: usize) -> Result<f64> {
    if stats.len() != truth.len() {
        return Err(Error::usage("result and ground-truth query counts differ"));
    }
    if k > truth.k {
        return Err(Error::usage(format!("K={k} exceeds ground-truth depth {}", truth.k)));
    }
    let mut sum = 0.0;
    for (s, t) in stats.iter().zip(&truth.ids) {
        let ids = s.ids();
        if ids.len() < k {
            return Err(Error::usage("search returned fewer than K results"));
        }
        sum += precision_at_k(&ids[..k], &t[..k])?;
    }
    Ok(sum / stats.len() as f64)
}

/// One pool size of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallCurvePoint {
    pub l: usize,
    pub precision: f64,
    /// Queries per second from the median of the timed repetitions.
    pub qps: f64,
    /// Queries per second from the mean of the timed repetitions.
    pub qps_mean: f64,
    pub mean_distance_computations: f64,
    pub mean_hops: f64,
}

impl RecallCurvePoint {
    pub const CSV_HEADER: &'static str =
        "l,precision,qps,qps_mean,mean_distance_computations,mean_hops";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.1},{:.1},{:.3},{:.3}",
            self.l, self.precision, self.qps, self.qps_mean, self.mean_distance_computations, self.mean_hops
        )
    }
}

/// Timed repetitions per pool size.
pub const SWEEP_REPETITIONS: usize = 3;

/// Runs all queries at each pool size on the calling thread. Only the
/// search calls are timed.
pub fn run_sweep(
    index: &NsgIndex,
    dataset: &Dataset,
    queries: &Dataset,
    truth: &GroundTruth,
    l_values: &[usize],
    k: usize,
) -> Result<Vec<RecallCurvePoint>> {
    index.check_dataset(dataset)?;
    if l_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::usage("pool sizes must be ascending"));
    }
    if let Some(&l) = l_values.iter().find(|&&l| l < k) {
        return Err(Error::usage(format!("pool size {l} is below K={k}")));
    }
    if queries.dim() != dataset.dim() {
        return Err(Error::usage("queries and base differ in dimension"));
    }
    let mut searcher = Searcher::new(dataset.len());
    let mut points = Vec::with_capacity(l_values.len());
    for &l in l_values {
        let params = SearchParams::new(l, k, index.navigating_node);
        let mut stats = Vec::with_capacity(queries.len());
        let mut times = Vec::with_capacity(SWEEP_REPETITIONS);
        for rep in 0..SWEEP_REPETITIONS {
            let mut elapsed = 0f64;
            for q in queries.iter() {
                let t = Instant::now();
                let s = searcher.search(&index.graph, dataset, q, params)?;
                elapsed += t.elapsed().as_secs_f64();
                if rep == 0 {
                    stats.push(s);
                }
            }
            times.push(elapsed);
        }
        times.sort_by(f64::total_cmp);
        let median = times[times.len() / 2];
        let mean = times.iter().sum::<f64>() / times.len() as f64;
        let nq = queries.len() as f64;
        points.push(RecallCurvePoint {
            l,
            precision: mean_precision(&stats, truth, k)?,
            qps: nq / median.max(f64::MIN_POSITIVE),
            qps_mean: nq / mean.max(f64::MIN_POSITIVE),
            mean_distance_computations: stats.iter().map(|s| s.distance_computations as f64).sum::<f64>() / nq,
            mean_hops: stats.iter().map(|s| s.hops as f64).sum::<f64>() / nq,
        });
    }
    Ok(points)
}

/// Index of the first sweep point whose precision drops below an earlier
/// one, if any.
pub fn precision_trend_violation(points: &[RecallCurvePoint]) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    for (i, p) in points.iter().enumerate() {
        if p.precision < best {
            return Some(i);
        }
        best = best.max(p.precision);
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    /// Neighbors per node of the exact kNN graph.
    pub k: usize,
    pub l_build: usize,
    pub m: usize,
}

/// What [`grid_search`] maximizes at the target precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Measured queries per second (wall clock; may differ run to run).
    Qps,
    /// Fewest mean distance computations; deterministic.
    DistanceComputations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridEvaluation {
    pub params: GridPoint,
    /// First sweep point meeting the target, if any.
    pub at_target: Option<RecallCurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchOutcome {
    pub best: GridPoint,
    pub best_point: RecallCurvePoint,
    pub evaluations: Vec<GridEvaluation>,
}

/// Builds one index per grid point, sweeps `l_values`, and keeps the grid
/// point that does best under `objective` at the smallest pool size reaching
/// `target`. Ties go to the earlier grid point.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    dataset: &Dataset,
    queries: &Dataset,
    truth: &GroundTruth,
    grid: &[GridPoint],
    l_values: &[usize],
    k: usize,
    target: f64,
    seed: u64,
    objective: Objective,
) -> Result<GridSearchOutcome> {
    if grid.is_empty() {
        return Err(Error::usage("parameter grid is empty"));
    }
    let mut evaluations = Vec::with_capacity(grid.len());
    for &gp in grid {
        let knn = exact_knn_graph(dataset, gp.k.min(dataset.len() - 1))?;
        let index = build_nsg(&knn, dataset, BuildParams::new(gp.l_build, gp.m, seed))?;
        let sweep = run_sweep(&index, dataset, queries, truth, l_values, k)?;
        evaluations.push(GridEvaluation {
            params: gp,
            at_target: sweep.into_iter().find(|p| p.precision >= target),
        });
    }
    let better = |a: &RecallCurvePoint, b: &RecallCurvePoint| match objective {
        Objective::Qps => a.qps > b.qps,
        Objective::DistanceComputations => a.mean_distance_computations < b.mean_distance_computations,
    };
    let mut best: Option<(GridPoint, RecallCurvePoint)> = None;
    for e in &evaluations {
        if let Some(p) = &e.at_target {
            if best.as_ref().is_none_or(|(_, b)| better(p, b)) {
                best = Some((e.params, p.clone()));
            }
        }
    }
    match best {
        Some((best, best_point)) => Ok(GridSearchOutcome {
            best,
            best_point,
            evaluations,
        }),
        None => Err(Error::Infeasible(format!(
            "no parameter combination reaches precision {target}"
        ))),
    }
}

/// One partition of a sharded dataset.
#[derive(Debug, Clone)]
pub struct Shard {
    pub index: NsgIndex,
    pub data: Dataset,
    /// Global id of the shard's local point 0; local ids map to
    /// `offset..offset + data.len()`.
    pub offset: PointId,
}

/// Splits `dataset` into `count` contiguous shards and builds an index on
/// each with an exact kNN graph of degree `knn_k`.
pub fn build_shards(
    dataset: &Dataset,
    count: usize,
    knn_k: usize,
    params: BuildParams,
) -> Result<Vec<Shard>> {
    if count == 0 || count > dataset.len() {
        return Err(Error::usage("shard count must lie in 1..=n"));
    }
    let n = dataset.len();
    let mut shards = Vec::with_capacity(count);
    for s in 0..count {
        let (lo, hi) = (s * n / count, (s + 1) * n / count);
        let ids: Vec<PointId> = (lo as PointId..hi as PointId).collect();
        let data = dataset.select(&ids)?;
        let index = if data.len() == 1 {
            let mut g = crate::DirectedGraph::empty(1);
            g.seal();
            NsgIndex::new(g, 0, data.dim())?
        } else {
            let knn = exact_knn_graph(&data, knn_k.min(data.len() - 1))?;
            build_nsg(&knn, &data, params)?
        };
        shards.push(Shard {
            index,
            data,
            offset: lo as PointId,
        });
    }
    Ok(shards)
}

/// Searches every shard, maps results to global ids and keeps the global
/// top `k` by (distance, global id). Distances are true distances.
pub fn sharded_search(shards: &[Shard], query: &[f32], l: usize, k: usize) -> Result<Vec<Neighbor>> {
    let mut ranges: Vec<(u64, u64)> = shards
        .iter()
        .map(|s| (s.offset as u64, s.offset as u64 + s.data.len() as u64))
        .collect();
    ranges.sort_unstable();
    if ranges.windows(2).any(|w| w[1].0 < w[0].1) {
        return Err(Error::usage("shard id ranges overlap"));
    }
    if ranges.last().is_some_and(|r| r.1 > u32::MAX as u64) {
        return Err(Error::usage("shard ids exceed 32 bits"));
    }
    let mut merged = Vec::new();
    for shard in shards {
        shard.index.check_dataset(&shard.data)?;
        let kk = k.min(shard.data.len());
        let stats = Searcher::new(shard.data.len()).search(
            &shard.index.graph,
            &shard.data,
            query,
            SearchParams::new(l.max(kk), kk, shard.index.navigating_node),
        )?;
        merged.extend(stats.results.into_iter().map(|n| Neighbor {
            id: n.id + shard.offset,
            distance: n.distance,
            checked: false,
        }));
    }
    merged.sort_by(Neighbor::order);
    merged.truncate(k);
    Ok(merged)
}

/// Holds out `round(fraction * n)` (at least one) randomly chosen points as
/// queries; returns `(base, queries)` with the base keeping storage order.
pub fn holdout_split(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::usage("holdout fraction must lie in (0, 1)"));
    }
    let n = dataset.len();
    let take = ((fraction * n as f64).round() as usize).max(1);
    if take >= n {
        return Err(Error::usage("holdout would leave no base points"));
    }
    let mut ids: Vec<PointId> = (0..n as PointId).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held: Vec<PointId> = ids[..take].to_vec();
    let mut rest: Vec<PointId> = ids[take..].to_vec();
    held.sort_unstable();
    rest.sort_unstable();
    Ok((dataset.select(&rest)?, dataset.select(&held)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_dataset(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new((0..n * d).map(|_| rng.gen::<f32>()).collect(), d).unwrap()
    }

    #[test]
    fn precision_counts() {
        let a: Vec<PointId> = (0..10).collect();
        assert_eq!(precision_at_k(&a, &a).unwrap(), 1.0);
        let mut b = a.clone();
        b[3] = 99;
        assert!((precision_at_k(&b, &a).unwrap() - 0.9).abs() < 1e-12);
        let c: Vec<PointId> = (10..20).collect();
        assert_eq!(precision_at_k(&c, &a).unwrap(), 0.0);
        assert!(precision_at_k(&a[..3], &a).is_err());
    }

    #[test]
    fn ground_truth_self_query() {
        let ds = random_dataset(50, 3, 1);
        let q = ds.select(&[17]).unwrap();
        let gt = compute_ground_truth(&ds, &q, 1).unwrap();
        assert_eq!(gt.ids, vec![vec![17]]);
        assert_eq!(gt.distances, vec![vec![0.0]]);
        assert!(compute_ground_truth(&ds, &q, 50).is_err());
    }

    #[test]
    fn ground_truth_matches_f64_oracle() {
        let ds = random_dataset(100, 5, 2);
        let qs = random_dataset(20, 5, 3);
        let gt = compute_ground_truth(&ds, &qs, 10).unwrap();
        for (qi, q) in qs.iter().enumerate() {
            let mut all: Vec<(f64, PointId)> = ds
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    (p.iter().zip(q).map(|(a, b)| (*a as f64 - *b as f64).powi(2)).sum(), i as PointId)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<PointId> = all[..10].iter().map(|x| x.1).collect();
            assert_eq!(gt.ids[qi], want);
        }
        assert_eq!(gt, compute_ground_truth_with(&ds, &qs, 10, false).unwrap());
    }

    #[test]
    fn ground_truth_files() {
        let ds = random_dataset(60, 3, 4);
        let qs = random_dataset(5, 3, 5);
        let gt = compute_ground_truth(&ds, &qs, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (ip, dp) = (dir.path().join("gt.ivecs"), dir.path().join("gt.fvecs"));
        gt.save(&ip, Some(&dp)).unwrap();
        assert_eq!(GroundTruth::load(&ip, Some(&dp)).unwrap(), gt);
        assert_eq!(GroundTruth::load(&ip, None).unwrap().ids, gt.ids);
    }

    #[test]
    fn holdout_partitions_points() {
        let ds = random_dataset(1000, 2, 6);
        let (base, q) = holdout_split(&ds, 0.01, 9).unwrap();
        assert_eq!((base.len(), q.len()), (990, 10));
        for p in q.iter() {
            assert!(!base.iter().any(|b| b == p));
        }
        assert!(holdout_split(&ds, 1.0, 9).is_err());
    }

    #[test]
    fn overlapping_shards_rejected() {
        let ds = random_dataset(40, 2, 7);
        let mut shards = build_shards(&ds, 2, 5, BuildParams::new(10, 5, 1)).unwrap();
        shards[1].offset = 10;
        assert!(sharded_search(&shards, &[0.5, 0.5], 10, 3).is_err());
    }

    #[test]
    fn single_shard_equals_direct_search() {
        let ds = random_dataset(500, 4, 8);
        let shards = build_shards(&ds, 1, 10, BuildParams::new(30, 16, 2)).unwrap();
        let q = [0.3, 0.6, 0.1, 0.9];
        let direct = crate::search::search_nsg(&shards[0].index, &ds, &q, 20, 5).unwrap();
        assert_eq!(sharded_search(&shards, &q, 20, 5).unwrap(), direct.results.iter().map(|n| Neighbor { checked: false, ..*n }).collect::<Vec<_>>());
    }

    #[test]
    fn trend_violation_detection() {
        let mk = |l, precision| RecallCurvePoint {
            l,
            precision,
            qps: 0.0,
            qps_mean: 0.0,
            mean_distance_computations: 0.0,
            mean_hops: 0.0,
        };
        assert_eq!(precision_trend_violation(&[mk(10, 0.5), mk(20, 0.7)]), None);
        assert_eq!(precision_trend_violation(&[mk(10, 0.5), mk(20, 0.4)]), Some(1));
    }

    proptest! {
        #[test]
        fn precision_is_permutation_invariant(mut a in prop::collection::hash_set(0u32..50, 1..12), seed in 0u64..100) {
            let a: Vec<u32> = a.drain().collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<u32> = (0..a.len()).map(|_| rng.gen_range(0..50)).collect();
            let p = precision_at_k(&a, &b).unwrap();
            let mut a2 = a.clone();
            let mut b2 = b.clone();
            a2.shuffle(&mut rng);
            b2.shuffle(&mut rng);
            prop_assert_eq!(p, precision_at_k(&a2, &b2).unwrap());
        }
    }
}
