//! Exhaustive MRNG and RNG construction.
//!
//! Both builders look at every other point as a candidate neighbor and are
//! meant for oracle-scale inputs (quadratic time and per-node memory).

use crate::graph::{is_sorted, sort_neighbors, Neighbor};
use crate::{par, Dataset, DirectedGraph, Error, PointId, Result};

/// Squared side lengths of triangle `p q r`, used to decide whether `r`
/// lies inside the lune of `pq`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lune {
    pub pq: f32,
    pub rp: f32,
    pub rq: f32,
}

impl Lune {
    pub fn new(dataset: &Dataset, p: PointId, q: PointId, r: PointId) -> Self {
        Lune {
            pq: dataset.sq_dist(p, q),
            rp: dataset.sq_dist(r, p),
            rq: dataset.sq_dist(r, q),
        }
    }

    /// `r` is strictly inside both balls of radius `|pq|`.
    pub fn contains_r(&self) -> bool {
        self.rp < self.pq && self.rq < self.pq
    }
}

/// Whether `r` lies in the open lune of `p` and `q`. Boundary points do not.
pub fn in_lune(p: PointId, q: PointId, r: PointId, dataset: &Dataset) -> Result<bool> {
    for (id, name) in [(p, "p"), (q, "q"), (r, "r")] {
        dataset.check_id(id, name)?;
    }
    if p == q || p == r || q == r {
        return Err(Error::usage(format!("lune test needs distinct ids, got {p}, {q}, {r}")));
    }
    Ok(Lune::new(dataset, p, q, r).contains_r())
}

/// MRNG edge selection for node `p`.
///
/// `candidates` must be sorted ascending by (squared distance to `p`, id)
/// and must not contain `p`. The nearest candidate is always kept; each
/// later candidate `q` is kept unless an already kept `r` satisfies
/// `|rq| < |pq|`. Because candidates arrive in ascending order `|pr| <= |pq|`
/// holds for every kept `r`, so this is the lune test, with equal-length
/// sides `|pr| == |pq|` resolved in favor of the lower id.
pub fn select_mrng_neighbors(
    dataset: &Dataset,
    p: PointId,
    candidates: &[Neighbor],
    cap: Option<usize>,
) -> Result<Vec<PointId>> {
    dataset.check_id(p, "node")?;
    if cfg!(debug_assertions) && !is_sorted(candidates) {
        return Err(Error::usage("candidates must be sorted by (distance, id)"));
    }
    if candidates.iter().any(|c| c.id == p) {
        return Err(Error::usage(format!("candidate list contains node {p} itself")));
    }
    if let Some(c) = candidates.iter().find(|c| c.id as usize >= dataset.len()) {
        return Err(Error::usage(format!("candidate {} out of range", c.id)));
    }
    Ok(select(dataset, candidates, cap.unwrap_or(usize::MAX)))
}

pub(crate) fn select(dataset: &Dataset, candidates: &[Neighbor], cap: usize) -> Vec<PointId> {
    let mut kept: Vec<Neighbor> = Vec::new();
    for &q in candidates {
        if kept.len() >= cap {
            break;
        }
        let conflict = kept.iter().any(|r| {
            debug_assert!(r.distance <= q.distance);
            dataset.sq_dist(r.id, q.id) < q.distance
        });
        if !conflict {
            kept.push(q);
        }
    }
    kept.into_iter().map(|n| n.id).collect()
}

/// All other points sorted by (squared distance to `p`, id).
fn ranked(dataset: &Dataset, p: PointId) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = (0..dataset.len() as PointId)
        .filter(|&u| u != p)
        .map(|u| Neighbor::new(u, dataset.sq_dist(p, u)))
        .collect();
    sort_neighbors(&mut all);
    all
}

fn check_size(dataset: &Dataset) -> Result<()> {
    if dataset.len() < 2 {
        return Err(Error::usage("need at least two points"));
    }
    Ok(())
}

/// Exhaustive MRNG: every node runs [`select_mrng_neighbors`] over all
/// other points.
pub fn build_mrng(dataset: &Dataset) -> Result<DirectedGraph> {
    build_mrng_with(dataset, true)
}

pub fn build_mrng_with(dataset: &Dataset, parallel: bool) -> Result<DirectedGraph> {
    check_size(dataset)?;
    let rows = par::map_range(dataset.len(), parallel, |p| {
        select(dataset, &ranked(dataset, p as PointId), usize::MAX)
    });
    let mut g = DirectedGraph::from_rows_unchecked(rows);
    g.seal();
    Ok(g)
}

/// Exhaustive RNG, stored with both directions of every edge.
pub fn build_rng(dataset: &Dataset) -> Result<DirectedGraph> {
    build_rng_with(dataset, true)
}

pub fn build_rng_with(dataset: &Dataset, parallel: bool) -> Result<DirectedGraph> {
    check_size(dataset)?;
    let rows = par::map_range(dataset.len(), parallel, |p| {
        let all = ranked(dataset, p as PointId);
        let mut row = Vec::new();
        for (j, q) in all.iter().enumerate() {
            // only points strictly closer to p than q can sit in the lune
            let empty = all[..j]
                .iter()
                .take_while(|r| r.distance < q.distance)
                .all(|r| dataset.sq_dist(r.id, q.id) >= q.distance);
            if empty {
                row.push(q.id);
            }
        }
        row
    });
    let mut g = DirectedGraph::from_rows_unchecked(rows);
    g.seal();
    Ok(g)
}
