use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};

use crate::{Error, PointId, Result};

/// A point id paired with its distance to some reference point.
///
/// Inside the builders and the search pool `distance` holds the squared l2
/// distance. Values returned through [`crate::SearchStats::results`] and
/// [`crate::bench::GroundTruth`] hold the true distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: PointId,
    pub distance: f32,
    pub checked: bool,
}

impl Neighbor {
    #[inline]
    pub fn new(id: PointId, distance: f32) -> Self {
        Neighbor {
            id,
            distance,
            checked: false,
        }
    }

    /// Ascending by distance, ties by ascending id.
    #[inline]
    pub fn order(&self, other: &Neighbor) -> Ordering {
        self.distance
            .total_cmp(&other.distance)
            .then(self.id.cmp(&other.id))
    }
}

pub(crate) fn sort_neighbors(list: &mut [Neighbor]) {
    list.sort_unstable_by(Neighbor::order);
}

pub(crate) fn is_sorted(list: &[Neighbor]) -> bool {
    list.windows(2).all(|w| w[0].order(&w[1]) == Ordering::Less)
}

/// Out-edge lists for `n` nodes.
///
/// Rows keep insertion order, which for every builder in this crate is
/// ascending distance from the row's node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    adj: Vec<Vec<PointId>>,
    declared_max_out_degree: Option<u32>,
}

impl DirectedGraph {
    /// `n` nodes, no edges.
    pub fn empty(n: usize) -> Self {
        DirectedGraph {
            adj: vec![Vec::new(); n],
            declared_max_out_degree: None,
        }
    }

    /// Builds a graph from explicit rows, rejecting self-loops, duplicates
    /// within a row and out-of-range ids.
    pub fn from_adjacency(adj: Vec<Vec<PointId>>) -> Result<Self> {
        let g = DirectedGraph {
            adj,
            declared_max_out_degree: None,
        };
        g.validate()?;
        Ok(g)
    }

    /// Rows assumed valid; checked in debug builds only.
    pub(crate) fn from_rows_unchecked(adj: Vec<Vec<PointId>>) -> Self {
        let g = DirectedGraph {
            adj,
            declared_max_out_degree: None,
        };
        debug_assert!(g.validate().is_ok(), "{:?}", g.validate());
        g
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.adj.len();
        let mut seen = HashSet::new();
        for (v, row) in self.adj.iter().enumerate() {
            seen.clear();
            for &u in row {
                if u as usize >= n {
                    return Err(Error::Corruption(format!(
                        "node {v} links to {u}, beyond n={n}"
                    )));
                }
                if u as usize == v {
                    return Err(Error::Corruption(format!("self-loop at node {v}")));
                }
                if !seen.insert(u) {
                    return Err(Error::Corruption(format!(
                        "node {v} lists neighbor {u} twice"
                    )));
                }
            }
        }
        if let Some(m) = self.declared_max_out_degree {
            if self.max_out_degree() > m as usize {
                return Err(Error::Corruption(format!(
                    "out-degree {} exceeds declared maximum {m}",
                    self.max_out_degree()
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.adj.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    #[inline]
    pub fn neighbors(&self, id: PointId) -> &[PointId] {
        &self.adj[id as usize]
    }

    pub fn rows(&self) -> &[Vec<PointId>] {
        &self.adj
    }

    pub fn out_degree(&self, id: PointId) -> usize {
        self.adj[id as usize].len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.adj.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn mean_out_degree(&self) -> f64 {
        if self.adj.is_empty() {
            return 0.0;
        }
        self.edge_count() as f64 / self.adj.len() as f64
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }

    pub fn has_edge(&self, from: PointId, to: PointId) -> bool {
        self.adj[from as usize].contains(&to)
    }

    /// Appends `from -> to`. Returns `false` when the edge already exists.
    pub fn add_edge(&mut self, from: PointId, to: PointId) -> Result<bool> {
        let n = self.adj.len();
        if from as usize >= n || to as usize >= n {
            return Err(Error::usage(format!("edge {from}->{to} out of range")));
        }
        if from == to {
            return Err(Error::usage(format!("self-loop at {from}")));
        }
        let row = &mut self.adj[from as usize];
        if row.contains(&to) {
            return Ok(false);
        }
        row.push(to);
        Ok(true)
    }

    pub fn declared_max_out_degree(&self) -> Option<u32> {
        self.declared_max_out_degree
    }

    /// Records a cap. Fails if some row is already longer.
    pub fn declare_max_out_degree(&mut self, m: u32) -> Result<()> {
        if self.max_out_degree() > m as usize {
            return Err(Error::usage(format!(
                "cannot declare max out-degree {m}: graph already has {}",
                self.max_out_degree()
            )));
        }
        self.declared_max_out_degree = Some(m);
        Ok(())
    }

    /// Sets the declared cap to the true maximum out-degree.
    pub fn seal(&mut self) {
        self.declared_max_out_degree = Some(self.max_out_degree() as u32);
    }

    /// Breadth-first reachability from `start`.
    pub fn reachable_from(&self, start: PointId) -> Vec<bool> {
        let mut seen = vec![false; self.adj.len()];
        if (start as usize) >= self.adj.len() {
            return seen;
        }
        let mut queue = VecDeque::from([start]);
        seen[start as usize] = true;
        while let Some(v) = queue.pop_front() {
            for &u in &self.adj[v as usize] {
                if !seen[u as usize] {
                    seen[u as usize] = true;
                    queue.push_back(u);
                }
            }
        }
        seen
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_rows() {
        assert!(DirectedGraph::from_adjacency(vec![vec![0]]).is_err());
        assert!(DirectedGraph::from_adjacency(vec![vec![1, 1], vec![]]).is_err());
        assert!(DirectedGraph::from_adjacency(vec![vec![2], vec![]]).is_err());
        assert!(DirectedGraph::from_adjacency(vec![vec![1], vec![0]]).is_ok());
    }

    #[test]
    fn degree_bookkeeping() {
        let mut g = DirectedGraph::from_adjacency(vec![vec![1, 2], vec![0], vec![]]).unwrap();
        assert_eq!(g.max_out_degree(), 2);
        assert_eq!(g.edge_count(), 3);
        assert!((g.mean_out_degree() - 1.0).abs() < 1e-12);
        assert!(g.declare_max_out_degree(1).is_err());
        g.seal();
        assert_eq!(g.declared_max_out_degree(), Some(2));
        assert!(g.add_edge(2, 0).unwrap());
        assert!(!g.add_edge(2, 0).unwrap());
        assert!(g.add_edge(2, 2).is_err());
    }

    #[test]
    fn reachability() {
        let g = DirectedGraph::from_adjacency(vec![vec![1], vec![2], vec![], vec![0]]).unwrap();
        assert_eq!(g.reachable_from(0), vec![true, true, true, false]);
        assert_eq!(g.reachable_from(3), vec![true; 4]);
    }

    #[test]
    fn neighbor_order_breaks_ties_by_id() {
        let mut v = vec![
            Neighbor::new(5, 1.0),
            Neighbor::new(2, 1.0),
            Neighbor::new(9, 0.5),
        ];
        sort_neighbors(&mut v);
        let ids: Vec<_> = v.iter().map(|n| n.id).collect();
        assert_eq!(ids, vec![9, 2, 5]);
        assert!(is_sorted(&v));
    }
}
