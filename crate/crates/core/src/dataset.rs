use std::collections::HashMap;

use crate::{Error, Result};

/// Index of a point within its [`Dataset`]. Storage order doubles as the
/// tie-break order wherever two distances compare equal.
pub type PointId = u32;

/// `n` points of dimension `d` stored row-major in one buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    data: Vec<f32>,
    n: usize,
    d: usize,
}

impl Dataset {
    /// Wraps a row-major buffer. Fails unless the buffer holds a positive
    /// whole number of finite `d`-dimensional points.
    pub fn new(data: Vec<f32>, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::usage("dimension must be at least 1"));
        }
        if data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(Error::usage(format!(
                "buffer of {} floats is not a positive multiple of d={d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(format!(
                "non-finite value at point {} coordinate {}",
                pos / d,
                pos % d
            )));
        }
        let n = data.len() / d;
        if n > u32::MAX as usize - 1 {
            return Err(Error::usage("too many points for 32-bit ids"));
        }
        Ok(Dataset { data, n, d })
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::usage("rows have differing dimensions"));
        }
        Dataset::new(rows.concat(), d)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn point(&self, id: PointId) -> &[f32] {
        let start = id as usize * self.d;
        &self.data[start..start + self.d]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.d)
    }

    /// Squared distance between two stored points.
    #[inline]
    pub(crate) fn sq_dist(&self, a: PointId, b: PointId) -> f32 {
        crate::metric::sq_dist(self.point(a), self.point(b))
    }

    /// Squared distance from a stored point to an external query.
    #[inline]
    pub(crate) fn sq_dist_to(&self, a: PointId, query: &[f32]) -> f32 {
        crate::metric::sq_dist(self.point(a), query)
    }

    pub(crate) fn check_id(&self, id: PointId, what: &str) -> Result<()> {
        if (id as usize) < self.n {
            Ok(())
        } else {
            Err(Error::usage(format!("{what} {id} out of range (n={})", self.n)))
        }
    }

    pub(crate) fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() == self.d {
            Ok(())
        } else {
            Err(Error::usage(format!(
                "query has dimension {}, dataset has {}",
                query.len(),
                self.d
            )))
        }
    }

    /// The first `count` points as a new dataset.
    pub fn prefix(&self, count: usize) -> Result<Dataset> {
        if count == 0 || count > self.n {
            return Err(Error::usage(format!(
                "prefix of {count} points requested from {}",
                self.n
            )));
        }
        Dataset::new(self.data[..count * self.d].to_vec(), self.d)
    }

    /// The points at `ids`, in the given order.
    pub fn select(&self, ids: &[PointId]) -> Result<Dataset> {
        let mut data = Vec::with_capacity(ids.len() * self.d);
        for &id in ids {
            self.check_id(id, "point")?;
            data.extend_from_slice(self.point(id));
        }
        Dataset::new(data, self.d)
    }

    /// Coordinate-wise mean, accumulated in `f64`.
    pub fn centroid(&self) -> Vec<f32> {
        let mut acc = vec![0f64; self.d];
        for p in self.iter() {
            for (a, &v) in acc.iter_mut().zip(p) {
                *a += v as f64;
            }
        }
        acc.into_iter().map(|a| (a / self.n as f64) as f32).collect()
    }

    /// FNV-1a over the raw little-endian bytes plus the shape.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h = OFFSET;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(&(self.n as u64).to_le_bytes());
        eat(&(self.d as u64).to_le_bytes());
        for v in &self.data {
            eat(&v.to_le_bytes());
        }
        h
    }

    /// Groups of ids whose coordinates are bit-identical. Each group is
    /// sorted and has at least two members; groups are ordered by first id.
    ///
    /// `-0.0` and `0.0` compare as different points here even though their
    /// distance is zero.
    pub fn duplicate_groups(&self) -> Vec<Vec<PointId>> {
        let mut seen: HashMap<Vec<u32>, usize> = HashMap::new();
        let mut groups: Vec<Vec<PointId>> = Vec::new();
        for (i, p) in self.iter().enumerate() {
            let key: Vec<u32> = p.iter().map(|v| v.to_bits()).collect();
            match seen.get(&key) {
                Some(&g) => groups[g].push(i as PointId),
                None => {
                    seen.insert(key, groups.len());
                    groups.push(vec![i as PointId]);
                }
            }
        }
        groups.retain(|g| g.len() > 1);
        groups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_buffers() {
        assert!(Dataset::new(vec![], 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], 0).is_err());
        assert!(Dataset::new(vec![1.0, f32::NAN], 2).is_err());
        assert!(Dataset::new(vec![1.0, f32::INFINITY], 1).is_err());
    }

    #[test]
    fn shape_and_access() {
        let ds = Dataset::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.dim(), 3);
        assert_eq!(ds.point(1), &[4.0, 5.0, 6.0]);
        assert_eq!(ds.centroid(), vec![2.5, 3.5, 4.5]);
        assert_eq!(ds.prefix(1).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(ds.select(&[1, 0]).unwrap().point(0), &[4.0, 5.0, 6.0]);
        assert!(ds.check_id(2, "id").is_err());
    }

    #[test]
    fn flags_duplicates() {
        let ds = Dataset::from_rows(&[
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
            vec![2.0, 2.0],
            vec![1.0, 1.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        assert_eq!(ds.duplicate_groups(), vec![vec![0, 2, 5], vec![1, 4]]);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Dataset::new(vec![1.0, 2.0], 1).unwrap();
        let b = Dataset::new(vec![1.0, 2.0], 2).unwrap();
        let c = Dataset::new(vec![1.0, 2.5], 1).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
