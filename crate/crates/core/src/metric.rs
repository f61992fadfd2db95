//! The l2 metric.
//!
//! Accumulation is in `f32`. The summation order depends only on the
//! coordinate index, and `(a - b)^2 == (b - a)^2` exactly in IEEE-754, so
//! `sq_dist(a, b)` and `sq_dist(b, a)` are bit-identical.

use crate::{Error, Result};

const LANES: usize = 8;

/// Squared euclidean distance without a dimension check.
///
/// Callers guarantee `a.len() == b.len()`.
#[inline]
pub fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0f32; LANES];
    let mut ca = a.chunks_exact(LANES);
    let mut cb = b.chunks_exact(LANES);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for i in 0..LANES {
            let t = x[i] - y[i];
            acc[i] += t * t;
        }
    }
    let mut tail = 0f32;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        let t = x - y;
        tail += t * t;
    }
    let s0 = (acc[0] + acc[4]) + (acc[1] + acc[5]);
    let s1 = (acc[2] + acc[6]) + (acc[3] + acc[7]);
    (s0 + s1) + tail
}

fn check_dims(a: &[f32], b: &[f32]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::usage(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Squared l2 distance. Order-equivalent to [`l2_distance`].
pub fn l2_distance_sq(a: &[f32], b: &[f32]) -> Result<f32> {
    check_dims(a, b)?;
    Ok(sq_dist(a, b))
}

/// Euclidean distance `sqrt(sum (a_i - b_i)^2)`.
pub fn l2_distance(a: &[f32], b: &[f32]) -> Result<f32> {
    check_dims(a, b)?;
    Ok(sq_dist(a, b).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn reference_f64(a: &[f32], b: &[f32]) -> f64 {
        a.iter()
            .zip(b)
            .map(|(&x, &y)| {
                let t = x as f64 - y as f64;
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn three_four_five() {
        assert_eq!(l2_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(l2_distance_sq(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn identical_points() {
        let p = [1.5, -2.0, 7.0];
        assert_eq!(l2_distance(&p, &p).unwrap(), 0.0);
        assert_eq!(l2_distance_sq(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_dimensions() {
        assert!(matches!(
            l2_distance(&[1.0], &[1.0, 2.0]),
            Err(Error::Usage(_))
        ));
        assert!(l2_distance_sq(&[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    #[test]
    fn matches_f64_accumulation_128d() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let a: Vec<f32> = (0..128).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let b: Vec<f32> = (0..128).map(|_| rng.gen_range(-10.0..10.0)).collect();
            let got = l2_distance(&a, &b).unwrap() as f64;
            let want = reference_f64(&a, &b);
            assert!((got - want).abs() <= 1e-5 * want, "{got} vs {want}");
        }
    }

    fn point(d: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-100f32..100f32, d)
    }

    fn unit(d: usize) -> impl Strategy<Value = Vec<f32>> {
        prop::collection::vec(-1f32..1f32, d)
    }

    proptest! {
        #[test]
        fn symmetric_bitwise((a, b) in (1usize..40).prop_flat_map(|d| (point(d), point(d)))) {
            prop_assert_eq!(sq_dist(&a, &b).to_bits(), sq_dist(&b, &a).to_bits());
        }

        #[test]
        fn triangle_inequality((a, b, c) in (1usize..20).prop_flat_map(|d| (unit(d), unit(d), unit(d)))) {
            let ab = l2_distance(&a, &b).unwrap();
            let bc = l2_distance(&b, &c).unwrap();
            let ac = l2_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-4);
        }

        #[test]
        fn squared_preserves_order((p, cands) in (1usize..12).prop_flat_map(|d| (point(d), prop::collection::vec(point(d), 1..30)))) {
            let mut by_sq: Vec<usize> = (0..cands.len()).collect();
            let mut by_true = by_sq.clone();
            by_sq.sort_by(|&i, &j| sq_dist(&p, &cands[i]).total_cmp(&sq_dist(&p, &cands[j])).then(i.cmp(&j)));
            by_true.sort_by(|&i, &j| {
                l2_distance(&p, &cands[i]).unwrap()
                    .total_cmp(&l2_distance(&p, &cands[j]).unwrap())
                    .then(i.cmp(&j))
            });
            // sqrt is monotone but may merge two adjacent squared values into one;
            // the squared order must then be a refinement of the true order
            for w in by_sq.windows(2) {
                let (x, y) = (l2_distance(&p, &cands[w[0]]).unwrap(), l2_distance(&p, &cands[w[1]]).unwrap());
                prop_assert!(x <= y);
            }
            if by_sq != by_true {
                for (i, j) in by_sq.iter().zip(&by_true) {
                    prop_assert_eq!(l2_distance(&p, &cands[*i]).unwrap(), l2_distance(&p, &cands[*j]).unwrap());
                }
            }
        }
    }
}
