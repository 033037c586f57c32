//! KD-style spatial reordering.
//!
//! Recursive median splits along the widest axis turn an arbitrary point
//! cloud into an ordering where neighbors in the list are neighbors in
//! space, which makes delta coding of positions effective. Ties are
//! broken by coordinate then original index, so the permutation is a
//! pure function of the input.

use nalgebra::Vector3;

/// Permutation of `0..n` in KD traversal order.
pub fn kd_reorder(positions: &[Vector3<f32>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..positions.len()).collect();
    let mut out = Vec::with_capacity(positions.len());
    recurse(&mut idx, positions, &mut out);
    out
}

fn recurse(slice: &mut [usize], positions: &[Vector3<f32>], out: &mut Vec<usize>) {
    if slice.len() <= 1 {
        out.extend_from_slice(slice);
        return;
    }
    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for ax in 0..3 {
            lo[ax] = lo[ax].min(positions[i][ax]);
            hi[ax] = hi[ax].max(positions[i][ax]);
        }
    }
    let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
    slice.sort_unstable_by(|&a, &b| {
        positions[a][axis]
            .total_cmp(&positions[b][axis])
            .then(a.cmp(&b))
    });
    let mid = slice.len() / 2;
    let (left, right) = slice.split_at_mut(mid);
    recurse(left, positions, out);
    recurse(right, positions, out);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sorted_line_maps_to_identity() {
        let positions: Vec<Vector3<f32>> = (0..33)
            .map(|i| Vector3::new(i as f32 * 0.1, 0.0, 0.0))
            .collect();
        let order = kd_reorder(&positions);
        assert_eq!(order, (0..33).collect::<Vec<_>>());
    }

    #[test]
    fn output_is_a_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let positions: Vec<Vector3<f32>> = (0..257)
            .map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen()))
            .collect();
        let mut order = kd_reorder(&positions);
        order.sort_unstable();
        assert_eq!(order, (0..257).collect::<Vec<_>>());
    }

    fn path_length(positions: &[Vector3<f32>], order: &[usize]) -> f32 {
        order
            .windows(2)
            .map(|w| (positions[w[0]] - positions[w[1]]).norm())
            .sum()
    }

    #[test]
    fn reordering_shortens_the_traversal_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // Two tight clusters far apart, interleaved in index order.
        let positions: Vec<Vector3<f32>> = (0..200)
            .map(|i| {
                let c = if i % 2 == 0 { -10.0 } else { 10.0 };
                Vector3::new(
                    c + rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        let order = kd_reorder(&positions);
        let identity: Vec<usize> = (0..200).collect();
        let before = path_length(&positions, &identity);
        let after = path_length(&positions, &order);
        assert!(
            after < 0.1 * before,
            "kd path {after} not much shorter than {before}"
        );
    }

    #[test]
    fn duplicate_points_are_handled_deterministically() {
        let positions = vec![Vector3::new(1.0, 2.0, 3.0); 17];
        let order = kd_reorder(&positions);
        assert_eq!(order, (0..17).collect::<Vec<_>>());
    }
}
