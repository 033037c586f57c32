//! Outlier extraction for heavy-tailed channels.
//!
//! Quantization ranges are fit after removing extreme values; the
//! extremes themselves ride along as raw floats packed into a square,
//! zero-padded plane, so a handful of far-flung Gaussians cannot ruin
//! the precision of everyone else.

use nalgebra::Vector3;

/// Indices whose distance from the centroid exceeds mean + 3 sigma.
pub fn position_outliers(positions: &[Vector3<f32>]) -> Vec<u32> {
    let n = positions.len();
    if n < 2 {
        return Vec::new();
    }
    let centroid: Vector3<f32> = positions.iter().sum::<Vector3<f32>>() / n as f32;
    let dist: Vec<f32> = positions.iter().map(|p| (p - centroid).norm()).collect();
    let mean = dist.iter().sum::<f32>() / n as f32;
    let var = dist.iter().map(|d| (d - mean).powi(2)).sum::<f32>() / n as f32;
    let cut = mean + 3.0 * var.sqrt();
    (0..n as u32).filter(|&i| dist[i as usize] > cut).collect()
}

/// The `count` indices farthest from the channel median, ascending.
pub fn channel_outliers(values: &[f32], count: usize) -> Vec<u32> {
    let n = values.len();
    let count = count.min(n);
    if count == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f32> = values.to_vec();
    sorted.sort_unstable_by(f32::total_cmp);
    let median = sorted[(n - 1) / 2];
    let mut by_dist: Vec<u32> = (0..n as u32).collect();
    by_dist.sort_unstable_by(|&a, &b| {
        let da = (values[a as usize] - median).abs();
        let db = (values[b as usize] - median).abs();
        db.total_cmp(&da).then(a.cmp(&b))
    });
    let mut picked: Vec<u32> = by_dist[..count].to_vec();
    picked.sort_unstable();
    picked
}

/// Pack raw values into a `side * side` zero-padded plane.
pub fn pack_square(values: &[f32]) -> (u32, Vec<f32>) {
    let side = (values.len() as f64).sqrt().ceil() as u32;
    let mut plane = values.to_vec();
    plane.resize((side * side) as usize, 0.0);
    (side, plane)
}

/// First `count` values of a packed plane.
pub fn unpack_square(plane: &[f32], count: usize) -> &[f32] {
    &plane[..count]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn far_points_are_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut positions: Vec<Vector3<f32>> = (0..500)
            .map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0))
            .collect();
        positions[17] = Vector3::new(500.0, 0.0, 0.0);
        positions[230] = Vector3::new(0.0, -800.0, 0.0);
        let out = position_outliers(&positions);
        assert_eq!(out, vec![17, 230]);
    }

    #[test]
    fn tight_cloud_has_no_outliers() {
        let positions: Vec<Vector3<f32>> = (0..100)
            .map(|i| Vector3::new((i % 10) as f32, (i / 10) as f32, 0.0))
            .collect();
        assert!(position_outliers(&positions).is_empty());
    }

    #[test]
    fn channel_outliers_pick_the_farthest_from_median() {
        let values = vec![0.0f32, 0.1, -0.1, 9.0, 0.05, -7.0, 0.2];
        let out = channel_outliers(&values, 2);
        assert_eq!(out, vec![3, 5]);
    }

    #[test]
    fn channel_outlier_count_clamps() {
        assert_eq!(channel_outliers(&[1.0, 2.0], 5).len(), 2);
        assert!(channel_outliers(&[1.0, 2.0], 0).is_empty());
        assert!(channel_outliers(&[], 3).is_empty());
    }

    #[test]
    fn square_packing_roundtrips() {
        let values = vec![1.0f32, 2.0, 3.0, 4.0, 5.0];
        let (side, plane) = pack_square(&values);
        assert_eq!(side, 3);
        assert_eq!(plane.len(), 9);
        assert_eq!(unpack_square(&plane, 5), values.as_slice());
        assert!(plane[5..].iter().all(|&v| v == 0.0));

        let (side, plane) = pack_square(&[]);
        assert_eq!(side, 0);
        assert!(plane.is_empty());
    }
}
