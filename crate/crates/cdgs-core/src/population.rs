//! Population control: growth scheduling, densification, and pruning.
//!
//! The population ramps from a sub-target starting count to the final
//! budget along a quadratic schedule. At each control event, new Gaussians
//! are spawned from parents sampled proportionally to their importance
//! (splitting large parents, cloning small ones), and removals are sampled
//! proportionally to (1 - importance) from the bottom half of the score
//! ranking. Gaussians that are effectively dead (vanishing opacity or
//! gate) are removed unconditionally.

use crate::render::GradientSet;
use crate::scene::{Extras, GaussianSet};
use nalgebra::Vector3;
use rand::Rng;

/// Opacity below which a Gaussian is removed regardless of importance.
pub const DEAD_OPACITY: f32 = 0.005;
/// Gate activation below which a Gaussian is removed regardless of importance.
pub const DEAD_GATE: f32 = 0.01;
/// A parent whose largest scale exceeds this fraction of the scene extent
/// is split in two; smaller parents are cloned.
pub const SPLIT_EXTENT_FRACTION: f32 = 0.01;
/// Scale shrink factor applied to both children of a split.
pub const SPLIT_SCALE_SHRINK: f32 = 1.6;

/// Starting population: well below target, but large enough to cover the
/// scene (`max(1, min(target/2, 4 * target^0.9))`).
pub fn initial_count(n_target: usize) -> usize {
    let half = (n_target as f64 / 2.0).floor();
    let cover = 4.0 * (n_target as f64).powf(0.9);
    half.min(cover).max(1.0).round() as usize
}

/// Population target after control event `j` of `total_events`: quadratic
/// ramp from `n_init` to `n_target`.
pub fn step_target(n_init: usize, n_target: usize, j: usize, total_events: usize) -> usize {
    if total_events == 0 || j >= total_events {
        return n_target;
    }
    let frac = j as f64 / total_events as f64;
    let v = n_init as f64 + (n_target as f64 - n_init as f64) * frac * frac;
    v.round().max(1.0) as usize
}

/// Draw `k` indices weighted by `weights`, without replacement. Falls back
/// to sampling with replacement (with a log warning) if `k` exceeds the
/// number of positive-weight entries.
fn weighted_sample(weights: &[f32], k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut w: Vec<f64> = weights.iter().map(|&v| v.max(0.0) as f64).collect();
    let positive = w.iter().filter(|&&v| v > 0.0).count();
    let with_replacement = k > positive;
    if with_replacement {
        log::warn!(
            "weighted sample of {k} from {positive} positive-weight entries; \
             falling back to replacement"
        );
        // Degenerate all-zero weights: sample uniformly.
        if positive == 0 {
            w.iter_mut().for_each(|v| *v = 1.0);
        }
    }
    let mut picks = Vec::with_capacity(k);
    let mut total: f64 = w.iter().sum();
    for _ in 0..k {
        if total <= 0.0 {
            break;
        }
        let mut u = rng.gen_range(0.0..total);
        let mut chosen = w.len() - 1;
        for (i, &wi) in w.iter().enumerate() {
            if wi <= 0.0 {
                continue;
            }
            if u < wi {
                chosen = i;
                break;
            }
            u -= wi;
        }
        picks.push(chosen);
        if !with_replacement {
            total -= w[chosen];
            w[chosen] = 0.0;
        }
    }
    picks
}

/// Largest-scale principal axis of a Gaussian in world space.
fn principal_axis(set: &GaussianSet, i: usize) -> (Vector3<f32>, f32) {
    let core = &set.cores[i];
    let scales = core.log_scale.map(f32::exp);
    let (mut k_max, mut s_max) = (0usize, scales.x);
    for k in 1..3 {
        if scales[k] > s_max {
            s_max = scales[k];
            k_max = k;
        }
    }
    let rot_raw = match &set.extras[i] {
        Extras::Static(_) => set.cores[i].rotation,
        // Use the mid-sequence orientation for trajectory-bound Gaussians.
        Extras::Dynamic(d) => d.traj_rot[d.traj_rot.len() / 2],
    };
    let (qh, _) = crate::math::quat_normalize(rot_raw);
    let rot = crate::math::quat_to_rot(qh);
    (rot.column(k_max).into_owned(), s_max)
}

fn translate(set: &mut GaussianSet, i: usize, offset: Vector3<f32>) {
    set.cores[i].position += offset;
    if let Extras::Dynamic(d) = &mut set.extras[i] {
        for p in d.traj_pos.iter_mut() {
            *p += offset;
        }
    }
}

fn spawn_copy(set: &mut GaussianSet, parent: usize) -> usize {
    let core = set.cores[parent].clone();
    let extras = set.extras[parent].clone();
    set.push(core, extras);
    set.len() - 1
}

/// Outcome of one densification event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DensifyStats {
    pub splits: usize,
    pub clones: usize,
}

/// Add `n_add` Gaussians by sampling parents proportionally to `scores`.
///
/// Large parents split into two half-offset children with shrunken scales
/// (net +1); small parents are cloned, the copy nudged one small step down
/// the positional gradient when one is available.
pub fn densify(
    set: &mut GaussianSet,
    scores: &[f32],
    grads: Option<&GradientSet>,
    n_add: usize,
    extent: f32,
    rng: &mut impl Rng,
) -> DensifyStats {
    assert_eq!(scores.len(), set.len());
    let mut stats = DensifyStats::default();
    if n_add == 0 || set.is_empty() {
        return stats;
    }
    let parents = weighted_sample(scores, n_add, rng);
    for parent in parents {
        let (axis, s_max) = principal_axis(set, parent);
        if s_max > SPLIT_EXTENT_FRACTION * extent {
            // Split: parent becomes child A, child B pushed at the end.
            let offset = axis * (0.5 * s_max);
            let child_b = spawn_copy(set, parent);
            translate(set, parent, -offset);
            translate(set, child_b, offset);
            let shrink = SPLIT_SCALE_SHRINK.ln();
            for i in [parent, child_b] {
                set.cores[i].log_scale.iter_mut().for_each(|s| *s -= shrink);
            }
            stats.splits += 1;
        } else {
            let child = spawn_copy(set, parent);
            if let Some(g) = grads {
                let dir = g.position[parent];
                let norm = dir.norm();
                if norm > 1e-12 {
                    translate(set, child, dir * (-0.005 * extent / norm));
                }
            }
            stats.clones += 1;
        }
    }
    stats
}

/// Remove `n_remove` Gaussians sampled proportionally to `(1 - score)`,
/// restricted to the bottom half of the score ranking. Returns the removed
/// original indices in ascending order.
pub fn prune(
    set: &mut GaussianSet,
    scores: &[f32],
    n_remove: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    assert_eq!(scores.len(), set.len());
    if n_remove == 0 || set.is_empty() {
        return Vec::new();
    }
    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        scores[a]
            .partial_cmp(&scores[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let candidates = &order[..n.div_ceil(2)];
    let weights: Vec<f32> = candidates.iter().map(|&i| 1.0 - scores[i]).collect();
    let n_remove = n_remove.min(candidates.len());
    let picks = weighted_sample(&weights, n_remove, rng);
    let mut removed: Vec<usize> = picks.iter().map(|&p| candidates[p]).collect();
    removed.sort_unstable();
    removed.dedup();
    set.remove_indices(&removed);
    removed
}

/// Remove Gaussians with vanishing opacity or gate activation. Returns the
/// removed original indices in ascending order.
pub fn remove_dead(set: &mut GaussianSet) -> Vec<usize> {
    let dead: Vec<usize> = (0..set.len())
        .filter(|&i| {
            set.cores[i].opacity() < DEAD_OPACITY || set.cores[i].gate_activation < DEAD_GATE
        })
        .collect();
    set.remove_indices(&dead);
    dead
}
