//! Motion-based allocation of Gaussians to the static or dynamic branch.
//!
//! Per-Gaussian motion magnitudes are binned into a histogram, smoothed
//! with a mass-conserving moving average, and scanned for a two-peak
//! structure (a static mode near zero and a moving mode). The valley
//! between the two tallest peaks fixes the fraction of the population
//! treated as static; the split threshold is then read off the empirical
//! magnitude distribution at that fraction. Gaussians crossing the
//! threshold are converted between branches with exactly invertible
//! parameter mappings.

use crate::math::quat_normalize;
use crate::scene::{DynamicExtras, Extras, GaussianSet, Kind, StaticExtras};
use nalgebra::{Vector3, Vector4};
use serde::{Deserialize, Serialize};

/// Number of histogram bins.
pub const HIST_BINS: usize = 64;
/// Moving-average window (odd).
pub const SMOOTH_WIDTH: usize = 5;
/// Peaks closer than this many bins are treated as one mode (the taller
/// survives).
const MIN_PEAK_SEPARATION: usize = 5;
/// A peak must hold at least this fraction of total mass in its smoothed
/// bin to count as a mode; filters isolated tail samples.
const MIN_PEAK_HEIGHT_FRACTION: f64 = 0.005;
/// The valley must drop below this fraction of the lower peak for the
/// histogram to count as bimodal; rejects noise twins within one mode.
const VALLEY_DEPTH_RATIO: f64 = 0.5;

/// How the split threshold was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdRule {
    /// Bimodal histogram: valley between the two tallest peaks.
    TwoPeaks {
        left: usize,
        right: usize,
        valley: usize,
    },
    /// Fewer than two peaks; fixed high quantile used instead.
    FallbackQuantile,
    /// All magnitudes identical; nothing moves relative to anything else.
    AllUniform,
}

/// Threshold decision plus the evidence that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDecision {
    /// Magnitudes strictly above this value become dynamic.
    pub tau: f32,
    /// Fraction of the population at or below the threshold.
    pub alpha_fraction: f32,
    pub rule: ThresholdRule,
}

/// Branch populations after one allocation pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AllocationReport {
    pub decision: ThresholdDecision,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub moved_to_dynamic: usize,
    pub moved_to_static: usize,
}

/// Histogram of magnitudes over [0, max] with [`HIST_BINS`] bins.
pub fn build_histogram(magnitudes: &[f32], max: f32) -> Vec<f64> {
    let mut hist = vec![0.0f64; HIST_BINS];
    if max <= 0.0 {
        return hist;
    }
    let width = max / HIST_BINS as f32;
    for &m in magnitudes {
        let bin = ((m / width) as usize).min(HIST_BINS - 1);
        hist[bin] += 1.0;
    }
    hist
}

/// Centered moving average with half-sample mirror reflection at both
/// edges. The reflection counts every bin exactly [`SMOOTH_WIDTH`] times,
/// so total mass is conserved to rounding error.
pub fn smooth_histogram(hist: &[f64]) -> Vec<f64> {
    let b = hist.len() as isize;
    let half = (SMOOTH_WIDTH / 2) as isize;
    let reflect = |i: isize| -> usize {
        let j = if i < 0 {
            -i - 1
        } else if i >= b {
            2 * b - i - 1
        } else {
            i
        };
        j as usize
    };
    (0..b)
        .map(|i| {
            let mut s = 0.0;
            for k in -half..=half {
                s += hist[reflect(i + k)];
            }
            s / SMOOTH_WIDTH as f64
        })
        .collect()
}

/// Local maxima of the smoothed profile. A flat run of equal bins counts as
/// one peak (its centre bin) when the profile strictly rises into the run and
/// strictly falls after it — box-filtered integer counts tie often enough
/// that demanding strict inequality on both sides of a single bin would drop
/// real modes. Edge runs compare against their single inward neighbor.
fn find_peaks(smoothed: &[f64]) -> Vec<usize> {
    let n = smoothed.len();
    let mut peaks = Vec::new();
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && smoothed[j + 1] == smoothed[i] {
            j += 1;
        }
        let left_ok = i == 0 || smoothed[i - 1] < smoothed[i];
        let right_ok = j == n - 1 || smoothed[j + 1] < smoothed[i];
        if left_ok && right_ok {
            peaks.push(i + (j - i) / 2);
        }
        i = j + 1;
    }
    peaks
}

fn quantile(sorted: &[f32], fraction: f32) -> f32 {
    let idx = ((fraction as f64 * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[idx]
}

/// Choose the static/dynamic split threshold from raw motion magnitudes.
pub fn decide_threshold(magnitudes: &[f32]) -> ThresholdDecision {
    let uniform = ThresholdDecision {
        tau: f32::INFINITY,
        alpha_fraction: 1.0,
        rule: ThresholdRule::AllUniform,
    };
    if magnitudes.is_empty() {
        return uniform;
    }
    let lo = magnitudes.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = magnitudes.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    if hi <= 0.0 || hi == lo {
        return uniform;
    }

    let mut sorted = magnitudes.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let hist = build_histogram(magnitudes, hi);
    let smoothed = smooth_histogram(&hist);
    let fallback = || {
        let tau = quantile(&sorted, 0.9);
        let alpha =
            sorted.iter().filter(|&&m| m <= tau).count() as f32 / magnitudes.len() as f32;
        ThresholdDecision {
            tau,
            alpha_fraction: alpha,
            rule: ThresholdRule::FallbackQuantile,
        }
    };

    // Candidate modes: strict local maxima carrying non-trivial mass, with
    // near-duplicates suppressed in favor of the taller peak.
    let min_height = MIN_PEAK_HEIGHT_FRACTION * magnitudes.len() as f64;
    let mut by_height: Vec<usize> = find_peaks(&smoothed)
        .into_iter()
        .filter(|&p| smoothed[p] >= min_height)
        .collect();
    by_height.sort_by(|&a, &b| {
        smoothed[b]
            .partial_cmp(&smoothed[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = Vec::new();
    for p in by_height {
        if kept.iter().all(|&q| p.abs_diff(q) >= MIN_PEAK_SEPARATION) {
            kept.push(p);
        }
    }
    if kept.len() < 2 {
        return fallback();
    }
    let (mut left, mut right) = (kept[0], kept[1]);
    if left > right {
        std::mem::swap(&mut left, &mut right);
    }

    // Lowest smoothed bin strictly between the peaks; the dip must be
    // decisive or the two "modes" are noise on a single hump.
    let mut valley = left + 1;
    for i in left + 1..right {
        if smoothed[i] < smoothed[valley] {
            valley = i;
        }
    }
    if smoothed[valley] > VALLEY_DEPTH_RATIO * smoothed[left].min(smoothed[right]) {
        return fallback();
    }

    let width = hi / HIST_BINS as f32;
    let valley_edge = valley as f32 * width;
    let below = magnitudes.iter().filter(|&&m| m < valley_edge).count();
    let alpha = below as f32 / magnitudes.len() as f32;
    ThresholdDecision {
        tau: quantile(&sorted, alpha),
        alpha_fraction: alpha,
        rule: ThresholdRule::TwoPeaks {
            left,
            right,
            valley,
        },
    }
}

/// Promote a static Gaussian to the dynamic branch: the drift vector seeds
/// a straight-line trajectory through the current position, the window
/// opens over the full sequence.
fn to_dynamic(set: &mut GaussianSet, i: usize) {
    let k = set.traj_points as usize;
    let core = &set.cores[i];
    let drift = match &set.extras[i] {
        Extras::Static(s) => s.global_translation,
        Extras::Dynamic(_) => return,
    };
    let traj_pos: Vec<Vector3<f32>> = (0..k)
        .map(|j| core.position + drift * (j as f32 / (k - 1) as f32 - 0.5))
        .collect();
    // Seed the activation window fully open so promotion does not dim the
    // Gaussian anywhere in the observed time range.
    set.extras[i] = Extras::Dynamic(DynamicExtras {
        traj_pos,
        traj_rot: vec![core.rotation; k],
        window_start: crate::scene::WINDOW_MIN,
        window_end: crate::scene::WINDOW_MAX,
        window_sharpness: crate::scene::DEFAULT_WINDOW_SHARPNESS,
    });
}

/// Demote a dynamic Gaussian to the static branch: position becomes the
/// trajectory mean, the drift vector its net displacement, the rotation the
/// normalized mean control orientation. Exactly inverts [`to_dynamic`] for
/// straight-line trajectories.
fn to_static(set: &mut GaussianSet, i: usize) {
    let (mean_pos, drift, mean_rot) = match &set.extras[i] {
        Extras::Dynamic(d) => {
            let k = d.traj_pos.len();
            let mean: Vector3<f32> =
                d.traj_pos.iter().sum::<Vector3<f32>>() / k as f32;
            let drift = d.traj_pos[k - 1] - d.traj_pos[0];
            let rot_sum: Vector4<f32> = d.traj_rot.iter().sum();
            (mean, drift, quat_normalize(rot_sum).0)
        }
        Extras::Static(_) => return,
    };
    set.cores[i].position = mean_pos;
    set.cores[i].rotation = mean_rot;
    set.extras[i] = Extras::Static(StaticExtras {
        global_translation: drift,
    });
}

/// Apply a threshold decision, converting Gaussians across branches.
pub fn allocate(set: &mut GaussianSet, decision: &ThresholdDecision) -> AllocationReport {
    let magnitudes = set.motion_magnitudes();
    let mut moved_to_dynamic = 0;
    let mut moved_to_static = 0;
    for i in 0..set.len() {
        let dynamic = magnitudes[i] > decision.tau;
        match (set.kind(i), dynamic) {
            (Kind::Static, true) => {
                to_dynamic(set, i);
                moved_to_dynamic += 1;
            }
            (Kind::Dynamic, false) => {
                to_static(set, i);
                moved_to_static += 1;
            }
            _ => {}
        }
    }
    AllocationReport {
        decision: *decision,
        n_static: set.n_static(),
        n_dynamic: set.n_dynamic(),
        moved_to_dynamic,
        moved_to_static,
    }
}

/// Decide the threshold from the set's own magnitudes and apply it.
pub fn reallocate(set: &mut GaussianSet) -> AllocationReport {
    let decision = decide_threshold(&set.motion_magnitudes());
    allocate(set, &decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;
    use crate::scene::{CameraView, GaussianCore};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn smoothing_conserves_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let hist: Vec<f64> = (0..HIST_BINS).map(|_| rng.gen_range(0.0..50.0)).collect();
            let smoothed = smooth_histogram(&hist);
            let a: f64 = hist.iter().sum();
            let b: f64 = smoothed.iter().sum();
            assert!((a - b).abs() < 1e-9, "mass {a} vs {b}");
        }
    }

    #[test]
    fn smoothing_flattens_a_spike() {
        let mut hist = vec![0.0; HIST_BINS];
        hist[10] = 5.0;
        let smoothed = smooth_histogram(&hist);
        for i in 8..=12 {
            assert!((smoothed[i] - 1.0).abs() < 1e-12);
        }
        assert_eq!(smoothed[7], 0.0);
    }

    #[test]
    fn bimodal_magnitudes_split_at_the_valley() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let low = Normal::new(0.05f32, 0.01).unwrap();
        let high = Normal::new(0.5f32, 0.05).unwrap();
        let mut mags = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..800 {
            mags.push(low.sample(&mut rng).max(0.0));
            labels.push(false);
        }
        for _ in 0..200 {
            mags.push(high.sample(&mut rng).max(0.0));
            labels.push(true);
        }
        let d = decide_threshold(&mags);
        assert!(matches!(d.rule, ThresholdRule::TwoPeaks { .. }), "{d:?}");
        assert!(d.tau > 0.1 && d.tau < 0.4, "tau {}", d.tau);
        let errors = mags
            .iter()
            .zip(&labels)
            .filter(|(&m, &is_high)| (m > d.tau) != is_high)
            .count();
        assert!(errors <= 20, "{errors} misclassified of 1000");
    }

    #[test]
    fn unimodal_magnitudes_fall_back_to_high_quantile() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = Normal::new(0.2f32, 0.03).unwrap();
        let mags: Vec<f32> = (0..500).map(|_| n.sample(&mut rng).max(0.0)).collect();
        let d = decide_threshold(&mags);
        assert_eq!(d.rule, ThresholdRule::FallbackQuantile);
        let below = mags.iter().filter(|&&m| m <= d.tau).count() as f32 / 500.0;
        assert!((below - 0.9).abs() < 0.02, "fallback keeps {below} static");
    }

    #[test]
    fn identical_magnitudes_mean_all_static() {
        let d = decide_threshold(&[0.3; 50]);
        assert_eq!(d.rule, ThresholdRule::AllUniform);
        assert!(0.3 <= d.tau);
        assert_eq!(decide_threshold(&[]).rule, ThresholdRule::AllUniform);
    }

    fn drifting_static(drift: Vector3<f32>) -> GaussianSet {
        let mut set = GaussianSet::new(0, 4);
        let mut g = GaussianCore::new(Vector3::new(0.05, -0.02, 0.1)).with_rgb([0.8, 0.3, 0.2]);
        g.opacity_logit = logit(0.7);
        g.log_scale = Vector3::repeat(-1.3);
        set.push(
            g,
            Extras::Static(StaticExtras {
                global_translation: drift,
            }),
        );
        set
    }

    #[test]
    fn promotion_seeds_a_straight_line_through_the_position() {
        let drift = Vector3::new(0.2, 0.0, -0.1);
        let mut set = drifting_static(drift);
        let before = set.cores[0].position;
        to_dynamic(&mut set, 0);
        let Extras::Dynamic(d) = &set.extras[0] else {
            panic!("expected dynamic");
        };
        assert_eq!(d.traj_pos.len(), 4);
        assert!((d.traj_pos[3] - d.traj_pos[0] - drift).norm() < 1e-6);
        let mid = (d.traj_pos[0] + d.traj_pos[3]) / 2.0;
        assert!((mid - before).norm() < 1e-6);
        assert_eq!(
            (d.window_start, d.window_end),
            (crate::scene::WINDOW_MIN, crate::scene::WINDOW_MAX)
        );
    }

    #[test]
    fn promote_then_demote_is_identity() {
        let drift = Vector3::new(0.2, 0.0, -0.1);
        let mut set = drifting_static(drift);
        let (pos0, rot0) = (set.cores[0].position, set.cores[0].rotation);
        to_dynamic(&mut set, 0);
        to_static(&mut set, 0);
        assert!((set.cores[0].position - pos0).norm() < 1e-6);
        let (q0, _) = quat_normalize(rot0);
        assert!((set.cores[0].rotation - q0).norm() < 1e-6);
        let Extras::Static(s) = &set.extras[0] else {
            panic!("expected static");
        };
        assert!((s.global_translation - drift).norm() < 1e-6);
    }

    #[test]
    fn straight_line_dynamic_renders_identically_after_demotion() {
        let drift = Vector3::new(0.3, -0.05, 0.0);
        let mut set = drifting_static(drift);
        to_dynamic(&mut set, 0);
        let mut collapsed = set.clone();
        to_static(&mut collapsed, 0);
        let view = CameraView::look_at(
            0,
            0,
            32,
            32,
            60.0,
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::zeros(),
        );
        for t in [0.0f32, 0.3, 0.5, 0.8, 1.0] {
            let a = crate::render::render(&set, &view, t, Vector3::zeros()).image;
            let b = crate::render::render(&collapsed, &view, t, Vector3::zeros()).image;
            let max_diff = a
                .data
                .iter()
                .zip(&b.data)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f32, f32::max);
            // The open window still attenuates ~5e-5 at t=0 and t=1 where its
            // logistic edges sit half a sequence away; the static twin does not.
            assert!(max_diff < 2e-4, "t {t}: max pixel diff {max_diff}");
        }
    }

    #[test]
    fn allocation_moves_only_threshold_crossers() {
        let mut set = GaussianSet::new(0, 4);
        for (i, mag) in [0.01f32, 0.02, 0.5, 0.6].iter().enumerate() {
            let mut g = GaussianCore::new(Vector3::new(i as f32 * 0.1, 0.0, 0.0));
            g.opacity_logit = logit(0.5);
            set.push(
                g,
                Extras::Static(StaticExtras {
                    global_translation: Vector3::new(*mag, 0.0, 0.0),
                }),
            );
        }
        let decision = ThresholdDecision {
            tau: 0.1,
            alpha_fraction: 0.5,
            rule: ThresholdRule::FallbackQuantile,
        };
        let report = allocate(&mut set, &decision);
        assert_eq!(report.moved_to_dynamic, 2);
        assert_eq!(report.moved_to_static, 0);
        assert_eq!((report.n_static, report.n_dynamic), (2, 2));
        assert_eq!(set.kind(0), Kind::Static);
        assert_eq!(set.kind(3), Kind::Dynamic);
        // Second pass is a fixed point: magnitudes are preserved by the
        // conversions, so nobody moves back.
        let report2 = allocate(&mut set, &decision);
        assert_eq!(report2.moved_to_dynamic + report2.moved_to_static, 0);
    }

    #[test]
    fn report_serializes_to_json() {
        let report = AllocationReport {
            decision: ThresholdDecision {
                tau: 0.25,
                alpha_fraction: 0.8,
                rule: ThresholdRule::TwoPeaks {
                    left: 3,
                    right: 40,
                    valley: 17,
                },
            },
            n_static: 80,
            n_dynamic: 20,
            moved_to_dynamic: 5,
            moved_to_static: 1,
        };
        let json = serde_json::to_string_pretty(&report).unwrap();
        let back: AllocationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.decision, report.decision);
        assert_eq!(back.n_static, 80);
    }
}
