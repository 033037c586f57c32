//! Multi-cue importance scoring.
//!
//! Each Gaussian receives a scalar score in [0, 1] fused from two cue
//! groups: geometric cues (accumulated position-gradient norm, peak
//! window-weighted opacity, mean inverse depth, largest covariance
//! eigenvalue, motion magnitude) and perceptual cues (residual-weighted
//! contribution, covered pixel area, inverse variance of the per-view
//! contribution). Cues are min-max normalized per column, averaged within
//! each group, combined with a group weight, and normalized once more so
//! the final scores span [0, 1].

use crate::image_buf::ImageBuf;
use crate::render::{render, render_scored, GradientSet, RenderOutput};
use crate::scene::dynamics::window_weight;
use crate::scene::{CameraView, Extras, GaussianSet};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Variance regularizer for the contribution-stability cue.
const VAR_EPS: f64 = 1e-6;

/// Weights and options for cue fusion.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    /// Per-cue weights for the geometric group (gradient, opacity, depth,
    /// eigenvalue, motion).
    pub w_geometric: [f32; 5],
    /// Per-cue weights for the perceptual group (residual, area,
    /// contribution stability).
    pub w_perceptual: [f32; 3],
    /// Weight of the perceptual group relative to the geometric group.
    pub lambda_gm: f32,
    /// Maximum number of (view, frame) pairs scanned per refresh; 0 = all.
    pub sample_views: usize,
    /// Compute the residual cue by re-rendering with each Gaussian removed
    /// instead of the cheap contribution-weighted approximation.
    pub exact_loo: bool,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            w_geometric: [1.0; 5],
            w_perceptual: [1.0; 3],
            lambda_gm: 2.0,
            sample_views: 0,
            exact_loo: false,
        }
    }
}

/// Raw per-Gaussian cue values before normalization.
#[derive(Debug, Clone)]
pub struct CueMatrix {
    pub grad_norm: Vec<f32>,
    pub alpha_max: Vec<f32>,
    pub inv_depth: Vec<f32>,
    pub max_eigen: Vec<f32>,
    pub motion: Vec<f32>,
    pub residual: Vec<f32>,
    pub area: Vec<f32>,
    pub inv_var: Vec<f32>,
}

impl CueMatrix {
    pub fn len(&self) -> usize {
        self.grad_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_norm.is_empty()
    }

    fn geometric(&self) -> [&[f32]; 5] {
        [
            &self.grad_norm,
            &self.alpha_max,
            &self.inv_depth,
            &self.max_eigen,
            &self.motion,
        ]
    }

    fn perceptual(&self) -> [&[f32]; 3] {
        [&self.residual, &self.area, &self.inv_var]
    }
}

/// Streaming builder for a [`CueMatrix`]; feed it one observation per
/// rendered (view, time) pair.
#[derive(Debug, Clone)]
pub struct CueAccumulator {
    n: usize,
    grad_norm: Vec<f64>,
    alpha_max: Vec<f32>,
    inv_depth_sum: Vec<f64>,
    visible: Vec<u32>,
    residual: Vec<f64>,
    area: Vec<f64>,
    contrib_sum: Vec<f64>,
    contrib_sq: Vec<f64>,
}

impl CueAccumulator {
    pub fn new(n: usize) -> Self {
        CueAccumulator {
            n,
            grad_norm: vec![0.0; n],
            alpha_max: vec![0.0; n],
            inv_depth_sum: vec![0.0; n],
            visible: vec![0; n],
            residual: vec![0.0; n],
            area: vec![0.0; n],
            contrib_sum: vec![0.0; n],
            contrib_sq: vec![0.0; n],
        }
    }

    /// Record one rendered view at normalized time `t`. `grads` supplies the
    /// position-gradient cue when a backward pass was run for this view.
    pub fn observe_view(
        &mut self,
        set: &GaussianSet,
        t: f32,
        out: &RenderOutput,
        grads: Option<&GradientSet>,
    ) {
        assert_eq!(set.len(), self.n);
        assert_eq!(out.mean_depth.len(), self.n);
        for i in 0..self.n {
            let win = match &set.extras[i] {
                Extras::Static(_) => 1.0,
                Extras::Dynamic(d) => window_weight(d, t),
            };
            let a = set.cores[i].opacity() * win;
            if a > self.alpha_max[i] {
                self.alpha_max[i] = a;
            }
            let depth = out.mean_depth[i];
            if depth.is_finite() && depth > 0.0 {
                self.visible[i] += 1;
                self.inv_depth_sum[i] += 1.0 / depth as f64;
                let c = out.contribution[i] as f64;
                self.contrib_sum[i] += c;
                self.contrib_sq[i] += c * c;
                self.area[i] += out.pixel_area[i] as f64;
                self.residual[i] += out.residual_weighted[i] as f64;
            }
            if let Some(g) = grads {
                self.grad_norm[i] += g.position[i].norm() as f64;
            }
        }
    }

    /// Finish accumulation, filling in the intrinsic cues from the set.
    pub fn finish(&self, set: &GaussianSet) -> CueMatrix {
        assert_eq!(set.len(), self.n);
        let mut inv_depth = vec![0.0f32; self.n];
        let mut inv_var = vec![0.0f32; self.n];
        for i in 0..self.n {
            let v = self.visible[i] as f64;
            if v >= 1.0 {
                inv_depth[i] = (self.inv_depth_sum[i] / v) as f32;
            }
            if v >= 2.0 {
                let mean = self.contrib_sum[i] / v;
                let var = (self.contrib_sq[i] / v - mean * mean).max(0.0);
                inv_var[i] = (1.0 / (var + VAR_EPS)) as f32;
            }
        }
        CueMatrix {
            grad_norm: self.grad_norm.iter().map(|&v| v as f32).collect(),
            alpha_max: self.alpha_max.clone(),
            inv_depth,
            max_eigen: (0..self.n).map(|i| set.cores[i].max_cov_eigenvalue()).collect(),
            motion: set.motion_magnitudes(),
            residual: self.residual.iter().map(|&v| v as f32).collect(),
            area: self.area.iter().map(|&v| v as f32).collect(),
            inv_var,
        }
    }

    /// Replace the accumulated residual column (used by the exact
    /// leave-one-out path).
    pub fn set_residuals(&mut self, residual: &[f64]) {
        assert_eq!(residual.len(), self.n);
        self.residual.copy_from_slice(residual);
    }

    /// Replace the gradient-norm column (the trainer accumulates it across
    /// its own backward passes rather than re-rendering here).
    pub fn set_grad_norms(&mut self, grad_norm: &[f64]) {
        assert_eq!(grad_norm.len(), self.n);
        self.grad_norm.copy_from_slice(grad_norm);
    }
}

/// Min-max normalize one cue column to [0, 1]; a constant column carries no
/// information and maps to all zeros.
pub fn minmax_column(col: &[f32]) -> Vec<f32> {
    let lo = col.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = col.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.0; col.len()];
    }
    col.iter().map(|&v| (v - lo) / span).collect()
}

fn weighted_group(columns: &[&[f32]], weights: &[f32], n: usize) -> Vec<f32> {
    let wsum: f32 = weights.iter().sum();
    let mut out = vec![0.0f32; n];
    if wsum <= 0.0 {
        return out;
    }
    for (col, &w) in columns.iter().zip(weights) {
        let normed = minmax_column(col);
        for (o, v) in out.iter_mut().zip(normed) {
            *o += w * v;
        }
    }
    for o in out.iter_mut() {
        *o /= wsum;
    }
    out
}

/// Fuse raw cues into final scores in [0, 1].
///
/// Level one min-max normalizes each cue column and averages the columns
/// within each group using the configured weights. Level two blends the two
/// group scores with `lambda_gm` and min-max normalizes the blend; when the
/// blend is constant (for example, a single Gaussian) every score is 0.5.
pub fn fuse(cues: &CueMatrix, cfg: &ScorerConfig) -> Vec<f32> {
    let n = cues.len();
    if n == 0 {
        return Vec::new();
    }
    let geo = weighted_group(&cues.geometric(), &cfg.w_geometric, n);
    let per = weighted_group(&cues.perceptual(), &cfg.w_perceptual, n);
    let denom = 1.0 + cfg.lambda_gm;
    let blend: Vec<f32> = geo
        .iter()
        .zip(&per)
        .map(|(g, p)| (g + cfg.lambda_gm * p) / denom)
        .collect();
    let lo = blend.iter().cloned().fold(f32::INFINITY, f32::min);
    let hi = blend.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![0.5; n];
    }
    blend.iter().map(|&v| (v - lo) / span).collect()
}

/// One (camera, time, reference image) triple for scoring or training.
#[derive(Clone, Copy)]
pub struct ViewSample<'a> {
    pub view: &'a CameraView,
    pub t: f32,
    pub gt: &'a ImageBuf,
    pub background: Vector3<f32>,
}

/// Exact leave-one-out residuals: for every Gaussian, the summed absolute
/// image change when it is removed from the scene, over all samples.
///
/// Costs one render per Gaussian per sample; intended for small scenes and
/// verification. Gaussians whose gate is already zero change nothing and
/// score exactly zero.
pub fn exact_loo_residuals(set: &GaussianSet, samples: &[ViewSample]) -> Vec<f64> {
    let mut residual = vec![0.0f64; set.len()];
    let mut work = set.clone();
    for s in samples {
        let full = render(set, s.view, s.t, s.background).image;
        for i in 0..set.len() {
            if set.cores[i].gate_activation == 0.0 {
                continue;
            }
            let saved = work.cores[i].gate_activation;
            work.cores[i].gate_activation = 0.0;
            let without = render(&work, s.view, s.t, s.background).image;
            work.cores[i].gate_activation = saved;
            let diff: f64 = full
                .data
                .iter()
                .zip(&without.data)
                .map(|(a, b)| (a - b).abs() as f64)
                .sum();
            residual[i] += diff;
        }
    }
    residual
}

/// Score every Gaussian by rendering the given samples and fusing the cues.
///
/// Gradient cues are not populated on this path (no backward pass is run);
/// the trainer feeds its own accumulator instead.
pub fn score_set(set: &GaussianSet, samples: &[ViewSample], cfg: &ScorerConfig) -> Vec<f32> {
    let mut acc = CueAccumulator::new(set.len());
    let limit = if cfg.sample_views == 0 {
        samples.len()
    } else {
        cfg.sample_views.min(samples.len())
    };
    for s in &samples[..limit] {
        let out = render_scored(set, s.view, s.t, s.background, s.gt);
        acc.observe_view(set, s.t, &out, None);
    }
    if cfg.exact_loo {
        acc.set_residuals(&exact_loo_residuals(set, &samples[..limit]));
    }
    fuse(&acc.finish(set), cfg)
}

/// Shift scores so the `n_target`-th largest lands exactly on 0.5, then
/// clamp to [0, 1]. Thresholding at 0.5 afterwards keeps `n_target`
/// Gaussians (ties notwithstanding). With fewer than `n_target` Gaussians
/// every score lands at or above 0.5.
pub fn recenter_scores(scores: &mut [f32], n_target: usize) {
    if scores.is_empty() || n_target == 0 {
        return;
    }
    let mut sorted: Vec<f32> = scores.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let pivot = sorted[n_target.min(sorted.len()) - 1];
    for s in scores.iter_mut() {
        *s = (*s - pivot + 0.5).clamp(0.0, 1.0);
    }
}
