//! Differentiable Gaussian-count budget control.
//!
//! Each Gaussian's importance score `m` in [0, 1] passes through a
//! temperature-controlled hard-sigmoid gate producing an activation `c`.
//! The sum of activations is a differentiable proxy for the live Gaussian
//! count; a squared penalty against the target count supplies gradient
//! pressure on the scores, and the temperature anneals geometrically so the
//! gate sharpens into a step over the enforcement phase.

use crate::scene::GaussianSet;
use serde::{Deserialize, Serialize};

/// Budget-control parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Target Gaussian count after binarization.
    pub n_target: usize,
    /// Gate temperature at the start of enforcement.
    pub tau_init: f32,
    /// Gate temperature at the end of enforcement.
    pub tau_end: f32,
    /// Weight of the squared count penalty.
    pub lambda_b: f32,
    /// Iteration where annealing starts.
    pub k_start: u64,
    /// Iteration where annealing ends.
    pub k_end: u64,
}

impl BudgetConfig {
    pub fn new(n_target: usize, k_start: u64, k_end: u64) -> Self {
        BudgetConfig {
            n_target,
            tau_init: 1.0,
            tau_end: 0.01,
            lambda_b: 1e-7,
            k_start,
            k_end,
        }
    }
}

/// Hard-sigmoid gate: `clamp((m - 0.5) / tau + 0.5, 0, 1)`.
#[inline]
pub fn gate(m: f32, tau: f32) -> f32 {
    ((m - 0.5) / tau + 0.5).clamp(0.0, 1.0)
}

/// Subgradient of [`gate`] w.r.t. `m`: `1/tau` strictly inside the linear
/// band, zero where the clamp saturates.
#[inline]
pub fn gate_grad(m: f32, tau: f32) -> f32 {
    let pre = (m - 0.5) / tau + 0.5;
    if pre > 0.0 && pre < 1.0 {
        1.0 / tau
    } else {
        0.0
    }
}

/// Differentiable proxy count: sum of gate activations.
pub fn proxy_count(activations: &[f32]) -> f64 {
    activations.iter().map(|&c| c as f64).sum()
}

/// Squared deviation of the proxy count from the target.
#[inline]
pub fn budget_loss(n_proxy: f64, n_target: usize) -> f64 {
    let d = n_proxy - n_target as f64;
    d * d
}

/// Gradient of [`budget_loss`] w.r.t. every activation (shared scalar),
/// since each activation contributes one unit to the proxy count.
#[inline]
pub fn budget_loss_grad(n_proxy: f64, n_target: usize) -> f64 {
    2.0 * (n_proxy - n_target as f64)
}

/// Geometric temperature schedule from `tau_init` to `tau_end` over
/// `[k_start, k_end]`, clamped outside the interval.
pub fn anneal_temperature(k: u64, cfg: &BudgetConfig) -> f32 {
    if k <= cfg.k_start || cfg.k_end <= cfg.k_start {
        return cfg.tau_init;
    }
    if k >= cfg.k_end {
        return cfg.tau_end;
    }
    let frac = (k - cfg.k_start) as f64 / (cfg.k_end - cfg.k_start) as f64;
    let v = cfg.tau_init as f64 * (cfg.tau_end as f64 / cfg.tau_init as f64).powf(frac);
    v as f32
}

/// Remove Gaussians whose activation falls below `threshold`; survivors get
/// an exact activation of 1. Returns the surviving count.
pub fn binarize(set: &mut GaussianSet, threshold: f32) -> usize {
    let remove: Vec<usize> = (0..set.len())
        .filter(|&i| set.cores[i].gate_activation < threshold)
        .collect();
    set.remove_indices(&remove);
    for c in set.cores.iter_mut() {
        c.gate_activation = 1.0;
    }
    set.len()
}
