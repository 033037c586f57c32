//! Trajectory evaluation for dynamic Gaussians.

use super::DynamicExtras;
use crate::math::sigmoid;
use nalgebra::{Vector3, Vector4};

/// Pose of a dynamic Gaussian at one normalized time.
#[derive(Debug, Clone, PartialEq)]
pub struct DynState {
    pub position: Vector3<f32>,
    /// Interpolated quaternion before normalization; callers normalize when
    /// building a rotation matrix so gradients can flow through the norm.
    pub rotation_raw: Vector4<f32>,
    /// Opacity multiplier from the activation window, in (0, 1).
    pub window_weight: f32,
}

/// Locate `t` on the uniform control-point grid: returns the segment index and
/// the interpolation weight of the right-hand control point.
#[inline]
pub fn interp_segment(k: usize, t: f32) -> (usize, f32) {
    debug_assert!(k >= 2);
    let t = t.clamp(0.0, 1.0);
    let x = t * (k - 1) as f32;
    let seg = (x.floor() as usize).min(k - 2);
    (seg, x - seg as f32)
}

/// Piecewise-linear pose interpolation plus the soft activation window
/// `sigmoid((t - start) * sharpness) * sigmoid((end - t) * sharpness)`.
pub fn evaluate_dynamic_state(d: &DynamicExtras, t: f32) -> DynState {
    let k = d.traj_pos.len();
    let (seg, w) = interp_segment(k, t);
    let position = d.traj_pos[seg] * (1.0 - w) + d.traj_pos[seg + 1] * w;
    let rotation_raw = d.traj_rot[seg] * (1.0 - w) + d.traj_rot[seg + 1] * w;
    let window_weight = window_weight(d, t);
    DynState {
        position,
        rotation_raw,
        window_weight,
    }
}

/// The window multiplier alone.
#[inline]
pub fn window_weight(d: &DynamicExtras, t: f32) -> f32 {
    sigmoid((t - d.window_start) * d.window_sharpness)
        * sigmoid((d.window_end - t) * d.window_sharpness)
}

/// Partial derivatives of the window weight w.r.t. (start, end).
#[inline]
pub fn window_weight_backward(d: &DynamicExtras, t: f32) -> (f32, f32) {
    let kappa = d.window_sharpness;
    let a = sigmoid((t - d.window_start) * kappa);
    let b = sigmoid((d.window_end - t) * kappa);
    let d_start = -kappa * a * (1.0 - a) * b;
    let d_end = kappa * b * (1.0 - b) * a;
    (d_start, d_end)
}
