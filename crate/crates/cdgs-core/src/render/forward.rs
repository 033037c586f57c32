//! Splat projection and tile-based front-to-back compositing.
//!
//! The 3D covariance `R S S^T R^T` is pushed through the world-to-camera
//! rotation and the perspective Jacobian at the splat center, yielding a 2D
//! Gaussian per splat. Splats are depth-sorted once per view (ties broken by
//! Gaussian index), binned into 16x16 pixel tiles, and composited until
//! transmittance is exhausted.

use crate::math::{quat_normalize, quat_to_rot};
use crate::scene::{CameraView, GaussianSet, SH_C0, SH_C1};
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3};

pub(crate) const TILE: usize = 16;
pub(crate) const NEAR_PLANE: f32 = 0.01;
/// Screen-space low-pass dilation added to the 2D covariance diagonal so
/// sub-pixel splats still cover their nearest sample.
pub(crate) const DILATION: f32 = 0.3;
/// Per-splat opacity ceiling; keeps `1 - alpha` safely away from zero for
/// the backward pass's transmittance recovery.
pub(crate) const ALPHA_CLAMP: f32 = 0.99;
/// Contributions below this opacity are skipped.
pub(crate) const MIN_ALPHA: f32 = 1.0 / 255.0;
/// Kernel support cut at the 3-sigma ellipse: exp(-4.5).
pub(crate) const POWER_CUTOFF: f32 = -4.5;
/// Compositing stops when transmittance drops below this.
pub(crate) const T_STOP: f32 = 1e-4;
/// A pixel counts toward a splat's area when its blending weight exceeds this.
pub(crate) const AREA_WEIGHT_MIN: f32 = 1e-4;

/// One projected Gaussian in a single view.
#[derive(Debug, Clone)]
pub(crate) struct Splat {
    pub gauss: usize,
    pub depth: f32,
    pub center: [f32; 2],
    /// Inverse 2D covariance (a, b, c) for [[a, b], [b, c]].
    pub conic: [f32; 3],
    /// 2D covariance (a, b, c) including dilation.
    /// Gate x opacity x window multiplier.
    pub alpha_hat: f32,
    pub rgb: [f32; 3],
    /// Channels whose pre-clamp color was non-positive (gradient masked).
    pub rgb_clamped: [bool; 3],
    /// 3-sigma bounding radius in pixels.
    pub radius: f32,
    pub x_cam: Vector3<f32>,
    /// Window multiplier alone (1 for static splats).
    pub window: f32,
    /// Unit view direction and its pre-normalization length (degree >= 1).
    pub dir: Vector3<f32>,
    pub dir_len: f32,
}

/// Perspective Jacobian at a camera-space point.
#[inline]
pub(crate) fn projection_jacobian(view: &CameraView, p: &Vector3<f32>) -> Matrix2x3<f32> {
    let z_inv = 1.0 / p.z;
    let z_inv2 = z_inv * z_inv;
    Matrix2x3::new(
        view.fx * z_inv,
        0.0,
        -view.fx * p.x * z_inv2,
        0.0,
        view.fy * z_inv,
        -view.fy * p.y * z_inv2,
    )
}

/// Evaluate the color of Gaussian `i` toward `dir` (unit, world frame).
fn eval_color(set: &GaussianSet, i: usize, dir: &Vector3<f32>) -> ([f32; 3], [bool; 3]) {
    let c = &set.cores[i].color;
    let mut rgb = [0.0f32; 3];
    let mut clamped = [false; 3];
    for ch in 0..3 {
        let mut v = SH_C0 * c[ch] + 0.5;
        if set.sh_degree >= 1 {
            v += SH_C1 * (dir.x * c[3 + ch] + dir.y * c[6 + ch] + dir.z * c[9 + ch]);
        }
        if v <= 0.0 {
            rgb[ch] = 0.0;
            clamped[ch] = true;
        } else {
            rgb[ch] = v;
        }
    }
    (rgb, clamped)
}

/// Project one Gaussian; `None` when it cannot contribute to this view.
pub(crate) fn project_splat(
    set: &GaussianSet,
    i: usize,
    view: &CameraView,
    t: f32,
) -> Option<Splat> {
    let (pos_w, rot_raw, window) = set.resolved_pose(i, t);
    let core = &set.cores[i];
    let alpha_hat = core.gate_activation * core.opacity() * window;
    if alpha_hat < MIN_ALPHA {
        return None;
    }
    let x_cam = view.rotation * pos_w + view.translation;
    if x_cam.z < NEAR_PLANE {
        return None;
    }

    let (qh, _) = quat_normalize(rot_raw);
    let rot = quat_to_rot(qh);
    let s = core.log_scale.map(f32::exp);
    let m3 = rot * Matrix3::from_diagonal(&s);
    let v3 = m3 * m3.transpose();
    let cov_cam = view.rotation * v3 * view.rotation.transpose();
    let j = projection_jacobian(view, &x_cam);
    let cov2m: Matrix2<f32> = j * cov_cam * j.transpose();
    let a = cov2m[(0, 0)] + DILATION;
    let b = cov2m[(0, 1)];
    let c = cov2m[(1, 1)] + DILATION;
    let det = a * c - b * b;
    if det <= 1e-12 || !det.is_finite() {
        return None;
    }
    let conic = [c / det, -b / det, a / det];
    let center = [
        view.fx * x_cam.x / x_cam.z + view.cx,
        view.fy * x_cam.y / x_cam.z + view.cy,
    ];
    let lam_max = 0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let radius = 3.0 * lam_max.sqrt();
    // Reject splats whose support cannot reach the image.
    if center[0] + radius < 0.0
        || center[1] + radius < 0.0
        || center[0] - radius > view.width as f32
        || center[1] - radius > view.height as f32
    {
        return None;
    }

    let (dir, dir_len) = if set.sh_degree >= 1 {
        let d = pos_w - view.center_world();
        let len = d.norm().max(1e-9);
        (d / len, len)
    } else {
        (Vector3::zeros(), 1.0)
    };
    let (rgb, rgb_clamped) = eval_color(set, i, &dir);

    Some(Splat {
        gauss: i,
        depth: x_cam.z,
        center,
        conic,
        alpha_hat,
        rgb,
        rgb_clamped,
        radius,
        x_cam,
        window,
        dir,
        dir_len,
    })
}

/// All splats of a view, depth-sorted, plus per-tile index lists.
pub(crate) struct Frame {
    pub splats: Vec<Splat>,
    pub tiles: Vec<Vec<u32>>,
    pub tiles_x: usize,
}

pub(crate) fn prepare_frame(set: &GaussianSet, view: &CameraView, t: f32) -> Frame {
    let mut splats: Vec<Splat> = (0..set.len())
        .filter_map(|i| project_splat(set, i, view, t))
        .collect();
    splats.sort_by(|a, b| {
        a.depth
            .partial_cmp(&b.depth)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.gauss.cmp(&b.gauss))
    });
    let tiles_x = view.width.div_ceil(TILE);
    let tiles_y = view.height.div_ceil(TILE);
    let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let x0 = ((s.center[0] - s.radius).floor().max(0.0)) as usize;
        let y0 = ((s.center[1] - s.radius).floor().max(0.0)) as usize;
        if x0 >= view.width || y0 >= view.height {
            continue;
        }
        let x1 = ((s.center[0] + s.radius).ceil() as usize).min(view.width - 1);
        let y1 = ((s.center[1] + s.radius).ceil() as usize).min(view.height - 1);
        if x1 < x0 || y1 < y0 {
            continue;
        }
        for ty in y0 / TILE..=y1 / TILE {
            for tx in x0 / TILE..=x1 / TILE {
                tiles[ty * tiles_x + tx].push(si as u32);
            }
        }
    }
    Frame {
        splats,
        tiles,
        tiles_x,
    }
}

/// Per-splat-per-pixel kernel evaluation shared verbatim by the forward and
/// backward passes so skip decisions agree bit-for-bit.
#[inline]
pub(crate) fn eval_kernel(s: &Splat, px: f32, py: f32) -> Option<KernelSample> {
    let dx = px - s.center[0];
    let dy = py - s.center[1];
    let power = -0.5 * (s.conic[0] * dx * dx + s.conic[2] * dy * dy) - s.conic[1] * dx * dy;
    if power < POWER_CUTOFF {
        return None;
    }
    let g = power.exp();
    let alpha_raw = s.alpha_hat * g;
    if alpha_raw < MIN_ALPHA {
        return None;
    }
    let clamped = alpha_raw > ALPHA_CLAMP;
    let alpha_eff = if clamped { ALPHA_CLAMP } else { alpha_raw };
    Some(KernelSample {
        alpha_eff,
        g,
        dx,
        dy,
        clamped,
    })
}

pub(crate) struct KernelSample {
    pub alpha_eff: f32,
    pub g: f32,
    pub dx: f32,
    pub dy: f32,
    pub clamped: bool,
}

/// Pixel rectangle of a tile: (x0, y0, x1, y1) half-open.
#[inline]
pub(crate) fn tile_rect(
    tile_idx: usize,
    tiles_x: usize,
    width: usize,
    height: usize,
) -> (usize, usize, usize, usize) {
    let tx = tile_idx % tiles_x;
    let ty = tile_idx / tiles_x;
    let x0 = tx * TILE;
    let y0 = ty * TILE;
    (x0, y0, (x0 + TILE).min(width), (y0 + TILE).min(height))
}
