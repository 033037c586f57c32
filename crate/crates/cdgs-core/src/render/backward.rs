//! Reverse-mode gradients for the splat renderer.
//!
//! The backward pass re-runs the forward kernel evaluation (the shared
//! [`eval_kernel`] guarantees identical skip decisions), walks each pixel's
//! contributor list back to front recovering the transmittance by division,
//! and then pushes per-splat screen-space gradients through the projection
//! chain: conic -> 2D covariance -> camera covariance and Jacobian ->
//! world covariance -> rotation/scale, plus the position, opacity, gate,
//! window, and color paths. Everything is closed-form; no autodiff.

use super::forward::{eval_kernel, tile_rect, Frame};
use super::loss::{render_loss, render_loss_backward, LossBreakdown};
use super::render_internal;
use crate::image_buf::ImageBuf;
use crate::math::{quat_normalize, quat_normalize_backward, quat_rot_backward, quat_to_rot};
use crate::scene::dynamics::{interp_segment, window_weight_backward};
use crate::scene::{CameraView, Extras, GaussianSet, SH_C0, SH_C1};
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector3, Vector4};
use rayon::prelude::*;

/// Gradients for every learnable attribute of a [`GaussianSet`].
///
/// `position` always holds the instantaneous world-position gradient of the
/// rendered pose. For static Gaussians this is also the parameter gradient
/// of `position`; for dynamic ones the parameter gradients live in
/// `traj_pos`/`traj_rot` and `position` serves only as a saliency signal.
#[derive(Debug, Clone)]
pub struct GradientSet {
    pub position: Vec<Vector3<f32>>,
    pub rotation: Vec<Vector4<f32>>,
    pub log_scale: Vec<Vector3<f32>>,
    pub opacity_logit: Vec<f32>,
    pub color: Vec<[f32; 12]>,
    /// Gradient with respect to the soft keep-gate activation.
    pub gate: Vec<f32>,
    /// Static only: gradient of the per-Gaussian drift vector.
    pub drift: Vec<Vector3<f32>>,
    /// Dynamic only: gradients of the trajectory control points.
    pub traj_pos: Vec<Vec<Vector3<f32>>>,
    pub traj_rot: Vec<Vec<Vector4<f32>>>,
    /// Dynamic only: gradients of (window_start, window_end).
    pub window: Vec<[f32; 2]>,
}

impl GradientSet {
    pub fn zeros(set: &GaussianSet) -> Self {
        let n = set.len();
        let traj_pos = set
            .extras
            .iter()
            .map(|e| match e {
                Extras::Dynamic(d) => vec![Vector3::zeros(); d.traj_pos.len()],
                Extras::Static(_) => Vec::new(),
            })
            .collect();
        let traj_rot = set
            .extras
            .iter()
            .map(|e| match e {
                Extras::Dynamic(d) => vec![Vector4::zeros(); d.traj_rot.len()],
                Extras::Static(_) => Vec::new(),
            })
            .collect();
        GradientSet {
            position: vec![Vector3::zeros(); n],
            rotation: vec![Vector4::zeros(); n],
            log_scale: vec![Vector3::zeros(); n],
            opacity_logit: vec![0.0; n],
            color: vec![[0.0; 12]; n],
            gate: vec![0.0; n],
            drift: vec![Vector3::zeros(); n],
            traj_pos,
            traj_rot,
            window: vec![[0.0; 2]; n],
        }
    }

    /// Accumulate another gradient set (same scene layout) into this one.
    pub fn add_assign(&mut self, other: &GradientSet) {
        assert_eq!(self.position.len(), other.position.len());
        for i in 0..self.position.len() {
            self.position[i] += other.position[i];
            self.rotation[i] += other.rotation[i];
            self.log_scale[i] += other.log_scale[i];
            self.opacity_logit[i] += other.opacity_logit[i];
            for k in 0..12 {
                self.color[i][k] += other.color[i][k];
            }
            self.gate[i] += other.gate[i];
            self.drift[i] += other.drift[i];
            for (a, b) in self.traj_pos[i].iter_mut().zip(&other.traj_pos[i]) {
                *a += *b;
            }
            for (a, b) in self.traj_rot[i].iter_mut().zip(&other.traj_rot[i]) {
                *a += *b;
            }
            self.window[i][0] += other.window[i][0];
            self.window[i][1] += other.window[i][1];
        }
    }
}

/// Screen-space gradient accumulators for one splat, summed over pixels.
#[derive(Debug, Clone, Copy, Default)]
struct SplatAccum {
    conic: [f64; 3],
    center: [f64; 2],
    alpha_hat: f64,
    rgb: [f64; 3],
}

impl SplatAccum {
    fn add(&mut self, o: &SplatAccum) {
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.rgb[k] += o.rgb[k];
        }
        self.center[0] += o.center[0];
        self.center[1] += o.center[1];
        self.alpha_hat += o.alpha_hat;
    }
}

/// Back-propagate the pixel gradient through one tile's compositing chain.
fn backward_tile(
    frame: &Frame,
    tile_idx: usize,
    width: usize,
    height: usize,
    background: Vector3<f32>,
    upstream: &[f64],
    n_contrib: &[u32],
    t_final: &[f32],
) -> Vec<(u32, SplatAccum)> {
    let (x0, y0, x1, y1) = tile_rect(tile_idx, frame.tiles_x, width, height);
    let list = &frame.tiles[tile_idx];
    let mut acc: Vec<(u32, SplatAccum)> =
        list.iter().map(|&si| (si, SplatAccum::default())).collect();
    // (list position, alpha_eff, g, dx, dy, clamped) for one pixel.
    let mut hits: Vec<(usize, f32, f32, f32, f32, bool)> = Vec::with_capacity(list.len());

    for y in y0..y1 {
        for x in x0..x1 {
            let gi = y * width + x;
            let count = n_contrib[gi] as usize;
            if count == 0 {
                continue;
            }
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            hits.clear();
            for (k, &si) in list.iter().enumerate() {
                if hits.len() == count {
                    break;
                }
                if let Some(ks) = eval_kernel(&frame.splats[si as usize], px, py) {
                    hits.push((k, ks.alpha_eff, ks.g, ks.dx, ks.dy, ks.clamped));
                }
            }
            debug_assert_eq!(hits.len(), count);

            let u = [
                upstream[gi * 3],
                upstream[gi * 3 + 1],
                upstream[gi * 3 + 2],
            ];
            let mut t_trans = t_final[gi] as f64;
            // Suffix of the compositing sum seen from behind splat i,
            // background included.
            let mut suffix = [
                background.x as f64 * t_trans,
                background.y as f64 * t_trans,
                background.z as f64 * t_trans,
            ];
            for &(k, alpha_eff, g, dx, dy, clamped) in hits.iter().rev() {
                let s = &frame.splats[list[k] as usize];
                let ae = alpha_eff as f64;
                let t_before = t_trans / (1.0 - ae); // safe: alpha_eff <= 0.99
                let w = ae * t_before;
                let a = &mut acc[k].1;
                let mut d_alpha = 0.0f64;
                for ch in 0..3 {
                    a.rgb[ch] += u[ch] * w;
                    d_alpha += u[ch] * (s.rgb[ch] as f64 * t_before - suffix[ch] / (1.0 - ae));
                }
                if !clamped {
                    // alpha_eff = alpha_hat * g here.
                    a.alpha_hat += d_alpha * g as f64;
                    let gp = d_alpha * s.alpha_hat as f64 * g as f64;
                    let (dxf, dyf) = (dx as f64, dy as f64);
                    a.conic[0] += gp * (-0.5 * dxf * dxf);
                    a.conic[1] += gp * (-dxf * dyf);
                    a.conic[2] += gp * (-0.5 * dyf * dyf);
                    let (c0, c1, c2) =
                        (s.conic[0] as f64, s.conic[1] as f64, s.conic[2] as f64);
                    a.center[0] += gp * (c0 * dxf + c1 * dyf);
                    a.center[1] += gp * (c2 * dyf + c1 * dxf);
                }
                for ch in 0..3 {
                    suffix[ch] += s.rgb[ch] as f64 * w;
                }
                t_trans = t_before;
            }
        }
    }
    acc
}

/// Push one splat's screen-space gradients down to scene parameters.
#[allow(clippy::too_many_arguments)]
fn finalize_splat(
    set: &GaussianSet,
    view: &CameraView,
    t: f32,
    frame: &Frame,
    splat_idx: usize,
    a: &SplatAccum,
    grads: &mut GradientSet,
) {
    let s = &frame.splats[splat_idx];
    let i = s.gauss;
    let core = &set.cores[i];
    let (_, rot_raw, _) = set.resolved_pose(i, t);

    // --- conic -> 2D covariance (full-matrix convention) ---
    let qinv = Matrix2::new(s.conic[0], s.conic[1], s.conic[1], s.conic[2]);
    let g_qinv = Matrix2::new(
        a.conic[0] as f32,
        0.5 * a.conic[1] as f32,
        0.5 * a.conic[1] as f32,
        a.conic[2] as f32,
    );
    // d inverse: dL/dSigma2 = -Qinv * G * Qinv.
    let s2: Matrix2<f32> = -qinv * g_qinv * qinv;

    // --- 2D covariance -> camera covariance + projection Jacobian ---
    let (qh, qnorm) = quat_normalize(rot_raw);
    let rot = quat_to_rot(qh);
    let scales = core.log_scale.map(f32::exp);
    let m3 = rot * Matrix3::from_diagonal(&scales);
    let v3 = m3 * m3.transpose();
    let w_mat = view.rotation;
    let cov_cam = w_mat * v3 * w_mat.transpose();
    let j = super::forward::projection_jacobian(view, &s.x_cam);

    let d_cov_cam: Matrix3<f32> = j.transpose() * s2 * j;
    let d_j: Matrix2x3<f32> = (s2 + s2.transpose()) * j * cov_cam;

    // --- camera covariance -> world covariance -> rotation and scale ---
    let d_v3: Matrix3<f32> = w_mat.transpose() * d_cov_cam * w_mat;
    let d_m3: Matrix3<f32> = (d_v3 + d_v3.transpose()) * m3;
    let d_rot: Matrix3<f32> = d_m3 * Matrix3::from_diagonal(&scales);
    let rt_dm3 = rot.transpose() * d_m3;
    let d_log_scale = Vector3::new(
        rt_dm3[(0, 0)] * scales.x,
        rt_dm3[(1, 1)] * scales.y,
        rt_dm3[(2, 2)] * scales.z,
    );
    let g_qhat = quat_rot_backward(qh, &d_rot);
    let g_qraw = quat_normalize_backward(qh, qnorm, g_qhat);

    // --- screen center and Jacobian entries -> camera-space position ---
    let (xc, z) = (s.x_cam, s.x_cam.z);
    let (gcx, gcy) = (a.center[0] as f32, a.center[1] as f32);
    let mut d_xcam = Vector3::new(
        view.fx / z * gcx,
        view.fy / z * gcy,
        -view.fx * xc.x / (z * z) * gcx - view.fy * xc.y / (z * z) * gcy,
    );
    d_xcam.x += d_j[(0, 2)] * (-view.fx / (z * z));
    d_xcam.y += d_j[(1, 2)] * (-view.fy / (z * z));
    d_xcam.z += d_j[(0, 0)] * (-view.fx / (z * z))
        + d_j[(0, 2)] * (2.0 * view.fx * xc.x / (z * z * z))
        + d_j[(1, 1)] * (-view.fy / (z * z))
        + d_j[(1, 2)] * (2.0 * view.fy * xc.y / (z * z * z));
    let mut d_pos_world: Vector3<f32> = w_mat.transpose() * d_xcam;

    // --- color and, for banded color, the view-direction path ---
    let coeffs = &core.color;
    let mut g_dir = Vector3::zeros();
    for ch in 0..3 {
        if s.rgb_clamped[ch] {
            continue;
        }
        let g_ch = a.rgb[ch] as f32;
        grads.color[i][ch] += g_ch * SH_C0;
        if set.sh_degree >= 1 {
            grads.color[i][3 + ch] += g_ch * SH_C1 * s.dir.x;
            grads.color[i][6 + ch] += g_ch * SH_C1 * s.dir.y;
            grads.color[i][9 + ch] += g_ch * SH_C1 * s.dir.z;
            g_dir += Vector3::new(coeffs[3 + ch], coeffs[6 + ch], coeffs[9 + ch])
                * (g_ch * SH_C1);
        }
    }
    if set.sh_degree >= 1 {
        // dir = (pos - cam) / |pos - cam|; project out the radial component.
        d_pos_world += (g_dir - s.dir * s.dir.dot(&g_dir)) / s.dir_len;
    }

    // --- alpha_hat = gate * opacity * window ---
    let g_ah = a.alpha_hat as f32;
    let opacity = core.opacity();
    let gate = core.gate_activation;
    grads.gate[i] += g_ah * opacity * s.window;
    grads.opacity_logit[i] += g_ah * gate * s.window * opacity * (1.0 - opacity);
    let g_window = g_ah * gate * opacity;

    // --- distribute pose gradients per kind ---
    grads.position[i] += d_pos_world;
    grads.log_scale[i] += d_log_scale;
    match &set.extras[i] {
        Extras::Static(_) => {
            grads.drift[i] += d_pos_world * (t - 0.5);
            grads.rotation[i] += g_qraw;
        }
        Extras::Dynamic(d) => {
            let (seg, w) = interp_segment(d.traj_pos.len(), t);
            grads.traj_pos[i][seg] += d_pos_world * (1.0 - w);
            grads.traj_pos[i][seg + 1] += d_pos_world * w;
            grads.traj_rot[i][seg] += g_qraw * (1.0 - w);
            grads.traj_rot[i][seg + 1] += g_qraw * w;
            let (dws, dwe) = window_weight_backward(d, t);
            grads.window[i][0] += g_window * dws;
            grads.window[i][1] += g_window * dwe;
        }
    }
}

/// Render a view, evaluate the photometric loss against `gt`, and return the
/// loss breakdown together with gradients for every scene parameter.
pub fn backward(
    set: &GaussianSet,
    view: &CameraView,
    t: f32,
    gt: &ImageBuf,
    background: Vector3<f32>,
    lambda_ssim: f64,
) -> (LossBreakdown, GradientSet) {
    let (out, state) = render_internal(set, view, t, background, None);
    let breakdown = render_loss(&out.image, gt, lambda_ssim);
    let upstream = render_loss_backward(&out.image, gt, lambda_ssim);

    let (w, h) = (view.width, view.height);
    let frame = &state.frame;
    let tile_results: Vec<Vec<(u32, SplatAccum)>> = (0..frame.tiles.len())
        .into_par_iter()
        .map(|ti| {
            backward_tile(
                frame,
                ti,
                w,
                h,
                background,
                &upstream,
                &state.n_contrib,
                &state.t_final,
            )
        })
        .collect();

    // Merge tile accumulators per splat, in tile order for determinism.
    let mut per_splat = vec![SplatAccum::default(); frame.splats.len()];
    for tile in &tile_results {
        for (si, acc) in tile {
            per_splat[*si as usize].add(acc);
        }
    }

    let mut grads = GradientSet::zeros(set);
    for (si, acc) in per_splat.iter().enumerate() {
        finalize_splat(set, view, t, frame, si, acc, &mut grads);
    }
    (breakdown, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;
    use crate::scene::{DynamicExtras, GaussianCore, StaticExtras};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_view() -> CameraView {
        CameraView::look_at(
            0,
            0,
            16,
            16,
            60.0,
            Vector3::new(0.0, 0.0, -2.0),
            Vector3::zeros(),
        )
    }

    /// Random scene built so the loss is smooth along every finite-difference
    /// probe direction:
    /// - every splat's 3-sigma support covers the whole 16x16 image, so the
    ///   kernel truncation boundary never sweeps across visible pixels;
    /// - alpha_hat stays in [0.42, 0.9], which keeps the per-pixel skip
    ///   threshold outside the support ellipse and avoids the opacity clamp
    ///   and early compositing stop;
    /// - depths are spaced well beyond the probe step so the compositing
    ///   order cannot flip mid-probe.
    fn random_set(rng: &mut ChaCha8Rng, n: usize, dynamic: bool) -> GaussianSet {
        let mut set = GaussianSet::new(1, 4);
        for k in 0..n {
            let z_base = if n > 1 {
                -0.3 + 0.6 * k as f32 / (n - 1) as f32
            } else {
                0.0
            };
            let mut g = GaussianCore::new(Vector3::new(
                rng.gen_range(-0.15..0.15),
                rng.gen_range(-0.15..0.15),
                z_base + rng.gen_range(-0.03..0.03),
            ));
            g.rotation = Vector4::new(
                rng.gen_range(0.5..1.0),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-0.3..0.3),
            );
            g.log_scale = Vector3::new(
                rng.gen_range(0.0..0.6),
                rng.gen_range(0.0..0.6),
                rng.gen_range(0.0..0.6),
            );
            g.opacity_logit = logit(rng.gen_range(0.7..0.9));
            for c in g.color.iter_mut() {
                *c = rng.gen_range(-0.3..0.3);
            }
            g.gate_activation = rng.gen_range(0.6..1.0);
            if dynamic && k % 2 == 1 {
                let mut d = DynamicExtras::stationary(g.position, g.rotation, 4);
                for p in d.traj_pos.iter_mut() {
                    *p += Vector3::new(
                        rng.gen_range(-0.02..0.02),
                        rng.gen_range(-0.02..0.02),
                        rng.gen_range(-0.02..0.02),
                    );
                }
                d.window_start = 0.1;
                d.window_end = 0.9;
                set.push(g, Extras::Dynamic(d));
            } else {
                let e = StaticExtras {
                    global_translation: Vector3::new(0.02, -0.01, 0.015),
                };
                set.push(g, Extras::Static(e));
            }
        }
        set
    }

    fn loss_of(set: &GaussianSet, view: &CameraView, t: f32, gt: &ImageBuf) -> f64 {
        let out = crate::render::render(set, view, t, Vector3::new(0.1, 0.2, 0.3));
        render_loss(&out.image, gt, 0.2).total
    }

    /// Central finite differences of the loss along one parameter direction.
    ///
    /// The rendered loss is smooth except at kernel-support and skip
    /// thresholds, where it takes tiny jumps at isolated offsets. A jump
    /// inside the probe interval biases that estimate by jump/(2h), so a
    /// single step size can be contaminated for an unlucky slot. The check
    /// therefore accepts the gradient if any step of a small ladder agrees:
    /// shrinking h steps over far jumps, growing h dilutes near ones, while a
    /// genuinely wrong analytic value stays wrong at every scale.
    fn fd_ladder_matches(
        an: f32,
        tol: f32,
        mut loss_at: impl FnMut(f32) -> f64,
    ) -> std::result::Result<(), String> {
        let mut report = String::new();
        for h in [1e-2f32, 5e-3, 2.5e-3, 1.25e-3] {
            let fd = ((loss_at(h) - loss_at(-h)) / (2.0 * h as f64)) as f32;
            if (fd - an).abs() < tol {
                return Ok(());
            }
            report.push_str(&format!(" h {h}: fd {fd};"));
        }
        Err(format!("no step matched analytic {an} (tol {tol}):{report}"))
    }

    /// Nudge one scalar parameter, identified by a flat slot index.
    fn perturb(set: &mut GaussianSet, i: usize, slot: usize, h: f32) {
        match slot {
            0..=2 => set.cores[i].position[slot] += h,
            3..=6 => set.cores[i].rotation[slot - 3] += h,
            7..=9 => set.cores[i].log_scale[slot - 7] += h,
            10 => set.cores[i].opacity_logit += h,
            11..=22 => set.cores[i].color[slot - 11] += h,
            23 => set.cores[i].gate_activation += h,
            _ => unreachable!(),
        }
    }

    fn grad_slot(g: &GradientSet, i: usize, slot: usize) -> f32 {
        match slot {
            0..=2 => g.position[i][slot],
            3..=6 => g.rotation[i][slot - 3],
            7..=9 => g.log_scale[i][slot - 7],
            10 => g.opacity_logit[i],
            11..=22 => g.color[i][slot - 11],
            23 => g.gate[i],
            _ => unreachable!(),
        }
    }

    #[test]
    fn core_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let view = test_view();
        let gt = {
            let mut img = ImageBuf::filled(16, 16, [0.35, 0.25, 0.4]);
            for v in img.data.iter_mut() {
                *v += rng.gen_range(-0.05..0.05);
            }
            img
        };
        let set = random_set(&mut rng, 3, false);
        let (_, grads) = backward(&set, &view, 0.5, &gt, Vector3::new(0.1, 0.2, 0.3), 0.2);
        for i in 0..set.len() {
            for slot in 0..24 {
                let an = grad_slot(&grads, i, slot);
                let tol = 1e-3f32.max(0.02 * an.abs());
                let res = fd_ladder_matches(an, tol, |h| {
                    let mut s = set.clone();
                    perturb(&mut s, i, slot, h);
                    loss_of(&s, &view, 0.5, &gt)
                });
                assert!(res.is_ok(), "gaussian {i} slot {slot}: {}", res.unwrap_err());
            }
        }
    }

    #[test]
    fn dynamic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let view = test_view();
        let gt = ImageBuf::filled(16, 16, [0.3, 0.3, 0.3]);
        let set = random_set(&mut rng, 4, true);
        let t = 0.37;
        // Same background as `loss_of`, or the finite differences probe a
        // different objective than the analytic pass.
        let (_, grads) = backward(&set, &view, t, &gt, Vector3::new(0.1, 0.2, 0.3), 0.2);
        for i in 0..set.len() {
            let Extras::Dynamic(d0) = &set.extras[i] else {
                continue;
            };
            let kpts = d0.traj_pos.len();
            // Trajectory control points.
            for k in 0..kpts {
                for ax in 0..3 {
                    let an = grads.traj_pos[i][k][ax];
                    let res = fd_ladder_matches(an, 1e-3f32.max(0.02 * an.abs()), |h| {
                        let mut s = set.clone();
                        if let Extras::Dynamic(d) = &mut s.extras[i] {
                            d.traj_pos[k][ax] += h;
                        }
                        loss_of(&s, &view, t, &gt)
                    });
                    assert!(res.is_ok(), "traj_pos[{i}][{k}][{ax}]: {}", res.unwrap_err());
                }
            }
            // Window endpoints.
            for (slot, an) in [(0usize, grads.window[i][0]), (1, grads.window[i][1])] {
                let res = fd_ladder_matches(an, 1e-3f32.max(0.02 * an.abs()), |h| {
                    let mut s = set.clone();
                    if let Extras::Dynamic(d) = &mut s.extras[i] {
                        if slot == 0 {
                            d.window_start += h;
                        } else {
                            d.window_end += h;
                        }
                    }
                    loss_of(&s, &view, t, &gt)
                });
                assert!(res.is_ok(), "window[{i}][{slot}]: {}", res.unwrap_err());
            }
        }
    }

    #[test]
    fn static_drift_gradient_scales_with_time_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let view = test_view();
        let gt = ImageBuf::filled(16, 16, [0.2, 0.2, 0.2]);
        let set = random_set(&mut rng, 2, false);
        for t in [0.0f32, 0.25, 0.75] {
            let (_, g) = backward(&set, &view, t, &gt, Vector3::zeros(), 0.2);
            for i in 0..set.len() {
                let expect = g.position[i] * (t - 0.5);
                assert!(
                    (g.drift[i] - expect).norm() < 1e-6,
                    "t {t} gaussian {i}: drift {:?} vs {:?}",
                    g.drift[i],
                    expect
                );
            }
        }
    }

    #[test]
    fn zero_loss_yields_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let view = test_view();
        let set = random_set(&mut rng, 3, true);
        let gt = crate::render::render(&set, &view, 0.5, Vector3::zeros()).image;
        let (loss, g) = backward(&set, &view, 0.5, &gt, Vector3::zeros(), 0.2);
        assert!(loss.total.abs() < 1e-12);
        for i in 0..set.len() {
            assert!(g.position[i].norm() < 1e-9);
            assert!(g.opacity_logit[i].abs() < 1e-9);
            assert!(g.gate[i].abs() < 1e-9);
        }
    }

    #[test]
    fn accumulation_matches_manual_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let view = test_view();
        let set = random_set(&mut rng, 3, true);
        let gt1 = ImageBuf::filled(16, 16, [0.1, 0.5, 0.9]);
        let gt2 = ImageBuf::filled(16, 16, [0.8, 0.2, 0.4]);
        let (_, g1) = backward(&set, &view, 0.3, &gt1, Vector3::zeros(), 0.2);
        let (_, g2) = backward(&set, &view, 0.7, &gt2, Vector3::zeros(), 0.2);
        let mut total = GradientSet::zeros(&set);
        total.add_assign(&g1);
        total.add_assign(&g2);
        for i in 0..set.len() {
            let want = g1.position[i] + g2.position[i];
            assert!((total.position[i] - want).norm() < 1e-12);
            assert_eq!(total.gate[i], g1.gate[i] + g2.gate[i]);
        }
    }
}

