//! Differentiable tile-based splat renderer.
//!
//! [`render`] produces the composited image plus per-Gaussian auxiliary
//! statistics consumed by the importance scorer. [`backward`] recomputes the
//! forward pass with retained per-pixel state and walks the compositing
//! chain in reverse, producing hand-derived gradients for every learnable
//! attribute. Tiles are processed in parallel and merged in tile order, so
//! results are deterministic for a fixed input.

mod backward;
mod forward;
pub mod loss;
pub mod ssim;

pub use backward::{backward, GradientSet};
pub use loss::{l1, render_loss, render_loss_backward, LossBreakdown};
pub use ssim::{ssim, ssim_backward};

use crate::image_buf::ImageBuf;
use crate::scene::{CameraView, GaussianSet};
use forward::{eval_kernel, prepare_frame, tile_rect, Frame, AREA_WEIGHT_MIN, T_STOP};
use nalgebra::Vector3;
use rayon::prelude::*;

/// Composited image plus per-Gaussian statistics for one view.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub image: ImageBuf,
    /// Sum over pixels of the blending weight `alpha * transmittance`.
    pub contribution: Vec<f32>,
    /// Number of pixels whose blending weight exceeded a small threshold.
    pub pixel_area: Vec<f32>,
    /// Camera-space depth of each projected Gaussian; NaN when culled.
    pub mean_depth: Vec<f32>,
    /// Sum over pixels of blending weight times the pixel's absolute
    /// residual against the reference image; zero unless one was supplied.
    pub residual_weighted: Vec<f32>,
}

struct TileResult {
    patch: Vec<f32>,                 // pixels, rgb interleaved
    n_contrib: Vec<u32>,             // per pixel
    t_final: Vec<f32>,               // per pixel
    local: Vec<(u32, f32, f32, f32)>, // (splat idx, contribution, area, residual)
}

fn composite_tile(
    frame: &Frame,
    tile_idx: usize,
    width: usize,
    height: usize,
    background: Vector3<f32>,
    gt: Option<&ImageBuf>,
) -> TileResult {
    let (x0, y0, x1, y1) = tile_rect(tile_idx, frame.tiles_x, width, height);
    let (tw, th) = (x1 - x0, y1 - y0);
    let list = &frame.tiles[tile_idx];
    let mut patch = vec![0.0f32; tw * th * 3];
    let mut n_contrib = vec![0u32; tw * th];
    let mut t_final = vec![1.0f32; tw * th];
    let mut local: Vec<(u32, f32, f32, f32)> =
        list.iter().map(|&si| (si, 0.0, 0.0, 0.0)).collect();

    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f32 + 0.5, y as f32 + 0.5);
            let mut t_trans = 1.0f32;
            let mut acc = [0.0f32; 3];
            let mut count = 0u32;
            for (k, &si) in list.iter().enumerate() {
                let s = &frame.splats[si as usize];
                if let Some(ks) = eval_kernel(s, px, py) {
                    let w = ks.alpha_eff * t_trans;
                    acc[0] += s.rgb[0] * w;
                    acc[1] += s.rgb[1] * w;
                    acc[2] += s.rgb[2] * w;
                    local[k].1 += w;
                    if w > AREA_WEIGHT_MIN {
                        local[k].2 += 1.0;
                    }
                    t_trans *= 1.0 - ks.alpha_eff;
                    count += 1;
                    if t_trans < T_STOP {
                        break;
                    }
                }
            }
            let pi = (y - y0) * tw + (x - x0);
            patch[pi * 3] = acc[0] + t_trans * background.x;
            patch[pi * 3 + 1] = acc[1] + t_trans * background.y;
            patch[pi * 3 + 2] = acc[2] + t_trans * background.z;
            n_contrib[pi] = count;
            t_final[pi] = t_trans;

            if let Some(gt_img) = gt {
                let g = gt_img.pixel(x, y);
                let res = (patch[pi * 3] - g[0]).abs()
                    + (patch[pi * 3 + 1] - g[1]).abs()
                    + (patch[pi * 3 + 2] - g[2]).abs();
                if res > 0.0 {
                    // Second pass re-deriving each weight now that the final
                    // pixel value (and so its residual) is known.
                    let mut t2 = 1.0f32;
                    let mut left = count;
                    for (k, &si) in list.iter().enumerate() {
                        if left == 0 {
                            break;
                        }
                        let s = &frame.splats[si as usize];
                        if let Some(ks) = eval_kernel(s, px, py) {
                            local[k].3 += ks.alpha_eff * t2 * res;
                            t2 *= 1.0 - ks.alpha_eff;
                            left -= 1;
                        }
                    }
                }
            }
        }
    }
    TileResult {
        patch,
        n_contrib,
        t_final,
        local,
    }
}

/// Forward state retained for the backward pass.
pub(crate) struct ForwardState {
    pub frame: Frame,
    pub n_contrib: Vec<u32>,
    pub t_final: Vec<f32>,
}

pub(crate) fn render_internal(
    set: &GaussianSet,
    view: &CameraView,
    t: f32,
    background: Vector3<f32>,
    gt: Option<&ImageBuf>,
) -> (RenderOutput, ForwardState) {
    let (w, h) = (view.width, view.height);
    let frame = prepare_frame(set, view, t);
    let results: Vec<TileResult> = (0..frame.tiles.len())
        .into_par_iter()
        .map(|ti| composite_tile(&frame, ti, w, h, background, gt))
        .collect();

    let mut image = ImageBuf::new(w, h);
    let mut n_contrib = vec![0u32; w * h];
    let mut t_final = vec![1.0f32; w * h];
    let mut contribution = vec![0.0f32; set.len()];
    let mut pixel_area = vec![0.0f32; set.len()];
    let mut residual_weighted = vec![0.0f32; set.len()];
    // Merge in tile order for determinism.
    for (ti, r) in results.into_iter().enumerate() {
        let (x0, y0, x1, y1) = tile_rect(ti, frame.tiles_x, w, h);
        let tw = x1 - x0;
        for y in y0..y1 {
            for x in x0..x1 {
                let pi = (y - y0) * tw + (x - x0);
                let gi = y * w + x;
                image.data[gi * 3..gi * 3 + 3]
                    .copy_from_slice(&r.patch[pi * 3..pi * 3 + 3]);
                n_contrib[gi] = r.n_contrib[pi];
                t_final[gi] = r.t_final[pi];
            }
        }
        for (si, c, a, res) in r.local {
            let g = frame.splats[si as usize].gauss;
            contribution[g] += c;
            pixel_area[g] += a;
            residual_weighted[g] += res;
        }
    }
    let mut mean_depth = vec![f32::NAN; set.len()];
    for s in &frame.splats {
        mean_depth[s.gauss] = s.depth;
    }
    (
        RenderOutput {
            image,
            contribution,
            pixel_area,
            mean_depth,
            residual_weighted,
        },
        ForwardState {
            frame,
            n_contrib,
            t_final,
        },
    )
}

/// Render one view at normalized time `t` over a constant background.
pub fn render(
    set: &GaussianSet,
    view: &CameraView,
    t: f32,
    background: Vector3<f32>,
) -> RenderOutput {
    render_internal(set, view, t, background, None).0
}

/// Render and additionally accumulate residual-weighted contributions
/// against a reference image (used by the importance scorer).
pub fn render_scored(
    set: &GaussianSet,
    view: &CameraView,
    t: f32,
    background: Vector3<f32>,
    gt: &ImageBuf,
) -> RenderOutput {
    render_internal(set, view, t, background, Some(gt)).0
}
