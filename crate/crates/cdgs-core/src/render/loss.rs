//! Rendering loss: weighted mean-absolute-error plus structural dissimilarity.

use super::ssim::{ssim, ssim_backward};
use crate::image_buf::ImageBuf;

/// Components of the rendering loss for one view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean absolute error over all samples.
    pub l1: f64,
    /// `1 - mean SSIM`.
    pub ssim_loss: f64,
    /// `(1 - lambda) * l1 + lambda * ssim_loss`.
    pub total: f64,
}

/// Mean absolute error.
pub fn l1(pred: &ImageBuf, gt: &ImageBuf) -> f64 {
    pred.mean_abs_diff(gt)
}

/// Combined rendering loss with SSIM weight `lambda`.
pub fn render_loss(pred: &ImageBuf, gt: &ImageBuf, lambda: f64) -> LossBreakdown {
    let l1_val = l1(pred, gt);
    let ssim_loss = 1.0 - ssim(pred, gt);
    LossBreakdown {
        l1: l1_val,
        ssim_loss,
        total: (1.0 - lambda) * l1_val + lambda * ssim_loss,
    }
}

/// Gradient of [`render_loss`] w.r.t. each predicted sample, laid out like
/// `ImageBuf::data`.
pub fn render_loss_backward(pred: &ImageBuf, gt: &ImageBuf, lambda: f64) -> Vec<f64> {
    let n = pred.data.len() as f64;
    // d(1 - ssim)/dpred = -d(ssim)/dpred
    let mut grad = ssim_backward(pred, gt, -lambda);
    let w = (1.0 - lambda) / n;
    for (g, (p, t)) in grad.iter_mut().zip(pred.data.iter().zip(&gt.data)) {
        let s = (p - t).signum() as f64 * if p == t { 0.0 } else { 1.0 };
        *g += w * s;
    }
    grad
}
