//! Structural similarity over RGB float images, with an analytic gradient.
//!
//! Statistics use an 11x11 Gaussian window (sigma 1.5) evaluated at valid
//! positions only (no padding), the usual stabilizers C1 = 1e-4 and
//! C2 = 9e-4 for unit dynamic range, and a per-channel mean. For images
//! smaller than 11 pixels on a side the window shrinks to the largest odd
//! size that fits, with sigma scaled proportionally.
//!
//! The gradient follows from differentiating the per-window score
//! `S = (A1 A2) / (B1 B2)` with respect to the window statistics: for a
//! pixel q inside window u with weight g(q-u),
//! `dS/dx_q = g(q-u) * (P1(u) + x_q * P2(u) + y_q * P3(u))`
//! so the image gradient is a convolution of three window-indexed
//! coefficient maps with the same Gaussian kernel.

use crate::image_buf::ImageBuf;

const C1: f64 = 1e-4; // (0.01 * dynamic range)^2
const C2: f64 = 9e-4; // (0.03 * dynamic range)^2

/// Window size and normalized 1-D Gaussian taps for an image.
fn kernel_for(height: usize, width: usize) -> (usize, Vec<f64>) {
    let mut w = 11.min(height).min(width);
    if w % 2 == 0 {
        w -= 1;
    }
    assert!(w >= 1, "image too small for SSIM");
    let sigma = 1.5 * w as f64 / 11.0;
    let c = (w / 2) as f64;
    let mut taps: Vec<f64> = (0..w)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    (w, taps)
}

/// One channel of an image as f64, row-major.
fn channel(img: &ImageBuf, ch: usize) -> Vec<f64> {
    img.data.iter().skip(ch).step_by(3).map(|&v| v as f64).collect()
}

/// Valid-mode separable correlation: output is (h-w+1) x (w'-w+1).
fn corr_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = taps.len();
    let oh = h - k + 1;
    let ow = w - k + 1;
    // Horizontal pass.
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                s += t * src[y * w + x + i];
            }
            tmp[y * ow + x] = s;
        }
    }
    // Vertical pass.
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                s += t * tmp[(y + i) * ow + x];
            }
            out[y * ow + x] = s;
        }
    }
    (out, oh, ow)
}

/// Full-mode separable convolution of a valid-grid map back onto the image
/// grid: `out(q) = sum_u map(u) * g(q - u)` with the map zero outside its
/// (oh x ow) support anchored at the origin.
fn conv_scatter(map: &[f64], oh: usize, ow: usize, h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    // Vertical scatter.
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                // contribution from map row y - i
                if y >= i && y - i < oh {
                    s += t * map[(y - i) * ow + x];
                }
            }
            tmp[y * ow + x] = s;
        }
    }
    // Horizontal scatter.
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, t) in taps.iter().enumerate() {
                if x >= i && x - i < ow {
                    s += t * tmp[y * ow + x - i];
                }
            }
            out[y * w + x] = s;
        }
    }
    out
}

struct ChannelStats {
    mu_x: Vec<f64>,
    mu_y: Vec<f64>,
    sigma_x2: Vec<f64>,
    sigma_y2: Vec<f64>,
    sigma_xy: Vec<f64>,
    oh: usize,
    ow: usize,
}

fn stats(x: &[f64], y: &[f64], h: usize, w: usize, taps: &[f64]) -> ChannelStats {
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let (mu_x, oh, ow) = corr_valid(x, h, w, taps);
    let (mu_y, _, _) = corr_valid(y, h, w, taps);
    let (m_xx, _, _) = corr_valid(&xx, h, w, taps);
    let (m_yy, _, _) = corr_valid(&yy, h, w, taps);
    let (m_xy, _, _) = corr_valid(&xy, h, w, taps);
    let n = mu_x.len();
    let mut sigma_x2 = vec![0.0; n];
    let mut sigma_y2 = vec![0.0; n];
    let mut sigma_xy = vec![0.0; n];
    for i in 0..n {
        sigma_x2[i] = m_xx[i] - mu_x[i] * mu_x[i];
        sigma_y2[i] = m_yy[i] - mu_y[i] * mu_y[i];
        sigma_xy[i] = m_xy[i] - mu_x[i] * mu_y[i];
    }
    ChannelStats {
        mu_x,
        mu_y,
        sigma_x2,
        sigma_y2,
        sigma_xy,
        oh,
        ow,
    }
}

/// Mean SSIM over all valid windows and all three channels.
pub fn ssim(pred: &ImageBuf, gt: &ImageBuf) -> f64 {
    assert_eq!(pred.width, gt.width);
    assert_eq!(pred.height, gt.height);
    let (h, w) = (pred.height, pred.width);
    let (_, taps) = kernel_for(h, w);
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..3 {
        let x = channel(pred, ch);
        let y = channel(gt, ch);
        let st = stats(&x, &y, h, w, &taps);
        for i in 0..st.mu_x.len() {
            let a1 = 2.0 * st.mu_x[i] * st.mu_y[i] + C1;
            let a2 = 2.0 * st.sigma_xy[i] + C2;
            let b1 = st.mu_x[i] * st.mu_x[i] + st.mu_y[i] * st.mu_y[i] + C1;
            let b2 = st.sigma_x2[i] + st.sigma_y2[i] + C2;
            total += (a1 * a2) / (b1 * b2);
            count += 1;
        }
    }
    total / count as f64
}

/// Gradient of mean SSIM with respect to the predicted image, scaled by
/// `upstream` (the downstream gradient of the loss w.r.t. mean SSIM).
/// Returned layout matches `ImageBuf::data`.
pub fn ssim_backward(pred: &ImageBuf, gt: &ImageBuf, upstream: f64) -> Vec<f64> {
    let (h, w) = (pred.height, pred.width);
    let (_, taps) = kernel_for(h, w);
    let mut grad = vec![0.0f64; h * w * 3];
    // Number of windows per channel times channels normalizes the mean.
    let (_, oh0, ow0) = {
        let x = channel(pred, 0);
        let (m, a, b) = corr_valid(&x, h, w, &taps);
        (m, a, b)
    };
    let norm = upstream / (3.0 * (oh0 * ow0) as f64);
    for ch in 0..3 {
        let x = channel(pred, ch);
        let y = channel(gt, ch);
        let st = stats(&x, &y, h, w, &taps);
        let n = st.mu_x.len();
        let mut p1 = vec![0.0; n];
        let mut p2 = vec![0.0; n];
        let mut p3 = vec![0.0; n];
        for i in 0..n {
            let a1 = 2.0 * st.mu_x[i] * st.mu_y[i] + C1;
            let a2 = 2.0 * st.sigma_xy[i] + C2;
            let b1 = st.mu_x[i] * st.mu_x[i] + st.mu_y[i] * st.mu_y[i] + C1;
            let b2 = st.sigma_x2[i] + st.sigma_y2[i] + C2;
            let s = (a1 * a2) / (b1 * b2);
            let inv_b1b2 = 1.0 / (b1 * b2);
            p2[i] = -2.0 * s / b2;
            p3[i] = 2.0 * a1 * inv_b1b2;
            p1[i] = 2.0 * st.mu_y[i] * a2 * inv_b1b2 - 2.0 * st.mu_x[i] * s / b1
                + 2.0 * st.mu_x[i] * s / b2
                - 2.0 * st.mu_y[i] * a1 * inv_b1b2;
        }
        let g1 = conv_scatter(&p1, st.oh, st.ow, h, w, &taps);
        let g2 = conv_scatter(&p2, st.oh, st.ow, h, w, &taps);
        let g3 = conv_scatter(&p3, st.oh, st.ow, h, w, &taps);
        for q in 0..h * w {
            grad[q * 3 + ch] = norm * (g1[q] + x[q] * g2[q] + y[q] * g3[q]);
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_image(w: usize, h: usize, seed: u64) -> ImageBuf {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut img = ImageBuf::new(w, h);
        img.data.iter_mut().for_each(|v| *v = rng.gen_range(0.0..1.0));
        img
    }

    /// Straightforward per-window double-loop SSIM used as an oracle.
    fn ssim_reference(pred: &ImageBuf, gt: &ImageBuf) -> f64 {
        let (h, w) = (pred.height, pred.width);
        let (k, taps) = kernel_for(h, w);
        let mut total = 0.0;
        let mut count = 0;
        for ch in 0..3 {
            for wy in 0..=h - k {
                for wx in 0..=w - k {
                    let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for oy in 0..k {
                        for ox in 0..k {
                            let g = taps[oy] * taps[ox];
                            let xv = pred.pixel(wx + ox, wy + oy)[ch] as f64;
                            let yv = gt.pixel(wx + ox, wy + oy)[ch] as f64;
                            mx += g * xv;
                            my += g * yv;
                            mxx += g * xv * xv;
                            myy += g * yv * yv;
                            mxy += g * xv * yv;
                        }
                    }
                    let (sx, sy, sxy) = (mxx - mx * mx, myy - my * my, mxy - mx * my);
                    total += ((2.0 * mx * my + C1) * (2.0 * sxy + C2))
                        / ((mx * mx + my * my + C1) * (sx + sy + C2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn identical_images_score_one() {
        let img = random_image(20, 16, 3);
        assert!((ssim(&img, &img) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_reference_implementation() {
        let a = random_image(32, 32, 11);
        let b = random_image(32, 32, 12);
        let fast = ssim(&a, &b);
        let slow = ssim_reference(&a, &b);
        assert!(
            (fast - slow).abs() < 1e-9,
            "separable {fast} vs reference {slow}"
        );
        assert!(fast < 0.5, "uncorrelated noise should score low, got {fast}");
    }

    #[test]
    fn shrinks_window_for_small_images() {
        let a = random_image(8, 8, 4);
        let b = random_image(8, 8, 5);
        let v = ssim(&a, &b); // must not panic; 7x7 window
        assert!(v.is_finite());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut pred = random_image(16, 16, 21);
        let gt = random_image(16, 16, 22);
        let grad = ssim_backward(&pred, &gt, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let h = 1e-3f32;
        for _ in 0..40 {
            let idx = rng.gen_range(0..pred.data.len());
            let orig = pred.data[idx];
            pred.data[idx] = orig + h;
            let up = ssim(&pred, &gt);
            pred.data[idx] = orig - h;
            let dn = ssim(&pred, &gt);
            pred.data[idx] = orig;
            let fd = (up - dn) / (2.0 * h as f64);
            let an = grad[idx];
            assert!(
                (fd - an).abs() < 1e-3_f64.max(0.02 * an.abs()),
                "idx {idx}: fd {fd} vs analytic {an}"
            );
        }
    }
}
