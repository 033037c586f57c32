//! Small numeric helpers shared across modules.

use nalgebra::{Matrix3, Vector3, Vector4};

/// Logistic function, numerically stable on both tails.
#[inline]
pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]; input is clamped away from {0, 1}.
#[inline]
pub fn logit(p: f32) -> f32 {
    let p = p.clamp(1e-7, 1.0 - 1e-7);
    (p / (1.0 - p)).ln()
}

/// Rotation matrix from a unit quaternion stored as (w, x, y, z).
pub fn quat_to_rot(q: Vector4<f32>) -> Matrix3<f32> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Gradient of `sum(g_r .* rot(q))` with respect to the unit quaternion q.
///
/// `g_r` is the downstream gradient with respect to each rotation-matrix entry.
pub fn quat_rot_backward(q: Vector4<f32>, g_r: &Matrix3<f32>) -> Vector4<f32> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    // d rot / d each quaternion component, contracted with g_r.
    let dw = Matrix3::new(0.0, -2.0 * z, 2.0 * y, 2.0 * z, 0.0, -2.0 * x, -2.0 * y, 2.0 * x, 0.0);
    let dx = Matrix3::new(0.0, 2.0 * y, 2.0 * z, 2.0 * y, -4.0 * x, -2.0 * w, 2.0 * z, 2.0 * w, -4.0 * x);
    let dy = Matrix3::new(-4.0 * y, 2.0 * x, 2.0 * w, 2.0 * x, 0.0, 2.0 * z, -2.0 * w, 2.0 * z, -4.0 * y);
    let dz = Matrix3::new(-4.0 * z, -2.0 * w, 2.0 * x, 2.0 * w, -4.0 * z, 2.0 * y, 2.0 * x, 2.0 * y, 0.0);
    Vector4::new(
        g_r.dot(&dw),
        g_r.dot(&dx),
        g_r.dot(&dy),
        g_r.dot(&dz),
    )
}

/// Normalize a quaternion, returning the unit vector and the original norm.
#[inline]
pub fn quat_normalize(q: Vector4<f32>) -> (Vector4<f32>, f32) {
    let n = q.norm().max(1e-12);
    (q / n, n)
}

/// Backward through `q_hat = q / |q|`: maps a gradient w.r.t. `q_hat` to one w.r.t. `q`.
#[inline]
pub fn quat_normalize_backward(q_hat: Vector4<f32>, norm: f32, g_hat: Vector4<f32>) -> Vector4<f32> {
    (g_hat - q_hat * q_hat.dot(&g_hat)) / norm
}

/// Axis-aligned bounding box of a point set; returns (min, max).
pub fn bbox(points: impl Iterator<Item = Vector3<f32>>) -> Option<(Vector3<f32>, Vector3<f32>)> {
    let mut lo = Vector3::repeat(f32::INFINITY);
    let mut hi = Vector3::repeat(f32::NEG_INFINITY);
    let mut any = false;
    for p in points {
        any = true;
        lo = lo.inf(&p);
        hi = hi.sup(&p);
    }
    any.then_some((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_relative_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(40.0) > 1.0 - 1e-6);
        assert!(sigmoid(-40.0) < 1e-6);
        assert_relative_eq!(sigmoid(logit(0.3)), 0.3, epsilon = 1e-5);
    }

    #[test]
    fn quat_identity_is_identity_matrix() {
        let r = quat_to_rot(Vector4::new(1.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(r, Matrix3::identity(), epsilon = 1e-6);
    }

    #[test]
    fn quat_rotation_is_orthonormal() {
        let (q, _) = quat_normalize(Vector4::new(0.4, -0.2, 0.7, 0.5));
        let r = quat_to_rot(q);
        assert_relative_eq!(r * r.transpose(), Matrix3::identity(), epsilon = 1e-5);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-5);
    }

    /// Central finite differences against the hand-written quaternion backward.
    #[test]
    fn quat_backward_matches_finite_differences() {
        let g_r = Matrix3::new(0.3, -0.1, 0.7, 0.2, 0.5, -0.4, 0.9, 0.1, -0.6);
        let q0 = Vector4::new(0.8, -0.3, 0.2, 0.45);
        let f = |q: Vector4<f32>| {
            let (qh, _) = quat_normalize(q);
            g_r.dot(&quat_to_rot(qh))
        };
        let (qh, n) = quat_normalize(q0);
        let g_hat = quat_rot_backward(qh, &g_r);
        let g = quat_normalize_backward(qh, n, g_hat);
        let h = 1e-3;
        for k in 0..4 {
            let mut qp = q0;
            let mut qm = q0;
            qp[k] += h;
            qm[k] -= h;
            let fd = (f(qp) - f(qm)) / (2.0 * h);
            assert!(
                (fd - g[k]).abs() < 1e-3_f32.max(0.02 * g[k].abs()),
                "component {k}: fd {fd} vs analytic {}",
                g[k]
            );
        }
    }
}
