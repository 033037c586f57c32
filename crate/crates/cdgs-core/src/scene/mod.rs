//! Scene representation: anisotropic 3D Gaussians with either a static tag
//! (position plus a learnable linear-drift vector) or a dynamic tag
//! (piecewise-linear control-point trajectories and a temporal activation
//! window).
//!
//! Conventions:
//! - rotations are quaternions stored (w, x, y, z), kept unit-norm by the optimizer;
//! - scales are stored as logs and exponentiated where covariance is needed;
//! - opacity is stored as a logit;
//! - normalized time `t` runs over [0, 1] across the captured sequence;
//! - a static Gaussian renders at `position + (t - 0.5) * global_translation`,
//!   so the drift vector measures net displacement across the sequence and is
//!   the motion statistic used for static/dynamic allocation.

mod camera;
mod checkpoint;
mod dataset;
pub(crate) mod dynamics;

pub use camera::CameraView;
pub use checkpoint::{
    deserialize_checkpoint, load_checkpoint, save_checkpoint, serialize_checkpoint,
    CHECKPOINT_MAGIC,
};
pub use dataset::{camera_meta, frame_file_name, CameraMeta, Dataset, DatasetMeta};
pub use dynamics::{evaluate_dynamic_state, interp_segment, DynState};

use nalgebra::{Vector3, Vector4};

/// Zeroth-order spherical-harmonic basis constant.
pub const SH_C0: f32 = 0.282_094_79;
/// First-order spherical-harmonic basis constant.
pub const SH_C1: f32 = 0.488_602_51;
/// Maximum color coefficient count (degree 1: 3 DC + 9 directional).
pub const MAX_COLOR_COEFFS: usize = 12;

/// Per-Gaussian appearance and selection state shared by both kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCore {
    pub position: Vector3<f32>,
    /// Quaternion (w, x, y, z); unit norm after every optimizer step.
    pub rotation: Vector4<f32>,
    /// Per-axis log scales.
    pub log_scale: Vector3<f32>,
    pub opacity_logit: f32,
    /// Color coefficients; only the first `3 * basis` entries are meaningful,
    /// where `basis` is 1 (degree 0) or 4 (degree 1). Layout: DC rgb, then
    /// x-, y-, z-direction coefficients each as rgb.
    pub color: [f32; MAX_COLOR_COEFFS],
    /// Importance score M before gating, in [0, 1].
    pub importance_raw: f32,
    /// Gate activation c in [0, 1]; effective opacity is `c * sigmoid(opacity_logit)`.
    pub gate_activation: f32,
}

impl GaussianCore {
    pub fn new(position: Vector3<f32>) -> Self {
        GaussianCore {
            position,
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            log_scale: Vector3::repeat(-2.0),
            opacity_logit: 0.0,
            color: [0.0; MAX_COLOR_COEFFS],
            importance_raw: 0.5,
            gate_activation: 1.0,
        }
    }

    /// Set the DC color from an RGB value in [0, 1].
    pub fn with_rgb(mut self, rgb: [f32; 3]) -> Self {
        for k in 0..3 {
            self.color[k] = (rgb[k] - 0.5) / SH_C0;
        }
        self
    }

    #[inline]
    pub fn opacity(&self) -> f32 {
        crate::math::sigmoid(self.opacity_logit)
    }

    /// Largest covariance eigenvalue: square of the largest exponentiated scale.
    #[inline]
    pub fn max_cov_eigenvalue(&self) -> f32 {
        let s = self.log_scale.map(f32::exp);
        let m = s.x.max(s.y).max(s.z);
        m * m
    }
}

/// Extra state for static Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticExtras {
    /// Learnable linear-drift vector; the render position at time t is
    /// `position + (t - 0.5) * global_translation`. Its norm ranks motion.
    pub global_translation: Vector3<f32>,
}

impl Default for StaticExtras {
    fn default() -> Self {
        StaticExtras {
            global_translation: Vector3::zeros(),
        }
    }
}

/// Extra state for dynamic Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicExtras {
    /// K position control points at uniform times k/(K-1) over [0, 1].
    pub traj_pos: Vec<Vector3<f32>>,
    /// K rotation control points (w, x, y, z); interpolated then renormalized.
    pub traj_rot: Vec<Vector4<f32>>,
    /// Activation window start/end, normalized time.
    pub window_start: f32,
    pub window_end: f32,
    /// Fixed sharpness of the window's logistic falloff.
    pub window_sharpness: f32,
}

/// Default logistic sharpness of the temporal activation window.
pub const DEFAULT_WINDOW_SHARPNESS: f32 = 20.0;
/// Legal range for window endpoints. Padding half a sequence beyond [0, 1]
/// lets a fully open window sit far enough out that its logistic edges
/// attenuate nothing inside the observed time range.
pub const WINDOW_MIN: f32 = -0.5;
pub const WINDOW_MAX: f32 = 1.5;

impl DynamicExtras {
    /// Constant trajectory holding one pose over the whole sequence, with the
    /// activation window fully open.
    pub fn stationary(position: Vector3<f32>, rotation: Vector4<f32>, k: usize) -> Self {
        DynamicExtras {
            traj_pos: vec![position; k],
            traj_rot: vec![rotation; k],
            window_start: WINDOW_MIN,
            window_end: WINDOW_MAX,
            window_sharpness: DEFAULT_WINDOW_SHARPNESS,
        }
    }

    /// Deviation norm of position control points around their mean.
    pub fn position_deviation_norm(&self) -> f32 {
        let mean = self.traj_pos.iter().sum::<Vector3<f32>>() / self.traj_pos.len() as f32;
        self.traj_pos
            .iter()
            .map(|p| (p - mean).norm_squared())
            .sum::<f32>()
            .sqrt()
    }

    /// Deviation norm of rotation control points around their mean.
    pub fn rotation_deviation_norm(&self) -> f32 {
        let mean = self.traj_rot.iter().sum::<Vector4<f32>>() / self.traj_rot.len() as f32;
        self.traj_rot
            .iter()
            .map(|q| (q - mean).norm_squared())
            .sum::<f32>()
            .sqrt()
    }
}

/// Kind tag; every Gaussian is exactly one of the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Static,
    Dynamic,
}

/// Kind-specific side data, one entry per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub enum Extras {
    Static(StaticExtras),
    Dynamic(DynamicExtras),
}

impl Extras {
    #[inline]
    pub fn kind(&self) -> Kind {
        match self {
            Extras::Static(_) => Kind::Static,
            Extras::Dynamic(_) => Kind::Dynamic,
        }
    }
}

/// The scene: parallel sequences of cores and kind-specific extras.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    pub cores: Vec<GaussianCore>,
    pub extras: Vec<Extras>,
    /// Spherical-harmonic color degree: 0 or 1.
    pub sh_degree: u32,
    /// Control points per dynamic trajectory (K >= 2).
    pub traj_points: u32,
}

/// Default number of trajectory control points for dynamic Gaussians.
pub const DEFAULT_TRAJ_POINTS: u32 = 4;

impl GaussianSet {
    pub fn new(sh_degree: u32, traj_points: u32) -> Self {
        assert!(sh_degree <= 1, "color degree above 1 is not supported");
        assert!(traj_points >= 2);
        GaussianSet {
            cores: Vec::new(),
            extras: Vec::new(),
            sh_degree,
            traj_points,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.cores.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.cores.is_empty()
    }

    #[inline]
    pub fn kind(&self, i: usize) -> Kind {
        self.extras[i].kind()
    }

    pub fn n_static(&self) -> usize {
        self.extras.iter().filter(|e| e.kind() == Kind::Static).count()
    }

    pub fn n_dynamic(&self) -> usize {
        self.len() - self.n_static()
    }

    /// Number of meaningful color coefficients per Gaussian.
    #[inline]
    pub fn color_coeffs(&self) -> usize {
        if self.sh_degree == 0 {
            3
        } else {
            12
        }
    }

    pub fn push(&mut self, core: GaussianCore, extras: Extras) {
        if let Extras::Dynamic(d) = &extras {
            assert_eq!(d.traj_pos.len(), self.traj_points as usize);
            assert_eq!(d.traj_rot.len(), self.traj_points as usize);
        }
        self.cores.push(core);
        self.extras.push(extras);
    }

    /// Remove the Gaussians whose indices appear in `remove` (deduplicated),
    /// preserving the relative order of survivors.
    pub fn remove_indices(&mut self, remove: &[usize]) {
        if remove.is_empty() {
            return;
        }
        let mut dead = vec![false; self.len()];
        for &i in remove {
            dead[i] = true;
        }
        let mut keep = (0..self.len()).filter(|&i| !dead[i]);
        let mut cores = Vec::with_capacity(self.len() - remove.len());
        let mut extras = Vec::with_capacity(self.len() - remove.len());
        for i in keep.by_ref() {
            cores.push(self.cores[i].clone());
            extras.push(self.extras[i].clone());
        }
        self.cores = cores;
        self.extras = extras;
    }

    /// Motion statistic used by the allocator: drift norm for static Gaussians,
    /// control-point deviation norm for dynamic ones.
    pub fn motion_magnitude(&self, i: usize) -> f32 {
        match &self.extras[i] {
            Extras::Static(s) => s.global_translation.norm(),
            Extras::Dynamic(d) => d.position_deviation_norm(),
        }
    }

    pub fn motion_magnitudes(&self) -> Vec<f32> {
        (0..self.len()).map(|i| self.motion_magnitude(i)).collect()
    }

    /// Pose of Gaussian `i` at normalized time `t`:
    /// (world position, raw rotation quaternion, opacity window multiplier).
    pub fn resolved_pose(&self, i: usize, t: f32) -> (Vector3<f32>, Vector4<f32>, f32) {
        match &self.extras[i] {
            Extras::Static(s) => (
                self.cores[i].position + s.global_translation * (t - 0.5),
                self.cores[i].rotation,
                1.0,
            ),
            Extras::Dynamic(d) => {
                let st = evaluate_dynamic_state(d, t);
                (st.position, st.rotation_raw, st.window_weight)
            }
        }
    }

    /// Structural consistency checks; cheap enough to run in tests and on load.
    pub fn validate(&self) -> crate::Result<()> {
        if self.cores.len() != self.extras.len() {
            return Err(crate::Error::Invalid(format!(
                "cores/extras length mismatch: {} vs {}",
                self.cores.len(),
                self.extras.len()
            )));
        }
        for (i, e) in self.extras.iter().enumerate() {
            if let Extras::Dynamic(d) = e {
                if d.traj_pos.len() != self.traj_points as usize
                    || d.traj_rot.len() != self.traj_points as usize
                {
                    return Err(crate::Error::Invalid(format!(
                        "gaussian {i}: trajectory length != {}",
                        self.traj_points
                    )));
                }
                if !(d.window_start <= d.window_end) {
                    return Err(crate::Error::Invalid(format!(
                        "gaussian {i}: window start {} > end {}",
                        d.window_start, d.window_end
                    )));
                }
            }
        }
        for (i, c) in self.cores.iter().enumerate() {
            let finite = c.position.iter().all(|v| v.is_finite())
                && c.rotation.iter().all(|v| v.is_finite())
                && c.log_scale.iter().all(|v| v.is_finite())
                && c.opacity_logit.is_finite()
                && c.color.iter().all(|v| v.is_finite());
            if !finite {
                return Err(crate::Error::NonFinite(format!("gaussian {i}")));
            }
        }
        Ok(())
    }

    /// Diagonal of the position bounding box; used as the scene extent scale.
    pub fn extent(&self) -> f32 {
        match crate::math::bbox(self.cores.iter().map(|c| c.position)) {
            Some((lo, hi)) => (hi - lo).norm(),
            None => 0.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_set() -> GaussianSet {
        let mut set = GaussianSet::new(0, 4);
        set.push(
            GaussianCore::new(Vector3::new(0.0, 0.0, 0.0)),
            Extras::Static(StaticExtras::default()),
        );
        set.push(
            GaussianCore::new(Vector3::new(1.0, 0.0, 0.0)),
            Extras::Static(StaticExtras {
                global_translation: Vector3::new(0.3, 0.0, 0.4),
            }),
        );
        set.push(
            GaussianCore::new(Vector3::new(0.0, 1.0, 0.0)),
            Extras::Dynamic(DynamicExtras::stationary(
                Vector3::new(0.0, 1.0, 0.0),
                Vector4::new(1.0, 0.0, 0.0, 0.0),
                4,
            )),
        );
        set
    }

    #[test]
    fn counts_partition_the_set() {
        let set = sample_set();
        assert_eq!(set.len(), 3);
        assert_eq!(set.n_static() + set.n_dynamic(), set.len());
        assert_eq!(set.n_static(), 2);
        assert_eq!(set.n_dynamic(), 1);
    }

    #[test]
    fn drift_norm_is_motion_magnitude() {
        let set = sample_set();
        assert!((set.motion_magnitude(1) - 0.5).abs() < 1e-7);
        assert_eq!(set.motion_magnitude(0), 0.0);
        assert_eq!(set.motion_magnitude(2), 0.0);
    }

    #[test]
    fn static_pose_drifts_linearly_in_time() {
        let set = sample_set();
        let (p0, _, w0) = set.resolved_pose(1, 0.5);
        assert_eq!(p0, Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(w0, 1.0);
        let (p1, _, _) = set.resolved_pose(1, 1.0);
        assert!((p1 - Vector3::new(1.15, 0.0, 0.2)).norm() < 1e-6);
    }

    #[test]
    fn remove_preserves_survivor_order() {
        let mut set = sample_set();
        set.remove_indices(&[1]);
        assert_eq!(set.len(), 2);
        assert_eq!(set.cores[0].position, Vector3::new(0.0, 0.0, 0.0));
        assert_eq!(set.cores[1].position, Vector3::new(0.0, 1.0, 0.0));
        assert_eq!(set.kind(1), Kind::Dynamic);
    }

    #[test]
    fn validate_rejects_non_finite() {
        let mut set = sample_set();
        set.cores[0].position.x = f32::NAN;
        assert!(set.validate().is_err());
    }

    #[test]
    fn validate_rejects_inverted_window() {
        let mut set = sample_set();
        if let Extras::Dynamic(d) = &mut set.extras[2] {
            d.window_start = 0.9;
            d.window_end = 0.1;
        }
        assert!(set.validate().is_err());
    }
}
