//! Pinhole cameras with world-to-camera rigid poses.

use nalgebra::{Matrix3, Vector3};

/// One calibrated view at one capture time.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    /// Stable view identifier (index on the camera ring).
    pub view_id: u32,
    /// Frame index within the sequence.
    pub time_index: u32,
    pub width: usize,
    pub height: usize,
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
    /// World-to-camera rotation (rows are camera axes in world coordinates).
    pub rotation: Matrix3<f32>,
    /// World-to-camera translation: `x_cam = rotation * x_world + translation`.
    pub translation: Vector3<f32>,
}

impl CameraView {
    /// Camera center in world coordinates.
    pub fn center_world(&self) -> Vector3<f32> {
        -(self.rotation.transpose() * self.translation)
    }

    /// A simple look-at constructor: camera at `eye` looking toward `target`,
    /// with +y approximately up in the image (image y grows downward).
    pub fn look_at(
        view_id: u32,
        time_index: u32,
        width: usize,
        height: usize,
        fov_y_deg: f32,
        eye: Vector3<f32>,
        target: Vector3<f32>,
    ) -> Self {
        let fwd = (target - eye).normalize();
        let world_up = Vector3::new(0.0, 1.0, 0.0);
        let right = fwd.cross(&world_up).normalize();
        let down = fwd.cross(&right); // image y axis points down in world space
        let rotation = Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            fwd.transpose(),
        ]);
        let translation = -(rotation * eye);
        let fy = 0.5 * height as f32 / (0.5 * fov_y_deg.to_radians()).tan();
        CameraView {
            view_id,
            time_index,
            width,
            height,
            fx: fy,
            fy,
            cx: width as f32 / 2.0,
            cy: height as f32 / 2.0,
            rotation,
            translation,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(crate::Error::Invalid(format!(
                "view {}: image {}x{} below minimum 8x8",
                self.view_id, self.width, self.height
            )));
        }
        let gram = self.rotation * self.rotation.transpose();
        let err = (gram - Matrix3::identity()).abs().max();
        if err > 1e-5 {
            return Err(crate::Error::Invalid(format!(
                "view {}: rotation not orthonormal (error {err})",
                self.view_id
            )));
        }
        Ok(())
    }
}
