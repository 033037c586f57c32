//! On-disk dataset layout and in-memory access.
//!
//! A dataset directory holds `cameras.json` plus one PNG per (view, frame)
//! under `frames/v{v:02}_t{t:04}.png`. Camera poses are constant over time;
//! each frame re-observes the scene at the next capture time.

use super::CameraView;
use crate::error::{Error, Result};
use crate::image_buf::ImageBuf;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CAMERAS_FILE: &str = "cameras.json";
pub const FRAMES_DIR: &str = "frames";

/// Serialized form of one camera on the ring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraMeta {
    pub view_id: u32,
    pub fx: f32,
    pub fy: f32,
    pub cx: f32,
    pub cy: f32,
    /// Row-major 3x3 world-to-camera rotation.
    pub rotation: [f32; 9],
    /// World-to-camera translation.
    pub translation: [f32; 3],
}

/// Serialized `cameras.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub width: usize,
    pub height: usize,
    /// Number of capture times.
    pub frames: u32,
    /// View reserved for evaluation; never sampled during training.
    pub held_out_view: u32,
    /// Background color composited behind the splats.
    pub background: [f32; 3],
    /// Scene bounding-box diagonal; scales position learning rates and
    /// split thresholds.
    pub scene_extent: f32,
    pub cameras: Vec<CameraMeta>,
}

/// A fully loaded dataset: metadata plus every frame image in memory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub meta: DatasetMeta,
    /// Images indexed `[view][frame]`.
    images: Vec<Vec<ImageBuf>>,
}

pub fn frame_file_name(view_id: u32, time_index: u32) -> String {
    format!("v{view_id:02}_t{time_index:04}.png")
}

impl Dataset {
    pub fn from_parts(meta: DatasetMeta, images: Vec<Vec<ImageBuf>>) -> Result<Self> {
        let ds = Dataset { meta, images };
        ds.validate()?;
        Ok(ds)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let cam_path = dir.join(CAMERAS_FILE);
        let text = std::fs::read_to_string(&cam_path).map_err(|e| Error::io(&cam_path, e))?;
        let meta: DatasetMeta = serde_json::from_str(&text)?;
        if meta.version != 1 {
            return Err(Error::Version {
                found: meta.version,
                expected: 1,
            });
        }
        let mut images = Vec::with_capacity(meta.cameras.len());
        for cam in &meta.cameras {
            let mut per_view = Vec::with_capacity(meta.frames as usize);
            for t in 0..meta.frames {
                let p = dir.join(FRAMES_DIR).join(frame_file_name(cam.view_id, t));
                if !p.exists() {
                    return Err(Error::Format(format!("missing frame {}", p.display())));
                }
                per_view.push(ImageBuf::load_png(&p)?);
            }
            images.push(per_view);
        }
        Self::from_parts(meta, images)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir.join(FRAMES_DIR))
            .map_err(|e| Error::io(dir.join(FRAMES_DIR), e))?;
        let cam_path = dir.join(CAMERAS_FILE);
        let text = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(&cam_path, text).map_err(|e| Error::io(&cam_path, e))?;
        for (vi, cam) in self.meta.cameras.iter().enumerate() {
            for t in 0..self.meta.frames {
                let p = dir
                    .join(FRAMES_DIR)
                    .join(frame_file_name(cam.view_id, t));
                self.images[vi][t as usize].save_png(&p)?;
            }
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.meta.cameras.is_empty() {
            return Err(Error::Invalid("dataset has no cameras".into()));
        }
        if self.meta.frames == 0 {
            return Err(Error::Invalid("dataset has no frames".into()));
        }
        let held = self.meta.held_out_view;
        let n_held = self
            .meta
            .cameras
            .iter()
            .filter(|c| c.view_id == held)
            .count();
        if n_held != 1 {
            return Err(Error::Invalid(format!(
                "held-out view {held} must match exactly one camera (found {n_held})"
            )));
        }
        if self.images.len() != self.meta.cameras.len() {
            return Err(Error::Invalid("image table/camera count mismatch".into()));
        }
        for (vi, per_view) in self.images.iter().enumerate() {
            if per_view.len() != self.meta.frames as usize {
                return Err(Error::Invalid(format!(
                    "camera {vi}: expected {} frames, found {}",
                    self.meta.frames,
                    per_view.len()
                )));
            }
            for img in per_view {
                if img.width != self.meta.width || img.height != self.meta.height {
                    return Err(Error::Invalid("frame size differs from metadata".into()));
                }
            }
        }
        for vi in 0..self.meta.cameras.len() {
            self.view(vi, 0).validate()?;
        }
        Ok(())
    }

    pub fn n_views(&self) -> usize {
        self.meta.cameras.len()
    }

    pub fn n_frames(&self) -> usize {
        self.meta.frames as usize
    }

    /// Normalized time of a frame index: 0 and 1 at the sequence ends.
    pub fn t_norm(&self, time_index: u32) -> f32 {
        if self.meta.frames <= 1 {
            0.5
        } else {
            time_index as f32 / (self.meta.frames - 1) as f32
        }
    }

    /// Camera for (view position `vi` in the camera list, frame `time_index`).
    pub fn view(&self, vi: usize, time_index: u32) -> CameraView {
        let cam = &self.meta.cameras[vi];
        CameraView {
            view_id: cam.view_id,
            time_index,
            width: self.meta.width,
            height: self.meta.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: Matrix3::from_row_slice(&cam.rotation),
            translation: Vector3::from_row_slice(&cam.translation),
        }
    }

    pub fn image(&self, vi: usize, time_index: u32) -> &ImageBuf {
        &self.images[vi][time_index as usize]
    }

    /// All (camera index, frame) pairs excluding the held-out view.
    pub fn training_pairs(&self) -> Vec<(usize, u32)> {
        let mut out = Vec::new();
        for (vi, cam) in self.meta.cameras.iter().enumerate() {
            if cam.view_id == self.meta.held_out_view {
                continue;
            }
            for t in 0..self.meta.frames {
                out.push((vi, t));
            }
        }
        out
    }

    /// Camera-list index of the held-out view.
    pub fn held_out_index(&self) -> usize {
        self.meta
            .cameras
            .iter()
            .position(|c| c.view_id == self.meta.held_out_view)
            .expect("validated on load")
    }

    pub fn background(&self) -> Vector3<f32> {
        Vector3::from_row_slice(&self.meta.background)
    }
}

/// Helper used by dataset writers: camera metadata from a [`CameraView`].
pub fn camera_meta(view: &CameraView) -> CameraMeta {
    let r = view.rotation;
    CameraMeta {
        view_id: view.view_id,
        fx: view.fx,
        fy: view.fy,
        cx: view.cx,
        cy: view.cy,
        rotation: [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
        ],
        translation: [view.translation.x, view.translation.y, view.translation.z],
    }
}
