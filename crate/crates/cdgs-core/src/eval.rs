//! Quality evaluation of a trained or decompressed set against a dataset.

use crate::codec;
use crate::error::{Error, Result};
use crate::image_buf::ImageBuf;
use crate::render::{render, ssim};
use crate::scene::{deserialize_checkpoint, Dataset, GaussianSet, CHECKPOINT_MAGIC};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Peak signal-to-noise ratio in dB for unit-range images, capped at 99.
pub fn psnr(a: &ImageBuf, b: &ImageBuf) -> f64 {
    let mse = a.mse(b);
    if mse <= 0.0 {
        99.0
    } else {
        (10.0 * (1.0 / mse).log10()).min(99.0)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub view_index: usize,
    pub n_gaussians: usize,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub psnr_per_frame: Vec<f64>,
    /// Size of the model file the set came from, when known.
    pub model_bytes: u64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str =
        "view,frame,psnr,ssim_mean,n_gaussians,n_static,n_dynamic,model_bytes";

    /// One CSV line per frame with run-constant columns repeated.
    pub fn csv_rows(&self) -> Vec<String> {
        self.psnr_per_frame
            .iter()
            .enumerate()
            .map(|(f, p)| {
                format!(
                    "{},{},{:.6},{:.6},{},{},{},{}",
                    self.view_index,
                    f,
                    p,
                    self.ssim_mean,
                    self.n_gaussians,
                    self.n_static,
                    self.n_dynamic,
                    self.model_bytes
                )
            })
            .collect()
    }
}

/// Render `view_index` at every frame and compare with ground truth.
pub fn evaluate(
    set: &GaussianSet,
    dataset: &Dataset,
    view_index: usize,
    model_bytes: u64,
) -> Result<EvalReport> {
    if view_index >= dataset.n_views() {
        return Err(Error::Invalid(format!(
            "view {view_index} out of range ({} views)",
            dataset.n_views()
        )));
    }
    let bg = dataset.background();
    let mut psnr_per_frame = Vec::with_capacity(dataset.n_frames());
    let mut ssim_sum = 0.0;
    for fi in 0..dataset.n_frames() as u32 {
        let view = dataset.view(view_index, fi);
        let pred = render(set, &view, dataset.t_norm(fi), bg).image;
        let gt = dataset.image(view_index, fi);
        psnr_per_frame.push(psnr(&pred, gt));
        ssim_sum += ssim(&pred, gt);
    }
    let nf = psnr_per_frame.len() as f64;
    Ok(EvalReport {
        view_index,
        n_gaussians: set.len(),
        n_static: set.n_static(),
        n_dynamic: set.n_dynamic(),
        psnr_mean: psnr_per_frame.iter().sum::<f64>() / nf,
        ssim_mean: ssim_sum / nf,
        psnr_per_frame,
        model_bytes,
    })
}

/// Load a set from either a checkpoint or a compressed stream, sniffing
/// the four-byte magic.
pub fn load_any(path: &Path) -> Result<GaussianSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() >= 4 && bytes[..4] == CHECKPOINT_MAGIC {
        deserialize_checkpoint(&bytes)
    } else if bytes.len() >= 4 && bytes[..4] == codec::STREAM_MAGIC {
        codec::decompress(&bytes)
    } else {
        Err(Error::Format(format!(
            "{} is neither a checkpoint nor a compressed stream",
            path.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{save_checkpoint, Extras, GaussianCore, StaticExtras};
    use nalgebra::Vector3;

    #[test]
    fn mid_gray_against_black_matches_the_closed_form() {
        let a = ImageBuf::filled(16, 16, [0.5, 0.5, 0.5]);
        let b = ImageBuf::filled(16, 16, [0.0, 0.0, 0.0]);
        // mse = 0.25 so 10*log10(4).
        assert!((psnr(&a, &b) - 6.0206).abs() < 1e-3);
    }

    #[test]
    fn identical_images_hit_the_cap() {
        let a = ImageBuf::filled(8, 8, [0.3, 0.6, 0.9]);
        assert_eq!(psnr(&a, &a), 99.0);
    }

    fn tiny_set() -> GaussianSet {
        let mut set = GaussianSet::new(0, 4);
        let mut g = GaussianCore::new(Vector3::new(0.0, 0.0, 0.0)).with_rgb([0.8, 0.3, 0.2]);
        g.log_scale = Vector3::repeat(-1.5);
        set.push(g, Extras::Static(StaticExtras::default()));
        set
    }

    #[test]
    fn magic_sniffing_loads_both_formats() {
        let set = tiny_set();
        let dir = tempfile::tempdir().unwrap();
        let cp = dir.path().join("model.cdgs");
        let st = dir.path().join("model.cdgc");
        save_checkpoint(&set, &cp).unwrap();
        codec::save_stream(&set, &st).unwrap();
        assert_eq!(load_any(&cp).unwrap().len(), 1);
        assert_eq!(load_any(&st).unwrap().len(), 1);
        let junk = dir.path().join("junk.bin");
        std::fs::write(&junk, b"nonsense").unwrap();
        assert!(load_any(&junk).is_err());
    }

    #[test]
    fn report_rows_are_stable() {
        let report = EvalReport {
            view_index: 2,
            n_gaussians: 10,
            n_static: 7,
            n_dynamic: 3,
            psnr_mean: 30.0,
            ssim_mean: 0.95,
            psnr_per_frame: vec![29.5, 30.5],
            model_bytes: 1234,
        };
        let rows = report.csv_rows();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0], "2,0,29.500000,0.950000,10,7,3,1234");
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back.psnr_per_frame, report.psnr_per_frame);
    }
}
