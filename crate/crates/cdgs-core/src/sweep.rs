//! Rate-distortion sweeps: train at several count targets, compress,
//! and evaluate the held-out view of each model.

use crate::codec::compress;
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::scene::Dataset;
use crate::train::{train, TrainConfig};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RdPoint {
    pub n_target: usize,
    pub n_final: usize,
    pub compressed_bytes: u64,
    pub psnr: f64,
    pub ssim: f64,
}

pub const RD_CSV_HEADER: &str = "n_target,n_final,compressed_bytes,psnr,ssim";

impl RdPoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.6},{:.6}",
            self.n_target, self.n_final, self.compressed_bytes, self.psnr, self.ssim
        )
    }
}

/// Rewrite `rd.csv` and the gnuplot-friendly `rd.dat` from the points
/// gathered so far.
fn write_tables(out_dir: &Path, points: &[RdPoint]) -> Result<()> {
    let mut csv = String::from(RD_CSV_HEADER);
    csv.push('\n');
    let mut dat = String::from("# compressed_bytes psnr_db n_target\n");
    for p in points {
        csv.push_str(&p.csv_row());
        csv.push('\n');
        dat.push_str(&format!(
            "{} {:.6} {}\n",
            p.compressed_bytes, p.psnr, p.n_target
        ));
    }
    let csv_path = out_dir.join("rd.csv");
    fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    let dat_path = out_dir.join("rd.dat");
    fs::write(&dat_path, dat).map_err(|e| Error::io(&dat_path, e))?;
    Ok(())
}

/// Train one model per target, derived from `base` with only the count
/// target changed; returns one point per target in the given order.
/// Artifacts land in `out_dir/n{target}/`, plus `rd.csv` and `rd.dat` at
/// the top level. The tables are rewritten after every leg, so a failing
/// leg aborts the sweep but leaves the rows finished so far on disk.
pub fn rd_sweep(
    dataset: &Dataset,
    base: &TrainConfig,
    targets: &[usize],
    out_dir: &Path,
) -> Result<Vec<RdPoint>> {
    if targets.is_empty() {
        return Err(Error::Invalid("no sweep targets given".into()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let held_out = dataset.held_out_index();
    let mut points = Vec::with_capacity(targets.len());
    for &n_target in targets {
        let cfg = TrainConfig {
            n_target,
            ..base.clone()
        };
        let run_dir = out_dir.join(format!("n{n_target}"));
        let leg = (|| -> Result<RdPoint> {
            let (set, _) = train(dataset, &cfg, &run_dir)?;
            let stream = compress(&set)?;
            let stream_path = run_dir.join("model.cdgc");
            fs::write(&stream_path, &stream).map_err(|e| Error::io(&stream_path, e))?;
            let report: EvalReport = evaluate(&set, dataset, held_out, stream.len() as u64)?;
            Ok(RdPoint {
                n_target,
                n_final: set.len(),
                compressed_bytes: stream.len() as u64,
                psnr: report.psnr_mean,
                ssim: report.ssim_mean,
            })
        })();
        match leg {
            Ok(p) => {
                points.push(p);
                write_tables(out_dir, &points)?;
            }
            Err(e) => {
                write_tables(out_dir, &points)?;
                return Err(e);
            }
        }
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_row_formatting_is_fixed() {
        let p = RdPoint {
            n_target: 256,
            n_final: 255,
            compressed_bytes: 9000,
            psnr: 31.25,
            ssim: 0.91,
        };
        assert_eq!(p.csv_row(), "256,255,9000,31.250000,0.910000");
    }

    #[test]
    fn empty_target_list_is_rejected() {
        let spec = crate::synth::SyntheticSceneSpec {
            width: 16,
            height: 16,
            frames: 2,
            n_views: 2,
            held_out_view: 1,
            ..Default::default()
        };
        let dataset = crate::synth::generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let base = TrainConfig::default();
        assert!(rd_sweep(&dataset, &base, &[], dir.path()).is_err());
    }

    #[test]
    fn failing_leg_keeps_partial_tables() {
        let spec = crate::synth::SyntheticSceneSpec {
            width: 16,
            height: 16,
            frames: 2,
            n_views: 3,
            held_out_view: 2,
            ..Default::default()
        };
        let dataset = crate::synth::generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let base = TrainConfig {
            phase1_iters: 2,
            phase2_iters: 4,
            phase3_iters: 1,
            event_interval: 2,
            ..TrainConfig::default()
        };
        // Second leg fails config validation before training starts.
        let err = rd_sweep(&dataset, &base, &[8, 0], dir.path()).unwrap_err();
        assert!(err.to_string().contains("n_target"), "{err}");
        let csv = std::fs::read_to_string(dir.path().join("rd.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2, "header plus the one finished leg: {csv}");
        assert!(lines[1].starts_with("8,"));
    }
}
