//! Training configuration, loadable from TOML with full defaults.

use super::adam::{AdamConfig, LearningRates};
use crate::error::{Error, Result};
use crate::importance::ScorerConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Everything the trainer needs besides the dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Final Gaussian budget.
    pub n_target: usize,
    /// Phase one: static-only photometric warm-up, no population control.
    pub phase1_iters: usize,
    /// Phase two: budget-controlled growth with periodic control events.
    pub phase2_iters: usize,
    /// Phase three: fine-tuning after the gate is binarized and frozen.
    pub phase3_iters: usize,
    /// Iterations between control events in phase two.
    pub event_interval: usize,
    /// Weight of the structural term inside the photometric loss.
    pub lambda_ssim: f64,
    /// Weight of the squared soft-count deviation.
    pub lambda_budget: f64,
    /// Weight of the parameter-magnitude regularizer.
    pub lambda_reg: f64,
    /// Gate temperature at the start of phase two.
    pub tau_init: f32,
    /// Gate temperature at the end of phase two.
    pub tau_end: f32,
    /// Initial exploration margin added to refreshed scores, annealed to
    /// zero across phase two so the final refresh is exact.
    pub exploration_tail: f32,
    /// Share of the population churned (pruned and regrown) per event.
    pub churn_fraction: f32,
    /// Spherical-harmonic degree of the color model (0 or 1).
    pub sh_degree: u32,
    /// Control points per dynamic trajectory.
    pub traj_points: u32,
    /// Seed for every stochastic choice the trainer makes.
    pub seed: u64,
    pub lr: LearningRates,
    pub adam: AdamConfig,
    pub scorer: ScorerConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            n_target: 1024,
            phase1_iters: 100,
            phase2_iters: 2000,
            phase3_iters: 500,
            event_interval: 100,
            lambda_ssim: 0.2,
            lambda_budget: 1e-7,
            lambda_reg: 1e-4,
            tau_init: 1.0,
            tau_end: 0.01,
            exploration_tail: 0.05,
            churn_fraction: 0.02,
            sh_degree: 1,
            traj_points: crate::scene::DEFAULT_TRAJ_POINTS,
            seed: 0,
            lr: LearningRates::default(),
            adam: AdamConfig::default(),
            scorer: ScorerConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn total_iters(&self) -> usize {
        self.phase1_iters + self.phase2_iters + self.phase3_iters
    }

    /// Number of control events in phase two.
    pub fn n_events(&self) -> usize {
        if self.event_interval == 0 {
            0
        } else {
            self.phase2_iters / self.event_interval
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_target == 0 {
            return Err(Error::Config("n_target must be positive".into()));
        }
        if self.event_interval == 0 || self.event_interval > self.phase2_iters {
            return Err(Error::Config(format!(
                "event_interval {} must be in [1, phase2_iters = {}]",
                self.event_interval, self.phase2_iters
            )));
        }
        if !(self.tau_init > 0.0 && self.tau_end > 0.0 && self.tau_end <= self.tau_init) {
            return Err(Error::Config(format!(
                "temperatures must satisfy 0 < tau_end <= tau_init (got {} -> {})",
                self.tau_init, self.tau_end
            )));
        }
        if self.sh_degree > 1 {
            return Err(Error::Config(format!(
                "sh_degree {} unsupported (0 or 1)",
                self.sh_degree
            )));
        }
        if self.traj_points < 2 {
            return Err(Error::Config("traj_points must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.churn_fraction) {
            return Err(Error::Config("churn_fraction must be in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: TrainConfig =
            toml::from_str(s).map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
