//! Adam optimizer over the heterogeneous Gaussian parameter groups.
//!
//! Moments are stored row-per-Gaussian with a fixed stride per attribute,
//! so structural edits (prune, densify, branch conversion) remap moments by
//! row: surviving rows keep their state, fresh rows start cold. The
//! importance scores train through a separate entry point with their own
//! step counter because the trainer periodically re-grounds them and resets
//! their moments.

use crate::render::GradientSet;
use crate::scene::{Extras, GaussianSet};
use serde::{Deserialize, Serialize};

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-attribute learning rates. `position` is a per-unit-extent rate: the
/// trainer multiplies it by the scene extent. Drift and trajectory
/// positions follow `position`; trajectory rotations follow `rotation`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LearningRates {
    pub position: f32,
    pub rotation: f32,
    pub log_scale: f32,
    pub opacity: f32,
    pub color: f32,
    pub window: f32,
    pub importance: f32,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            position: 1.6e-4,
            rotation: 1e-3,
            log_scale: 5e-3,
            opacity: 5e-2,
            color: 2.5e-3,
            window: 1e-3,
            importance: 5e-3,
        }
    }
}

/// First/second moment estimates for one attribute, `stride` scalars per row.
#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f32>,
    v: Vec<f32>,
    stride: usize,
}

impl Moments {
    fn new(rows: usize, stride: usize) -> Self {
        Moments {
            m: vec![0.0; rows * stride],
            v: vec![0.0; rows * stride],
            stride,
        }
    }

    fn rows(&self) -> usize {
        self.m.len() / self.stride
    }

    /// Drop the given rows (sorted ascending), compacting the rest in order.
    fn remove_rows(&mut self, removed: &[usize]) {
        if removed.is_empty() {
            return;
        }
        let rows = self.rows();
        let mut dead = vec![false; rows];
        for &r in removed {
            dead[r] = true;
        }
        let mut w = 0;
        for r in 0..rows {
            if dead[r] {
                continue;
            }
            if w != r {
                let (src, dst) = (r * self.stride, w * self.stride);
                for k in 0..self.stride {
                    self.m[dst + k] = self.m[src + k];
                    self.v[dst + k] = self.v[src + k];
                }
            }
            w += 1;
        }
        self.m.truncate(w * self.stride);
        self.v.truncate(w * self.stride);
    }

    fn grow_to(&mut self, rows: usize) {
        self.m.resize(rows * self.stride, 0.0);
        self.v.resize(rows * self.stride, 0.0);
    }

    fn zero_row(&mut self, row: usize) {
        for k in row * self.stride..(row + 1) * self.stride {
            self.m[k] = 0.0;
            self.v[k] = 0.0;
        }
    }

    /// One Adam update of the scalar at `idx`; returns the parameter delta.
    #[inline]
    fn update(&mut self, idx: usize, grad: f32, lr: f32, c: &AdamConfig, t: u64) -> f32 {
        let m = c.beta1 * self.m[idx] + (1.0 - c.beta1) * grad;
        let v = c.beta2 * self.v[idx] + (1.0 - c.beta2) * grad * grad;
        self.m[idx] = m;
        self.v[idx] = v;
        let m_hat = m / (1.0 - c.beta1.powi(t as i32));
        let v_hat = v / (1.0 - c.beta2.powi(t as i32));
        -lr * m_hat / (v_hat.sqrt() + c.eps)
    }
}

/// Optimizer state for every attribute of a [`GaussianSet`].
#[derive(Debug, Clone)]
pub struct AdamState {
    cfg: AdamConfig,
    step: u64,
    importance_step: u64,
    position: Moments,
    rotation: Moments,
    log_scale: Moments,
    opacity: Moments,
    color: Moments,
    importance: Moments,
    drift: Moments,
    traj_pos: Moments,
    traj_rot: Moments,
    window: Moments,
}

impl AdamState {
    pub fn new(set: &GaussianSet, cfg: AdamConfig) -> Self {
        let n = set.len();
        let k = set.traj_points as usize;
        AdamState {
            cfg,
            step: 0,
            importance_step: 0,
            position: Moments::new(n, 3),
            rotation: Moments::new(n, 4),
            log_scale: Moments::new(n, 3),
            opacity: Moments::new(n, 1),
            color: Moments::new(n, 12),
            importance: Moments::new(n, 1),
            drift: Moments::new(n, 3),
            traj_pos: Moments::new(n, 3 * k),
            traj_rot: Moments::new(n, 4 * k),
            window: Moments::new(n, 2),
        }
    }

    fn all_buffers(&mut self) -> [&mut Moments; 10] {
        [
            &mut self.position,
            &mut self.rotation,
            &mut self.log_scale,
            &mut self.opacity,
            &mut self.color,
            &mut self.importance,
            &mut self.drift,
            &mut self.traj_pos,
            &mut self.traj_rot,
            &mut self.window,
        ]
    }

    /// Remap after removals: `removed` holds pre-removal rows, ascending.
    pub fn remove_rows(&mut self, removed: &[usize]) {
        for buf in self.all_buffers() {
            buf.remove_rows(removed);
        }
    }

    /// Extend with cold rows for freshly spawned Gaussians.
    pub fn grow_to(&mut self, rows: usize) {
        for buf in self.all_buffers() {
            buf.grow_to(rows);
        }
    }

    /// Reset the motion-related moments of one row (after a branch
    /// conversion its drift/trajectory/window parameters are re-derived).
    pub fn zero_motion_row(&mut self, row: usize) {
        self.drift.zero_row(row);
        self.traj_pos.zero_row(row);
        self.traj_rot.zero_row(row);
        self.window.zero_row(row);
    }

    /// Reset the importance moments (after scores are re-grounded).
    pub fn zero_importance(&mut self) {
        self.importance.m.iter_mut().for_each(|x| *x = 0.0);
        self.importance.v.iter_mut().for_each(|x| *x = 0.0);
        self.importance_step = 0;
    }

    pub fn rows(&self) -> usize {
        self.position.rows()
    }

    /// One optimizer step over every attribute except importance.
    /// `extent` scales the position-family learning rate.
    pub fn step_params(
        &mut self,
        set: &mut GaussianSet,
        grads: &GradientSet,
        lr: &LearningRates,
        extent: f32,
    ) {
        assert_eq!(set.len(), self.rows());
        assert_eq!(set.len(), grads.position.len());
        self.step += 1;
        let t = self.step;
        let cfg = self.cfg;
        let lr_pos = lr.position * extent;
        for i in 0..set.len() {
            for ax in 0..3 {
                let d = self
                    .position
                    .update(i * 3 + ax, grads.position[i][ax], lr_pos, &cfg, t);
                set.cores[i].position[ax] += d;
                let d = self.log_scale.update(
                    i * 3 + ax,
                    grads.log_scale[i][ax],
                    lr.log_scale,
                    &cfg,
                    t,
                );
                set.cores[i].log_scale[ax] += d;
            }
            for ax in 0..4 {
                let d = self
                    .rotation
                    .update(i * 4 + ax, grads.rotation[i][ax], lr.rotation, &cfg, t);
                set.cores[i].rotation[ax] += d;
            }
            let d = self
                .opacity
                .update(i, grads.opacity_logit[i], lr.opacity, &cfg, t);
            set.cores[i].opacity_logit += d;
            for ax in 0..12 {
                let d = self
                    .color
                    .update(i * 12 + ax, grads.color[i][ax], lr.color, &cfg, t);
                set.cores[i].color[ax] += d;
            }
            match &mut set.extras[i] {
                Extras::Static(s) => {
                    for ax in 0..3 {
                        let d = self
                            .drift
                            .update(i * 3 + ax, grads.drift[i][ax], lr_pos, &cfg, t);
                        s.global_translation[ax] += d;
                    }
                }
                Extras::Dynamic(dy) => {
                    let k = dy.traj_pos.len();
                    for (kk, q) in dy.traj_pos.iter_mut().enumerate() {
                        for ax in 0..3 {
                            let idx = i * self.traj_pos.stride + kk * 3 + ax;
                            let d = self.traj_pos.update(
                                idx,
                                grads.traj_pos[i][kk][ax],
                                lr_pos,
                                &cfg,
                                t,
                            );
                            q[ax] += d;
                        }
                    }
                    debug_assert_eq!(k, dy.traj_rot.len());
                    for (kk, q) in dy.traj_rot.iter_mut().enumerate() {
                        for ax in 0..4 {
                            let idx = i * self.traj_rot.stride + kk * 4 + ax;
                            let d = self.traj_rot.update(
                                idx,
                                grads.traj_rot[i][kk][ax],
                                lr.rotation,
                                &cfg,
                                t,
                            );
                            q[ax] += d;
                        }
                    }
                    let d = self
                        .window
                        .update(i * 2, grads.window[i][0], lr.window, &cfg, t);
                    dy.window_start += d;
                    let d = self
                        .window
                        .update(i * 2 + 1, grads.window[i][1], lr.window, &cfg, t);
                    dy.window_end += d;
                }
            }
        }
    }

    /// One optimizer step on the raw importance scores only.
    pub fn step_importance(&mut self, set: &mut GaussianSet, grads: &[f32], lr: f32) {
        assert_eq!(set.len(), self.rows());
        assert_eq!(set.len(), grads.len());
        self.importance_step += 1;
        let t = self.importance_step;
        let cfg = self.cfg;
        for i in 0..set.len() {
            let d = self.importance.update(i, grads[i], lr, &cfg, t);
            set.cores[i].importance_raw = (set.cores[i].importance_raw + d).clamp(0.0, 1.0);
        }
    }
}
