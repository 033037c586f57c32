//! Three-phase training driver.
//!
//! Phase one warms up a static-only population on the photometric loss.
//! Phase two grows the population along a quadratic schedule while the
//! soft count gate anneals from loose to sharp; every `event_interval`
//! iterations a control event refreshes importance scores from the fused
//! cues, reallocates Gaussians between the static and dynamic branches,
//! densifies toward the schedule, and prunes. Phase three binarizes the
//! gate at 0.5, trims the losers, freezes the population, and fine-tunes
//! the survivors.
//!
//! Every stochastic choice flows from one seeded generator and all
//! parallel reductions merge in fixed order, so a rerun with the same
//! config and dataset produces byte-identical artifacts.

mod adam;
mod config;

pub use adam::{AdamConfig, AdamState, LearningRates};
pub use config::TrainConfig;

use crate::allocator::{allocate, decide_threshold};
use crate::budget::{
    anneal_temperature, binarize, budget_loss, budget_loss_grad, gate, gate_grad, proxy_count,
    BudgetConfig,
};
use crate::error::{Error, Result};
use crate::importance::{fuse, recenter_scores, CueAccumulator};
use crate::math::{logit, quat_normalize};
use crate::population::{densify, initial_count, prune, remove_dead, step_target};
use crate::render::{backward, render_loss, render_scored, GradientSet, LossBreakdown};
use crate::scene::{
    serialize_checkpoint, Dataset, Extras, GaussianCore, GaussianSet, StaticExtras, WINDOW_MAX,
    WINDOW_MIN,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::Path;

/// Log-scale bounds guarding against degenerate or exploding Gaussians.
const LOG_SCALE_MIN: f32 = -12.0;
const LOG_SCALE_MAX: f32 = 2.0;

/// Summary of a finished run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations: usize,
    pub n_final: usize,
    pub n_static: usize,
    pub n_dynamic: usize,
    pub n_target: usize,
    /// Mean photometric terms over all training pairs after phase three.
    pub final_l1: f64,
    pub final_ssim_loss: f64,
    pub final_total: f64,
}

/// Total phase-two objective from its parts.
pub fn total_objective(render: f64, budget: f64, reg: f64, lambda_b: f64, lambda_r: f64) -> f64 {
    render + lambda_b * budget + lambda_r * reg
}

/// Add the parameter-magnitude regularizer gradients (times `lambda`) into
/// `grads` and return the raw regularizer value: the mean absolute value
/// over dynamic control-point deviations from their trajectory mean, all
/// log scales, and the active color coefficients.
pub fn add_reg_grads(set: &GaussianSet, lambda: f64, grads: &mut GradientSet) -> f64 {
    let coeffs = set.color_coeffs();
    let mut count = 0usize;
    for e in &set.extras {
        if let Extras::Dynamic(d) = e {
            count += 3 * d.traj_pos.len();
        }
    }
    count += set.len() * 3 + set.len() * coeffs;
    if count == 0 {
        return 0.0;
    }
    let inv = 1.0 / count as f64;
    let lam = (lambda * inv) as f32;
    let mut total = 0.0f64;
    for i in 0..set.len() {
        let core = &set.cores[i];
        for ax in 0..3 {
            let s = core.log_scale[ax];
            total += s.abs() as f64;
            grads.log_scale[i][ax] += lam * s.signum_or_zero();
        }
        for c in 0..coeffs {
            let v = core.color[c];
            total += v.abs() as f64;
            grads.color[i][c] += lam * v.signum_or_zero();
        }
        if let Extras::Dynamic(d) = &set.extras[i] {
            let k = d.traj_pos.len();
            let mean = d.traj_pos.iter().sum::<nalgebra::Vector3<f32>>() / k as f32;
            for ax in 0..3 {
                let signs: Vec<f32> = d
                    .traj_pos
                    .iter()
                    .map(|q| (q[ax] - mean[ax]).signum_or_zero())
                    .collect();
                let sign_mean: f32 = signs.iter().sum::<f32>() / k as f32;
                for (kk, q) in d.traj_pos.iter().enumerate() {
                    total += (q[ax] - mean[ax]).abs() as f64;
                    grads.traj_pos[i][kk][ax] += lam * (signs[kk] - sign_mean);
                }
            }
        }
    }
    total * inv
}

trait SignumOrZero {
    fn signum_or_zero(self) -> f32;
}

impl SignumOrZero for f32 {
    /// Like `signum` but with a zero subgradient at zero.
    fn signum_or_zero(self) -> f32 {
        if self == 0.0 {
            0.0
        } else {
            self.signum()
        }
    }
}

/// Renormalize quaternions and clamp bounded parameters after a step.
fn normalize_set(set: &mut GaussianSet) {
    for i in 0..set.len() {
        let (q, _) = quat_normalize(set.cores[i].rotation);
        set.cores[i].rotation = q;
        for ax in 0..3 {
            set.cores[i].log_scale[ax] =
                set.cores[i].log_scale[ax].clamp(LOG_SCALE_MIN, LOG_SCALE_MAX);
        }
        if let Extras::Dynamic(d) = &mut set.extras[i] {
            for q in d.traj_rot.iter_mut() {
                *q = quat_normalize(*q).0;
            }
            let (mut a, mut b) = (
                d.window_start.clamp(WINDOW_MIN, WINDOW_MAX),
                d.window_end.clamp(WINDOW_MIN, WINDOW_MAX),
            );
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            d.window_start = a;
            d.window_end = b;
        }
    }
}

/// Seed a static-only population inside the scene volume.
fn init_population(dataset: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> GaussianSet {
    let n = initial_count(cfg.n_target);
    let extent = dataset.meta.scene_extent.max(1e-3);
    let half = 0.5 * extent;
    let base_scale = (0.04 * extent).ln();
    let mut set = GaussianSet::new(cfg.sh_degree, cfg.traj_points);
    for _ in 0..n {
        let pos = nalgebra::Vector3::new(
            rng.gen_range(-half..half),
            rng.gen_range(-half..half),
            rng.gen_range(-half..half),
        );
        let mut g = GaussianCore::new(pos).with_rgb([
            rng.gen_range(0.35..0.65),
            rng.gen_range(0.35..0.65),
            rng.gen_range(0.35..0.65),
        ]);
        g.log_scale = nalgebra::Vector3::repeat(base_scale + rng.gen_range(-0.3..0.3));
        g.opacity_logit = logit(0.1);
        g.importance_raw = 1.0;
        g.gate_activation = 1.0;
        set.push(g, Extras::Static(StaticExtras::default()));
    }
    set
}

struct MetricsWriter {
    file: std::io::BufWriter<fs::File>,
}

impl MetricsWriter {
    fn create(path: &Path, header: &str) -> Result<Self> {
        let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut file = std::io::BufWriter::new(f);
        writeln!(file, "{header}").map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { file })
    }

    fn row(&mut self, line: &str) -> Result<()> {
        writeln!(self.file, "{line}").map_err(|e| Error::Format(format!("metrics write: {e}")))
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.6}")
}

/// Run the full three-phase schedule. Writes `metrics.csv`, `growth.csv`,
/// per-event allocation reports, and the final checkpoint into `out_dir`;
/// returns the trained set and a summary.
pub fn train(dataset: &Dataset, cfg: &TrainConfig, out_dir: &Path) -> Result<(GaussianSet, TrainReport)> {
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let pairs = dataset.training_pairs();
    if pairs.is_empty() {
        return Err(Error::Invalid("no training views".into()));
    }
    let extent = dataset.meta.scene_extent.max(1e-3);
    let bg = dataset.background();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut set = init_population(dataset, cfg, &mut rng);
    let n_init = set.len();
    let mut adam = AdamState::new(&set, cfg.adam);

    let budget_cfg = BudgetConfig {
        n_target: cfg.n_target,
        tau_init: cfg.tau_init,
        tau_end: cfg.tau_end,
        lambda_b: cfg.lambda_budget as f32,
        k_start: 0,
        k_end: cfg.phase2_iters.saturating_sub(1) as u64,
    };
    let n_events = cfg.n_events();

    let mut metrics = MetricsWriter::create(
        &out_dir.join("metrics.csv"),
        "iteration,l1,ssim,budget,reg,n_proxy,n_static,n_dynamic",
    )?;
    let mut growth = MetricsWriter::create(
        &out_dir.join("growth.csv"),
        "iteration,n_static,n_dynamic,n_total,target",
    )?;
    growth.row(&format!(
        "0,{},{},{},{}",
        set.n_static(),
        set.n_dynamic(),
        set.len(),
        n_init
    ))?;

    let mut grad_norm_accum = vec![0.0f64; set.len()];
    let mut last_good = serialize_checkpoint(&set);
    let mut iter = 0usize;

    let step_once = |set: &mut GaussianSet,
                         adam: &mut AdamState,
                         rng: &mut ChaCha8Rng,
                         iter: usize,
                         phase2_k: Option<usize>,
                         grad_accum: Option<&mut Vec<f64>>|
     -> Result<(LossBreakdown, f64, f64, f64)> {
        let (vi, fi) = pairs[rng.gen_range(0..pairs.len())];
        let view = dataset.view(vi, fi);
        let t = dataset.t_norm(fi);
        let gt = dataset.image(vi, fi);
        let (breakdown, mut grads) = backward(set, &view, t, gt, bg, cfg.lambda_ssim);
        if !breakdown.total.is_finite() {
            return Err(Error::TrainingAborted {
                iteration: iter as u64,
                reason: format!("non-finite loss on view {vi} frame {fi}"),
            });
        }
        let reg = add_reg_grads(set, cfg.lambda_reg, &mut grads);

        let (n_proxy, budget_l) = if let Some(k) = phase2_k {
            let tau = anneal_temperature(k as u64, &budget_cfg);
            let gates: Vec<f32> = set.cores.iter().map(|c| c.gate_activation).collect();
            let n_proxy = proxy_count(&gates);
            let budget_l = budget_loss(n_proxy, cfg.n_target);
            let bgrad = (cfg.lambda_budget * budget_loss_grad(n_proxy, cfg.n_target)) as f32;
            let m_grads: Vec<f32> = (0..set.len())
                .map(|i| {
                    (grads.gate[i] + bgrad) * gate_grad(set.cores[i].importance_raw, tau)
                })
                .collect();
            adam.step_importance(set, &m_grads, cfg.lr.importance);
            (n_proxy, budget_l)
        } else {
            let gates: Vec<f32> = set.cores.iter().map(|c| c.gate_activation).collect();
            let n_proxy = proxy_count(&gates);
            (n_proxy, budget_loss(n_proxy, cfg.n_target))
        };

        if let Some(acc) = grad_accum {
            for (a, g) in acc.iter_mut().zip(&grads.position) {
                *a += g.norm() as f64;
            }
        }
        adam.step_params(set, &grads, &cfg.lr, extent);
        normalize_set(set);
        Ok((breakdown, budget_l, reg, n_proxy))
    };

    let persist_abort = |last_good: &[u8], e: Error| -> Error {
        let path = out_dir.join("aborted.cdgs");
        match fs::write(&path, last_good) {
            Ok(()) => e,
            Err(err) => Error::io(&path, err),
        }
    };

    // --- Phase one: static warm-up ---
    for _ in 0..cfg.phase1_iters {
        iter += 1;
        let (b, budget_l, reg, n_proxy) =
            match step_once(&mut set, &mut adam, &mut rng, iter, None, None) {
                Ok(v) => v,
                Err(e) => return Err(persist_abort(&last_good, e)),
            };
        metrics.row(&format!(
            "{},{},{},{},{},{},{},{}",
            iter,
            fmt_f(b.l1),
            fmt_f(b.ssim_loss),
            fmt_f(budget_l),
            fmt_f(reg),
            format_args!("{n_proxy:.3}"),
            set.n_static(),
            set.n_dynamic()
        ))?;
    }

    // --- Phase two: budget-controlled growth ---
    for k in 1..=cfg.phase2_iters {
        iter += 1;
        let tau = anneal_temperature((k - 1) as u64, &budget_cfg);
        for c in set.cores.iter_mut() {
            c.gate_activation = gate(c.importance_raw, tau);
        }
        let (b, budget_l, reg, n_proxy) = match step_once(
            &mut set,
            &mut adam,
            &mut rng,
            iter,
            Some(k - 1),
            Some(&mut grad_norm_accum),
        ) {
            Ok(v) => v,
            Err(e) => return Err(persist_abort(&last_good, e)),
        };
        metrics.row(&format!(
            "{},{},{},{},{},{},{},{}",
            iter,
            fmt_f(b.l1),
            fmt_f(b.ssim_loss),
            fmt_f(budget_l),
            fmt_f(reg),
            format_args!("{n_proxy:.3}"),
            set.n_static(),
            set.n_dynamic()
        ))?;

        if k % cfg.event_interval == 0 {
            let j = k / cfg.event_interval;
            run_event(
                EventArgs {
                    dataset,
                    cfg,
                    out_dir,
                    extent,
                    n_init,
                    n_events,
                    j,
                    iter,
                    tau,
                },
                &mut set,
                &mut adam,
                &mut rng,
                &mut grad_norm_accum,
                &mut growth,
            )?;
            set.validate()?;
            last_good = serialize_checkpoint(&set);
        }
    }

    // --- Phase three: binarize, trim, freeze, fine-tune ---
    let tau_final = anneal_temperature(budget_cfg.k_end, &budget_cfg);
    for c in set.cores.iter_mut() {
        c.gate_activation = gate(c.importance_raw, tau_final);
    }
    let doomed: Vec<usize> = (0..set.len())
        .filter(|&i| set.cores[i].gate_activation < 0.5)
        .collect();
    adam.remove_rows(&doomed);
    let kept = binarize(&mut set, 0.5);
    debug_assert_eq!(kept, set.len());
    growth.row(&format!(
        "{},{},{},{},{}",
        iter,
        set.n_static(),
        set.n_dynamic(),
        set.len(),
        cfg.n_target
    ))?;

    for _ in 0..cfg.phase3_iters {
        iter += 1;
        let (b, budget_l, reg, n_proxy) =
            match step_once(&mut set, &mut adam, &mut rng, iter, None, None) {
                Ok(v) => v,
                Err(e) => return Err(persist_abort(&last_good, e)),
            };
        metrics.row(&format!(
            "{},{},{},{},{},{},{},{}",
            iter,
            fmt_f(b.l1),
            fmt_f(b.ssim_loss),
            fmt_f(budget_l),
            fmt_f(reg),
            format_args!("{n_proxy:.3}"),
            set.n_static(),
            set.n_dynamic()
        ))?;
    }

    set.validate()?;
    crate::scene::save_checkpoint(&set, &out_dir.join("checkpoint.cdgs"))?;

    // Final photometric quality over the training pairs.
    let mut sums = (0.0f64, 0.0f64, 0.0f64);
    for &(vi, fi) in &pairs {
        let view = dataset.view(vi, fi);
        let img = crate::render::render(&set, &view, dataset.t_norm(fi), bg).image;
        let b = render_loss(&img, dataset.image(vi, fi), cfg.lambda_ssim);
        sums.0 += b.l1;
        sums.1 += b.ssim_loss;
        sums.2 += b.total;
    }
    let np = pairs.len() as f64;
    let report = TrainReport {
        iterations: iter,
        n_final: set.len(),
        n_static: set.n_static(),
        n_dynamic: set.n_dynamic(),
        n_target: cfg.n_target,
        final_l1: sums.0 / np,
        final_ssim_loss: sums.1 / np,
        final_total: sums.2 / np,
    };
    let report_path = out_dir.join("report.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&report_path, json).map_err(|e| Error::io(&report_path, e))?;
    Ok((set, report))
}

struct EventArgs<'a> {
    dataset: &'a Dataset,
    cfg: &'a TrainConfig,
    out_dir: &'a Path,
    extent: f32,
    n_init: usize,
    n_events: usize,
    j: usize,
    iter: usize,
    tau: f32,
}

/// One phase-two control event: refresh scores, reallocate branches, grow
/// toward the schedule, churn, prune back to the schedule.
fn run_event(
    args: EventArgs,
    set: &mut GaussianSet,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
    grad_norm_accum: &mut Vec<f64>,
    growth: &mut MetricsWriter,
) -> Result<()> {
    let EventArgs {
        dataset,
        cfg,
        out_dir,
        extent,
        n_init,
        n_events,
        j,
        iter,
        tau,
    } = args;
    let bg = dataset.background();
    let pairs = dataset.training_pairs();

    // Fresh cue scan over (a sample of) the training views.
    let mut acc = CueAccumulator::new(set.len());
    let limit = if cfg.scorer.sample_views == 0 {
        pairs.len()
    } else {
        cfg.scorer.sample_views.min(pairs.len())
    };
    for &(vi, fi) in &pairs[..limit] {
        let view = dataset.view(vi, fi);
        let t = dataset.t_norm(fi);
        let out = render_scored(set, &view, t, bg, dataset.image(vi, fi));
        acc.observe_view(set, t, &out, None);
    }
    acc.set_grad_norms(grad_norm_accum);
    let mut scores = fuse(&acc.finish(set), &cfg.scorer);

    // Exploration margin, annealed out so late refreshes are exact.
    let tail = cfg.exploration_tail * (1.0 - j as f32 / n_events as f32);
    if tail > 0.0 {
        for s in scores.iter_mut() {
            *s = (*s + rng.gen_range(-tail..tail)).clamp(0.0, 1.0);
        }
    }
    let target_j = step_target(n_init, cfg.n_target, j, n_events);
    recenter_scores(&mut scores, target_j);
    for (i, &s) in scores.iter().enumerate() {
        set.cores[i].importance_raw = s;
        set.cores[i].gate_activation = gate(s, tau);
    }
    adam.zero_importance();

    // Reallocate branches by motion magnitude.
    let kinds_before: Vec<_> = (0..set.len()).map(|i| set.kind(i)).collect();
    let decision = decide_threshold(&set.motion_magnitudes());
    let report = allocate(set, &decision);
    for i in 0..set.len() {
        if set.kind(i) != kinds_before[i] {
            adam.zero_motion_row(i);
        }
    }
    let alloc_path = out_dir.join(format!("alloc_event_{j:02}.json"));
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(&alloc_path, json).map_err(|e| Error::io(&alloc_path, e))?;

    // Cull the dead before growing so densification backfills their slots and
    // the post-event count always lands exactly on the schedule.
    let dead = remove_dead(set);
    adam.remove_rows(&dead);
    if !dead.is_empty() {
        let mut drop = vec![false; scores.len()];
        for &i in &dead {
            drop[i] = true;
        }
        let mut idx = 0;
        scores.retain(|_| {
            idx += 1;
            !drop[idx - 1]
        });
    }

    // Grow toward the schedule plus churn headroom.
    let n0 = set.len();
    let churn = (cfg.churn_fraction * n0 as f32).floor() as usize;
    let n_add = target_j.saturating_sub(n0) + churn;
    densify(set, &scores, None, n_add, extent, rng);
    adam.grow_to(set.len());
    for i in n0..set.len() {
        set.cores[i].gate_activation = gate(set.cores[i].importance_raw, tau);
    }

    // Prune back down to the schedule.
    let prune_n = set.len().saturating_sub(target_j);
    let scores_now: Vec<f32> = set.cores.iter().map(|c| c.importance_raw).collect();
    let removed = prune(set, &scores_now, prune_n, rng);
    adam.remove_rows(&removed);

    growth.row(&format!(
        "{},{},{},{},{}",
        iter,
        set.n_static(),
        set.n_dynamic(),
        set.len(),
        target_j
    ))?;
    *grad_norm_accum = vec![0.0; set.len()];
    Ok(())
}
