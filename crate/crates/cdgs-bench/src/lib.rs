//! Shared scene builders for the benchmarks: deterministic random
//! Gaussian sets and camera views sized like a small training step.

use cdgs_core::scene::{CameraView, DynamicExtras, Extras, GaussianCore, GaussianSet, StaticExtras};
use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mixed static/dynamic set with plausible mid-training statistics.
pub fn bench_set(n: usize, dynamic_every: usize, seed: u64) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = GaussianSet::new(1, 4);
    for i in 0..n {
        let mut g = GaussianCore::new(Vector3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ));
        g.rotation = Vector4::new(
            rng.gen_range(0.5..1.0),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
            rng.gen_range(-0.3..0.3),
        );
        g.log_scale = Vector3::new(
            rng.gen_range(-3.2..-2.2),
            rng.gen_range(-3.2..-2.2),
            rng.gen_range(-3.2..-2.2),
        );
        g.opacity_logit = rng.gen_range(-1.0..2.0);
        for c in g.color.iter_mut() {
            *c = rng.gen_range(-0.5..0.5);
        }
        g.importance_raw = rng.gen_range(0.0..1.0);
        g.gate_activation = rng.gen_range(0.3..1.0);
        if dynamic_every > 0 && i % dynamic_every == 0 {
            let mut d = DynamicExtras::stationary(g.position, g.rotation, 4);
            for p in d.traj_pos.iter_mut() {
                *p += Vector3::new(
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                    rng.gen_range(-0.1..0.1),
                );
            }
            set.push(g, Extras::Dynamic(d));
        } else {
            set.push(g, Extras::Static(StaticExtras::default()));
        }
    }
    set
}

/// Camera a couple of units back, looking at the origin.
pub fn bench_view(width: usize, height: usize) -> CameraView {
    CameraView::look_at(
        0,
        0,
        width,
        height,
        60.0,
        Vector3::new(0.0, 0.3, -2.5),
        Vector3::zeros(),
    )
}
