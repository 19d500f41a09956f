use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfnode_core::{Aabb, Vector3};
use rfnode_ingest::{RayBatch, TrainRay};
use rfnode_voxel::{loss_and_grad, VoxelConfig, VoxelGrid, VoxelTrainer};

fn tiny_grid(seed: u64) -> VoxelGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = VoxelGrid::new([4; 3], Aabb::new([-1.0; 3], [1.0; 3]).unwrap(), 0.0).unwrap();
    for d in g.density_mut() {
        *d = rng.gen_range(-2.0..1.5);
    }
    for k in g.sh_mut() {
        *k = rng.gen_range(-1.0..1.0);
    }
    g
}

fn batch(seed: u64, n: usize, with_depth: bool) -> RayBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rays = (0..n)
        .map(|i| {
            let origin = Vector3::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5), -3.0);
            let target = Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), 0.0);
            let direction = (target - origin).normalize();
            TrainRay {
                origin,
                direction,
                target_rgb: [rng.gen(), rng.gen(), rng.gen()],
                target_depth: with_depth.then(|| rng.gen_range(2.0..3.5)),
                entry_index: 0,
                pixel: (i as u32, 0),
                z_scale: direction.z,
            }
        })
        .collect();
    RayBatch { rays }
}

fn config(depth_weight: f64) -> VoxelConfig {
    VoxelConfig { samples_per_ray: 24, depth_loss_weight: depth_weight, background: [0.1, 0.2, 0.3], ..VoxelConfig::default() }
}

fn param(g: &mut VoxelGrid, i: usize) -> &mut f64 {
    let n = g.density().len();
    if i < n {
        &mut g.density_mut()[i]
    } else {
        &mut g.sh_mut()[i - n]
    }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let grid = tiny_grid(1);
    let b = batch(2, 12, true);
    let cfg = config(0.3);
    let (_, grad) = loss_and_grad(&grid, &b, &cfg).unwrap();
    let flat: Vec<f64> = grad.density.iter().chain(&grad.sh).copied().collect();
    let touched: Vec<usize> = (0..flat.len()).filter(|&i| flat[i].abs() > 1e-6).collect();
    assert!(touched.len() >= 20);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let eps = 1e-4;
    let mut checked = 0;
    while checked < 20 {
        let i = touched[rng.gen_range(0..touched.len())];
        let mut plus = grid.clone();
        *param(&mut plus, i) += eps;
        let mut minus = grid.clone();
        *param(&mut minus, i) -= eps;
        let lp = loss_and_grad(&plus, &b, &cfg).unwrap().0.total;
        let lm = loss_and_grad(&minus, &b, &cfg).unwrap().0.total;
        let numeric = (lp - lm) / (2.0 * eps);
        let rel = (flat[i] - numeric).abs() / flat[i].abs().max(numeric.abs());
        assert!(rel < 1e-3, "param {i}: analytic {} numeric {numeric} rel {rel}", flat[i]);
        checked += 1;
    }
}

#[test]
fn zero_depth_weight_without_targets() {
    let (loss, _) = loss_and_grad(&tiny_grid(3), &batch(4, 8, false), &config(0.0)).unwrap();
    assert_eq!(loss.depth, 0.0);
    assert_eq!(loss.total, loss.photometric);
}

#[test]
fn small_step_against_gradient_descends() {
    let grid = tiny_grid(5);
    let b = batch(6, 1, false);
    let cfg = config(0.0);
    let (loss, grad) = loss_and_grad(&grid, &b, &cfg).unwrap();
    let mut moved = grid.clone();
    let eps = 1e-3;
    for (p, g) in moved.density_mut().iter_mut().zip(&grad.density) {
        *p -= eps * g;
    }
    for (p, g) in moved.sh_mut().iter_mut().zip(&grad.sh) {
        *p -= eps * g;
    }
    let after = loss_and_grad(&moved, &b, &cfg).unwrap().0;
    assert!(after.total < loss.total);
}

#[test]
fn gradient_is_independent_of_thread_count() {
    let grid = tiny_grid(8);
    let b = batch(9, 200, true);
    let cfg = config(0.1);
    let a = loss_and_grad(&grid, &b, &cfg).unwrap();
    for threads in [1, 3] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let c = pool.install(|| loss_and_grad(&grid, &b, &cfg).unwrap());
        assert_eq!(a.0, c.0);
        assert_eq!(a.1, c.1);
    }
}

#[test]
fn train_step_rejects_non_finite_and_keeps_params() {
    let grid = tiny_grid(10);
    let mut b = batch(11, 4, false);
    b.rays[0].target_rgb = [f32::NAN, 0.0, 0.0];
    let mut t = VoxelTrainer::new(grid.clone(), config(0.0)).unwrap();
    assert!(t.train_step(&b).is_err());
    assert_eq!(t.grid(), &grid);
    assert_eq!(t.steps(), 0);
    assert!(t.train_step(&RayBatch::default()).is_err());

    let ok = batch(12, 16, false);
    let before = loss_and_grad(&grid, &ok, &config(0.0)).unwrap().0.total;
    let mut t = VoxelTrainer::new(grid, VoxelConfig { step_size: 0.01, ..config(0.0) }).unwrap();
    for _ in 0..20 {
        t.train_step(&ok).unwrap();
    }
    assert!(t.grid().is_finite());
    assert!(loss_and_grad(t.grid(), &ok, &config(0.0)).unwrap().0.total < before);
}
