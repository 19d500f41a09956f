//! The z-buffer transform against an explicit OpenGL projection matrix.

use nalgebra::{Perspective3, Point3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfnode_core::compositor::{depth_to_zbuffer, zbuffer_to_depth};

/// Projects an eye-space point at distance `z` in front of an OpenGL camera
/// (which looks down −z) and remaps NDC z from [−1, 1] to [0, 1].
fn projection_oracle(z: f64, near: f64, far: f64) -> f64 {
    let proj = Perspective3::new(1.0, 1.0, near, far);
    let ndc = proj.project_point(&Point3::new(0.0, 0.0, -z));
    (ndc.z + 1.0) * 0.5
}

#[test]
fn matches_projection_matrix() {
    let d = depth_to_zbuffer(1.0, 0.1, 100.0).unwrap();
    assert!((d - projection_oracle(1.0, 0.1, 100.0)).abs() < 1e-9);
    assert!((d - 0.9009009).abs() < 1e-7);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100_000 {
        let near = rng.gen_range(0.01..2.0);
        let far = near + rng.gen_range(0.1..500.0);
        let z = rng.gen_range(near..=far);
        let d = depth_to_zbuffer(z, near, far).unwrap();
        assert!((d - projection_oracle(z, near, far)).abs() < 1e-9);
        let back = zbuffer_to_depth(d, near, far).unwrap();
        assert!((back - z).abs() <= 1e-7 * z);
    }
}

#[test]
fn strictly_monotonic() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100_000 {
        let near = rng.gen_range(0.01..1.0);
        let far = near + rng.gen_range(1.0..100.0);
        let a = rng.gen_range(near..far);
        let b = rng.gen_range(near..far);
        if a == b {
            continue;
        }
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        assert!(depth_to_zbuffer(lo, near, far).unwrap() < depth_to_zbuffer(hi, near, far).unwrap());
    }
}
