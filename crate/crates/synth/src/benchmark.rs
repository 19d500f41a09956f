//! The fixed acceptance dataset: a 40-frame 128×128 orbit around a floor
//! slab carrying a matte sphere, a box and a glossy sphere.

use rfnode_ingest::ReplayScript;

use crate::scene::{Material, Primitive, SceneSpec, Shape, Specular};
use crate::session::{CameraSpec, GenerateSpec};
use crate::trajectory::TrajectorySpec;

pub const BENCHMARK_HOLDOUT: [u64; 5] = [4, 12, 20, 28, 36];
const BENCHMARK_FRAMES: usize = 40;

/// `session_checksum` of the generated benchmark directory.
pub const BENCHMARK_CHECKSUM: &str = "b0c2c0ca6630738fb0a48b3f4ab864f6a6fc2125f5ecc2fb9c9f7ce8be350ac8";

fn matte(diffuse: [f64; 3], ambient: f64) -> Material {
    Material { diffuse, emissive: [ambient; 3], specular: None }
}

pub fn benchmark_spec() -> GenerateSpec {
    let primitives = vec![
        Primitive {
            shape: Shape::Box { min: [-1.5, -1.5, -0.1], max: [1.5, 1.5, 0.0] },
            material: matte([0.45, 0.5, 0.4], 0.05),
        },
        Primitive {
            shape: Shape::Sphere { center: [0.0, 0.0, 0.5], radius: 0.5 },
            material: matte([0.8, 0.2, 0.15], 0.05),
        },
        Primitive {
            shape: Shape::Box { min: [0.6, -0.9, 0.0], max: [1.1, -0.4, 0.6] },
            material: matte([0.2, 0.3, 0.8], 0.05),
        },
        Primitive {
            shape: Shape::Sphere { center: [-0.7, 0.6, 0.35], radius: 0.35 },
            material: Material {
                diffuse: [0.7, 0.65, 0.2],
                emissive: [0.05; 3],
                specular: Some(Specular { rgb: [0.45, 0.45, 0.45], direction: [0.8, 0.0, 0.6], exponent: 8.0 }),
            },
        },
    ];
    GenerateSpec {
        scene: SceneSpec { primitives, background: [0.0; 3], light: [0.4, 0.3, 0.85] },
        trajectory: TrajectorySpec::Orbit {
            center: [0.0, 0.0, 0.0],
            radius: 3.2,
            height: 1.8,
            n_frames: BENCHMARK_FRAMES,
            look_at: [0.0, 0.0, 0.3],
            start_angle: 0.0,
            sweep: std::f64::consts::TAU,
        },
        camera: CameraSpec { fx: 120.0, fy: 120.0, cx: 64.0, cy: 64.0, width: 128, height: 128 },
        camera_id: "cam0".into(),
        frame_interval: 0.1,
        depth_noise_m: 0.0,
        seed: 0,
    }
}

/// Every non-holdout frame, in sequence order.
pub fn benchmark_script() -> ReplayScript {
    let pairs = (0..BENCHMARK_FRAMES as u64)
        .filter(|s| !BENCHMARK_HOLDOUT.contains(s))
        .map(|s| ("cam0".to_string(), s));
    ReplayScript::new(pairs).expect("unique pairs")
}

pub fn benchmark_holdout() -> ReplayScript {
    ReplayScript::new(BENCHMARK_HOLDOUT.iter().map(|&s| ("cam0".to_string(), s))).expect("unique pairs")
}
