//! Regenerates `corpus/<target>/` from the real encoders:
//! `cargo run --example seeds`.

#[allow(dead_code)]
#[path = "../../crates/service/tests/support/gen.rs"]
mod gen;

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rfnode_core::{Aabb, DepthImage, RgbImage};
use rfnode_core::sh::SH_COEFFS;
use rfnode_ingest::session::{encode_depth, encode_rgb, MANIFEST_FILE};
use rfnode_splat::SplatSet;
use rfnode_synth::{benchmark_script, benchmark_spec, generate_session, CameraSpec, GenerateSpec, TrajectorySpec};
use rfnode_tsdf::TriangleMesh;
use rfnode_voxel::VoxelGrid;

fn write(target: &str, name: &str, bytes: impl AsRef<[u8]>) {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus").join(target);
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join(name), bytes).unwrap();
}

fn small_spec() -> GenerateSpec {
    let mut spec = benchmark_spec();
    if let TrajectorySpec::Orbit { n_frames, .. } = &mut spec.trajectory {
        *n_frames = 3;
    }
    spec.camera = CameraSpec { fx: 14.0, fy: 14.0, cx: 8.0, cy: 6.0, width: 16, height: 12 };
    spec
}

fn main() {
    let mut grid = VoxelGrid::new([2, 2, 3], Aabb::new([-1.0; 3], [1.0; 3]).unwrap(), -1.5).unwrap();
    grid.sh_mut().iter_mut().enumerate().for_each(|(i, c)| *c = i as f64 * 0.01);
    let voxel = rfnode_voxel::encode_checkpoint(&grid);
    write("voxel_checkpoint", "grid-2x2x3", &voxel);

    let mut set = SplatSet::default();
    set.push([0.0, 0.0, 2.0], [-2.0; 3], [1.0, 0.0, 0.0, 0.0], 0.5, [0.1; SH_COEFFS]);
    set.push([0.3, -0.2, 3.0], [-1.5, -2.5, -2.0], [0.7, 0.1, 0.7, 0.1], -1.0, [-0.2; SH_COEFFS]);
    let splat = rfnode_splat::encode_checkpoint(&set);
    write("splat_checkpoint", "two-gaussians", &splat);

    let mesh = TriangleMesh {
        vertices: vec![[0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 1.0, 1.5]],
        colors: vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.5, 0.5]],
        triangles: vec![[0, 1, 2], [1, 3, 2]],
    };
    let mut ply = Vec::new();
    rfnode_tsdf::export_ply(&mesh, &mut ply).unwrap();
    write("mesh_ply", "quad", &ply);

    write("model_checkpoint", "voxel", &voxel);
    write("model_checkpoint", "splat", &splat);
    write("model_checkpoint", "mesh", &ply);

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for &t in &gen::TYPES {
        for k in 0..2 {
            let m = gen::message(&mut rng, t);
            write("protocol_stream", &format!("type{t}-{k}"), m.encode());
            write("protocol_channel", &format!("type{t}-{k}"), m.encode_channel());
        }
    }

    write(
        "http_head",
        "upgrade",
        "GET /ws HTTP/1.1\r\nHost: 127.0.0.1:7450\r\nUpgrade: websocket\r\nConnection: Upgrade\r\nSec-WebSocket-Key: dGhlIHNhbXBsZSBub25jZQ==\r\nSec-WebSocket-Version: 13\r\n\r\n",
    );
    write("http_head", "asset", "GET /index.html?v=1 HTTP/1.1\r\nHost: localhost\r\n\r\n");

    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec();
    generate_session(&spec, dir.path()).unwrap();
    write("manifest", "small-session", fs::read(dir.path().join(MANIFEST_FILE)).unwrap());

    write("replay_script", "benchmark", benchmark_script().to_string());
    write("replay_script", "two-cameras", "cam0 0\ncam0 2\ncam1 1\n");

    write("config", "defaults", rfnode_cli::Config::default().to_toml());
    write("config", "partial", "seed = 9\n[voxel]\ncells = 32\n[eval]\nsweep_fractions = [0.5, 1.0]\n");

    write("generate_spec", "benchmark", serde_json::to_string_pretty(&benchmark_spec()).unwrap());
    write("generate_spec", "small", serde_json::to_string(&spec).unwrap());

    let rgb = RgbImage::from_fn(5, 4, |x, y| [x as f32 / 5.0, y as f32 / 4.0, 0.5]);
    write("png_rgb", "gradient", encode_rgb(&rgb).unwrap());
    let depth = DepthImage::from_fn(5, 4, |x, y| 1.0 + 0.1 * (x + y) as f32);
    write("png_depth", "ramp", encode_depth(&depth, 0.001).unwrap());

    write("cli_args", "identity", "1,0,0,0,0,0,0\n525,525,320,240,640,480\n-1,-1,-1,1,1,1\n");
    write("cli_args", "rotated", "0.7071,0,0.7071,0,0.5,-0.2,3\n40,38,24,19.5,48,40\n0,0,0,2,2,2\n");
}
