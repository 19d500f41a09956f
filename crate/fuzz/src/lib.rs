//! Fuzz harnesses for every byte and text decoder. Each one must return
//! without panicking; decoded values that have an encoder must survive a
//! re-encode round trip.

use rfnode_eval::ModelConfig;
use rfnode_service::protocol::Message;

fn text(data: &[u8]) -> Option<&str> {
    std::str::from_utf8(data).ok()
}

pub fn voxel_checkpoint(data: &[u8]) {
    if let Ok(grid) = rfnode_voxel::decode_checkpoint(data) {
        let bytes = rfnode_voxel::encode_checkpoint(&grid);
        let again = rfnode_voxel::decode_checkpoint(&bytes).expect("re-encoded grid decodes");
        assert_eq!(rfnode_voxel::encode_checkpoint(&again), bytes);
    }
}

pub fn splat_checkpoint(data: &[u8]) {
    if let Ok(set) = rfnode_splat::decode_checkpoint(data) {
        let bytes = rfnode_splat::encode_checkpoint(&set);
        let again = rfnode_splat::decode_checkpoint(&bytes).expect("re-encoded splats decode");
        assert_eq!(rfnode_splat::encode_checkpoint(&again), bytes);
    }
}

pub fn mesh_ply(data: &[u8]) {
    if let Ok(mesh) = rfnode_tsdf::import_ply(data) {
        let mut bytes = Vec::new();
        rfnode_tsdf::export_ply(&mesh, &mut bytes).expect("writing to memory");
        let again = rfnode_tsdf::import_ply(&bytes).expect("exported mesh imports");
        assert_eq!(again.vertices.len(), mesh.vertices.len());
    }
}

pub fn model_checkpoint(data: &[u8]) {
    let _ = rfnode_eval::load_checkpoint(data, &ModelConfig::default());
}

pub fn protocol_stream(data: &[u8]) {
    if let Ok((msg, used)) = Message::decode(data) {
        assert!(used <= data.len());
        let bytes = msg.encode();
        let (again, n) = Message::decode(&bytes).expect("re-encoded message decodes");
        assert_eq!(n, bytes.len());
        assert_eq!(again.encode(), bytes);
    }
}

pub fn protocol_channel(data: &[u8]) {
    if let Ok(msg) = Message::decode_channel(data) {
        let bytes = msg.encode_channel();
        let again = Message::decode_channel(&bytes).expect("re-encoded message decodes");
        assert_eq!(again.encode_channel(), bytes);
    }
}

pub fn http_head(data: &[u8]) {
    if let Some(t) = text(data) {
        let _ = rfnode_service::server::parse_http_head(t);
    }
}

pub fn manifest(data: &[u8]) {
    if let Some(t) = text(data) {
        if let Ok(m) = rfnode_ingest::session::Manifest::parse(t) {
            let _ = m.registry();
        }
    }
}

pub fn replay_script(data: &[u8]) {
    if let Some(t) = text(data) {
        let _ = t.parse::<rfnode_ingest::ReplayScript>();
    }
}

pub fn config(data: &[u8]) {
    if let Some(t) = text(data) {
        if let Ok(c) = rfnode_cli::Config::parse(t, &[]) {
            rfnode_cli::Config::parse(&c.to_toml(), &[]).expect("serialized config parses");
        }
    }
}

pub fn generate_spec(data: &[u8]) {
    if let Some(t) = text(data) {
        let _ = rfnode_synth::GenerateSpec::parse(t);
    }
}

pub fn png_rgb(data: &[u8]) {
    let _ = rfnode_ingest::session::decode_rgb(data);
}

pub fn png_depth(data: &[u8]) {
    let _ = rfnode_ingest::session::decode_depth(data, 0.001);
}

/// One argument per line: pose, camera, crop.
pub fn cli_args(data: &[u8]) {
    if let Some(t) = text(data) {
        let mut lines = t.lines();
        let _ = rfnode_cli::parse_pose(lines.next().unwrap_or(""));
        let _ = rfnode_cli::parse_camera(lines.next().unwrap_or(""));
        let _ = rfnode_cli::parse_crop(lines.next().unwrap_or(""));
    }
}

pub const TARGETS: &[(&str, fn(&[u8]))] = &[
    ("voxel_checkpoint", voxel_checkpoint),
    ("splat_checkpoint", splat_checkpoint),
    ("mesh_ply", mesh_ply),
    ("model_checkpoint", model_checkpoint),
    ("protocol_stream", protocol_stream),
    ("protocol_channel", protocol_channel),
    ("http_head", http_head),
    ("manifest", manifest),
    ("replay_script", replay_script),
    ("config", config),
    ("generate_spec", generate_spec),
    ("png_rgb", png_rgb),
    ("png_depth", png_depth),
    ("cli_args", cli_args),
];
