//! Mesh baseline: projective TSDF fusion into sparse 8³ voxel blocks,
//! marching-cubes extraction with per-vertex color, and a z-buffer
//! rasterizer that emits the same [`RenderProduct`](rfnode_core::RenderProduct)
//! as the radiance-field backends.

mod error;
mod grid;
mod mesh;
mod raster;
mod tables;

pub use error::TsdfError;
pub use grid::{IntegrateStats, TsdfConfig, TsdfGrid, Voxel, BLOCK_SIDE};
pub use mesh::{export_ply, extract_mesh, import_ply, TriangleMesh};
pub use raster::{rasterize_mesh, MeshRenderConfig, MeshRenderer};
