//! `voxel.ckpt`: `"VOXF"`, version u16, resolution 3 × u32, bounds 6 × f64,
//! then raw density and SH coefficients as f32, cells x-fastest. All
//! little-endian.

use rfnode_core::sh::SH_COEFFS;
use rfnode_core::Aabb;

use crate::error::VoxelError;
use crate::grid::VoxelGrid;

pub const CKPT_MAGIC: &[u8; 4] = b"VOXF";
pub const CKPT_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 12 + 48;
/// Refuse to allocate grids beyond this many cells when decoding.
const MAX_CELLS: usize = 1 << 26;

pub fn encode_checkpoint(grid: &VoxelGrid) -> Vec<u8> {
    let n = grid.cell_count();
    let mut out = Vec::with_capacity(HEADER_LEN + n * 4 * (1 + SH_COEFFS));
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    for r in grid.resolution() {
        out.extend_from_slice(&(r as u32).to_le_bytes());
    }
    for b in grid.bounds().to_array() {
        out.extend_from_slice(&b.to_le_bytes());
    }
    for v in grid.density().iter().chain(grid.sh()) {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<VoxelGrid, VoxelError> {
    let bad = |s: &str| VoxelError::Checkpoint(s.into());
    if bytes.len() < HEADER_LEN {
        return Err(bad("truncated header"));
    }
    if &bytes[..4] != CKPT_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CKPT_VERSION {
        return Err(VoxelError::Checkpoint(format!("unsupported version {version}")));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let resolution = [u32_at(6), u32_at(10), u32_at(14)];
    let n = VoxelGrid::checked_cells(resolution)?;
    if n > MAX_CELLS {
        return Err(bad("grid too large"));
    }
    let b: [f64; 6] = std::array::from_fn(|i| f64_at(18 + 8 * i));
    if b.iter().any(|v| !v.is_finite()) || (0..3).any(|a| b[a] >= b[a + 3]) {
        return Err(bad("degenerate bounds"));
    }
    let bounds = Aabb::new([b[0], b[1], b[2]], [b[3], b[4], b[5]])?;
    let expected = HEADER_LEN + n * 4 * (1 + SH_COEFFS);
    if bytes.len() != expected {
        return Err(VoxelError::Checkpoint(format!("expected {expected} bytes, got {}", bytes.len())));
    }
    let mut floats = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64);
    let density: Vec<f64> = floats.by_ref().take(n).collect();
    let sh: Vec<f64> = floats.collect();
    if density.iter().chain(&sh).any(|v| !v.is_finite()) {
        return Err(bad("non-finite parameter"));
    }
    VoxelGrid::from_parts(resolution, bounds, density, sh)
}
