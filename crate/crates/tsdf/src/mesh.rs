use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::TsdfError;
use crate::grid::{block_and_local, TsdfGrid, Voxel, BLOCK_SIDE};
use crate::tables::{CUBE_CORNER_OFFSETS, EDGE_TABLE, EDGE_VERTEX_PAIRS, TRI_TABLE};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub colors: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn validate(&self) -> Result<(), TsdfError> {
        if self.colors.len() != self.vertices.len() {
            return Err(TsdfError::Mesh(format!("{} colors for {} vertices", self.colors.len(), self.vertices.len())));
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(TsdfError::Mesh("non-finite vertex".into()));
        }
        let n = self.vertices.len() as u32;
        if self.triangles.iter().flatten().any(|&i| i >= n) {
            return Err(TsdfError::Mesh("triangle index out of range".into()));
        }
        Ok(())
    }

    /// Unit normal of triangle `t` (zero for degenerate triangles).
    pub fn face_normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|i| nalgebra::Vector3::from(self.vertices[i as usize]));
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if len > 0.0 {
            (n / len).into()
        } else {
            [0.0; 3]
        }
    }
}

/// One crossed cube edge: the lower corner's global index and the axis.
type EdgeKey = ([i64; 3], u8);

struct CubeTris {
    /// (edge key, position, color) per triangle corner.
    corners: Vec<(EdgeKey, [f64; 3], [f32; 3])>,
}

/// Marching cubes over every cube whose 8 corners are observed, on the
/// `tsdf = 0` level set. Vertices on shared edges are merged.
pub fn extract_mesh(grid: &TsdfGrid) -> TriangleMesh {
    let keys = grid.block_keys();
    let side = BLOCK_SIDE as i64;
    let s = grid.voxel_size();
    let per_block: Vec<CubeTris> = keys
        .par_iter()
        .map(|key| {
            let block = grid.block(key).expect("listed key");
            let mut corners = Vec::new();
            let lookup = |g: [i64; 3]| -> Option<Voxel> {
                let (bk, li) = block_and_local(g);
                let v = if bk == *key { block.voxels[li] } else { *grid.voxel(g)? };
                (v.weight > 0.0).then_some(v)
            };
            for z in 0..side {
                for y in 0..side {
                    for x in 0..side {
                        let base = [key[0] * side + x, key[1] * side + y, key[2] * side + z];
                        let mut vals = [Voxel::default(); 8];
                        let mut complete = true;
                        for (k, &(dx, dy, dz)) in CUBE_CORNER_OFFSETS.iter().enumerate() {
                            match lookup([base[0] + dx as i64, base[1] + dy as i64, base[2] + dz as i64]) {
                                Some(v) => vals[k] = v,
                                None => {
                                    complete = false;
                                    break;
                                }
                            }
                        }
                        if !complete {
                            continue;
                        }
                        let mut case = 0usize;
                        for (k, v) in vals.iter().enumerate() {
                            if v.tsdf < 0.0 {
                                case |= 1 << k;
                            }
                        }
                        if EDGE_TABLE[case] == 0 {
                            continue;
                        }
                        let mut edge_vertex: [Option<(EdgeKey, [f64; 3], [f32; 3])>; 12] = [None; 12];
                        for (e, &(a, b)) in EDGE_VERTEX_PAIRS.iter().enumerate() {
                            if EDGE_TABLE[case] & (1 << e) == 0 {
                                continue;
                            }
                            let (va, vb) = (vals[a], vals[b]);
                            let t = (va.tsdf / (va.tsdf - vb.tsdf)) as f64;
                            let oa = CUBE_CORNER_OFFSETS[a];
                            let ob = CUBE_CORNER_OFFSETS[b];
                            let ca = [base[0] + oa.0 as i64, base[1] + oa.1 as i64, base[2] + oa.2 as i64];
                            let cb = [base[0] + ob.0 as i64, base[1] + ob.1 as i64, base[2] + ob.2 as i64];
                            let axis = (0..3).find(|&i| ca[i] != cb[i]).expect("edge spans one axis") as u8;
                            let lower = if ca[axis as usize] < cb[axis as usize] { ca } else { cb };
                            let pos = [0, 1, 2].map(|i| ((ca[i] as f64 + 0.5) + t * (cb[i] - ca[i]) as f64) * s);
                            let color = [0, 1, 2].map(|c| va.rgb[c] + t as f32 * (vb.rgb[c] - va.rgb[c]));
                            edge_vertex[e] = Some(((lower, axis), pos, color));
                        }
                        for tri in TRI_TABLE[case].chunks_exact(3) {
                            if tri[0] < 0 {
                                break;
                            }
                            for &e in tri {
                                corners.push(edge_vertex[e as usize].expect("table edge is crossed"));
                            }
                        }
                    }
                }
            }
            CubeTris { corners }
        })
        .collect();

    let mut mesh = TriangleMesh::default();
    let mut index: HashMap<EdgeKey, u32> = HashMap::new();
    for cube in per_block {
        for tri in cube.corners.chunks_exact(3) {
            let ids = [0, 1, 2].map(|k| {
                let (key, pos, color) = tri[k];
                *index.entry(key).or_insert_with(|| {
                    mesh.vertices.push(pos);
                    mesh.colors.push(color);
                    (mesh.vertices.len() - 1) as u32
                })
            });
            if ids[0] != ids[1] && ids[1] != ids[2] && ids[0] != ids[2] {
                // wound so normals face the observed (positive) side
                mesh.triangles.push([ids[0], ids[2], ids[1]]);
            }
        }
    }
    mesh
}

/// Binary little-endian PLY: float positions, 8-bit colors, int faces.
pub fn export_ply(mesh: &TriangleMesh, mut out: impl Write) -> std::io::Result<()> {
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.triangles.len()
    )?;
    for (v, c) in mesh.vertices.iter().zip(&mesh.colors) {
        for p in v {
            out.write_all(&(*p as f32).to_le_bytes())?;
        }
        out.write_all(&c.map(|x| (x.clamp(0.0, 1.0) * 255.0).round() as u8))?;
    }
    for t in &mesh.triangles {
        out.write_all(&[3u8])?;
        for i in t {
            out.write_all(&(*i as i32).to_le_bytes())?;
        }
    }
    Ok(())
}

const PLY_HEADER_LINES: [&str; 9] = [
    "property float x",
    "property float y",
    "property float z",
    "property uchar red",
    "property uchar green",
    "property uchar blue",
    "",
    "property list uchar int vertex_indices",
    "end_header",
];

/// Reads the exact layout written by [`export_ply`]; `comment` lines are
/// skipped. Colors come back quantized to 8 bits and positions to f32.
pub fn import_ply(bytes: &[u8]) -> Result<TriangleMesh, TsdfError> {
    let bad = |s: &str| TsdfError::Mesh(format!("ply: {s}"));
    let mut pos = 0;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| bad("unterminated header"))?;
        let line = std::str::from_utf8(&rest[..nl]).map_err(|_| bad("header is not utf-8"))?;
        pos += nl + 1;
        if line.starts_with("comment") {
            continue;
        }
        lines.push(line.trim_end_matches('\r').to_string());
        if line == "end_header" || lines.len() > 16 {
            break;
        }
    }
    if lines.len() != 12
        || lines[0] != "ply"
        || lines[1] != "format binary_little_endian 1.0"
        || lines[11] != "end_header"
    {
        return Err(bad("unsupported header"));
    }
    let count = |line: &str, element: &str| -> Result<usize, TsdfError> {
        line.strip_prefix(element)
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| bad("bad element line"))
    };
    let n_vertices = count(&lines[2], "element vertex ")?;
    let n_faces = count(&lines[9], "element face ")?;
    for (i, want) in PLY_HEADER_LINES.iter().enumerate() {
        let line = &lines[3 + i];
        if i != 6 && line != want {
            return Err(bad("unsupported property layout"));
        }
    }
    let body = &bytes[pos..];
    let need = n_vertices
        .checked_mul(15)
        .and_then(|v| n_faces.checked_mul(13).and_then(|f| v.checked_add(f)))
        .ok_or_else(|| bad("element counts overflow"))?;
    if body.len() != need {
        return Err(bad("body length does not match element counts"));
    }
    let f32_at = |o: usize| f32::from_le_bytes(body[o..o + 4].try_into().expect("4 bytes"));
    let mut mesh = TriangleMesh::default();
    mesh.vertices.reserve(n_vertices);
    mesh.colors.reserve(n_vertices);
    for v in 0..n_vertices {
        let o = v * 15;
        mesh.vertices.push([f32_at(o) as f64, f32_at(o + 4) as f64, f32_at(o + 8) as f64]);
        mesh.colors.push([0, 1, 2].map(|k| body[o + 12 + k] as f32 / 255.0));
    }
    let base = n_vertices * 15;
    mesh.triangles.reserve(n_faces);
    for f in 0..n_faces {
        let o = base + f * 13;
        if body[o] != 3 {
            return Err(bad("only triangles are supported"));
        }
        let idx = [1, 5, 9].map(|k| i32::from_le_bytes(body[o + k..o + k + 4].try_into().expect("4 bytes")));
        if idx.iter().any(|&i| i < 0) {
            return Err(bad("negative vertex index"));
        }
        mesh.triangles.push(idx.map(|i| i as u32));
    }
    mesh.validate()?;
    Ok(mesh)
}
