use rfnode_core::sh::{sh_color, softplus, SH_COEFFS};
use rfnode_core::{Aabb, Vector3};

use crate::error::VoxelError;

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: [usize; 3],
    bounds: Aabb,
    density: Vec<f64>,
    sh: Vec<f64>,
}

/// Trilinear stencil: lower corner and fractional offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Stencil {
    pub corner: [u32; 3],
    pub frac: [f64; 3],
}

impl VoxelGrid {
    /// Uniform grid with every raw density set to `density_raw` and every
    /// SH coefficient zero (gray 0.5).
    pub fn new(resolution: [usize; 3], bounds: Aabb, density_raw: f64) -> Result<Self, VoxelError> {
        let n = Self::checked_cells(resolution)?;
        Self::check_bounds(&bounds)?;
        Ok(Self {
            resolution,
            bounds,
            density: vec![density_raw; n],
            sh: vec![0.0; n * SH_COEFFS],
        })
    }

    pub fn from_parts(resolution: [usize; 3], bounds: Aabb, density: Vec<f64>, sh: Vec<f64>) -> Result<Self, VoxelError> {
        let n = Self::checked_cells(resolution)?;
        Self::check_bounds(&bounds)?;
        if density.len() != n || sh.len() != n * SH_COEFFS {
            return Err(VoxelError::Config(format!(
                "parameter lengths {} / {} do not match {n} cells",
                density.len(),
                sh.len()
            )));
        }
        Ok(Self { resolution, bounds, density, sh })
    }

    fn check_bounds(bounds: &Aabb) -> Result<(), VoxelError> {
        if bounds.extent().iter().any(|&e| !(e > 0.0)) {
            return Err(VoxelError::Config("grid bounds must have positive extent".into()));
        }
        Ok(())
    }

    pub(crate) fn checked_cells(resolution: [usize; 3]) -> Result<usize, VoxelError> {
        if resolution.iter().any(|&r| r < 2) {
            return Err(VoxelError::InvalidResolution(resolution));
        }
        resolution
            .iter()
            .try_fold(1usize, |a, &r| a.checked_mul(r))
            .ok_or(VoxelError::InvalidResolution(resolution))
    }

    pub fn resolution(&self) -> [usize; 3] {
        self.resolution
    }

    pub fn bounds(&self) -> &Aabb {
        &self.bounds
    }

    pub fn cell_count(&self) -> usize {
        self.density.len()
    }

    /// Cell `(x, y, z)` lives at `x + Nx·(y + Ny·z)`.
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.resolution[0] * (y + self.resolution[1] * z)
    }

    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        let e = self.bounds.extent();
        let c = [x, y, z];
        Vector3::from_fn(|a, _| self.bounds.min[a] + (c[a] as f64 + 0.5) * e[a] / self.resolution[a] as f64)
    }

    pub fn cell_size(&self) -> Vector3<f64> {
        let e = self.bounds.extent();
        Vector3::from_fn(|a, _| e[a] / self.resolution[a] as f64)
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn density_mut(&mut self) -> &mut [f64] {
        &mut self.density
    }

    /// Per cell 12 coefficients, channel-major.
    pub fn sh(&self) -> &[f64] {
        &self.sh
    }

    pub fn sh_mut(&mut self) -> &mut [f64] {
        &mut self.sh
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.density, &mut self.sh)
    }

    pub fn is_finite(&self) -> bool {
        self.density.iter().chain(&self.sh).all(|v| v.is_finite())
    }

    /// Stencil for a point assumed inside the bounds; grid coordinates are
    /// clamped to the outermost cell centers.
    pub(crate) fn stencil(&self, p: &Vector3<f64>) -> Stencil {
        let e = self.bounds.extent();
        let mut corner = [0u32; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.resolution[a];
            let g = ((p[a] - self.bounds.min[a]) / e[a] * n as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let i = (g.floor() as usize).min(n - 2);
            corner[a] = i as u32;
            frac[a] = g - i as f64;
        }
        Stencil { corner, frac }
    }

    /// Raw density and SH coefficients interpolated at `s`.
    pub(crate) fn interpolate(&self, s: &Stencil) -> (f64, [f64; SH_COEFFS]) {
        let mut raw = 0.0;
        let mut sh = [0.0; SH_COEFFS];
        for (idx, w) in self.corners(s) {
            if w == 0.0 {
                continue;
            }
            raw += w * self.density[idx];
            let k = &self.sh[idx * SH_COEFFS..(idx + 1) * SH_COEFFS];
            for (o, v) in sh.iter_mut().zip(k) {
                *o += w * v;
            }
        }
        (raw, sh)
    }

    /// The eight `(cell index, weight)` pairs of a stencil, in `dz, dy, dx` order.
    pub(crate) fn corners(&self, s: &Stencil) -> [(usize, f64); 8] {
        let [nx, ny, _] = self.resolution;
        let [x, y, z] = s.corner.map(|c| c as usize);
        let [fx, fy, fz] = s.frac;
        let mut out = [(0usize, 0.0f64); 8];
        let mut k = 0;
        for dz in 0..2 {
            let wz = if dz == 0 { 1.0 - fz } else { fz };
            for dy in 0..2 {
                let wy = if dy == 0 { 1.0 - fy } else { fy };
                for dx in 0..2 {
                    let wx = if dx == 0 { 1.0 - fx } else { fx };
                    out[k] = ((x + dx) + nx * ((y + dy) + ny * (z + dz)), wx * wy * wz);
                    k += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    /// Activated density, 1/m.
    pub sigma: f64,
    pub rgb: [f64; 3],
}

/// Density and color at a world point; outside the bounds density is 0 and
/// color is `background`.
pub fn sample_field(grid: &VoxelGrid, point: &Vector3<f64>, view_dir: &Vector3<f64>, background: [f64; 3]) -> FieldSample {
    if !grid.bounds.contains(point) {
        return FieldSample { sigma: 0.0, rgb: background };
    }
    let (raw, sh) = grid.interpolate(&grid.stencil(point));
    FieldSample {
        sigma: softplus(raw),
        rgb: sh_color(&sh, [view_dir.x, view_dir.y, view_dir.z]),
    }
}
