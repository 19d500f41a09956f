// Brute-force reference splat renderer: every Gaussian tested at every
// pixel, one global depth sort, no tiling or extent culling.

use rfnode_core::sh::sh_color;
use rfnode_core::{Aabb, PinholeCamera, Pose};
use rfnode_splat::{project_gaussian, SplatConfig, SplatSet};

pub struct OraclePixel {
    pub rgb: [f64; 3],
    pub depth: f64,
    pub weight_sum: f64,
    pub transmittance: f64,
}

pub fn oracle_render(
    splats: &SplatSet,
    camera: &PinholeCamera,
    pose: &Pose,
    crop: Option<&Aabb>,
    cfg: &SplatConfig,
) -> Vec<OraclePixel> {
    struct G {
        index: usize,
        u: f64,
        v: f64,
        inv: [f64; 3],
        depth: f64,
        opacity: f64,
        color: [f64; 3],
    }
    let mut gs = Vec::new();
    for i in 0..splats.len() {
        let mean = splats.mean(i);
        if let Some(c) = crop {
            if !c.contains(&mean) {
                continue;
            }
        }
        let Some(p) = project_gaussian(splats, i, camera, pose, cfg) else { continue };
        if p.depth > cfg.far {
            continue;
        }
        let (a, b, d) = (p.cov2d[(0, 0)], p.cov2d[(0, 1)], p.cov2d[(1, 1)]);
        let det = a * d - b * b;
        if det < 1e-12 {
            continue;
        }
        let dir = (mean - pose.translation()).normalize();
        gs.push(G {
            index: i,
            u: p.mean2d[0],
            v: p.mean2d[1],
            inv: [d / det, -b / det, a / det],
            depth: p.depth,
            opacity: splats.opacity(i),
            color: sh_color(splats.color(i), [dir.x, dir.y, dir.z]),
        });
    }
    gs.sort_by(|x, y| x.depth.partial_cmp(&y.depth).unwrap().then(x.index.cmp(&y.index)));

    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut rgb = [0.0; 3];
            let mut depth = 0.0;
            let mut wsum = 0.0;
            for g in &gs {
                let (dx, dy) = (px - g.u, py - g.v);
                let q = g.inv[0] * dx * dx + 2.0 * g.inv[1] * dx * dy + g.inv[2] * dy * dy;
                let alpha = (g.opacity * (-0.5 * q).exp()).min(0.999);
                if alpha < cfg.alpha_min {
                    continue;
                }
                let wt = t * alpha;
                for c in 0..3 {
                    rgb[c] += wt * g.color[c];
                }
                depth += wt * g.depth;
                wsum += wt;
                t *= 1.0 - alpha;
                if t < cfg.transmittance_floor {
                    break;
                }
            }
            for c in 0..3 {
                rgb[c] += t * cfg.background[c];
            }
            out.push(OraclePixel { rgb, depth: depth + t * cfg.far, weight_sum: wsum, transmittance: t });
        }
    }
    out
}
