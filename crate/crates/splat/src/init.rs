use std::collections::HashMap;

use nalgebra::Vector3;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rfnode_core::sh::{dc_from_color, logit, SH_COEFFS};
use rfnode_ingest::KeyframeEntry;

use crate::error::SplatError;
use crate::raster::{render_pixels, Binned};
use crate::set::SplatSet;
use crate::train::SplatConfig;

struct Seed {
    point: Vector3<f64>,
    rgb: [f32; 3],
    /// Metric width of one pixel at the sample depth.
    footprint: f64,
}

fn seed_at(entry: &KeyframeEntry, x: usize, y: usize, z: f64) -> Seed {
    let dir = entry.camera.pixel_direction(x as f64, y as f64);
    Seed {
        point: entry.pose.transform_point(&(dir * z)),
        rgb: entry.rgb.get(x, y),
        footprint: z / entry.camera.fx(),
    }
}

/// Candidate pixels `(entry, x, y)` passing `keep`, in entry and row-major
/// order.
fn candidates(entries: &[(usize, &KeyframeEntry)], mut keep: impl FnMut(usize, usize, usize, f32) -> bool) -> Vec<(usize, u32, u32)> {
    let mut out = Vec::new();
    for &(slot, e) in entries {
        let Some(depth) = &e.depth else { continue };
        let (w, h) = depth.dims();
        for y in 0..h {
            for x in 0..w {
                let z = depth.get(x, y);
                if z > 0.0 && z.is_finite() && keep(slot, x, y, z) {
                    out.push((slot, x as u32, y as u32));
                }
            }
        }
    }
    out
}

fn pick(count: usize, max_count: usize, seed: u64) -> Vec<usize> {
    if count <= max_count {
        return (0..count).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, count, max_count).into_vec();
    idx.sort_unstable();
    idx
}

fn build(seeds: &[Seed]) -> SplatSet {
    let points: Vec<Vector3<f64>> = seeds.iter().map(|s| s.point).collect();
    let knn = nearest3_median(&points);
    let mut out = SplatSet::default();
    for (s, d) in seeds.iter().zip(knn) {
        let scale = match d {
            Some(d) => (0.5 * d).max(0.25 * s.footprint),
            None => s.footprint,
        };
        let mut color = [0.0; SH_COEFFS];
        for c in 0..3 {
            color[c * 4] = dc_from_color(s.rgb[c] as f64);
        }
        out.push([s.point.x, s.point.y, s.point.z], [scale.ln(); 3], [1.0, 0.0, 0.0, 0.0], logit(0.5), color);
    }
    out
}

/// Back-projects up to `max_count` valid depth pixels, drawn uniformly
/// without replacement across `entries`, into isotropic Gaussians.
pub fn init_from_rgbd(entries: &[KeyframeEntry], max_count: usize, seed: u64) -> Result<SplatSet, SplatError> {
    let indexed: Vec<(usize, &KeyframeEntry)> = entries.iter().enumerate().collect();
    let cands = candidates(&indexed, |_, _, _, _| true);
    if cands.is_empty() || max_count == 0 {
        return Err(SplatError::NoDepth);
    }
    let seeds: Vec<Seed> = pick(cands.len(), max_count, seed)
        .into_iter()
        .map(|k| {
            let (e, x, y) = cands[k];
            let entry = &entries[e];
            let z = entry.depth.as_ref().expect("candidate has depth").get(x as usize, y as usize);
            seed_at(entry, x as usize, y as usize, z as f64)
        })
        .collect();
    Ok(build(&seeds))
}

/// New Gaussians for the pixels of `entry` that the current set leaves
/// mostly transparent (rendered opacity below 0.5). Returns an empty set when
/// the view is already covered.
pub fn extend_from_entry(
    splats: &SplatSet,
    entry: &KeyframeEntry,
    max_count: usize,
    seed: u64,
    config: &SplatConfig,
) -> Result<SplatSet, SplatError> {
    config.validate()?;
    let Some(depth) = &entry.depth else { return Ok(SplatSet::default()) };
    let binned = Binned::new(splats, &entry.camera, &entry.pose, None, config);
    let pixels = render_pixels(&binned, config);
    let w = binned.width;
    let cands = candidates(&[(0, entry)], |_, x, y, _| pixels[y * w + x].opacity < 0.5);
    let seeds: Vec<Seed> = pick(cands.len(), max_count, seed)
        .into_iter()
        .map(|k| {
            let (_, x, y) = cands[k];
            seed_at(entry, x as usize, y as usize, depth.get(x as usize, y as usize) as f64)
        })
        .collect();
    Ok(build(&seeds))
}

/// Median of the distances to the 3 nearest other points (the middle one),
/// or `None` without any neighbour. Uniform hash grid, searched in growing
/// Chebyshev shells.
fn nearest3_median(points: &[Vector3<f64>]) -> Vec<Option<f64>> {
    const K: usize = 3;
    let n = points.len();
    if n < 2 {
        return vec![None; n];
    }
    let mut lo = points[0];
    let mut hi = points[0];
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let ext = hi - lo;
    let volume = ext.iter().map(|e| e.max(1e-6)).product::<f64>();
    let cell = (volume / n as f64).cbrt().max(ext.max() / 64.0).max(1e-9);
    let key = |p: &Vector3<f64>| {
        let g = (p - lo) / cell;
        (g.x.floor() as i64, g.y.floor() as i64, g.z.floor() as i64)
    };
    let mut grid: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i as u32);
    }
    let max_ring = (ext.max() / cell).ceil() as i64 + 1;

    use rayon::prelude::*;
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy, cz) = key(p);
            // ascending squared distances
            let mut best: Vec<f64> = Vec::with_capacity(K + 1);
            for ring in 0..=max_ring {
                for dz in -ring..=ring {
                    for dy in -ring..=ring {
                        let face = dz.abs() == ring || dy.abs() == ring;
                        let step = if face || ring == 0 { 1 } else { 2 * ring as usize };
                        for dx in (-ring..=ring).step_by(step) {
                            let Some(ids) = grid.get(&(cx + dx, cy + dy, cz + dz)) else { continue };
                            for &j in ids {
                                if j as usize == i {
                                    continue;
                                }
                                let d2 = (points[j as usize] - p).norm_squared();
                                if best.len() < K || d2 < best[K - 1] {
                                    let at = best.partition_point(|&b| b <= d2);
                                    best.insert(at, d2);
                                    best.truncate(K);
                                }
                            }
                        }
                    }
                }
                // every unvisited point is farther than `ring * cell`
                let reach = ring as f64 * cell;
                if best.len() == K && best[K - 1] <= reach * reach {
                    break;
                }
            }
            match best.len() {
                0 => None,
                len => Some(best[(len - 1).min(1)].sqrt()),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(points: &[Vector3<f64>]) -> Vec<Option<f64>> {
        points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut d: Vec<f64> =
                    points.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, q)| (q - p).norm()).collect();
                d.sort_by(f64::total_cmp);
                d.truncate(3);
                if d.is_empty() {
                    None
                } else {
                    Some(d[(d.len() - 1).min(1)])
                }
            })
            .collect()
    }

    #[test]
    fn grid_knn_matches_brute_force() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts: Vec<Vector3<f64>> =
            (0..400).map(|_| Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0)).collect();
        pts.extend((0..100).map(|_| Vector3::new(rng.gen_range(-1.0..1.0), 0.5, rng.gen_range(0.0..0.3))));
        pts.push(Vector3::new(5.0, 5.0, 5.0));
        pts.push(pts[0]);
        assert_eq!(nearest3_median(&pts), brute(&pts));
        assert_eq!(nearest3_median(&pts[..2]), brute(&pts[..2]));
        assert_eq!(nearest3_median(&pts[..1]), vec![None]);
    }
}
