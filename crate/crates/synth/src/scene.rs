use rayon::prelude::*;
use rfnode_core::{ray_for_pixel, DepthImage, FrameSample, PinholeCamera, Pose, Ray, RgbImage, Vector3};
use serde::{Deserialize, Serialize};

/// View-dependent emission `rgb · max(0, v·r)^exponent`, where `v` points
/// from the surface toward the viewer and `r` is a fixed unit direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Specular {
    pub rgb: [f64; 3],
    pub direction: [f64; 3],
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

fn default_exponent() -> f64 {
    8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Material {
    pub diffuse: [f64; 3],
    #[serde(default)]
    pub emissive: [f64; 3],
    #[serde(default)]
    pub specular: Option<Specular>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Sphere { center: [f64; 3], radius: f64 },
    Box { min: [f64; 3], max: [f64; 3] },
    Plane { point: [f64; 3], normal: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Primitive {
    pub shape: Shape,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    pub background: [f64; 3],
    /// Direction toward the light.
    pub light: [f64; 3],
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), String> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.background) || !finite(&self.light) || v3(self.light).norm() < 1e-12 {
            return Err("background and light must be finite, light nonzero".into());
        }
        for (i, p) in self.primitives.iter().enumerate() {
            let m = &p.material;
            if !finite(&m.diffuse) || !finite(&m.emissive) {
                return Err(format!("primitive {i}: non-finite material"));
            }
            if let Some(s) = &m.specular {
                if !finite(&s.rgb) || !finite(&s.direction) || v3(s.direction).norm() < 1e-12 || !s.exponent.is_finite() {
                    return Err(format!("primitive {i}: bad specular term"));
                }
            }
            let ok = match p.shape {
                Shape::Sphere { center, radius } => finite(&center) && radius.is_finite() && radius > 0.0,
                Shape::Box { min, max } => finite(&min) && finite(&max) && (0..3).all(|a| min[a] <= max[a]),
                Shape::Plane { point, normal } => finite(&point) && finite(&normal) && v3(normal).norm() > 1e-12,
            };
            if !ok {
                return Err(format!("primitive {i}: invalid shape parameters"));
            }
        }
        Ok(())
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::new(a[0], a[1], a[2])
}

/// Nearest intersection along a ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    /// Ray parameter (range along the unit direction).
    pub t: f64,
    pub point: Vector3<f64>,
    /// Unit normal facing the ray origin.
    pub normal: Vector3<f64>,
    pub rgb: [f64; 3],
    pub primitive: usize,
}

fn intersect(shape: &Shape, ray: &Ray) -> Option<(f64, Vector3<f64>)> {
    const EPS: f64 = 1e-9;
    match *shape {
        Shape::Sphere { center, radius } => {
            let oc = ray.origin - v3(center);
            let b = oc.dot(&ray.direction);
            let c = oc.norm_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let s = disc.sqrt();
            let t = if -b - s > EPS { -b - s } else if -b + s > EPS { -b + s } else { return None };
            let n = (ray.at(t) - v3(center)) / radius;
            Some((t, n))
        }
        Shape::Box { min, max } => {
            let mut t0 = f64::NEG_INFINITY;
            let mut t1 = f64::INFINITY;
            let mut axis0 = 0;
            let mut axis1 = 0;
            for a in 0..3 {
                let d = ray.direction[a];
                let o = ray.origin[a];
                if d.abs() < 1e-300 {
                    if o < min[a] || o > max[a] {
                        return None;
                    }
                    continue;
                }
                let (mut ta, mut tb) = ((min[a] - o) / d, (max[a] - o) / d);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                if ta > t0 {
                    t0 = ta;
                    axis0 = a;
                }
                if tb < t1 {
                    t1 = tb;
                    axis1 = a;
                }
            }
            if t0 > t1 {
                return None;
            }
            let (t, a) = if t0 > EPS { (t0, axis0) } else if t1 > EPS { (t1, axis1) } else { return None };
            let mut n = Vector3::zeros();
            n[a] = -ray.direction[a].signum();
            Some((t, n))
        }
        Shape::Plane { point, normal } => {
            let n = v3(normal).normalize();
            let denom = n.dot(&ray.direction);
            if denom.abs() < 1e-12 {
                return None;
            }
            let t = (v3(point) - ray.origin).dot(&n) / denom;
            (t > EPS).then_some((t, n))
        }
    }
}

fn shade(scene: &SceneSpec, m: &Material, normal: &Vector3<f64>, to_viewer: &Vector3<f64>) -> [f64; 3] {
    let l = v3(scene.light).normalize();
    let lambert = normal.dot(&l).max(0.0);
    let spec = m.specular.map(|s| {
        let k = to_viewer.dot(&v3(s.direction).normalize()).max(0.0).powf(s.exponent);
        s.rgb.map(|c| c * k)
    });
    [0, 1, 2].map(|c| {
        let v = m.diffuse[c] * lambert + m.emissive[c] + spec.map_or(0.0, |s| s[c]);
        v.clamp(0.0, 1.0)
    })
}

pub fn trace_ray(scene: &SceneSpec, ray: &Ray) -> Option<Hit> {
    let mut best: Option<(f64, Vector3<f64>, usize)> = None;
    for (i, p) in scene.primitives.iter().enumerate() {
        if let Some((t, n)) = intersect(&p.shape, ray) {
            if best.map_or(true, |b| t < b.0) {
                best = Some((t, n, i));
            }
        }
    }
    let (t, n, i) = best?;
    let normal = if n.dot(&ray.direction) > 0.0 { -n } else { n };
    let rgb = shade(scene, &scene.primitives[i].material, &normal, &-ray.direction);
    Some(Hit { t, point: ray.at(t), normal, rgb, primitive: i })
}

/// Exact RGB and camera-frame z depth (0 where nothing is hit).
pub fn trace_frame(scene: &SceneSpec, camera: &PinholeCamera, pose: &Pose) -> (RgbImage, DepthImage) {
    let (w, h) = (camera.width() as usize, camera.height() as usize);
    let axis = pose.rotate(&Vector3::z());
    let bg = scene.background.map(|c| c.clamp(0.0, 1.0) as f32);
    let rows: Vec<Vec<([f32; 3], f32)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let ray = ray_for_pixel(camera, pose, x as f64, y as f64).expect("pixel in bounds");
                    match trace_ray(scene, &ray) {
                        Some(hit) => (hit.rgb.map(|c| c as f32), (hit.t * ray.direction.dot(&axis)) as f32),
                        None => (bg, 0.0),
                    }
                })
                .collect()
        })
        .collect();
    let px: Vec<_> = rows.into_iter().flatten().collect();
    (
        RgbImage::from_vec(w, h, px.iter().map(|p| p.0).collect()).expect("sized"),
        DepthImage::from_vec(w, h, px.iter().map(|p| p.1).collect()).expect("sized"),
    )
}

/// Convenience wrapper producing a validated [`FrameSample`].
pub fn trace_sample(
    scene: &SceneSpec,
    camera_id: &str,
    seq: u64,
    timestamp: f64,
    camera: &PinholeCamera,
    pose: &Pose,
) -> FrameSample {
    let (rgb, depth) = trace_frame(scene, camera, pose);
    FrameSample::new(camera_id, seq, timestamp, rgb, Some(depth), *pose, *camera).expect("traced dims match camera")
}
