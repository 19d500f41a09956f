use rfnode_core::{DepthImage, FrameSample, PinholeCamera, Pose, RgbImage, Vector3};
use rfnode_tsdf::{extract_mesh, TsdfConfig, TsdfGrid};

fn frame(depth: DepthImage, cam: PinholeCamera, pose: Pose, seq: u64) -> FrameSample {
    let (w, h) = depth.dims();
    FrameSample {
        camera_id: "cam".into(),
        seq,
        timestamp: seq as f64,
        rgb: RgbImage::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.5]),
        depth: Some(depth),
        pose,
        camera: cam,
    }
}

fn plane_frame(z: f32) -> FrameSample {
    let cam = PinholeCamera::new(50.0, 50.0, 32.0, 24.0, 64, 48).unwrap();
    frame(DepthImage::filled(64, 48, z), cam, Pose::identity(), 0)
}

fn grid(voxel: f64) -> TsdfGrid {
    TsdfGrid::new(TsdfConfig { voxel_size: voxel, ..TsdfConfig::default() }).unwrap()
}

#[test]
fn frontal_plane_hand_values() {
    // centers sit at (k + 0.5) cm, so the surface at 2.005 m passes through one
    let mut g = grid(0.01);
    let stats = g.integrate_frame(&plane_frame(2.005)).unwrap();
    assert!(stats.voxels_updated > 0 && stats.blocks_allocated > 0);
    let tau = g.truncation();
    assert!((tau - 0.04).abs() < 1e-12);
    let at_surface = g.voxel(g.voxel_index(&Vector3::new(0.0, 0.0, 2.005))).unwrap();
    assert!(at_surface.tsdf.abs() < 1e-4);
    let half_tau = g.voxel(g.voxel_index(&Vector3::new(0.0, 0.0, 2.005 - tau / 2.0))).unwrap();
    assert!((half_tau.tsdf - 0.5).abs() < 1e-4, "{}", half_tau.tsdf);
    let behind = g.voxel(g.voxel_index(&Vector3::new(0.0, 0.0, 2.005 + tau / 2.0))).unwrap();
    assert!((behind.tsdf + 0.5).abs() < 1e-4);
    assert!(g.voxel(g.voxel_index(&Vector3::new(0.0, 0.0, 1.9))).is_none());
    assert!(g.voxel(g.voxel_index(&Vector3::new(0.0, 0.0, 2.1))).is_none());
    for (_, v) in g.observed() {
        assert!(v.tsdf.abs() <= 1.0 && v.weight == 1.0);
    }
}

#[test]
fn same_frame_twice_doubles_weight_only() {
    let f = plane_frame(2.0);
    let mut once = grid(0.01);
    once.integrate_frame(&f).unwrap();
    let mut twice = once.clone();
    twice.integrate_frame(&f).unwrap();
    let a = once.observed();
    let b = twice.observed();
    assert_eq!(a.len(), b.len());
    for ((ia, va), (ib, vb)) in a.iter().zip(&b) {
        assert_eq!(ia, ib);
        assert!((va.tsdf - vb.tsdf).abs() < 1e-6);
        assert_eq!(vb.weight, 2.0 * va.weight);
        for c in 0..3 {
            assert!((va.rgb[c] - vb.rgb[c]).abs() < 1e-6);
        }
    }
}

#[test]
fn invalid_depth_contributes_nothing() {
    let mut g = grid(0.01);
    let stats = g.integrate_frame(&plane_frame(0.0)).unwrap();
    assert_eq!(stats.voxels_updated, 0);
    assert!(g.is_empty());
    assert!(extract_mesh(&g).is_empty());

    let mut f = plane_frame(2.0);
    f.depth = None;
    assert!(g.integrate_frame(&f).is_err());
}

#[test]
fn weight_is_capped() {
    let mut g = TsdfGrid::new(TsdfConfig { voxel_size: 0.05, max_weight: 3.0, ..TsdfConfig::default() }).unwrap();
    let f = plane_frame(2.0);
    for _ in 0..5 {
        g.integrate_frame(&f).unwrap();
    }
    assert!(g.observed().iter().all(|(_, v)| v.weight == 3.0));
}

fn sphere_depth(cam: &PinholeCamera, pose: &Pose, center: Vector3<f64>, r: f64) -> DepthImage {
    let (w, h) = (cam.width() as usize, cam.height() as usize);
    DepthImage::from_fn(w, h, |x, y| {
        let d_cam = cam.pixel_direction(x as f64, y as f64);
        let dir = pose.rotate(&d_cam);
        let o = pose.translation();
        // |o + s·dir - c|² = r² with dir not normalized; z = s since d_cam.z = 1
        let oc = o - center;
        let a = dir.norm_squared();
        let b = 2.0 * oc.dot(&dir);
        let c = oc.norm_squared() - r * r;
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return 0.0;
        }
        let s = (-b - disc.sqrt()) / (2.0 * a);
        if s > 0.0 {
            s as f32
        } else {
            0.0
        }
    })
}

fn orbit(n: usize, radius: f64, center: Vector3<f64>) -> Vec<Pose> {
    (0..n)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / n as f64;
            let elev = if k % 2 == 0 { 0.6 } else { -0.6 };
            let eye = center + Vector3::new(radius * a.cos(), radius * a.sin(), elev * radius);
            Pose::look_at(eye, center, Vector3::z()).unwrap()
        })
        .collect()
}

#[test]
fn fusion_is_order_insensitive() {
    let cam = PinholeCamera::new(60.0, 60.0, 32.0, 32.0, 64, 64).unwrap();
    let c = Vector3::new(0.1, 0.0, 0.0);
    let poses = orbit(2, 3.0, c);
    let frames: Vec<FrameSample> =
        poses.iter().enumerate().map(|(i, p)| frame(sphere_depth(&cam, p, c, 1.0), cam, *p, i as u64)).collect();
    let mut ab = grid(0.03);
    ab.integrate_frame(&frames[0]).unwrap();
    ab.integrate_frame(&frames[1]).unwrap();
    let mut ba = grid(0.03);
    ba.integrate_frame(&frames[1]).unwrap();
    ba.integrate_frame(&frames[0]).unwrap();
    let (a, b) = (ab.observed(), ba.observed());
    assert_eq!(a.len(), b.len());
    for ((ia, va), (ib, vb)) in a.iter().zip(&b) {
        assert_eq!(ia, ib);
        assert!((va.tsdf - vb.tsdf).abs() < 1e-6);
        assert_eq!(va.weight, vb.weight);
    }
}

#[test]
fn plane_mesh_fits_plane() {
    let mut g = grid(0.01);
    g.integrate_frame(&plane_frame(2.0)).unwrap();
    let mesh = extract_mesh(&g);
    mesh.validate().unwrap();
    assert!(mesh.triangles.len() > 100);
    for v in &mesh.vertices {
        assert!((v[2] - 2.0).abs() <= 0.01, "vertex z {}", v[2]);
    }
    let cos5 = 5f64.to_radians().cos();
    for t in 0..mesh.triangles.len() {
        let n = mesh.face_normal(t);
        assert!(-n[2] >= cos5, "normal {n:?}");
    }
}

#[test]
fn sphere_mesh_fits_sphere() {
    let cam = PinholeCamera::new(200.0, 200.0, 120.0, 120.0, 240, 240).unwrap();
    let center = Vector3::new(0.0, 0.0, 0.0);
    let voxel = 0.02;
    let mut g = grid(voxel);
    for (i, p) in orbit(8, 3.0, center).iter().enumerate() {
        g.integrate_frame(&frame(sphere_depth(&cam, p, center, 1.0), cam, *p, i as u64)).unwrap();
    }
    let mesh = extract_mesh(&g);
    assert!(mesh.vertices.len() > 1000);
    for v in &mesh.vertices {
        let r = Vector3::from(*v).norm();
        assert!((r - 1.0).abs() <= voxel, "radius {r}");
    }
    // outward normals
    for t in 0..mesh.triangles.len() {
        let n = Vector3::from(mesh.face_normal(t));
        let c = Vector3::from(mesh.vertices[mesh.triangles[t][0] as usize]);
        assert!(n.dot(&c) > 0.0);
    }
}
