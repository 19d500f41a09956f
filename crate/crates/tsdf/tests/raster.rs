use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfnode_core::{ray_for_pixel, Aabb, PinholeCamera, Pose, Vector3};
use rfnode_tsdf::{export_ply, import_ply, rasterize_mesh, MeshRenderConfig, TriangleMesh};

fn cam() -> PinholeCamera {
    PinholeCamera::new(40.0, 40.0, 32.0, 24.0, 64, 48).unwrap()
}

fn cfg() -> MeshRenderConfig {
    MeshRenderConfig { near: 0.1, far: 20.0, background: [0.1, 0.2, 0.3] }
}

#[test]
fn empty_mesh_is_background() {
    let r = rasterize_mesh(&TriangleMesh::default(), &cam(), &Pose::identity(), None, &cfg()).unwrap();
    assert!(r.rgb.pixels().iter().all(|p| *p == [0.1, 0.2, 0.3]));
    assert!(r.depth.pixels().iter().all(|&d| d == 20.0));
    assert!(r.opacity.pixels().iter().all(|&o| o == 0.0));
}

#[test]
fn full_screen_triangle_at_depth_two() {
    let mesh = TriangleMesh {
        vertices: vec![[-10.0, -10.0, 2.0], [30.0, -10.0, 2.0], [-10.0, 30.0, 2.0]],
        colors: vec![[1.0, 0.0, 0.0]; 3],
        triangles: vec![[0, 1, 2]],
    };
    let r = rasterize_mesh(&mesh, &cam(), &Pose::identity(), None, &cfg()).unwrap();
    assert!(r.opacity.pixels().iter().all(|&o| o == 1.0));
    assert!(r.depth.pixels().iter().all(|&d| (d - 2.0).abs() < 1e-6));
    assert!(r.rgb.pixels().iter().all(|p| (p[0] - 1.0).abs() < 1e-6 && p[1].abs() < 1e-6));

    let crop = Aabb::new([5.0; 3], [6.0; 3]).unwrap();
    let cropped = rasterize_mesh(&mesh, &cam(), &Pose::identity(), Some(&crop), &cfg()).unwrap();
    assert!(cropped.opacity.pixels().iter().all(|&o| o == 0.0));
}

fn moller_trumbore(o: &Vector3<f64>, d: &Vector3<f64>, tri: [Vector3<f64>; 3]) -> Option<f64> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let s = o - tri[0];
    let u = s.dot(&p) / det;
    let q = s.cross(&e1);
    let v = d.dot(&q) / det;
    if u < -1e-9 || v < -1e-9 || u + v > 1.0 + 1e-9 {
        return None;
    }
    let t = e2.dot(&q) / det;
    (t > 0.0).then_some(t)
}

#[test]
fn depth_matches_ray_triangle_intersection() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let camera = cam();
    let pose = Pose::look_at(Vector3::new(0.3, -0.2, -0.5), Vector3::new(0.0, 0.0, 3.0), Vector3::new(0.0, -1.0, 0.0)).unwrap();
    let mut mesh = TriangleMesh::default();
    for t in 0..100u32 {
        let c = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5), rng.gen_range(1.5..6.0));
        for _ in 0..3 {
            let v = c + Vector3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
            mesh.vertices.push([v.x, v.y, v.z]);
            mesh.colors.push([rng.gen(), rng.gen(), rng.gen()]);
        }
        mesh.triangles.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    let r = rasterize_mesh(&mesh, &camera, &pose, None, &cfg()).unwrap();
    let forward = pose.rotate(&Vector3::z());
    let mut covered = 0;
    for y in 0..48 {
        for x in 0..64 {
            let ray = ray_for_pixel(&camera, &pose, x as f64, y as f64).unwrap();
            let nearest = (0..100)
                .filter_map(|t| {
                    let tri = [0, 1, 2].map(|k| Vector3::from(mesh.vertices[3 * t + k]));
                    moller_trumbore(&ray.origin, &ray.direction, tri)
                })
                .fold(f64::INFINITY, f64::min);
            if r.opacity.get(x, y) == 1.0 {
                covered += 1;
                let z = nearest * ray.direction.dot(&forward);
                assert!((r.depth.get(x, y) as f64 - z).abs() < 1e-4, "pixel ({x}, {y}): {} vs {z}", r.depth.get(x, y));
            } else {
                assert_eq!(r.opacity.get(x, y), 0.0);
                assert_eq!(r.depth.get(x, y), 20.0);
            }
        }
    }
    assert!(covered > 500, "{covered}");
}

#[test]
fn near_plane_clipping_keeps_visible_part() {
    // triangle crossing the camera plane: only the part beyond near is drawn
    let mesh = TriangleMesh {
        vertices: vec![[-5.0, -5.0, -1.0], [5.0, -5.0, 3.0], [0.0, 5.0, 3.0]],
        colors: vec![[0.5; 3]; 3],
        triangles: vec![[0, 1, 2]],
    };
    let r = rasterize_mesh(&mesh, &cam(), &Pose::identity(), None, &cfg()).unwrap();
    let c = cfg();
    for (&o, &d) in r.opacity.pixels().iter().zip(r.depth.pixels()) {
        if o == 1.0 {
            assert!(d as f64 >= c.near);
        }
    }
    assert!(r.opacity.pixels().iter().any(|&o| o == 1.0));
}

#[test]
fn invalid_mesh_rejected() {
    let bad = TriangleMesh { vertices: vec![[0.0; 3]], colors: vec![[0.0; 3]], triangles: vec![[0, 1, 2]] };
    assert!(rasterize_mesh(&bad, &cam(), &Pose::identity(), None, &cfg()).is_err());
    let nan = TriangleMesh { vertices: vec![[f64::NAN; 3]], colors: vec![[0.0; 3]], triangles: vec![] };
    assert!(nan.validate().is_err());
}

#[test]
fn ply_layout() {
    let mesh = TriangleMesh {
        vertices: vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        colors: vec![[1.0, 0.5, 0.0]; 3],
        triangles: vec![[0, 1, 2]],
    };
    let mut buf = Vec::new();
    export_ply(&mesh, &mut buf).unwrap();
    let text = String::from_utf8_lossy(&buf);
    let end = text.find("end_header\n").unwrap() + "end_header\n".len();
    assert!(text.contains("element vertex 3\n") && text.contains("element face 1\n"));
    assert_eq!(buf.len() - end, 3 * 15 + 13);
    assert_eq!(&buf[end + 12..end + 15], &[255, 128, 0]);
}

#[test]
fn ply_round_trip() {
    let mesh = TriangleMesh {
        vertices: vec![[0.25, -1.5, 2.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [3.0, 3.0, 3.0]],
        colors: vec![[1.0, 0.0, 0.2], [0.0, 1.0, 1.0], [0.4, 0.4, 0.4], [0.0; 3]],
        triangles: vec![[0, 1, 2], [1, 3, 2]],
    };
    let mut buf = Vec::new();
    export_ply(&mesh, &mut buf).unwrap();
    let back = import_ply(&buf).unwrap();
    assert_eq!(back.vertices, mesh.vertices);
    assert_eq!(back.triangles, mesh.triangles);
    for (a, b) in back.colors.iter().zip(&mesh.colors) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() <= 0.5 / 255.0 + 1e-6);
        }
    }
    let mut again = Vec::new();
    export_ply(&back, &mut again).unwrap();
    assert_eq!(again, buf);

    assert!(import_ply(&buf[..buf.len() - 1]).is_err());
    let mut out_of_range = buf.clone();
    let n = out_of_range.len();
    out_of_range[n - 4..].copy_from_slice(&9i32.to_le_bytes());
    assert!(import_ply(&out_of_range).is_err());
    assert!(import_ply(b"ply\nformat ascii 1.0\nend_header\n").is_err());
}
