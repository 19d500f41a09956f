use proptest::prelude::*;
use rfnode_core::{ray_for_pixel, PinholeCamera, Pose, Ray, Vector3};
use rfnode_ingest::session::Session;
use rfnode_ingest::{admit_frame, FilterPolicy, KeyframeBuffer};
use rfnode_synth::{
    benchmark_script, benchmark_spec, generate_session, session_checksum, trace_frame, trace_ray, GenerateSpec, Material,
    Primitive, SceneSpec, Shape, TrajectorySpec, BENCHMARK_CHECKSUM,
};

fn matte(diffuse: [f64; 3]) -> Material {
    Material { diffuse, emissive: [0.0; 3], specular: None }
}

fn camera() -> PinholeCamera {
    PinholeCamera::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
}

#[test]
fn empty_scene_is_background_and_invalid_depth() {
    let scene = SceneSpec { primitives: vec![], background: [0.1, 0.2, 0.3], light: [0.0, 0.0, -1.0] };
    let (rgb, depth) = trace_frame(&scene, &PinholeCamera::new(4.0, 4.0, 2.0, 2.0, 4, 4).unwrap(), &Pose::identity());
    assert!(rgb.pixels().iter().all(|p| *p == [0.1, 0.2, 0.3]));
    assert!(depth.pixels().iter().all(|&d| d == 0.0));
}

#[test]
fn unit_sphere_center_depth() {
    let scene = SceneSpec {
        primitives: vec![Primitive { shape: Shape::Sphere { center: [0.0, 0.0, 3.0], radius: 1.0 }, material: matte([1.0; 3]) }],
        background: [0.0; 3],
        light: [0.0, 0.0, -1.0],
    };
    let hit = trace_ray(&scene, &Ray::new(Vector3::zeros(), Vector3::z())).unwrap();
    assert_eq!(hit.t, 2.0);
    let (rgb, depth) = trace_frame(&scene, &camera(), &Pose::identity());
    // pixel (49.5, 49.5) is the optical axis; (49, 49) and (50, 50) straddle it
    assert!((depth.get(50, 50) - 2.0).abs() < 1e-3);
    assert!(rgb.get(50, 50)[0] > 0.99);
}

fn range_of(camera: &PinholeCamera, x: usize, y: usize, z: f64) -> f64 {
    let d = camera.pixel_direction(x as f64, y as f64);
    z * d.norm()
}

#[test]
fn frontal_plane_depth_is_constant_z() {
    let scene = SceneSpec {
        primitives: vec![Primitive { shape: Shape::Plane { point: [0.0, 0.0, 2.0], normal: [0.0, 0.0, -1.0] }, material: matte([0.5; 3]) }],
        background: [0.0; 3],
        light: [0.0, 0.0, -1.0],
    };
    let cam = camera();
    let (_, depth) = trace_frame(&scene, &cam, &Pose::identity());
    for x in 0..100 {
        assert!((depth.get(x, 50) as f64 - 2.0).abs() < 1e-6);
    }
    // the principal ray hits at range 2; off-axis ranges grow as 2 / cos θ
    let axis = trace_ray(&scene, &Ray::new(Vector3::zeros(), Vector3::z())).unwrap();
    assert!((axis.t - 2.0).abs() < 1e-9);
    let mut prev = 0.0;
    for x in 50..100 {
        let ray = ray_for_pixel(&cam, &Pose::identity(), x as f64, 50.0).unwrap();
        let t = trace_ray(&scene, &ray).unwrap().t;
        let cos = ray.direction.z;
        assert!((t - 2.0 / cos).abs() < 1e-9);
        assert!((t - range_of(&cam, x, 50, 2.0)).abs() < 1e-9);
        assert!(t > prev);
        prev = t;
    }
}

fn one_frame_spec() -> GenerateSpec {
    let mut spec = benchmark_spec();
    spec.trajectory = TrajectorySpec::Orbit {
        center: [0.0; 3],
        radius: 3.0,
        height: 1.0,
        n_frames: 1,
        look_at: [0.0; 3],
        start_angle: 0.0,
        sweep: std::f64::consts::TAU,
    };
    spec
}

#[test]
fn single_frame_session_and_regeneration_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let m = generate_session(&one_frame_spec(), a.path()).unwrap();
    assert_eq!(m.frames.len(), 1);
    assert_eq!(m.frames[0].seq, 0);
    generate_session(&one_frame_spec(), b.path()).unwrap();
    assert_eq!(session_checksum(a.path()).unwrap(), session_checksum(b.path()).unwrap());
    assert_eq!(
        std::fs::read(a.path().join("manifest.json")).unwrap(),
        std::fs::read(b.path().join("manifest.json")).unwrap()
    );
}

#[test]
fn benchmark_session_checksum_and_admission() {
    let dir = tempfile::tempdir().unwrap();
    let spec = benchmark_spec();
    let json = serde_json::to_string(&spec).unwrap();
    assert_eq!(GenerateSpec::parse(&json).unwrap(), spec);
    let m = generate_session(&spec, dir.path()).unwrap();
    assert_eq!(m.frames.len(), 40);
    assert_eq!(benchmark_script().len(), 35);
    let sum = session_checksum(dir.path()).unwrap();
    assert_eq!(sum, BENCHMARK_CHECKSUM, "benchmark dataset changed");

    let session = Session::open(dir.path()).unwrap();
    let mut reg = session.manifest().registry().unwrap();
    let mut buf = KeyframeBuffer::new(64, &reg).unwrap();
    for f in session.frames() {
        admit_frame(&mut buf, &mut reg, &f.unwrap(), &FilterPolicy::permissive()).unwrap();
    }
    assert_eq!(buf.len(), 40);
}

#[test]
fn scene_spec_rejects_bad_primitives() {
    let mut spec = benchmark_spec();
    spec.scene.primitives[1].shape = Shape::Sphere { center: [0.0; 3], radius: -1.0 };
    assert!(spec.validate().is_err());
    let mut spec = benchmark_spec();
    spec.scene.light = [0.0; 3];
    assert!(spec.validate().is_err());
    assert!(GenerateSpec::parse("{}").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Back-projected points re-traced from another pose keep their color on
    /// matte surfaces.
    #[test]
    fn multiview_color_consistency(a in 0.0f64..6.28, b in 0.0f64..6.28) {
        let mut spec = benchmark_spec();
        spec.scene.primitives.truncate(3); // matte only
        let scene = spec.scene;
        let cam = PinholeCamera::new(30.0, 30.0, 16.0, 16.0, 32, 32).unwrap();
        let eye = |phi: f64| Vector3::new(3.0 * phi.cos(), 3.0 * phi.sin(), 1.5);
        let pa = Pose::look_at(eye(a), Vector3::new(0.0, 0.0, 0.3), Vector3::z()).unwrap();
        let pb = Pose::look_at(eye(b), Vector3::new(0.0, 0.0, 0.3), Vector3::z()).unwrap();
        let mut checked = 0;
        for y in (0..32).step_by(3) {
            for x in (0..32).step_by(3) {
                let ray = ray_for_pixel(&cam, &pa, x as f64, y as f64).unwrap();
                let Some(hit) = trace_ray(&scene, &ray) else { continue };
                let to = hit.point - pb.translation();
                let rb = Ray::new(*pb.translation(), to);
                let Some(hb) = trace_ray(&scene, &rb) else { continue };
                if (hb.t - to.norm()).abs() > 1e-7 {
                    continue; // occluded from b
                }
                for c in 0..3 {
                    prop_assert!((hb.rgb[c] - hit.rgb[c]).abs() < 1e-6);
                }
                checked += 1;
            }
        }
        prop_assert!(checked > 0);
    }
}
